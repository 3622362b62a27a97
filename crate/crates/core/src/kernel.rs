//! L2-norm tests built on kernel estimators, evaluated in the Fourier domain
//! where the periodic convolution is diagonal.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SequenceObservation, Spectrum};
use crate::numeric::{bisect, critical_value, normal_cdf, simpson, simpson_piecewise};
use crate::report::TestReport;

/// Kernel profile on [−1, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "shape")]
pub enum KernelShape {
    /// ½ on [−1, 1].
    Box,
    /// 1 − |t|.
    Triangle,
    /// ¾(1 − t²).
    Epanechnikov,
    /// Piecewise-linear interpolation of tabulated values at sorted nodes
    /// t covering [−1, 1]; zero outside.
    Table { t: Vec<f64>, k: Vec<f64> },
}

/// A symmetric kernel with its L2 constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub shape: KernelShape,
    /// ‖K‖² = ∫K².
    pub norm_sq: f64,
    /// κ² = 2∫(K∗K)².
    pub kappa2: f64,
}

/// Points per axis of the nested quadrature.
pub const QUADRATURE_POINTS: usize = 2048;

impl Kernel {
    pub fn new(shape: KernelShape) -> Result<Self> {
        if let KernelShape::Table { t, k } = &shape {
            validate_table(t, k)?;
        }
        let mut kernel = Kernel {
            shape,
            norm_sq: 0.0,
            kappa2: 0.0,
        };
        let mass = simpson_piecewise(|u| kernel.eval(u), &kernel.breaks(), QUADRATURE_POINTS);
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::invalid(format!("kernel integrates to {mass}, not 1")));
        }
        let (norm_sq, kappa2) = kernel_constants(&kernel);
        if !(norm_sq > 0.0 && kappa2 > 0.0) {
            return Err(Error::NumericFailure("kernel constants are not positive".into()));
        }
        kernel.norm_sq = norm_sq;
        kernel.kappa2 = kappa2;
        Ok(kernel)
    }

    pub fn by_name(name: &str) -> Result<Self> {
        Kernel::new(match name {
            "box" => KernelShape::Box,
            "triangle" => KernelShape::Triangle,
            "epanechnikov" => KernelShape::Epanechnikov,
            other => return Err(Error::invalid(format!("unknown kernel {other:?}"))),
        })
    }

    /// Reads `t,value` lines (an optional header and `#` comments are skipped).
    pub fn from_csv(reader: impl BufRead) -> Result<Self> {
        let (mut t, mut k) = (Vec::new(), Vec::new());
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<kernel table>", e))?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('t') {
                continue;
            }
            let mut parts = line.split(',').map(str::trim);
            let parse = |v: Option<&str>| -> Result<f64> {
                v.and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("kernel table line {}: expected `t,value`", i + 1)))
            };
            t.push(parse(parts.next())?);
            k.push(parse(parts.next())?);
        }
        Kernel::new(KernelShape::Table { t, k })
    }

    pub fn eval(&self, u: f64) -> f64 {
        let a = u.abs();
        if a > 1.0 {
            return 0.0;
        }
        match &self.shape {
            KernelShape::Box => 0.5,
            KernelShape::Triangle => 1.0 - a,
            KernelShape::Epanechnikov => 0.75 * (1.0 - a * a),
            KernelShape::Table { t, k } => {
                let i = t.partition_point(|&x| x <= u).clamp(1, t.len() - 1);
                let w = (u - t[i - 1]) / (t[i] - t[i - 1]);
                k[i - 1] + w * (k[i] - k[i - 1])
            }
        }
    }

    /// Points where K or its derivative may jump.
    fn breaks(&self) -> Vec<f64> {
        match &self.shape {
            KernelShape::Table { t, .. } => t.clone(),
            _ => vec![-1.0, 0.0, 1.0],
        }
    }

    /// K̂(ω) = ∫K(u)cos(ωu)du; real and even because K is symmetric.
    pub fn transform(&self, omega: f64) -> f64 {
        let w = omega.abs();
        let w2 = w * w;
        // Below this frequency the closed forms cancel badly; the Taylor
        // series through ω⁶ is accurate to far below double precision.
        const SMALL: f64 = 0.05;
        match &self.shape {
            KernelShape::Box if w < SMALL => 1.0 - w2 / 6.0 + w2 * w2 / 120.0 - w2 * w2 * w2 / 5040.0,
            KernelShape::Box => w.sin() / w,
            KernelShape::Triangle if w < SMALL => 1.0 - w2 / 12.0 + w2 * w2 / 360.0 - w2 * w2 * w2 / 20160.0,
            KernelShape::Triangle => 2.0 * (1.0 - w.cos()) / w2,
            KernelShape::Epanechnikov if w < SMALL => 1.0 - w2 / 10.0 + w2 * w2 / 280.0 - w2 * w2 * w2 / 15120.0,
            KernelShape::Epanechnikov => 3.0 * (w.sin() - w * w.cos()) / (w2 * w),
            KernelShape::Table { t, k } => table_transform(t, k, w),
        }
    }

    /// |K̂(2πjh)|² for j = 0..=len.
    pub fn weights(&self, h: f64, len: usize) -> Vec<f64> {
        (0..=len)
            .map(|j| self.transform(2.0 * std::f64::consts::PI * j as f64 * h).powi(2))
            .collect()
    }

    /// First positive zero of K̂, i.e. the b with K̂ ≠ 0 on (−b, b);
    /// `None` when K̂ has no zero below `limit`.
    ///
    /// Sign changes are refined by bisection; touching zeros (as for the
    /// triangle kernel, where K̂ ≥ 0) by ternary search on |K̂|.
    pub fn transform_nonzero_radius(&self, limit: f64) -> Option<f64> {
        let step = 0.01;
        let f = |w: f64| self.transform(w);
        let mut prev_abs = f64::INFINITY;
        let mut lo = 0.0;
        let mut f_lo = f(lo);
        while lo < limit {
            let hi = lo + step;
            let f_hi = f(hi);
            if f_hi == 0.0 {
                return Some(hi);
            }
            if f_hi.signum() != f_lo.signum() {
                return bisect(f, lo, hi, 1e-14).ok();
            }
            if f_lo.abs() < 1e-5 && f_lo.abs() <= prev_abs && f_lo.abs() <= f_hi.abs() {
                let (mut a, mut b) = (lo - step, hi);
                for _ in 0..200 {
                    let m1 = a + (b - a) / 3.0;
                    let m2 = b - (b - a) / 3.0;
                    if f(m1).abs() < f(m2).abs() {
                        b = m2;
                    } else {
                        a = m1;
                    }
                }
                return Some(0.5 * (a + b));
            }
            prev_abs = f_lo.abs();
            lo = hi;
            f_lo = f_hi;
        }
        None
    }
}

fn validate_table(t: &[f64], k: &[f64]) -> Result<()> {
    if t.len() < 2 || t.len() != k.len() {
        return Err(Error::invalid("kernel table needs at least two (t, value) pairs"));
    }
    if t.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("kernel table nodes must be strictly increasing"));
    }
    if t[0] < -1.0 || *t.last().unwrap() > 1.0 {
        return Err(Error::invalid("kernel support must lie within [−1, 1]"));
    }
    if t.iter().chain(k).any(|v| !v.is_finite()) {
        return Err(Error::invalid("kernel table values must be finite"));
    }
    // Symmetry: mirrored nodes with mirrored values.
    let n = t.len();
    for i in 0..n {
        if (t[i] + t[n - 1 - i]).abs() > 1e-12 || (k[i] - k[n - 1 - i]).abs() > 1e-12 {
            return Err(Error::invalid("kernel table must be symmetric about 0"));
        }
    }
    Ok(())
}

/// Exact ∫K(u)cos(ωu)du for piecewise-linear K, segment by segment.
fn table_transform(t: &[f64], k: &[f64], w: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..t.len() {
        let (a, b) = (t[i - 1], t[i]);
        let (ka, kb) = (k[i - 1], k[i]);
        let slope = (kb - ka) / (b - a);
        if w < 0.1 {
            acc += simpson(|u| (ka + slope * (u - a)) * (w * u).cos(), a, b, 16);
        } else {
            // ∫(ka + slope(u − a))cos(wu) = [K(u)sin(wu)/w + slope·cos(wu)/w²]_a^b
            let prim = |u: f64, ku: f64| ku * (w * u).sin() / w + slope * (w * u).cos() / (w * w);
            acc += prim(b, kb) - prim(a, ka);
        }
    }
    acc
}

/// (‖K‖², κ²) by nested composite Simpson quadrature.
///
/// The inner convolution integral is split at the kinks of K(s) and
/// K(t − s), and the outer integral at the kinks of K∗K, so both are
/// integrated piecewise-smoothly.
pub fn kernel_constants(kernel: &Kernel) -> (f64, f64) {
    let breaks = kernel.breaks();
    let norm_sq = simpson_piecewise(|u| kernel.eval(u).powi(2), &breaks, QUADRATURE_POINTS);

    let conv = |t: f64| -> f64 {
        let lo = (t - 1.0).max(-1.0);
        let hi = (t + 1.0).min(1.0);
        if hi <= lo {
            return 0.0;
        }
        let mut pts: Vec<f64> = breaks
            .iter()
            .flat_map(|&b| [b, t - b])
            .filter(|&p| p > lo && p < hi)
            .chain([lo, hi])
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
        let per = (QUADRATURE_POINTS / pts.len().max(1)).max(2);
        simpson_piecewise(|s| kernel.eval(t - s) * kernel.eval(s), &pts, per)
    };
    let mut outer: Vec<f64> = breaks
        .iter()
        .flat_map(|&a| breaks.iter().map(move |&b| a + b))
        .collect();
    outer.sort_by(f64::total_cmp);
    outer.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let per = (QUADRATURE_POINTS / outer.len().max(1)).max(2);
    let kappa2 = 2.0 * simpson_piecewise(|t| conv(t).powi(2), &outer, per);
    (norm_sq, kappa2)
}

/// Default bandwidth c₀·n^{−2/(1+4s)}.
pub fn default_bandwidth(n: usize, s: f64, c0: f64) -> f64 {
    c0 * (n as f64).powf(-2.0 / (1.0 + 4.0 * s))
}

/// Kernel test at fixed (K, h, J, n, σ) with the transform weights cached.
#[derive(Debug, Clone)]
pub struct KernelTest {
    pub kernel: Kernel,
    pub h: f64,
    pub n: usize,
    pub sigma: f64,
    weights: Vec<f64>,
}

impl KernelTest {
    pub fn new(kernel: Kernel, h: f64, len: usize, n: usize, sigma: f64) -> Result<Self> {
        if !(h > 0.0 && h < 1.0) {
            return Err(Error::invalid(format!("bandwidth must lie in (0, 1), got {h}")));
        }
        if n == 0 || !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("need n ≥ 1 and σ > 0"));
        }
        let weights = kernel.weights(h, len);
        Ok(KernelTest {
            kernel,
            h,
            n,
            sigma,
            weights,
        })
    }

    /// Truncation J of the frequencies the statistic reads.
    pub fn len(&self) -> usize {
        self.weights.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// n h^{1/2} σ^{-2} κ^{-1}, the factor that standardizes ‖f̂‖².
    pub fn scale(&self) -> f64 {
        self.n as f64 * self.h.sqrt() / (self.sigma * self.sigma * self.kernel.kappa2.sqrt())
    }

    /// Σ_{|j|≤J} |K̂(2πjh)|²|v_j|² over a conjugate-symmetric sequence.
    fn smoothed_norm_sq(&self, spectrum: &Spectrum) -> Result<f64> {
        let c = spectrum.complex_coeffs()?;
        if c.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                expected: self.weights.len() - 1,
                found: c.len() - 1,
            });
        }
        let tail: f64 = self.weights[1..]
            .iter()
            .zip(&c[1..])
            .map(|(w, v)| w * v.norm_sqr())
            .sum();
        Ok(self.weights[0] * c[0].norm_sqr() + 2.0 * tail)
    }

    pub fn statistic(&self, obs: &SequenceObservation) -> Result<f64> {
        let norm = self.smoothed_norm_sq(&obs.y)?;
        let centering = obs.sigma * obs.sigma * self.kernel.norm_sq / (obs.n as f64 * self.h);
        Ok(self.scale() * (norm - centering))
    }

    pub fn test(&self, obs: &SequenceObservation, alpha: f64) -> Result<TestReport> {
        let t = self.statistic(obs)?;
        TestReport::normal(t, 0.0, 1.0, alpha)
    }

    /// T₁ₙ(θ) = Σ_j |K̂(2πjh)θ_j|².
    pub fn bias_functional(&self, theta: &Spectrum) -> Result<f64> {
        self.smoothed_norm_sq(theta)
    }

    /// Noncentrality κ^{-1}σ^{-2}nh^{1/2}T₁ₙ(θ).
    pub fn drift(&self, theta: &Spectrum) -> Result<f64> {
        Ok(self.scale() * self.bias_functional(theta)?)
    }

    pub fn predicted_type2(&self, theta: &Spectrum, alpha: f64) -> Result<f64> {
        Ok(normal_cdf(critical_value(alpha)? - self.drift(theta)?))
    }
}

pub fn kernel_statistic(obs: &SequenceObservation, kernel: &Kernel, h: f64) -> Result<f64> {
    obs.y.require_basis(crate::model::Basis::ComplexExponential)?;
    KernelTest::new(kernel.clone(), h, obs.y.len(), obs.n, obs.sigma)?.statistic(obs)
}

pub fn bias_functional_t1n(theta: &Spectrum, kernel: &Kernel, h: f64) -> Result<f64> {
    theta.require_basis(crate::model::Basis::ComplexExponential)?;
    KernelTest::new(kernel.clone(), h, theta.len(), 1, 1.0)?.bias_functional(theta)
}

pub fn kernel_test(obs: &SequenceObservation, kernel: &Kernel, h: f64, alpha: f64) -> Result<TestReport> {
    obs.y.require_basis(crate::model::Basis::ComplexExponential)?;
    KernelTest::new(kernel.clone(), h, obs.y.len(), obs.n, obs.sigma)?.test(obs, alpha)
}

pub fn predicted_type2_kernel(
    theta: &Spectrum,
    kernel: &Kernel,
    h: f64,
    n: usize,
    sigma: f64,
    alpha: f64,
) -> Result<f64> {
    theta.require_basis(crate::model::Basis::ComplexExponential)?;
    KernelTest::new(kernel.clone(), h, theta.len(), n, sigma)?.predicted_type2(theta, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_sequence_model, Basis};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn box_constants_match_closed_form() {
        let k = Kernel::by_name("box").unwrap();
        assert_abs_diff_eq!(k.norm_sq, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(k.kappa2, 2.0 / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn epanechnikov_constants() {
        let k = Kernel::by_name("epanechnikov").unwrap();
        assert_abs_diff_eq!(k.norm_sq, 0.6, epsilon = 1e-12);
        // 2∫(K∗K)² with K∗K a piecewise quintic; Plancherel gives the
        // same value as (1/π)∫K̂⁴.
        let plancherel = simpson(|w| k.transform(w).powi(4), 0.0, 400.0, 400_000) * 2.0 / std::f64::consts::PI;
        assert_abs_diff_eq!(k.kappa2, plancherel, epsilon = 1e-6);
        assert_abs_diff_eq!(k.kappa2, 334.0 / 385.0, epsilon = 1e-9);
    }

    #[test]
    fn unnormalized_kernel_is_rejected() {
        let t = vec![-1.0, 0.0, 1.0];
        assert!(Kernel::new(KernelShape::Table {
            t: t.clone(),
            k: vec![0.0, 2.0, 0.0]
        })
        .is_err());
        assert!(Kernel::new(KernelShape::Table {
            t,
            k: vec![0.0, 1.0, 0.0]
        })
        .is_ok());
        assert!(Kernel::new(KernelShape::Table {
            t: vec![-1.0, 0.5, 1.0],
            k: vec![0.0, 1.0, 0.0]
        })
        .is_err());
    }

    #[test]
    fn table_transform_matches_triangle() {
        let tri = Kernel::by_name("triangle").unwrap();
        let table = Kernel::from_csv("t,value\n-1,0\n0,1\n1,0\n".as_bytes()).unwrap();
        for w in [0.0, 0.01, 0.3, 1.0, 7.5, 40.0] {
            assert_abs_diff_eq!(tri.transform(w), table.transform(w), epsilon = 1e-13);
        }
        assert_abs_diff_eq!(table.kappa2, tri.kappa2, epsilon = 1e-10);
    }

    #[test]
    fn closed_forms_match_quadrature() {
        for name in ["box", "triangle", "epanechnikov"] {
            let k = Kernel::by_name(name).unwrap();
            for w in [0.0, 0.02, 0.049, 0.051, 1.0, 3.3, 25.0, 180.0] {
                let q = simpson_piecewise(|u| k.eval(u) * (w * u).cos(), &[-1.0, 0.0, 1.0], 20_000);
                assert_abs_diff_eq!(k.transform(w), q, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn nonzero_radius() {
        let b = Kernel::by_name("box").unwrap().transform_nonzero_radius(50.0).unwrap();
        assert_abs_diff_eq!(b, std::f64::consts::PI, epsilon = 1e-12);
        let t = Kernel::by_name("triangle")
            .unwrap()
            .transform_nonzero_radius(50.0)
            .unwrap();
        assert_abs_diff_eq!(t, 2.0 * std::f64::consts::PI, epsilon = 1e-6);
        let e = Kernel::by_name("epanechnikov")
            .unwrap()
            .transform_nonzero_radius(50.0)
            .unwrap();
        assert_abs_diff_eq!(e.tan(), e, epsilon = 1e-9);
    }

    #[test]
    fn zero_observation_statistic() {
        let k = Kernel::by_name("box").unwrap();
        let h = 0.05;
        let obs = SequenceObservation {
            y: Spectrum::zeros(Basis::ComplexExponential, 64).unwrap(),
            n: 500,
            sigma: 1.3,
        };
        let t = kernel_statistic(&obs, &k, h).unwrap();
        assert_abs_diff_eq!(t, -k.norm_sq / (h.sqrt() * k.kappa2.sqrt()), epsilon = 1e-12);
    }

    #[test]
    fn noiseless_bias_of_first_frequency() {
        let k = Kernel::by_name("epanechnikov").unwrap();
        let h = 0.07;
        let theta = Spectrum::from_real(Basis::ComplexExponential, vec![1.0, 0.0, 0.0]).unwrap();
        let test = KernelTest::new(k.clone(), h, 3, 100, 1e-9).unwrap();
        let obs = sample_sequence_model(&theta, 100, 1e-9, 4).unwrap();
        let t = test.statistic(&obs).unwrap();
        // Both ±1 carry |K̂(2πh)|².
        let expected = 2.0 * k.transform(2.0 * std::f64::consts::PI * h).powi(2);
        assert_abs_diff_eq!(t / test.scale(), expected, epsilon = 1e-9);
    }

    #[test]
    fn bias_functional_limits() {
        let k = Kernel::by_name("box").unwrap();
        let zero = Spectrum::zeros(Basis::ComplexExponential, 8).unwrap();
        assert_eq!(bias_functional_t1n(&zero, &k, 0.1).unwrap(), 0.0);
        let e1 = Spectrum::from_real(Basis::ComplexExponential, vec![0.3]).unwrap();
        let v = bias_functional_t1n(&e1, &k, 1e-6).unwrap();
        assert_abs_diff_eq!(v, e1.norm_sq(), epsilon = 1e-10);
    }

    #[test]
    fn predictor_edges() {
        let k = Kernel::by_name("box").unwrap();
        let zero = Spectrum::zeros(Basis::ComplexExponential, 8).unwrap();
        let b = predicted_type2_kernel(&zero, &k, 0.1, 100, 1.0, 0.05).unwrap();
        assert_abs_diff_eq!(b, 0.95, epsilon = 1e-9);
        let test = KernelTest::new(k, 0.1, 8, 100, 1.0).unwrap();
        let e1 = Spectrum::from_real(Basis::ComplexExponential, vec![1.0])
            .unwrap()
            .resized(8);
        let theta = e1.scaled((2.0 / test.drift(&e1).unwrap()).sqrt());
        let x = critical_value(0.05).unwrap();
        assert_abs_diff_eq!(
            test.predicted_type2(&theta, 0.05).unwrap(),
            normal_cdf(x - 2.0),
            epsilon = 1e-12
        );
    }

    #[test]
    fn basis_mismatch_is_reported() {
        let k = Kernel::by_name("box").unwrap();
        let obs = SequenceObservation {
            y: Spectrum::cosine(vec![0.0; 4]).unwrap(),
            n: 10,
            sigma: 1.0,
        };
        assert!(matches!(
            kernel_statistic(&obs, &k, 0.1),
            Err(Error::BasisMismatch { .. })
        ));
    }

    fn named_kernels() -> &'static [Kernel] {
        static KERNELS: std::sync::OnceLock<Vec<Kernel>> = std::sync::OnceLock::new();
        KERNELS.get_or_init(|| {
            ["box", "triangle", "epanechnikov"]
                .iter()
                .map(|n| Kernel::by_name(n).unwrap())
                .collect()
        })
    }

    proptest! {
        #[test]
        fn transform_is_bounded_and_even(w in -200.0f64..200.0) {
            for k in named_kernels() {
                prop_assert!(k.transform(w).abs() <= 1.0 + 1e-15);
                prop_assert_eq!(k.transform(w), k.transform(-w));
            }
        }

        #[test]
        fn predictor_monotone_in_scale(a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let test = KernelTest::new(named_kernels()[1].clone(), 0.05, 4, 1000, 1.0).unwrap();
            let base = Spectrum::complex(vec![Complex64::new(0.0, 0.0), Complex64::new(0.02, 0.01),
                Complex64::new(0.0, -0.01), Complex64::new(0.005, 0.0), Complex64::new(0.0, 0.0)]).unwrap();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let p_lo = 1.0 - test.predicted_type2(&base.scaled(lo), 0.05).unwrap();
            let p_hi = 1.0 - test.predicted_type2(&base.scaled(hi), 0.05).unwrap();
            prop_assert!(p_hi >= p_lo);
        }
    }
}
