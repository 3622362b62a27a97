use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Basis, Spectrum};

/// Ball of the Besov body B^s_{2∞}: sequences with
/// sup_k k^{2s} Σ_{j≥k} θ_j² ≤ P0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BesovBall {
    pub s: f64,
    pub p0: f64,
    pub basis: Basis,
}

impl BesovBall {
    pub fn new(s: f64, p0: f64, basis: Basis) -> Result<Self> {
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("smoothness must be positive, got {s}")));
        }
        if !(p0.is_finite() && p0 > 0.0) {
            return Err(Error::invalid(format!("radius budget must be positive, got {p0}")));
        }
        Ok(BesovBall { s, p0, basis })
    }

    pub fn contains(&self, theta: &Spectrum) -> Result<bool> {
        theta.require_basis(self.basis)?;
        Ok(besov_seminorm(theta, self.s)?.value <= self.p0)
    }

    /// Tail budget P0·k^{-2s} of constraint k.
    pub fn bound(&self, k: usize) -> f64 {
        self.p0 * (k as f64).powf(-2.0 * self.s)
    }
}

/// Squared Besov seminorm and the index attaining it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seminorm {
    pub value: f64,
    pub k_star: usize,
}

/// Tail energies Σ_{j≥k} e_j for k = 1..=J, indexed from 0.
pub(crate) fn tails(energies: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; energies.len()];
    let mut acc = 0.0;
    for (i, e) in energies.iter().enumerate().rev() {
        acc += e;
        out[i] = acc;
    }
    out
}

/// max_{1≤k≤J} k^{2s} Σ_{j≥k} θ_j².
///
/// The supremum over real λ > 0 of λ^{2s} Σ_{j>λ} θ_j² is approached as λ ↑ k,
/// so the maximum over integers is exact.
pub fn besov_seminorm(theta: &Spectrum, s: f64) -> Result<Seminorm> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid(format!("smoothness must be positive, got {s}")));
    }
    if theta.is_empty() {
        return Err(Error::invalid("empty spectrum"));
    }
    let tails = tails(&theta.energies());
    let mut best = Seminorm { value: 0.0, k_star: 1 };
    for (i, t) in tails.iter().enumerate() {
        let v = ((i + 1) as f64).powf(2.0 * s) * t;
        if v > best.value {
            best = Seminorm {
                value: v,
                k_star: i + 1,
            };
        }
    }
    Ok(best)
}

/// Result of a Besov projection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub spectrum: Spectrum,
    /// Leading coefficients returned untouched.
    pub frozen_head: usize,
    pub sweeps: usize,
}

const MAX_SWEEPS: usize = 200_000;

/// Metric projection of θ onto `ball`.
///
/// Cyclic projection with Dykstra corrections onto the nested tail
/// constraints Σ_{j≥k} η_j² ≤ P0·k^{-2s}; each single projection rescales a
/// tail. Leading coefficients whose own constraints and all earlier ones
/// hold are provably unchanged, so they are frozen and only the remaining
/// constraints are iterated. Stops once a sweep moves the iterate by less
/// than `tol` and every constraint holds within `tol`.
pub fn project_besov(theta: &Spectrum, ball: &BesovBall, tol: f64) -> Result<Projection> {
    theta.require_basis(ball.basis)?;
    if !(tol.is_finite() && tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let len = theta.len();
    let energies = theta.energies();
    let tails = tails(&energies);
    let frozen_head = (1..=len).take_while(|&k| tails[k - 1] <= ball.bound(k)).count();
    if frozen_head == len {
        return Ok(Projection {
            spectrum: theta.clone(),
            frozen_head,
            sweeps: 0,
        });
    }

    // Flatten to real coordinates with constraint k covering x[start(k)..].
    // Exponential coefficients appear twice in the norm (±j), so they are
    // scaled by √2 to make the problem Euclidean.
    let (mut x, width) = match theta {
        Spectrum::Cosine { coeffs } | Spectrum::Haar { coeffs } => (coeffs.clone(), 1),
        Spectrum::ComplexExponential { coeffs } => (
            coeffs[1..]
                .iter()
                .flat_map(|c| [c.re * std::f64::consts::SQRT_2, c.im * std::f64::consts::SQRT_2])
                .collect(),
            2,
        ),
    };
    let first = frozen_head + 1;
    let constraints: Vec<(usize, f64)> = (first..=len).map(|k| ((k - 1) * width, ball.bound(k))).collect();
    let sweeps = dykstra(&mut x, &constraints, tol)?;

    let spectrum = match theta {
        Spectrum::Cosine { .. } => Spectrum::Cosine { coeffs: x },
        Spectrum::Haar { .. } => Spectrum::Haar { coeffs: x },
        Spectrum::ComplexExponential { coeffs } => {
            let mut out = coeffs.clone();
            for (j, pair) in x.chunks_exact(2).enumerate() {
                out[j + 1] =
                    num_complex::Complex64::new(pair[0] / std::f64::consts::SQRT_2, pair[1] / std::f64::consts::SQRT_2);
            }
            Spectrum::ComplexExponential { coeffs: out }
        }
    };
    Ok(Projection {
        spectrum,
        frozen_head,
        sweeps,
    })
}

/// Dykstra's algorithm for the intersection of the cylinders
/// {‖x[start..]‖² ≤ bound}. Returns the number of sweeps.
fn dykstra(x: &mut [f64], constraints: &[(usize, f64)], tol: f64) -> Result<usize> {
    let len = x.len();
    let mut corrections: Vec<Option<Vec<f64>>> = vec![None; constraints.len()];
    let mut suffix = vec![0.0; len + 1];
    let refresh = |x: &[f64], suffix: &mut [f64]| {
        for i in (0..len).rev() {
            suffix[i] = suffix[i + 1] + x[i] * x[i];
        }
    };
    refresh(x, &mut suffix);
    let mut previous = x.to_vec();
    for sweep in 1..=MAX_SWEEPS {
        for (c, &(start, bound)) in constraints.iter().enumerate() {
            match &mut corrections[c] {
                None => {
                    let norm_sq = suffix[start];
                    if norm_sq <= bound {
                        continue;
                    }
                    let scale = (bound / norm_sq).sqrt();
                    let mut p = Vec::with_capacity(len - start);
                    for v in &mut x[start..] {
                        p.push((1.0 - scale) * *v);
                        *v *= scale;
                    }
                    corrections[c] = Some(p);
                }
                Some(p) => {
                    let mut norm_sq = 0.0;
                    for (v, q) in x[start..].iter_mut().zip(p.iter()) {
                        *v += q;
                        norm_sq += *v * *v;
                    }
                    if norm_sq <= bound {
                        corrections[c] = None;
                    } else {
                        let scale = (bound / norm_sq).sqrt();
                        for (v, q) in x[start..].iter_mut().zip(p.iter_mut()) {
                            *q = (1.0 - scale) * *v;
                            *v *= scale;
                        }
                    }
                }
            }
            refresh(x, &mut suffix);
        }
        let moved: f64 = x
            .iter()
            .zip(&previous)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let violation = constraints
            .iter()
            .map(|&(start, bound)| suffix[start] - bound)
            .fold(0.0, f64::max);
        if moved < tol && violation <= tol {
            return Ok(sweep);
        }
        previous.copy_from_slice(x);
    }
    let violation = constraints
        .iter()
        .map(|&(start, bound)| suffix[start] - bound)
        .fold(0.0, f64::max);
    Err(Error::NumericFailure(format!(
        "besov projection did not converge in {MAX_SWEEPS} sweeps (max violation {violation:.3e})"
    )))
}

/// Alternative carrying all its energy on the block j = m..=2m with equal
/// magnitudes, scaled so that m^{2s} Σ θ_j² = C.
///
/// The seminorm is at least C (attained at k = m), while ‖θ‖² = C·m^{-2s}
/// can be made arbitrarily small by moving the block out. Signs follow the
/// Rudin–Shapiro sequence, which keeps the sup norm of the block within
/// (2 + √2)·√(m + 1) times one magnitude, so small blocks stay valid
/// density perturbations.
pub fn make_tail_alternative(m: usize, c: f64, s: f64, basis: Basis) -> Result<Spectrum> {
    if m == 0 {
        return Err(Error::invalid("block start m must be at least 1"));
    }
    if !(c.is_finite() && c > 0.0) || !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid("tail alternative needs C > 0 and s > 0"));
    }
    let count = (m + 1) as f64;
    // Each exponential coefficient is counted twice (±j).
    let copies = if basis == Basis::ComplexExponential { 2.0 } else { 1.0 };
    let amp = (c * (m as f64).powf(-2.0 * s) / (count * copies)).sqrt();
    let values = (1..=2 * m)
        .map(|j| if j >= m { rudin_shapiro(j - m) * amp } else { 0.0 })
        .collect();
    Spectrum::from_real(basis, values)
}

/// (−1) to the number of adjacent 11 pairs in the binary form of i.
fn rudin_shapiro(i: usize) -> f64 {
    if (i & (i >> 1)).count_ones().is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Test family tags shared by the rate table and the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestFamily {
    Quadratic,
    Kernel,
    ChiSquared,
    CramerVonMises,
    Minimax,
}

impl std::str::FromStr for TestFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "quadratic" => TestFamily::Quadratic,
            "kernel" => TestFamily::Kernel,
            "chi-squared" | "chisq" => TestFamily::ChiSquared,
            "cramer-von-mises" | "cvm" => TestFamily::CramerVonMises,
            "minimax" => TestFamily::Minimax,
            other => return Err(Error::invalid(format!("unknown test family {other:?}"))),
        })
    }
}

/// Separation rate exponent r and the growth exponent of the tuning scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rates {
    pub r: f64,
    /// Exponent e with k_n ∝ n^e (cells, effective bandwidth) or
    /// h_n ∝ n^{-e}; `None` for tests with no tuning parameter.
    pub tuning_exponent: Option<f64>,
}

impl Rates {
    /// `multiplier · n^e`, the cell count or inverse bandwidth.
    pub fn tuning_scale(&self, n: usize, multiplier: f64) -> Option<f64> {
        self.tuning_exponent.map(|e| multiplier * (n as f64).powf(e))
    }
}

pub fn calibration_rates(s: f64, family: TestFamily) -> Result<Rates> {
    if !(s.is_finite() && s > 0.0) {
        return Err(Error::invalid(format!("smoothness must be positive, got {s}")));
    }
    Ok(match family {
        TestFamily::CramerVonMises => Rates {
            r: s / (2.0 + 2.0 * s),
            tuning_exponent: None,
        },
        _ => {
            let r = 2.0 * s / (1.0 + 4.0 * s);
            Rates {
                r,
                tuning_exponent: Some(2.0 - 4.0 * r),
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn seminorm_of_unit_vector_and_zero() {
        let e1 = Spectrum::cosine(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(besov_seminorm(&e1, 1.0).unwrap(), Seminorm { value: 1.0, k_star: 1 });
        let z = Spectrum::cosine(vec![0.0; 3]).unwrap();
        assert_eq!(besov_seminorm(&z, 1.0).unwrap().value, 0.0);
    }

    #[test]
    fn seminorm_matches_double_loop() {
        let theta = crate::model::power_law(Basis::Cosine, 512, 1.0, 1.6).unwrap();
        let c = theta.real_coeffs().unwrap();
        let mut best: f64 = 0.0;
        for k in 1..=512usize {
            let mut t = 0.0;
            for j in k..=512 {
                t += c[j - 1] * c[j - 1];
            }
            best = best.max((k * k) as f64 * t);
        }
        let got = besov_seminorm(&theta, 1.0).unwrap().value;
        assert_abs_diff_eq!(got, best, epsilon = 1e-13);
        assert_abs_diff_eq!(got, 1.166_772_874_105_834_7, epsilon = 1e-9);
    }

    #[test]
    fn exponential_seminorm_uses_both_signs() {
        let t = Spectrum::from_real(Basis::ComplexExponential, vec![0.0, 0.5]).unwrap();
        // tail(2) = 2·0.25, times 2^2
        assert_abs_diff_eq!(besov_seminorm(&t, 1.0).unwrap().value, 2.0, epsilon = 1e-15);
    }

    #[test]
    fn projection_of_simple_violation() {
        let ball = BesovBall::new(1.0, 1.0, Basis::Cosine).unwrap();
        let theta = Spectrum::cosine(vec![2.0, 0.0, 0.0, 0.0]).unwrap();
        let p = project_besov(&theta, &ball, 1e-12).unwrap();
        let c = p.spectrum.real_coeffs().unwrap();
        assert_abs_diff_eq!(c[0], 1.0, epsilon = 1e-12);
        assert!(c[1..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn interior_point_is_unchanged() {
        let ball = BesovBall::new(1.0, 1.0, Basis::Cosine).unwrap();
        let theta = Spectrum::cosine(vec![0.5, 0.1, 0.05]).unwrap();
        let p = project_besov(&theta, &ball, 1e-12).unwrap();
        assert_eq!(p.spectrum, theta);
        assert_eq!(p.sweeps, 0);
    }

    #[test]
    fn exponential_projection_lands_in_ball() {
        let ball = BesovBall::new(1.0, 0.2, Basis::ComplexExponential).unwrap();
        let theta = crate::model::power_law(Basis::ComplexExponential, 16, 0.6, 0.5).unwrap();
        let p = project_besov(&theta, &ball, 1e-13).unwrap();
        assert!(besov_seminorm(&p.spectrum, 1.0).unwrap().value <= 0.2 * (1.0 + 1e-9));
        let c = p.spectrum.complex_coeffs().unwrap();
        assert!(c.iter().all(|v| v.im == 0.0));
    }

    #[test]
    fn tail_alternative_block() {
        let t = make_tail_alternative(4, 1.0, 1.0, Basis::Cosine).unwrap();
        let c = t.real_coeffs().unwrap();
        assert_eq!(c.len(), 8);
        assert!(c[..3].iter().all(|v| *v == 0.0));
        for v in &c[3..] {
            assert_abs_diff_eq!(v * v, 1.0 / (16.0 * 5.0), epsilon = 1e-15);
        }
        let t = make_tail_alternative(8, 4.0, 1.0, Basis::Cosine).unwrap();
        assert!(besov_seminorm(&t, 1.0).unwrap().value >= 4.0 * (1.0 - 1e-12));
        let t = make_tail_alternative(6, 3.0, 0.7, Basis::ComplexExponential).unwrap();
        assert_abs_diff_eq!(t.norm_sq() * 6f64.powf(1.4), 3.0, epsilon = 1e-13);
    }

    #[test]
    fn tail_alternative_sup_norm_grows_like_root_count() {
        for m in [8, 40, 200] {
            let t = make_tail_alternative(m, 1.0, 1.0, Basis::Cosine).unwrap();
            let amp = t.real_coeffs().unwrap()[m - 1].abs();
            let sup = (0..=4000).map(|i| t.eval(i as f64 / 4000.0).abs()).fold(0.0, f64::max);
            let bound = std::f64::consts::SQRT_2 * (2.0 + std::f64::consts::SQRT_2) * ((m + 1) as f64).sqrt() * amp;
            assert!(sup <= bound, "m={m}: {sup} > {bound}");
        }
    }

    #[test]
    fn rate_table() {
        let chi = calibration_rates(1.0, TestFamily::ChiSquared).unwrap();
        assert_abs_diff_eq!(chi.r, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(chi.tuning_exponent.unwrap(), 0.4, epsilon = 1e-15);
        let ker = calibration_rates(1.0, TestFamily::Kernel).unwrap();
        assert_abs_diff_eq!(ker.tuning_exponent.unwrap(), 0.4, epsilon = 1e-15);
        let cvm = calibration_rates(1.0, TestFamily::CramerVonMises).unwrap();
        assert_abs_diff_eq!(cvm.r, 0.25, epsilon = 1e-15);
        assert!(cvm.tuning_exponent.is_none());
        assert!("bogus".parse::<TestFamily>().is_err());
    }
}
