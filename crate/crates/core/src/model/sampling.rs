use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Spectrum;
use crate::numeric::seeded_rng;

/// Noisy coefficients y_j = θ_j + (σ/√n)ξ_j, indexed like the generating
/// spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceObservation {
    pub y: Spectrum,
    pub n: usize,
    pub sigma: f64,
}

impl SequenceObservation {
    /// σ²/n, the noise variance per real coordinate.
    pub fn noise_var(&self) -> f64 {
        self.sigma * self.sigma / self.n as f64
    }
}

/// An i.i.d. sample on [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    observations: Vec<f64>,
}

impl Sample {
    pub fn new(observations: Vec<f64>) -> Result<Self> {
        if observations.is_empty() {
            return Err(Error::invalid("sample must contain at least one observation"));
        }
        if let Some(x) = observations.iter().find(|x| !(0.0..1.0).contains(*x)) {
            return Err(Error::invalid(format!("observation {x} lies outside [0, 1)")));
        }
        Ok(Sample { observations })
    }

    pub fn n(&self) -> usize {
        self.observations.len()
    }

    pub fn observations(&self) -> &[f64] {
        &self.observations
    }

    /// Reads one value per line; blank lines and `#` comments are skipped.
    pub fn from_reader(reader: impl BufRead) -> Result<Self> {
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| Error::io("<sample>", e))?;
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            let v: f64 = t
                .parse()
                .map_err(|_| Error::invalid(format!("line {}: not a number: {t:?}", i + 1)))?;
            out.push(v);
        }
        Sample::new(out)
    }
}

fn check_noise(n: usize, sigma: f64) -> Result<()> {
    if n == 0 {
        return Err(Error::invalid("sample size n must be at least 1"));
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::invalid(format!("noise scale must be positive, got {sigma}")));
    }
    Ok(())
}

/// Draws from the sequence model with a generator seeded by `seed`.
pub fn sample_sequence_model(theta: &Spectrum, n: usize, sigma: f64, seed: u64) -> Result<SequenceObservation> {
    sample_sequence_model_with(theta, n, sigma, &mut seeded_rng(seed))
}

/// Draws y_j = θ_j + (σ/√n)ξ_j from an existing generator.
///
/// In the exponential basis ξ_0 is a real standard normal and, for j ≥ 1,
/// ξ_j = (N₁ + iN₂)/√2, so E|ξ_j|² = 1 and ξ_{−j} = conj(ξ_j).
pub fn sample_sequence_model_with<R: Rng + ?Sized>(
    theta: &Spectrum,
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<SequenceObservation> {
    check_noise(n, sigma)?;
    let sd = sigma / (n as f64).sqrt();
    let y = perturb(theta, sd, rng);
    Ok(SequenceObservation { y, n, sigma })
}

/// Draws from the damped model y_j = λ_jθ_j + (σ/√n)ξ_j (real bases).
pub fn sample_inverse_model_with<R: Rng + ?Sized>(
    theta: &Spectrum,
    lambda: &[f64],
    n: usize,
    sigma: f64,
    rng: &mut R,
) -> Result<SequenceObservation> {
    check_noise(n, sigma)?;
    let coeffs = theta.real_coeffs()?;
    if lambda.len() != coeffs.len() {
        return Err(Error::LengthMismatch {
            expected: coeffs.len(),
            found: lambda.len(),
        });
    }
    let damped = coeffs.iter().zip(lambda).map(|(t, l)| t * l).collect();
    let damped = Spectrum::from_real(theta.basis(), damped)?;
    sample_sequence_model_with(&damped, n, sigma, rng)
}

fn perturb<R: Rng + ?Sized>(theta: &Spectrum, sd: f64, rng: &mut R) -> Spectrum {
    let mut normal = || -> f64 { rng.sample(StandardNormal) };
    match theta {
        Spectrum::Cosine { coeffs } => Spectrum::Cosine {
            coeffs: coeffs.iter().map(|t| t + sd * normal()).collect(),
        },
        Spectrum::Haar { coeffs } => Spectrum::Haar {
            coeffs: coeffs.iter().map(|t| t + sd * normal()).collect(),
        },
        Spectrum::ComplexExponential { coeffs } => {
            let half = sd * std::f64::consts::FRAC_1_SQRT_2;
            let mut out = Vec::with_capacity(coeffs.len());
            out.push(Complex64::new(coeffs[0].re + sd * normal(), 0.0));
            for t in &coeffs[1..] {
                let (a, b) = (normal(), normal());
                out.push(t + Complex64::new(half * a, half * b));
            }
            Spectrum::ComplexExponential { coeffs: out }
        }
    }
}

/// The density 1 + f tabulated on a uniform grid over [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub min: f64,
    /// Set when the tabulated density dips below zero; such a table is
    /// returned for inspection but refused for sampling.
    pub negative: bool,
}

impl DensityTable {
    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "x,value")?;
        for (x, v) in self.x.iter().zip(&self.values) {
            writeln!(out, "{x},{v}")?;
        }
        Ok(())
    }
}

pub const DEFAULT_GRID: usize = 4096;

pub fn density_from_spectrum(theta: &Spectrum, grid_size: usize) -> Result<DensityTable> {
    if grid_size < 64 {
        return Err(Error::invalid(format!(
            "grid size must be at least 64, got {grid_size}"
        )));
    }
    let step = 1.0 / (grid_size - 1) as f64;
    let x: Vec<f64> = (0..grid_size).map(|i| i as f64 * step).collect();
    let values: Vec<f64> = x.iter().map(|&t| 1.0 + theta.eval(t)).collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DensityTable {
        x,
        values,
        min,
        negative: min < 0.0,
    })
}

/// Inverse-CDF sampler on the piecewise-linear CDF built by trapezoid
/// integration of a tabulated density.
///
/// Building the table costs O(grid·J); each draw is a binary search, so one
/// sampler should be shared across Monte Carlo replications.
#[derive(Debug, Clone)]
pub struct DensitySampler {
    x: Vec<f64>,
    cdf: Vec<f64>,
}

impl DensitySampler {
    pub fn new(theta: &Spectrum, grid_size: usize) -> Result<Self> {
        let table = density_from_spectrum(theta, grid_size)?;
        if table.negative {
            return Err(Error::NegativeDensity { min: table.min });
        }
        let mut cdf = Vec::with_capacity(table.x.len());
        cdf.push(0.0);
        for i in 1..table.x.len() {
            let dx = table.x[i] - table.x[i - 1];
            let prev = cdf[i - 1];
            cdf.push(prev + 0.5 * dx * (table.values[i] + table.values[i - 1]));
        }
        let total = *cdf.last().expect("grid is non-empty");
        if total.is_nan() || total <= 0.0 {
            return Err(Error::NumericFailure("density integrates to zero".into()));
        }
        for c in &mut cdf {
            *c /= total;
        }
        Ok(DensitySampler { x: table.x, cdf })
    }

    /// F^{-1}(u) for u ∈ [0, 1), clamped into [0, 1).
    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, self.cdf.len() - 1);
        let (c0, c1) = (self.cdf[i - 1], self.cdf[i]);
        let (x0, x1) = (self.x[i - 1], self.x[i]);
        let x = if c1 > c0 {
            x0 + (u - c0) / (c1 - c0) * (x1 - x0)
        } else {
            x0
        };
        x.clamp(0.0, 1.0 - f64::EPSILON / 2.0)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Sample> {
        let obs = (0..n).map(|_| self.quantile(rng.random::<f64>())).collect();
        Sample::new(obs)
    }
}

pub fn sample_iid_from_density(theta: &Spectrum, n: usize, seed: u64, grid_size: usize) -> Result<Sample> {
    if n == 0 {
        return Err(Error::invalid("sample size n must be at least 1"));
    }
    let sampler = DensitySampler::new(theta, grid_size).map_err(|e| match e {
        Error::NegativeDensity { min } => Error::invalid(format!("cannot sample from a density with minimum {min:.6}")),
        other => other,
    })?;
    sampler.sample_with(n, &mut seeded_rng(seed))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Basis;
    use approx::assert_abs_diff_eq;

    #[test]
    fn noiseless_limit_recovers_theta() {
        let theta = Spectrum::cosine(vec![0.3, -0.2, 0.1]).unwrap();
        let obs = sample_sequence_model(&theta, 10, 1e-12, 1).unwrap();
        for (a, b) in obs.y.real_coeffs().unwrap().iter().zip(theta.real_coeffs().unwrap()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn unit_noise_has_unit_variance() {
        let theta = Spectrum::cosine(vec![0.0; 100_000]).unwrap();
        let obs = sample_sequence_model(&theta, 1, 1.0, 11).unwrap();
        let y = obs.y.real_coeffs().unwrap();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (y.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.02, "variance {var}");
    }

    #[test]
    fn complex_noise_has_unit_modulus_variance() {
        let theta = Spectrum::zeros(Basis::ComplexExponential, 50_000).unwrap();
        let obs = sample_sequence_model(&theta, 4, 2.0, 5).unwrap();
        let c = obs.y.complex_coeffs().unwrap();
        let m = c[1..].iter().map(|v| v.norm_sqr()).sum::<f64>() / 50_000.0;
        assert!((m - 1.0).abs() < 0.02, "E|y|² = {m}");
        assert_eq!(c[0].im, 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let theta = Spectrum::cosine(vec![0.1, 0.05]).unwrap();
        assert_eq!(
            sample_sequence_model(&theta, 50, 1.0, 9).unwrap(),
            sample_sequence_model(&theta, 50, 1.0, 9).unwrap()
        );
        assert_eq!(
            sample_iid_from_density(&theta, 100, 9, 256).unwrap(),
            sample_iid_from_density(&theta, 100, 9, 256).unwrap()
        );
    }

    #[test]
    fn density_table() {
        let zero = Spectrum::zeros(Basis::Cosine, 4).unwrap();
        let t = density_from_spectrum(&zero, 64).unwrap();
        assert!(t.values.iter().all(|v| *v == 1.0));
        let theta = Spectrum::cosine(vec![0.1, 0.0, 0.0]).unwrap();
        let t = density_from_spectrum(&theta, 129).unwrap();
        for (x, v) in t.x.iter().zip(&t.values) {
            let exact = 1.0 + 0.1 * 2f64.sqrt() * (std::f64::consts::PI * x).cos();
            assert_abs_diff_eq!(*v, exact, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(t.min, 1.0 - 0.1 * 2f64.sqrt(), epsilon = 1e-14);
        assert!(!t.negative);
        let bad = Spectrum::cosine(vec![1.0]).unwrap();
        assert!(density_from_spectrum(&bad, 64).unwrap().negative);
        assert!(sample_iid_from_density(&bad, 10, 1, 64).is_err());
        assert!(density_from_spectrum(&theta, 32).is_err());
    }

    #[test]
    fn uniform_sampler_passes_dkw() {
        let zero = Spectrum::zeros(Basis::Cosine, 1).unwrap();
        let n = 10_000;
        let mut x = sample_iid_from_density(&zero, n, 3, DEFAULT_GRID)
            .unwrap()
            .observations()
            .to_vec();
        x.sort_by(f64::total_cmp);
        let d = x
            .iter()
            .enumerate()
            .map(|(i, v)| ((i + 1) as f64 / n as f64 - v).max(v - i as f64 / n as f64))
            .fold(0.0, f64::max);
        assert!(d < 1.36 / (n as f64).sqrt(), "KS distance {d}");
    }

    #[test]
    fn first_cosine_coefficient_is_recovered() {
        let theta = Spectrum::cosine(vec![0.1]).unwrap();
        let n = 100_000;
        let s = sample_iid_from_density(&theta, n, 17, DEFAULT_GRID).unwrap();
        let phi: Vec<f64> = s
            .observations()
            .iter()
            .map(|x| 2f64.sqrt() * (std::f64::consts::PI * x).cos())
            .collect();
        let mean = phi.iter().sum::<f64>() / n as f64;
        let sd = (phi.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((mean - 0.1).abs() < 3.0 * sd / (n as f64).sqrt(), "mean {mean}");
    }

    #[test]
    fn sample_rejects_out_of_range() {
        assert!(Sample::new(vec![0.5, 1.0]).is_err());
        assert!(Sample::new(vec![]).is_err());
        let s = Sample::from_reader("# header\n0.25\n\n0.5\n".as_bytes()).unwrap();
        assert_eq!(s.observations(), &[0.25, 0.5]);
    }
}
