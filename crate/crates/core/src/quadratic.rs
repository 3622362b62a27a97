//! Centered quadratic statistics Σκ²_j y_j² − σ²n^{-1}Σκ²_j with
//! regularity diagnostics and the Gaussian power approximation.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{SequenceObservation, Spectrum};
use crate::numeric::{critical_value, normal_cdf};
use crate::report::TestReport;

/// Weights κ²_j of a quadratic statistic at sample size n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticCoefficients {
    pub kappa2: Vec<f64>,
    pub n: usize,
    pub sigma: f64,
    /// σ^{-4} n² Σ κ⁴_j.
    pub a_n: f64,
    /// Effective bandwidth: the index where half of Σκ²_j has accumulated,
    /// or the support length for truncated weights.
    pub k_n: usize,
    /// Support length l_n when the weights vanish beyond it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truncated_at: Option<usize>,
}

impl QuadraticCoefficients {
    pub fn new(kappa2: Vec<f64>, n: usize, sigma: f64) -> Result<Self> {
        if kappa2.is_empty() {
            return Err(Error::invalid("coefficient sequence is empty"));
        }
        if kappa2.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(Error::invalid("coefficients must be finite and nonnegative"));
        }
        if n == 0 || !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid("need n ≥ 1 and σ > 0"));
        }
        let total: f64 = kappa2.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("coefficients are identically zero"));
        }
        let sum4: f64 = kappa2.iter().map(|k| k * k).sum();
        let a_n = (n as f64).powi(2) * sum4 / sigma.powi(4);
        let k_n = effective_bandwidth(&kappa2);
        Ok(QuadraticCoefficients {
            kappa2,
            n,
            sigma,
            a_n,
            k_n,
            truncated_at: None,
        })
    }

    /// Positive weights on j ≤ l and zero beyond, with k_n = l.
    pub fn truncated(kappa2: Vec<f64>, l: usize, n: usize, sigma: f64) -> Result<Self> {
        if l == 0 || l > kappa2.len() {
            return Err(Error::invalid(format!(
                "support length {l} outside 1..={}",
                kappa2.len()
            )));
        }
        if kappa2[..l].iter().any(|k| *k <= 0.0) || kappa2[l..].iter().any(|k| *k != 0.0) {
            return Err(Error::invalid(
                "truncated weights must be positive up to l and zero beyond",
            ));
        }
        let mut c = Self::new(kappa2, n, sigma)?;
        c.k_n = l;
        c.truncated_at = Some(l);
        Ok(c)
    }

    /// Constant weights `level` on j ≤ l, zero on l < j ≤ len.
    pub fn plateau(level: f64, l: usize, len: usize, n: usize, sigma: f64) -> Result<Self> {
        if level.is_nan() || level <= 0.0 || l > len {
            return Err(Error::invalid("plateau needs a positive level and l ≤ len"));
        }
        let kappa2 = (1..=len).map(|j| if j <= l { level } else { 0.0 }).collect();
        Self::truncated(kappa2, l, n, sigma)
    }

    pub fn len(&self) -> usize {
        self.kappa2.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa2.is_empty()
    }

    /// σ²n^{-1}Σκ², the null mean of Σκ²y².
    pub fn null_mean(&self) -> f64 {
        self.noise_var() * self.kappa2.iter().sum::<f64>()
    }

    /// Exact null standard deviation √(2Σκ⁴)·σ²/n of the statistic.
    pub fn null_sd(&self) -> f64 {
        (2.0 * self.kappa2.iter().map(|k| k * k).sum::<f64>()).sqrt() * self.noise_var()
    }

    fn noise_var(&self) -> f64 {
        self.sigma * self.sigma / self.n as f64
    }

    /// A_n(θ) = n²σ^{-4}Σκ²θ² over the indices both sequences carry.
    pub fn a_n_theta(&self, theta: &Spectrum) -> Result<f64> {
        let c = theta.real_coeffs()?;
        let s: f64 = self.kappa2.iter().zip(c).map(|(k, t)| k * t * t).sum();
        Ok(s / self.noise_var().powi(2))
    }

    /// Noncentrality A_n(θ)(2A_n)^{-1/2}.
    pub fn drift(&self, theta: &Spectrum) -> Result<f64> {
        Ok(self.a_n_theta(theta)? / (2.0 * self.a_n).sqrt())
    }

    pub fn write_csv(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "j,kappa2")?;
        for (j, k) in self.kappa2.iter().enumerate() {
            writeln!(out, "{},{k}", j + 1)?;
        }
        Ok(())
    }
}

/// sup{k : Σ_{j<k} κ²_j ≤ ½ Σ_j κ²_j}.
fn effective_bandwidth(kappa2: &[f64]) -> usize {
    let half = 0.5 * kappa2.iter().sum::<f64>();
    let mut acc = 0.0;
    let mut k = 1;
    for (i, v) in kappa2.iter().enumerate() {
        // acc = Σ_{j ≤ i+1} κ²; k = i+2 is admissible while acc ≤ half.
        acc += v;
        if acc <= half {
            k = i + 2;
        } else {
            break;
        }
    }
    k
}

/// κ²_j = n^{-1/(2γ)} · n^{-1}j^{-γ} / (j^{-γ} + n^{-1}), j = 1..=len.
pub fn example_coefficients(n: usize, gamma: f64, len: usize) -> Result<QuadraticCoefficients> {
    if n < 2 || !(gamma.is_finite() && gamma > 0.0) || len == 0 {
        return Err(Error::invalid("example coefficients need n ≥ 2, γ > 0 and len ≥ 1"));
    }
    let nf = n as f64;
    let lead = nf.powf(-1.0 / (2.0 * gamma));
    let kappa2 = (1..=len)
        .map(|j| {
            let p = (j as f64).powf(-gamma);
            lead * (p / nf) / (p + 1.0 / nf)
        })
        .collect();
    QuadraticCoefficients::new(kappa2, n, 1.0)
}

/// Thresholds for the finite-n regularity surrogates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularityTolerances {
    /// Accepted range (C₁, C₂) of A_n.
    pub a_n_range: (f64, f64),
    /// Largest accepted |κ²_{j+1}/κ²_j − 1| on the central window.
    pub max_ratio_deviation: f64,
    /// Smallest accepted window share of Σκ² and of Σκ⁴.
    pub min_window_fraction: f64,
    /// δ₁ of the lower A4 index (1 − δ₁)k_n.
    pub delta1: f64,
}

impl Default for RegularityTolerances {
    fn default() -> Self {
        RegularityTolerances {
            a_n_range: (1e-2, 1e2),
            max_ratio_deviation: 0.1,
            min_window_fraction: 0.9,
            delta1: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Warn,
}

impl Verdict {
    fn from(ok: bool) -> Self {
        if ok {
            Verdict::Pass
        } else {
            Verdict::Warn
        }
    }
}

/// Finite-n surrogates of the regularity conditions on the weights:
/// monotonicity, bounded A_n, slowly varying ratios near k_n, decay past
/// k_n and concentration of mass on the central window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub delta: f64,
    pub k_n: usize,
    pub monotone: Verdict,
    pub a_n: f64,
    pub a_n_bounds: Verdict,
    pub max_ratio_deviation: f64,
    pub ratio_smoothness: Verdict,
    pub breakpoint_ratio: Option<f64>,
    pub breakpoint_decay: Verdict,
    pub window_mass_fraction: f64,
    pub window_energy_fraction: f64,
    pub window_concentration: Verdict,
}

/// Evaluates the regularity surrogates on the central window δk_n < j < k_n/δ (or
/// < (1−δ)k_n for truncated weights).
pub fn check_regularity(
    coeffs: &QuadraticCoefficients,
    delta: f64,
    tol: &RegularityTolerances,
) -> Result<RegularityReport> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!("δ must lie in (0, 1), got {delta}")));
    }
    let kappa = &coeffs.kappa2;
    let len = kappa.len();
    let k_n = coeffs.k_n as f64;
    let at = |j: usize| -> Option<f64> { (1..=len).contains(&j).then(|| kappa[j - 1]) };

    let monotone = kappa.windows(2).all(|w| w[1] <= w[0]);

    let lo = delta * k_n;
    let hi = match coeffs.truncated_at {
        Some(_) => (1.0 - delta) * k_n,
        None => k_n / delta,
    };
    let window: Vec<usize> = (1..=len).filter(|&j| (j as f64) > lo && (j as f64) < hi).collect();

    let max_dev = window
        .iter()
        .filter_map(|&j| match (at(j), at(j + 1)) {
            (Some(a), Some(b)) if a > 0.0 => Some((b / a - 1.0).abs()),
            _ => None,
        })
        .fold(0.0, f64::max);

    let breakpoint_ratio = match coeffs.truncated_at {
        Some(_) => {
            let num = at(((1.0 - delta) * k_n).round().max(1.0) as usize);
            let den = at((0.5 * k_n).round().max(1.0) as usize);
            num.zip(den).map(|(a, b)| a / b)
        }
        None => {
            let num = at(((1.0 + delta) * k_n).round() as usize);
            let den = at(((1.0 - tol.delta1) * k_n).round().max(1.0) as usize);
            num.zip(den).map(|(a, b)| a / b)
        }
    };
    let breakpoint_ok = match (breakpoint_ratio, coeffs.truncated_at) {
        (Some(r), None) => r > 0.0 && r < 1.0,
        (Some(r), Some(_)) => r > 0.0,
        (None, _) => false,
    };

    let total2: f64 = kappa.iter().sum();
    let total4: f64 = kappa.iter().map(|k| k * k).sum();
    let win2: f64 = window.iter().map(|&j| kappa[j - 1]).sum();
    let win4: f64 = window.iter().map(|&j| kappa[j - 1].powi(2)).sum();
    let mass = win2 / total2;
    let energy = win4 / total4;

    Ok(RegularityReport {
        delta,
        k_n: coeffs.k_n,
        monotone: Verdict::from(monotone),
        a_n: coeffs.a_n,
        a_n_bounds: Verdict::from(coeffs.a_n > tol.a_n_range.0 && coeffs.a_n < tol.a_n_range.1),
        max_ratio_deviation: max_dev,
        ratio_smoothness: Verdict::from(max_dev <= tol.max_ratio_deviation),
        breakpoint_ratio,
        breakpoint_decay: Verdict::from(breakpoint_ok),
        window_mass_fraction: mass,
        window_energy_fraction: energy,
        window_concentration: Verdict::from(mass >= tol.min_window_fraction && energy >= tol.min_window_fraction),
    })
}

fn check_len(obs: &SequenceObservation, coeffs: &QuadraticCoefficients) -> Result<()> {
    if obs.y.len() != coeffs.len() {
        return Err(Error::LengthMismatch {
            expected: coeffs.len(),
            found: obs.y.len(),
        });
    }
    Ok(())
}

/// T_n = Σκ²_j y_j² − σ²n^{-1}Σκ²_j; zero mean under the null.
pub fn quadratic_statistic(obs: &SequenceObservation, coeffs: &QuadraticCoefficients) -> Result<f64> {
    check_len(obs, coeffs)?;
    let y = obs.y.real_coeffs()?;
    let quad: f64 = coeffs.kappa2.iter().zip(y).map(|(k, v)| k * v * v).sum();
    let noise = obs.sigma * obs.sigma / obs.n as f64;
    Ok(quad - noise * coeffs.kappa2.iter().sum::<f64>())
}

/// Rejects when T_n exceeds x_α times its exact null standard deviation.
pub fn quadratic_test(obs: &SequenceObservation, coeffs: &QuadraticCoefficients, alpha: f64) -> Result<TestReport> {
    let t = quadratic_statistic(obs, coeffs)?;
    let scale = (2.0 * coeffs.kappa2.iter().map(|k| k * k).sum::<f64>()).sqrt() * obs.sigma * obs.sigma / obs.n as f64;
    TestReport::normal(t, 0.0, scale, alpha)
}

/// β = Φ(x_α − A_n(θ)(2A_n)^{-1/2}).
pub fn predicted_type2(theta: &Spectrum, coeffs: &QuadraticCoefficients, alpha: f64) -> Result<f64> {
    Ok(normal_cdf(critical_value(alpha)? - coeffs.drift(theta)?))
}
