//! χ² tests on equal cells of [0, 1), the population functional in the
//! exponential basis and the Haar form of the statistic.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Sample, Spectrum};
use crate::numeric::{critical_value, normal_cdf};
use crate::report::TestReport;

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

/// k equal half-open cells [i/k, (i+1)/k).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellPartition {
    k: usize,
}

impl CellPartition {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return Err(Error::invalid(format!("need at least two cells, got {k}")));
        }
        Ok(CellPartition { k })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn boundaries(&self) -> Vec<f64> {
        (0..=self.k).map(|i| i as f64 / self.k as f64).collect()
    }

    pub fn cell_of(&self, x: f64) -> usize {
        ((x * self.k as f64) as usize).min(self.k - 1)
    }

    pub fn counts(&self, sample: &Sample) -> Vec<u64> {
        let obs = sample.observations();
        let count = |chunk: &[f64]| {
            let mut c = vec![0u64; self.k];
            for &x in chunk {
                c[self.cell_of(x)] += 1;
            }
            c
        };
        if obs.len() < 1 << 16 {
            return count(obs);
        }
        obs.par_chunks(1 << 14).map(count).reduce(
            || vec![0u64; self.k],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                a
            },
        )
    }
}

/// T_n = k n Σ_i (p̂_i − 1/k)², computed as (k/n) Σ_i (c_i − n/k)².
pub fn chisq_statistic(sample: &Sample, k: usize) -> Result<f64> {
    let cells = CellPartition::new(k)?;
    let n = sample.n() as f64;
    let expected = n / k as f64;
    let ss: f64 = cells
        .counts(sample)
        .iter()
        .map(|&c| (c as f64 - expected).powi(2))
        .sum();
    Ok(k as f64 * ss / n)
}

/// Rejects when (T_n − k + 1)/√(2k) exceeds x_α.
pub fn chisq_test(sample: &Sample, k: usize, alpha: f64) -> Result<TestReport> {
    let t = chisq_statistic(sample, k)?;
    TestReport::normal(t, k as f64 - 1.0, (2.0 * k as f64).sqrt(), alpha)
}

/// θ_j for j ∈ [−J, J] from the stored nonnegative half.
fn coeff(c: &[Complex64], j: i64) -> Complex64 {
    let a = c[j.unsigned_abs() as usize];
    if j < 0 {
        a.conj()
    } else {
        a
    }
}

/// ∫ over [a, b] of e^{2πijx}.
fn exp_integral(j: i64, a: f64, b: f64) -> Complex64 {
    if j == 0 {
        return Complex64::new(b - a, 0.0);
    }
    let w = TWO_PI * j as f64;
    (Complex64::from_polar(1.0, w * b) - Complex64::from_polar(1.0, w * a)) / Complex64::new(0.0, w)
}

/// Σ_l (∫_{l/k}^{(l+1)/k} f)² by direct cell integration of each mode.
pub fn cell_energy_direct(theta: &Spectrum, k: usize) -> Result<f64> {
    let c = theta.complex_coeffs()?;
    let cells = CellPartition::new(k)?;
    let b = cells.boundaries();
    let top = (c.len() - 1) as i64;
    Ok((0..k)
        .map(|l| {
            let mut acc = c[0].re / k as f64;
            for j in 1..=top {
                acc += 2.0 * (c[j as usize] * exp_integral(j, b[l], b[l + 1])).re;
            }
            acc * acc
        })
        .sum())
}

/// The same energy through the aliasing sum
/// k Σ_m Σ_{j ≠ mk} θ_j θ̄_{j−mk} (2 − 2cos(2πj/k)) / (4π² j (j − mk)),
/// plus θ_0²/k. Exact for finite spectra: m only ranges over shifts that
/// stay inside the support.
pub fn cell_energy_aliasing(theta: &Spectrum, k: usize) -> Result<f64> {
    let c = theta.complex_coeffs()?;
    CellPartition::new(k)?;
    let top = (c.len() - 1) as i64;
    let ki = k as i64;
    let mut acc = Complex64::new(0.0, 0.0);
    for j in (-top..=top).filter(|&j| j != 0) {
        let weight = 2.0 - 2.0 * (TWO_PI * j as f64 / k as f64).cos();
        if weight == 0.0 {
            continue;
        }
        let m_lo = (j - top).div_euclid(ki) - 1;
        let m_hi = (j + top).div_euclid(ki) + 1;
        for m in m_lo..=m_hi {
            let j1 = j - m * ki;
            if j1 == 0 || j1.abs() > top {
                continue;
            }
            let denom = 4.0 * std::f64::consts::PI.powi(2) * (j as f64) * (j1 as f64);
            acc += coeff(c, j) * coeff(c, j1).conj() * (weight / denom);
        }
    }
    Ok(k as f64 * acc.re + c[0].re.powi(2) / k as f64)
}

/// The cross-frequency sum over pairs j₁ ≢ j (mod k), evaluated term by
/// term over cells. It vanishes identically because Σ_l e^{2πi(j−j₁)l/k} = 0.
pub fn cross_frequency_term(theta: &Spectrum, k: usize) -> Result<Complex64> {
    let c = theta.complex_coeffs()?;
    CellPartition::new(k)?;
    let top = (c.len() - 1) as i64;
    let ki = k as i64;
    let kf = k as f64;
    let mut acc = Complex64::new(0.0, 0.0);
    for l in 0..k {
        for j in (-top..=top).filter(|&j| j != 0) {
            let a = (Complex64::from_polar(1.0, TWO_PI * j as f64 / kf) - 1.0) * coeff(c, j);
            for j1 in (-top..=top).filter(|&j1| j1 != 0 && (j - j1).rem_euclid(ki) != 0) {
                let b = (Complex64::from_polar(1.0, -TWO_PI * j1 as f64 / kf) - 1.0) * coeff(c, j1).conj();
                let phase = Complex64::from_polar(1.0, TWO_PI * ((j - j1) * l as i64) as f64 / kf);
                acc += a * b * phase / (4.0 * std::f64::consts::PI.powi(2) * j as f64 * j1 as f64);
            }
        }
    }
    Ok(acc)
}

/// T_n(F) = n k Σ_l (∫_cell f)², with the direct and aliasing evaluations
/// required to agree.
pub fn population_chisq_functional(theta: &Spectrum, k: usize, n: usize) -> Result<f64> {
    let direct = cell_energy_direct(theta, k)?;
    let aliasing = cell_energy_aliasing(theta, k)?;
    if (direct - aliasing).abs() > 1e-8 * direct.abs().max(1.0) {
        return Err(Error::NumericFailure(format!(
            "cell energy paths disagree: direct {direct:e}, aliasing {aliasing:e}"
        )));
    }
    Ok((n * k) as f64 * direct)
}

/// Number of levels l with 2^l = k.
pub fn haar_levels(k: usize) -> Result<u32> {
    if k < 2 || !k.is_power_of_two() {
        return Err(Error::invalid(format!("cell count {k} is not a power of two ≥ 2")));
    }
    Ok(k.trailing_zeros())
}

/// n Σ_{i<l} Σ_j β̂²_{ij} with β̂_{ij} = n^{-1}Σ_m ψ_{ij}(X_m).
///
/// Equals the χ² statistic on 2^l cells: the Haar functions of levels
/// below l together with the constant span the step functions on those
/// cells.
pub fn haar_statistic(sample: &Sample, l: u32) -> Result<f64> {
    if l == 0 || l > 30 {
        return Err(Error::invalid(format!("level count must be in 1..=30, got {l}")));
    }
    let mut sums: Vec<Vec<f64>> = (0..l).map(|i| vec![0.0; 1 << i]).collect();
    for &x in sample.observations() {
        for (i, level) in sums.iter_mut().enumerate() {
            let scale = (1usize << i) as f64;
            let pos = x * scale;
            let j = (pos as usize).min(level.len() - 1);
            let sign = if pos - (j as f64) < 0.5 { 1.0 } else { -1.0 };
            level[j] += sign * scale.sqrt();
        }
    }
    let n = sample.n() as f64;
    let ss: f64 = sums.iter().flatten().map(|s| (s / n).powi(2)).sum();
    Ok(n * ss)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChisqPrediction {
    pub beta: f64,
    pub population: f64,
    pub drift: f64,
    /// Set when T_n(F) falls outside [0.1√k, 10√k], where the Gaussian
    /// approximation is not expected to hold.
    pub warning: Option<String>,
}

/// β ≈ Φ(x_α − (2k)^{-1/2} T_n(F)).
pub fn predicted_type2_chisq(theta: &Spectrum, k: usize, n: usize, alpha: f64) -> Result<ChisqPrediction> {
    let x = critical_value(alpha)?;
    let population = population_chisq_functional(theta, k, n)?;
    let root_k = (k as f64).sqrt();
    let drift = population / (2.0f64.sqrt() * root_k);
    let warning = (!(0.1 * root_k..=10.0 * root_k).contains(&population)).then(|| {
        format!(
            "T_n(F) = {population:.4} lies outside [{:.4}, {:.4}]",
            0.1 * root_k,
            10.0 * root_k
        )
    });
    Ok(ChisqPrediction {
        beta: normal_cdf(x - drift),
        population,
        drift,
        warning,
    })
}
