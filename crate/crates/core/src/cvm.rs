//! Cramér–von Mises statistic for uniformity, its population value in the
//! cosine basis and Monte Carlo critical values cached on disk.

use std::path::{Path, PathBuf};
use std::sync::Mutex;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{density_from_spectrum, Basis, Sample, Spectrum};
use crate::numeric::{check_alpha, mix, seeded_rng};
use crate::report::TestReport;

/// T² = ∫(F̂_n − F₀)² dF₀ for F₀ uniform, from the order statistics:
/// T² = n^{-1}[Σ_i (U_(i) − (2i−1)/(2n))² + 1/(12n)].
pub fn cvm_statistic(sample: &Sample) -> f64 {
    let mut u = sample.observations().to_vec();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    let ss: f64 = u
        .iter()
        .enumerate()
        .map(|(i, x)| (x - (2 * i + 1) as f64 / (2.0 * n)).powi(2))
        .sum();
    (ss + 1.0 / (12.0 * n)) / n
}

/// T²(F − F₀) = Σ_j θ_j² / (π² j²) for f = √2 Σ θ_j cos(πjx).
///
/// F − F₀ expands in the orthogonal sines √2 sin(πjx)/(πj), so this is
/// exactly ∫(F − F₀)².
pub fn cvm_population(theta: &Spectrum) -> Result<f64> {
    theta.require_basis(Basis::Cosine)?;
    let pi2 = std::f64::consts::PI.powi(2);
    Ok(theta
        .real_coeffs()?
        .iter()
        .enumerate()
        .map(|(i, t)| t * t / (pi2 * ((i + 1) as f64).powi(2)))
        .sum())
}

/// Sorted Monte Carlo null values of nT² at one sample size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvmCalibration {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub null_values: Vec<f64>,
}

impl CvmCalibration {
    /// Simulates `reps` uniform samples of size n; replication i uses the
    /// derived seed mix(seed, i), so the table is independent of threading.
    pub fn simulate(n: usize, reps: usize, seed: u64) -> Result<Self> {
        if n == 0 || reps == 0 {
            return Err(Error::invalid("calibration needs n ≥ 1 and reps ≥ 1"));
        }
        let mut null_values: Vec<f64> = (0..reps as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeded_rng(mix(seed, i));
                let obs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
                n as f64 * cvm_statistic(&Sample::new(obs).expect("uniform draws lie in [0, 1)"))
            })
            .collect();
        null_values.sort_by(f64::total_cmp);
        Ok(CvmCalibration {
            n,
            reps,
            seed,
            null_values,
        })
    }

    /// Empirical (1 − α) quantile: the ⌈(1−α)·reps⌉-th order statistic.
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let idx = ((1.0 - alpha) * self.reps as f64).ceil() as usize;
        Ok(self.null_values[idx.clamp(1, self.reps) - 1])
    }

    pub fn null_mean(&self) -> f64 {
        self.null_values.iter().sum::<f64>() / self.reps as f64
    }
}

/// Directory of calibration tables keyed by (n, reps, seed).
#[derive(Debug, Clone)]
pub struct CalibrationCache {
    dir: PathBuf,
    compute_missing: bool,
}

static CACHE_WRITES: Mutex<()> = Mutex::new(());

impl CalibrationCache {
    pub fn new(dir: impl Into<PathBuf>, compute_missing: bool) -> Self {
        CalibrationCache {
            dir: dir.into(),
            compute_missing,
        }
    }

    pub fn path_for(&self, n: usize, reps: usize, seed: u64) -> PathBuf {
        self.dir.join(format!("cvm_n{n}_reps{reps}_seed{seed}.json"))
    }

    /// Loads a cached table or, if allowed, simulates and stores it.
    pub fn get(&self, n: usize, reps: usize, seed: u64) -> Result<CvmCalibration> {
        let path = self.path_for(n, reps, seed);
        if path.exists() {
            return load(&path);
        }
        if !self.compute_missing {
            return Err(Error::MissingCalibration { n });
        }
        let table = CvmCalibration::simulate(n, reps, seed)?;
        self.store(&table)?;
        Ok(table)
    }

    pub fn store(&self, table: &CvmCalibration) -> Result<()> {
        let _guard = CACHE_WRITES.lock().unwrap_or_else(|e| e.into_inner());
        std::fs::create_dir_all(&self.dir).map_err(|e| Error::io(&self.dir, e))?;
        let path = self.path_for(table.n, table.reps, table.seed);
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, serde_json::to_vec(table)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

fn load(path: &Path) -> Result<CvmCalibration> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_slice(&bytes)?)
}

/// Rejects when nT² exceeds the calibrated (1 − α) null quantile.
pub fn cvm_test(sample: &Sample, alpha: f64, calibration: &CvmCalibration) -> Result<TestReport> {
    if calibration.n != sample.n() {
        return Err(Error::invalid(format!(
            "calibration is for n = {}, sample has n = {}",
            calibration.n,
            sample.n()
        )));
    }
    let q = calibration.critical_value(alpha)?;
    Ok(TestReport::with_threshold(
        sample.n() as f64 * cvm_statistic(sample),
        0.0,
        1.0,
        q,
        alpha,
    ))
}

/// nT²(F − F₀) together with a positivity check of 1 + f.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyMargin {
    pub margin: f64,
    pub min_density: f64,
    pub delta: f64,
    /// min(1 + f) > δ on the grid.
    pub positivity_ok: bool,
}

pub fn consistency_margin(theta: &Spectrum, n: usize, delta: f64, grid_size: usize) -> Result<ConsistencyMargin> {
    let margin = n as f64 * cvm_population(theta)?;
    let table = density_from_spectrum(theta, grid_size)?;
    Ok(ConsistencyMargin {
        margin,
        min_density: table.min,
        delta,
        positivity_ok: table.min > delta,
    })
}
