use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::minimax::{solve_design, solve_inverse_design, Design};
use crate::model::{Spectrum, TestFamily};
use crate::numeric::check_alpha;

fn one() -> f64 {
    1.0
}

fn default_alpha() -> f64 {
    0.05
}

fn default_grid() -> usize {
    crate::model::DEFAULT_GRID
}

fn default_kernel() -> String {
    "box".into()
}

fn default_kernel_len() -> usize {
    8192
}

fn default_experiment() -> String {
    "simulate".into()
}

fn default_tol() -> f64 {
    1e-9
}

/// Weights of a quadratic statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoefficientSpec {
    /// κ²_j ∝ j^{-decay}/(j^{-decay} + n^{-1}), j = 1..=len.
    Example { decay: f64, len: usize },
    /// Equal weights on j ≤ l, zero beyond.
    Plateau { l: usize, len: usize },
    /// Explicit weights.
    Weights { kappa2: Vec<f64> },
}

/// Parameters of the minimax design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MinimaxSpec {
    pub s: f64,
    pub p0: f64,
    /// ρ_n directly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    /// ρ_n = n^{-rho_exponent}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_exponent: Option<f64>,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation: Option<usize>,
    /// Damped observations with λ_j² = amplitude·j^{-2γ}.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inverse: Option<InverseSpec>,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InverseSpec {
    pub gamma: f64,
    #[serde(default = "one")]
    pub amplitude: f64,
    /// Length of the eigenvalue sequence; 4096 by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub len: Option<usize>,
}

impl MinimaxSpec {
    pub fn rho_n(&self, n: usize) -> Result<f64> {
        match (self.rho, self.rho_exponent) {
            (Some(r), None) => Ok(r),
            (None, Some(e)) => Ok((n as f64).powf(-e)),
            _ => Err(Error::invalid("give exactly one of rho and rho_exponent")),
        }
    }

    pub fn eigenvalues(&self) -> Option<Vec<f64>> {
        self.inverse.as_ref().map(|inv| {
            let len = inv.len.or(self.truncation).unwrap_or(4096);
            (1..=len)
                .map(|j| inv.amplitude.sqrt() * (j as f64).powf(-inv.gamma))
                .collect()
        })
    }

    pub fn solve(&self, n: usize) -> Result<Design> {
        let rho = self.rho_n(n)?;
        match self.eigenvalues() {
            None => solve_design(self.s, self.p0, rho, n, self.sigma, self.truncation, self.tol),
            Some(lambda) => {
                solve_inverse_design(self.s, self.p0, rho, n, self.sigma, &lambda, self.truncation, self.tol)
            }
        }
    }
}

/// The test applied in each replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TestSpec {
    Quadratic {
        coefficients: CoefficientSpec,
        #[serde(default = "one")]
        sigma: f64,
    },
    Kernel {
        #[serde(default = "default_kernel")]
        kernel: String,
        bandwidth: f64,
        #[serde(default = "default_kernel_len")]
        len: usize,
        #[serde(default = "one")]
        sigma: f64,
    },
    ChiSquared {
        cells: usize,
        #[serde(default = "default_grid")]
        grid: usize,
    },
    CramerVonMises {
        calibration_reps: usize,
        /// Seed of the null calibration; derived from the run seed if absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        calibration_seed: Option<u64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cache_dir: Option<PathBuf>,
        #[serde(default = "default_grid")]
        grid: usize,
    },
    Minimax(MinimaxSpec),
}

impl TestSpec {
    pub fn family(&self) -> TestFamily {
        match self {
            TestSpec::Quadratic { .. } => TestFamily::Quadratic,
            TestSpec::Kernel { .. } => TestFamily::Kernel,
            TestSpec::ChiSquared { .. } => TestFamily::ChiSquared,
            TestSpec::CramerVonMises { .. } => TestFamily::CramerVonMises,
            TestSpec::Minimax(_) => TestFamily::Minimax,
        }
    }
}

/// The true signal of a run, in the test's natural basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AlternativeSpec {
    #[default]
    Null,
    Spectrum {
        spectrum: Spectrum,
    },
    /// θ_j = amplitude·j^{-decay} for j ≤ len.
    PowerLaw {
        amplitude: f64,
        decay: f64,
        len: usize,
    },
    /// Equal coefficients on j = m..=2m with m^{2s}‖θ‖² = c.
    Tail {
        m: usize,
        c: f64,
        s: f64,
    },
    /// θ*_j = κ_j/|λ_j| of the minimax design.
    LeastFavorable,
}

/// One Monte Carlo run, or a power curve when `scales` is non-empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_experiment")]
    pub experiment: String,
    pub test: TestSpec,
    #[serde(default)]
    pub alternative: AlternativeSpec,
    /// Rescales the alternative so the test's drift equals this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_drift: Option<f64>,
    /// Multiplies the alternative after any drift normalization.
    #[serde(default = "one")]
    pub scale: f64,
    /// Scale schedule of a power curve.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub scales: Vec<f64>,
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

fn increasing(name: &str, values: &[f64]) -> Result<()> {
    if values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid(format!("{name} schedule must be strictly increasing")));
    }
    Ok(())
}

impl TestSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            TestSpec::Quadratic { coefficients, sigma } => {
                positive("sigma", *sigma)?;
                match coefficients {
                    CoefficientSpec::Example { decay, len } => {
                        positive("decay", *decay)?;
                        if *len == 0 {
                            return Err(Error::invalid("coefficient length must be positive"));
                        }
                    }
                    CoefficientSpec::Plateau { l, len } => {
                        if *l == 0 || l > len {
                            return Err(Error::invalid("plateau needs 1 ≤ l ≤ len"));
                        }
                    }
                    CoefficientSpec::Weights { kappa2 } => {
                        if kappa2.is_empty() || kappa2.iter().any(|k| !(k.is_finite() && *k >= 0.0)) {
                            return Err(Error::invalid("weights must be finite and non-negative"));
                        }
                    }
                }
            }
            TestSpec::Kernel {
                bandwidth, len, sigma, ..
            } => {
                positive("bandwidth", *bandwidth)?;
                positive("sigma", *sigma)?;
                if *len == 0 {
                    return Err(Error::invalid("kernel truncation must be positive"));
                }
            }
            TestSpec::ChiSquared { cells, grid } => {
                if *cells < 2 || *grid < 64 {
                    return Err(Error::invalid("need at least 2 cells and a grid of 64 points"));
                }
            }
            TestSpec::CramerVonMises {
                calibration_reps, grid, ..
            } => {
                if *calibration_reps < 100 || *grid < 64 {
                    return Err(Error::invalid(
                        "need at least 100 calibration draws and a grid of 64 points",
                    ));
                }
            }
            TestSpec::Minimax(spec) => {
                positive("s", spec.s)?;
                positive("p0", spec.p0)?;
                positive("sigma", spec.sigma)?;
                positive("tol", spec.tol)?;
                spec.rho_n(1)?;
                if let Some(inv) = &spec.inverse {
                    positive("amplitude", inv.amplitude)?;
                    if !(inv.gamma.is_finite() && inv.gamma >= 0.0) {
                        return Err(Error::invalid("gamma must be non-negative"));
                    }
                }
            }
        }
        Ok(())
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.test.validate()?;
        check_alpha(self.alpha)?;
        if self.n == 0 || self.reps == 0 {
            return Err(Error::invalid("n and reps must be positive"));
        }
        if !(self.scale.is_finite() && self.scale >= 0.0) {
            return Err(Error::invalid("scale must be non-negative"));
        }
        if let Some(d) = self.target_drift {
            positive("target drift", d)?;
        }
        if self.scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::invalid("scales must be non-negative"));
        }
        increasing("scale", &self.scales)?;
        if let AlternativeSpec::LeastFavorable = self.alternative {
            if !matches!(self.test, TestSpec::Minimax(_)) {
                return Err(Error::invalid("least-favorable alternative needs the minimax family"));
            }
        }
        Ok(())
    }
}

/// Tail-alternative sweep along the coupling n ≍ C^{-1/(2r)}m^{s/r}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub family: TestFamily,
    pub s: f64,
    pub c_schedule: Vec<f64>,
    /// Start of the alternative's frequency block.
    pub m: usize,
    /// Tuning multiplier: plateau length or cell count tuning·n^{2−4r},
    /// bandwidth tuning·n^{-(2−4r)}.
    pub tuning: f64,
    /// ‖θ‖ = norm_scale·n^{-r}.
    #[serde(default = "one")]
    pub norm_scale: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default = "default_kernel")]
    pub kernel: String,
    #[serde(default = "default_kernel_len")]
    pub kernel_len: usize,
    #[serde(default = "default_grid")]
    pub grid: usize,
    pub reps: u64,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ConsistencyConfig {
    pub fn validate(&self) -> Result<()> {
        positive("s", self.s)?;
        positive("tuning", self.tuning)?;
        positive("norm scale", self.norm_scale)?;
        positive("sigma", self.sigma)?;
        check_alpha(self.alpha)?;
        if self.c_schedule.is_empty() || self.c_schedule.iter().any(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::invalid("C schedule must be non-empty and positive"));
        }
        increasing("C", &self.c_schedule)?;
        if self.m == 0 || self.reps == 0 {
            return Err(Error::invalid("m and reps must be positive"));
        }
        if !matches!(
            self.family,
            TestFamily::Quadratic | TestFamily::Kernel | TestFamily::ChiSquared
        ) {
            return Err(Error::invalid(format!(
                "consistency sweep supports quadratic, kernel and chi-squared, not {:?}",
                self.family
            )));
        }
        Ok(())
    }
}

/// Power of f_n against its projections onto growing Besov balls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecompositionConfig {
    pub test: TestSpec,
    pub f_n: Spectrum,
    pub s: f64,
    /// Ball radii P0 = γ, increasing.
    pub gammas: Vec<f64>,
    pub n: usize,
    pub reps: u64,
    pub seed: u64,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl DecompositionConfig {
    pub fn validate(&self) -> Result<()> {
        self.test.validate()?;
        positive("s", self.s)?;
        positive("tol", self.tol)?;
        check_alpha(self.alpha)?;
        if self.gammas.is_empty() || self.gammas.iter().any(|g| !(g.is_finite() && *g > 0.0)) {
            return Err(Error::invalid("gamma schedule must be non-empty and positive"));
        }
        increasing("gamma", &self.gammas)?;
        if self.n == 0 || self.reps == 0 {
            return Err(Error::invalid("n and reps must be positive"));
        }
        Ok(())
    }
}

/// Draws from the perturbed Gaussian prior around the least favorable
/// alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MembershipConfig {
    pub design: MinimaxSpec,
    pub n: usize,
    pub delta: f64,
    pub draws: u64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl MembershipConfig {
    pub fn validate(&self) -> Result<()> {
        TestSpec::Minimax(self.design.clone()).validate()?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::invalid("delta must lie in (0, 1)"));
        }
        if self.n == 0 || self.draws == 0 {
            return Err(Error::invalid("n and draws must be positive"));
        }
        Ok(())
    }
}

/// First 16 hex digits of the SHA-256 of the config's JSON form.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let digest = Sha256::digest(serde_json::to_vec(config)?);
    Ok(digest.iter().take(8).map(|b| format!("{b:02x}")).collect())
}
