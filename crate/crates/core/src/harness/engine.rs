use std::time::{Duration, Instant};

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{AlternativeSpec, CoefficientSpec, ExperimentConfig, TestSpec};
use crate::chisq::{chisq_test, predicted_type2_chisq};
use crate::cvm::{cvm_test, CalibrationCache, CvmCalibration};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelTest};
use crate::minimax::{least_favorable, minimax_test, Design};
use crate::model::{
    make_tail_alternative, power_law, sample_inverse_model_with, sample_sequence_model_with, Basis, DensitySampler,
    Spectrum,
};
use crate::numeric::{critical_value, mix, normal_cdf, seeded_rng};
use crate::quadratic::{example_coefficients, quadratic_test, QuadraticCoefficients};

/// Stream index reserved for the calibration seed derived from a run seed.
const CALIBRATION_STREAM: u64 = u64::MAX;

/// Rejection count of one Monte Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub experiment: String,
    pub reps: u64,
    pub rejections: u64,
    pub rate: f64,
    /// Binomial standard error √(rate(1 − rate)/reps).
    pub std_err: f64,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub predicted_type2: Option<f64>,
    /// Excluded from serialized output so results stay byte-reproducible.
    #[serde(skip)]
    pub wall_time: Duration,
}

impl MonteCarloSummary {
    pub fn from_counts(experiment: impl Into<String>, reps: u64, rejections: u64, seed: u64) -> Self {
        let rate = rejections as f64 / reps as f64;
        MonteCarloSummary {
            experiment: experiment.into(),
            reps,
            rejections,
            rate,
            std_err: (rate * (1.0 - rate) / reps as f64).sqrt(),
            seed,
            drift: None,
            predicted_type2: None,
            wall_time: Duration::ZERO,
        }
    }
}

/// A test with everything that does not depend on the data precomputed.
#[derive(Debug, Clone)]
pub enum PreparedTest {
    Quadratic(QuadraticCoefficients),
    Kernel(KernelTest),
    Minimax(Design),
    ChiSquared { cells: usize, n: usize, grid: usize },
    CramerVonMises { calibration: CvmCalibration, grid: usize },
}

impl PreparedTest {
    /// Builds the test at sample size n. `seed` feeds a derived calibration
    /// seed when the config does not fix one.
    pub fn new(spec: &TestSpec, n: usize, seed: u64) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            TestSpec::Quadratic { coefficients, sigma } => PreparedTest::Quadratic(match coefficients {
                CoefficientSpec::Example { decay, len } => {
                    QuadraticCoefficients::new(example_coefficients(n, *decay, *len)?.kappa2, n, *sigma)?
                }
                CoefficientSpec::Plateau { l, len } => QuadraticCoefficients::plateau(1.0, *l, *len, n, *sigma)?,
                CoefficientSpec::Weights { kappa2 } => QuadraticCoefficients::new(kappa2.clone(), n, *sigma)?,
            }),
            TestSpec::Kernel {
                kernel,
                bandwidth,
                len,
                sigma,
            } => PreparedTest::Kernel(KernelTest::new(Kernel::by_name(kernel)?, *bandwidth, *len, n, *sigma)?),
            TestSpec::ChiSquared { cells, grid } => PreparedTest::ChiSquared {
                cells: *cells,
                n,
                grid: *grid,
            },
            TestSpec::CramerVonMises {
                calibration_reps,
                calibration_seed,
                cache_dir,
                grid,
            } => {
                let cal_seed = calibration_seed.unwrap_or_else(|| mix(seed, CALIBRATION_STREAM));
                let calibration = match cache_dir {
                    Some(dir) => CalibrationCache::new(dir, true).get(n, *calibration_reps, cal_seed)?,
                    None => CvmCalibration::simulate(n, *calibration_reps, cal_seed)?,
                };
                PreparedTest::CramerVonMises {
                    calibration,
                    grid: *grid,
                }
            }
            TestSpec::Minimax(m) => PreparedTest::Minimax(m.solve(n)?),
        })
    }

    /// Basis the test reads its signal in.
    pub fn basis(&self) -> Basis {
        match self {
            PreparedTest::Kernel(_) | PreparedTest::ChiSquared { .. } => Basis::ComplexExponential,
            _ => Basis::Cosine,
        }
    }

    /// Required truncation of sequence-model signals.
    pub fn truncation(&self) -> Option<usize> {
        match self {
            PreparedTest::Quadratic(c) => Some(c.len()),
            PreparedTest::Kernel(k) => Some(k.len()),
            PreparedTest::Minimax(d) => Some(d.truncation),
            _ => None,
        }
    }

    /// Standardized mean shift at θ, when the family has a Gaussian limit.
    pub fn drift(&self, theta: &Spectrum) -> Result<Option<f64>> {
        Ok(match self {
            PreparedTest::Quadratic(c) => Some(c.drift(theta)?),
            PreparedTest::Kernel(k) => Some(k.drift(theta)?),
            PreparedTest::Minimax(d) => Some(d.a_n_theta(theta)? / d.null_sd()),
            PreparedTest::ChiSquared { cells, n, .. } => Some(predicted_type2_chisq(theta, *cells, *n, 0.5)?.drift),
            PreparedTest::CramerVonMises { .. } => None,
        })
    }

    /// Φ(x_α − drift).
    pub fn predicted_type2(&self, theta: &Spectrum, alpha: f64) -> Result<Option<f64>> {
        let x = critical_value(alpha)?;
        Ok(self.drift(theta)?.map(|d| normal_cdf(x - d)))
    }

    /// Brings θ to the test's basis and truncation.
    pub fn fit(&self, theta: &Spectrum) -> Result<Spectrum> {
        theta.require_basis(self.basis())?;
        match self.truncation() {
            Some(len) if theta.len() > len => {
                let kept = theta.resized(len);
                if (theta.norm_sq() - kept.norm_sq()).abs() > 0.0 {
                    return Err(Error::LengthMismatch {
                        expected: len,
                        found: theta.len(),
                    });
                }
                Ok(kept)
            }
            Some(len) => Ok(theta.resized(len)),
            None => Ok(theta.clone()),
        }
    }

    pub fn resolve(&self, alt: &AlternativeSpec) -> Result<Spectrum> {
        let basis = self.basis();
        let theta = match alt {
            AlternativeSpec::Null => Spectrum::zeros(basis, self.truncation().unwrap_or(1))?,
            AlternativeSpec::Spectrum { spectrum } => spectrum.clone().validated()?,
            AlternativeSpec::PowerLaw { amplitude, decay, len } => power_law(basis, *len, *amplitude, *decay)?,
            AlternativeSpec::Tail { m, c, s } => make_tail_alternative(*m, *c, *s, basis)?,
            AlternativeSpec::LeastFavorable => match self {
                PreparedTest::Minimax(d) => least_favorable(d),
                _ => return Err(Error::invalid("least-favorable alternative needs the minimax family")),
            },
        };
        self.fit(&theta)
    }

    /// The truth to simulate from.
    pub fn truth(&self, theta: &Spectrum) -> Result<Truth> {
        Ok(match self {
            PreparedTest::ChiSquared { grid, .. } | PreparedTest::CramerVonMises { grid, .. } => {
                Truth::Density(DensitySampler::new(theta, *grid)?)
            }
            _ => Truth::Sequence(self.fit(theta)?),
        })
    }

    /// One replication: draw data from `truth` and apply the test.
    pub fn rejects(&self, truth: &Truth, n: usize, alpha: f64, rng: &mut ChaCha8Rng) -> Result<bool> {
        Ok(match (self, truth) {
            (PreparedTest::Quadratic(c), Truth::Sequence(theta)) => {
                let obs = sample_sequence_model_with(theta, c.n, c.sigma, rng)?;
                quadratic_test(&obs, c, alpha)?.reject
            }
            (PreparedTest::Kernel(k), Truth::Sequence(theta)) => {
                let obs = sample_sequence_model_with(theta, k.n, k.sigma, rng)?;
                k.test(&obs, alpha)?.reject
            }
            (PreparedTest::Minimax(d), Truth::Sequence(theta)) => {
                let obs = match &d.lambda {
                    Some(l) => sample_inverse_model_with(theta, l, d.n, d.sigma, rng)?,
                    None => sample_sequence_model_with(theta, d.n, d.sigma, rng)?,
                };
                minimax_test(&obs, d, alpha)?.reject
            }
            (PreparedTest::ChiSquared { cells, .. }, Truth::Density(sampler)) => {
                chisq_test(&sampler.sample_with(n, rng)?, *cells, alpha)?.reject
            }
            (PreparedTest::CramerVonMises { calibration, .. }, Truth::Density(sampler)) => {
                cvm_test(&sampler.sample_with(n, rng)?, alpha, calibration)?.reject
            }
            _ => return Err(Error::invalid("truth does not match the test's observation model")),
        })
    }
}

/// Data-generating process of a run.
#[derive(Debug, Clone)]
pub enum Truth {
    Sequence(Spectrum),
    Density(DensitySampler),
}

/// Per-outcome counts over replications i < reps, where replication i draws
/// from the generator seeded by mix(seed, i). Counts are order-independent
/// sums, so they do not depend on scheduling.
pub fn tally<const K: usize, F>(reps: u64, seed: u64, trial: F) -> Result<[u64; K]>
where
    F: Fn(&mut ChaCha8Rng) -> Result<[bool; K]> + Sync,
{
    (0..reps)
        .into_par_iter()
        .map(|i| trial(&mut seeded_rng(mix(seed, i))).map(|hits| hits.map(u64::from)))
        .try_reduce(
            || [0; K],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )
}

/// Number of replications for which `trial` returns true; see [`tally`].
pub fn count_events<F>(reps: u64, seed: u64, trial: F) -> Result<u64>
where
    F: Fn(&mut ChaCha8Rng) -> Result<bool> + Sync,
{
    Ok(tally(reps, seed, |rng| trial(rng).map(|b| [b]))?[0])
}

/// Normalizes and scales the configured alternative.
pub fn configured_alternative(config: &ExperimentConfig, test: &PreparedTest) -> Result<Spectrum> {
    let mut theta = test.resolve(&config.alternative)?;
    if let Some(target) = config.target_drift {
        let drift = test
            .drift(&theta)?
            .ok_or_else(|| Error::invalid("target drift needs a family with a Gaussian predictor"))?;
        if drift.is_nan() || drift <= 0.0 {
            return Err(Error::invalid("cannot rescale an alternative with zero drift"));
        }
        // every drift is homogeneous of degree two in θ
        theta = theta.scaled((target / drift).sqrt());
    }
    Ok(theta.scaled(config.scale))
}

/// Rejection rate under the configured truth.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloSummary> {
    config.validate()?;
    let start = Instant::now();
    let test = PreparedTest::new(&config.test, config.n, config.seed)?;
    let theta = configured_alternative(config, &test)?;
    let mut summary = simulate_at(config, &test, &theta)?;
    summary.wall_time = start.elapsed();
    Ok(summary)
}

fn simulate_at(config: &ExperimentConfig, test: &PreparedTest, theta: &Spectrum) -> Result<MonteCarloSummary> {
    let truth = test.truth(theta)?;
    let rejections = count_events(config.reps, config.seed, |rng| {
        test.rejects(&truth, config.n, config.alpha, rng)
    })?;
    let mut summary = MonteCarloSummary::from_counts(&config.experiment, config.reps, rejections, config.seed);
    summary.drift = test.drift(theta)?;
    summary.predicted_type2 = test.predicted_type2(theta, config.alpha)?;
    Ok(summary)
}

/// One point of a power curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub scale: f64,
    pub n: usize,
    pub reps: u64,
    pub rejections: u64,
    pub power: f64,
    pub std_err: f64,
    pub drift: Option<f64>,
    pub predicted_type2: Option<f64>,
    /// |(1 − power) − predicted β|.
    pub gap: Option<f64>,
    pub seed: u64,
}

/// Empirical power and predicted β along `config.scales`, each point with
/// the same replication seeds.
pub fn power_curve(config: &ExperimentConfig) -> Result<Vec<PowerPoint>> {
    config.validate()?;
    if config.scales.is_empty() {
        return Err(Error::invalid("power curve needs a non-empty scale schedule"));
    }
    let test = PreparedTest::new(&config.test, config.n, config.seed)?;
    let base = configured_alternative(config, &test)?;
    config
        .scales
        .iter()
        .map(|&scale| {
            let s = simulate_at(config, &test, &base.scaled(scale))?;
            Ok(PowerPoint {
                scale,
                n: config.n,
                reps: s.reps,
                rejections: s.rejections,
                power: s.rate,
                std_err: s.std_err,
                drift: s.drift,
                predicted_type2: s.predicted_type2,
                gap: s.predicted_type2.map(|b| ((1.0 - s.rate) - b).abs()),
                seed: config.seed,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::MinimaxSpec;

    fn quadratic_config(reps: u64) -> ExperimentConfig {
        ExperimentConfig {
            experiment: "unit".into(),
            test: TestSpec::Quadratic {
                coefficients: CoefficientSpec::Example { decay: 2.0, len: 256 },
                sigma: 1.0,
            },
            alternative: AlternativeSpec::Null,
            target_drift: None,
            scale: 1.0,
            scales: vec![],
            n: 500,
            reps,
            seed: 11,
            alpha: 0.05,
            output: None,
        }
    }

    #[test]
    fn binomial_identity_is_exact() {
        let s = MonteCarloSummary::from_counts("x", 400, 37, 1);
        assert_eq!(s.rate, 37.0 / 400.0);
        assert_eq!(s.std_err, (s.rate * (1.0 - s.rate) / 400.0).sqrt());
    }

    #[test]
    fn null_rate_near_alpha() {
        let s = run_monte_carlo(&quadratic_config(4000)).unwrap();
        assert!(
            (s.rate - 0.05).abs() <= 3.0 * s.std_err.max(0.05 * 0.95 / 4000f64.sqrt()),
            "{s:?}"
        );
    }

    #[test]
    fn counts_do_not_depend_on_threads() {
        let config = quadratic_config(600);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| run_monte_carlo(&config)).unwrap();
        let b = four.install(|| run_monte_carlo(&config)).unwrap();
        assert_eq!(a.rejections, b.rejections);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn target_drift_rescales_alternative() {
        let mut config = quadratic_config(10);
        config.alternative = AlternativeSpec::PowerLaw {
            amplitude: 1.0,
            decay: 1.0,
            len: 20,
        };
        config.target_drift = Some(2.0);
        let test = PreparedTest::new(&config.test, config.n, config.seed).unwrap();
        let theta = configured_alternative(&config, &test).unwrap();
        assert!((test.drift(&theta).unwrap().unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn power_curve_predictions_monotone() {
        let mut config = quadratic_config(200);
        config.alternative = AlternativeSpec::PowerLaw {
            amplitude: 1.0,
            decay: 1.0,
            len: 20,
        };
        config.target_drift = Some(1.0);
        config.scales = vec![0.0, 0.5, 1.0, 1.5, 2.0];
        let curve = power_curve(&config).unwrap();
        let betas: Vec<f64> = curve.iter().map(|p| p.predicted_type2.unwrap()).collect();
        assert!(betas.windows(2).all(|w| w[1] < w[0]));
        assert!((betas[0] - 0.95).abs() < 1e-9);
    }

    #[test]
    fn least_favorable_needs_minimax() {
        let mut config = quadratic_config(10);
        config.alternative = AlternativeSpec::LeastFavorable;
        assert!(config.validate().is_err());
        config.test = TestSpec::Minimax(MinimaxSpec {
            s: 1.0,
            p0: 1.0,
            rho: None,
            rho_exponent: Some(0.8),
            sigma: 1.0,
            truncation: None,
            inverse: None,
            tol: 1e-9,
        });
        config.n = 10_000;
        let test = PreparedTest::new(&config.test, config.n, 0).unwrap();
        let theta = configured_alternative(&config, &test).unwrap();
        let PreparedTest::Minimax(d) = &test else {
            unreachable!()
        };
        assert!((test.drift(&theta).unwrap().unwrap() - (d.a_n / 2.0).sqrt()).abs() < 1e-9);
    }

    #[test]
    fn density_truth_rejects_negative_density() {
        let test = PreparedTest::new(&TestSpec::ChiSquared { cells: 8, grid: 256 }, 100, 0).unwrap();
        let theta = power_law(Basis::ComplexExponential, 4, 2.0, 0.0).unwrap();
        assert!(matches!(test.truth(&theta), Err(Error::NegativeDensity { .. })));
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"test": {"family": "chi-squared", "cells": 8, "bogus": 1}, "n": 10, "reps": 10, "seed": 1}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
        let text = r#"{"test": {"family": "chi-squared", "cells": 8}, "n": 10, "reps": 10, "seed": 1}"#;
        let c = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(c.alpha, 0.05);
        let text = r#"{"test": {"family": "chi-squared", "cells": 8}, "n": 10, "reps": 10, "seed": 1, "alpha": 2}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::InvalidAlpha(_))));
    }
}
