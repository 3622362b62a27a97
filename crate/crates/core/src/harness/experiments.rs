use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CoefficientSpec, ConsistencyConfig, DecompositionConfig, MembershipConfig, TestSpec};
use super::engine::{count_events, tally, PreparedTest};
use crate::error::{Error, Result};
use crate::minimax::sample_bayes_prior;
use crate::model::{calibration_rates, make_tail_alternative, project_besov, BesovBall, TestFamily};
use crate::numeric::mix;

/// One C level of the consistency sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyPoint {
    pub c: f64,
    pub m: usize,
    pub n: usize,
    /// Plateau length, cell count or inverse bandwidth at this n.
    pub tuning: f64,
    pub norm: f64,
    pub reps: u64,
    pub rejections: u64,
    pub power: f64,
    pub std_err: f64,
    pub drift: Option<f64>,
    pub seed: u64,
}

/// Sample size n = round(C^{-1/(2r)}·m^{s/r}) of the coupling, at which a
/// block at m with seminorm C has ‖θ‖ = n^{-r}.
pub fn coupled_sample_size(c: f64, m: usize, s: f64, r: f64) -> usize {
    (c.powf(-1.0 / (2.0 * r)) * (m as f64).powf(s / r)).round().max(1.0) as usize
}

/// The test of a consistency sweep at sample size n.
fn sweep_test(config: &ConsistencyConfig, n: usize, e: f64) -> Result<(TestSpec, f64)> {
    let scale = config.tuning * (n as f64).powf(e);
    let len = 2 * config.m;
    Ok(match config.family {
        TestFamily::Quadratic => {
            let l = (scale.round() as usize).max(1);
            let spec = TestSpec::Quadratic {
                coefficients: CoefficientSpec::Plateau { l, len: len.max(l) },
                sigma: config.sigma,
            };
            (spec, l as f64)
        }
        TestFamily::Kernel => {
            let h = 1.0 / scale;
            let spec = TestSpec::Kernel {
                kernel: config.kernel.clone(),
                bandwidth: h,
                len: config.kernel_len.max(len),
                sigma: config.sigma,
            };
            (spec, scale)
        }
        TestFamily::ChiSquared => {
            let cells = (scale.round() as usize).max(2);
            let spec = TestSpec::ChiSquared {
                cells,
                grid: config.grid,
            };
            (spec, cells as f64)
        }
        other => return Err(Error::invalid(format!("no consistency sweep for {other:?}"))),
    })
}

/// Tail alternatives with ‖θ‖ pinned to norm_scale·n^{-r} along the
/// coupling n ≍ C^{-1/(2r)}m^{s/r}. Level l uses replication seeds derived
/// from mix(seed, l).
pub fn consistency_experiment(config: &ConsistencyConfig) -> Result<Vec<ConsistencyPoint>> {
    config.validate()?;
    let rates = calibration_rates(config.s, config.family)?;
    let e = rates
        .tuning_exponent
        .ok_or_else(|| Error::invalid("family has no tuning scale"))?;
    config
        .c_schedule
        .iter()
        .enumerate()
        .map(|(level, &c)| {
            let n = coupled_sample_size(c, config.m, config.s, rates.r);
            let (spec, tuning) = sweep_test(config, n, e)?;
            let seed = mix(config.seed, level as u64);
            let test = PreparedTest::new(&spec, n, seed)?;
            let block = make_tail_alternative(config.m, c, config.s, test.basis())?;
            let norm = config.norm_scale * (n as f64).powf(-rates.r);
            let theta = block.scaled(norm / block.norm_sq().sqrt());
            let truth = test.truth(&theta)?;
            let rejections = count_events(config.reps, seed, |rng| test.rejects(&truth, n, config.alpha, rng))?;
            let power = rejections as f64 / config.reps as f64;
            Ok(ConsistencyPoint {
                c,
                m: config.m,
                n,
                tuning,
                norm,
                reps: config.reps,
                rejections,
                power,
                std_err: (power * (1.0 - power) / config.reps as f64).sqrt(),
                drift: test.drift(&test.fit(&theta)?)?,
                seed,
            })
        })
        .collect()
}

/// One γ level of the decomposition experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionPoint {
    pub gamma: f64,
    /// Constraints of f_n left untouched by the projection.
    pub frozen_head: usize,
    /// ‖f_n − f_nγ‖².
    pub residual_norm_sq: f64,
    pub reps: u64,
    pub power_full: f64,
    pub power_projected: f64,
    pub power_residual: f64,
    /// |β̂(f_n) − β̂(f_nγ)|.
    pub gap: f64,
    /// Standard error of the paired gap.
    pub gap_std_err: f64,
    pub residual_std_err: f64,
    pub seed: u64,
}

/// Power at f_n, at its projection f_nγ onto the γ-ball and at the residual
/// f_n − f_nγ, with common random numbers across the three truths.
pub fn maxiset_decomposition_experiment(config: &DecompositionConfig) -> Result<Vec<DecompositionPoint>> {
    config.validate()?;
    let test = PreparedTest::new(&config.test, config.n, config.seed)?;
    let f_n = test.fit(&config.f_n)?;
    let full = test.truth(&f_n)?;
    config
        .gammas
        .iter()
        .map(|&gamma| {
            let ball = BesovBall::new(config.s, gamma, f_n.basis())?;
            let proj = project_besov(&f_n, &ball, config.tol)?;
            let residual = f_n.sub(&proj.spectrum)?;
            let projected = test.truth(&proj.spectrum)?;
            let rest = test.truth(&residual)?;
            let [full_hits, proj_hits, rest_hits, discordant] = tally(config.reps, config.seed, |rng| {
                // common random numbers: each truth sees the same draws
                let hit = |truth| test.rejects(truth, config.n, config.alpha, &mut rng.clone());
                let (a, b, c) = (hit(&full)?, hit(&projected)?, hit(&rest)?);
                Ok([a, b, c, a != b])
            })?;
            let reps = config.reps as f64;
            let (a, b, c) = (
                full_hits as f64 / reps,
                proj_hits as f64 / reps,
                rest_hits as f64 / reps,
            );
            let discordant = discordant as f64 / reps;
            let gap = (a - b).abs();
            Ok(DecompositionPoint {
                gamma,
                frozen_head: proj.frozen_head,
                residual_norm_sq: residual.norm_sq(),
                reps: config.reps,
                power_full: a,
                power_projected: b,
                power_residual: c,
                gap,
                gap_std_err: ((discordant - gap * gap).max(0.0) / reps).sqrt(),
                residual_std_err: (c * (1.0 - c) / reps).sqrt(),
                seed: config.seed,
            })
        })
        .collect()
}

/// Frequency with which prior draws land in the alternative set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MembershipSummary {
    pub draws: u64,
    pub inside: u64,
    pub rate: f64,
    pub std_err: f64,
    /// Draws with ‖η‖² ≥ ρ_n.
    pub norm_ok: u64,
    /// Draws with seminorm at most P0.
    pub seminorm_ok: u64,
    pub k_n: usize,
    pub seed: u64,
}

/// Draw i uses seed mix(seed, i).
pub fn bayes_membership_experiment(config: &MembershipConfig) -> Result<MembershipSummary> {
    config.validate()?;
    let design = config.design.solve(config.n)?;
    let draws = (0..config.draws)
        .into_par_iter()
        .map(|i| sample_bayes_prior(&design, config.delta, mix(config.seed, i)))
        .collect::<Result<Vec<_>>>()?;
    let inside = draws.iter().filter(|d| d.in_alternative).count() as u64;
    let rate = inside as f64 / config.draws as f64;
    Ok(MembershipSummary {
        draws: config.draws,
        inside,
        rate,
        std_err: (rate * (1.0 - rate) / config.draws as f64).sqrt(),
        norm_ok: draws.iter().filter(|d| d.norm_sq >= design.rho_n).count() as u64,
        seminorm_ok: draws.iter().filter(|d| d.seminorm <= design.p0).count() as u64,
        k_n: design.k_n,
        seed: config.seed,
    })
}
