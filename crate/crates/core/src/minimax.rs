//! Asymptotically minimax quadratic test against Besov-ball alternatives
//! separated from zero in ℓ2, for direct and damped (inverse) observations.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{besov_seminorm, Basis, SequenceObservation, Spectrum};
use crate::numeric::{bisect, critical_value, normal_cdf, seeded_rng};
use crate::report::TestReport;

/// Smallest default truncation.
pub const MIN_TRUNCATION: usize = 1024;
/// Default truncation as a multiple of k_n.
pub const TRUNCATION_FACTOR: usize = 20;

/// Solved minimax design.
///
/// κ_j² = κ_n² on the plateau j ≤ k_n and 2sP0·j^{-2s-1} beyond (times λ_j²
/// for damped observations), stored for j = 1..=J.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub s: f64,
    pub p0: f64,
    pub rho_n: f64,
    pub n: usize,
    pub sigma: f64,
    pub k_n: usize,
    /// The unrounded root of the breakpoint equation.
    pub k_real: f64,
    pub kappa_n2: f64,
    pub kappa_j2: Vec<f64>,
    /// σ^{-4} n² Σ κ_j⁴.
    pub a_n: f64,
    /// σ^{-2} n ρ_n.
    pub c_n: f64,
    /// Centering of the critical region: C_n for direct designs, the exact
    /// null mean σ^{-2}nΣκ_j² for damped ones.
    pub centering: f64,
    pub truncation: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
}

/// Relative residuals of the two design equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// Breakpoint equation (plateau meets tail).
    pub breakpoint: f64,
    /// Radius equation (plateau mass plus tail budget equals ρ_n).
    pub radius: f64,
    /// Allowed radius residual after rounding k_n to an integer.
    pub rounding_slack: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("{name} must be positive, got {v}")))
    }
}

fn check_common(s: f64, p0: f64, rho: f64, n: usize, sigma: f64, tol: f64) -> Result<()> {
    check_positive("smoothness", s)?;
    check_positive("radius budget", p0)?;
    check_positive("alternative radius", rho)?;
    check_positive("noise scale", sigma)?;
    check_positive("tolerance", tol)?;
    if n == 0 {
        return Err(Error::invalid("sample size must be positive"));
    }
    Ok(())
}

/// Solves the direct design.
///
/// Eliminating κ² = 2sP0·k^{-1-2s} leaves (2s+1)P0·k^{-2s} = ρ_n, solved for
/// real k by bisection in log k. k is rounded to the nearest integer and κ²
/// recomputed, so the breakpoint equation holds exactly and the radius
/// equation up to a relative (2s+1)/k_n. Without `truncation`, J =
/// max(20·k_n, 1024); the neglected tail mass is below P0·J^{-2s}.
pub fn solve_design(
    s: f64,
    p0: f64,
    rho_n: f64,
    n: usize,
    sigma: f64,
    truncation: Option<usize>,
    tol: f64,
) -> Result<Design> {
    check_common(s, p0, rho_n, n, sigma, tol)?;
    let upper = truncation.map_or(1e12, |j| j as f64);
    if upper < 1.0 {
        return Err(Error::invalid("truncation must be positive"));
    }
    let f = |log_k: f64| (2.0 * s + 1.0) * p0 * (-2.0 * s * log_k).exp() - rho_n;
    if f(0.0) < 0.0 || f(upper.ln()) > 0.0 {
        return Err(Error::InfeasibleDesign(format!(
            "breakpoint equation has no root in [1, {upper}] for s={s}, P0={p0}, rho={rho_n}"
        )));
    }
    let k_real = bisect(f, 0.0, upper.ln(), tol * 1e-3)?.exp();
    let k_n = (k_real.round() as usize).clamp(1, upper as usize);
    let j = truncation.unwrap_or_else(|| (TRUNCATION_FACTOR * k_n).max(MIN_TRUNCATION));
    let kappa_n2 = 2.0 * s * p0 * (k_n as f64).powf(-1.0 - 2.0 * s);
    let kappa_j2 = (1..=j)
        .map(|i| {
            if i <= k_n {
                kappa_n2
            } else {
                2.0 * s * p0 * (i as f64).powf(-1.0 - 2.0 * s)
            }
        })
        .collect();
    let design = assemble(s, p0, rho_n, n, sigma, k_n, k_real, kappa_n2, kappa_j2, None);
    let r = design.residuals();
    if r.breakpoint > tol || r.radius > r.rounding_slack.max(tol) {
        return Err(Error::NumericFailure(format!(
            "design residuals out of contract: {r:?}"
        )));
    }
    Ok(design)
}

/// Solves the design for damped observations y_j = λ_jθ_j + (σ/√n)ξ_j.
///
/// Continuity of θ_j² = κ_j²/λ_j² at the breakpoint gives a(k) =
/// 2sP0·λ_k⁴·k^{-1-2s} in closed form; k_n is the integer in [1, J] closest
/// to the root of a(k)Σ_{j≤k}λ_j^{-4} + P0·k^{-2s} = ρ_n, found by bisection.
/// Then κ_j² = aλ_j^{-2} for j ≤ k_n and 2sP0λ_j²j^{-1-2s} beyond. J is
/// `truncation` or the length of `lambda`.
#[allow(clippy::too_many_arguments)]
pub fn solve_inverse_design(
    s: f64,
    p0: f64,
    rho_n: f64,
    n: usize,
    sigma: f64,
    lambda: &[f64],
    truncation: Option<usize>,
    tol: f64,
) -> Result<Design> {
    check_common(s, p0, rho_n, n, sigma, tol)?;
    let j = truncation.unwrap_or(lambda.len());
    if j == 0 || lambda.len() < j {
        return Err(Error::LengthMismatch {
            expected: j.max(1),
            found: lambda.len(),
        });
    }
    let lambda = &lambda[..j];
    if let Some(bad) = lambda.iter().find(|l| !(l.is_finite() && **l != 0.0)) {
        return Err(Error::invalid(format!(
            "eigenvalues must be finite and nonzero, got {bad}"
        )));
    }
    // prefix[k] = Σ_{i≤k} λ_i^{-4}
    let mut prefix = vec![0.0; j + 1];
    for (i, l) in lambda.iter().enumerate() {
        prefix[i + 1] = prefix[i] + l.powi(-4);
    }
    let a_of = |k: usize| 2.0 * s * p0 * lambda[k - 1].powi(4) * (k as f64).powf(-1.0 - 2.0 * s);
    let g = |k: usize| a_of(k) * prefix[k] + p0 * (k as f64).powf(-2.0 * s) - rho_n;
    if g(1) < 0.0 || g(j) > 0.0 {
        return Err(Error::InfeasibleDesign(format!(
            "radius equation has no root in [1, {j}] for s={s}, P0={p0}, rho={rho_n}"
        )));
    }
    let (mut lo, mut hi) = (1usize, j);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if g(mid) >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k_n = if g(lo).abs() <= g(hi).abs() { lo } else { hi };
    let a = a_of(k_n);
    let kappa_j2 = lambda
        .iter()
        .enumerate()
        .map(|(i, l)| {
            let idx = i + 1;
            if idx <= k_n {
                a / (l * l)
            } else {
                2.0 * s * p0 * l * l * (idx as f64).powf(-1.0 - 2.0 * s)
            }
        })
        .collect();
    let k_real = interpolate_root(&g, lo, hi);
    let kappa_n2 = a / (lambda[k_n - 1] * lambda[k_n - 1]);
    let design = assemble(
        s,
        p0,
        rho_n,
        n,
        sigma,
        k_n,
        k_real,
        kappa_n2,
        kappa_j2,
        Some(lambda.to_vec()),
    );
    let r = design.residuals();
    if r.breakpoint > tol || r.radius > r.rounding_slack.max(tol) {
        return Err(Error::NumericFailure(format!(
            "design residuals out of contract: {r:?}"
        )));
    }
    Ok(design)
}

fn interpolate_root(g: &impl Fn(usize) -> f64, lo: usize, hi: usize) -> f64 {
    let (a, b) = (g(lo), g(hi));
    if lo == hi || a == b {
        lo as f64
    } else {
        lo as f64 + a / (a - b) * (hi - lo) as f64
    }
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    s: f64,
    p0: f64,
    rho_n: f64,
    n: usize,
    sigma: f64,
    k_n: usize,
    k_real: f64,
    kappa_n2: f64,
    kappa_j2: Vec<f64>,
    lambda: Option<Vec<f64>>,
) -> Design {
    let nf = n as f64;
    let s2 = sigma * sigma;
    let a_n = nf * nf / (s2 * s2) * kappa_j2.iter().map(|k| k * k).sum::<f64>();
    let c_n = nf * rho_n / s2;
    let centering = if lambda.is_some() {
        nf / s2 * kappa_j2.iter().sum::<f64>()
    } else {
        c_n
    };
    Design {
        s,
        p0,
        rho_n,
        n,
        sigma,
        k_n,
        k_real,
        kappa_n2,
        truncation: kappa_j2.len(),
        kappa_j2,
        a_n,
        c_n,
        centering,
        lambda,
    }
}

impl Design {
    fn lambda_at(&self, j: usize) -> f64 {
        self.lambda.as_ref().map_or(1.0, |l| l[j - 1])
    }

    /// Relative residuals of both equations at the integer k_n.
    pub fn residuals(&self) -> Residuals {
        let k = self.k_n as f64;
        let s = self.s;
        let lk = self.lambda_at(self.k_n);
        // plateau coefficient a with κ_j² = aλ_j^{-2}
        let a = self.kappa_n2 * lk * lk;
        let breakpoint = (a * lk.powi(-4) * k.powf(1.0 + 2.0 * s) / (2.0 * s) - self.p0).abs() / self.p0;
        let plateau: f64 = (1..=self.k_n).map(|j| a * self.lambda_at(j).powi(-4)).sum();
        let radius = (plateau + self.p0 * k.powf(-2.0 * s) - self.rho_n).abs() / self.rho_n;
        let gamma_slack = self.lambda.as_ref().map_or(0.0, |_| {
            // one integer step of the radius equation
            let step = |kk: usize| {
                let kf = kk as f64;
                let lam = self.lambda_at(kk);
                let a = 2.0 * s * self.p0 * lam.powi(4) * kf.powf(-1.0 - 2.0 * s);
                let sum: f64 = (1..=kk).map(|j| self.lambda_at(j).powi(-4)).sum();
                a * sum + self.p0 * kf.powf(-2.0 * s)
            };
            let here = step(self.k_n);
            let next = if self.k_n < self.truncation {
                step(self.k_n + 1)
            } else {
                here
            };
            let prev = if self.k_n > 1 { step(self.k_n - 1) } else { here };
            (here - next).abs().max((prev - here).abs()) / self.rho_n
        });
        Residuals {
            breakpoint,
            radius,
            rounding_slack: ((2.0 * s + 1.0) / k).max(gamma_slack),
        }
    }

    /// Exact null mean σ^{-2}nΣκ_j² of the statistic.
    pub fn null_mean(&self) -> f64 {
        self.n as f64 / (self.sigma * self.sigma) * self.kappa_j2.iter().sum::<f64>()
    }

    /// Null standard deviation (2A_n)^{1/2}.
    pub fn null_sd(&self) -> f64 {
        (2.0 * self.a_n).sqrt()
    }

    /// Asymptotic type II error Φ(x_α − (A_n/2)^{1/2}) at the least
    /// favorable alternative.
    pub fn predicted_type2(&self, alpha: f64) -> Result<f64> {
        Ok(normal_cdf(critical_value(alpha)? - (self.a_n / 2.0).sqrt()))
    }

    /// Noncentrality σ^{-4}n²Σκ_j²λ_j²θ_j² of the statistic at θ.
    pub fn a_n_theta(&self, theta: &Spectrum) -> Result<f64> {
        let coeffs = theta.real_coeffs()?;
        if coeffs.len() != self.truncation {
            return Err(Error::LengthMismatch {
                expected: self.truncation,
                found: coeffs.len(),
            });
        }
        let nf = self.n as f64;
        let s4 = self.sigma.powi(4);
        let sum: f64 = coeffs
            .iter()
            .enumerate()
            .map(|(i, t)| {
                let l = self.lambda_at(i + 1);
                self.kappa_j2[i] * l * l * t * t
            })
            .sum();
        Ok(nf * nf / s4 * sum)
    }
}

/// A_n of the direct design as a function of ρ_n,
/// σ^{-4}n²ρ_n^{(1+4s)/(2s)}·8s²/((1+4s)(1+2s))·((1+2s)P0)^{-1/(2s)}.
pub fn asymptotic_a_n(s: f64, p0: f64, rho_n: f64, n: usize, sigma: f64) -> f64 {
    let nf = n as f64;
    nf * nf / sigma.powi(4) * rho_n.powf((1.0 + 4.0 * s) / (2.0 * s)) * 8.0 * s * s
        / ((1.0 + 4.0 * s) * (1.0 + 2.0 * s))
        * ((1.0 + 2.0 * s) * p0).powf(-1.0 / (2.0 * s))
}

/// A_n of the damped design with λ_j² = A·j^{-2γ}:
/// σ^{-4}n²ρ_n^{(1+4s+4γ)/(2s)}A²·8s²(1+4γ)/((1+2s+4γ)(1+4s+4γ))
/// ·((1+2s+4γ)P0/(1+4γ))^{-(1+4γ)/(2s)}.
pub fn asymptotic_inverse_a_n(s: f64, p0: f64, rho_n: f64, n: usize, sigma: f64, gamma: f64, amp: f64) -> f64 {
    let nf = n as f64;
    let g4 = 4.0 * gamma;
    nf * nf / sigma.powi(4) * rho_n.powf((1.0 + 4.0 * s + g4) / (2.0 * s)) * amp * amp * 8.0 * s * s * (1.0 + g4)
        / ((1.0 + 2.0 * s + g4) * (1.0 + 4.0 * s + g4))
        * ((1.0 + 2.0 * s + g4) / (1.0 + g4) * p0).powf(-(1.0 + g4) / (2.0 * s))
}

fn check_obs(obs: &SequenceObservation, design: &Design) -> Result<()> {
    if obs.y.len() != design.truncation {
        return Err(Error::LengthMismatch {
            expected: design.truncation,
            found: obs.y.len(),
        });
    }
    Ok(())
}

/// T = σ^{-4}n²Σκ_j²y_j²; its null mean is σ^{-2}nΣκ_j² and its null
/// variance 2A_n.
pub fn minimax_statistic(obs: &SequenceObservation, design: &Design) -> Result<f64> {
    check_obs(obs, design)?;
    let y = obs.y.real_coeffs()?;
    let nf = obs.n as f64;
    let quad: f64 = design.kappa_j2.iter().zip(y).map(|(k, v)| k * v * v).sum();
    Ok(nf * nf / obs.sigma.powi(4) * quad)
}

/// Rejects when (T − centering)(2A_n)^{-1/2} > x_α.
pub fn minimax_test(obs: &SequenceObservation, design: &Design, alpha: f64) -> Result<TestReport> {
    let t = minimax_statistic(obs, design)?;
    Ok(TestReport::normal(t, design.centering, design.null_sd(), alpha)?
        .with_prediction(design.predicted_type2(alpha)?))
}

/// θ*_j = κ_j/|λ_j|, the alternative attaining A_n(θ) = A_n.
pub fn least_favorable(design: &Design) -> Spectrum {
    let coeffs = design
        .kappa_j2
        .iter()
        .enumerate()
        .map(|(i, k)| k.sqrt() / design.lambda_at(i + 1).abs())
        .collect();
    Spectrum::Cosine { coeffs }
}

/// One draw from the Gaussian prior around the least favorable alternative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BayesDraw {
    pub eta: Spectrum,
    pub norm_sq: f64,
    pub seminorm: f64,
    /// ‖η‖² ≥ ρ_n and the seminorm is at most P0.
    pub in_alternative: bool,
}

/// Prior variances of the δ-perturbed design: re-solved with P0(1 − δ) and
/// ρ_n(1 + δ), zero beyond k_n/δ.
pub fn bayes_prior_variances(design: &Design, delta: f64) -> Result<Vec<f64>> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::invalid(format!(
            "prior perturbation must lie in (0, 1), got {delta}"
        )));
    }
    let p0 = design.p0 * (1.0 - delta);
    let rho = design.rho_n * (1.0 + delta);
    let tol = 1e-9;
    let perturbed = match &design.lambda {
        None => solve_design(design.s, p0, rho, design.n, design.sigma, Some(design.truncation), tol)?,
        Some(l) => solve_inverse_design(design.s, p0, rho, design.n, design.sigma, l, None, tol)?,
    };
    let cutoff = design.k_n as f64 / delta;
    let theta = least_favorable(&perturbed);
    let coeffs = theta.real_coeffs()?;
    Ok(coeffs
        .iter()
        .enumerate()
        .map(|(i, t)| if (i + 1) as f64 <= cutoff { t * t } else { 0.0 })
        .collect())
}

/// Draws η_j ~ N(0, v_j) with the δ-perturbed prior variances and reports
/// whether η lies in the alternative set.
///
/// Standard normals are drawn for every j in order, so draws at different δ
/// with the same seed are coupled.
pub fn sample_bayes_prior(design: &Design, delta: f64, seed: u64) -> Result<BayesDraw> {
    let variances = bayes_prior_variances(design, delta)?;
    let mut rng = seeded_rng(seed);
    let coeffs: Vec<f64> = variances
        .iter()
        .map(|v| {
            let z: f64 = rng.sample(StandardNormal);
            v.sqrt() * z
        })
        .collect();
    let eta = Spectrum::from_real(Basis::Cosine, coeffs)?;
    let norm_sq = eta.norm_sq();
    let seminorm = besov_seminorm(&eta, design.s)?.value;
    Ok(BayesDraw {
        in_alternative: norm_sq >= design.rho_n && seminorm <= design.p0,
        eta,
        norm_sq,
        seminorm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::sample_sequence_model;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn standard(n: usize) -> Design {
        let rho = (n as f64).powf(-0.8);
        solve_design(1.0, 1.0, rho, n, 1.0, None, 1e-9).unwrap()
    }

    #[test]
    fn closed_form_breakpoint() {
        let d = solve_design(1.0, 1.0, 3e-4, 100, 1.0, None, 1e-9).unwrap();
        assert_relative_eq!(d.k_real, 100.0, max_relative = 1e-8);
        assert_eq!(d.k_n, 100);
        assert_relative_eq!(d.kappa_n2, 2e-6, max_relative = 1e-12);
        assert_eq!(d.truncation, 2000);
        assert!(d.residuals().radius < 1e-12);
    }

    #[test]
    fn a_n_matches_s1_closed_form() {
        let n = 10_000;
        let d = standard(n);
        let rho = d.rho_n;
        let closed = 4.8 * 3f64.powf(-2.5) * (n as f64).powi(2) * rho.powf(2.5);
        assert_relative_eq!(d.a_n, closed, max_relative = 0.02);
        assert_relative_eq!(asymptotic_a_n(1.0, 1.0, rho, n, 1.0), closed, max_relative = 1e-12);
        // the constant is 8/(15√3)
        assert_relative_eq!(4.8 * 3f64.powf(-2.5), 8.0 / (15.0 * 3f64.sqrt()), max_relative = 1e-14);
    }

    #[test]
    fn coefficient_sum_matches_radius() {
        let d = standard(10_000);
        let sum: f64 = d.kappa_j2.iter().sum();
        assert_relative_eq!(sum, d.rho_n, max_relative = 0.01);
        assert_relative_eq!(d.null_mean(), d.c_n, max_relative = 0.01);
    }

    #[test]
    fn coefficients_monotone_and_continuous() {
        let d = standard(10_000);
        assert!(d.kappa_j2.windows(2).all(|w| w[1] <= w[0]));
        let k = d.k_n;
        let jump = (d.kappa_j2[k - 1] - d.kappa_j2[k]) / d.kappa_j2[k - 1];
        assert!(jump <= 3.0 / k as f64);
    }

    #[test]
    fn infeasible_radius_reported() {
        assert!(matches!(
            solve_design(1.0, 1.0, 10.0, 100, 1.0, None, 1e-9),
            Err(Error::InfeasibleDesign(_))
        ));
        assert!(matches!(
            solve_design(1.0, 1.0, 1e-9, 100, 1.0, Some(16), 1e-9),
            Err(Error::InfeasibleDesign(_))
        ));
        assert!(solve_design(-1.0, 1.0, 1e-3, 100, 1.0, None, 1e-9).is_err());
    }

    #[test]
    fn zero_observation_accepts() {
        let d = standard(10_000);
        let obs = SequenceObservation {
            y: Spectrum::zeros(Basis::Cosine, d.truncation).unwrap(),
            n: d.n,
            sigma: 1.0,
        };
        let r = minimax_test(&obs, &d, 0.05).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_relative_eq!(r.standardized, -d.c_n / (2.0 * d.a_n).sqrt(), max_relative = 1e-12);
        assert!(!r.reject);
        assert!(minimax_test(&obs, &d, 0.0).is_err());
    }

    #[test]
    fn statistic_rejects_wrong_length() {
        let d = standard(10_000);
        let obs = sample_sequence_model(&Spectrum::zeros(Basis::Cosine, 10).unwrap(), d.n, 1.0, 1).unwrap();
        assert!(matches!(minimax_statistic(&obs, &d), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn least_favorable_on_boundary() {
        let d = standard(10_000);
        let theta = least_favorable(&d);
        assert_relative_eq!(theta.norm_sq(), d.rho_n, max_relative = 0.01);
        // the tail sum exceeds its integral by a relative O(1/k_n)
        let semi = besov_seminorm(&theta, d.s).unwrap().value;
        assert!(semi <= d.p0 * (1.0 + 1.0 / d.k_n as f64), "seminorm {semi}");
        assert_relative_eq!(d.a_n_theta(&theta).unwrap(), d.a_n, max_relative = 1e-12);
        let d = standard(100_000);
        let semi = besov_seminorm(&least_favorable(&d), d.s).unwrap().value;
        assert!(semi <= d.p0 * 1.01, "seminorm {semi}");
    }

    /// Exact minimum of Σw_jx_j over x ≥ 0 with Σx ≥ r and suffix sums
    /// Σ_{j≥k}x_j ≤ b_k, for nonincreasing w. Writing the cost through the
    /// suffix sums T_k shows every T_k with k ≥ 2 should be as large as the
    /// constraints allow and T_1 = r.
    fn lp_minimum(w: &[f64], r: f64, b: &[f64]) -> f64 {
        let mut cap = r;
        let t: Vec<f64> = b
            .iter()
            .map(|bk| {
                cap = cap.min(*bk);
                cap
            })
            .collect();
        assert!((t[0] - r).abs() < 1e-15, "norm constraint unattainable");
        (0..w.len())
            .map(|j| w[j] * (t[j] - t.get(j + 1).copied().unwrap_or(0.0)))
            .sum()
    }

    fn reduced(rho: f64, j: usize) -> (Design, Vec<f64>, f64, Vec<f64>) {
        let d = solve_design(1.0, 1.0, rho, 1, 1.0, Some(j), 1e-9).unwrap();
        let theta = least_favorable(&d);
        let x: Vec<f64> = theta.real_coeffs().unwrap().iter().map(|t| t * t).collect();
        let r: f64 = x.iter().sum();
        let semi = besov_seminorm(&theta, 1.0).unwrap().value;
        let b = (1..=j).map(|k| semi / (k * k) as f64).collect();
        (d, x, r, b)
    }

    #[test]
    fn least_favorable_near_exact_minimum() {
        // Minimum over {‖θ‖² ≥ ‖θ*‖², seminorm ≤ seminorm(θ*)}: θ* is within
        // O(1/k_n) of it and the gap closes as k_n grows.
        let gap = |rho: f64, j: usize| {
            let (d, x, r, b) = reduced(rho, j);
            let at_star: f64 = d.kappa_j2.iter().zip(&x).map(|(w, v)| w * v).sum();
            let best = lp_minimum(&d.kappa_j2, r, &b);
            assert!(best <= at_star * (1.0 + 1e-12));
            at_star / best - 1.0
        };
        let small = gap(3.0 / 16.0, 8);
        let large = gap(3e-4, 2000);
        assert!(small < 0.08, "gap at k=4: {small}");
        assert!(large < 0.005, "gap at k=100: {large}");
        assert!(large < small / 10.0);
    }

    #[test]
    fn random_search_never_beats_exact_minimum() {
        let (d, x, r, b) = reduced(3.0 / 16.0, 8);
        let best = lp_minimum(&d.kappa_j2, r, &b);
        let at_star: f64 = d.kappa_j2.iter().zip(&x).map(|(w, v)| w * v).sum();
        let mut rng = seeded_rng(17);
        let mut found = 0usize;
        let mut lowest = f64::INFINITY;
        while found < 100_000 {
            // random suffix sums below the caps, then rescale to the norm
            let mut t = [0.0; 8];
            let mut cap = f64::INFINITY;
            for k in 0..8 {
                cap = cap.min(b[k]);
                t[k] = cap * rng.random::<f64>().powf(0.3);
                cap = t[k];
            }
            let xs: Vec<f64> = (0..8).map(|j| t[j] - t.get(j + 1).copied().unwrap_or(0.0)).collect();
            let scale = r / t[0];
            let xs: Vec<f64> = xs.iter().map(|v| v * scale).collect();
            let mut tail = 0.0;
            let feasible = (0..8).rev().all(|k| {
                tail += xs[k];
                tail <= b[k] * (1.0 + 1e-12)
            });
            if !feasible {
                continue;
            }
            found += 1;
            let cost: f64 = d.kappa_j2.iter().zip(&xs).map(|(w, v)| w * v).sum();
            lowest = lowest.min(cost);
        }
        assert!(lowest >= best * (1.0 - 1e-9));
        assert!(best <= at_star);
    }

    #[test]
    fn inverse_with_unit_eigenvalues_reduces() {
        for rho in [3e-4, 1e-3, 2.5e-4, 1e-2] {
            let d = solve_design(1.0, 1.0, rho, 1000, 1.0, None, 1e-9).unwrap();
            let ones = vec![1.0; d.truncation];
            let inv = solve_inverse_design(1.0, 1.0, rho, 1000, 1.0, &ones, None, 1e-9).unwrap();
            assert!((inv.k_n as i64 - d.k_n as i64).abs() <= 1);
            if inv.k_n == d.k_n {
                assert_relative_eq!(inv.kappa_n2, d.kappa_n2, max_relative = 1e-12);
                assert_relative_eq!(inv.a_n, d.a_n, max_relative = 1e-12);
            }
        }
    }

    fn gamma_one(n: usize) -> Design {
        let rho = (n as f64).powf(-4.0 / 9.0);
        let lambda: Vec<f64> = (1..=4096).map(|j| 1.0 / j as f64).collect();
        solve_inverse_design(1.0, 1.0, rho, n, 1.0, &lambda, None, 1e-9).unwrap()
    }

    #[test]
    fn inverse_design_residuals() {
        let d = gamma_one(10_000);
        let r = d.residuals();
        assert!(r.breakpoint < 1e-12);
        assert!(r.radius <= r.rounding_slack, "{r:?}");
        // continuity of θ_j² = κ_j²/λ_j² across the breakpoint
        let th = least_favorable(&d);
        let c = th.real_coeffs().unwrap();
        let k = d.k_n;
        assert!((c[k - 1] - c[k]).abs() / c[k - 1] < 3.0 / k as f64);
        assert_relative_eq!(d.centering, d.null_mean(), max_relative = 1e-15);
    }

    #[test]
    fn inverse_a_n_converges_to_asymptotic_form() {
        // k_n grows like n^{2/9}, and the plateau sum approaches its integral
        let ratio = |n: usize| {
            let rho = (n as f64).powf(-4.0 / 9.0);
            let lambda: Vec<f64> = (1..=16_384).map(|j| 1.0 / j as f64).collect();
            let d = solve_inverse_design(1.0, 1.0, rho, n, 1.0, &lambda, None, 1e-9).unwrap();
            d.a_n / asymptotic_inverse_a_n(1.0, 1.0, rho, n, 1.0, 1.0, 1.0)
        };
        let errs: Vec<f64> = [1e4, 1e8, 1e12, 1e16]
            .iter()
            .map(|n| (ratio(*n as usize) - 1.0).abs())
            .collect();
        // integer rounding of k_n makes the decay uneven
        assert!(errs[1..].iter().all(|e| *e < errs[0] / 10.0), "{errs:?}");
        assert!(errs[3] < 0.02, "{errs:?}");
    }

    #[test]
    fn inverse_rejects_bad_eigenvalues() {
        assert!(solve_inverse_design(1.0, 1.0, 1e-3, 10, 1.0, &[1.0, 0.0, 1.0], None, 1e-9).is_err());
        assert!(matches!(
            solve_inverse_design(1.0, 1.0, 1e-3, 10, 1.0, &[1.0; 4], Some(8), 1e-9),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn prior_mass_exceeds_inflated_radius() {
        let d = standard(10_000);
        let v = bayes_prior_variances(&d, 0.2).unwrap();
        let sum: f64 = v.iter().sum();
        assert!(sum >= d.rho_n * 1.1, "{sum} vs {}", d.rho_n);
        assert!(v[(5 * d.k_n)..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn prior_draw_continuous_in_delta() {
        let d = standard(10_000);
        let base = least_favorable(&d);
        let base = base.real_coeffs().unwrap();
        let mut rng = seeded_rng(5);
        let z: Vec<f64> = (0..d.truncation).map(|_| rng.sample(StandardNormal)).collect();
        let mut prev = f64::INFINITY;
        for delta in [1e-1, 1e-2, 1e-3, 1e-4] {
            let draw = sample_bayes_prior(&d, delta, 5).unwrap();
            let e = draw.eta.real_coeffs().unwrap();
            let dist: f64 = e
                .iter()
                .zip(base)
                .zip(&z)
                .map(|((a, b), zz)| (a - b * zz).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(dist < prev);
            prev = dist;
        }
        assert!(prev < 1e-3 * d.rho_n.sqrt());
    }

    #[test]
    fn design_serializes_all_fields() {
        let d = gamma_one(1000);
        let back: Design = serde_json::from_str(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn residuals_within_contract(
            s in 0.5f64..3.0,
            log_p0 in -2.0f64..2.0,
            log_rho in -8.0f64..-2.0,
        ) {
            let p0 = 10f64.powf(log_p0);
            let rho = 10f64.powf(log_rho);
            let k_real = ((2.0 * s + 1.0) * p0 / rho).powf(1.0 / (2.0 * s));
            prop_assume!((1.0..5e4).contains(&k_real));
            let d = solve_design(s, p0, rho, 1000, 1.0, None, 1e-9).unwrap();
            let r = d.residuals();
            prop_assert!(r.breakpoint <= 1e-9);
            prop_assert!(r.radius <= (2.0 * s + 1.0) / d.k_n as f64);
            prop_assert!((d.k_real - k_real).abs() <= 1e-6 * k_real);
            prop_assert!(d.a_n > 0.0);
        }

        #[test]
        fn inverse_residuals_within_contract(
            gamma in 0.0f64..2.0,
            log_rho in -4.0f64..-1.0,
        ) {
            let lambda: Vec<f64> = (1..=2048).map(|j| (j as f64).powf(-gamma)).collect();
            let rho = 10f64.powf(log_rho);
            match solve_inverse_design(1.0, 1.0, rho, 1000, 1.0, &lambda, None, 1e-9) {
                Ok(d) => {
                    let r = d.residuals();
                    prop_assert!(r.breakpoint <= 1e-9);
                    prop_assert!(r.radius <= r.rounding_slack);
                }
                Err(Error::InfeasibleDesign(_)) => {}
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
