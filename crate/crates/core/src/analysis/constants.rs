//! Constants behind the accelerated span-contraction guarantees.
//!
//! `tau = 1 - n delta'^N` is usually within one ulp of 1 in double
//! precision, so the deficit `n delta'^N` is carried separately and every
//! derived rate is computed from it rather than from `tau`.

use serde::{Deserialize, Serialize};

use super::ergodic::{check_ergodic, ErgodicCheck};
use crate::error::{Assumption, Error, Result};
use crate::mdp::{span_unchecked, DiscountSpec, Mdp, Policy, ValueVector};
use crate::oracle::OptimalSolution;

/// Smallest action gap accepted as a unique optimum.
pub const MIN_GAP: f64 = 0.0;

/// Action gap of the optimal policy:
/// `min_{s, a' != pi*(s)} Q*(s, pi*(s)) - Q*(s, a')`.
///
/// A non-positive value means the optimal policy is not unique. Returns
/// `+inf` when no state offers a second action.
pub fn assumption2_gap(mdp: &Mdp, gamma: f64, v_star: &ValueVector, pi_star: &Policy) -> f64 {
    let mut gap = f64::INFINITY;
    for s in 0..mdp.n_states() {
        let best = mdp.q_value(s, pi_star[s], v_star, gamma);
        for a in (0..mdp.n_actions()).filter(|&a| a != pi_star[s]) {
            gap = gap.min(best - mdp.q_value(s, a, v_star, gamma));
        }
    }
    if gap == f64::INFINITY {
        log::warn!("no state has a second action; action gap is unbounded");
    }
    gap
}

/// Minimum over the strictly positive entries of a matrix.
pub fn min_support_entry<R: AsRef<[f64]>>(p: &[R]) -> f64 {
    p.iter()
        .flat_map(|r| r.as_ref().iter().copied())
        .filter(|&x| x > 0.0)
        .fold(f64::INFINITY, f64::min)
}

/// Constants for the learning-rate variants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaConstants {
    pub alpha: f64,
    /// `N_alpha = n - 1`
    pub n_mix_alpha: usize,
    /// `min(alpha delta', (1 - alpha) gamma)`
    pub delta_prime_alpha: f64,
    /// `[(1 - alpha)/gamma + alpha]^N_alpha - n delta'_alpha^N_alpha`
    pub tau_alpha: f64,
    /// `n delta'_alpha^N_alpha`
    pub deficit_alpha: f64,
    /// `gamma^N_alpha tau_alpha`, the certified contraction per window.
    pub window_factor: f64,
    /// The certificate promises nothing beyond plain damped contraction.
    pub vacuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremConstants {
    pub n_states: usize,
    /// Discount used in the backups (1 for the average criterion).
    pub gamma: f64,
    pub delta: f64,
    pub delta_prime: f64,
    pub n_mix: usize,
    pub tau: f64,
    /// `n delta'^N`, i.e. `1 - tau` without cancellation.
    pub tau_deficit: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Upper bound on `span(e_0)` used to floor the mixing weights.
    pub span_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<AlphaConstants>,
}

impl TheoremConstants {
    /// `gamma^N tau`, the certified span contraction over `N` iterations.
    pub fn window_factor(&self) -> f64 {
        self.gamma.powi(self.n_mix as i32) * (1.0 - self.tau_deficit)
    }

    /// `gamma tau^(1/N)`.
    pub fn guaranteed_rate_per_iter(&self) -> f64 {
        self.gamma * ((-self.tau_deficit).ln_1p() / self.n_mix as f64).exp()
    }

    /// `log(1/tau)`, accurate for `tau` near 1.
    pub fn log_inv_tau(&self) -> f64 {
        -(-self.tau_deficit).ln_1p()
    }

    /// Action-gap threshold on `span(e_t)` below which greedy policies are
    /// optimal: `delta / (1 + gamma)`.
    pub fn lock_in_threshold(&self) -> f64 {
        self.delta / (1.0 + self.gamma)
    }
}

/// Outcome of checking the ergodicity and uniqueness assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub ergodic: ErgodicCheck,
    /// Action gap, `None` when unbounded (single-action MDP).
    pub delta: Option<f64>,
    pub unique_optimal: bool,
    pub violations: Vec<String>,
}

/// Assumption checks plus constants, when they exist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub assumptions: AssumptionReport,
    pub constants: Option<TheoremConstants>,
    pub guaranteed_rate_per_iter: Option<f64>,
}

pub fn check_assumptions(mdp: &Mdp, spec: DiscountSpec, optimum: &OptimalSolution) -> AssumptionReport {
    let p_star = mdp.policy_matrix(&optimum.policy);
    let ergodic = check_ergodic(&p_star);
    let gap = assumption2_gap(mdp, spec.gamma(), &optimum.values, &optimum.policy);
    let mut violations = Vec::new();
    if !ergodic.is_ergodic {
        violations.push(format!(
            "{}: the optimal chain is not irreducible and aperiodic",
            Assumption::Ergodic
        ));
    }
    let unique_optimal = gap > MIN_GAP;
    if !unique_optimal {
        violations.push(format!(
            "{}: action gap {gap:e} is not positive",
            Assumption::UniqueOptimal
        ));
    }
    AssumptionReport {
        ergodic,
        delta: gap.is_finite().then_some(gap),
        unique_optimal,
        violations,
    }
}

/// Assumption report and, when both assumptions hold, the constants.
pub fn certify(mdp: &Mdp, spec: DiscountSpec, optimum: &OptimalSolution) -> Certificate {
    let assumptions = check_assumptions(mdp, spec, optimum);
    let constants = match theorem1_constants(mdp, spec, optimum) {
        Ok(c) => Some(c),
        Err(e) => {
            log::info!("no convergence constants: {e}");
            None
        }
    };
    let guaranteed_rate_per_iter = constants.as_ref().map(|c| c.guaranteed_rate_per_iter());
    Certificate {
        assumptions,
        constants,
        guaranteed_rate_per_iter,
    }
}

/// `delta`, `delta'`, `N` and `tau` for synchronous value iteration.
///
/// `delta' = delta / S * min_{P*>0} P*`, where `S` bounds `span(e_0)` for a
/// zero start: `(r_max - r_min)/(1 - gamma)` when discounted and `span(h*)`
/// for the average criterion. The minimum runs over the support of `P*`.
pub fn theorem1_constants(
    mdp: &Mdp,
    spec: DiscountSpec,
    optimum: &OptimalSolution,
) -> Result<TheoremConstants> {
    let n = mdp.n_states();
    let gamma = spec.gamma();
    let p_star = mdp.policy_matrix(&optimum.policy);
    let ergodic = check_ergodic(&p_star);
    let n_mix = ergodic.n_mix.ok_or_else(|| Error::AssumptionViolated {
        assumption: Assumption::Ergodic,
        detail: "the optimal chain is not irreducible and aperiodic".into(),
    })?;
    let delta = assumption2_gap(mdp, gamma, &optimum.values, &optimum.policy);
    if !(delta > MIN_GAP) {
        return Err(Error::AssumptionViolated {
            assumption: Assumption::UniqueOptimal,
            detail: format!("action gap {delta:e} is not positive"),
        });
    }
    let (r_min, r_max) = mdp.reward_range();
    if !(r_max > r_min) {
        return Err(Error::Usage(
            "constant rewards: r_max - r_min = 0 leaves delta' undefined".into(),
        ));
    }
    let span_bound = match spec {
        DiscountSpec::Discounted { gamma } => (r_max - r_min) / (1.0 - gamma),
        DiscountSpec::Average => span_unchecked(&optimum.values),
    };
    let weight = if delta.is_finite() && span_bound > 0.0 {
        (delta / span_bound).min(1.0)
    } else {
        1.0
    };
    let delta_prime = weight * min_support_entry(&p_star);
    let tau_deficit = (n as f64).ln() + n_mix as f64 * delta_prime.ln();
    let tau_deficit = tau_deficit.exp();
    if !(tau_deficit > 0.0 && tau_deficit < 1.0) {
        return Err(Error::Numerical(format!(
            "tau = 1 - {tau_deficit:e} falls outside (0, 1)"
        )));
    }
    Ok(TheoremConstants {
        n_states: n,
        gamma,
        delta,
        delta_prime,
        n_mix,
        tau: 1.0 - tau_deficit,
        tau_deficit,
        r_min,
        r_max,
        span_bound,
        alpha: None,
    })
}

/// Learning-rate constants `N_alpha`, `delta'_alpha`, `tau_alpha` on top of
/// the synchronous ones.
pub fn theorem2_constants(alpha: f64, base: &TheoremConstants) -> Result<TheoremConstants> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Usage(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let gamma = base.gamma;
    let n = base.n_states;
    let n_mix_alpha = n.saturating_sub(1);
    let k = n_mix_alpha as i32;
    let delta_prime_alpha = (alpha * base.delta_prime).min((1.0 - alpha) * gamma);
    let deficit_alpha = n as f64 * delta_prime_alpha.powi(k);
    let tau_alpha = ((1.0 - alpha) / gamma + alpha).powi(k) - deficit_alpha;
    // gamma^k tau_alpha, expanded to avoid dividing by gamma
    let window_factor =
        ((1.0 - alpha) + alpha * gamma).powi(k) - n as f64 * (gamma * delta_prime_alpha).powi(k);
    let vacuous = !(window_factor > 0.0 && window_factor < 1.0) || !(deficit_alpha > 0.0);
    Ok(TheoremConstants {
        alpha: Some(AlphaConstants {
            alpha,
            n_mix_alpha,
            delta_prime_alpha,
            tau_alpha,
            deficit_alpha,
            window_factor,
            vacuous,
        }),
        ..base.clone()
    })
}

/// Iterations after which synchronous value iteration with
/// `H = stopping_threshold(spec, eps)` is guaranteed to have stopped.
///
/// Discounted: stopping is forced once `span(e_t) <= eps (1-gamma) / 4`,
/// and `span(e_t) <= gamma^t tau^(t/N) span(e_0)`, giving
/// `(ln(1/eps) + ln(1/(1-gamma)) + ln 4 + ln span(e_0)) / (ln(1/gamma) + ln(1/tau)/N)`.
/// Average: `(ln(1/eps) + ln 2 + ln span(e_0)) / (ln(1/tau)/N)`.
pub fn corollary_iteration_bound(
    spec: DiscountSpec,
    eps: f64,
    span_e0: f64,
    constants: &TheoremConstants,
) -> f64 {
    if span_e0 <= 0.0 {
        return 0.0;
    }
    let mix = constants.log_inv_tau() / constants.n_mix as f64;
    let (numerator, rate) = match spec {
        DiscountSpec::Discounted { gamma } => (
            (1.0 / eps).ln() - (1.0 - gamma).ln() + 4f64.ln() + span_e0.ln(),
            (1.0 / gamma).ln() + mix,
        ),
        DiscountSpec::Average => ((1.0 / eps).ln() + 2f64.ln() + span_e0.ln(), mix),
    };
    (numerator / rate).max(0.0).ceil()
}

/// Iteration cap for a solve: ten times the corollary bound when known,
/// clamped to `[1e3, 1e7]`; otherwise the solver default.
pub fn default_max_iterations(bound: Option<f64>) -> usize {
    match bound {
        Some(b) if b.is_finite() => (10.0 * b).clamp(1e3, 1e7) as usize,
        _ => crate::solvers::DEFAULT_MAX_ITERATIONS,
    }
}
