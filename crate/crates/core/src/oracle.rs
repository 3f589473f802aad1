//! Exact policy evaluation and exact optimal solutions.
//!
//! These are the reference values every error vector `e_t = V_t - V*` is
//! measured against, so they never go through value iteration: discounted
//! instances are solved by Howard policy iteration, average-reward instances
//! by enumerating deterministic policies.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{best_action, DiscountSpec, Mdp, Policy, ValueVector};
use crate::pattern::BoolMatrix;

/// Relative residual accepted from a linear solve.
pub const SOLVE_RESIDUAL_TOL: f64 = 1e-10;
/// Tolerance on `||T V* - V*||_inf` for an accepted optimum.
pub const FIXED_POINT_TOL: f64 = 1e-9;
/// Largest policy count the average-criterion enumeration will visit.
pub const ENUMERATION_CAP: u64 = 1_000_000;

/// `V*`, an optimal policy and, for the average criterion, the optimal gain.
///
/// Average-criterion `values` hold the bias `h*` normalized to `min(h*) = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalSolution {
    pub values: ValueVector,
    pub policy: Policy,
    pub gain: Option<f64>,
}

/// Solves `A x = b` by LU with two rounds of iterative refinement.
fn solve_refined(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::Numerical("singular linear system".into()))?;
    for _ in 0..2 {
        let r = b - a * &x;
        match lu.solve(&r) {
            Some(dx) => x += dx,
            None => break,
        }
    }
    Ok(x)
}

/// Unique solution of `V = r_pi + gamma P_pi V`.
pub fn policy_evaluation_discounted(mdp: &Mdp, pi: &Policy, gamma: f64) -> Result<ValueVector> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::Usage(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    let n = mdp.n_states();
    mdp.check_len(pi.len())?;
    let a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - gamma * mdp.row(i, pi[i])[j]
    });
    let b = DVector::from_vec(mdp.policy_rewards(pi));
    let x = solve_refined(&a, &b)?;

    let v: Vec<f64> = x.iter().copied().collect();
    let norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let residual = (0..n)
        .map(|s| (mdp.q_value(s, pi[s], &v, gamma) - v[s]).abs())
        .fold(0.0, f64::max);
    if residual > SOLVE_RESIDUAL_TOL * (1.0 + norm) {
        return Err(Error::Numerical(format!(
            "policy evaluation residual {residual:e} exceeds tolerance"
        )));
    }
    ValueVector::new(v)
}

/// Gain and bias of a unichain policy.
///
/// The gain is `mu . r_pi` for the stationary distribution `mu`; the bias
/// solves `(I - P_pi) h = r_pi - gain` normalized so that `min(h) = 0`.
pub fn policy_evaluation_average(mdp: &Mdp, pi: &Policy) -> Result<(f64, ValueVector)> {
    let n = mdp.n_states();
    mdp.check_len(pi.len())?;
    let p = mdp.policy_matrix(pi);
    let classes = BoolMatrix::support(&p).recurrent_classes();
    if classes.len() != 1 {
        return Err(Error::Multichain {
            classes: classes.len(),
        });
    }
    let r = mdp.policy_rewards(pi);

    // mu (I - P) = 0 with the last equation swapped for sum(mu) = 1
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - p[j][i]
    });
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let mu = solve_refined(&a, &rhs)?;
    let gain: f64 = mu.iter().zip(&r).map(|(m, r)| m * r).sum();

    // Pin h at the most probable (hence recurrent) state, where dropping the
    // equation keeps the system non-singular.
    let pin = mu.imax();
    let mut a = DMatrix::from_fn(n, n, |i, j| {
        let id = if i == j { 1.0 } else { 0.0 };
        id - p[i][j]
    });
    let mut rhs = DVector::from_iterator(n, r.iter().map(|r| r - gain));
    for j in 0..n {
        a[(pin, j)] = if j == pin { 1.0 } else { 0.0 };
    }
    rhs[pin] = 0.0;
    let h = solve_refined(&a, &rhs)?;
    let lo = h.min();
    let bias: Vec<f64> = h.iter().map(|x| x - lo).collect();

    let scale = 1.0 + bias.iter().fold(gain.abs(), |m, x| m.max(x.abs()));
    let residual = (0..n)
        .map(|s| (mdp.q_value(s, pi[s], &bias, 1.0) - gain - bias[s]).abs())
        .fold(0.0, f64::max);
    if residual > SOLVE_RESIDUAL_TOL * scale {
        return Err(Error::Numerical(format!(
            "average evaluation residual {residual:e} exceeds tolerance"
        )));
    }
    Ok((gain, ValueVector::new(bias)?))
}

/// Exact optimal values and policy.
pub fn exact_optimal(mdp: &Mdp, spec: DiscountSpec) -> Result<OptimalSolution> {
    match spec {
        DiscountSpec::Discounted { gamma } => policy_iteration(mdp, gamma),
        DiscountSpec::Average => enumerate_average(mdp),
    }
}

fn policy_iteration(mdp: &Mdp, gamma: f64) -> Result<OptimalSolution> {
    let n = mdp.n_states();
    let zero = vec![0.0; n];
    let mut pi: Vec<usize> = (0..n).map(|s| best_action(mdp, s, &zero, 0.0).0).collect();
    // Howard iteration terminates in at most m^n improvements
    let max_rounds = 10_000;
    for _ in 0..max_rounds {
        let policy = Policy::from_raw(pi.clone());
        let v = policy_evaluation_discounted(mdp, &policy, gamma)?;
        let tol = 1e-12 * (1.0 + v.sup_norm());
        let mut changed = false;
        for s in 0..n {
            let current = mdp.q_value(s, pi[s], &v, gamma);
            let (a, q) = best_action(mdp, s, &v, gamma);
            if q > current + tol {
                pi[s] = a;
                changed = true;
            }
        }
        if !changed {
            let residual = (0..n)
                .map(|s| (best_action(mdp, s, &v, gamma).1 - v[s]).abs())
                .fold(0.0, f64::max);
            if residual > FIXED_POINT_TOL {
                return Err(Error::Numerical(format!(
                    "policy iteration fixed point residual {residual:e}"
                )));
            }
            return Ok(OptimalSolution {
                values: v,
                policy,
                gain: None,
            });
        }
    }
    Err(Error::Numerical(
        "policy iteration did not terminate".into(),
    ))
}

fn enumerate_average(mdp: &Mdp) -> Result<OptimalSolution> {
    let n = mdp.n_states();
    let m = mdp.n_actions();
    let count = (m as u64)
        .checked_pow(n as u32)
        .filter(|&c| c <= ENUMERATION_CAP)
        .ok_or_else(|| {
            Error::Capability(format!(
                "average-criterion enumeration needs {m}^{n} policies (cap {ENUMERATION_CAP})"
            ))
        })?;

    let mut actions = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>, ValueVector)> = None;
    for _ in 0..count {
        let pi = Policy::from_raw(actions.clone());
        let (gain, bias) = policy_evaluation_average(mdp, &pi)?;
        // strict improvement keeps the lexicographically first maximizer
        let better = best
            .as_ref()
            .is_none_or(|(g, _, _)| gain > g + 1e-12 * (1.0 + g.abs()));
        if better {
            best = Some((gain, actions.clone(), bias));
        }
        // odometer increment, state 0 fastest
        for a in actions.iter_mut() {
            *a += 1;
            if *a < m {
                break;
            }
            *a = 0;
        }
    }
    let (gain, actions, bias) = best.expect("at least one policy");
    Ok(OptimalSolution {
        values: bias,
        policy: Policy::from_raw(actions),
        gain: Some(gain),
    })
}

/// Whether `pi` is `eps`-optimal: pointwise value loss (discounted) or gain
/// loss (average) at most `eps`.
pub fn is_eps_optimal(
    mdp: &Mdp,
    pi: &Policy,
    spec: DiscountSpec,
    eps: f64,
    optimum: &OptimalSolution,
) -> Result<bool> {
    Ok(policy_loss(mdp, pi, spec, optimum)? <= eps)
}

/// `max_s V*(s) - V^pi(s)` (discounted) or `g* - g_pi` (average).
pub fn policy_loss(
    mdp: &Mdp,
    pi: &Policy,
    spec: DiscountSpec,
    optimum: &OptimalSolution,
) -> Result<f64> {
    match spec {
        DiscountSpec::Discounted { gamma } => {
            let v = policy_evaluation_discounted(mdp, pi, gamma)?;
            Ok(optimum.values.sub(&v).max())
        }
        DiscountSpec::Average => {
            let g_star = optimum.gain.ok_or_else(|| {
                Error::Usage("average-criterion optimum carries no gain".into())
            })?;
            let (g, _) = policy_evaluation_average(mdp, pi)?;
            Ok(g_star - g)
        }
    }
}
