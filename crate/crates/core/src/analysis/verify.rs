//! Trace-level checks of the convergence bounds.
//!
//! Every verifier returns a [`CheckReport`]; hard checks gate `pass`, soft
//! ones are informational.

use serde::{Deserialize, Serialize};

use super::constants::TheoremConstants;
use crate::mdp::{dot, DiscountSpec, Mdp};
use crate::oracle::OptimalSolution;
use crate::solvers::{SolveTrace, Variant};

/// Absolute slack on every inequality.
pub const CHECK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
    NotApplicable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub hard: bool,
    pub status: CheckStatus,
    /// Bound value (a factor or a slack, see `detail`).
    pub bound: Option<f64>,
    /// Worst observed value against `bound`.
    pub observed: Option<f64>,
    pub windows: usize,
    pub violations: usize,
    pub max_violation: f64,
    pub detail: String,
}

impl CheckReport {
    fn new(check: &str, hard: bool) -> Self {
        CheckReport {
            check: check.into(),
            hard,
            status: CheckStatus::Pass,
            bound: None,
            observed: None,
            windows: 0,
            violations: 0,
            max_violation: 0.0,
            detail: String::new(),
        }
    }

    fn with_status(mut self, status: CheckStatus, detail: impl Into<String>) -> Self {
        self.status = status;
        self.detail = detail.into();
        self
    }

    /// Records `lhs <= rhs + CHECK_TOL`.
    fn record(&mut self, lhs: f64, rhs: f64) {
        self.windows += 1;
        let excess = lhs - rhs;
        if excess > CHECK_TOL {
            self.violations += 1;
        }
        self.max_violation = self.max_violation.max(excess);
    }

    fn finish(mut self) -> Self {
        if self.status == CheckStatus::Pass && self.violations > 0 {
            self.status = CheckStatus::Fail;
        }
        self
    }

    /// False only for a failed hard check.
    pub fn ok(&self) -> bool {
        !(self.hard && self.status == CheckStatus::Fail)
    }
}

/// First `t` with `span(e_t) < delta / (1 + gamma)`.
pub fn lock_in_index(error_spans: &[f64], constants: &TheoremConstants) -> Option<usize> {
    let threshold = constants.lock_in_threshold();
    error_spans.iter().position(|&s| s < threshold)
}

/// Ratio of spans `w` apart with the worst `observed / bound` tracked as
/// the observed value.
fn window_check(
    report: &mut CheckReport,
    spans: &[f64],
    range: std::ops::Range<usize>,
    window: usize,
    factor: f64,
) {
    let mut worst: Option<f64> = None;
    for t in range {
        if t + window >= spans.len() {
            break;
        }
        report.record(spans[t + window], factor * spans[t]);
        if spans[t] > 0.0 {
            let ratio = spans[t + window] / spans[t];
            worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
        }
    }
    report.bound = Some(factor);
    report.observed = worst;
}

/// Window bound `span(e_{t+N}) <= gamma^N tau span(e_t)` after lock-in, and
/// the plain `gamma^N` bound before it.
pub fn verify_theorem1(trace: &SolveTrace, constants: &TheoremConstants) -> Vec<CheckReport> {
    let post = CheckReport::new("theorem1_window", true);
    let pre = CheckReport::new("theorem1_pre_lock_in_gamma", true);
    if trace.variant != Variant::Sync {
        let why = "requires a synchronous trace without learning rate";
        return vec![
            post.with_status(CheckStatus::NotApplicable, why),
            pre.with_status(CheckStatus::NotApplicable, why),
        ];
    }
    let Some(spans) = trace.error_spans() else {
        let why = "trace carries no error spans";
        return vec![
            post.with_status(CheckStatus::Inconclusive, why),
            pre.with_status(CheckStatus::Inconclusive, why),
        ];
    };
    let n = constants.n_mix;
    if spans.len() < n + 1 {
        let why = format!("{} iterates, windows need {}", spans.len(), n + 1);
        return vec![
            post.with_status(CheckStatus::Inconclusive, why.clone()),
            pre.with_status(CheckStatus::Inconclusive, why),
        ];
    }
    let lock = lock_in_index(&spans, constants).unwrap_or(spans.len());
    let mut post = post;
    let mut pre = pre;
    window_check(&mut post, &spans, lock..spans.len(), n, constants.window_factor());
    window_check(&mut pre, &spans, 0..lock, n, constants.gamma.powi(n as i32));
    if post.windows == 0 {
        post = post.with_status(CheckStatus::Inconclusive, "no complete window after lock-in");
    } else {
        post.detail = format!("lock-in at t = {lock}; N = {n}");
    }
    if pre.windows == 0 {
        pre.detail = "no window before lock-in".into();
    }
    vec![post.finish(), pre.finish()]
}

/// `span(e_{t+N_a}) <= gamma^N_a tau_a span(e_t)` after lock-in for damped
/// traces. A vacuous certificate is reported as not applicable.
pub fn verify_theorem2(trace: &SolveTrace, constants: &TheoremConstants) -> CheckReport {
    let report = CheckReport::new("theorem2_window", true);
    let Some(a) = constants.alpha.as_ref() else {
        return report.with_status(CheckStatus::NotApplicable, "no learning-rate constants");
    };
    if trace.variant != Variant::SyncLr || trace.alpha != a.alpha {
        return report.with_status(
            CheckStatus::NotApplicable,
            "requires a synchronous learning-rate trace with matching alpha",
        );
    }
    if a.vacuous {
        let mut r = report.with_status(
            CheckStatus::NotApplicable,
            format!("vacuous certificate: gamma^N tau_alpha = {:e}", a.window_factor),
        );
        r.bound = Some(a.window_factor);
        return r;
    }
    let Some(spans) = trace.error_spans() else {
        return report.with_status(CheckStatus::Inconclusive, "trace carries no error spans");
    };
    let w = a.n_mix_alpha;
    let lock = lock_in_index(&spans, constants).unwrap_or(spans.len());
    let mut report = report;
    window_check(&mut report, &spans, lock..spans.len(), w, a.window_factor);
    if report.windows == 0 {
        return report.with_status(CheckStatus::Inconclusive, "no complete window after lock-in");
    }
    report.detail = format!("lock-in at t = {lock}; N_alpha = {w}");
    report.finish()
}

/// Asynchronous window bound over schedule periods.
///
/// The average criterion is checked hard: `span(e_{t+B}) <= tau' span(e_t)`.
/// When discounted only a soft report of
/// `span(e_B) <= gamma^N tau' span(e_0) + (1 - gamma^B) min(e_0)` is produced.
/// `tau'` is instantiated as `tau_alpha`, which is a heuristic.
pub fn verify_theorem3(
    trace: &SolveTrace,
    constants: &TheoremConstants,
    optimum: &OptimalSolution,
) -> CheckReport {
    let average = trace.spec.is_average();
    let report = CheckReport::new("theorem3_window", average);
    let Some(a) = constants.alpha.as_ref() else {
        return report.with_status(CheckStatus::NotApplicable, "no learning-rate constants");
    };
    let Some(period) = trace.period.filter(|_| trace.variant == Variant::AsyncLr) else {
        return report.with_status(CheckStatus::NotApplicable, "requires an asynchronous trace");
    };
    let gamma = trace.spec.gamma();
    let drift = drift_per_step(trace, optimum);
    let iterates = trace.iterations() + 1;
    let errors = |t: usize| -> Vec<f64> {
        let v = trace.values(t);
        let shift = drift * t as f64;
        v.iter()
            .zip(optimum.values.iter())
            .map(|(v, s)| v - s - shift)
            .collect()
    };
    let span = |e: &[f64]| crate::mdp::span_unchecked(e);
    let mut report = report;
    let tau_prime = 1.0 - a.deficit_alpha;
    let k = a.n_mix_alpha as i32;
    let mut worst: Option<f64> = None;
    let mut t = 0;
    while t + period < iterates {
        let e0 = errors(t);
        let e_b = errors(t + period);
        let (s0, sb) = (span(&e0), span(&e_b));
        let rhs = if average {
            tau_prime * s0
        } else {
            let min_e0 = e0.iter().copied().fold(f64::INFINITY, f64::min);
            gamma.powi(k) * a.tau_alpha * s0 + (1.0 - gamma.powi(period as i32)) * min_e0
        };
        report.record(sb, rhs);
        if s0 > 0.0 {
            let ratio = sb / s0;
            worst = Some(worst.map_or(ratio, |w: f64| w.max(ratio)));
        }
        t += period;
    }
    report.observed = worst;
    report.bound = Some(if average { tau_prime } else { gamma.powi(k) * a.tau_alpha });
    report.detail = format!(
        "B = {period}; tau' = tau_alpha (heuristic){}",
        if average { "" } else { "; soft check" }
    );
    if report.windows == 0 {
        return report.with_status(CheckStatus::Inconclusive, "trace shorter than one period");
    }
    report.finish()
}

/// `span(V_t - V_{t+1}) <= (1 + gamma) span(e_t)` at every step.
pub fn verify_lemma2(trace: &SolveTrace) -> CheckReport {
    let mut report = CheckReport::new("lemma2_span_relation", true);
    let gamma = trace.spec.gamma();
    if trace.variant == Variant::AsyncLr && !trace.spec.is_average() {
        return report.with_status(
            CheckStatus::NotApplicable,
            "partial discounted updates are not shift-invariant",
        );
    }
    let Some(spans) = trace.error_spans() else {
        return report.with_status(CheckStatus::Inconclusive, "trace carries no error spans");
    };
    let mut worst: Option<f64> = None;
    for (t, step) in trace.steps.iter().enumerate() {
        report.record(step.span_diff, (1.0 + gamma) * spans[t]);
        if spans[t] > 0.0 {
            let r = step.span_diff / spans[t];
            worst = Some(worst.map_or(r, |w: f64| w.max(r)));
        }
    }
    report.bound = Some(1.0 + gamma);
    report.observed = worst;
    if report.windows == 0 {
        return report.with_status(CheckStatus::Inconclusive, "empty trace");
    }
    report.finish()
}

/// Per-step drift of the values under the average criterion (`alpha g*`),
/// zero when discounted.
fn drift_per_step(trace: &SolveTrace, optimum: &OptimalSolution) -> f64 {
    match (trace.spec, optimum.gain) {
        (DiscountSpec::Average, Some(g)) if trace.variant != Variant::AsyncLr => trace.alpha * g,
        _ => 0.0,
    }
}

/// Elementwise error sandwich on synchronous traces:
/// `(1-a) e_t + a gamma P* e_t <= e_{t+1} <= (1-a) e_t + a gamma P_t e_t`,
/// which for `a = 1` reads `gamma P* e_t <= e_{t+1} <= gamma P_t e_t`.
///
/// `P_t` is the greedy policy recorded at step `t`. Under the average
/// criterion the error is taken relative to `h* + a g* t`.
pub fn verify_sandwich(mdp: &Mdp, trace: &SolveTrace, optimum: &OptimalSolution) -> CheckReport {
    let mut report = CheckReport::new("error_sandwich", true);
    if trace.variant == Variant::AsyncLr {
        return report.with_status(CheckStatus::NotApplicable, "requires a synchronous trace");
    }
    if trace.spec.is_average() && optimum.gain.is_none() {
        return report.with_status(CheckStatus::Inconclusive, "average optimum lacks a gain");
    }
    let gamma = trace.spec.gamma();
    let alpha = trace.alpha;
    let drift = drift_per_step(trace, optimum);
    let n = mdp.n_states();
    let error = |t: usize| -> Vec<f64> {
        let shift = drift * t as f64;
        trace
            .values(t)
            .iter()
            .zip(optimum.values.iter())
            .map(|(v, s)| v - s - shift)
            .collect()
    };
    let mut e = error(0);
    for (t, step) in trace.steps.iter().enumerate() {
        let next = error(t + 1);
        for s in 0..n {
            let star = dot(mdp.row(s, optimum.policy[s]), &e);
            let greedy = dot(mdp.row(s, step.greedy[s]), &e);
            let lower = (1.0 - alpha) * e[s] + alpha * gamma * star;
            let upper = (1.0 - alpha) * e[s] + alpha * gamma * greedy;
            report.record(lower, next[s]);
            report.record(next[s], upper);
        }
        e = next;
    }
    report.bound = Some(0.0);
    report.observed = Some(report.max_violation);
    report.detail = "observed = largest excess over either side".into();
    if report.windows == 0 {
        return report.with_status(CheckStatus::Inconclusive, "empty trace");
    }
    report.finish()
}

/// Once `span(e_t) < delta/(1+gamma)`, every later greedy policy is `pi*`.
pub fn verify_lock_in(
    trace: &SolveTrace,
    constants: &TheoremConstants,
    optimum: &OptimalSolution,
) -> CheckReport {
    let mut report = CheckReport::new("policy_lock_in", true);
    let Some(spans) = trace.error_spans() else {
        return report.with_status(CheckStatus::Inconclusive, "trace carries no error spans");
    };
    let threshold = constants.lock_in_threshold();
    report.bound = Some(threshold);
    let Some(lock) = lock_in_index(&spans, constants) else {
        return report.with_status(CheckStatus::Inconclusive, "error span never fell below the threshold");
    };
    for step in &trace.steps[lock..] {
        report.windows += 1;
        if step.greedy != optimum.policy {
            report.violations += 1;
        }
    }
    report.windows += 1;
    if trace.policy != optimum.policy {
        report.violations += 1;
    }
    report.observed = Some(spans[lock]);
    report.detail = format!("lock-in at t = {lock}");
    report.finish()
}
