//! Value iteration in three flavours: synchronous, synchronous with a
//! learning rate, and asynchronous with a learning rate over an update
//! schedule. All of them stop on the span of successive differences and
//! record a full per-iteration trace for the analysis verifiers.

use serde::{Deserialize, Serialize};

use crate::error::{Assumption, Error, Result};
use crate::mdp::{
    best_action, bellman_backup, span_of_diff, DiscountSpec, Mdp, Policy, ValueVector,
};

/// Iteration cap used when nothing better is known.
pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Sync,
    SyncLr,
    AsyncLr,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Sync => "sync",
            Variant::SyncLr => "sync_lr",
            Variant::AsyncLr => "async_lr",
        })
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "sync" => Ok(Variant::Sync),
            "sync_lr" => Ok(Variant::SyncLr),
            "async_lr" => Ok(Variant::AsyncLr),
            other => Err(Error::Usage(format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub spec: DiscountSpec,
    /// Stop once the span of the change falls to this value (`H`).
    pub stop_threshold: f64,
    pub max_iterations: usize,
    /// Initial values; zero when absent.
    pub v0: Option<ValueVector>,
    /// Optimal values used to record `span(e_t)`; the average criterion
    /// takes the bias here.
    pub reference: Option<ValueVector>,
}

impl SolverConfig {
    pub fn sync(spec: DiscountSpec, stop_threshold: f64) -> Result<Self> {
        Self::new(Variant::Sync, 1.0, spec, stop_threshold)
    }

    pub fn sync_lr(spec: DiscountSpec, alpha: f64, stop_threshold: f64) -> Result<Self> {
        Self::new(Variant::SyncLr, alpha, spec, stop_threshold)
    }

    pub fn async_lr(spec: DiscountSpec, alpha: f64, stop_threshold: f64) -> Result<Self> {
        Self::new(Variant::AsyncLr, alpha, spec, stop_threshold)
    }

    pub fn new(variant: Variant, alpha: f64, spec: DiscountSpec, stop_threshold: f64) -> Result<Self> {
        let cfg = SolverConfig {
            variant,
            alpha,
            spec,
            stop_threshold,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            v0: None,
            reference: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn with_v0(mut self, v0: ValueVector) -> Self {
        self.v0 = Some(v0);
        self
    }

    pub fn with_reference(mut self, reference: ValueVector) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn validate(&self) -> Result<()> {
        match self.variant {
            Variant::Sync if self.alpha != 1.0 => {
                return Err(Error::Usage(format!(
                    "sync variant requires alpha = 1, got {}",
                    self.alpha
                )))
            }
            Variant::SyncLr | Variant::AsyncLr if !(self.alpha > 0.0 && self.alpha < 1.0) => {
                return Err(Error::Usage(format!(
                    "{} variant requires alpha in (0, 1), got {}",
                    self.variant, self.alpha
                )))
            }
            _ => {}
        }
        if !(self.stop_threshold > 0.0) {
            return Err(Error::Usage(format!(
                "stop threshold must be positive, got {}",
                self.stop_threshold
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Usage("max_iterations must be positive".into()));
        }
        if let DiscountSpec::Discounted { gamma } = self.spec {
            DiscountSpec::discounted(gamma)?;
        }
        Ok(())
    }

    fn initial_values(&self, mdp: &Mdp) -> Result<Vec<f64>> {
        match &self.v0 {
            Some(v) => {
                mdp.check_len(v.len())?;
                Ok(v.to_vec())
            }
            None => Ok(vec![0.0; mdp.n_states()]),
        }
    }
}

/// A periodic sequence of state subsets; block `t mod B` is updated at
/// iteration `t`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateSchedule {
    blocks: Vec<Vec<usize>>,
}

impl UpdateSchedule {
    pub fn new(blocks: Vec<Vec<usize>>) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::Usage("update schedule has no blocks".into()));
        }
        Ok(UpdateSchedule { blocks })
    }

    /// Every state updated at every step, over a period of `n` steps.
    pub fn full(n: usize) -> Self {
        UpdateSchedule {
            blocks: vec![(0..n).collect(); n.max(1)],
        }
    }

    pub fn period(&self) -> usize {
        self.blocks.len()
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    pub fn block(&self, t: usize) -> &[usize] {
        &self.blocks[t % self.blocks.len()]
    }

    /// Update count per state over one period. Any `B` consecutive
    /// iterations of a `B`-periodic schedule cover exactly one period.
    pub fn update_counts(&self, n_states: usize) -> Result<Vec<usize>> {
        let mut counts = vec![0; n_states];
        for (t, block) in self.blocks.iter().enumerate() {
            for &s in block {
                *counts.get_mut(s).ok_or_else(|| {
                    Error::Usage(format!(
                        "schedule block {t} names state {s}, but there are {n_states} states"
                    ))
                })? += 1;
            }
        }
        Ok(counts)
    }

    /// Checks that every state is updated at least `n_states` times per period.
    pub fn validate(&self, n_states: usize) -> Result<()> {
        let counts = self.update_counts(n_states)?;
        if let Some((s, &c)) = counts.iter().enumerate().find(|(_, &c)| c < n_states) {
            return Err(Error::AssumptionViolated {
                assumption: Assumption::UpdateFrequency,
                detail: format!(
                    "state {s} is updated {c} times per period of {}, need at least {n_states}",
                    self.period()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Threshold,
    MaxIterations,
}

/// One iteration `t -> t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    /// `V_t`
    pub values: ValueVector,
    /// Greedy policy at `V_t` over all states.
    pub greedy: Policy,
    /// `span(V_{t+1} - V_t)`
    pub span_diff: f64,
    /// `span(V_t - V*)` when a reference was supplied.
    pub span_err: Option<f64>,
    /// States whose value was recomputed at this step.
    pub updated: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub variant: Variant,
    pub alpha: f64,
    pub spec: DiscountSpec,
    pub stop_threshold: f64,
    /// Schedule period for the asynchronous variant.
    pub period: Option<usize>,
    pub steps: Vec<Step>,
    /// `V_T` after the last step.
    pub final_values: ValueVector,
    pub final_span_err: Option<f64>,
    /// Greedy policy at `V_T`.
    pub policy: Policy,
    pub termination: Termination,
    /// Span that drove the final stopping decision.
    pub final_span: f64,
}

impl SolveTrace {
    pub fn iterations(&self) -> usize {
        self.steps.len()
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Threshold
    }

    /// `V_t` for `t = 0..=T`.
    pub fn values(&self, t: usize) -> &ValueVector {
        if t == self.steps.len() {
            &self.final_values
        } else {
            &self.steps[t].values
        }
    }

    /// `span(e_t)` for `t = 0..=T`, if a reference was supplied.
    pub fn error_spans(&self) -> Option<Vec<f64>> {
        let mut out: Vec<f64> = self
            .steps
            .iter()
            .map(|s| s.span_err)
            .collect::<Option<_>>()?;
        out.push(self.final_span_err?);
        Some(out)
    }

    pub fn diff_spans(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.span_diff).collect()
    }

    pub fn policy_changed(&self, t: usize) -> bool {
        t > 0 && self.steps[t].greedy != self.steps[t - 1].greedy
    }
}

/// Stopping threshold `H` that guarantees an `eps`-optimal output policy:
/// `eps (1 - gamma) / gamma` when discounted, `eps` for the average criterion.
///
/// With `gamma = 0` one backup is already exact, so `eps` is returned.
pub fn stopping_threshold(spec: DiscountSpec, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Usage(format!("eps must be positive, got {eps}")));
    }
    Ok(match spec {
        DiscountSpec::Discounted { gamma } if gamma == 0.0 => eps,
        DiscountSpec::Discounted { gamma } => eps * (1.0 - gamma) / gamma,
        DiscountSpec::Average => eps,
    })
}

/// Classical value iteration, `V_{t+1} = T V_t`.
pub fn vi_sync(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveTrace> {
    cfg.validate()?;
    if cfg.variant != Variant::Sync {
        return Err(Error::Usage(format!("vi_sync called with {} config", cfg.variant)));
    }
    run_synchronous(mdp, cfg, 1.0)
}

/// Damped value iteration, `V_{t+1} = (1 - alpha) V_t + alpha T V_t`.
pub fn vi_sync_lr(mdp: &Mdp, cfg: &SolverConfig) -> Result<SolveTrace> {
    cfg.validate()?;
    if cfg.variant != Variant::SyncLr {
        return Err(Error::Usage(format!("vi_sync_lr called with {} config", cfg.variant)));
    }
    run_synchronous(mdp, cfg, cfg.alpha)
}

/// Asynchronous damped value iteration: only states in the current schedule
/// block are updated. The stopping test compares values one full schedule
/// period apart.
pub fn vi_async_lr(mdp: &Mdp, cfg: &SolverConfig, schedule: &UpdateSchedule) -> Result<SolveTrace> {
    cfg.validate()?;
    if cfg.variant != Variant::AsyncLr {
        return Err(Error::Usage(format!("vi_async_lr called with {} config", cfg.variant)));
    }
    schedule.validate(mdp.n_states())?;

    let gamma = cfg.spec.gamma();
    let alpha = cfg.alpha;
    let period = schedule.period();
    let mut v = cfg.initial_values(mdp)?;
    let mut checkpoint = v.clone();
    let mut steps = Vec::new();
    let mut final_span = f64::INFINITY;
    let mut termination = Termination::MaxIterations;

    for t in 0..cfg.max_iterations {
        let (_, greedy) = bellman_backup(mdp, &v, cfg.spec)?;
        let mut next = v.clone();
        let block = schedule.block(t);
        for &s in block {
            let (_, q) = best_action(mdp, s, &v, gamma);
            next[s] = (1.0 - alpha) * v[s] + alpha * q;
        }
        let span_diff = span_of_diff(&next, &v);
        let span_err = cfg.reference.as_ref().map(|r| span_of_diff(&v, r));
        let mut updated = block.to_vec();
        updated.sort_unstable();
        updated.dedup();
        steps.push(Step {
            values: ValueVector::new(std::mem::replace(&mut v, next))?,
            greedy,
            span_diff,
            span_err,
            updated,
        });
        if (t + 1) % period == 0 {
            final_span = span_of_diff(&v, &checkpoint);
            checkpoint.clone_from(&v);
            if final_span <= cfg.stop_threshold {
                termination = Termination::Threshold;
                break;
            }
        }
    }
    finish(mdp, cfg, Some(period), steps, v, termination, final_span)
}

fn run_synchronous(mdp: &Mdp, cfg: &SolverConfig, alpha: f64) -> Result<SolveTrace> {
    let mut v = cfg.initial_values(mdp)?;
    let all: Vec<usize> = (0..mdp.n_states()).collect();
    let mut steps = Vec::new();
    let mut final_span = f64::INFINITY;
    let mut termination = Termination::MaxIterations;

    for _ in 0..cfg.max_iterations {
        let (tv, greedy) = bellman_backup(mdp, &v, cfg.spec)?;
        let next: Vec<f64> = if alpha == 1.0 {
            tv.into_inner()
        } else {
            v.iter()
                .zip(tv.iter())
                .map(|(old, new)| (1.0 - alpha) * old + alpha * new)
                .collect()
        };
        let span_diff = span_of_diff(&next, &v);
        let span_err = cfg.reference.as_ref().map(|r| span_of_diff(&v, r));
        steps.push(Step {
            values: ValueVector::new(std::mem::replace(&mut v, next))?,
            greedy,
            span_diff,
            span_err,
            updated: all.clone(),
        });
        final_span = span_diff;
        if span_diff <= cfg.stop_threshold {
            termination = Termination::Threshold;
            break;
        }
    }
    finish(mdp, cfg, None, steps, v, termination, final_span)
}

fn finish(
    mdp: &Mdp,
    cfg: &SolverConfig,
    period: Option<usize>,
    steps: Vec<Step>,
    v: Vec<f64>,
    termination: Termination,
    final_span: f64,
) -> Result<SolveTrace> {
    let final_values = ValueVector::new(v)?;
    let policy = crate::mdp::greedy_policy(mdp, &final_values, cfg.spec)?;
    let final_span_err = cfg
        .reference
        .as_ref()
        .map(|r| span_of_diff(&final_values, r));
    if termination == Termination::MaxIterations {
        log::warn!(
            "{} stopped after {} iterations without reaching H = {:e}",
            cfg.variant,
            steps.len(),
            cfg.stop_threshold
        );
    }
    Ok(SolveTrace {
        variant: cfg.variant,
        alpha: cfg.alpha,
        spec: cfg.spec,
        stop_threshold: cfg.stop_threshold,
        period,
        steps,
        final_values,
        final_span_err,
        policy,
        termination,
        final_span,
    })
}

/// Runs whichever variant `cfg` names; the asynchronous one needs a schedule.
pub fn solve(mdp: &Mdp, cfg: &SolverConfig, schedule: Option<&UpdateSchedule>) -> Result<SolveTrace> {
    match cfg.variant {
        Variant::Sync => vi_sync(mdp, cfg),
        Variant::SyncLr => vi_sync_lr(mdp, cfg),
        Variant::AsyncLr => {
            let schedule = schedule.ok_or_else(|| {
                Error::Usage("async_lr variant requires an update schedule".into())
            })?;
            vi_async_lr(mdp, cfg, schedule)
        }
    }
}

/// Estimate of `V*` from any iterate `v` of a discounted problem: with
/// `d = T v - v`, `V*` lies between `T v + gamma/(1-gamma) min(d)` and
/// `T v + gamma/(1-gamma) max(d)`; the midpoint is returned.
pub fn extrapolate_optimal_values(mdp: &Mdp, v: &[f64], gamma: f64) -> Result<ValueVector> {
    let spec = DiscountSpec::discounted(gamma)?;
    let (tv, _) = bellman_backup(mdp, v, spec)?;
    let d = tv.sub(&ValueVector::new(v.to_vec())?);
    let shift = gamma / (1.0 - gamma) * 0.5 * (d.max() + d.min());
    ValueVector::new(tv.iter().map(|x| x + shift).collect())
}
