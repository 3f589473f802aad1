use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spanvi::analysis::rate::NOISE_FLOOR_EPS;
use spanvi::analysis::{
    estimate_rate_with_floor, lock_in_index, theorem1_constants, theorem2_constants,
    RateEstimate, TheoremConstants,
};
use spanvi::generators::round_robin_schedule;
use spanvi::mdp::span;
use spanvi::solvers::solve;
use spanvi::{exact_optimal, DiscountSpec, Mdp, OptimalSolution, SolveTrace, SolverConfig, Variant};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    NoConvergence(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::NoConvergence(_) => EXIT_NO_CONVERGENCE,
            CliError::Internal(_) => EXIT_INTERNAL,
        }
    }
}

impl From<spanvi::Error> for CliError {
    fn from(e: spanvi::Error) -> Self {
        use spanvi::Error::*;
        match e {
            Numerical(_) | Inconclusive(_) => CliError::Internal(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn read_input(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))
}

pub fn write_output(path: &Path, bytes: impl AsRef<[u8]>) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes)
        .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Loads a fixture, returning it with the SHA-256 of its bytes.
pub fn load_fixture(path: &Path) -> CliResult<(Mdp, String)> {
    let bytes = read_input(path)?;
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| CliError::Input(format!("{} is not UTF-8", path.display())))?;
    let mdp = spanvi::io::mdp_from_json(text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    Ok((mdp, sha256_hex(&bytes)))
}

/// `<stem>.<suffix>` next to `path`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path
        .file_name()
        .map(|f| f.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = stem
        .strip_suffix(".json")
        .or_else(|| stem.strip_suffix(".trace.csv"))
        .unwrap_or(&stem)
        .to_string();
    path.with_file_name(format!("{stem}.{suffix}"))
}

/// Criterion used for a run: `average` strips the discount, `discounted`
/// takes `gamma` or the fixture's own.
pub fn resolve_criterion(
    mdp: Mdp,
    criterion: Option<&str>,
    gamma: Option<f64>,
) -> CliResult<(Mdp, DiscountSpec)> {
    match criterion {
        Some("average") => {
            let mdp = mdp.with_gamma(None)?;
            Ok((mdp, DiscountSpec::Average))
        }
        Some("discounted") | None => {
            let g = gamma.or(mdp.gamma());
            match (g, criterion) {
                (Some(g), _) => {
                    let mdp = mdp.with_gamma(Some(g))?;
                    Ok((mdp, DiscountSpec::discounted(g)?))
                }
                (None, None) => Ok((mdp, DiscountSpec::Average)),
                (None, Some(_)) => Err(CliError::Input(
                    "discounted criterion needs a gamma: the fixture has none, pass --gamma".into(),
                )),
            }
        }
        Some(other) => Err(CliError::Input(format!(
            "unknown criterion `{other}` (expected discounted or average)"
        ))),
    }
}

/// Exact solution when one is computable; `None` otherwise (enumeration
/// cap, multichain).
pub fn try_oracle(mdp: &Mdp, spec: DiscountSpec) -> Option<OptimalSolution> {
    match exact_optimal(mdp, spec) {
        Ok(o) => Some(o),
        Err(e) => {
            log::warn!("no exact solution: {e}");
            None
        }
    }
}

/// Constants matching the variant, `None` when assumptions fail.
pub fn try_constants(
    mdp: &Mdp,
    spec: DiscountSpec,
    optimum: &OptimalSolution,
    variant: Variant,
    alpha: f64,
) -> Option<TheoremConstants> {
    let base = theorem1_constants(mdp, spec, optimum)
        .map_err(|e| log::info!("no certificate: {e}"))
        .ok()?;
    match variant {
        Variant::Sync => Some(base),
        _ => theorem2_constants(alpha, &base).ok(),
    }
}

/// Per-iteration rate bound implied by the constants.
pub fn guaranteed_rate(c: &TheoremConstants, variant: Variant) -> Option<f64> {
    match (variant, c.alpha.as_ref()) {
        (Variant::Sync, _) => Some(c.guaranteed_rate_per_iter()),
        (Variant::SyncLr, Some(a)) if !a.vacuous => {
            Some(a.window_factor.powf(1.0 / a.n_mix_alpha.max(1) as f64))
        }
        _ => None,
    }
}

/// Geometric rate of a trace. Synchronous traces are fitted on
/// `span(V_{t+1} - V_t)` from policy lock-in on (when known); asynchronous
/// ones on the change across each schedule period, reported per iteration.
pub fn fit_trace_rate(trace: &SolveTrace, constants: Option<&TheoremConstants>) -> Option<RateEstimate> {
    let scale = trace.final_values.sup_norm();
    if let Some(period) = trace.period {
        let boundaries: Vec<usize> = (0..=trace.iterations()).step_by(period).collect();
        let spans: Vec<f64> = boundaries
            .windows(2)
            .map(|w| {
                let a = trace.values(w[0]);
                let b = trace.values(w[1]);
                span(&b.sub(a)).unwrap_or(0.0)
            })
            .collect();
        let floor = NOISE_FLOOR_EPS * spans.first().copied().unwrap_or(0.0).max(scale);
        let mut est = estimate_rate_with_floor(&spans, 0, floor).ok()?;
        est.rate = est.rate.powf(1.0 / period as f64);
        return Some(est);
    }
    let diffs = trace.diff_spans();
    let lock = match (constants, trace.error_spans()) {
        (Some(c), Some(errors)) => lock_in_index(&errors, c).unwrap_or(0),
        _ => 0,
    };
    let tail = diffs.get(lock..)?;
    let floor = NOISE_FLOOR_EPS * tail.first().copied().unwrap_or(0.0).max(scale);
    estimate_rate_with_floor(tail, 0, floor).ok()
}

/// Everything needed to reproduce a solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub alpha: f64,
    pub criterion: DiscountSpec,
    pub stop_threshold: f64,
    pub eps: Option<f64>,
    pub max_iterations: usize,
    pub repeats: Option<usize>,
    pub v0: Option<Vec<f64>>,
}

impl RunConfig {
    pub fn solver_config(&self, reference: Option<&OptimalSolution>) -> CliResult<SolverConfig> {
        let mut cfg = SolverConfig::new(self.variant, self.alpha, self.criterion, self.stop_threshold)?
            .with_max_iterations(self.max_iterations);
        if let Some(v0) = &self.v0 {
            cfg = cfg.with_v0(spanvi::ValueVector::new(v0.clone())?);
        }
        if let Some(o) = reference {
            cfg = cfg.with_reference(o.values.clone());
        }
        Ok(cfg)
    }

    pub fn run(&self, mdp: &Mdp, reference: Option<&OptimalSolution>) -> CliResult<SolveTrace> {
        let cfg = self.solver_config(reference)?;
        let schedule = match self.variant {
            Variant::AsyncLr => {
                let n = mdp.n_states();
                Some(round_robin_schedule(n, self.repeats.unwrap_or(n))?)
            }
            _ => None,
        };
        Ok(solve(mdp, &cfg, schedule.as_ref())?)
    }
}
