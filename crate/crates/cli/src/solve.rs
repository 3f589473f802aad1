use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};
use spanvi::analysis::{corollary_iteration_bound, default_max_iterations};
use spanvi::{is_eps_optimal, span, stopping_threshold, Policy, SolveTrace, Termination, Variant};

use crate::common::{
    fit_trace_rate, guaranteed_rate, load_fixture, read_input, resolve_criterion, sibling,
    to_json, try_constants, try_oracle, write_output, CliError, CliResult, RunConfig,
};

pub const SUMMARY_SCHEMA: u32 = 1;

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Fixture JSON.
    pub mdp: PathBuf,
    #[arg(long, default_value = "sync")]
    pub variant: Variant,
    /// Learning rate; must be 1 for sync, in (0, 1) otherwise.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// discounted or average; defaults to the fixture's own.
    #[arg(long)]
    pub criterion: Option<String>,
    /// Overrides the fixture's discount factor.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Target accuracy; sets H through the stopping rule.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Explicit stopping threshold, overriding --eps.
    #[arg(long = "H", visible_alias = "h")]
    pub stop_threshold: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Round-robin repeats per period for async_lr (default n).
    #[arg(long)]
    pub repeats: Option<usize>,
    /// JSON array with the initial values.
    #[arg(long, conflicts_with = "v0_optimal")]
    pub v0: Option<PathBuf>,
    /// Start from the exact optimal values.
    #[arg(long)]
    pub v0_optimal: bool,
    /// Output prefix: writes <out>.trace.csv and <out>.summary.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub mdp_sha256: String,
    pub config: RunConfig,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    pub final_span: f64,
    pub policy: Policy,
    pub fitted_rate: Option<f64>,
    pub fit_r2: Option<f64>,
    pub guaranteed_rate: Option<f64>,
    pub iteration_bound: Option<f64>,
    pub eps_optimal: Option<bool>,
    pub optimal_policy: Option<Policy>,
}

pub fn trace_path(prefix: &Path) -> PathBuf {
    PathBuf::from(format!("{}.trace.csv", prefix.display()))
}

pub fn summary_path(prefix: &Path) -> PathBuf {
    PathBuf::from(format!("{}.summary.json", prefix.display()))
}

fn read_v0(path: &Path) -> CliResult<Vec<f64>> {
    let bytes = read_input(path)?;
    serde_json::from_slice(&bytes)
        .map_err(|e| CliError::Input(format!("{}: expected a JSON array of numbers: {e}", path.display())))
}

pub fn run(args: &SolveArgs) -> CliResult<()> {
    let (mdp, sha) = load_fixture(&args.mdp)?;
    let (mdp, criterion) = resolve_criterion(mdp, args.criterion.as_deref(), args.gamma)?;
    let alpha = args.alpha.unwrap_or(match args.variant {
        Variant::Sync => 1.0,
        _ => 0.5,
    });
    let stop_threshold = match (args.stop_threshold, args.eps) {
        (Some(h), _) => h,
        (None, Some(eps)) => stopping_threshold(criterion, eps)?,
        (None, None) => return Err(CliError::Input("pass --eps or --H".into())),
    };
    let optimum = try_oracle(&mdp, criterion);
    if args.v0_optimal && optimum.is_none() {
        return Err(CliError::Input("--v0-optimal needs an exact solution".into()));
    }
    let v0 = match (&args.v0, args.v0_optimal) {
        (Some(p), _) => Some(read_v0(p)?),
        (None, true) => optimum.as_ref().map(|o| o.values.to_vec()),
        _ => None,
    };
    let constants = optimum
        .as_ref()
        .and_then(|o| try_constants(&mdp, criterion, o, args.variant, alpha));

    let mut config = RunConfig {
        variant: args.variant,
        alpha,
        criterion,
        stop_threshold,
        eps: args.eps,
        max_iterations: 1,
        repeats: args.repeats,
        v0,
    };
    // bound from the zero/v0 start, for synchronous runs with constants
    let iteration_bound = match (&constants, &optimum, args.eps, args.variant) {
        (Some(c), Some(o), Some(eps), Variant::Sync) => {
            let start = config.v0.clone().unwrap_or_else(|| vec![0.0; mdp.n_states()]);
            let e0: Vec<f64> = start.iter().zip(o.values.iter()).map(|(v, s)| v - s).collect();
            Some(corollary_iteration_bound(criterion, eps, span(&e0)?, c) + c.n_mix as f64)
        }
        _ => None,
    };
    config.max_iterations = args.max_iter.unwrap_or_else(|| default_max_iterations(iteration_bound));

    let trace = config.run(&mdp, optimum.as_ref())?;
    let fit = fit_trace_rate(&trace, constants.as_ref());
    let eps_optimal = match (args.eps, &optimum) {
        (Some(eps), Some(o)) => Some(is_eps_optimal(&mdp, &trace.policy, criterion, eps, o)?),
        _ => None,
    };
    let summary = Summary {
        schema_version: SUMMARY_SCHEMA,
        mdp_sha256: sha,
        config,
        iterations: trace.iterations(),
        converged: trace.converged(),
        termination: trace.termination,
        final_span: trace.final_span,
        policy: trace.policy.clone(),
        fitted_rate: fit.as_ref().map(|f| f.rate),
        fit_r2: fit.as_ref().map(|f| f.fit_r2),
        guaranteed_rate: constants.as_ref().and_then(|c| guaranteed_rate(c, args.variant)),
        iteration_bound,
        eps_optimal,
        optimal_policy: optimum.map(|o| o.policy),
    };

    let prefix = args.out.clone().unwrap_or_else(|| sibling(&args.mdp, &args.variant.to_string()));
    write_trace(&trace, &trace_path(&prefix))?;
    write_output(&summary_path(&prefix), to_json(&summary))?;
    println!("trace: {}", trace_path(&prefix).display());
    println!("summary: {}", summary_path(&prefix).display());
    println!(
        "{} iterations, final span {:e}, {}",
        summary.iterations,
        summary.final_span,
        if summary.converged { "converged" } else { "stopped at the iteration cap" }
    );
    if !summary.converged {
        return Err(CliError::NoConvergence(format!(
            "no convergence within {} iterations",
            summary.iterations
        )));
    }
    Ok(())
}

fn write_trace(trace: &SolveTrace, path: &Path) -> CliResult<()> {
    let mut buf = Vec::new();
    spanvi::io::write_trace_csv(trace, &mut buf).expect("write to memory");
    write_output(path, buf)
}
