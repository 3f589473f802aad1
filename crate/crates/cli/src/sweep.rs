use std::path::{Path, PathBuf};

use clap::Args;
use rayon::prelude::*;
use serde::Serialize;
use spanvi::generators::{random_ergodic_instance, tight_gamma_mdp, GeneratorSpec};
use spanvi::{exact_optimal, DiscountSpec, Mdp, OptimalSolution, Variant};

use crate::common::{
    fit_trace_rate, guaranteed_rate, try_constants, write_output, CliError, CliResult, RunConfig,
};

pub const SWEEP_SCHEMA: &str = "sweep/1";

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated discount factors.
    #[arg(long, value_delimiter = ',', required = true, num_args = 1..)]
    pub gammas: Vec<f64>,
    /// Comma-separated seeds; defaults to SPANVI_SEED or 0.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long, value_delimiter = ',', default_value = "sync")]
    pub variants: Vec<Variant>,
    /// Learning rates for the damped variants.
    #[arg(long, value_delimiter = ',', default_value = "0.5")]
    pub alphas: Vec<f64>,
    /// Stopping threshold H for every run.
    #[arg(long = "H", visible_alias = "h", default_value_t = 1e-10)]
    pub stop_threshold: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iter: usize,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Add rows for the tight-gamma instance at every gamma.
    #[arg(long)]
    pub tight_gamma: bool,
    /// Directory for sweep.csv and the per-run traces.
    #[arg(long, default_value = "sweep")]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
struct Row {
    gamma: f64,
    seed: Option<u64>,
    variant: Variant,
    alpha: f64,
    fitted_rate: Option<f64>,
    guaranteed_rate: Option<f64>,
    iterations: Option<usize>,
    status: String,
    instance: &'static str,
    fit_r2: Option<f64>,
    trace: String,
    detail: String,
    schema: &'static str,
}

struct Job {
    gamma: f64,
    seed: Option<u64>,
    variant: Variant,
    alpha: f64,
}

fn instance(args: &SweepArgs, job: &Job) -> CliResult<(Mdp, OptimalSolution)> {
    let spec = DiscountSpec::discounted(job.gamma)?;
    match job.seed {
        Some(seed) => {
            let inst = random_ergodic_instance(&GeneratorSpec::new(args.n, args.m, seed), spec)?;
            Ok((inst.mdp, inst.optimum))
        }
        None => {
            let mdp = tight_gamma_mdp(args.n.max(2), job.gamma)?;
            let opt = exact_optimal(&mdp, spec)?;
            Ok((mdp, opt))
        }
    }
}

fn run_job(args: &SweepArgs, job: &Job) -> Row {
    let name = format!(
        "gamma{}_{}_{}_a{}.csv",
        job.gamma,
        job.seed.map_or("tight".to_string(), |s| format!("seed{s}")),
        job.variant,
        job.alpha
    );
    let mut row = Row {
        gamma: job.gamma,
        seed: job.seed,
        variant: job.variant,
        alpha: job.alpha,
        fitted_rate: None,
        guaranteed_rate: None,
        iterations: None,
        status: "error".into(),
        instance: if job.seed.is_some() { "random_ergodic" } else { "tight_gamma" },
        fit_r2: None,
        trace: String::new(),
        detail: String::new(),
        schema: SWEEP_SCHEMA,
    };
    let result = (|| -> CliResult<()> {
        let (mdp, optimum) = instance(args, job)?;
        let config = RunConfig {
            variant: job.variant,
            alpha: job.alpha,
            criterion: mdp.discount(),
            stop_threshold: args.stop_threshold,
            eps: None,
            max_iterations: args.max_iter,
            repeats: None,
            v0: None,
        };
        let trace = config.run(&mdp, Some(&optimum))?;
        let constants = try_constants(&mdp, mdp.discount(), &optimum, job.variant, job.alpha);
        let fit = fit_trace_rate(&trace, constants.as_ref());
        row.iterations = Some(trace.iterations());
        row.fitted_rate = fit.as_ref().map(|f| f.rate);
        row.fit_r2 = fit.as_ref().map(|f| f.fit_r2);
        row.guaranteed_rate = constants.as_ref().and_then(|c| guaranteed_rate(c, job.variant));
        let mut buf = Vec::new();
        spanvi::io::write_trace_csv(&trace, &mut buf).expect("write to memory");
        let path = Path::new("traces").join(&name);
        write_output(&args.out_dir.join(&path), buf)?;
        row.trace = path.display().to_string();
        row.status = if trace.converged() { "ok" } else { "max_iterations" }.into();
        if fit.is_none() {
            row.detail = "too few points above the noise floor for a rate fit".into();
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.detail = e.to_string();
    }
    row
}

pub fn run(args: &SweepArgs, default_seed: u64) -> CliResult<bool> {
    if args.gammas.is_empty() {
        return Err(CliError::Input("--gammas must not be empty".into()));
    }
    if let Some(g) = args.gammas.iter().find(|g| !(**g > 0.0 && **g < 1.0)) {
        return Err(CliError::Input(format!("every gamma must lie in (0, 1), got {g}")));
    }
    if args.variants.is_empty() || args.alphas.is_empty() {
        return Err(CliError::Input("--variants and --alphas must not be empty".into()));
    }
    let seeds = if args.seeds.is_empty() { vec![default_seed] } else { args.seeds.clone() };
    let mut instances: Vec<Option<u64>> = seeds.into_iter().map(Some).collect();
    if args.tight_gamma {
        instances.push(None);
    }

    let mut jobs = Vec::new();
    for &gamma in &args.gammas {
        for &seed in &instances {
            for &variant in &args.variants {
                let alphas: &[f64] = if variant == Variant::Sync { &[1.0] } else { &args.alphas };
                for &alpha in alphas {
                    jobs.push(Job { gamma, seed, variant, alpha });
                }
            }
        }
    }
    let rows: Vec<Row> = jobs.par_iter().map(|job| run_job(args, job)).collect();

    let mut writer = csv::Writer::from_writer(Vec::new());
    for row in &rows {
        writer
            .serialize(row)
            .map_err(|e| CliError::Internal(format!("sweep CSV: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Internal(format!("sweep CSV: {e}")))?;
    let path = args.out_dir.join("sweep.csv");
    write_output(&path, bytes)?;

    let ok = rows.iter().filter(|r| r.status == "ok").count();
    println!("sweep: {} ({ok} of {} runs converged)", path.display(), rows.len());
    for r in rows.iter().filter(|r| r.status != "ok") {
        log::warn!("gamma {} seed {:?} {}: {} {}", r.gamma, r.seed, r.variant, r.status, r.detail);
    }
    Ok(ok > 0)
}
