use std::path::PathBuf;

use clap::Args;
use serde::Serialize;
use spanvi::analysis::{
    certify, verify_lemma2, verify_lock_in, verify_sandwich, verify_theorem1, verify_theorem2,
    verify_theorem3, CheckReport, CheckStatus,
};
use spanvi::io::read_trace_csv;
use spanvi::Variant;

use crate::common::{
    load_fixture, read_input, resolve_criterion, sibling, to_json, try_constants, try_oracle,
    write_output, CliError, CliResult,
};
use crate::solve::Summary;

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Fixture JSON the trace was produced from.
    pub mdp: PathBuf,
    /// Trace CSV written by `solve`.
    pub trace: PathBuf,
    /// Summary JSON; defaults to the one next to the trace.
    #[arg(long)]
    pub summary: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Report {
    fixture_sha256: String,
    variant: Variant,
    trace_rows: usize,
    summary_iterations: usize,
    truncated: bool,
    pass: bool,
    checks: Vec<CheckReport>,
}

fn not_applicable(check: &str, detail: &str) -> CheckReport {
    CheckReport {
        check: check.into(),
        hard: true,
        status: CheckStatus::NotApplicable,
        bound: None,
        observed: None,
        windows: 0,
        violations: 0,
        max_violation: 0.0,
        detail: detail.into(),
    }
}

pub fn run(args: &VerifyArgs) -> CliResult<bool> {
    let summary_path = args
        .summary
        .clone()
        .unwrap_or_else(|| sibling(&args.trace, "summary.json"));
    let summary: Summary = serde_json::from_slice(&read_input(&summary_path)?)
        .map_err(|e| CliError::Input(format!("{}: {e}", summary_path.display())))?;
    let (mdp, sha) = load_fixture(&args.mdp)?;
    if sha != summary.mdp_sha256 {
        return Err(CliError::Input(format!(
            "fixture {} (sha256 {sha}) does not match the trace's fixture (sha256 {})",
            args.mdp.display(),
            summary.mdp_sha256
        )));
    }
    let trace_text = String::from_utf8(read_input(&args.trace)?)
        .map_err(|_| CliError::Input(format!("{} is not UTF-8", args.trace.display())))?;
    let rows = read_trace_csv(&trace_text)?;

    let mut config = summary.config.clone();
    let (mdp, criterion) = match config.criterion {
        spanvi::DiscountSpec::Average => resolve_criterion(mdp, Some("average"), None)?,
        spanvi::DiscountSpec::Discounted { gamma } => {
            resolve_criterion(mdp, Some("discounted"), Some(gamma))?
        }
    };
    let optimum = try_oracle(&mdp, criterion);
    let certificate = optimum.as_ref().map(|o| certify(&mdp, criterion, o));
    let constants = optimum
        .as_ref()
        .and_then(|o| try_constants(&mdp, criterion, o, config.variant, config.alpha));
    let why_not = certificate
        .as_ref()
        .filter(|c| !c.assumptions.violations.is_empty())
        .map(|c| c.assumptions.violations.join("; "))
        .unwrap_or_else(|| "no certificate for this instance".into());

    let mut checks = Vec::new();
    if rows.is_empty() {
        checks.push(CheckReport {
            status: CheckStatus::Inconclusive,
            ..not_applicable("trace_replay", "empty trace")
        });
    } else {
        config.max_iterations = rows.len();
        let trace = config.run(&mdp, optimum.as_ref())?;
        let mut replay = not_applicable("trace_replay", "");
        replay.status = CheckStatus::Pass;
        for (row, step) in rows.iter().zip(&trace.steps) {
            replay.windows += 1;
            let excess = (row.span_diff - step.span_diff).abs()
                - 1e-12 * step.span_diff.abs().max(f64::MIN_POSITIVE);
            if excess > 0.0 || row.states_updated != step.updated.len() {
                replay.violations += 1;
                replay.max_violation = replay.max_violation.max(excess);
            }
        }
        if replay.violations > 0 || rows.len() != trace.iterations() {
            replay.status = CheckStatus::Fail;
        }
        replay.detail = "recorded span_diff reproduced by replaying the solver".into();
        checks.push(replay);

        match &optimum {
            Some(opt) => {
                checks.push(verify_lemma2(&trace));
                checks.push(verify_sandwich(&mdp, &trace, opt));
            }
            None => {
                checks.push(not_applicable("lemma2_span_relation", "no exact solution"));
                checks.push(not_applicable("error_sandwich", "no exact solution"));
            }
        }
        match (&constants, &optimum) {
            (Some(c), Some(opt)) => {
                match config.variant {
                    Variant::Sync => checks.extend(verify_theorem1(&trace, c)),
                    Variant::SyncLr => checks.push(verify_theorem2(&trace, c)),
                    Variant::AsyncLr => checks.push(verify_theorem3(&trace, c, opt)),
                }
                checks.push(verify_lock_in(&trace, c, opt));
            }
            _ => {
                let detail = format!("not applicable: {why_not}");
                let name = match config.variant {
                    Variant::Sync => "theorem1_window",
                    Variant::SyncLr => "theorem2_window",
                    Variant::AsyncLr => "theorem3_window",
                };
                checks.push(not_applicable(name, &detail));
                checks.push(not_applicable("policy_lock_in", &detail));
            }
        }
    }

    let pass = checks.iter().all(CheckReport::ok);
    let report = Report {
        fixture_sha256: sha,
        variant: config.variant,
        trace_rows: rows.len(),
        summary_iterations: summary.iterations,
        truncated: rows.len() < summary.iterations,
        pass,
        checks,
    };
    let json = to_json(&report);
    if let Some(out) = &args.out {
        write_output(out, &json)?;
    }
    print!("{json}");
    Ok(pass)
}
