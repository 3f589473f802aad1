//! Interchange formats: the MDP fixture JSON and the per-iteration trace CSV.
//!
//! Fixture JSON has fields in a fixed order:
//! `{"n_states", "n_actions", "transitions"[a][s][s'], "rewards"[s][a], "gamma"}`.
//! Floats use the shortest representation that round-trips, so load then
//! save reproduces the input bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::solvers::SolveTrace;

pub const TRACE_CSV_HEADER: &str = "t,span_diff,span_err,policy_changed,states_updated";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpJson {
    n_states: usize,
    n_actions: usize,
    transitions: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rewards: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rewards_sprime: Option<Vec<Vec<Vec<f64>>>>,
    gamma: Option<f64>,
}

/// Parses fixture JSON. Errors carry serde's line/column or name the
/// offending field.
pub fn mdp_from_json(text: &str) -> Result<Mdp> {
    let raw: MdpJson = serde_json::from_str(text)?;
    if raw.transitions.len() != raw.n_actions {
        return Err(Error::InvalidMdp(format!(
            "field `transitions`: {} action blocks, but n_actions = {}",
            raw.transitions.len(),
            raw.n_actions
        )));
    }
    if raw.transitions.iter().any(|t| t.len() != raw.n_states) {
        return Err(Error::InvalidMdp(format!(
            "field `transitions`: every action block needs n_states = {} rows",
            raw.n_states
        )));
    }
    match (raw.rewards, raw.rewards_sprime) {
        (Some(r), None) => Mdp::new(&raw.transitions, &r, raw.gamma),
        (None, Some(rs)) => Mdp::from_transition_rewards(&raw.transitions, &rs, raw.gamma),
        (Some(_), Some(_)) => Err(Error::InvalidMdp(
            "give exactly one of `rewards` and `rewards_sprime`".into(),
        )),
        (None, None) => Err(Error::InvalidMdp(
            "missing field `rewards` (or `rewards_sprime`)".into(),
        )),
    }
}

/// Canonical fixture JSON, pretty-printed with a trailing newline.
pub fn mdp_to_json(mdp: &Mdp) -> String {
    let raw = MdpJson {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        transitions: mdp.transitions_by_action(),
        rewards: Some(mdp.rewards_by_state()),
        rewards_sprime: None,
        gamma: mdp.gamma(),
    };
    let mut out = serde_json::to_string_pretty(&raw).expect("fixture serializes");
    out.push('\n');
    out
}

/// Writes the trace as CSV: one row per iteration `t -> t+1`.
pub fn write_trace_csv<W: Write>(trace: &SolveTrace, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for (t, step) in trace.steps.iter().enumerate() {
        let err = step.span_err.map(|e| e.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{t},{},{err},{},{}",
            step.span_diff,
            u8::from(trace.policy_changed(t)),
            step.updated.len()
        )?;
    }
    Ok(())
}

/// A parsed trace CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub t: usize,
    pub span_diff: f64,
    pub span_err: Option<f64>,
    pub policy_changed: bool,
    pub states_updated: usize,
}

pub fn read_trace_csv(text: &str) -> Result<Vec<TraceRow>> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == TRACE_CSV_HEADER => {}
        _ => {
            return Err(Error::Usage(format!(
                "trace CSV must start with header `{TRACE_CSV_HEADER}`"
            )))
        }
    }
    let bad = |line: usize, what: &str| Error::Usage(format!("trace CSV line {}: bad {what}", line + 1));
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 5 {
            return Err(bad(i, "column count"));
        }
        rows.push(TraceRow {
            t: f[0].trim().parse().map_err(|_| bad(i, "t"))?,
            span_diff: f[1].trim().parse().map_err(|_| bad(i, "span_diff"))?,
            span_err: match f[2].trim() {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(i, "span_err"))?),
            },
            policy_changed: match f[3].trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad(i, "policy_changed")),
            },
            states_updated: f[4].trim().parse().map_err(|_| bad(i, "states_updated"))?,
        });
    }
    Ok(rows)
}
