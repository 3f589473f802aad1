use thiserror::Error;

/// Which of the convergence assumptions an instance or trace fails.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assumption {
    /// The optimal policy's chain is irreducible and aperiodic.
    Ergodic,
    /// Every state has a unique optimal action, separated by a positive gap.
    UniqueOptimal,
    /// Every state is updated at least `n` times in each schedule period.
    UpdateFrequency,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Assumption::Ergodic => "Assumption 1 (ergodic optimal chain)",
            Assumption::UniqueOptimal => "Assumption 2 (unique optimal policy)",
            Assumption::UpdateFrequency => "Assumption 3 (update frequency)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("chain has {classes} recurrent classes; gain would be state-dependent")]
    Multichain { classes: usize },

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("{assumption} violated: {detail}")]
    AssumptionViolated {
        assumption: Assumption,
        detail: String,
    },

    #[error("infeasible generator spec: {0}")]
    Infeasible(String),

    #[error("inconclusive: {0}")]
    Inconclusive(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
