//! Value iteration for finite MDPs under the span seminorm.
//!
//! The crate provides the three value-iteration variants (synchronous,
//! damped, asynchronous damped) with span-based stopping, exact oracles for
//! `V*`, the constants that certify geometric convergence faster than
//! `gamma` for ergodic MDPs with a unique optimal policy, and verifiers that
//! check those bounds on recorded traces.
//!
//! ```
//! use spanvi::{generators, oracle, solvers, DiscountSpec};
//!
//! let spec = generators::GeneratorSpec::new(6, 3, 7);
//! let criterion = DiscountSpec::discounted(0.95).unwrap();
//! let inst = generators::random_ergodic_instance(&spec, criterion).unwrap();
//!
//! let h = solvers::stopping_threshold(criterion, 1e-4).unwrap();
//! let cfg = solvers::SolverConfig::sync(criterion, h).unwrap();
//! let trace = solvers::vi_sync(&inst.mdp, &cfg).unwrap();
//! assert!(oracle::is_eps_optimal(&inst.mdp, &trace.policy, criterion, 1e-4, &inst.optimum).unwrap());
//! ```

pub mod analysis;
pub mod error;
pub mod generators;
pub mod io;
pub mod mdp;
pub mod oracle;
pub mod pattern;
pub mod solvers;

pub use error::{Assumption, Error, Result};
pub use mdp::{bellman_backup, greedy_policy, span, DiscountSpec, Mdp, Policy, ValueVector};
pub use oracle::{
    exact_optimal, is_eps_optimal, policy_evaluation_average, policy_evaluation_discounted,
    OptimalSolution,
};
pub use solvers::{
    stopping_threshold, vi_async_lr, vi_sync, vi_sync_lr, SolveTrace, SolverConfig, Termination,
    UpdateSchedule, Variant,
};
