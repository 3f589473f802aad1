//! Assumption checks, theorem constants, rate estimation and trace
//! verification.

pub mod constants;
pub mod ergodic;
pub mod rate;
pub mod verify;

pub use constants::{
    assumption2_gap, certify, check_assumptions, corollary_iteration_bound,
    default_max_iterations, theorem1_constants, theorem2_constants, AlphaConstants,
    AssumptionReport, Certificate, TheoremConstants,
};
pub use ergodic::{check_ergodic, check_ergodic_pattern, wielandt_bound, ErgodicCheck};
pub use rate::{estimate_rate, estimate_rate_with_floor, RateEstimate};
pub use verify::{
    lock_in_index, verify_lemma2, verify_lock_in, verify_sandwich, verify_theorem1,
    verify_theorem2, verify_theorem3, CheckReport, CheckStatus, CHECK_TOL,
};
