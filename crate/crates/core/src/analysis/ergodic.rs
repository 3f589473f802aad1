use serde::{Deserialize, Serialize};

use crate::pattern::BoolMatrix;

/// Outcome of a primitivity test on a stochastic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErgodicCheck {
    pub is_ergodic: bool,
    /// Smallest `k` with an all-positive `k`-th power.
    pub n_mix: Option<usize>,
}

/// Exponent at which every primitive `n x n` pattern is all-positive.
pub fn wielandt_bound(n: usize) -> usize {
    if n <= 1 {
        1
    } else {
        n * n - 2 * n + 2
    }
}

/// Ergodicity (irreducible and aperiodic) of a row-stochastic matrix given
/// as rows, decided on its support pattern.
pub fn check_ergodic<R: AsRef<[f64]>>(p: &[R]) -> ErgodicCheck {
    check_ergodic_pattern(&BoolMatrix::support(p))
}

/// Primitivity of a 0/1 pattern: searches powers `1..=n^2-2n+2` for an
/// all-positive one.
pub fn check_ergodic_pattern(pattern: &BoolMatrix) -> ErgodicCheck {
    let not_ergodic = ErgodicCheck {
        is_ergodic: false,
        n_mix: None,
    };
    let n = pattern.n();
    if n == 0 || !pattern.is_irreducible() {
        return not_ergodic;
    }
    let mut power = pattern.clone();
    for k in 1..=wielandt_bound(n) {
        if power.all_true() {
            return ErgodicCheck {
                is_ergodic: true,
                n_mix: Some(k),
            };
        }
        power = power.mul(pattern);
    }
    // irreducible but periodic
    not_ergodic
}
