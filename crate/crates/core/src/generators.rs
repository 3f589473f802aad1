//! Seeded test instances.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) keyed by
//! `ChaCha8Rng::seed_from_u64(seed)`, with one stream per purpose
//! (`set_stream`): [`STREAM_TRANSITIONS`] for supports and weights,
//! [`STREAM_REWARDS`] for rewards. Both the cipher and the seed expansion
//! are fixed algorithms, so fixtures are identical across platforms.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::constants::assumption2_gap;
use crate::analysis::ergodic::check_ergodic;
use crate::error::{Error, Result};
use crate::mdp::{DiscountSpec, Mdp};
use crate::oracle::{exact_optimal, OptimalSolution};
use crate::solvers::UpdateSchedule;

pub const STREAM_TRANSITIONS: u64 = 1;
pub const STREAM_REWARDS: u64 = 2;

/// Attempts before a spec is declared infeasible.
pub const MAX_REJECTIONS: usize = 100;
/// Smallest action gap a generated instance may have.
pub const GAP_FLOOR: f64 = 1e-6;
/// Lower clamp on unnormalized transition weights.
const WEIGHT_FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub seed: u64,
    /// Probability that each off-diagonal transition is in a row's support.
    pub density: f64,
    pub reward_range: (f64, f64),
    pub min_gap: Option<f64>,
}

impl GeneratorSpec {
    pub fn new(n_states: usize, n_actions: usize, seed: u64) -> Self {
        GeneratorSpec {
            n_states,
            n_actions,
            seed,
            density: 0.5,
            reward_range: (0.0, 1.0),
            min_gap: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_states < 2 {
            return Err(Error::Usage(format!(
                "degenerate size: n_states = {} has no span dynamics, need at least 2",
                self.n_states
            )));
        }
        if self.n_actions == 0 {
            return Err(Error::Usage("n_actions must be positive".into()));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err(Error::Usage(format!(
                "density must lie in (0, 1], got {}",
                self.density
            )));
        }
        if self.density * (self.n_states as f64) < 1.0 {
            return Err(Error::Usage(format!(
                "density {} gives fewer than one transition per row at n = {}",
                self.density, self.n_states
            )));
        }
        let (lo, hi) = self.reward_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(Error::Usage(format!("bad reward range [{lo}, {hi}]")));
        }
        if self.min_gap.is_some() && lo >= hi {
            return Err(Error::Usage(
                "a gap target needs r_min < r_max".into(),
            ));
        }
        Ok(())
    }
}

/// A generated MDP together with its exact solution.
#[derive(Debug, Clone)]
pub struct Instance {
    pub mdp: Mdp,
    pub optimum: OptimalSolution,
    pub delta: f64,
    /// Accepted attempt, counted from 1.
    pub attempts: usize,
}

pub fn random_ergodic_mdp(spec: &GeneratorSpec, criterion: DiscountSpec) -> Result<Mdp> {
    random_ergodic_instance(spec, criterion).map(|i| i.mdp)
}

/// Random MDP whose every policy induces an ergodic chain, with a unique
/// optimal policy.
///
/// Each row `(s, a)` gets a random off-diagonal support, the cycle edge
/// `s -> s+1 mod n`, and, at state 0, a self-loop; the cycle makes every
/// policy irreducible and the loop makes it aperiodic. Draws are repeated
/// until the optimal policy's action gap reaches
/// `max(min_gap, GAP_FLOOR)`.
pub fn random_ergodic_instance(spec: &GeneratorSpec, criterion: DiscountSpec) -> Result<Instance> {
    spec.validate()?;
    let n = spec.n_states;
    let m = spec.n_actions;
    let gamma = match criterion {
        DiscountSpec::Discounted { gamma } => Some(gamma),
        DiscountSpec::Average => None,
    };
    let mut p_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    p_rng.set_stream(STREAM_TRANSITIONS);
    let mut r_rng = ChaCha8Rng::seed_from_u64(spec.seed);
    r_rng.set_stream(STREAM_REWARDS);
    let gap_target = spec.min_gap.unwrap_or(0.0).max(GAP_FLOOR);
    let (r_lo, r_hi) = spec.reward_range;

    let mut last_reason = String::new();
    for attempt in 1..=MAX_REJECTIONS {
        let mut transitions = vec![0.0; n * m * n];
        for s in 0..n {
            for a in 0..m {
                let row = &mut transitions[(s * m + a) * n..(s * m + a + 1) * n];
                for (sp, w) in row.iter_mut().enumerate() {
                    let keep = p_rng.random::<f64>() < spec.density;
                    let weight = WEIGHT_FLOOR + (1.0 - WEIGHT_FLOOR) * p_rng.random::<f64>();
                    let forced = sp == (s + 1) % n || (s == 0 && sp == 0);
                    if (keep && sp != s) || forced {
                        *w = weight;
                    }
                }
                let total: f64 = row.iter().sum();
                row.iter_mut().for_each(|w| *w /= total);
            }
        }
        let rewards: Vec<f64> = (0..n * m)
            .map(|_| r_lo + (r_hi - r_lo) * r_rng.random::<f64>())
            .collect();
        let mdp = Mdp::from_flat(n, m, transitions, rewards, gamma)?;
        let optimum = exact_optimal(&mdp, criterion)?;
        let delta = assumption2_gap(&mdp, criterion.gamma(), &optimum.values, &optimum.policy);
        let ergodic = check_ergodic(&mdp.policy_matrix(&optimum.policy)).is_ergodic;
        if delta >= gap_target && ergodic {
            return Ok(Instance {
                mdp,
                optimum,
                delta,
                attempts: attempt,
            });
        }
        last_reason = format!("action gap {delta:e} below {gap_target:e} or non-ergodic optimum");
        log::debug!("attempt {attempt} rejected: {last_reason}");
    }
    Err(Error::Infeasible(format!(
        "{MAX_REJECTIONS} draws rejected at n = {n}, m = {m} (last: {last_reason})"
    )))
}

/// Absorbing-state MDP on which value iteration contracts at exactly
/// `gamma`: one action per state, `P(s|s) = 1`, `r(s) = s`.
pub fn tight_gamma_mdp(n: usize, gamma: f64) -> Result<Mdp> {
    if n < 2 {
        return Err(Error::Usage(format!(
            "degenerate size: tight-gamma instance needs n >= 2, got {n}"
        )));
    }
    DiscountSpec::discounted(gamma)?;
    let transitions: Vec<f64> = (0..n)
        .flat_map(|s| (0..n).map(move |sp| if s == sp { 1.0 } else { 0.0 }))
        .collect();
    let rewards = (0..n).map(|s| s as f64).collect();
    Mdp::from_flat(n, 1, transitions, rewards, Some(gamma))
}

/// Single-state blocks cycling `0..n`, repeated `repeats` times per period.
pub fn round_robin_schedule(n: usize, repeats: usize) -> Result<UpdateSchedule> {
    if n == 0 {
        return Err(Error::Usage("round-robin schedule needs n >= 1".into()));
    }
    if repeats < n {
        return Err(Error::Usage(format!(
            "repeats = {repeats} < n = {n}: each state must be updated at least n times per period"
        )));
    }
    let blocks = (0..repeats).flat_map(|_| (0..n).map(|s| vec![s])).collect();
    UpdateSchedule::new(blocks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::ergodic::check_ergodic;
    use crate::mdp::Policy;

    #[test]
    fn refuses_single_state() {
        let spec = GeneratorSpec::new(1, 2, 0);
        assert!(matches!(
            random_ergodic_mdp(&spec, DiscountSpec::Average),
            Err(Error::Usage(msg)) if msg.contains("degenerate")
        ));
        assert!(tight_gamma_mdp(1, 0.9).is_err());
    }

    #[test]
    fn same_seed_same_instance() {
        let spec = GeneratorSpec::new(7, 3, 1234);
        let g = DiscountSpec::discounted(0.95).unwrap();
        let a = random_ergodic_mdp(&spec, g).unwrap();
        let b = random_ergodic_mdp(&spec, g).unwrap();
        assert_eq!(a, b);
        let other = random_ergodic_mdp(&GeneratorSpec::new(7, 3, 1235), g).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn every_policy_is_ergodic() {
        use rand::Rng;
        let spec = GeneratorSpec::new(10, 4, 42);
        let inst = random_ergodic_instance(&spec, DiscountSpec::discounted(0.99).unwrap()).unwrap();
        assert!(inst.delta > 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let pi = Policy::new((0..10).map(|_| rng.random_range(0..4)).collect(), 4).unwrap();
            assert!(check_ergodic(&inst.mdp.policy_matrix(&pi)).is_ergodic);
        }
    }

    #[test]
    fn tight_gamma_closed_form() {
        let mdp = tight_gamma_mdp(4, 0.9).unwrap();
        let opt = exact_optimal(&mdp, mdp.discount()).unwrap();
        for s in 0..4 {
            assert!((opt.values[s] - s as f64 / 0.1).abs() < 1e-12);
        }
        assert!(!check_ergodic(&mdp.policy_matrix(&opt.policy)).is_ergodic);
    }

    #[test]
    fn round_robin_layout() {
        let s = round_robin_schedule(2, 2).unwrap();
        assert_eq!(s.blocks(), &[vec![0], vec![1], vec![0], vec![1]]);
        assert_eq!(s.period(), 4);
        assert_eq!(s.update_counts(2).unwrap(), vec![2, 2]);
        assert!(round_robin_schedule(3, 2).is_err());
        let s = round_robin_schedule(5, 5).unwrap();
        assert!(s.validate(5).is_ok());
        assert_eq!(s.period(), 25);
    }

    #[test]
    fn spec_validation() {
        let mut spec = GeneratorSpec::new(10, 2, 0);
        spec.density = 0.05;
        assert!(spec.validate().is_err());
        spec.density = 0.1;
        assert!(spec.validate().is_ok());
        spec.reward_range = (1.0, 1.0);
        assert!(spec.validate().is_ok());
        spec.min_gap = Some(0.01);
        assert!(spec.validate().is_err());
    }
}
