//! Finite MDP model, the span seminorm and the Bellman optimality backup.
//!
//! Transitions are held densely, row-major by `(state, action)`, so a single
//! backup touches contiguous memory. The interchange JSON layout
//! (`transitions[a][s][s']`, `rewards[s][a]`) is handled in [`crate::io`].

use std::ops::{Deref, Index};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|sum_s' P(s'|s,a) - 1|`.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Optimality criterion under which an MDP is solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "criterion", rename_all = "snake_case")]
pub enum DiscountSpec {
    Discounted { gamma: f64 },
    Average,
}

impl DiscountSpec {
    pub fn discounted(gamma: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&gamma) {
            return Err(Error::Usage(format!(
                "discount factor must lie in [0, 1), got {gamma}"
            )));
        }
        Ok(DiscountSpec::Discounted { gamma })
    }

    /// Factor applied to the continuation value in a backup; 1 for the
    /// average criterion.
    pub fn gamma(&self) -> f64 {
        match *self {
            DiscountSpec::Discounted { gamma } => gamma,
            DiscountSpec::Average => 1.0,
        }
    }

    pub fn is_average(&self) -> bool {
        matches!(self, DiscountSpec::Average)
    }
}

/// A value (or error) vector indexed by state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueVector(Vec<f64>);

impl ValueVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|x| !x.is_finite()) {
            return Err(Error::Usage(format!("value at state {i} is not finite")));
        }
        Ok(ValueVector(values))
    }

    pub fn zeros(n: usize) -> Self {
        ValueVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &ValueVector) -> ValueVector {
        ValueVector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Deref for ValueVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl From<ValueVector> for Vec<f64> {
    fn from(v: ValueVector) -> Self {
        v.0
    }
}

/// A deterministic stationary policy.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(Vec<usize>);

impl Policy {
    pub fn new(actions: Vec<usize>, n_actions: usize) -> Result<Self> {
        if let Some(s) = actions.iter().position(|&a| a >= n_actions) {
            return Err(Error::Usage(format!(
                "policy action {} at state {s} is out of range (n_actions = {n_actions})",
                actions[s]
            )));
        }
        Ok(Policy(actions))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn actions(&self) -> &[usize] {
        &self.0
    }

    pub(crate) fn from_raw(actions: Vec<usize>) -> Self {
        Policy(actions)
    }
}

impl Index<usize> for Policy {
    type Output = usize;

    fn index(&self, s: usize) -> &usize {
        &self.0[s]
    }
}

/// A finite MDP with a uniform action set.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdp {
    n_states: usize,
    n_actions: usize,
    /// `P(s'|s,a)` at `(s * n_actions + a) * n_states + s'`.
    transitions: Vec<f64>,
    /// `r(s,a)` at `s * n_actions + a`.
    rewards: Vec<f64>,
    gamma: Option<f64>,
}

impl Mdp {
    /// Builds an MDP from `transitions[a][s][s']` and `rewards[s][a]`.
    pub fn new(
        transitions: &[Vec<Vec<f64>>],
        rewards: &[Vec<f64>],
        gamma: Option<f64>,
    ) -> Result<Self> {
        let n_actions = transitions.len();
        if n_actions == 0 {
            return Err(Error::InvalidMdp("at least one action is required".into()));
        }
        let n_states = transitions[0].len();
        if n_states == 0 {
            return Err(Error::InvalidMdp("at least one state is required".into()));
        }
        let mut flat = vec![0.0; n_states * n_actions * n_states];
        for (a, per_action) in transitions.iter().enumerate() {
            if per_action.len() != n_states {
                return Err(Error::InvalidMdp(format!(
                    "transitions[{a}] has {} rows, expected {n_states}",
                    per_action.len()
                )));
            }
            for (s, row) in per_action.iter().enumerate() {
                if row.len() != n_states {
                    return Err(Error::InvalidMdp(format!(
                        "transitions[{a}][{s}] has {} entries, expected {n_states}",
                        row.len()
                    )));
                }
                let base = (s * n_actions + a) * n_states;
                flat[base..base + n_states].copy_from_slice(row);
            }
        }
        if rewards.len() != n_states {
            return Err(Error::InvalidMdp(format!(
                "rewards has {} rows, expected {n_states}",
                rewards.len()
            )));
        }
        let mut r = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rewards.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::InvalidMdp(format!(
                    "rewards[{s}] has {} entries, expected {n_actions}",
                    row.len()
                )));
            }
            r.extend_from_slice(row);
        }
        Self::from_flat(n_states, n_actions, flat, r, gamma)
    }

    /// Builds an MDP from per-transition rewards `rewards_sprime[a][s][s']`,
    /// reducing them to `r(s,a) = sum_s' P(s'|s,a) r(s,s')`.
    pub fn from_transition_rewards(
        transitions: &[Vec<Vec<f64>>],
        rewards_sprime: &[Vec<Vec<f64>>],
        gamma: Option<f64>,
    ) -> Result<Self> {
        let n_actions = transitions.len();
        if rewards_sprime.len() != n_actions {
            return Err(Error::InvalidMdp(format!(
                "rewards_sprime has {} actions, expected {n_actions}",
                rewards_sprime.len()
            )));
        }
        let n_states = transitions.first().map_or(0, Vec::len);
        let mut rewards = vec![vec![0.0; n_actions]; n_states];
        for a in 0..n_actions {
            if rewards_sprime[a].len() != n_states {
                return Err(Error::InvalidMdp(format!(
                    "rewards_sprime[{a}] has {} rows, expected {n_states}",
                    rewards_sprime[a].len()
                )));
            }
            for s in 0..n_states {
                let p = transitions[a].get(s).map(Vec::as_slice).unwrap_or(&[]);
                let rs = &rewards_sprime[a][s];
                if rs.len() != p.len() {
                    return Err(Error::InvalidMdp(format!(
                        "rewards_sprime[{a}][{s}] has {} entries, expected {}",
                        rs.len(),
                        p.len()
                    )));
                }
                rewards[s][a] = p.iter().zip(rs).map(|(p, r)| p * r).sum();
            }
        }
        Self::new(transitions, &rewards, gamma)
    }

    pub(crate) fn from_flat(
        n_states: usize,
        n_actions: usize,
        transitions: Vec<f64>,
        rewards: Vec<f64>,
        gamma: Option<f64>,
    ) -> Result<Self> {
        debug_assert_eq!(transitions.len(), n_states * n_actions * n_states);
        debug_assert_eq!(rewards.len(), n_states * n_actions);
        for s in 0..n_states {
            for a in 0..n_actions {
                let base = (s * n_actions + a) * n_states;
                let row = &transitions[base..base + n_states];
                if let Some(sp) = row.iter().position(|p| !(0.0..=1.0).contains(p)) {
                    return Err(Error::InvalidMdp(format!(
                        "P({sp}|{s},{a}) = {} is not a probability",
                        row[sp]
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > ROW_SUM_TOL {
                    return Err(Error::InvalidMdp(format!(
                        "transition row (s={s}, a={a}) sums to {sum}"
                    )));
                }
                let r = rewards[s * n_actions + a];
                if !r.is_finite() {
                    return Err(Error::InvalidMdp(format!("r({s},{a}) is not finite")));
                }
            }
        }
        if let Some(g) = gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidMdp(format!(
                    "gamma must lie in [0, 1), got {g}"
                )));
            }
        }
        Ok(Mdp {
            n_states,
            n_actions,
            transitions,
            rewards,
            gamma,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// The criterion implied by the stored discount: discounted when a
    /// `gamma` is present, average otherwise.
    pub fn discount(&self) -> DiscountSpec {
        match self.gamma {
            Some(gamma) => DiscountSpec::Discounted { gamma },
            None => DiscountSpec::Average,
        }
    }

    pub fn with_gamma(mut self, gamma: Option<f64>) -> Result<Self> {
        if let Some(g) = gamma {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::Usage(format!("gamma must lie in [0, 1), got {g}")));
            }
        }
        self.gamma = gamma;
        Ok(self)
    }

    /// `P(.|s,a)` as a slice over next states.
    #[inline]
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let base = (s * self.n_actions + a) * self.n_states;
        &self.transitions[base..base + self.n_states]
    }

    #[inline]
    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.rewards[s * self.n_actions + a]
    }

    /// `r(s,a) + gamma * P_a(s) . v`
    #[inline]
    pub fn q_value(&self, s: usize, a: usize, v: &[f64], gamma: f64) -> f64 {
        self.reward(s, a) + gamma * dot(self.row(s, a), v)
    }

    pub fn reward_range(&self) -> (f64, f64) {
        self.rewards
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(r), hi.max(r))
            })
    }

    /// Dense `P_pi` as row vectors.
    pub fn policy_matrix(&self, pi: &Policy) -> Vec<Vec<f64>> {
        (0..self.n_states)
            .map(|s| self.row(s, pi[s]).to_vec())
            .collect()
    }

    pub fn policy_rewards(&self, pi: &Policy) -> Vec<f64> {
        (0..self.n_states).map(|s| self.reward(s, pi[s])).collect()
    }

    /// `transitions[a][s][s']` in the interchange layout.
    pub fn transitions_by_action(&self) -> Vec<Vec<Vec<f64>>> {
        (0..self.n_actions)
            .map(|a| (0..self.n_states).map(|s| self.row(s, a).to_vec()).collect())
            .collect()
    }

    /// `rewards[s][a]` in the interchange layout.
    pub fn rewards_by_state(&self) -> Vec<Vec<f64>> {
        self.rewards
            .chunks(self.n_actions)
            .map(<[f64]>::to_vec)
            .collect()
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_states {
            return Err(Error::Shape {
                expected: self.n_states,
                got: len,
            });
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `max(v) - min(v)`.
pub fn span(v: &[f64]) -> Result<f64> {
    if v.is_empty() {
        return Err(Error::Usage("span of an empty vector".into()));
    }
    Ok(span_unchecked(v))
}

#[inline]
pub(crate) fn span_unchecked(v: &[f64]) -> f64 {
    let (lo, hi) = v
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    hi - lo
}

/// `span(a - b)` without allocating.
#[inline]
pub(crate) fn span_of_diff(a: &[f64], b: &[f64]) -> f64 {
    let (lo, hi) = a
        .iter()
        .zip(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (x, y)| {
            let d = x - y;
            (lo.min(d), hi.max(d))
        });
    hi - lo
}

/// Greedy action and its Q-value at state `s`; ties go to the lowest index.
#[inline]
pub(crate) fn best_action(mdp: &Mdp, s: usize, v: &[f64], gamma: f64) -> (usize, f64) {
    let mut best = (0, mdp.q_value(s, 0, v, gamma));
    for a in 1..mdp.n_actions() {
        let q = mdp.q_value(s, a, v, gamma);
        if q > best.1 {
            best = (a, q);
        }
    }
    best
}

/// One Bellman optimality backup: `(Tv)(s) = max_a r(s,a) + gamma P_a(s) v`
/// together with the argmax policy. The average criterion uses `gamma = 1`.
pub fn bellman_backup(mdp: &Mdp, v: &[f64], spec: DiscountSpec) -> Result<(ValueVector, Policy)> {
    mdp.check_len(v.len())?;
    let gamma = spec.gamma();
    let (values, actions): (Vec<f64>, Vec<usize>) = (0..mdp.n_states())
        .map(|s| {
            let (a, q) = best_action(mdp, s, v, gamma);
            (q, a)
        })
        .unzip();
    Ok((ValueVector(values), Policy(actions)))
}

/// The policy greedy with respect to `v`.
pub fn greedy_policy(mdp: &Mdp, v: &[f64], spec: DiscountSpec) -> Result<Policy> {
    bellman_backup(mdp, v, spec).map(|(_, pi)| pi)
}
