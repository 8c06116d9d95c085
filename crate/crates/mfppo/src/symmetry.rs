//! Agent-permutation machinery: applying relabelings, auditing functions for
//! invariance, and exact counts of the invariant function class.
//!
//! For `N` exchangeable agents over `|S|` local states, a permutation-invariant
//! table of one scalar per orbit of `(s_1, …, s_N)` under relabeling has
//! `Σ_{k=1}^{min(N,|S|)} C(N−1, k−1) · C(|S|, k)` entries per distinguished
//! state/action pair — the number of `N`-multisets over `|S|` symbols, counted
//! by how many distinct symbols `k` appear.  A full invariant action-value
//! table is that count times `|S| · |Ā|`.

use std::collections::BTreeSet;

use num_bigint::BigUint;
use rand::seq::SliceRandom;
use rand::Rng;
use rand::RngCore;

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, JointConfig};

/// A permutation of `0..n`, stored as the image list `i ↦ mapping[i]`.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct Permutation {
    mapping: Vec<usize>,
}

impl Permutation {
    /// Validates that `mapping` is a bijection of `0..mapping.len()`.
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        if n == 0 {
            return Err(MfError::Degenerate("empty permutation".into()));
        }
        let mut seen = vec![false; n];
        for &i in &mapping {
            if i >= n {
                return Err(MfError::IndexOutOfRange(format!("image {i} in a permutation of {n}")));
            }
            if seen[i] {
                return Err(MfError::InvalidParameter(format!("image {i} repeated")));
            }
            seen[i] = true;
        }
        Ok(Self { mapping })
    }

    pub fn identity(n: usize) -> Result<Self> {
        Self::new((0..n).collect())
    }

    /// A uniformly random permutation (Fisher–Yates via `shuffle`).
    pub fn random(n: usize, rng: &mut dyn RngCore) -> Result<Self> {
        let mut mapping: Vec<usize> = (0..n).collect();
        mapping.shuffle(rng);
        Self::new(mapping)
    }

    pub fn len(&self) -> usize {
        self.mapping.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mapping.is_empty()
    }

    pub fn mapping(&self) -> &[usize] {
        &self.mapping
    }
}

/// Relabels agents: seat `i` of the result holds the state of seat
/// `mapping[i]` in the input.
pub fn apply_permutation(config: &JointConfig, perm: &Permutation) -> Result<JointConfig> {
    if perm.len() != config.num_agents() {
        return Err(MfError::LengthMismatch(format!(
            "permutation of {} agents applied to {}",
            perm.len(),
            config.num_agents()
        )));
    }
    JointConfig::new(perm.mapping.iter().map(|&i| config.states[i]).collect())
}

/// Exact binomial coefficient `C(n, k)` at arbitrary precision.
pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::from(0u32);
    }
    let k = k.min(n - k);
    let mut acc = BigUint::from(1u32);
    for i in 0..k {
        // Multiplying before dividing keeps every intermediate integral.
        acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
    }
    acc
}

/// Number of distinct population profiles: `N`-multisets over `|S|` symbols,
/// as the sum `Σ_k C(N−1, k−1) · C(|S|, k)` over the number of distinct
/// symbols used.  Equals `C(N + |S| − 1, N)`.
pub fn class_count(num_agents: u64, num_states: u64) -> Result<BigUint> {
    if num_agents == 0 || num_states == 0 {
        return Err(MfError::InvalidParameter("need at least one agent and one state".into()));
    }
    let mut total = BigUint::from(0u32);
    for k in 1..=num_agents.min(num_states) {
        total += binomial(num_agents - 1, k - 1) * binomial(num_states, k);
    }
    Ok(total)
}

/// Entries in an exact invariant action-value table: one scalar per
/// (distinguished state, population profile, shared action) triple.
pub fn count_invariant_table_size(
    num_agents: u64,
    num_states: u64,
    num_actions: u64,
) -> Result<BigUint> {
    if num_actions == 0 {
        return Err(MfError::InvalidParameter("need at least one shared action".into()));
    }
    Ok(class_count(num_agents, num_states)? * BigUint::from(num_states * num_actions))
}

/// Cap on `|S|^N` below which [`enumerate_classes`] will exhaustively walk all
/// ordered configurations.
const ENUMERATION_CAP: u128 = 10_000_000;

/// All distinct population profiles for `num_agents` agents over
/// `num_states` states, as sorted state-index vectors in lexicographic order.
///
/// Walks all `|S|^N` ordered tuples and deduplicates, which is deliberately
/// independent of the counting formula so the two can check each other.
pub fn enumerate_classes(num_agents: usize, num_states: usize) -> Result<Vec<Vec<usize>>> {
    if num_agents == 0 || num_states == 0 {
        return Err(MfError::InvalidParameter("need at least one agent and one state".into()));
    }
    let mut size: u128 = 1;
    for _ in 0..num_agents {
        size = size.saturating_mul(num_states as u128);
        if size > ENUMERATION_CAP {
            return Err(MfError::TooLarge(format!(
                "{num_states}^{num_agents} ordered configurations exceed cap {ENUMERATION_CAP}"
            )));
        }
    }

    let mut classes: BTreeSet<Vec<usize>> = BTreeSet::new();
    let mut odometer = vec![0usize; num_agents];
    loop {
        let mut sorted = odometer.clone();
        sorted.sort_unstable();
        classes.insert(sorted);
        // Advance the odometer; finish after the all-max tuple.
        let mut pos = 0;
        loop {
            if pos == num_agents {
                return Ok(classes.into_iter().collect());
            }
            odometer[pos] += 1;
            if odometer[pos] < num_states {
                break;
            }
            odometer[pos] = 0;
            pos += 1;
        }
    }
}

/// Outcome of a randomized invariance audit.
#[derive(Clone, Debug)]
pub struct InvarianceReport {
    pub trials: usize,
    pub max_violation: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Probes `f(config, abar_id)` for agent-permutation invariance on random
/// configurations, random shared actions, and random relabelings.
///
/// `num_states`/`num_actions` describe the domain to sample; `f` is opaque.
pub fn audit_invariance(
    num_agents: usize,
    num_states: usize,
    num_actions: usize,
    f: &dyn Fn(&JointConfig, usize) -> f64,
    trials: usize,
    tolerance: f64,
    rng: &mut dyn RngCore,
) -> Result<InvarianceReport> {
    if num_agents == 0 || num_states == 0 || num_actions == 0 {
        return Err(MfError::InvalidParameter("empty audit domain".into()));
    }
    let mut max_violation: f64 = 0.0;
    for _ in 0..trials {
        let states: Vec<AgentState> =
            (0..num_agents).map(|_| AgentState(rng.gen_range(0..num_states))).collect();
        let config = JointConfig::new(states)?;
        let abar_id = rng.gen_range(0..num_actions);
        let perm = Permutation::random(num_agents, rng)?;
        let permuted = apply_permutation(&config, &perm)?;
        let gap = (f(&config, abar_id) - f(&permuted, abar_id)).abs();
        max_violation = max_violation.max(gap);
    }
    Ok(InvarianceReport { trials, max_violation, tolerance, pass: max_violation <= tolerance })
}
