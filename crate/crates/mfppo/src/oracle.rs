//! Exact ground truth on small instances.
//!
//! Because every quantity of interest is invariant to agent relabeling, the
//! pair (distinguished agent state, population multiset) is a sufficient
//! statistic, and the mean-field MDP collapses to a finite "quotient" MDP
//! over those classes.  On desk-scale instances this module builds that MDP
//! exactly and solves it: linear-system policy evaluation, value iteration
//! for the optimum, exact stationary distributions, plus an independent
//! numeric solver for the KL-regularized greedy step.  Everything here favors
//! being trivially correct over being fast.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, JointConfig, MeanFieldEnv, MfObservation, StateHistogram};
use crate::policy::Policy;

/// Hard cap on the number of classes the oracle will enumerate.
pub const CLASS_CAP: usize = 100_000;

/// Size above which `exact_q` switches from a dense solve to fixed-point
/// iteration.
const DENSE_CAP: usize = 3_000;

/// One quotient state: the distinguished agent's state plus the occupancy
/// counts of the whole population (the distinguished agent included).
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct ClassState {
    pub self_state: AgentState,
    pub counts: Vec<u32>,
}

impl ClassState {
    /// A canonical observation representing this class (population sorted).
    pub fn representative_obs(&self) -> MfObservation {
        let mut states = Vec::new();
        for (x, &c) in self.counts.iter().enumerate() {
            for _ in 0..c {
                states.push(AgentState(x));
            }
        }
        MfObservation { self_state: self.self_state, population: JointConfig { states } }
    }
}

/// The exact class-level MDP of a mean-field environment.
#[derive(Clone, Debug)]
pub struct QuotientMdp {
    pub gamma: f64,
    pub num_agents: usize,
    pub num_states: usize,
    /// Size of the shared action menu `|Ā|`.
    pub num_actions: usize,
    pub classes: Vec<ClassState>,
    /// Sparse kernel rows `kernel[class][abar] = [(next_class, prob)]`.
    pub kernel: Vec<Vec<Vec<(usize, f64)>>>,
    /// Reward at the distinguished agent: `reward[class][abar]`.
    pub reward: Vec<Vec<f64>>,
    index: BTreeMap<(usize, Vec<u32>), usize>,
}

/// Enumerates all `(s, multiset)` classes, capping the total at `CLASS_CAP`.
fn enumerate_class_states(num_agents: usize, num_states: usize) -> Result<Vec<ClassState>> {
    let mut classes = Vec::new();
    let mut counts = vec![0u32; num_states];
    // Distribute num_agents over states, lowest state index outermost.
    fn rec(
        state: usize,
        remaining: u32,
        counts: &mut Vec<u32>,
        classes: &mut Vec<ClassState>,
    ) -> Result<()> {
        if state + 1 == counts.len() {
            counts[state] = remaining;
            for (s, &c) in counts.iter().enumerate() {
                if c > 0 {
                    classes.push(ClassState { self_state: AgentState(s), counts: counts.clone() });
                    if classes.len() > CLASS_CAP {
                        return Err(MfError::TooLarge(format!(
                            "more than {CLASS_CAP} quotient classes"
                        )));
                    }
                }
            }
            counts[state] = 0;
            return Ok(());
        }
        for take in 0..=remaining {
            counts[state] = take;
            rec(state + 1, remaining - take, counts, classes)?;
        }
        counts[state] = 0;
        Ok(())
    }
    rec(0, num_agents as u32, &mut counts, &mut classes)?;
    Ok(classes)
}

/// Builds the exact quotient MDP by exhaustive expectation over per-agent
/// transitions.
pub fn build_quotient<E: MeanFieldEnv + ?Sized>(env: &E) -> Result<QuotientMdp> {
    let num_states = env.num_states();
    let num_agents = env.num_agents();
    let num_actions = env.action_set().len();
    let gamma = env.gamma();
    let classes = enumerate_class_states(num_agents, num_states)?;
    let index: BTreeMap<(usize, Vec<u32>), usize> = classes
        .iter()
        .enumerate()
        .map(|(i, c)| ((c.self_state.0, c.counts.clone()), i))
        .collect();

    let mut kernel = Vec::with_capacity(classes.len());
    let mut reward = Vec::with_capacity(classes.len());
    let mut dist_self = Vec::new();
    let mut dist_member = Vec::new();
    for class in &classes {
        let hist = StateHistogram::new(
            class.counts.iter().map(|&c| c as f64 / num_agents as f64).collect(),
        )?;
        let mut rows = Vec::with_capacity(num_actions);
        let mut rewards = Vec::with_capacity(num_actions);
        for (abar_id, abar) in env.action_set().iter().enumerate() {
            // Distinguished agent's own transition.
            env.local_kernel(
                class.self_state,
                &hist,
                abar.assignment[class.self_state.0],
                &mut dist_self,
            );

            // Exhaustive convolution over the other agents' moves: a map from
            // rest-occupancy vectors to probability.
            let mut partial: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            partial.insert(vec![0u32; num_states], 1.0);
            for y in 0..num_states {
                let copies = class.counts[y] - u32::from(y == class.self_state.0);
                if copies == 0 {
                    continue;
                }
                env.local_kernel(AgentState(y), &hist, abar.assignment[y], &mut dist_member);
                for _ in 0..copies {
                    let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
                    for (rest, p) in &partial {
                        for &(y_next, q) in &dist_member {
                            let mut bumped = rest.clone();
                            bumped[y_next.0] += 1;
                            *next.entry(bumped).or_insert(0.0) += p * q;
                        }
                    }
                    partial = next;
                }
            }

            // Combine self and rest into next-class probabilities.
            let mut row: BTreeMap<usize, f64> = BTreeMap::new();
            for &(s_next, p_self) in &dist_self {
                for (rest, p_rest) in &partial {
                    let mut full = rest.clone();
                    full[s_next.0] += 1;
                    let target =
                        *index.get(&(s_next.0, full)).expect("successor class enumerated");
                    *row.entry(target).or_insert(0.0) += p_self * p_rest;
                }
            }
            let row: Vec<(usize, f64)> = row.into_iter().collect();
            let total: f64 = row.iter().map(|&(_, p)| p).sum();
            if (total - 1.0).abs() > 1e-10 {
                return Err(MfError::InvalidDistribution(format!(
                    "quotient row mass {total} for class {class:?}, map {abar_id}"
                )));
            }
            let r = env.reward(class.self_state, &hist, abar);
            if r.abs() > env.reward_bound() + 1e-12 {
                return Err(MfError::RewardBound(format!(
                    "reward {r} exceeds declared bound {}",
                    env.reward_bound()
                )));
            }
            rows.push(row);
            rewards.push(r);
        }
        kernel.push(rows);
        reward.push(rewards);
    }
    Ok(QuotientMdp {
        gamma,
        num_agents,
        num_states,
        num_actions,
        classes,
        kernel,
        reward,
        index,
    })
}

fn check_policy_rows(rows: &[Vec<f64>], classes: usize, actions: usize) -> Result<()> {
    if rows.len() != classes {
        return Err(MfError::LengthMismatch(format!(
            "{} policy rows for {classes} classes",
            rows.len()
        )));
    }
    for row in rows {
        if row.len() != actions {
            return Err(MfError::LengthMismatch(format!(
                "policy row over {} actions of {actions}",
                row.len()
            )));
        }
        let total: f64 = row.iter().sum();
        if row.iter().any(|&p| !(p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(MfError::InvalidDistribution(format!("policy row {row:?}")));
        }
    }
    Ok(())
}

impl QuotientMdp {
    /// Index of the class of `(self_state, occupancy counts)`.
    pub fn class_of(&self, self_state: AgentState, counts: &[u32]) -> Option<usize> {
        self.index.get(&(self_state.0, counts.to_vec())).copied()
    }

    /// Index of the class an observation falls into.
    pub fn class_of_obs(&self, obs: &MfObservation) -> Result<usize> {
        let counts = obs.population.counts(self.num_states)?;
        self.class_of(obs.self_state, &counts).ok_or_else(|| {
            MfError::IndexOutOfRange("observation outside the enumerated classes".into())
        })
    }

    /// Tabulates a policy on every class representative.
    pub fn policy_rows(&self, policy: &dyn Policy) -> Result<Vec<Vec<f64>>> {
        self.classes
            .iter()
            .map(|c| policy.action_distribution(&c.representative_obs()))
            .collect()
    }

    /// The class-level chain induced by a policy: sparse rows of
    /// `Σ_ā π(ā|c) P(c'|c, ā)`.
    fn policy_chain(&self, policy_rows: &[Vec<f64>]) -> Vec<Vec<(usize, f64)>> {
        self.kernel
            .iter()
            .zip(policy_rows)
            .map(|(rows, pi)| {
                let mut merged: BTreeMap<usize, f64> = BTreeMap::new();
                for (a, row) in rows.iter().enumerate() {
                    if pi[a] == 0.0 {
                        continue;
                    }
                    for &(c_next, p) in row {
                        *merged.entry(c_next).or_insert(0.0) += pi[a] * p;
                    }
                }
                merged.into_iter().collect()
            })
            .collect()
    }

    /// Exact `Q^π` on the normalized scale: solves
    /// `Q = (1−γ)r + γ P Π_π Q` (dense LU below [`DENSE_CAP`] unknowns,
    /// fixed-point iteration to a 1e−12 step otherwise).
    pub fn exact_q(&self, policy_rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        check_policy_rows(policy_rows, self.classes.len(), self.num_actions)?;
        let nc = self.classes.len();
        let na = self.num_actions;
        let n = nc * na;
        let unknown = |c: usize, a: usize| c * na + a;

        let mut q = vec![0.0; n];
        if n <= DENSE_CAP {
            let mut a_mat = DMatrix::<f64>::identity(n, n);
            let mut b = DVector::<f64>::zeros(n);
            for c in 0..nc {
                for a in 0..na {
                    let i = unknown(c, a);
                    b[i] = (1.0 - self.gamma) * self.reward[c][a];
                    for &(c_next, p) in &self.kernel[c][a] {
                        for a_next in 0..na {
                            a_mat[(i, unknown(c_next, a_next))] -=
                                self.gamma * p * policy_rows[c_next][a_next];
                        }
                    }
                }
            }
            let solved = a_mat.lu().solve(&b).ok_or_else(|| {
                MfError::Degenerate("singular policy-evaluation system".into())
            })?;
            q.copy_from_slice(solved.as_slice());
        } else {
            // Fixed-point iteration; contraction factor γ.
            let mut next = vec![0.0; n];
            let mut v = vec![0.0; nc];
            loop {
                for c in 0..nc {
                    v[c] = (0..na).map(|a| policy_rows[c][a] * q[unknown(c, a)]).sum();
                }
                let mut delta: f64 = 0.0;
                for c in 0..nc {
                    for a in 0..na {
                        let mut x = (1.0 - self.gamma) * self.reward[c][a];
                        for &(c_next, p) in &self.kernel[c][a] {
                            x += self.gamma * p * v[c_next];
                        }
                        delta = delta.max((x - q[unknown(c, a)]).abs());
                        next[unknown(c, a)] = x;
                    }
                }
                std::mem::swap(&mut q, &mut next);
                if delta <= 1e-12 {
                    break;
                }
            }
        }
        Ok((0..nc).map(|c| (0..na).map(|a| q[unknown(c, a)]).collect()).collect())
    }

    /// Exact `V^π` from `Q^π`.
    pub fn exact_v(&self, policy_rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        let q = self.exact_q(policy_rows)?;
        Ok(q.iter()
            .zip(policy_rows)
            .map(|(qr, pr)| qr.iter().zip(pr).map(|(x, p)| x * p).sum())
            .collect())
    }

    /// Value iteration with the `(1−γ)`-scaled optimality operator, stopping
    /// when the sup-norm change is at most `tol·(1−γ)/γ` (so the returned
    /// values are within `tol` of `V*`).  Also returns the greedy policy
    /// (ties toward the lowest action id).
    pub fn optimal_value(&self, tol: f64) -> Result<(Vec<f64>, Vec<usize>)> {
        if !(tol > 0.0) {
            return Err(MfError::InvalidParameter(format!("tol {tol}")));
        }
        let nc = self.classes.len();
        let stop = if self.gamma > 0.0 { tol * (1.0 - self.gamma) / self.gamma } else { tol };
        let mut v = vec![0.0; nc];
        let mut next = vec![0.0; nc];
        loop {
            let mut delta: f64 = 0.0;
            for c in 0..nc {
                let mut best = f64::NEG_INFINITY;
                for a in 0..self.num_actions {
                    let mut x = (1.0 - self.gamma) * self.reward[c][a];
                    for &(c_next, p) in &self.kernel[c][a] {
                        x += self.gamma * p * v[c_next];
                    }
                    if x > best {
                        best = x;
                    }
                }
                delta = delta.max((best - v[c]).abs());
                next[c] = best;
            }
            std::mem::swap(&mut v, &mut next);
            if delta <= stop {
                break;
            }
        }
        let mut greedy = vec![0usize; nc];
        for c in 0..nc {
            let mut best_a = 0;
            let mut best = f64::NEG_INFINITY;
            for a in 0..self.num_actions {
                let mut x = (1.0 - self.gamma) * self.reward[c][a];
                for &(c_next, p) in &self.kernel[c][a] {
                    x += self.gamma * p * v[c_next];
                }
                if x > best {
                    best = x;
                    best_a = a;
                }
            }
            greedy[c] = best_a;
        }
        Ok((v, greedy))
    }

    /// Stationary distribution of the class chain under a policy, by damped
    /// power iteration `ν ← ν(I + P_π)/2` from uniform.
    pub fn stationary_distribution(&self, policy_rows: &[Vec<f64>]) -> Result<Vec<f64>> {
        check_policy_rows(policy_rows, self.classes.len(), self.num_actions)?;
        let chain = self.policy_chain(policy_rows);
        let nc = self.classes.len();
        let mut nu = vec![1.0 / nc as f64; nc];
        let mut pushed = vec![0.0; nc];
        for _ in 0..2_000_000 {
            pushed.iter_mut().for_each(|x| *x = 0.0);
            for (c, row) in chain.iter().enumerate() {
                for &(c_next, p) in row {
                    pushed[c_next] += nu[c] * p;
                }
            }
            let mut change = 0.0;
            for c in 0..nc {
                let blended = 0.5 * nu[c] + 0.5 * pushed[c];
                change += (blended - nu[c]).abs();
                nu[c] = blended;
            }
            if change <= 1e-13 {
                return Ok(nu);
            }
        }
        Err(MfError::Degenerate("stationary distribution iteration did not converge".into()))
    }
}

/// The closed-form KL-regularized greedy update:
/// `π̄ ∝ prev · exp{q/υ}`, computed in log-space.
pub fn kl_regularized_closed_form(q: &[f64], prev: &[f64], upsilon: f64) -> Result<Vec<f64>> {
    if q.len() != prev.len() {
        return Err(MfError::LengthMismatch(format!("{} vs {}", q.len(), prev.len())));
    }
    if !(upsilon > 0.0) {
        return Err(MfError::InvalidParameter(format!("upsilon {upsilon}")));
    }
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = q
        .iter()
        .zip(prev)
        .map(|(&qa, &pa)| pa * ((qa - max) / upsilon).exp())
        .collect();
    let z: f64 = out.iter().sum();
    if !(z > 0.0) {
        return Err(MfError::InvalidDistribution("zero normalizer".into()));
    }
    out.iter_mut().for_each(|x| *x /= z);
    Ok(out)
}

/// Numeric maximizer of `⟨q, π⟩ − υ·KL(π ∥ prev)` over the simplex, solved
/// on the dual — deliberately independent of the closed form it certifies.
///
/// KKT stationarity gives `π_a(λ) = prev_a·exp{(q_a − λ)/υ − 1}` for the
/// multiplier λ of the mass constraint; `ln Σ_a π_a(λ)` is strictly
/// decreasing in λ, so the feasible λ* is found by bisection (all mass sums
/// evaluated as max-subtracted log-sum-exp for overflow safety).
pub fn kl_regularized_argmax(q: &[f64], prev: &[f64], upsilon: f64) -> Result<Vec<f64>> {
    if q.len() != prev.len() {
        return Err(MfError::LengthMismatch(format!("{} vs {}", q.len(), prev.len())));
    }
    if q.is_empty() {
        return Err(MfError::Degenerate("empty action menu".into()));
    }
    if !(upsilon > 0.0) || !upsilon.is_finite() {
        return Err(MfError::InvalidParameter(format!("upsilon {upsilon}")));
    }
    if prev.iter().any(|&p| !(p > 0.0)) {
        return Err(MfError::InvalidDistribution("prev must be strictly positive".into()));
    }

    // Log of the unnormalized coordinate at multiplier `lambda`.
    let log_coord = |a: usize, lambda: f64| prev[a].ln() + (q[a] - lambda) / upsilon - 1.0;
    let log_mass = |lambda: f64| -> f64 {
        let peak = (0..q.len()).map(|a| log_coord(a, lambda)).fold(f64::NEG_INFINITY, f64::max);
        let body: f64 = (0..q.len()).map(|a| (log_coord(a, lambda) - peak).exp()).sum();
        peak + body.ln()
    };

    // Bracket: at λ = max q the mass is at most e⁻¹ < 1; at
    // λ = max q − υ(1 − ln prev_am) the argmax coordinate alone has mass 1.
    let am = (0..q.len()).fold(0, |best, a| if q[a] > q[best] { a } else { best });
    let mut hi = q[am];
    let mut lo = q[am] - upsilon * (1.0 - prev[am].ln());
    debug_assert!(log_mass(hi) <= 0.0 && log_mass(lo) >= 0.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if log_mass(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let lambda = 0.5 * (lo + hi);
    let norm = log_mass(lambda);
    Ok((0..q.len()).map(|a| (log_coord(a, lambda) - norm).exp()).collect())
}
