//! Core mean-field MDP abstractions.
//!
//! A cooperative system of `N` exchangeable agents over a finite local state
//! space is summarized, for any one agent, by the pair `(s, d)` of its own
//! state `s` and the empirical distribution `d` of the whole population.  All
//! agents act through one shared local map `ā : S → A`, so a "joint action"
//! is a single [`LocalActionMap`] applied at every seat.  Values are reported
//! on the normalized scale `V = (1 − γ) · E[Σ_t γ^t r_t]`, which keeps every
//! value inside the reward range regardless of `γ`.

use rand::RngCore;

use crate::error::{MfError, Result};

/// One agent's local state, an index into `0..num_states`.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug)]
pub struct AgentState(pub usize);

/// An ordered configuration of the whole population (one state per agent).
///
/// Order carries no meaning for any quantity this crate computes; it exists so
/// that permutation invariance is something we can *test* rather than assume.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct JointConfig {
    pub states: Vec<AgentState>,
}

impl JointConfig {
    pub fn new(states: Vec<AgentState>) -> Result<Self> {
        if states.is_empty() {
            return Err(MfError::Degenerate("joint configuration with zero agents".into()));
        }
        Ok(Self { states })
    }

    pub fn num_agents(&self) -> usize {
        self.states.len()
    }

    /// Occupancy counts per local state, length `num_states`.
    pub fn counts(&self, num_states: usize) -> Result<Vec<u32>> {
        let mut counts = vec![0u32; num_states];
        for &AgentState(s) in &self.states {
            if s >= num_states {
                return Err(MfError::IndexOutOfRange(format!(
                    "agent state {s} with only {num_states} states"
                )));
            }
            counts[s] += 1;
        }
        Ok(counts)
    }
}

/// The empirical state distribution of a population: a point of the simplex
/// whose entries are multiples of `1/N`.
#[derive(Clone, PartialEq, Debug)]
pub struct StateHistogram {
    pub mass: Vec<f64>,
}

impl StateHistogram {
    /// Wraps a mass vector after checking it is a distribution.
    pub fn new(mass: Vec<f64>) -> Result<Self> {
        if mass.is_empty() {
            return Err(MfError::Degenerate("empty histogram".into()));
        }
        let mut total = 0.0;
        for &m in &mass {
            if !(m >= 0.0) {
                return Err(MfError::InvalidDistribution(format!("negative mass {m}")));
            }
            total += m;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(MfError::InvalidDistribution(format!("mass sums to {total}")));
        }
        Ok(Self { mass })
    }

    pub fn num_states(&self) -> usize {
        self.mass.len()
    }
}

/// The empirical distribution of a configuration over `num_states` states.
pub fn empirical_distribution(config: &JointConfig, num_states: usize) -> Result<StateHistogram> {
    let counts = config.counts(num_states)?;
    let n = config.num_agents() as f64;
    StateHistogram::new(counts.iter().map(|&c| c as f64 / n).collect())
}

/// A shared local decision rule `ā : S → A`; entry `assignment[s]` is the
/// per-agent action taken by every agent currently in state `s`.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct LocalActionMap {
    pub assignment: Vec<usize>,
}

impl LocalActionMap {
    pub fn new(assignment: Vec<usize>) -> Result<Self> {
        if assignment.is_empty() {
            return Err(MfError::Degenerate("empty action map".into()));
        }
        Ok(Self { assignment })
    }

    /// The constant map sending every state to `action`.
    pub fn constant(num_states: usize, action: usize) -> Self {
        Self { assignment: vec![action; num_states] }
    }
}

/// What one agent sees: its own state plus the full population configuration.
///
/// The population includes the observing agent itself, so `self_state` must
/// occur somewhere in `population`.
#[derive(Clone, PartialEq, Debug)]
pub struct MfObservation {
    pub self_state: AgentState,
    pub population: JointConfig,
}

impl MfObservation {
    pub fn new(self_state: AgentState, population: JointConfig) -> Result<Self> {
        if !population.states.contains(&self_state) {
            return Err(MfError::Degenerate(format!(
                "self state {:?} absent from population",
                self_state
            )));
        }
        Ok(Self { self_state, population })
    }

    /// The observation of agent `index` inside `config`.
    pub fn of_agent(config: &JointConfig, index: usize) -> Result<Self> {
        let self_state = *config.states.get(index).ok_or_else(|| {
            MfError::IndexOutOfRange(format!(
                "agent {index} in a population of {}",
                config.num_agents()
            ))
        })?;
        Ok(Self { self_state, population: config.clone() })
    }
}

/// One sampled transition from the perspective of a single (exchangeable)
/// agent, including the successor action so that on-policy TD targets can be
/// formed without re-touching the policy.
#[derive(Clone, Debug)]
pub struct Transition {
    pub obs: MfObservation,
    pub action_id: usize,
    pub reward: f64,
    pub next_obs: MfObservation,
    pub next_action_id: usize,
}

/// A finite mean-field environment.
///
/// Implementations describe the *per-agent* transition kernel
/// `P(s' | s, d, a)` and the mean-field reward `r(s, d, ā)`; the joint system
/// dynamics (all agents moving at once, conditionally independently given the
/// current histogram) are derived from those by [`env_step`].
pub trait MeanFieldEnv {
    fn num_states(&self) -> usize;
    fn num_agents(&self) -> usize;

    /// The finite menu `Ā` of shared local maps. Actions are referred to by
    /// index into this slice everywhere else.
    fn action_set(&self) -> &[LocalActionMap];

    fn gamma(&self) -> f64;

    /// Uniform bound `r̄` with `|r(s, d, ā)| ≤ r̄` everywhere.
    fn reward_bound(&self) -> f64;

    /// Per-agent next-state distribution given own state, the population
    /// histogram, and the *per-agent* action `a = ā(s)`.  Pushes
    /// `(next_state, prob)` pairs into `out` (cleared first); probabilities
    /// must be nonnegative and sum to 1.
    fn local_kernel(
        &self,
        state: AgentState,
        hist: &StateHistogram,
        action: usize,
        out: &mut Vec<(AgentState, f64)>,
    );

    /// Mean-field reward `r(s, d, ā)` for an agent at `state` when the whole
    /// population applies the shared map `abar`.
    fn reward(&self, state: AgentState, hist: &StateHistogram, abar: &LocalActionMap) -> f64;

    /// Draws an initial joint configuration.
    fn reset(&self, rng: &mut dyn RngCore) -> JointConfig;

    fn name(&self) -> &str {
        "env"
    }
}

/// Samples one index from a sparse finite distribution.
fn sample_sparse(dist: &[(AgentState, f64)], rng: &mut dyn RngCore) -> AgentState {
    let u = rand::Rng::gen::<f64>(rng);
    let mut acc = 0.0;
    for &(s, p) in dist {
        acc += p;
        if u < acc {
            return s;
        }
    }
    // Guard against accumulated rounding at the top of the CDF.
    dist.last().expect("non-empty distribution").0
}

/// Advances every agent one step under the shared map `action_set()[abar_id]`.
///
/// Returns the next configuration together with the population-mean reward
/// `(1/N) Σ_i r(s_i, d, ā)` at the *current* configuration.
pub fn env_step<E: MeanFieldEnv + ?Sized>(
    env: &E,
    config: &JointConfig,
    abar_id: usize,
    rng: &mut dyn RngCore,
) -> Result<(JointConfig, f64)> {
    let abar = env
        .action_set()
        .get(abar_id)
        .ok_or_else(|| {
            MfError::IndexOutOfRange(format!(
                "action {abar_id} with |A| = {}",
                env.action_set().len()
            ))
        })?
        .clone();
    let hist = empirical_distribution(config, env.num_states())?;

    // Mean reward, grouping identical states so the env reward is evaluated at
    // most once per occupied state.
    let counts = config.counts(env.num_states())?;
    let mut reward_sum = 0.0;
    for (s, &c) in counts.iter().enumerate() {
        if c > 0 {
            reward_sum += c as f64 * env.reward(AgentState(s), &hist, &abar);
        }
    }
    let reward = reward_sum / config.num_agents() as f64;

    let next = step_states(env, config, &hist, &abar, rng)?;
    Ok((next, reward))
}

/// Moves every agent without computing rewards (used for burn-in chains where
/// rewards are discarded).
pub(crate) fn step_states<E: MeanFieldEnv + ?Sized>(
    env: &E,
    config: &JointConfig,
    hist: &StateHistogram,
    abar: &LocalActionMap,
    rng: &mut dyn RngCore,
) -> Result<JointConfig> {
    let mut dist = Vec::with_capacity(env.num_states());
    let mut next_states = Vec::with_capacity(config.num_agents());
    for &s in &config.states {
        let a = *abar.assignment.get(s.0).ok_or_else(|| {
            MfError::LengthMismatch(format!(
                "action map covers {} states, saw state {}",
                abar.assignment.len(),
                s.0
            ))
        })?;
        env.local_kernel(s, hist, a, &mut dist);
        debug_assert!(
            (dist.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-9,
            "local kernel row must sum to 1"
        );
        next_states.push(sample_sparse(&dist, rng));
    }
    JointConfig::new(next_states)
}

/// A horizon long enough that the truncated discounted tail is below `tol`
/// on the normalized scale, assuming rewards bounded by `reward_bound`.
pub fn horizon_for(gamma: f64, reward_bound: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 1;
    }
    // (1-γ)·Σ_{t≥H} γ^t·r̄ = γ^H·r̄ ≤ tol
    let h = ((tol / reward_bound.max(1e-300)).ln() / gamma.ln()).ceil();
    (h.max(1.0)) as usize
}

/// Monte-Carlo estimate of the normalized value `(1−γ)·E[Σ γ^t r_t]` for the
/// distinguished agent of `start`, following `policy` for every agent.
///
/// Each episode replays the chain from `start.population` for `horizon`
/// steps; rewards are read at the distinguished agent's current state.
pub fn discounted_value_mc<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy: &dyn crate::policy::Policy,
    start: &MfObservation,
    gamma: f64,
    episodes: usize,
    horizon: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    if episodes == 0 {
        return Err(MfError::InvalidParameter("episodes must be positive".into()));
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(MfError::InvalidParameter(format!("gamma {gamma} outside [0, 1)")));
    }
    let tracked = start
        .population
        .states
        .iter()
        .position(|&s| s == start.self_state)
        .ok_or_else(|| MfError::Degenerate("self state absent from population".into()))?;

    let mut total = 0.0;
    for _ in 0..episodes {
        let mut config = start.population.clone();
        let mut discount = 1.0;
        let mut acc = 0.0;
        for _ in 0..horizon {
            let obs = MfObservation::of_agent(&config, tracked)?;
            let abar_id = policy.sample_action(&obs, rng)?;
            let abar = &env.action_set()[abar_id];
            let hist = empirical_distribution(&config, env.num_states())?;
            acc += discount * env.reward(config.states[tracked], &hist, abar);
            discount *= gamma;
            config = step_states(env, &config, &hist, abar, rng)?;
        }
        total += (1.0 - gamma) * acc;
    }
    Ok(total / episodes as f64)
}
