//! The outer optimization loop and its two inner procedures.
//!
//! One outer iteration holds the policy fixed, fits the critic by streaming
//! temporal-difference steps (policy evaluation), then regresses the actor
//! onto a proximally-regularized target built from the fitted critic (policy
//! improvement).  Both inner loops are projected stochastic approximation
//! runs whose output is the ergodic average of the pre-update iterates; the
//! temperature and proximity rates follow the fixed schedule
//! `τ_{k+1} = υ√K/(k+1)`, `υ_k = υ√K`, `η = 1/√T`.
//!
//! Transitions are drawn fresh for every inner step (pure streaming, no
//! replay): a chain is rolled from an environment reset for `burn_in` steps
//! under the current policy as a surrogate for its stationary law, then one
//! transition is emitted from a uniformly chosen agent's perspective.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{MfError, Result};
use crate::mdp::{
    empirical_distribution, horizon_for, step_states, JointConfig, MeanFieldEnv, MfObservation,
    Transition,
};
use crate::net::{
    grouped_counts, grouped_counts_into, matched_mlp_width, DeepSetParams, FeatureLayout,
    MlpParams, TabulatedEnergies,
};
use crate::policy::{improvement_target, kl_divergence, EnergyPolicy, Policy, TabulatedPolicy};

/// All rates and sizes of one training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSchedule {
    /// Outer iterations `K`.
    pub outer_iters: usize,
    /// Inner iterations `T` (shared by both inner loops).
    pub inner_iters: usize,
    /// Base rate `υ > 0` from which `τ_{k+1}` and `υ_k` are derived.
    pub upsilon: f64,
    /// Discount `γ ∈ [0, 1)`; must match the environment.
    pub gamma: f64,
    /// Actor trust radius `R_A`.
    pub radius_actor: f64,
    /// Critic trust radius `R_Q`.
    pub radius_critic: f64,
    /// Actor width `m_A`.
    pub width_actor: usize,
    /// Critic width `m_Q` (the baseline critic is width-matched to the same
    /// parameter count, not the same width).
    pub width_critic: usize,
    /// Burn-in steps per sampled transition.
    pub burn_in: usize,
    /// Seed of the single sequential RNG stream.
    pub seed: u64,
    /// Redraw network initializations at every outer iteration (the literal
    /// inner-procedure reading) instead of the default warm start, where each
    /// inner loop continues from the previous iteration's averaged parameters
    /// while the trust ball stays centered at the run-global initial draw.
    pub per_iteration_reinit: bool,
}

impl TrainSchedule {
    /// A schedule with the derived defaults: `burn_in = ceil(5/(1−γ))`,
    /// run-global initialization, seed 0.
    pub fn new(
        outer_iters: usize,
        inner_iters: usize,
        upsilon: f64,
        gamma: f64,
        radius_actor: f64,
        radius_critic: f64,
        width_actor: usize,
        width_critic: usize,
    ) -> Self {
        Self {
            outer_iters,
            inner_iters,
            upsilon,
            gamma,
            radius_actor,
            radius_critic,
            width_actor,
            width_critic,
            burn_in: default_burn_in(gamma),
            seed: 0,
            per_iteration_reinit: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_iters == 0 || self.inner_iters == 0 {
            return Err(MfError::InvalidParameter("zero iterations".into()));
        }
        if !(self.upsilon > 0.0) || !self.upsilon.is_finite() {
            return Err(MfError::InvalidParameter(format!("upsilon {}", self.upsilon)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(MfError::InvalidParameter(format!("gamma {}", self.gamma)));
        }
        for (name, r) in [("radius_actor", self.radius_actor), ("radius_critic", self.radius_critic)]
        {
            if !(r > 0.0) || !r.is_finite() {
                return Err(MfError::InvalidParameter(format!("{name} = {r}")));
            }
        }
        if self.width_actor == 0 || self.width_critic == 0 {
            return Err(MfError::InvalidParameter("zero network width".into()));
        }
        if self.burn_in == 0 {
            return Err(MfError::InvalidParameter("burn_in must be at least 1".into()));
        }
        Ok(())
    }

    /// Temperature `τ_k`: 1 at `k = 0` (the uniform initial policy), then
    /// `υ√K/k`.  Derived on demand, never stored.
    pub fn tau(&self, k: usize) -> f64 {
        if k == 0 {
            1.0
        } else {
            self.upsilon * (self.outer_iters as f64).sqrt() / k as f64
        }
    }

    /// Proximity rate `υ_k = υ√K`, constant across iterations.
    pub fn upsilon_k(&self) -> f64 {
        self.upsilon * (self.outer_iters as f64).sqrt()
    }

    /// Inner-loop step size `η = 1/√T`.
    pub fn step_size(&self) -> f64 {
        1.0 / (self.inner_iters as f64).sqrt()
    }
}

/// Default burn-in length `⌈5/(1−γ)⌉`— about five mixing time-scales.
pub fn default_burn_in(gamma: f64) -> usize {
    // The small slack keeps division artifacts (5/(1−0.9) = 50.000…01) from
    // bumping the ceiling one step up.
    (((5.0 / (1.0 - gamma)) - 1e-9).ceil() as usize).max(1)
}

/// Rolls one policy step: the shared action is sampled from a uniformly
/// chosen agent's observation, then every agent moves.
fn policy_step<E: MeanFieldEnv + ?Sized>(
    env: &E,
    config: &JointConfig,
    policy: &dyn Policy,
    rng: &mut dyn RngCore,
) -> Result<JointConfig> {
    let i = rng.gen_range(0..config.num_agents());
    let obs = MfObservation::of_agent(config, i)?;
    let abar_id = policy.sample_action(&obs, rng)?;
    let hist = empirical_distribution(config, env.num_states())?;
    step_states(env, config, &hist, &env.action_set()[abar_id], rng)
}

fn emit_transition<E: MeanFieldEnv + ?Sized>(
    env: &E,
    config: JointConfig,
    policy: &dyn Policy,
    uniform_action: bool,
    rng: &mut dyn RngCore,
) -> Result<Transition> {
    let i = rng.gen_range(0..config.num_agents());
    let obs = MfObservation::of_agent(&config, i)?;
    let action_id = if uniform_action {
        rng.gen_range(0..env.action_set().len())
    } else {
        policy.sample_action(&obs, rng)?
    };
    let hist = empirical_distribution(&config, env.num_states())?;
    let abar = &env.action_set()[action_id];
    let reward = env.reward(obs.self_state, &hist, abar);
    let next = step_states(env, &config, &hist, abar, rng)?;
    let next_obs = MfObservation::of_agent(&next, i)?;
    let next_action_id = policy.sample_action(&next_obs, rng)?;
    Ok(Transition { obs, action_id, reward, next_obs, next_action_id })
}

/// One on-policy transition approximately from the stationary law of
/// `policy`: reset, `burn_in` policy steps, then emit
/// `(obs, ā, r, obs′, ā′)` with both actions drawn from `policy` and the
/// perspective agent chosen uniformly.
pub fn sample_stationary<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy: &dyn Policy,
    burn_in: usize,
    rng: &mut dyn RngCore,
) -> Result<Transition> {
    if burn_in == 0 {
        return Err(MfError::InvalidParameter("burn_in must be at least 1".into()));
    }
    let mut config = env.reset(rng);
    for _ in 0..burn_in {
        config = policy_step(env, &config, policy, rng)?;
    }
    emit_transition(env, config, policy, false, rng)
}

/// Like [`sample_stationary`] (states from `policy`'s stationary law), but
/// the emitted action is drawn uniformly from the menu — the exploratory
/// mixture the improvement step trains on.
pub fn sample_improvement_dist<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy: &dyn Policy,
    burn_in: usize,
    rng: &mut dyn RngCore,
) -> Result<Transition> {
    if burn_in == 0 {
        return Err(MfError::InvalidParameter("burn_in must be at least 1".into()));
    }
    let mut config = env.reset(rng);
    for _ in 0..burn_in {
        config = policy_step(env, &config, policy, rng)?;
    }
    emit_transition(env, config, policy, true, rng)
}

/// A critic the TD loop can fit: either the pooled permutation-invariant
/// network or the order-sensitive wide baseline.
trait CriticNet {
    fn value(&self, obs: &MfObservation, abar_id: usize) -> Result<f64>;
    /// `w ← w − step·∇F(obs, ā)`, then projection onto the trust ball.
    fn descend(&mut self, obs: &MfObservation, abar_id: usize, step: f64) -> Result<()>;
    fn weights(&self) -> &[f64];
    fn weights_mut(&mut self) -> &mut [f64];
}

struct DeepSetCritic {
    params: DeepSetParams,
    layout: FeatureLayout,
    counts: Vec<(usize, u32)>,
}

impl CriticNet for DeepSetCritic {
    fn value(&self, obs: &MfObservation, abar_id: usize) -> Result<f64> {
        self.params.forward(obs, abar_id, &self.layout)
    }

    fn descend(&mut self, obs: &MfObservation, abar_id: usize, step: f64) -> Result<()> {
        grouped_counts_into(&obs.population, &mut self.counts);
        self.params.sgd_step_counts(
            obs.self_state,
            &self.counts,
            obs.population.num_agents(),
            abar_id,
            &self.layout,
            step,
        );
        self.params.project_ball();
        Ok(())
    }

    fn weights(&self) -> &[f64] {
        &self.params.weights
    }

    fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.params.weights
    }
}

struct MlpCritic {
    params: MlpParams,
}

impl CriticNet for MlpCritic {
    fn value(&self, obs: &MfObservation, abar_id: usize) -> Result<f64> {
        self.params.forward(obs, abar_id)
    }

    fn descend(&mut self, obs: &MfObservation, abar_id: usize, step: f64) -> Result<()> {
        self.params.sgd_step(obs, abar_id, step)?;
        self.params.project_ball();
        Ok(())
    }

    fn weights(&self) -> &[f64] {
        &self.params.weights
    }

    fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.params.weights
    }
}

/// Accumulates `Σ_t w(t)` of the pre-update iterates and writes the average
/// back — the ergodic output both inner loops return.
struct ErgodicAverage {
    sum: Vec<f64>,
    steps: usize,
}

impl ErgodicAverage {
    fn new(len: usize) -> Self {
        Self { sum: vec![0.0; len], steps: 0 }
    }

    fn absorb(&mut self, weights: &[f64]) {
        for (a, &w) in self.sum.iter_mut().zip(weights) {
            *a += w;
        }
        self.steps += 1;
    }

    fn finish(self) -> Vec<f64> {
        let inv = 1.0 / self.steps as f64;
        self.sum.into_iter().map(|a| a * inv).collect()
    }
}

/// The streaming TD loop, generic over the critic class.  Returns the mean
/// squared TD error over the `T` consumed samples and the ergodic average of
/// the pre-update iterates; the critic itself is left at the last iterate so
/// callers can keep the optimization chain warm across outer iterations
/// while still reporting the average.
fn td_loop<E: MeanFieldEnv + ?Sized, C: CriticNet>(
    env: &E,
    policy: &dyn Policy,
    critic: &mut C,
    schedule: &TrainSchedule,
    rng: &mut dyn RngCore,
) -> Result<(f64, Vec<f64>)> {
    let eta = schedule.step_size();
    let gamma = schedule.gamma;
    let mut average = ErgodicAverage::new(critic.weights().len());
    let mut loss = 0.0;
    for _ in 0..schedule.inner_iters {
        average.absorb(critic.weights());
        let tr = sample_stationary(env, policy, schedule.burn_in, rng)?;
        let here = critic.value(&tr.obs, tr.action_id)?;
        let there = critic.value(&tr.next_obs, tr.next_action_id)?;
        let delta = here - (1.0 - gamma) * tr.reward - gamma * there;
        if !delta.is_finite() {
            return Err(MfError::NonFinite(format!("TD error {delta}")));
        }
        loss += delta * delta;
        critic.descend(&tr.obs, tr.action_id, eta * delta)?;
    }
    Ok((loss / schedule.inner_iters as f64, average.finish()))
}

/// Fits the critic to the current policy by `T` projected semi-gradient TD
/// steps on fresh stationary samples and returns the ergodic average.
pub fn td_policy_evaluation<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy: &EnergyPolicy,
    critic: DeepSetParams,
    schedule: &TrainSchedule,
    rng: &mut dyn RngCore,
) -> Result<DeepSetParams> {
    schedule.validate()?;
    let layout = FeatureLayout::new(env.num_states(), env.action_set().len())?;
    let mut wrapped = DeepSetCritic { params: critic, layout, counts: Vec::new() };
    let (_, averaged) = td_loop(env, policy, &mut wrapped, schedule, rng)?;
    wrapped.params.weights = averaged;
    Ok(wrapped.params)
}

/// The streaming regression loop of the improvement step, generic over how
/// the frozen critic and frozen previous actor are evaluated.  Returns the
/// mean squared regression loss and the ergodic average of the pre-update
/// iterates; `actor` is left at the last iterate (the chain state).
fn improvement_loop<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy: &dyn Policy,
    critic_value: &dyn Fn(&MfObservation, usize) -> Result<f64>,
    prev_energy: &dyn Fn(&MfObservation, &[(usize, u32)], usize) -> f64,
    actor: &mut DeepSetParams,
    layout: &FeatureLayout,
    schedule: &TrainSchedule,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<(f64, Vec<f64>)> {
    let eta = schedule.step_size();
    let upsilon_k = schedule.upsilon_k();
    let tau_k = schedule.tau(k);
    let tau_next = schedule.tau(k + 1);
    let mut average = ErgodicAverage::new(actor.weights.len());
    let mut counts = Vec::new();
    let mut loss = 0.0;
    for _ in 0..schedule.inner_iters {
        average.absorb(&actor.weights);
        let tr = sample_improvement_dist(env, policy, schedule.burn_in, rng)?;
        grouped_counts_into(&tr.obs.population, &mut counts);
        let n = tr.obs.population.num_agents();
        let fq = critic_value(&tr.obs, tr.action_id)?;
        let fa_prev = prev_energy(&tr.obs, &counts, tr.action_id);
        let target = improvement_target(fq, fa_prev, upsilon_k, tau_k, tau_next)?;
        let predicted =
            actor.forward_counts(tr.obs.self_state, &counts, n, tr.action_id, layout)?;
        let residual = predicted - target;
        if !residual.is_finite() {
            return Err(MfError::NonFinite(format!("improvement residual {residual}")));
        }
        loss += residual * residual;
        actor.sgd_step_counts(
            tr.obs.self_state,
            &counts,
            n,
            tr.action_id,
            layout,
            eta * residual,
        );
        actor.project_ball();
    }
    Ok((loss / schedule.inner_iters as f64, average.finish()))
}

/// Regresses the actor onto the proximal target
/// `τ_{k+1}(F_Q/υ_k + F_A_k/τ_k)` over exploratory samples (stationary
/// states, uniform actions) and returns the ergodic average.
#[allow(clippy::too_many_arguments)]
pub fn sgd_policy_improvement<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy_k: &EnergyPolicy,
    critic_k: &DeepSetParams,
    actor: DeepSetParams,
    schedule: &TrainSchedule,
    k: usize,
    rng: &mut dyn RngCore,
) -> Result<DeepSetParams> {
    schedule.validate()?;
    if k >= schedule.outer_iters {
        return Err(MfError::InvalidParameter(format!(
            "iteration {k} of {}",
            schedule.outer_iters
        )));
    }
    let layout = FeatureLayout::new(env.num_states(), env.action_set().len())?;
    let critic_value =
        |obs: &MfObservation, a: usize| -> Result<f64> { critic_k.forward(obs, a, &layout) };
    let prev = policy_k.actor.clone();
    let prev_energy = move |obs: &MfObservation, counts: &[(usize, u32)], a: usize| -> f64 {
        prev.forward_counts(obs.self_state, counts, obs.population.num_agents(), a, &layout)
            .expect("frozen actor evaluation")
    };
    let mut actor = actor;
    let (_, averaged) = improvement_loop(
        env,
        policy_k,
        &critic_value,
        &prev_energy,
        &mut actor,
        &layout,
        schedule,
        k,
        rng,
    )?;
    actor.weights = averaged;
    Ok(actor)
}

/// Which function class the critic uses.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum CriticKind {
    /// The pooled permutation-invariant network (the method under study).
    DeepSet,
    /// An order-sensitive one-hidden-layer baseline, width-chosen to match
    /// the pooled critic's parameter count.
    Mlp,
}

/// Final critic parameters, tagged by class.
#[derive(Clone, Debug)]
pub enum CriticParams {
    DeepSet(DeepSetParams),
    Mlp(MlpParams),
}

/// Knobs of [`mf_ppo_with`] beyond the schedule.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub critic_kind: CriticKind,
    /// Monte-Carlo episodes behind each `est_value` metric.
    pub eval_episodes: usize,
    /// Number of reset-drawn probe observations for the `kl_to_prev` metric.
    pub probe_count: usize,
    /// Directory for per-iteration actor checkpoints.
    pub checkpoint_dir: Option<PathBuf>,
    /// Write a checkpoint after every `n`-th outer iteration.
    pub checkpoint_every: Option<usize>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            critic_kind: CriticKind::DeepSet,
            eval_episodes: 16,
            probe_count: 8,
            checkpoint_dir: None,
            checkpoint_every: None,
        }
    }
}

/// One row of the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub k: usize,
    pub td_loss: f64,
    pub improvement_loss: f64,
    /// Monte-Carlo estimate of the new policy's normalized value from the
    /// environment's initial distribution.
    pub est_value: f64,
    /// Mean KL(π_{k+1} ∥ π_k) over the probe observations.
    pub kl_to_prev: f64,
    /// Temperature `τ_{k+1}` set at this iteration.
    pub tau_k: f64,
    pub upsilon_k: f64,
    pub wallclock_ms: u128,
}

/// Everything a finished run leaves behind.
#[derive(Clone, Debug)]
pub struct TrainingResult {
    pub records: Vec<IterationRecord>,
    pub actor: DeepSetParams,
    pub critic: CriticParams,
    /// Temperature `τ_K` of the final policy.
    pub final_temperature: f64,
    pub action_set_size: usize,
}

impl TrainingResult {
    /// The softmax policy the run ended with.
    pub fn final_policy(&self) -> Result<EnergyPolicy> {
        EnergyPolicy::new(self.actor.clone(), self.final_temperature, self.action_set_size)
    }
}

/// Fixed column order of the metrics log.
pub const METRICS_HEADER: &str =
    "k,td_loss,improvement_loss,est_value,kl_to_prev,tau_k,upsilon_k,wallclock_ms";

/// Serializes records under [`METRICS_HEADER`]; all floats use the shortest
/// round-trip decimal form, so logs are byte-identical across reruns except
/// for the wallclock column.
pub fn metrics_to_csv(records: &[IterationRecord]) -> String {
    let mut out = String::from(METRICS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k,
            r.td_loss,
            r.improvement_loss,
            r.est_value,
            r.kl_to_prev,
            r.tau_k,
            r.upsilon_k,
            r.wallclock_ms
        ));
    }
    out
}

/// Writes the metrics log to `path`.
pub fn write_metrics_csv(records: &[IterationRecord], path: &Path) -> Result<()> {
    std::fs::write(path, metrics_to_csv(records))?;
    Ok(())
}

/// Monte-Carlo estimate of the normalized value of `policy` from the reset
/// distribution, following a uniformly chosen agent per episode.
fn estimate_value<E: MeanFieldEnv + ?Sized>(
    env: &E,
    policy: &dyn Policy,
    episodes: usize,
    rng: &mut dyn RngCore,
) -> Result<f64> {
    let gamma = env.gamma();
    let horizon = horizon_for(gamma, env.reward_bound(), 1e-3);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut config = env.reset(rng);
        let agent = rng.gen_range(0..config.num_agents());
        let mut discount = 1.0 - gamma;
        let mut episode = 0.0;
        for _ in 0..horizon {
            let obs = MfObservation::of_agent(&config, agent)?;
            let abar_id = policy.sample_action(&obs, rng)?;
            let hist = empirical_distribution(&config, env.num_states())?;
            let abar = &env.action_set()[abar_id];
            episode += discount * env.reward(obs.self_state, &hist, abar);
            discount *= gamma;
            config = step_states(env, &config, &hist, abar, rng)?;
        }
        total += episode;
    }
    Ok(total / episodes as f64)
}

/// Runs the full outer loop with a pooled critic and default options.
pub fn mf_ppo<E: MeanFieldEnv + ?Sized>(
    env: &E,
    schedule: &TrainSchedule,
) -> Result<TrainingResult> {
    mf_ppo_with(env, schedule, &TrainOptions::default())
}

/// Runs the full outer loop.
///
/// All randomness (initializations, every sampled transition, evaluation
/// rollouts) is drawn from one sequential stream seeded by `schedule.seed`,
/// so identical inputs reproduce the metrics bit-for-bit (wallclock aside).
pub fn mf_ppo_with<E: MeanFieldEnv + ?Sized>(
    env: &E,
    schedule: &TrainSchedule,
    options: &TrainOptions,
) -> Result<TrainingResult> {
    schedule.validate()?;
    if (env.gamma() - schedule.gamma).abs() > 1e-12 {
        return Err(MfError::InvalidParameter(format!(
            "schedule gamma {} disagrees with environment gamma {}",
            schedule.gamma,
            env.gamma()
        )));
    }
    if options.eval_episodes == 0 || options.probe_count == 0 {
        return Err(MfError::InvalidParameter("eval_episodes and probe_count must be ≥ 1".into()));
    }
    let num_states = env.num_states();
    let num_actions = env.action_set().len();
    let layout = FeatureLayout::new(num_states, num_actions)?;
    let mut rng = ChaCha8Rng::seed_from_u64(schedule.seed);

    // Run-global initializations (redrawn per iteration when requested).
    // Actor and critic share one draw when their widths agree; each keeps its
    // own trust radius.
    let actor_init =
        DeepSetParams::init(schedule.width_actor, layout.dim(), schedule.radius_actor, &mut rng)?;
    let deepset_critic_init = if schedule.width_critic == schedule.width_actor {
        actor_init.sibling_with_radius(schedule.radius_critic)
    } else {
        DeepSetParams::init(schedule.width_critic, layout.dim(), schedule.radius_critic, &mut rng)?
    };
    let mlp_width = matched_mlp_width(
        schedule.width_critic,
        layout.dim(),
        (env.num_agents() + 1) * num_states + num_actions,
    );
    let mlp_critic_init = match options.critic_kind {
        CriticKind::Mlp => Some(MlpParams::init(
            mlp_width,
            num_states,
            env.num_agents(),
            num_actions,
            schedule.radius_critic,
            &mut rng,
        )?),
        CriticKind::DeepSet => None,
    };

    // Fixed probe observations for the KL metric.
    let mut probes = Vec::with_capacity(options.probe_count);
    for _ in 0..options.probe_count {
        let config = env.reset(&mut rng);
        let agent = rng.gen_range(0..config.num_agents());
        probes.push(MfObservation::of_agent(&config, agent)?);
    }

    // π₀: exactly uniform (zero energies at temperature 1).
    let mut actor_energies = TabulatedEnergies::zeroed(num_states, num_actions);
    let mut actor_state = actor_init.clone();
    let mut actor_adopted = actor_init;
    let mut deepset_state = deepset_critic_init;
    let mut mlp_state = mlp_critic_init;
    let mut critic_bar = CriticParams::DeepSet(deepset_state.clone());

    let mut records = Vec::with_capacity(schedule.outer_iters);
    for k in 0..schedule.outer_iters {
        let started = Instant::now();
        let tau_k = schedule.tau(k);
        let tau_next = schedule.tau(k + 1);
        let policy_k = TabulatedPolicy { energies: actor_energies.clone(), temperature: tau_k };

        // Policy evaluation.
        let (td_loss, critic_value): (f64, Box<dyn Fn(&MfObservation, usize) -> Result<f64>>) =
            match options.critic_kind {
                CriticKind::DeepSet => {
                    let params = if schedule.per_iteration_reinit {
                        DeepSetParams::init(
                            schedule.width_critic,
                            layout.dim(),
                            schedule.radius_critic,
                            &mut rng,
                        )?
                    } else {
                        deepset_state.clone()
                    };
                    let mut critic =
                        DeepSetCritic { params, layout, counts: Vec::new() };
                    let (loss, averaged) =
                        td_loop(env, &policy_k, &mut critic, schedule, &mut rng)?;
                    // The chain state (last iterate) warm-starts the next
                    // evaluation; the ergodic average is what this iteration
                    // outputs and what the improvement step consumes.  The
                    // frozen averaged critic evaluates identically through
                    // its per-member table; tabulate once for the target pass.
                    deepset_state = critic.params.clone();
                    let mut reported = critic.params;
                    reported.weights = averaged;
                    let table = TabulatedEnergies::from_network(&reported, &layout)?;
                    critic_bar = CriticParams::DeepSet(reported);
                    let n = env.num_agents();
                    (
                        loss,
                        Box::new(move |obs: &MfObservation, a: usize| {
                            let counts = grouped_counts(&obs.population);
                            Ok(table.eval_counts(obs.self_state, &counts, n, a))
                        }),
                    )
                }
                CriticKind::Mlp => {
                    let params = if schedule.per_iteration_reinit {
                        MlpParams::init(
                            mlp_width,
                            num_states,
                            env.num_agents(),
                            num_actions,
                            schedule.radius_critic,
                            &mut rng,
                        )?
                    } else {
                        mlp_state.clone().expect("baseline critic initialized")
                    };
                    let mut critic = MlpCritic { params };
                    let (loss, averaged) =
                        td_loop(env, &policy_k, &mut critic, schedule, &mut rng)?;
                    mlp_state = Some(critic.params.clone());
                    let mut reported = critic.params;
                    reported.weights = averaged;
                    critic_bar = CriticParams::Mlp(reported.clone());
                    (
                        loss,
                        Box::new(move |obs: &MfObservation, a: usize| reported.forward(obs, a)),
                    )
                }
            };

        // Policy improvement.
        let mut actor = if schedule.per_iteration_reinit {
            DeepSetParams::init(
                schedule.width_actor,
                layout.dim(),
                schedule.radius_actor,
                &mut rng,
            )?
        } else {
            let mut warm = actor_state.clone();
            // Re-express the previous energies at the incoming temperature:
            // the regression target is τ_{k+1}(F/υ_k + E_k/τ_k), so the
            // right starting point is (τ_{k+1}/τ_k)·E_k, not E_k.  Starting
            // from the un-rescaled energies lets partially-fitted early
            // iterates compound geometrically in the accumulated logits;
            // the rescale keeps every logit increment weighted equally.
            // Skipped at k = 0 where the energies are identically zero and
            // the ratio τ_1/τ_0 > 1 would only inflate the weights.
            if k >= 1 {
                warm.rescale_function(tau_next / tau_k)?;
            }
            warm
        };
        let prev_table = actor_energies.clone();
        let prev_energy = move |obs: &MfObservation, counts: &[(usize, u32)], a: usize| -> f64 {
            prev_table.eval_counts(obs.self_state, counts, obs.population.num_agents(), a)
        };
        let (improvement_loss, averaged) = improvement_loop(
            env,
            &policy_k,
            &critic_value,
            &prev_energy,
            &mut actor,
            &layout,
            schedule,
            k,
            &mut rng,
        )?;

        // Adopt π_{k+1} from the ergodic average; the chain (last iterate)
        // warm-starts the next improvement step.
        actor_state = actor.clone();
        let mut adopted = actor;
        adopted.weights = averaged;
        actor_energies = TabulatedEnergies::from_network(&adopted, &layout)?;
        actor_adopted = adopted;
        let policy_next =
            TabulatedPolicy { energies: actor_energies.clone(), temperature: tau_next };

        let est_value = estimate_value(env, &policy_next, options.eval_episodes, &mut rng)?;
        let mut kl_sum = 0.0;
        for probe in &probes {
            let p = policy_next.action_distribution(probe)?;
            let q = policy_k.action_distribution(probe)?;
            kl_sum += kl_divergence(&p, &q)?;
        }
        let kl_to_prev = kl_sum / probes.len() as f64;

        for (name, value) in [
            ("td_loss", td_loss),
            ("improvement_loss", improvement_loss),
            ("est_value", est_value),
            ("kl_to_prev", kl_to_prev),
        ] {
            if !value.is_finite() {
                return Err(MfError::NonFinite(format!("{name} = {value} at iteration {k}")));
            }
        }

        if let (Some(dir), Some(every)) = (&options.checkpoint_dir, options.checkpoint_every) {
            if every > 0 && (k + 1) % every == 0 {
                let path = dir.join(format!("actor_{k:04}.ckpt"));
                crate::net::write_checkpoint(&path, &actor_adopted)?;
            }
        }

        records.push(IterationRecord {
            k,
            td_loss,
            improvement_loss,
            est_value,
            kl_to_prev,
            tau_k: tau_next,
            upsilon_k: schedule.upsilon_k(),
            wallclock_ms: started.elapsed().as_millis(),
        });
    }

    Ok(TrainingResult {
        records,
        actor: actor_adopted,
        critic: critic_bar,
        final_temperature: schedule.tau(schedule.outer_iters),
        action_set_size: num_actions,
    })
}
