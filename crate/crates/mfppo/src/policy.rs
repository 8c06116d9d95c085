//! Energy-based softmax policies over the shared action menu.
//!
//! A policy assigns `π(ā | s, d) ∝ exp{F(s, d, ā) / τ}` where the energy `F`
//! is a pooled network and `τ > 0` a temperature.  The zero energy gives the
//! exactly-uniform policy; as `τ → 0` the policy hardens toward the greedy
//! argmax of `F`.

use rand::Rng;
use rand::RngCore;

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, MfObservation};
use crate::net::{DeepSetParams, FeatureLayout, TabulatedEnergies};

/// Anything that maps an observation to a distribution over shared actions.
pub trait Policy {
    fn num_actions(&self) -> usize;

    fn action_distribution(&self, obs: &MfObservation) -> Result<Vec<f64>>;

    fn sample_action(&self, obs: &MfObservation, rng: &mut dyn RngCore) -> Result<usize> {
        let probs = self.action_distribution(obs)?;
        Ok(sample_categorical(&probs, rng))
    }
}

/// Samples an index from a probability vector (assumed valid).
pub fn sample_categorical(probs: &[f64], rng: &mut dyn RngCore) -> usize {
    let u = rng.gen::<f64>();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Numerically-stable softmax of `energies / temperature`.
pub(crate) fn softmax_energies(energies: &[f64], temperature: f64, out: &mut Vec<f64>) -> Result<()> {
    let mut max = f64::NEG_INFINITY;
    for &e in energies {
        if !e.is_finite() {
            return Err(MfError::NonFinite(format!("energy {e}")));
        }
        max = max.max(e);
    }
    out.clear();
    let mut total = 0.0;
    for &e in energies {
        let w = ((e - max) / temperature).exp();
        out.push(w);
        total += w;
    }
    for w in out.iter_mut() {
        *w /= total;
    }
    Ok(())
}

/// The softmax policy induced by a pooled energy network.
#[derive(Clone, Debug)]
pub struct EnergyPolicy {
    pub actor: DeepSetParams,
    pub temperature: f64,
    /// Size of the shared action menu `|Ā|` the actor was built for.
    pub action_set_size: usize,
}

impl EnergyPolicy {
    pub fn new(actor: DeepSetParams, temperature: f64, action_set_size: usize) -> Result<Self> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(MfError::InvalidParameter(format!("temperature {temperature}")));
        }
        if action_set_size == 0 {
            return Err(MfError::InvalidParameter("empty action menu".into()));
        }
        // dim = 2|S| + |Ā| + 1 (two state blocks, action block, bias).
        if actor.dim <= action_set_size + 1 || (actor.dim - action_set_size - 1) % 2 != 0 {
            return Err(MfError::LengthMismatch(format!(
                "actor dim {} incompatible with {} actions",
                actor.dim, action_set_size
            )));
        }
        Ok(Self { actor, temperature, action_set_size })
    }

    /// The exactly-uniform initial policy (zero energy, temperature 1).
    pub fn uniform(layout: &FeatureLayout) -> Self {
        Self {
            actor: DeepSetParams::zeroed(layout.dim()),
            temperature: 1.0,
            action_set_size: layout.num_actions,
        }
    }

    /// The feature layout implied by the actor's dimensions.
    pub fn layout(&self) -> FeatureLayout {
        FeatureLayout {
            num_states: (self.actor.dim - self.action_set_size) / 2,
            num_actions: self.action_set_size,
        }
    }

    /// Raw energies `F(s, d, ·)` for every action.
    pub fn energies(&self, obs: &MfObservation) -> Result<Vec<f64>> {
        let layout = self.layout();
        let counts = crate::net::grouped_counts(&obs.population);
        let n = obs.population.num_agents();
        (0..self.action_set_size)
            .map(|a| self.actor.forward_counts(obs.self_state, &counts, n, a, &layout))
            .collect()
    }

    /// Greedy action (ties broken toward the lowest action id).
    pub fn greedy_action(&self, obs: &MfObservation) -> Result<usize> {
        let energies = self.energies(obs)?;
        let mut best = 0;
        for (i, &e) in energies.iter().enumerate() {
            if !e.is_finite() {
                return Err(MfError::NonFinite(format!("energy {e}")));
            }
            if e > energies[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

impl Policy for EnergyPolicy {
    fn num_actions(&self) -> usize {
        self.action_set_size
    }

    fn action_distribution(&self, obs: &MfObservation) -> Result<Vec<f64>> {
        let energies = self.energies(obs)?;
        let mut probs = Vec::with_capacity(energies.len());
        softmax_energies(&energies, self.temperature, &mut probs)?;
        Ok(probs)
    }
}

/// A softmax policy over a frozen, tabulated energy function.  Used inside
/// training loops where the same snapshot is queried millions of times;
/// evaluates bit-identically to the live [`EnergyPolicy`] it was built from.
#[derive(Clone, Debug)]
pub struct TabulatedPolicy {
    pub energies: TabulatedEnergies,
    pub temperature: f64,
}

impl TabulatedPolicy {
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self { energies: TabulatedEnergies::zeroed(num_states, num_actions), temperature: 1.0 }
    }

    /// Action distribution on pre-grouped counts, written into `probs`.
    pub fn distribution_counts(
        &self,
        s: AgentState,
        counts: &[(usize, u32)],
        num_agents: usize,
        scratch: &mut Vec<f64>,
        probs: &mut Vec<f64>,
    ) -> Result<()> {
        self.energies.eval_all_actions(s, counts, num_agents, scratch);
        softmax_energies(scratch, self.temperature, probs)
    }
}

impl Policy for TabulatedPolicy {
    fn num_actions(&self) -> usize {
        self.energies.num_actions
    }

    fn action_distribution(&self, obs: &MfObservation) -> Result<Vec<f64>> {
        let counts = crate::net::grouped_counts(&obs.population);
        let mut scratch = Vec::new();
        let mut probs = Vec::new();
        self.distribution_counts(
            obs.self_state,
            &counts,
            obs.population.num_agents(),
            &mut scratch,
            &mut probs,
        )?;
        Ok(probs)
    }
}

/// Always plays one fixed shared action.
#[derive(Clone, Copy, Debug)]
pub struct FixedActionPolicy {
    pub abar_id: usize,
    pub num_actions: usize,
}

impl Policy for FixedActionPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_distribution(&self, _obs: &MfObservation) -> Result<Vec<f64>> {
        let mut p = vec![0.0; self.num_actions];
        *p.get_mut(self.abar_id).ok_or_else(|| {
            MfError::IndexOutOfRange(format!("action {} of {}", self.abar_id, self.num_actions))
        })? = 1.0;
        Ok(p)
    }
}

/// The uniform policy over `num_actions` shared actions.
#[derive(Clone, Copy, Debug)]
pub struct UniformPolicy {
    pub num_actions: usize,
}

impl Policy for UniformPolicy {
    fn num_actions(&self) -> usize {
        self.num_actions
    }

    fn action_distribution(&self, _obs: &MfObservation) -> Result<Vec<f64>> {
        Ok(vec![1.0 / self.num_actions as f64; self.num_actions])
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    let mut total = 0.0;
    for &x in p {
        if !(x >= 0.0) || !x.is_finite() {
            return Err(MfError::InvalidDistribution(format!("entry {x}")));
        }
        total += x;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(MfError::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(())
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)`, with `0·ln(0/q) = 0`.
///
/// Errors if the vectors differ in length, are not distributions, or `p` puts
/// mass where `q` has none.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(MfError::LengthMismatch(format!("{} vs {} entries", p.len(), q.len())));
    }
    check_distribution(p)?;
    check_distribution(q)?;
    let mut kl = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if pi > 0.0 {
            if qi <= 0.0 {
                return Err(MfError::InvalidDistribution(
                    "p has mass outside the support of q".into(),
                ));
            }
            kl += pi * (pi / qi).ln();
        }
    }
    // Rounding can push a mathematically nonnegative sum a hair below zero.
    Ok(kl.max(0.0))
}

/// The regression target of the policy-improvement step:
/// `τ_next · (F_Q / υ_k + F_A_prev / τ_k)`.
pub fn improvement_target(
    critic_value: f64,
    prev_energy: f64,
    upsilon_k: f64,
    tau_k: f64,
    tau_next: f64,
) -> Result<f64> {
    for (name, v) in [("upsilon_k", upsilon_k), ("tau_k", tau_k), ("tau_next", tau_next)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(MfError::InvalidParameter(format!("{name} = {v}")));
        }
    }
    Ok(tau_next * (critic_value / upsilon_k + prev_energy / tau_k))
}
