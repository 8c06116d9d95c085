//! Frozen-network tabulation.
//!
//! A pooled network only ever sees the finite triple set `(s, x, ā)`, so a
//! frozen snapshot can be tabulated once into `|S|²·|Ā|` per-member values and
//! evaluated thereafter by occupancy-weighted lookups.  The table is filled by
//! the same `φ` routine the live network uses and pooled by the same
//! summation, so tabulated evaluation is bit-identical to direct evaluation.

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, MfObservation};

use super::features::FeatureLayout;
use super::{grouped_counts, pooled_mean, DeepSetParams};

/// A frozen energy/value function stored as per-member lookups
/// `phi[s][x][ā]`.
#[derive(Clone, Debug)]
pub struct TabulatedEnergies {
    pub num_states: usize,
    pub num_actions: usize,
    values: Vec<f64>,
}

impl TabulatedEnergies {
    /// The identically-zero table (the energy of the uniform policy).
    pub fn zeroed(num_states: usize, num_actions: usize) -> Self {
        Self { num_states, num_actions, values: vec![0.0; num_states * num_states * num_actions] }
    }

    /// A table from explicit per-member values indexed `(s·S + x)·|Ā| + ā`.
    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_states * num_actions {
            return Err(MfError::LengthMismatch(format!(
                "{} values for a {num_states}²×{num_actions} table",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MfError::NonFinite("tabulated energy".into()));
        }
        Ok(Self { num_states, num_actions, values })
    }

    /// Tabulates a frozen network.
    pub fn from_network(params: &DeepSetParams, layout: &FeatureLayout) -> Result<Self> {
        if layout.dim() != params.dim {
            return Err(MfError::LengthMismatch(format!(
                "network dim {} vs layout dim {}",
                params.dim,
                layout.dim()
            )));
        }
        let ns = layout.num_states;
        let na = layout.num_actions;
        let bias = layout.bias_index();
        let mut values = vec![0.0; ns * ns * na];
        for s in 0..ns {
            for x in 0..ns {
                for a in 0..na {
                    let idx = [s, ns + x, 2 * ns + a, bias];
                    values[(s * ns + x) * na + a] = params.unit_phi(idx);
                }
            }
        }
        Ok(Self { num_states: ns, num_actions: na, values })
    }

    #[inline]
    fn phi(&self, s: usize, x: usize, a: usize) -> f64 {
        self.values[(s * self.num_states + x) * self.num_actions + a]
    }

    /// Pooled evaluation on pre-grouped occupancy counts.
    #[inline]
    pub fn eval_counts(
        &self,
        s: AgentState,
        counts: &[(usize, u32)],
        num_agents: usize,
        abar_id: usize,
    ) -> f64 {
        pooled_mean(counts, num_agents, |x| self.phi(s.0, x, abar_id))
    }

    /// Pooled evaluation for every action at once, written into `out`.
    pub fn eval_all_actions(
        &self,
        s: AgentState,
        counts: &[(usize, u32)],
        num_agents: usize,
        out: &mut Vec<f64>,
    ) {
        out.clear();
        for a in 0..self.num_actions {
            out.push(pooled_mean(counts, num_agents, |x| self.phi(s.0, x, a)));
        }
    }

    /// Convenience evaluation on a full observation.
    pub fn eval(&self, obs: &MfObservation, abar_id: usize) -> f64 {
        let counts = grouped_counts(&obs.population);
        self.eval_counts(obs.self_state, &counts, obs.population.num_agents(), abar_id)
    }
}
