//! Seat-ordered baseline network (the negative control for invariance).
//!
//! Consumes the concatenation of the distinguished agent's one-hot state, the
//! one-hot states of all `N` seats *in order*, the one-hot shared action, and
//! an always-on bias coordinate, with active entries of one.  Same frozen-sign
//! two-layer form and trust-region training as [`super::DeepSetParams`], but
//! nothing ties seat blocks together, so permuting agents changes the output.

use rand::RngCore;

use crate::error::{MfError, Result};
use crate::mdp::MfObservation;

use super::{distance_sq, project_to_ball, random_rows, random_signs};

/// Trainable state of the seat-ordered baseline.
#[derive(Clone, PartialEq, Debug)]
pub struct MlpParams {
    pub width: usize,
    pub num_states: usize,
    pub num_agents: usize,
    pub num_actions: usize,
    /// Frozen output signs, `width` entries of ±1.
    pub out_signs: Vec<f64>,
    /// First layer, row-major `width × input_dim()`.
    pub weights: Vec<f64>,
    pub weights_init: Vec<f64>,
    pub radius: f64,
}

impl MlpParams {
    pub fn init(
        width: usize,
        num_states: usize,
        num_agents: usize,
        num_actions: usize,
        radius: f64,
        rng: &mut dyn RngCore,
    ) -> Result<Self> {
        if width == 0 || num_states == 0 || num_agents == 0 || num_actions == 0 {
            return Err(MfError::InvalidParameter("zero-size network".into()));
        }
        if !(radius >= 0.0) {
            return Err(MfError::InvalidParameter(format!("radius {radius}")));
        }
        let dim = (num_agents + 1) * num_states + num_actions + 1;
        let out_signs = random_signs(width, rng);
        let weights = random_rows(width, dim, rng);
        Ok(Self {
            width,
            num_states,
            num_agents,
            num_actions,
            out_signs,
            weights_init: weights.clone(),
            weights,
            radius,
        })
    }

    /// Encoded input dimension: self block, `N` seat blocks, action block,
    /// bias.
    pub fn input_dim(&self) -> usize {
        (self.num_agents + 1) * self.num_states + self.num_actions + 1
    }

    /// The `N + 3` active coordinates for `(obs, ā)` (bias last).
    fn active_indices(&self, obs: &MfObservation, abar_id: usize, out: &mut Vec<usize>) -> Result<()> {
        if obs.population.num_agents() != self.num_agents {
            return Err(MfError::LengthMismatch(format!(
                "network built for {} agents, observation has {}",
                self.num_agents,
                obs.population.num_agents()
            )));
        }
        if abar_id >= self.num_actions {
            return Err(MfError::IndexOutOfRange(format!(
                "action {abar_id} with {} actions",
                self.num_actions
            )));
        }
        out.clear();
        let s = self.num_states;
        if obs.self_state.0 >= s {
            return Err(MfError::IndexOutOfRange(format!("state {}", obs.self_state.0)));
        }
        out.push(obs.self_state.0);
        for (seat, &x) in obs.population.states.iter().enumerate() {
            if x.0 >= s {
                return Err(MfError::IndexOutOfRange(format!("state {}", x.0)));
            }
            out.push(s + seat * s + x.0);
        }
        out.push((self.num_agents + 1) * s + abar_id);
        out.push(self.input_dim() - 1);
        Ok(())
    }

    pub fn forward(&self, obs: &MfObservation, abar_id: usize) -> Result<f64> {
        let mut idx = Vec::with_capacity(self.num_agents + 3);
        self.active_indices(obs, abar_id, &mut idx)?;
        let d = self.input_dim();
        let mut acc = 0.0;
        for j in 0..self.width {
            let row = &self.weights[j * d..(j + 1) * d];
            let mut pre = 0.0;
            for &i in &idx {
                pre += row[i];
            }
            if pre > 0.0 {
                acc += self.out_signs[j] * pre;
            }
        }
        Ok(acc / (self.width as f64).sqrt())
    }

    /// Dense gradient with respect to `weights` (subgradient `1{z > 0}`).
    pub fn grad_weights(&self, obs: &MfObservation, abar_id: usize) -> Result<Vec<f64>> {
        let mut idx = Vec::with_capacity(self.num_agents + 3);
        self.active_indices(obs, abar_id, &mut idx)?;
        let d = self.input_dim();
        let root_m = (self.width as f64).sqrt();
        let mut grad = vec![0.0; self.width * d];
        for j in 0..self.width {
            let row = &self.weights[j * d..(j + 1) * d];
            let mut pre = 0.0;
            for &i in &idx {
                pre += row[i];
            }
            if pre > 0.0 {
                let coef = self.out_signs[j] / root_m;
                for &i in &idx {
                    grad[j * d + i] += coef;
                }
            }
        }
        Ok(grad)
    }

    /// Sparse step `weights ← weights − step · ∇F(obs, ā)`; project afterwards.
    pub fn sgd_step(&mut self, obs: &MfObservation, abar_id: usize, step: f64) -> Result<()> {
        let mut idx = Vec::with_capacity(self.num_agents + 3);
        self.active_indices(obs, abar_id, &mut idx)?;
        let d = self.input_dim();
        let root_m = (self.width as f64).sqrt();
        for j in 0..self.width {
            let row = &mut self.weights[j * d..(j + 1) * d];
            let mut pre = 0.0;
            for &i in &idx {
                pre += row[i];
            }
            if pre > 0.0 {
                // Repeated indices (several seats in one state) get one term
                // per occurrence, matching the dense gradient.
                let k = step * self.out_signs[j] / root_m;
                for &i in &idx {
                    row[i] -= k;
                }
            }
        }
        Ok(())
    }

    pub fn distance_from_init(&self) -> f64 {
        distance_sq(&self.weights, &self.weights_init).sqrt()
    }

    pub fn project_ball(&mut self) -> f64 {
        project_to_ball(&mut self.weights, &self.weights_init, self.radius)
    }

    /// Trainable parameter count (the tensor the trust region acts on).
    pub fn param_count(&self) -> usize {
        self.width * self.input_dim()
    }
}

/// Width giving the baseline the same trainable parameter count as a pooled
/// network of `width × dim` weights, rounded to the nearest integer.
pub fn matched_mlp_width(pooled_width: usize, pooled_dim: usize, mlp_input_dim: usize) -> usize {
    let target = pooled_width * pooled_dim;
    ((target as f64 / mlp_input_dim as f64).round() as usize).max(1)
}
