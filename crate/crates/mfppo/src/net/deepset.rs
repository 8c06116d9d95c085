//! The permutation-invariant value network.
//!
//! `F(s, d, ā) = (1/(√m·N)) Σ_j Σ_{x ∈ population} u_j · σ(w_jᵀ ψ(s, x, ā))`
//! where `ψ` is the three-hot encoding from [`super::features`], `σ` is ReLU
//! with subgradient `1{z > 0}` (zero exactly at the kink), the signs `u_j`
//! are frozen at initialization, and the rows `w_j` are trained inside the
//! ball `‖w − w_init‖₂ ≤ radius`.  Summing a per-member statistic over the
//! population makes the function invariant to agent relabeling by
//! construction.

use rand::RngCore;

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, MfObservation};

use super::features::FeatureLayout;
use super::{distance_sq, grouped_counts, pooled_mean, project_to_ball, random_rows, random_signs};

/// Trainable state of one pooled two-layer network.
#[derive(Clone, PartialEq, Debug)]
pub struct DeepSetParams {
    /// Hidden width `m`.
    pub width: usize,
    /// Input dimension `d` (must equal the layout's `dim()`).
    pub dim: usize,
    /// Frozen output signs, `width` entries of ±1.
    pub out_signs: Vec<f64>,
    /// First layer, row-major `width × dim`; the only trained tensor.
    pub weights: Vec<f64>,
    /// Snapshot of `weights` at initialization; center of the trust ball.
    pub weights_init: Vec<f64>,
    /// Trust-ball radius around `weights_init`.
    pub radius: f64,
}

impl DeepSetParams {
    /// Random initialization: signs uniform on ±1, rows from N(0, I/d), drawn
    /// in antithetic pairs so an even-width network starts as the exactly-zero
    /// function (see the module helpers for why).
    ///
    /// Draw order (signs first, then rows) is fixed so seeded runs are
    /// reproducible across builds.
    pub fn init(width: usize, dim: usize, radius: f64, rng: &mut dyn RngCore) -> Result<Self> {
        if width == 0 || dim == 0 {
            return Err(MfError::InvalidParameter("zero-size network".into()));
        }
        if !(radius >= 0.0) {
            return Err(MfError::InvalidParameter(format!("radius {radius}")));
        }
        let out_signs = random_signs(width, rng);
        let weights = random_rows(width, dim, rng);
        Ok(Self { width, dim, out_signs, weights_init: weights.clone(), weights, radius })
    }

    /// The all-zero network: identically zero output, hence (as an energy)
    /// the exactly-uniform policy.
    pub fn zeroed(dim: usize) -> Self {
        Self {
            width: 1,
            dim,
            out_signs: vec![1.0],
            weights: vec![0.0; dim],
            weights_init: vec![0.0; dim],
            radius: 0.0,
        }
    }

    /// A fresh trainee sharing this network's frozen signs and initial rows,
    /// reset to the initial point, with its own trust radius.
    pub fn sibling_with_radius(&self, radius: f64) -> Self {
        Self { weights: self.weights_init.clone(), radius, ..self.clone() }
    }

    /// Scale the function this network computes by `factor ≥ 0`, exactly:
    /// `σ(ρ·z) = ρ·σ(z)` for ρ ≥ 0, so multiplying every first-layer row by
    /// `factor` multiplies the output by `factor` without moving a single
    /// ReLU gate.  Used to re-express an energy network at a new softmax
    /// temperature between optimization phases.  The rows move radially
    /// relative to `weights_init`, so callers that keep a binding trust ball
    /// must budget `radius` for the accumulated shrinkage (at most
    /// `‖weights_init‖`).
    pub fn rescale_function(&mut self, factor: f64) -> Result<()> {
        if !(factor >= 0.0) || !factor.is_finite() {
            return Err(MfError::InvalidParameter(format!("rescale factor {factor}")));
        }
        for w in &mut self.weights {
            *w *= factor;
        }
        Ok(())
    }

    fn check_layout(&self, layout: &FeatureLayout) -> Result<()> {
        if layout.dim() != self.dim {
            return Err(MfError::LengthMismatch(format!(
                "network dim {} vs layout dim {}",
                self.dim,
                layout.dim()
            )));
        }
        Ok(())
    }

    /// Per-member statistic `φ(s, x, ā) = (1/√m) Σ_j u_j σ(w_jᵀψ)` given the
    /// four active coordinates of `ψ`.
    pub(crate) fn unit_phi(&self, idx: [usize; 4]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for j in 0..self.width {
            let row = &self.weights[j * d..(j + 1) * d];
            let pre = row[idx[0]] + row[idx[1]] + row[idx[2]] + row[idx[3]];
            if pre > 0.0 {
                acc += self.out_signs[j] * pre;
            }
        }
        acc / (self.width as f64).sqrt()
    }

    /// As [`Self::unit_phi`] but with every ReLU gate frozen at its sign at
    /// initialization: the linearized model `F⁰`.
    pub(crate) fn unit_phi_linearized(&self, idx: [usize; 4]) -> f64 {
        let d = self.dim;
        let mut acc = 0.0;
        for j in 0..self.width {
            let row0 = &self.weights_init[j * d..(j + 1) * d];
            let pre0 = row0[idx[0]] + row0[idx[1]] + row0[idx[2]] + row0[idx[3]];
            if pre0 > 0.0 {
                let row = &self.weights[j * d..(j + 1) * d];
                acc += self.out_signs[j]
                    * (row[idx[0]] + row[idx[1]] + row[idx[2]] + row[idx[3]]);
            }
        }
        acc / (self.width as f64).sqrt()
    }

    /// Pooled forward pass on pre-grouped occupancy counts.
    pub fn forward_counts(
        &self,
        s: AgentState,
        counts: &[(usize, u32)],
        num_agents: usize,
        abar_id: usize,
        layout: &FeatureLayout,
    ) -> Result<f64> {
        self.check_layout(layout)?;
        // Validate once via the largest member index.
        for &(x, _) in counts {
            layout.active_indices(s, AgentState(x), abar_id)?;
        }
        let bias = layout.bias_index();
        Ok(pooled_mean(counts, num_agents, |x| {
            let idx = [s.0, layout.num_states + x, 2 * layout.num_states + abar_id, bias];
            self.unit_phi(idx)
        }))
    }

    /// Full forward pass `F(s, d, ā)` on an observation.
    pub fn forward(&self, obs: &MfObservation, abar_id: usize, layout: &FeatureLayout) -> Result<f64> {
        let counts = grouped_counts(&obs.population);
        self.forward_counts(obs.self_state, &counts, obs.population.num_agents(), abar_id, layout)
    }

    /// Linearized forward pass `F⁰(s, d, ā)` (gates frozen at init).
    pub fn forward_linearized(
        &self,
        obs: &MfObservation,
        abar_id: usize,
        layout: &FeatureLayout,
    ) -> Result<f64> {
        self.check_layout(layout)?;
        let counts = grouped_counts(&obs.population);
        for &(x, _) in &counts {
            layout.active_indices(obs.self_state, AgentState(x), abar_id)?;
        }
        let bias = layout.bias_index();
        Ok(pooled_mean(&counts, obs.population.num_agents(), |x| {
            let idx = [
                obs.self_state.0,
                layout.num_states + x,
                2 * layout.num_states + abar_id,
                bias,
            ];
            self.unit_phi_linearized(idx)
        }))
    }

    /// Dense gradient of the forward pass with respect to `weights`
    /// (row-major `width × dim`), using the `1{z > 0}` subgradient.
    pub fn grad_weights(
        &self,
        obs: &MfObservation,
        abar_id: usize,
        layout: &FeatureLayout,
    ) -> Result<Vec<f64>> {
        self.check_layout(layout)?;
        let counts = grouped_counts(&obs.population);
        let n = obs.population.num_agents() as f64;
        let d = self.dim;
        let root_m = (self.width as f64).sqrt();
        let mut grad = vec![0.0; self.width * d];
        let i0 = obs.self_state.0;
        let i2 = 2 * layout.num_states + abar_id;
        let i3 = layout.bias_index();
        for &(x, c) in &counts {
            let idx = layout.active_indices(obs.self_state, AgentState(x), abar_id)?;
            let i1 = idx[1];
            for j in 0..self.width {
                let row = &self.weights[j * d..(j + 1) * d];
                let pre = row[i0] + row[i1] + row[i2] + row[i3];
                if pre > 0.0 {
                    let coef = self.out_signs[j] * c as f64 / (root_m * n);
                    grad[j * d + i0] += coef;
                    grad[j * d + i1] += coef;
                    grad[j * d + i2] += coef;
                    grad[j * d + i3] += coef;
                }
            }
        }
        Ok(grad)
    }

    /// One semi-gradient step `weights ← weights − step · ∇F(s, d, ā)` done
    /// sparsely (only the active coordinates of open units are touched).
    ///
    /// Call [`Self::project_ball`] afterwards to re-enter the trust region.
    pub fn sgd_step_counts(
        &mut self,
        s: AgentState,
        counts: &[(usize, u32)],
        num_agents: usize,
        abar_id: usize,
        layout: &FeatureLayout,
        step: f64,
    ) {
        let d = self.dim;
        let root_m = (self.width as f64).sqrt();
        let i0 = s.0;
        let i2 = 2 * layout.num_states + abar_id;
        let i3 = layout.bias_index();
        let base = layout.num_states;
        for j in 0..self.width {
            let row = &mut self.weights[j * d..(j + 1) * d];
            let k = step * self.out_signs[j] / (root_m * num_agents as f64);
            // Gates read only the i0/i2/i3 coordinates we defer and the
            // distinct i1 coordinate of the current member, so in-place
            // updates are safe.
            let mut open: u32 = 0;
            for &(x, c) in counts {
                let i1 = base + x;
                let pre = row[i0] + row[i1] + row[i2] + row[i3];
                if pre > 0.0 {
                    open += c;
                    row[i1] -= k * c as f64;
                }
            }
            if open > 0 {
                row[i0] -= k * open as f64;
                row[i2] -= k * open as f64;
                row[i3] -= k * open as f64;
            }
        }
    }

    /// Distance of the trained rows from their initial draw.
    pub fn distance_from_init(&self) -> f64 {
        distance_sq(&self.weights, &self.weights_init).sqrt()
    }

    /// Projects back onto the trust ball; returns the distance before
    /// projection.
    pub fn project_ball(&mut self) -> f64 {
        project_to_ball(&mut self.weights, &self.weights_init, self.radius)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::JointConfig;
    use crate::net::encode_features;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_obs(
        num_agents: usize,
        num_states: usize,
        rng: &mut ChaCha8Rng,
    ) -> MfObservation {
        let states: Vec<AgentState> =
            (0..num_agents).map(|_| AgentState(rng.gen_range(0..num_states))).collect();
        let config = JointConfig::new(states).unwrap();
        MfObservation::of_agent(&config, rng.gen_range(0..num_agents)).unwrap()
    }

    /// Direct reimplementation via dense features and explicit loops: the
    /// reference the fast path is checked against.
    fn naive_forward(
        p: &DeepSetParams,
        obs: &MfObservation,
        abar_id: usize,
        layout: &FeatureLayout,
    ) -> f64 {
        let n = obs.population.num_agents() as f64;
        let mut total = 0.0;
        for &x in &obs.population.states {
            let psi = encode_features(obs.self_state, x, abar_id, layout).unwrap();
            for j in 0..p.width {
                let row = &p.weights[j * p.dim..(j + 1) * p.dim];
                let pre: f64 = row.iter().zip(&psi).map(|(w, f)| w * f).sum();
                if pre > 0.0 {
                    total += p.out_signs[j] * pre;
                }
            }
        }
        total / ((p.width as f64).sqrt() * n)
    }

    #[test]
    fn forward_matches_naive_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let layout = FeatureLayout::new(5, 4).unwrap();
        for _ in 0..50 {
            let p = DeepSetParams::init(17, layout.dim(), 10.0, &mut rng).unwrap();
            let obs = random_obs(6, 5, &mut rng);
            let a = rng.gen_range(0..4);
            let fast = p.forward(&obs, a, &layout).unwrap();
            let slow = naive_forward(&p, &obs, a, &layout);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn zeroed_network_outputs_exactly_zero() {
        let layout = FeatureLayout::new(3, 2).unwrap();
        let p = DeepSetParams::zeroed(layout.dim());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let obs = random_obs(4, 3, &mut rng);
            assert_eq!(p.forward(&obs, 1, &layout).unwrap(), 0.0);
        }
    }

    #[test]
    fn even_width_init_is_the_zero_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        let layout = FeatureLayout::new(5, 3).unwrap();
        let p = DeepSetParams::init(64, layout.dim(), 2.0, &mut rng).unwrap();
        for _ in 0..50 {
            let obs = random_obs(4, 5, &mut rng);
            let a = rng.gen_range(0..3);
            assert_eq!(p.forward(&obs, a, &layout).unwrap(), 0.0);
        }
        // A perturbed copy is not the zero function: the cancellation is a
        // property of the paired initial point, not of the architecture.
        let mut q = p.clone();
        for w in q.weights.iter_mut() {
            *w += 0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let obs = random_obs(4, 5, &mut rng);
        assert!(q.forward(&obs, 0, &layout).unwrap().abs() > 0.0);
    }

    #[test]
    fn rescale_scales_the_function_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let layout = FeatureLayout::new(5, 3).unwrap();
        let mut p = DeepSetParams::init(32, layout.dim(), 5.0, &mut rng).unwrap();
        // Move off the paired initial point so the compared values are nonzero.
        for w in p.weights.iter_mut() {
            *w += 0.3 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        let mut scaled = p.clone();
        scaled.rescale_function(0.375).unwrap();
        for _ in 0..50 {
            let obs = random_obs(4, 5, &mut rng);
            let a = rng.gen_range(0..3);
            let before = p.forward(&obs, a, &layout).unwrap();
            let after = scaled.forward(&obs, a, &layout).unwrap();
            assert!(
                (after - 0.375 * before).abs() < 1e-12,
                "{after} vs 0.375 × {before}"
            );
        }
        assert!(scaled.rescale_function(-1.0).is_err());
        assert!(scaled.rescale_function(f64::NAN).is_err());
    }

    #[test]
    fn forward_is_permutation_invariant_bitwise() {
        use crate::symmetry::{apply_permutation, Permutation};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layout = FeatureLayout::new(4, 3).unwrap();
        let mut p = DeepSetParams::init(32, layout.dim(), 5.0, &mut rng).unwrap();
        // Move off the paired initial point so the compared values are nonzero.
        for w in p.weights.iter_mut() {
            *w += 0.2 * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
        for _ in 0..100 {
            let obs = random_obs(7, 4, &mut rng);
            let perm = Permutation::random(7, &mut rng).unwrap();
            let permuted = MfObservation::new(
                obs.self_state,
                apply_permutation(&obs.population, &perm).unwrap(),
            )
            .unwrap();
            let a = rng.gen_range(0..3);
            // Grouping by sorted state makes the two evaluations the same
            // float program, so equality is exact, not approximate.
            assert_eq!(p.forward(&obs, a, &layout).unwrap(), p.forward(&permuted, a, &layout).unwrap());
        }
    }

    #[test]
    fn linearized_equals_forward_at_init() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = FeatureLayout::new(4, 2).unwrap();
        let p = DeepSetParams::init(16, layout.dim(), 3.0, &mut rng).unwrap();
        for _ in 0..20 {
            let obs = random_obs(5, 4, &mut rng);
            let f = p.forward(&obs, 1, &layout).unwrap();
            let f0 = p.forward_linearized(&obs, 1, &layout).unwrap();
            assert!((f - f0).abs() < 1e-15);
        }
    }

    #[test]
    fn sparse_step_matches_dense_gradient_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let layout = FeatureLayout::new(5, 3).unwrap();
        for _ in 0..20 {
            let p = DeepSetParams::init(8, layout.dim(), 10.0, &mut rng).unwrap();
            let obs = random_obs(6, 5, &mut rng);
            let a = rng.gen_range(0..3);
            let step = 0.37;

            let grad = p.grad_weights(&obs, a, &layout).unwrap();
            let mut dense = p.clone();
            for (w, g) in dense.weights.iter_mut().zip(&grad) {
                *w -= step * g;
            }

            let mut sparse = p.clone();
            let counts = grouped_counts(&obs.population);
            sparse.sgd_step_counts(
                obs.self_state,
                &counts,
                obs.population.num_agents(),
                a,
                &layout,
                step,
            );

            for (a, b) in dense.weights.iter().zip(&sparse.weights) {
                assert!((a - b).abs() < 1e-13, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn projection_keeps_iterates_inside_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = FeatureLayout::new(3, 2).unwrap();
        let mut p = DeepSetParams::init(4, layout.dim(), 0.05, &mut rng).unwrap();
        let counts = vec![(0, 2u32), (2, 1u32)];
        for _ in 0..200 {
            p.sgd_step_counts(AgentState(1), &counts, 3, 0, &layout, 0.5);
            p.project_ball();
            assert!(p.distance_from_init() <= p.radius + 1e-12);
        }
    }

    #[test]
    fn init_is_seed_reproducible() {
        let layout = FeatureLayout::new(3, 2).unwrap();
        let a = DeepSetParams::init(6, layout.dim(), 1.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        let b = DeepSetParams::init(6, layout.dim(), 1.0, &mut ChaCha8Rng::seed_from_u64(77)).unwrap();
        assert_eq!(a, b);
    }
}
