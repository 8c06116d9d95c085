//! Two-layer value networks over mean-field observations.
//!
//! The main model ([`DeepSetParams`]) pools a shared per-member feature map
//! over the population, so it is permutation-invariant by construction; the
//! contrast model ([`MlpParams`]) consumes the seat-ordered concatenation and
//! is not.  Both freeze their output signs at initialization and train only
//! the first layer inside a ball around its initial draw.

mod checkpoint;
mod deepset;
mod features;
mod mlp;
mod table;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use deepset::DeepSetParams;
pub use features::{encode_features, FeatureLayout};
pub use mlp::{matched_mlp_width, MlpParams};
pub use table::TabulatedEnergies;

use rand::Rng;
use rand::RngCore;
use rand_distr::StandardNormal;

/// Draws the frozen ±1 output layer in antithetic pairs: unit `2i+1` gets the
/// opposite sign of unit `2i`, while each single sign stays uniform on ±1.
fn random_signs(width: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let mut signs = Vec::with_capacity(width);
    while signs.len() < width {
        let u = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        signs.push(u);
        if signs.len() < width {
            signs.push(-u);
        }
    }
    signs
}

/// Draws first-layer rows from N(0, I/dim) — unit expected row norm — with
/// each draw duplicated across an antithetic pair (unit `2i+1` starts at unit
/// `2i`'s row).
///
/// Paired rows and opposite signs cancel member-for-member, so a freshly
/// initialized even-width network is the *exactly-zero function*: the first
/// policy is exactly uniform and no initialization noise leaks into the
/// energies that training accumulates.  Training breaks the ties immediately
/// (the paired units receive mirrored gradients), and every marginal keeps
/// the stated distribution.
fn random_rows(width: usize, dim: usize, rng: &mut dyn RngCore) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    let mut rows = Vec::with_capacity(width * dim);
    while rows.len() < width * dim {
        let row: Vec<f64> =
            (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
        rows.extend_from_slice(&row);
        if rows.len() < width * dim {
            rows.extend_from_slice(&row);
        }
    }
    rows
}

/// Squared distance between a weight vector and its initial draw.
fn distance_sq(weights: &[f64], init: &[f64]) -> f64 {
    weights.iter().zip(init).map(|(w, w0)| (w - w0) * (w - w0)).sum()
}

/// Projects `weights` back onto the ball of `radius` around `init` if it left
/// it; returns the distance before projection.
fn project_to_ball(weights: &mut [f64], init: &[f64], radius: f64) -> f64 {
    let dist = distance_sq(weights, init).sqrt();
    if dist > radius && dist > 0.0 {
        let shrink = radius / dist;
        for (w, &w0) in weights.iter_mut().zip(init) {
            *w = w0 + (*w - w0) * shrink;
        }
    }
    dist
}

/// Population occupancy as sorted `(state, count)` pairs; the canonical
/// summation order for every pooled evaluation in this crate.
pub fn grouped_counts(config: &crate::mdp::JointConfig) -> Vec<(usize, u32)> {
    let mut grouped = Vec::new();
    grouped_counts_into(config, &mut grouped);
    grouped
}

/// As [`grouped_counts`], reusing `out`'s allocation.
pub fn grouped_counts_into(config: &crate::mdp::JointConfig, out: &mut Vec<(usize, u32)>) {
    out.clear();
    let mut states: Vec<usize> = config.states.iter().map(|s| s.0).collect();
    states.sort_unstable();
    for s in states {
        match out.last_mut() {
            Some(last) if last.0 == s => last.1 += 1,
            _ => out.push((s, 1)),
        }
    }
}

/// Population-mean of a per-member statistic: `(Σ_x count(x)·phi(x)) / N`.
///
/// Every pooled forward pass (direct, linearized, tabulated) funnels through
/// this one loop so their floating-point results agree bit for bit.
pub(crate) fn pooled_mean(counts: &[(usize, u32)], num_agents: usize, phi: impl Fn(usize) -> f64) -> f64 {
    let mut acc = 0.0;
    for &(x, c) in counts {
        acc += c as f64 * phi(x);
    }
    acc / num_agents as f64
}
