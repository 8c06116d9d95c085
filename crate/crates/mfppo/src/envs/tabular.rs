//! Explicit-table mean-field environments.

use rand::Rng;
use rand::RngCore;

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, JointConfig, LocalActionMap, MeanFieldEnv, StateHistogram};

/// A finite environment given by explicit per-agent kernel and reward tables.
///
/// The per-agent kernel ignores the histogram; the reward is affine in it:
/// `r(s, d, ā) = base[s][ā] + Σ_x weights[ā][x] · d_x`.
#[derive(Clone, Debug)]
pub struct TabularEnv {
    name: String,
    num_agents: usize,
    gamma: f64,
    reward_bound: f64,
    actions: Vec<LocalActionMap>,
    /// `kernel[s][a]` is a dense next-state row for per-agent action `a`.
    kernel: Vec<Vec<Vec<f64>>>,
    reward_base: Vec<Vec<f64>>,
    reward_hist_weights: Vec<Vec<f64>>,
    initial: Vec<f64>,
    /// Sparse kernel rows `(s, a) → [(next, p)]` precomputed for stepping.
    sparse: Vec<Vec<Vec<(AgentState, f64)>>>,
}

fn check_row(row: &[f64], what: &str) -> Result<()> {
    let mut total = 0.0;
    for &p in row {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(MfError::InvalidDistribution(format!("{what}: entry {p}")));
        }
        total += p;
    }
    if (total - 1.0).abs() > 1e-9 {
        return Err(MfError::InvalidDistribution(format!("{what}: sums to {total}")));
    }
    Ok(())
}

impl TabularEnv {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        num_agents: usize,
        gamma: f64,
        reward_bound: f64,
        actions: Vec<LocalActionMap>,
        kernel: Vec<Vec<Vec<f64>>>,
        reward_base: Vec<Vec<f64>>,
        reward_hist_weights: Option<Vec<Vec<f64>>>,
        initial: Option<Vec<f64>>,
    ) -> Result<Self> {
        let num_states = kernel.len();
        if num_states == 0 {
            return Err(MfError::Degenerate("kernel with zero states".into()));
        }
        if num_agents == 0 {
            return Err(MfError::InvalidParameter("zero agents".into()));
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(MfError::InvalidParameter(format!("gamma {gamma} outside [0, 1)")));
        }
        if !(reward_bound > 0.0) {
            return Err(MfError::InvalidParameter(format!("reward bound {reward_bound}")));
        }
        if actions.is_empty() {
            return Err(MfError::Degenerate("empty shared action menu".into()));
        }
        let num_actions = kernel[0].len();
        for (s, per_action) in kernel.iter().enumerate() {
            if per_action.len() != num_actions {
                return Err(MfError::LengthMismatch(format!(
                    "state {s} has {} per-agent actions, state 0 has {num_actions}",
                    per_action.len()
                )));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != num_states {
                    return Err(MfError::LengthMismatch(format!(
                        "kernel row ({s}, {a}) has {} entries for {num_states} states",
                        row.len()
                    )));
                }
                check_row(row, &format!("kernel row ({s}, {a})"))?;
            }
        }
        for (i, abar) in actions.iter().enumerate() {
            if abar.assignment.len() != num_states {
                return Err(MfError::LengthMismatch(format!(
                    "shared map {i} covers {} states of {num_states}",
                    abar.assignment.len()
                )));
            }
            if let Some(&bad) = abar.assignment.iter().find(|&&a| a >= num_actions) {
                return Err(MfError::IndexOutOfRange(format!(
                    "shared map {i} uses per-agent action {bad} of {num_actions}"
                )));
            }
        }
        if reward_base.len() != num_states
            || reward_base.iter().any(|r| r.len() != actions.len())
        {
            return Err(MfError::LengthMismatch(format!(
                "reward_base must be {num_states}×{}",
                actions.len()
            )));
        }
        let weights = match reward_hist_weights {
            Some(w) => {
                if w.len() != actions.len() || w.iter().any(|r| r.len() != num_states) {
                    return Err(MfError::LengthMismatch(format!(
                        "reward_hist_weights must be {}×{num_states}",
                        actions.len()
                    )));
                }
                w
            }
            None => vec![vec![0.0; num_states]; actions.len()],
        };
        // The affine reward attains its extremes at simplex vertices.
        for s in 0..num_states {
            for (a, w) in weights.iter().enumerate() {
                for &wx in w {
                    let r = reward_base[s][a] + wx;
                    if r.abs() > reward_bound + 1e-12 {
                        return Err(MfError::RewardBound(format!(
                            "reward {r} at state {s}, map {a} exceeds bound {reward_bound}"
                        )));
                    }
                }
            }
        }
        let initial = match initial {
            Some(d) => {
                if d.len() != num_states {
                    return Err(MfError::LengthMismatch(format!(
                        "initial distribution over {} states of {num_states}",
                        d.len()
                    )));
                }
                check_row(&d, "initial distribution")?;
                d
            }
            None => vec![1.0 / num_states as f64; num_states],
        };
        let sparse = kernel
            .iter()
            .map(|per_action| {
                per_action
                    .iter()
                    .map(|row| {
                        row.iter()
                            .enumerate()
                            .filter(|(_, &p)| p > 0.0)
                            .map(|(x, &p)| (AgentState(x), p))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            name,
            num_agents,
            gamma,
            reward_bound,
            actions,
            kernel,
            reward_base,
            reward_hist_weights: weights,
            initial,
            sparse,
        })
    }

    /// Dense kernel row for inspection.
    pub fn kernel_row(&self, s: usize, a: usize) -> &[f64] {
        &self.kernel[s][a]
    }
}

impl MeanFieldEnv for TabularEnv {
    fn num_states(&self) -> usize {
        self.kernel.len()
    }

    fn num_agents(&self) -> usize {
        self.num_agents
    }

    fn action_set(&self) -> &[LocalActionMap] {
        &self.actions
    }

    fn gamma(&self) -> f64 {
        self.gamma
    }

    fn reward_bound(&self) -> f64 {
        self.reward_bound
    }

    fn local_kernel(
        &self,
        state: AgentState,
        _hist: &StateHistogram,
        action: usize,
        out: &mut Vec<(AgentState, f64)>,
    ) {
        out.clear();
        out.extend_from_slice(&self.sparse[state.0][action]);
    }

    fn reward(&self, state: AgentState, hist: &StateHistogram, abar: &LocalActionMap) -> f64 {
        // Identify the shared map by pointer-free comparison of assignments.
        let abar_id = self
            .actions
            .iter()
            .position(|candidate| candidate.assignment == abar.assignment)
            .expect("reward queried with a map outside the action menu");
        let mut r = self.reward_base[state.0][abar_id];
        for (x, &w) in self.reward_hist_weights[abar_id].iter().enumerate() {
            r += w * hist.mass[x];
        }
        r
    }

    fn reset(&self, rng: &mut dyn RngCore) -> JointConfig {
        let states = (0..self.num_agents)
            .map(|_| {
                let u = rng.gen::<f64>();
                let mut acc = 0.0;
                let mut chosen = self.initial.len() - 1;
                for (s, &p) in self.initial.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        chosen = s;
                        break;
                    }
                }
                AgentState(chosen)
            })
            .collect();
        JointConfig { states }
    }

    fn name(&self) -> &str {
        &self.name
    }
}
