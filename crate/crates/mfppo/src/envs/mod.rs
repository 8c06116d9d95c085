//! Concrete mean-field environments and the named-scenario registry.
//!
//! Three families ship with the crate: explicit [`TabularEnv`]s, grid-world
//! cooperative navigation ([`GridNavEnv`]), and grid-world cooperative push
//! ([`GridPushEnv`]).  Environments can also be described in a TOML config
//! via [`EnvSpec`], either inline or by scenario name.

mod grid;
mod tabular;

pub use grid::{navigation_reward, push_reward, GridNavEnv, GridPushEnv, GridWorldSpec, RebalanceRule};
pub use tabular::TabularEnv;

/// Builds a cooperative-navigation environment over `spec`'s grid.
pub fn make_navigation_env(
    spec: GridWorldSpec,
    landmarks: Vec<(usize, usize)>,
) -> Result<GridNavEnv> {
    GridNavEnv::new(spec, landmarks, "navigation")
}

/// Builds a cooperative-push environment over `spec`'s grid.
pub fn make_push_env(spec: GridWorldSpec, landmark: (usize, usize)) -> Result<GridPushEnv> {
    GridPushEnv::new(spec, landmark, "push")
}

use serde::Deserialize;

use crate::error::{MfError, Result};
use crate::mdp::MeanFieldEnv;

/// Builds the environment a scenario name stands for.
///
/// Known names: `nav-3x3-n2`, `nav-4x4-n4`, `push-4x4-n3`, `tabular-3s-n4`.
pub fn scenario(name: &str) -> Result<Box<dyn MeanFieldEnv>> {
    match name {
        "nav-3x3-n2" => Ok(Box::new(GridNavEnv::new(
            GridWorldSpec { side: 3, num_agents: 2, gamma: 0.9, slip: 0.1 },
            vec![(0, 0), (2, 2), (0, 2)],
            name,
        )?)),
        "nav-4x4-n4" => Ok(Box::new(GridNavEnv::new(
            GridWorldSpec { side: 4, num_agents: 4, gamma: 0.9, slip: 0.1 },
            vec![(0, 0), (3, 0), (0, 3), (3, 3)],
            name,
        )?)),
        "push-4x4-n3" => Ok(Box::new(GridPushEnv::new(
            GridWorldSpec { side: 4, num_agents: 3, gamma: 0.9, slip: 0.05 },
            (3, 3),
            name,
        )?)),
        "tabular-3s-n4" => Ok(Box::new(tabular_3s_n4())),
        other => Err(MfError::Config(format!(
            "unknown scenario {other:?}; known: {}",
            scenario_names().join(", ")
        ))),
    }
}

pub fn scenario_names() -> Vec<&'static str> {
    vec!["nav-3x3-n2", "nav-4x4-n4", "push-4x4-n3", "tabular-3s-n4"]
}

/// A small drift chain: three states, four agents, two shared actions that
/// pull the population toward opposite ends.  The per-agent kernel ignores
/// the histogram and the reward is affine in it, which keeps the exact
/// action-value function inside the pooled networks' function class — the
/// reference instance for TD-against-oracle checks.
fn tabular_3s_n4() -> TabularEnv {
    use crate::mdp::LocalActionMap;
    TabularEnv::new(
        "tabular-3s-n4".into(),
        4,
        0.9,
        1.0,
        vec![LocalActionMap::constant(3, 0), LocalActionMap::constant(3, 1)],
        // kernel[s][a]: action 0 drifts toward state 0, action 1 toward state 2
        vec![
            vec![vec![0.80, 0.15, 0.05], vec![0.40, 0.30, 0.30]],
            vec![vec![0.50, 0.40, 0.10], vec![0.10, 0.40, 0.50]],
            vec![vec![0.30, 0.30, 0.40], vec![0.05, 0.15, 0.80]],
        ],
        vec![vec![-0.70, -0.20], vec![-0.45, -0.45], vec![-0.20, -0.70]],
        Some(vec![vec![-0.10, -0.05, 0.00], vec![0.00, -0.05, -0.10]]),
        None,
    )
    .expect("built-in scenario tables are valid")
}

/// Declarative environment description for config files.
#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvSpec {
    /// One of the named built-in scenarios.
    Scenario { name: String },
    /// Grid-world cooperative navigation.
    Navigation {
        side: usize,
        num_agents: usize,
        gamma: f64,
        slip: f64,
        landmarks: Vec<[usize; 2]>,
    },
    /// Grid-world cooperative push.
    Push { side: usize, num_agents: usize, gamma: f64, slip: f64, landmark: [usize; 2] },
    /// Fully explicit tables.
    Tabular {
        num_states: usize,
        num_agents: usize,
        gamma: f64,
        reward_bound: f64,
        /// Each entry is one shared map: per-state per-agent action ids.
        action_set: Vec<Vec<usize>>,
        /// `kernel[s][a]` is the next-state distribution row.
        kernel: Vec<Vec<Vec<f64>>>,
        /// `reward_base[s][abar]`.
        reward_base: Vec<Vec<f64>>,
        /// Optional `reward_hist_weights[abar][x]`; reward is
        /// `base[s][abar] + Σ_x weights[abar][x]·hist[x]`.
        reward_hist_weights: Option<Vec<Vec<f64>>>,
        /// Initial per-agent state distribution (default uniform).
        initial: Option<Vec<f64>>,
    },
}

impl EnvSpec {
    pub fn build(&self) -> Result<Box<dyn MeanFieldEnv>> {
        match self {
            EnvSpec::Scenario { name } => scenario(name),
            EnvSpec::Navigation { side, num_agents, gamma, slip, landmarks } => {
                Ok(Box::new(GridNavEnv::new(
                    GridWorldSpec {
                        side: *side,
                        num_agents: *num_agents,
                        gamma: *gamma,
                        slip: *slip,
                    },
                    landmarks.iter().map(|&[x, y]| (x, y)).collect(),
                    "navigation",
                )?))
            }
            EnvSpec::Push { side, num_agents, gamma, slip, landmark } => {
                Ok(Box::new(GridPushEnv::new(
                    GridWorldSpec {
                        side: *side,
                        num_agents: *num_agents,
                        gamma: *gamma,
                        slip: *slip,
                    },
                    (landmark[0], landmark[1]),
                    "push",
                )?))
            }
            EnvSpec::Tabular {
                num_states,
                num_agents,
                gamma,
                reward_bound,
                action_set,
                kernel,
                reward_base,
                reward_hist_weights,
                initial,
            } => {
                use crate::mdp::LocalActionMap;
                let actions = action_set
                    .iter()
                    .map(|a| LocalActionMap::new(a.clone()))
                    .collect::<Result<Vec<_>>>()?;
                let _ = num_states; // validated against table shapes by the constructor
                Ok(Box::new(TabularEnv::new(
                    "tabular".into(),
                    *num_agents,
                    *gamma,
                    *reward_bound,
                    actions,
                    kernel.clone(),
                    reward_base.clone(),
                    reward_hist_weights.clone(),
                    initial.clone(),
                )?))
            }
        }
    }
}
