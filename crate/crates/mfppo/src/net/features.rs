//! Per-member feature encoding.
//!
//! A network input is the triple (distinguished state `s`, population member
//! state `x`, shared action index `ā`), encoded as three concatenated one-hot
//! blocks followed by an always-on bias coordinate.  Active entries are one,
//! so a dot product against a weight row is four lookups, and the bias gives
//! the ReLU layer affine capacity.

use crate::error::{MfError, Result};
use crate::mdp::{AgentState, MeanFieldEnv};

/// Block sizes of the `(s, x, ā)` one-hot encoding.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct FeatureLayout {
    pub num_states: usize,
    pub num_actions: usize,
}

impl FeatureLayout {
    pub fn new(num_states: usize, num_actions: usize) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(MfError::InvalidParameter("empty feature layout".into()));
        }
        Ok(Self { num_states, num_actions })
    }

    pub fn for_env<E: MeanFieldEnv + ?Sized>(env: &E) -> Self {
        Self { num_states: env.num_states(), num_actions: env.action_set().len() }
    }

    /// Total encoded dimension `2·|S| + |Ā| + 1` (the `+1` is the bias).
    pub fn dim(&self) -> usize {
        2 * self.num_states + self.num_actions + 1
    }

    /// Index of the always-on bias coordinate (the last one).
    pub fn bias_index(&self) -> usize {
        2 * self.num_states + self.num_actions
    }

    /// The four active coordinates of the encoding of `(s, x, ā)`: the three
    /// one-hot positions and the bias.
    pub fn active_indices(
        &self,
        s: AgentState,
        x: AgentState,
        abar_id: usize,
    ) -> Result<[usize; 4]> {
        if s.0 >= self.num_states || x.0 >= self.num_states {
            return Err(MfError::IndexOutOfRange(format!(
                "state pair ({}, {}) with {} states",
                s.0, x.0, self.num_states
            )));
        }
        if abar_id >= self.num_actions {
            return Err(MfError::IndexOutOfRange(format!(
                "action {abar_id} with {} actions",
                self.num_actions
            )));
        }
        Ok([s.0, self.num_states + x.0, 2 * self.num_states + abar_id, self.bias_index()])
    }
}

/// Dense encoding of `(s, x, ā)`: four entries of one, rest zero.
pub fn encode_features(
    s: AgentState,
    x: AgentState,
    abar_id: usize,
    layout: &FeatureLayout,
) -> Result<Vec<f64>> {
    let idx = layout.active_indices(s, x, abar_id)?;
    let mut v = vec![0.0; layout.dim()];
    for i in idx {
        v[i] = 1.0;
    }
    Ok(v)
}
