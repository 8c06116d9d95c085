//! Mean-field proximal policy optimization for cooperative multi-agent MDPs.

pub mod envs;
pub mod error;
pub mod mdp;
pub mod net;
pub mod oracle;
pub mod policy;
pub mod symmetry;
pub mod trainer;

pub use error::{MfError, Result};
