//! Multi-agent value-decomposition Q-learning with attention-based advice
//! exchange during training and a pruning regularizer that collapses the
//! exchange so the trained agents can act on local observations alone.
//!
//! Module map:
//! - [`numerics`]: tensors, a reverse-mode tape, layers, optimizers, gradient checking
//! - [`env`]: cooperative environments (matrix games, a gridworld corridor)
//! - [`agent`]: the shared per-agent Q network in centralized and decentralized modes
//! - [`mixer`]: VDN and QMIX mixing networks
//! - [`learner`]: replay buffer, losses, schedules and the update step
//! - [`harness`]: configuration, training and evaluation loops, checkpoints, metrics

pub mod agent;
pub mod env;
pub mod error;
pub mod harness;
pub mod learner;
pub mod mixer;
pub mod numerics;

pub use error::{Error, Result};
