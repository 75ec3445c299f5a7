//! A self-contained deep reinforcement learning engine: tabular Q-learning
//! and Double Q-learning, DQN with experience replay, and the asynchronous
//! advantage actor-critic family (vanilla, double-value, and less-shared
//! double-value networks), built on an in-crate dense-tensor kernel and
//! verified against exact oracles on small built-in environments.

pub mod arch;
pub mod dqn;
pub mod env;
pub mod harness;
pub mod error;
pub mod nn;
pub mod rng;
pub mod scalar;
pub mod tabular;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Tensor;
