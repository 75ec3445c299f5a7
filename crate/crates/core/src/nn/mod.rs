//! Dense-tensor neural network kernel: layers with hand-written
//! forward/backward passes, Adam, the shared parameter store, and the
//! finite-difference gradient checker.

pub mod adam;
pub mod gradcheck;
pub mod layers;
pub mod store;

pub use adam::AdamState;
pub use layers::{layer_backward, layer_forward, softmax, Cache, Layer, LayerSpec, Stack};
pub use store::{GlobalStore, GradMap, ParamStore, Snapshot};
