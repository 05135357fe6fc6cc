//! Residual echo suppression network: dense and GRU layers evaluated in
//! 32-bit floating point, plus the `RESW` weight file format.

mod format;
mod layers;
mod model;

pub use format::{load_weights, save_weights, FORMAT_VERSION, MAGIC};
pub use layers::{sigmoid, Activation, DenseLayer, GruLayer};
pub use model::{Layer, LayerKind, LayerRef, LayerRole, NetOutput, NetState, NetworkWeights, INPUT_DIM, ROLES};
