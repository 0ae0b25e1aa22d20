//! The multiresolution moiré removal network.
//!
//! Each branch `i` works at `1/2^(i-1)` of the input resolution. A two-layer
//! downsampling group per scale builds a learned (nonlinear) pyramid; every
//! present branch then runs a cascade of same-resolution 3x3 convolutions,
//! upsamples back with `i-1` transposed convolutions and emits a map with as
//! many channels as the input. The branch maps are summed (or, in the
//! concatenation variant, fused by two extra convolutions).

mod checkpoint;
mod config;
mod inspect;
mod network;
mod plan;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use config::{Fusion, Init, NetworkConfig, Variant, MAX_BRANCHES};
pub use inspect::{inspect_branches, BranchImage};
pub use network::{build_network, BranchOutputs, NetGrads, Network, Trace};
pub use plan::{layer_plan, param_count, LayerKind, LayerSpec, Topology};
