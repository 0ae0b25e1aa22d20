//! Synthetic contaminated/reference pairs: a reference is shown on a
//! virtual striped-subpixel screen, photographed by a virtual sensor through
//! a slightly tilted view, and mapped back onto the reference grid.

mod dataset;
mod moire;
mod references;

pub use dataset::{generate_pairs, load_references, make_dataset, ReferenceSource};
pub use moire::{simulate_capture, simulate_until_valid, MoireParams, SensorPattern, MAX_ATTEMPTS};
pub use references::procedural_reference;
