//! Approximate nearest-neighbor search and k-NN graph construction built on
//! randomized Hilbert space-filling curve orders.
//!
//! Points are sorted along several Hilbert curves that differ only in a random
//! axis permutation. Candidates harvested from windows in those orders are
//! filtered by the Hamming distance of binary sketches and re-ranked by vector
//! distance. Sketches cost no extra memory: each sketch bit is the top bit of
//! a 4-bit scalar quantization code.
//!
//! The crate exposes two pipelines:
//!
//! * [`index::AnnIndex`] — build once, answer batched k-NN queries
//!   (forest of leaf-compressed Hilbert trees, master order, packed codes).
//! * [`graph::build_graph`] — construct an approximate k-NN graph over all
//!   points with per-pass scratch that does not grow with the number of
//!   Hilbert orders used.
//!
//! See the `examples/` directory for one runnable program per capability, and
//! the `hilbert-forest` binary for a file-based CLI over the same operations.

mod binfmt;

pub mod cli;
pub mod codes;
pub mod curve;
pub mod dataset;
pub mod dist;
pub mod error;
pub mod eval;
pub mod forest;
pub mod graph;
pub mod index;

pub use crate::curve::{Bounds, CurveConfig, GridPoint, HilbertKey, HilbertOrder};
pub use crate::dataset::{ResultSet, VectorDataset};
pub use crate::error::{Error, Result};
