//! Cross-stage sparse attention.
//!
//! The pipeline predicts attention scores with shift-only arithmetic
//! ([`dlzs`]), keeps the top columns of every row with segmented,
//! radius-pruned selection ([`sads`]) and attends over the survivors with a
//! tiled engine whose update order follows the selection ([`sufa`]).
//! [`cost`] turns operation counters into equivalent-add complexity and
//! [`mesh`] distributes the attention stage over a 2D mesh of compute units.

pub mod cost;
pub mod dlzs;
pub mod error;
pub mod io;
pub mod mesh;
pub mod numerics;
pub mod pipeline;
pub mod sads;
pub mod sufa;
pub mod workload;

pub use error::{Error, Result};
pub use numerics::{
    counters_merge, dense_attention, quantize, softmax_row, AttentionConfig, IntMatrix, OpCounters, QuantTensor,
    RealMatrix,
};
