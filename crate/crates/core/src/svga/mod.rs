//! Sparse vision graph attention.
//!
//! Each pixel is connected to every K-th pixel along its column and row.
//! Because the pattern is identical for every pixel, max-relative graph
//! convolution reduces to a sequence of circular rolls with no graph
//! construction and no 4D→3D reshapes. [`mrconv_gather_oracle`] realizes
//! the same graph by explicit neighbor gather and must agree bitwise with
//! [`mrconv_roll`].

mod block;
pub mod grad;
mod graph;
mod mrconv;

pub use block::{ffn_forward, grapher_forward, svga_block_forward, FfnWeights, GrapherWeights, SvgaBlockWeights, DEFAULT_FFN_RATIO};
pub use grad::{grad_check_svga, grad_check_svga_with, GradCheckConfig, GradCheckError, GradCheckReport};
pub use graph::{build_fixed_offsets, FixedGraph};
pub use mrconv::{
    mrconv_gather_oracle, mrconv_roll, project_relative, relative_max_gather, relative_max_roll,
    relative_max_roll_counted,
};
