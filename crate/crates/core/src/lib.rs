//! MobileViG inference in plain Rust: NCHW tensors, the fixed-offset sparse
//! graph aggregation and its gather and KNN counterparts, the four model
//! variants, and parameter/MAC accounting.
//!
//! `no_std` with `alloc`. All arithmetic is scalar and single-threaded, so a
//! given seed and input always produce the same bits.

#![no_std]
extern crate alloc;

pub mod arch;
pub mod error;
pub mod init;
pub mod knn;
pub mod params;
pub mod scalar;
pub mod svga;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::{Dims, Tensor2, Tensor4};
