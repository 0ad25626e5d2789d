//! Dense NCHW tensors and the kernels the MobileViG blocks are built from.
//!
//! Every kernel is a pure function with a fixed accumulation order, so two
//! runs over the same inputs are bitwise identical.

mod layers;
mod ops;

pub use layers::{BatchNorm, Conv2d, ConvBn, ConvSpec, Linear, DEFAULT_BN_EPS};
pub use ops::{
    batchnorm_infer, concat_channels, conv2d, elem_add, elem_max, elem_sub, gelu, gelu_scalar,
    global_avg_pool, linear, roll_2d,
};

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{mismatch, Error, Result};
use crate::scalar::Scalar;

/// Extents of a rank-4 feature map in (batch, channel, height, width) order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Dims {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Dims { n, c, h, w }
    }

    pub const fn len(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }
}

impl fmt::Display for Dims {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}, {})", self.n, self.c, self.h, self.w)
    }
}

/// Dense rank-4 feature map, row-major in (n, c, h, w).
#[derive(Clone, PartialEq)]
pub struct Tensor4<T = f32> {
    dims: Dims,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor4<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor4")
            .field("dims", &self.dims)
            .field("len", &self.data.len())
            .finish()
    }
}

impl<T: Scalar> Tensor4<T> {
    /// Wraps `data` after checking that every extent is non-zero and the
    /// buffer length matches.
    pub fn new(dims: Dims, data: Vec<T>) -> Result<Self> {
        if dims.n == 0 || dims.c == 0 || dims.h == 0 || dims.w == 0 {
            return Err(Error::Config(alloc::format!("tensor dims must be >= 1, got {dims}")));
        }
        if data.len() != dims.len() {
            return Err(mismatch(
                "Tensor4::new",
                alloc::format!("{} elements for dims {dims}", data.len()),
            ));
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn zeros(dims: Dims) -> Self {
        Self::full(dims, T::ZERO)
    }

    pub fn full(dims: Dims, value: T) -> Self {
        assert!(!dims.is_empty(), "tensor dims must be >= 1, got {dims}");
        Tensor4 { dims, data: vec![value; dims.len()] }
    }

    pub fn from_fn(dims: Dims, mut f: impl FnMut(usize, usize, usize, usize) -> T) -> Self {
        assert!(!dims.is_empty(), "tensor dims must be >= 1, got {dims}");
        let mut data = Vec::with_capacity(dims.len());
        for n in 0..dims.n {
            for c in 0..dims.c {
                for h in 0..dims.h {
                    for w in 0..dims.w {
                        data.push(f(n, c, h, w));
                    }
                }
            }
        }
        Tensor4 { dims, data }
    }

    #[inline]
    pub fn dims(&self) -> Dims {
        self.dims
    }

    #[inline]
    pub fn offset(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.dims.c + c) * self.dims.h + h) * self.dims.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> T {
        self.data[self.offset(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, v: T) {
        let i = self.offset(n, c, h, w);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// The h·w plane of channel `c` in batch item `n`.
    #[inline]
    pub fn plane(&self, n: usize, c: usize) -> &[T] {
        let p = self.dims.plane();
        let start = (n * self.dims.c + c) * p;
        &self.data[start..start + p]
    }

    /// Copy of batch item `n` as a single-item tensor.
    pub fn batch_item(&self, n: usize) -> Tensor4<T> {
        let per = self.dims.c * self.dims.plane();
        Tensor4 {
            dims: Dims { n: 1, ..self.dims },
            data: self.data[n * per..(n + 1) * per].to_vec(),
        }
    }

    /// Concatenates tensors along the batch axis.
    pub fn stack_batch(items: &[Tensor4<T>]) -> Result<Tensor4<T>> {
        let first = items
            .first()
            .ok_or_else(|| Error::Config("stack_batch needs at least one tensor".into()))?;
        let mut dims = first.dims;
        dims.n = 0;
        let mut data = Vec::new();
        for t in items {
            if (t.dims.c, t.dims.h, t.dims.w) != (first.dims.c, first.dims.h, first.dims.w) {
                return Err(mismatch(
                    "stack_batch",
                    alloc::format!("{} vs {}", t.dims, first.dims),
                ));
            }
            dims.n += t.dims.n;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor4 { dims, data })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor4<T> {
        Tensor4 { dims: self.dims, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// Converts every element through `f64`.
    pub fn cast<U: Scalar>(&self) -> Tensor4<U> {
        Tensor4 { dims: self.dims, data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Bitwise comparison through `f64` bit patterns; `+0.0` and `-0.0` differ.
    pub fn bitwise_eq(&self, other: &Tensor4<T>) -> bool {
        self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_f64().to_bits() == b.to_f64().to_bits())
    }

    /// Index of the first element whose bit pattern differs, if any.
    pub fn first_difference(&self, other: &Tensor4<T>) -> Option<usize> {
        if self.dims != other.dims {
            return Some(0);
        }
        self.data
            .iter()
            .zip(&other.data)
            .position(|(a, b)| a.to_f64().to_bits() != b.to_f64().to_bits())
    }

    pub(crate) fn from_parts(dims: Dims, data: Vec<T>) -> Self {
        debug_assert_eq!(dims.len(), data.len());
        Tensor4 { dims, data }
    }
}

/// Dense rank-2 tensor (batch, features), used for pooled features and logits.
#[derive(Clone, PartialEq)]
pub struct Tensor2<T = f32> {
    n: usize,
    c: usize,
    data: Vec<T>,
}

impl<T: Scalar> fmt::Debug for Tensor2<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor2").field("n", &self.n).field("c", &self.c).finish()
    }
}

impl<T: Scalar> Tensor2<T> {
    pub fn new(n: usize, c: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || c == 0 {
            return Err(Error::Config(alloc::format!("tensor dims must be >= 1, got ({n}, {c})")));
        }
        if data.len() != n * c {
            return Err(mismatch("Tensor2::new", alloc::format!("{} elements for ({n}, {c})", data.len())));
        }
        Ok(Tensor2 { n, c, data })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn c(&self) -> usize {
        self.c
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.c..(i + 1) * self.c]
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor2<T> {
        Tensor2 { n: self.n, c: self.c, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    /// View as an (n, c, 1, 1) feature map.
    pub fn to_tensor4(&self) -> Tensor4<T> {
        Tensor4::from_parts(Dims::new(self.n, self.c, 1, 1), self.data.clone())
    }

    pub(crate) fn from_parts(n: usize, c: usize, data: Vec<T>) -> Self {
        debug_assert_eq!(n * c, data.len());
        Tensor2 { n, c, data }
    }
}
