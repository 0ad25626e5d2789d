use alloc::format;

use super::FixedGraph;
use crate::error::{mismatch, Error, Result};
use crate::scalar::{fold_max, Scalar};
use crate::tensor::{concat_channels, roll_2d, ConvBn, Tensor4};

/// Max-relative aggregation by circular rolls.
///
/// `X_j` starts at zero (the `m = 0` term, `X - roll(X, 0)`, is exactly
/// zero). For `m = 1, 2, …` while `mK < h` the relative feature
/// `X - roll_down(X, mK)` is max-folded into `X_j`; the same follows for the
/// width with rightward rolls.
pub fn relative_max_roll<T: Scalar>(x: &Tensor4<T>, k: usize) -> Result<Tensor4<T>> {
    relative_max_roll_counted(x, k).map(|(xj, _)| xj)
}

/// As [`relative_max_roll`], also returning the number of max folds applied
/// to each pixel (the implicit zero self term not included).
pub fn relative_max_roll_counted<T: Scalar>(x: &Tensor4<T>, k: usize) -> Result<(Tensor4<T>, usize)> {
    if k == 0 {
        return Err(Error::Config("connection stride k must be >= 1".into()));
    }
    let d = x.dims();
    let mut xj = Tensor4::zeros(d);
    let mut folds = 0;
    let mut fold = |rolled: Tensor4<T>| {
        for ((acc, &v), &r) in xj.data_mut().iter_mut().zip(x.data()).zip(rolled.data()) {
            *acc = fold_max(*acc, v - r);
        }
        folds += 1;
    };
    let mut shift = k;
    while shift < d.h {
        fold(roll_2d(x, shift as isize, 0));
        shift += k;
    }
    shift = k;
    while shift < d.w {
        fold(roll_2d(x, 0, shift as isize));
        shift += k;
    }
    Ok((xj, folds))
}

/// Max-relative aggregation by explicit per-pixel neighbor gather over a
/// [`FixedGraph`], folding `X(p) - X(q)` into a zero-initialized maximum.
pub fn relative_max_gather<T: Scalar>(x: &Tensor4<T>, graph: &FixedGraph) -> Result<Tensor4<T>> {
    let d = x.dims();
    if (d.h, d.w) != (graph.h, graph.w) {
        return Err(mismatch(
            "relative_max_gather",
            format!("graph is {}x{}, input is {}x{}", graph.h, graph.w, d.h, d.w),
        ));
    }
    let mut out = Tensor4::zeros(d);
    for n in 0..d.n {
        for c in 0..d.c {
            let plane = x.plane(n, c);
            for i in 0..d.h {
                for j in 0..d.w {
                    let p = plane[i * d.w + j];
                    let mut acc = T::ZERO;
                    for q in graph.neighbors_of(i, j) {
                        acc = fold_max(acc, p - plane[q]);
                    }
                    out.set(n, c, i, j, acc);
                }
            }
        }
    }
    Ok(out)
}

/// Projection of `concat(X, X_j)` shared by every max-relative convolution.
pub fn project_relative<T: Scalar>(x: &Tensor4<T>, xj: &Tensor4<T>, proj: &ConvBn<T>) -> Result<Tensor4<T>> {
    if proj.spec().in_channels != 2 * x.dims().c {
        return Err(mismatch(
            "mrconv projection",
            format!("projection takes {} channels, concat has {}", proj.spec().in_channels, 2 * x.dims().c),
        ));
    }
    proj.forward(&concat_channels(x, xj)?)
}

/// Roll-based max-relative graph convolution: aggregation by
/// [`relative_max_roll`], then the 1×1 conv + BN projection of
/// `concat(X, X_j)`.
pub fn mrconv_roll<T: Scalar>(x: &Tensor4<T>, k: usize, proj: &ConvBn<T>) -> Result<Tensor4<T>> {
    let xj = relative_max_roll(x, k)?;
    project_relative(x, &xj, proj)
}

/// Gather-based reference for [`mrconv_roll`].
pub fn mrconv_gather_oracle<T: Scalar>(x: &Tensor4<T>, graph: &FixedGraph, proj: &ConvBn<T>) -> Result<Tensor4<T>> {
    let xj = relative_max_gather(x, graph)?;
    project_relative(x, &xj, proj)
}
