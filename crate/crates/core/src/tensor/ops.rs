use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{BatchNorm, Conv2d, Dims, Linear, Tensor2, Tensor4};
use crate::error::{mismatch, Result};
use crate::scalar::{fold_max, Scalar};

/// Circular shift: `out[n,c,i,j] = x[n,c,(i-down) mod h,(j-right) mod w]`.
///
/// Any integer shift is accepted and reduced modulo the extent.
pub fn roll_2d<T: Scalar>(x: &Tensor4<T>, down: isize, right: isize) -> Tensor4<T> {
    let d = x.dims();
    let sd = down.rem_euclid(d.h as isize) as usize;
    let sr = right.rem_euclid(d.w as isize) as usize;
    let mut out = Vec::with_capacity(d.len());
    for plane in x.data().chunks_exact(d.plane()) {
        for i in 0..d.h {
            let src = (i + d.h - sd) % d.h;
            let row = &plane[src * d.w..(src + 1) * d.w];
            // out[j] = row[(j - sr) mod w]
            out.extend_from_slice(&row[d.w - sr..]);
            out.extend_from_slice(&row[..d.w - sr]);
        }
    }
    Tensor4::from_parts(d, out)
}

/// Cross-correlation with zero padding.
///
/// Each output element accumulates from zero over input channels, then
/// kernel rows, then kernel columns, and adds the bias last. Taps that fall
/// in the padding are skipped.
pub fn conv2d<T: Scalar>(x: &Tensor4<T>, conv: &Conv2d<T>) -> Result<Tensor4<T>> {
    let s = &conv.spec;
    s.validate()?;
    let d = x.dims();
    if d.c != s.in_channels {
        return Err(mismatch("conv2d", format!("input has {} channels, conv expects {}", d.c, s.in_channels)));
    }
    if conv.weight.len() != s.weight_len() || conv.bias.len() != s.out_channels {
        return Err(mismatch("conv2d", format!("weights do not match shape {}", s.weight_dims())));
    }
    let (oh, ow) = s.output_hw(d.h, d.w)?;
    let (kh, kw) = s.kernel;
    let cin_g = s.in_channels / s.groups;
    let cout_g = s.out_channels / s.groups;
    let (stride, pad) = (s.stride, s.padding);

    // Output column range [lo, hi) whose tap at kernel column kx lands inside the row.
    let col_range = |kx: usize| -> (usize, usize) {
        let lo = if pad > kx { (pad - kx).div_ceil(stride) } else { 0 };
        let hi = if d.w + pad > kx { (d.w + pad - kx).div_ceil(stride).min(ow) } else { 0 };
        (lo, hi.max(lo))
    };

    let out_dims = Dims::new(d.n, s.out_channels, oh, ow);
    let mut out = vec![T::ZERO; out_dims.len()];
    for (b, batch_out) in out.chunks_exact_mut(s.out_channels * oh * ow).enumerate() {
        for (oc, plane) in batch_out.chunks_exact_mut(oh * ow).enumerate() {
            let g = oc / cout_g;
            for icg in 0..cin_g {
                let xin = x.plane(b, g * cin_g + icg);
                for ky in 0..kh {
                    for kx in 0..kw {
                        let wv = conv.weight[((oc * cin_g + icg) * kh + ky) * kw + kx];
                        let (lo, hi) = col_range(kx);
                        for oy in 0..oh {
                            let iy = (oy * stride + ky) as isize - pad as isize;
                            if iy < 0 || iy >= d.h as isize {
                                continue;
                            }
                            let row = &xin[iy as usize * d.w..(iy as usize + 1) * d.w];
                            let orow = &mut plane[oy * ow..(oy + 1) * ow];
                            if stride == 1 {
                                let start = lo + kx - pad;
                                for (o, &xv) in orow[lo..hi].iter_mut().zip(&row[start..]) {
                                    *o += wv * xv;
                                }
                            } else {
                                for ox in lo..hi {
                                    orow[ox] += wv * row[ox * stride + kx - pad];
                                }
                            }
                        }
                    }
                }
            }
            let bias = conv.bias[oc];
            for v in plane.iter_mut() {
                *v += bias;
            }
        }
    }
    Ok(Tensor4::from_parts(out_dims, out))
}

/// Inference-mode batch normalization, per channel.
pub fn batchnorm_infer<T: Scalar>(x: &Tensor4<T>, bn: &BatchNorm<T>) -> Result<Tensor4<T>> {
    bn.validate()?;
    let d = x.dims();
    if bn.channels() != d.c {
        return Err(mismatch("batchnorm_infer", format!("{} channels, bn has {}", d.c, bn.channels())));
    }
    let mut out = Vec::with_capacity(d.len());
    for (i, plane) in x.data().chunks_exact(d.plane()).enumerate() {
        let c = i % d.c;
        let std = bn.std(c);
        out.extend(plane.iter().map(|&v| bn.apply(c, std, v)));
    }
    Ok(Tensor4::from_parts(d, out))
}

/// Exact GeLU, `x * Φ(x)` with Φ from the error function.
#[inline]
pub fn gelu_scalar<T: Scalar>(x: T) -> T {
    let half = T::from_f64(0.5);
    let inv_sqrt2 = T::from_f64(core::f64::consts::FRAC_1_SQRT_2);
    x * half * (T::ONE + (x * inv_sqrt2).erf())
}

pub fn gelu<T: Scalar>(x: &Tensor4<T>) -> Tensor4<T> {
    x.map(gelu_scalar)
}

/// Channel concatenation, `a`'s channels first.
pub fn concat_channels<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    let (da, db) = (a.dims(), b.dims());
    if (da.n, da.h, da.w) != (db.n, db.h, db.w) {
        return Err(mismatch("concat_channels", format!("{da} vs {db}")));
    }
    let dims = Dims::new(da.n, da.c + db.c, da.h, da.w);
    let (sa, sb) = (da.c * da.plane(), db.c * db.plane());
    let mut out = Vec::with_capacity(dims.len());
    for n in 0..da.n {
        out.extend_from_slice(&a.data()[n * sa..(n + 1) * sa]);
        out.extend_from_slice(&b.data()[n * sb..(n + 1) * sb]);
    }
    Ok(Tensor4::from_parts(dims, out))
}

fn zip_with<T: Scalar>(op: &'static str, a: &Tensor4<T>, b: &Tensor4<T>, f: impl Fn(T, T) -> T) -> Result<Tensor4<T>> {
    if a.dims() != b.dims() {
        return Err(mismatch(op, format!("{} vs {}", a.dims(), b.dims())));
    }
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Ok(Tensor4::from_parts(a.dims(), data))
}

pub fn elem_sub<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_with("elem_sub", a, b, |x, y| x - y)
}

pub fn elem_add<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_with("elem_add", a, b, |x, y| x + y)
}

/// Elementwise max; on ties (and for NaN in `b`) the element of `a` is kept.
pub fn elem_max<T: Scalar>(a: &Tensor4<T>, b: &Tensor4<T>) -> Result<Tensor4<T>> {
    zip_with("elem_max", a, b, fold_max)
}

/// Mean over all spatial positions of each (n, c) plane.
pub fn global_avg_pool<T: Scalar>(x: &Tensor4<T>) -> Tensor2<T> {
    let d = x.dims();
    let count = T::from_usize(d.plane());
    let data = x
        .data()
        .chunks_exact(d.plane())
        .map(|plane| {
            let mut acc = T::ZERO;
            for &v in plane {
                acc += v;
            }
            acc / count
        })
        .collect();
    Tensor2::from_parts(d.n, d.c, data)
}

/// `y = x Wᵀ + b` per batch row.
pub fn linear<T: Scalar>(x: &Tensor2<T>, layer: &Linear<T>) -> Result<Tensor2<T>> {
    if x.c() != layer.in_features
        || layer.weight.len() != layer.in_features * layer.out_features
        || layer.bias.len() != layer.out_features
    {
        return Err(mismatch(
            "linear",
            format!("input has {} features, layer is {}x{}", x.c(), layer.out_features, layer.in_features),
        ));
    }
    let mut data = Vec::with_capacity(x.n() * layer.out_features);
    for i in 0..x.n() {
        let row = x.row(i);
        for o in 0..layer.out_features {
            let wrow = &layer.weight[o * layer.in_features..(o + 1) * layer.in_features];
            let mut acc = T::ZERO;
            for (&wv, &xv) in wrow.iter().zip(row) {
                acc += wv * xv;
            }
            data.push(acc + layer.bias[o]);
        }
    }
    Ok(Tensor2::from_parts(x.n(), layer.out_features, data))
}
