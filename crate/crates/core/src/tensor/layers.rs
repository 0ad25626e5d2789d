use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::{ops, Dims, Tensor2, Tensor4};
use crate::error::{mismatch, Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_BN_EPS: f64 = 1e-5;

/// Geometry of a 2-D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: (usize, usize),
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
}

impl ConvSpec {
    /// 1×1, stride 1, no padding, dense.
    pub const fn pointwise(in_channels: usize, out_channels: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (1, 1), stride: 1, padding: 0, groups: 1 }
    }

    /// Square `k`×`k` dense convolution.
    pub const fn square(in_channels: usize, out_channels: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvSpec { in_channels, out_channels, kernel: (k, k), stride, padding, groups: 1 }
    }

    /// Depthwise `k`×`k` convolution over `channels`.
    pub const fn depthwise(channels: usize, k: usize, stride: usize, padding: usize) -> Self {
        ConvSpec {
            in_channels: channels,
            out_channels: channels,
            kernel: (k, k),
            stride,
            padding,
            groups: channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.groups >= 1
            && self.in_channels >= 1
            && self.out_channels >= 1
            && self.in_channels.is_multiple_of(self.groups)
            && self.out_channels.is_multiple_of(self.groups)
            && self.kernel.0 >= 1
            && self.kernel.1 >= 1
            && self.stride >= 1;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid convolution {self:?}")))
        }
    }

    /// Weight tensor shape (out, in/groups, kh, kw).
    pub fn weight_dims(&self) -> Dims {
        Dims::new(self.out_channels, self.in_channels / self.groups, self.kernel.0, self.kernel.1)
    }

    pub fn weight_len(&self) -> usize {
        self.weight_dims().len()
    }

    /// Output spatial extent for an `h`×`w` input.
    pub fn output_hw(&self, h: usize, w: usize) -> Result<(usize, usize)> {
        let (kh, kw) = self.kernel;
        if h + 2 * self.padding < kh || w + 2 * self.padding < kw {
            return Err(mismatch(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {h}x{w}"),
            ));
        }
        Ok((
            (h + 2 * self.padding - kh) / self.stride + 1,
            (w + 2 * self.padding - kw) / self.stride + 1,
        ))
    }

    /// Multiply-accumulates for one image whose output is `oh`×`ow`.
    pub fn macs(&self, oh: usize, ow: usize) -> u64 {
        (oh * ow * self.out_channels) as u64
            * (self.in_channels / self.groups) as u64
            * (self.kernel.0 * self.kernel.1) as u64
    }
}

/// Convolution weights, laid out (out, in/groups, kh, kw), plus a bias per
/// output channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d<T = f32> {
    pub spec: ConvSpec,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Conv2d<T> {
    pub fn new(spec: ConvSpec, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        spec.validate()?;
        if weight.len() != spec.weight_len() {
            return Err(mismatch(
                "Conv2d::new",
                format!("{} weights, expected shape {}", weight.len(), spec.weight_dims()),
            ));
        }
        if bias.len() != spec.out_channels {
            return Err(mismatch(
                "Conv2d::new",
                format!("{} biases for {} output channels", bias.len(), spec.out_channels),
            ));
        }
        Ok(Conv2d { spec, weight, bias })
    }

    pub fn zeros(spec: ConvSpec) -> Self {
        Conv2d { spec, weight: vec![T::ZERO; spec.weight_len()], bias: vec![T::ZERO; spec.out_channels] }
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ops::conv2d(x, self)
    }

    pub fn cast<U: Scalar>(&self) -> Conv2d<U> {
        Conv2d { spec: self.spec, weight: cast_vec(&self.weight), bias: cast_vec(&self.bias) }
    }
}

/// Inference-mode batch normalization:
/// `gamma * (x - mean) / sqrt(var + eps) + beta`, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm<T = f32> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub mean: Vec<T>,
    pub var: Vec<T>,
    pub eps: T,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(gamma: Vec<T>, beta: Vec<T>, mean: Vec<T>, var: Vec<T>, eps: T) -> Result<Self> {
        let bn = BatchNorm { gamma, beta, mean, var, eps };
        bn.validate()?;
        Ok(bn)
    }

    /// gamma 1, beta 0, mean 0, var 1, default eps.
    pub fn identity(channels: usize) -> Self {
        BatchNorm {
            gamma: vec![T::ONE; channels],
            beta: vec![T::ZERO; channels],
            mean: vec![T::ZERO; channels],
            var: vec![T::ONE; channels],
            eps: T::from_f64(DEFAULT_BN_EPS),
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.gamma.len();
        if self.beta.len() != c || self.mean.len() != c || self.var.len() != c {
            return Err(mismatch("BatchNorm", format!("per-channel vectors disagree on length {c}")));
        }
        if self.var.iter().any(|v| v.partial_cmp(&T::ZERO).is_none_or(|o| o.is_lt())) {
            return Err(Error::Config("batch norm variance must be non-negative".into()));
        }
        if self.eps.partial_cmp(&T::ZERO).is_none_or(|o| o.is_lt()) {
            return Err(Error::Config("batch norm eps must be non-negative".into()));
        }
        Ok(())
    }

    /// Per-channel `sqrt(var + eps)`.
    pub fn std(&self, c: usize) -> T {
        (self.var[c] + self.eps).sqrt()
    }

    #[inline]
    pub(crate) fn apply(&self, c: usize, std: T, x: T) -> T {
        self.gamma[c] * (x - self.mean[c]) / std + self.beta[c]
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ops::batchnorm_infer(x, self)
    }

    /// Same normalization applied to (n, features) rows.
    pub fn forward2(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        self.validate()?;
        if x.c() != self.channels() {
            return Err(mismatch("batchnorm", format!("{} features, {} channels", x.c(), self.channels())));
        }
        let stds: Vec<T> = (0..x.c()).map(|c| self.std(c)).collect();
        let data = x
            .data()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let c = i % x.c();
                self.apply(c, stds[c], v)
            })
            .collect();
        Ok(Tensor2::from_parts(x.n(), x.c(), data))
    }

    pub fn cast<U: Scalar>(&self) -> BatchNorm<U> {
        BatchNorm {
            gamma: cast_vec(&self.gamma),
            beta: cast_vec(&self.beta),
            mean: cast_vec(&self.mean),
            var: cast_vec(&self.var),
            eps: U::from_f64(self.eps.to_f64()),
        }
    }
}

/// A convolution followed by batch normalization, the unit every block in
/// the network is assembled from.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvBn<T = f32> {
    pub conv: Conv2d<T>,
    pub bn: BatchNorm<T>,
}

impl<T: Scalar> ConvBn<T> {
    /// Zero convolution with identity BN; its output is identically zero.
    pub fn zeros(spec: ConvSpec) -> Self {
        ConvBn { conv: Conv2d::zeros(spec), bn: BatchNorm::identity(spec.out_channels) }
    }

    pub fn spec(&self) -> &ConvSpec {
        &self.conv.spec
    }

    pub fn forward(&self, x: &Tensor4<T>) -> Result<Tensor4<T>> {
        ops::batchnorm_infer(&ops::conv2d(x, &self.conv)?, &self.bn)
    }

    pub fn param_count(&self) -> usize {
        self.conv.weight.len() + self.conv.bias.len() + 4 * self.bn.channels()
    }

    pub fn cast<U: Scalar>(&self) -> ConvBn<U> {
        ConvBn { conv: self.conv.cast(), bn: self.bn.cast() }
    }
}

/// Fully connected layer with weight shape (out_features, in_features).
#[derive(Debug, Clone, PartialEq)]
pub struct Linear<T = f32> {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Scalar> Linear<T> {
    pub fn new(in_features: usize, out_features: usize, weight: Vec<T>, bias: Vec<T>) -> Result<Self> {
        if weight.len() != in_features * out_features || bias.len() != out_features {
            return Err(mismatch(
                "Linear::new",
                format!(
                    "weight {} / bias {} for {out_features}x{in_features}",
                    weight.len(),
                    bias.len()
                ),
            ));
        }
        Ok(Linear { in_features, out_features, weight, bias })
    }

    pub fn zeros(in_features: usize, out_features: usize) -> Self {
        Linear {
            in_features,
            out_features,
            weight: vec![T::ZERO; in_features * out_features],
            bias: vec![T::ZERO; out_features],
        }
    }

    pub fn forward(&self, x: &Tensor2<T>) -> Result<Tensor2<T>> {
        ops::linear(x, self)
    }
}

fn cast_vec<T: Scalar, U: Scalar>(v: &[T]) -> Vec<U> {
    v.iter().map(|x| U::from_f64(x.to_f64())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(ConvSpec::square(3, 4, 3, 1, 1).validate().is_ok());
        let mut bad = ConvSpec::depthwise(4, 3, 1, 1);
        bad.groups = 3;
        assert!(bad.validate().is_err());
        let mut zero_stride = ConvSpec::pointwise(2, 2);
        zero_stride.stride = 0;
        assert!(zero_stride.validate().is_err());
    }

    #[test]
    fn output_extent() {
        let s = ConvSpec::square(3, 8, 3, 2, 1);
        assert_eq!(s.output_hw(224, 224).unwrap(), (112, 112));
        assert_eq!(s.output_hw(7, 7).unwrap(), (4, 4));
        assert!(ConvSpec::square(1, 1, 5, 1, 0).output_hw(3, 3).is_err());
    }

    #[test]
    fn constructors_check_lengths() {
        let spec = ConvSpec::pointwise(2, 3);
        assert!(Conv2d::<f32>::new(spec, vec![0.0; 5], vec![0.0; 3]).is_err());
        assert!(Conv2d::<f32>::new(spec, vec![0.0; 6], vec![0.0; 2]).is_err());
        assert!(Linear::<f32>::new(2, 3, vec![0.0; 6], vec![0.0; 2]).is_err());
        assert!(BatchNorm::<f32>::new(vec![1.0], vec![0.0], vec![0.0], vec![-1.0], 1e-5).is_err());
    }
}
