//! Named, shaped traversal over model parameters.
//!
//! Every weight container walks its tensors in a fixed order. That order
//! drives initialization, counting and serialization.

use alloc::format;
use alloc::string::String;

use crate::scalar::Scalar;
use crate::tensor::{BatchNorm, Conv2d, ConvBn, Linear};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Weight,
    Bias,
    Gamma,
    Beta,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    /// Running statistics are buffers, not learned parameters.
    pub fn is_learned(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ParamInfo<'a> {
    pub name: &'a str,
    pub kind: ParamKind,
    pub shape: &'a [usize],
}

pub trait Parameters<T: Scalar> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T]));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T]));

    /// Learned element count (running statistics excluded).
    fn learned_count(&self) -> usize {
        let mut total = 0;
        self.visit("", &mut |info, data| {
            if info.kind.is_learned() {
                total += data.len();
            }
        });
        total
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        format!("{prefix}.{name}")
    }
}

macro_rules! emit {
    ($f:expr, $prefix:expr, $name:expr, $kind:expr, $shape:expr, $data:expr) => {{
        let full = join($prefix, $name);
        $f(ParamInfo { name: &full, kind: $kind, shape: $shape }, $data);
    }};
}

impl<T: Scalar> Parameters<T> for Conv2d<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        let d = self.spec.weight_dims();
        emit!(f, prefix, "weight", ParamKind::Weight, &[d.n, d.c, d.h, d.w], &self.weight);
        emit!(f, prefix, "bias", ParamKind::Bias, &[self.bias.len()], &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        let d = self.spec.weight_dims();
        emit!(f, prefix, "weight", ParamKind::Weight, &[d.n, d.c, d.h, d.w], &mut self.weight);
        let n = self.bias.len();
        emit!(f, prefix, "bias", ParamKind::Bias, &[n], &mut self.bias);
    }
}

impl<T: Scalar> Parameters<T> for BatchNorm<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        let c = [self.channels()];
        emit!(f, prefix, "gamma", ParamKind::Gamma, &c, &self.gamma);
        emit!(f, prefix, "beta", ParamKind::Beta, &c, &self.beta);
        emit!(f, prefix, "mean", ParamKind::RunningMean, &c, &self.mean);
        emit!(f, prefix, "var", ParamKind::RunningVar, &c, &self.var);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        let c = [self.channels()];
        emit!(f, prefix, "gamma", ParamKind::Gamma, &c, &mut self.gamma);
        emit!(f, prefix, "beta", ParamKind::Beta, &c, &mut self.beta);
        emit!(f, prefix, "mean", ParamKind::RunningMean, &c, &mut self.mean);
        emit!(f, prefix, "var", ParamKind::RunningVar, &c, &mut self.var);
    }
}

impl<T: Scalar> Parameters<T> for ConvBn<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.conv.visit(&join(prefix, "conv"), f);
        self.bn.visit(&join(prefix, "bn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.conv.visit_mut(&join(prefix, "conv"), f);
        self.bn.visit_mut(&join(prefix, "bn"), f);
    }
}

impl<T: Scalar> Parameters<T> for Linear<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        emit!(f, prefix, "weight", ParamKind::Weight, &[self.out_features, self.in_features], &self.weight);
        emit!(f, prefix, "bias", ParamKind::Bias, &[self.out_features], &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        let shape = [self.out_features, self.in_features];
        emit!(f, prefix, "weight", ParamKind::Weight, &shape, &mut self.weight);
        let n = [self.out_features];
        emit!(f, prefix, "bias", ParamKind::Bias, &n, &mut self.bias);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::ConvSpec;
    use alloc::vec::Vec;

    #[test]
    fn conv_bn_names_and_counts() {
        let cb = ConvBn::<f32>::zeros(ConvSpec::square(3, 8, 3, 2, 1));
        let mut names = Vec::new();
        cb.visit("stem.0", &mut |info, data| {
            names.push((String::from(info.name), info.shape.iter().product::<usize>(), data.len()));
        });
        let expect = [
            ("stem.0.conv.weight", 216),
            ("stem.0.conv.bias", 8),
            ("stem.0.bn.gamma", 8),
            ("stem.0.bn.beta", 8),
            ("stem.0.bn.mean", 8),
            ("stem.0.bn.var", 8),
        ];
        assert_eq!(names.len(), expect.len());
        for ((name, shape_len, len), (en, el)) in names.iter().zip(expect) {
            assert_eq!(name, en);
            assert_eq!(*shape_len, el);
            assert_eq!(*len, el);
        }
        assert_eq!(cb.learned_count(), 216 + 8 + 16);
    }
}
