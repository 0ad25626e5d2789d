use alloc::format;

use super::mrconv_roll;
use crate::error::{mismatch, Error, Result};
use crate::params::{join, ParamInfo, Parameters};
use crate::scalar::Scalar;
use crate::tensor::{elem_add, gelu, ConvBn, ConvSpec, Tensor4};

/// Hidden expansion of the feed-forward network.
pub const DEFAULT_FFN_RATIO: usize = 4;

/// Grapher weights for stage width `C`.
///
/// `fc_in` is C→C, `graph_proj` maps `concat(X, X_j)` (2C) to 2C, and
/// `fc_out` brings 2C back to C. All are 1×1 conv + BN.
#[derive(Debug, Clone, PartialEq)]
pub struct GrapherWeights<T = f32> {
    pub fc_in: ConvBn<T>,
    pub graph_proj: ConvBn<T>,
    pub fc_out: ConvBn<T>,
}

impl<T: Scalar> GrapherWeights<T> {
    pub fn zeros(channels: usize) -> Self {
        Self::zeros_with_graph_width(channels, 2 * channels)
    }

    /// Zero weights with a custom MRConv output width.
    pub fn zeros_with_graph_width(channels: usize, graph_width: usize) -> Self {
        GrapherWeights {
            fc_in: ConvBn::zeros(ConvSpec::pointwise(channels, channels)),
            graph_proj: ConvBn::zeros(ConvSpec::pointwise(2 * channels, graph_width)),
            fc_out: ConvBn::zeros(ConvSpec::pointwise(graph_width, channels)),
        }
    }

    pub fn channels(&self) -> usize {
        self.fc_in.spec().in_channels
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        let ok = self.fc_in.spec().out_channels == c
            && self.graph_proj.spec().in_channels == 2 * c
            && self.fc_out.spec().in_channels == self.graph_proj.spec().out_channels
            && self.fc_out.spec().out_channels == c;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent grapher channel arithmetic for width {c}")))
        }
    }

    pub fn cast<U: Scalar>(&self) -> GrapherWeights<U> {
        GrapherWeights { fc_in: self.fc_in.cast(), graph_proj: self.graph_proj.cast(), fc_out: self.fc_out.cast() }
    }
}

/// Two-layer pointwise MLP: C→rC→C, each 1×1 conv + BN.
#[derive(Debug, Clone, PartialEq)]
pub struct FfnWeights<T = f32> {
    pub fc1: ConvBn<T>,
    pub fc2: ConvBn<T>,
}

impl<T: Scalar> FfnWeights<T> {
    pub fn zeros(channels: usize, ratio: usize) -> Self {
        assert!(ratio >= 1, "ffn ratio must be >= 1");
        FfnWeights {
            fc1: ConvBn::zeros(ConvSpec::pointwise(channels, ratio * channels)),
            fc2: ConvBn::zeros(ConvSpec::pointwise(ratio * channels, channels)),
        }
    }

    pub fn channels(&self) -> usize {
        self.fc1.spec().in_channels
    }

    pub fn hidden(&self) -> usize {
        self.fc1.spec().out_channels
    }

    pub fn cast<U: Scalar>(&self) -> FfnWeights<U> {
        FfnWeights { fc1: self.fc1.cast(), fc2: self.fc2.cast() }
    }
}

/// A Grapher followed by an FFN, with the connection stride of its graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SvgaBlockWeights<T = f32> {
    pub grapher: GrapherWeights<T>,
    pub ffn: FfnWeights<T>,
    pub k: usize,
}

impl<T: Scalar> SvgaBlockWeights<T> {
    pub fn zeros(channels: usize, k: usize, ffn_ratio: usize) -> Self {
        SvgaBlockWeights { grapher: GrapherWeights::zeros(channels), ffn: FfnWeights::zeros(channels, ffn_ratio), k }
    }

    pub fn channels(&self) -> usize {
        self.grapher.channels()
    }

    pub fn cast<U: Scalar>(&self) -> SvgaBlockWeights<U> {
        SvgaBlockWeights { grapher: self.grapher.cast(), ffn: self.ffn.cast(), k: self.k }
    }
}

fn check_channels(op: &'static str, x: &Tensor4<impl Scalar>, expected: usize) -> Result<()> {
    if x.dims().c != expected {
        return Err(mismatch(op, format!("input has {} channels, block width is {expected}", x.dims().c)));
    }
    Ok(())
}

/// `Y = fc_out(GeLU(MRConv(fc_in(X)))) + X`.
pub fn grapher_forward<T: Scalar>(x: &Tensor4<T>, w: &GrapherWeights<T>, k: usize) -> Result<Tensor4<T>> {
    check_channels("grapher_forward", x, w.channels())?;
    w.validate()?;
    let h = w.fc_in.forward(x)?;
    let g = gelu(&mrconv_roll(&h, k, &w.graph_proj)?);
    elem_add(&w.fc_out.forward(&g)?, x)
}

/// `Z = fc2(GeLU(fc1(X))) + X`. The residual is the FFN's own input, which
/// inside a block is the Grapher output.
pub fn ffn_forward<T: Scalar>(x: &Tensor4<T>, w: &FfnWeights<T>) -> Result<Tensor4<T>> {
    check_channels("ffn_forward", x, w.channels())?;
    let hidden = gelu(&w.fc1.forward(x)?);
    elem_add(&w.fc2.forward(&hidden)?, x)
}

pub fn svga_block_forward<T: Scalar>(x: &Tensor4<T>, w: &SvgaBlockWeights<T>) -> Result<Tensor4<T>> {
    if w.k == 0 {
        return Err(Error::Config("connection stride k must be >= 1".into()));
    }
    ffn_forward(&grapher_forward(x, &w.grapher, w.k)?, &w.ffn)
}

impl<T: Scalar> Parameters<T> for GrapherWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.fc_in.visit(&join(prefix, "fc_in"), f);
        self.graph_proj.visit(&join(prefix, "graph_proj"), f);
        self.fc_out.visit(&join(prefix, "fc_out"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.fc_in.visit_mut(&join(prefix, "fc_in"), f);
        self.graph_proj.visit_mut(&join(prefix, "graph_proj"), f);
        self.fc_out.visit_mut(&join(prefix, "fc_out"), f);
    }
}

impl<T: Scalar> Parameters<T> for FfnWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.fc1.visit(&join(prefix, "fc1"), f);
        self.fc2.visit(&join(prefix, "fc2"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.fc1.visit_mut(&join(prefix, "fc1"), f);
        self.fc2.visit_mut(&join(prefix, "fc2"), f);
    }
}

impl<T: Scalar> Parameters<T> for SvgaBlockWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.grapher.visit(&join(prefix, "grapher"), f);
        self.ffn.visit(&join(prefix, "ffn"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.grapher.visit_mut(&join(prefix, "grapher"), f);
        self.ffn.visit_mut(&join(prefix, "ffn"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::SeededInit;
    use crate::tensor::{gelu_scalar, roll_2d, Dims};

    fn random_block(seed: u64, c: usize, k: usize) -> SvgaBlockWeights<f32> {
        let mut w = SvgaBlockWeights::zeros(c, k, DEFAULT_FFN_RATIO);
        SeededInit::new(seed).init_dense(&mut w, 0.3);
        w
    }

    #[test]
    fn zero_weights_are_identity() {
        let x: Tensor4<f32> = SeededInit::new(2).tensor(Dims::new(2, 4, 6, 6), 1.0);
        assert!(grapher_forward(&x, &GrapherWeights::zeros(4), 2).unwrap().bitwise_eq(&x));
        assert!(ffn_forward(&x, &FfnWeights::zeros(4, 4)).unwrap().bitwise_eq(&x));
        assert!(svga_block_forward(&x, &SvgaBlockWeights::zeros(4, 2, 4)).unwrap().bitwise_eq(&x));
    }

    #[test]
    fn shapes_preserved() {
        let w = random_block(3, 8, 2);
        assert_eq!(w.ffn.hidden(), 32);
        let x: Tensor4<f32> = SeededInit::new(4).tensor(Dims::new(1, 8, 7, 5), 1.0);
        assert_eq!(grapher_forward(&x, &w.grapher, 2).unwrap().dims(), x.dims());
        assert_eq!(svga_block_forward(&x, &w).unwrap().dims(), x.dims());
    }

    #[test]
    fn stage_four_shape() {
        let w = SvgaBlockWeights::<f32>::zeros(256, 2, 4);
        let x: Tensor4<f32> = SeededInit::new(5).tensor(Dims::new(1, 256, 7, 7), 1.0);
        assert_eq!(svga_block_forward(&x, &w).unwrap().dims(), Dims::new(1, 256, 7, 7));
    }

    #[test]
    fn ffn_single_pixel_formula() {
        let mut w = FfnWeights::<f64>::zeros(1, 1);
        w.fc1.conv.weight[0] = 1.0;
        w.fc2.conv.weight[0] = 1.0;
        w.fc1.bn.eps = 0.0;
        w.fc2.bn.eps = 0.0;
        for v in [-1.5, -0.2, 0.0, 0.7, 3.0] {
            let x = Tensor4::full(Dims::new(1, 1, 1, 1), v);
            let z = ffn_forward(&x, &w).unwrap();
            assert_eq!(z.data()[0], gelu_scalar(v) + v);
        }
    }

    #[test]
    fn channel_mismatch_rejected() {
        let x = Tensor4::<f32>::zeros(Dims::new(1, 3, 4, 4));
        assert!(grapher_forward(&x, &GrapherWeights::zeros(4), 2).is_err());
        assert!(ffn_forward(&x, &FfnWeights::zeros(4, 4)).is_err());
        assert!(svga_block_forward(&x, &SvgaBlockWeights::zeros(3, 0, 4)).is_err());
    }

    #[test]
    fn grapher_commutes_with_roll() {
        let w = random_block(9, 4, 2);
        let x: Tensor4<f32> = SeededInit::new(10).tensor(Dims::new(1, 4, 8, 8), 1.0);
        let base = grapher_forward(&x, &w.grapher, 2).unwrap();
        for (d, e) in [(1, 0), (0, 3), (5, 7), (-2, 9)] {
            let lhs = grapher_forward(&roll_2d(&x, d, e), &w.grapher, 2).unwrap();
            assert!(lhs.bitwise_eq(&roll_2d(&base, d, e)), "shift ({d}, {e})");
        }
    }
}
