use alloc::format;
use alloc::vec::Vec;

use super::VariantConfig;
use crate::error::{mismatch, Error, Result};
use crate::init::SeededInit;
use crate::params::{join, ParamInfo, Parameters};
use crate::scalar::Scalar;
use crate::svga::{svga_block_forward, SvgaBlockWeights};
use crate::tensor::{elem_add, gelu, gelu_scalar, global_avg_pool, BatchNorm, ConvBn, ConvSpec, Dims, Linear, Tensor2, Tensor4};

/// Inverted residual block: 1×1 expand, 3×3 depthwise, 1×1 project.
#[derive(Debug, Clone, PartialEq)]
pub struct MbconvWeights<T = f32> {
    pub expand: ConvBn<T>,
    pub depthwise: ConvBn<T>,
    pub project: ConvBn<T>,
}

impl<T: Scalar> MbconvWeights<T> {
    pub fn zeros(channels: usize, expansion: usize) -> Self {
        let hidden = channels * expansion;
        MbconvWeights {
            expand: ConvBn::zeros(ConvSpec::pointwise(channels, hidden)),
            depthwise: ConvBn::zeros(ConvSpec::depthwise(hidden, 3, 1, 1)),
            project: ConvBn::zeros(ConvSpec::pointwise(hidden, channels)),
        }
    }

    pub fn channels(&self) -> usize {
        self.expand.spec().in_channels
    }
}

/// `x + BN(project(GeLU(BN(dw3x3(GeLU(BN(expand(x))))))))`.
pub fn mbconv_forward<T: Scalar>(x: &Tensor4<T>, w: &MbconvWeights<T>) -> Result<Tensor4<T>> {
    if x.dims().c != w.channels() {
        return Err(mismatch("mbconv_forward", format!("input has {} channels, block width is {}", x.dims().c, w.channels())));
    }
    let e = gelu(&w.expand.forward(x)?);
    let dw = gelu(&w.depthwise.forward(&e)?);
    elem_add(x, &w.project.forward(&dw)?)
}

/// Two stride-2 3×3 convolutions, each with BN and GeLU.
#[derive(Debug, Clone, PartialEq)]
pub struct StemWeights<T = f32> {
    pub conv1: ConvBn<T>,
    pub conv2: ConvBn<T>,
}

impl<T: Scalar> StemWeights<T> {
    pub fn zeros(mid: usize, out: usize) -> Self {
        StemWeights {
            conv1: ConvBn::zeros(ConvSpec::square(3, mid, 3, 2, 1)),
            conv2: ConvBn::zeros(ConvSpec::square(mid, out, 3, 2, 1)),
        }
    }
}

pub fn stem_forward<T: Scalar>(x: &Tensor4<T>, w: &StemWeights<T>) -> Result<Tensor4<T>> {
    let d = x.dims();
    if d.c != 3 {
        return Err(Error::Input(format!("stem expects 3 input channels, got {}", d.c)));
    }
    if !d.h.is_multiple_of(4) || !d.w.is_multiple_of(4) {
        return Err(Error::Input(format!("stem input {}x{} is not divisible by 4", d.h, d.w)));
    }
    let a = gelu(&w.conv1.forward(x)?);
    Ok(gelu(&w.conv2.forward(&a)?))
}

/// 3×3 stride-2 convolution + BN between stages.
pub fn downsample_forward<T: Scalar>(x: &Tensor4<T>, w: &ConvBn<T>) -> Result<Tensor4<T>> {
    w.forward(x)
}

pub fn downsample_spec(in_channels: usize, out_channels: usize) -> ConvSpec {
    ConvSpec::square(in_channels, out_channels, 3, 2, 1)
}

/// Pooled features → hidden linear + BN + GeLU → classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadWeights<T = f32> {
    pub hidden: Linear<T>,
    pub norm: BatchNorm<T>,
    pub classifier: Linear<T>,
}

impl<T: Scalar> HeadWeights<T> {
    pub fn zeros(in_features: usize, hidden: usize, classes: usize) -> Self {
        HeadWeights {
            hidden: Linear::zeros(in_features, hidden),
            norm: BatchNorm::identity(hidden),
            classifier: Linear::zeros(hidden, classes),
        }
    }
}

pub fn head_forward<T: Scalar>(x: &Tensor4<T>, w: &HeadWeights<T>) -> Result<Tensor2<T>> {
    let pooled = global_avg_pool(x);
    let hidden = w.norm.forward2(&w.hidden.forward(&pooled)?)?.map(gelu_scalar);
    w.classifier.forward(&hidden)
}

/// Complete parameter set of a MobileViG model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights<T = f32> {
    pub config: VariantConfig,
    pub stem: StemWeights<T>,
    /// The three MBConv stages.
    pub stages: Vec<Vec<MbconvWeights<T>>>,
    /// Downsampling after each MBConv stage.
    pub downsamples: Vec<ConvBn<T>>,
    pub svga: Vec<SvgaBlockWeights<T>>,
    pub head: HeadWeights<T>,
}

impl<T: Scalar> ModelWeights<T> {
    /// All-zero weights with identity batch norms.
    pub fn zeros(cfg: &VariantConfig) -> Result<Self> {
        cfg.validate()?;
        let ch = cfg.stage_channels;
        Ok(ModelWeights {
            config: *cfg,
            stem: StemWeights::zeros(cfg.stem_width(), ch[0]),
            stages: (0..3)
                .map(|s| (0..cfg.stage_depths[s]).map(|_| MbconvWeights::zeros(ch[s], cfg.expansion)).collect())
                .collect(),
            downsamples: (0..3).map(|s| ConvBn::zeros(downsample_spec(ch[s], ch[s + 1]))).collect(),
            svga: (0..cfg.stage_depths[3]).map(|_| SvgaBlockWeights::zeros(ch[3], cfg.k, cfg.ffn_ratio)).collect(),
            head: HeadWeights::zeros(ch[3], cfg.head_hidden, cfg.num_classes),
        })
    }

    /// Copy of every tensor as `(name, shape, data)` in parameter order.
    pub fn named_tensors(&self) -> Vec<(alloc::string::String, Vec<usize>, Vec<T>)> {
        let mut out = Vec::new();
        self.visit("", &mut |info, data| {
            out.push((alloc::string::String::from(info.name), info.shape.to_vec(), data.to_vec()));
        });
        out
    }
}

/// Builds weights for `cfg` with the standard seeded initialization:
/// truncated-normal (std 0.02, ±2σ) conv and linear weights drawn in
/// parameter order, zero biases, identity batch norms.
pub fn build_model(cfg: &VariantConfig, seed: u64) -> Result<ModelWeights<f32>> {
    let mut w = ModelWeights::zeros(cfg)?;
    SeededInit::new(seed).init_standard(&mut w);
    Ok(w)
}

/// Per-stage output extents and the logits of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T: Scalar = f32> {
    pub stem: Dims,
    pub stages: [Dims; 4],
    pub logits: Tensor2<T>,
}

fn check_input(x: &Tensor4<impl Scalar>) -> Result<()> {
    let d = x.dims();
    if d.c != 3 {
        return Err(Error::Input(format!("expected 3 input channels, got {}", d.c)));
    }
    if !d.h.is_multiple_of(32) || !d.w.is_multiple_of(32) {
        return Err(Error::Input(format!("input {}x{} is not divisible by 32", d.h, d.w)));
    }
    Ok(())
}

pub fn model_forward_traced<T: Scalar>(x: &Tensor4<T>, w: &ModelWeights<T>, cfg: &VariantConfig) -> Result<ForwardTrace<T>> {
    if w.config != *cfg {
        return Err(Error::Config(format!("weights are for {}, config is {}", w.config.variant, cfg.variant)));
    }
    check_input(x)?;
    let mut h = stem_forward(x, &w.stem)?;
    let stem = h.dims();
    let mut stages = [stem; 4];
    for s in 0..3 {
        for block in &w.stages[s] {
            h = mbconv_forward(&h, block)?;
        }
        stages[s] = h.dims();
        h = downsample_forward(&h, &w.downsamples[s])?;
    }
    for block in &w.svga {
        h = svga_block_forward(&h, block)?;
    }
    stages[3] = h.dims();
    let logits = head_forward(&h, &w.head)?;
    Ok(ForwardTrace { stem, stages, logits })
}

/// Stem → MBConv stages with downsampling → SVGA stage → head.
pub fn model_forward<T: Scalar>(x: &Tensor4<T>, w: &ModelWeights<T>, cfg: &VariantConfig) -> Result<Tensor2<T>> {
    model_forward_traced(x, w, cfg).map(|t| t.logits)
}

impl<T: Scalar> Parameters<T> for MbconvWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.expand.visit(&join(prefix, "expand"), f);
        self.depthwise.visit(&join(prefix, "depthwise"), f);
        self.project.visit(&join(prefix, "project"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.expand.visit_mut(&join(prefix, "expand"), f);
        self.depthwise.visit_mut(&join(prefix, "depthwise"), f);
        self.project.visit_mut(&join(prefix, "project"), f);
    }
}

impl<T: Scalar> Parameters<T> for StemWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.conv1.visit(&join(prefix, "0"), f);
        self.conv2.visit(&join(prefix, "1"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.conv1.visit_mut(&join(prefix, "0"), f);
        self.conv2.visit_mut(&join(prefix, "1"), f);
    }
}

impl<T: Scalar> Parameters<T> for HeadWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.hidden.visit(&join(prefix, "hidden"), f);
        self.norm.visit(&join(prefix, "norm"), f);
        self.classifier.visit(&join(prefix, "classifier"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.hidden.visit_mut(&join(prefix, "hidden"), f);
        self.norm.visit_mut(&join(prefix, "norm"), f);
        self.classifier.visit_mut(&join(prefix, "classifier"), f);
    }
}

impl<T: Scalar> Parameters<T> for ModelWeights<T> {
    fn visit(&self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &[T])) {
        self.stem.visit(&join(prefix, "stem"), f);
        for (s, stage) in self.stages.iter().enumerate() {
            for (b, block) in stage.iter().enumerate() {
                block.visit(&join(prefix, &format!("stages.{s}.{b}")), f);
            }
            self.downsamples[s].visit(&join(prefix, &format!("downsample.{s}")), f);
        }
        for (b, block) in self.svga.iter().enumerate() {
            block.visit(&join(prefix, &format!("svga.{b}")), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(ParamInfo<'_>, &mut [T])) {
        self.stem.visit_mut(&join(prefix, "stem"), f);
        for (s, stage) in self.stages.iter_mut().enumerate() {
            for (b, block) in stage.iter_mut().enumerate() {
                block.visit_mut(&join(prefix, &format!("stages.{s}.{b}")), f);
            }
            self.downsamples[s].visit_mut(&join(prefix, &format!("downsample.{s}")), f);
        }
        for (b, block) in self.svga.iter_mut().enumerate() {
            block.visit_mut(&join(prefix, &format!("svga.{b}")), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}

#[cfg(test)]
mod tests {
    use super::super::Variant;
    use super::*;

    #[test]
    fn mbconv_zero_weights_identity() {
        let x: Tensor4<f32> = SeededInit::new(1).tensor(Dims::new(2, 6, 5, 5), 1.0);
        let w = MbconvWeights::zeros(6, 4);
        assert!(mbconv_forward(&x, &w).unwrap().bitwise_eq(&x));
        assert!(mbconv_forward(&Tensor4::<f32>::zeros(Dims::new(1, 5, 2, 2)), &w).is_err());
    }

    #[test]
    fn mbconv_single_pixel_chain() {
        let mut w = MbconvWeights::<f64>::zeros(1, 4);
        for cb in [&mut w.expand, &mut w.depthwise, &mut w.project] {
            cb.conv.weight.iter_mut().for_each(|v| *v = 1.0);
            cb.bn.eps = 0.0;
        }
        let x = Tensor4::full(Dims::new(1, 1, 1, 1), 0.5f64);
        // expand: four copies of gelu(0.5); the depthwise centre tap sees only
        // that pixel; project sums the four channels.
        let g1 = gelu_scalar(0.5f64);
        let g2 = gelu_scalar(g1);
        let expect = 0.5 + ((g2 + g2) + g2) + g2;
        let y = mbconv_forward(&x, &w).unwrap();
        assert!((y.data()[0] - expect).abs() < 1e-15);
        // evaluated independently: 0.5 + 4·gelu(gelu(0.5))
        assert!((y.data()[0] - 1.3784721408521934).abs() < 1e-12);
    }

    #[test]
    fn stem_and_downsample_shapes() {
        let w = StemWeights::<f32>::zeros(21, 42);
        let x = Tensor4::<f32>::zeros(Dims::new(1, 3, 32, 32));
        assert_eq!(stem_forward(&x, &w).unwrap().dims(), Dims::new(1, 42, 8, 8));
        assert!(stem_forward(&Tensor4::<f32>::zeros(Dims::new(1, 3, 30, 32)), &w).is_err());

        let d = ConvBn::<f32>::zeros(downsample_spec(42, 84));
        let y = downsample_forward(&Tensor4::zeros(Dims::new(1, 42, 56, 56)), &d).unwrap();
        assert_eq!(y.dims(), Dims::new(1, 84, 28, 28));
        let d = ConvBn::<f32>::zeros(downsample_spec(4, 4));
        assert_eq!(downsample_forward(&Tensor4::zeros(Dims::new(1, 4, 7, 7)), &d).unwrap().dims(), Dims::new(1, 4, 4, 4));
    }

    #[test]
    fn build_is_deterministic_and_seed_sensitive() {
        let cfg = VariantConfig::new(Variant::Ti).with_num_classes(10);
        let a = build_model(&cfg, 1).unwrap();
        let b = build_model(&cfg, 1).unwrap();
        let c = build_model(&cfg, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.stem.conv1.conv.weight, c.stem.conv1.conv.weight);
        assert_eq!(a.learned_count(), c.learned_count());
        assert_eq!(a.svga[0].grapher.graph_proj.bn, BatchNorm::identity(512));
        assert!(a.stem.conv1.conv.bias.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn names_are_unique() {
        let w = ModelWeights::<f32>::zeros(&VariantConfig::new(Variant::S)).unwrap();
        let names: Vec<_> = w.named_tensors().into_iter().map(|(n, _, _)| n).collect();
        let mut sorted = names.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), names.len());
        assert_eq!(names[0], "stem.0.conv.weight");
        assert!(names.contains(&alloc::string::String::from("svga.2.grapher.graph_proj.conv.weight")));
        assert_eq!(names.last().unwrap(), "head.classifier.bias");
    }

    #[test]
    fn small_forward_shapes() {
        let cfg = VariantConfig::new(Variant::Ti).with_num_classes(10);
        let w = build_model(&cfg, 0).unwrap();
        let x: Tensor4<f32> = SeededInit::new(9).tensor(Dims::new(2, 3, 64, 64), 1.0);
        let t = model_forward_traced(&x, &w, &cfg).unwrap();
        assert_eq!(t.stem, Dims::new(2, 42, 16, 16));
        assert_eq!(t.stages, [
            Dims::new(2, 42, 16, 16),
            Dims::new(2, 84, 8, 8),
            Dims::new(2, 168, 4, 4),
            Dims::new(2, 256, 2, 2),
        ]);
        assert_eq!((t.logits.n(), t.logits.c()), (2, 10));
        assert!(t.logits.data().iter().all(|v| v.is_finite()));
        assert!(model_forward(&Tensor4::<f32>::zeros(Dims::new(1, 3, 48, 64)), &w, &cfg).is_err());
        let other = VariantConfig::new(Variant::S).with_num_classes(10);
        assert!(model_forward(&x, &w, &other).is_err());
    }
}
