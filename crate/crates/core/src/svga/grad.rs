//! Hand-derived backward pass through an SVGA block and its
//! finite-difference check.
//!
//! The scalar loss is the sum of all block outputs. Gradients are taken with
//! respect to the input and every block tensor, batch-norm running
//! statistics included.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::{FixedGraph, SvgaBlockWeights};
use crate::error::{mismatch, Error, Result};
use crate::params::{ParamKind, Parameters};
use crate::tensor::{batchnorm_infer, concat_channels, conv2d, elem_add, gelu_scalar, ConvBn, Dims, Tensor4};

/// Largest input checked; each coordinate costs two forward passes.
pub const MAX_CHECK_ELEMENTS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    /// Replaces GeLU so the block is piecewise affine.
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => gelu_scalar(x),
            Activation::Identity => x,
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * core::f64::consts::FRAC_1_SQRT_2));
                let pdf = libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * core::f64::consts::PI);
                cdf + x * pdf
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckConfig {
    pub activation: Activation,
    /// Central-difference step.
    pub step: f64,
    /// Inputs are resampled while any max fold has its two best candidates
    /// closer than this.
    pub tie_margin: f64,
    /// Inputs are resampled while any activation input is closer to zero
    /// than this.
    pub preact_margin: f64,
    pub max_resamples: usize,
    /// Std of the random conv weights.
    pub weight_std: f64,
    /// Denominator floor of the relative error.
    pub rel_floor: f64,
    /// Whether batch-norm running variances are checked. The loss is not
    /// affine in them, so the piecewise-affine check leaves them out.
    pub check_running_var: bool,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            activation: Activation::Gelu,
            step: 1e-5,
            tie_margin: 1e-3,
            preact_margin: 1e-6,
            max_resamples: 64,
            weight_std: 0.5,
            rel_floor: 1e-6,
            check_running_var: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Tensor holding the worst coordinate ("input" or a parameter name).
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub coordinates: usize,
    pub resamples: usize,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GradCheckError {
    #[error("non-finite gradient in {param}[{index}]")]
    NonFinite { param: String, index: usize },
    #[error("input has {0} elements, limit is {MAX_CHECK_ELEMENTS}")]
    TooLarge(usize),
    #[error("no sample clear of nondifferentiable points after {0} draws")]
    NoSmoothSample(usize),
    #[error(transparent)]
    Model(#[from] Error),
}

struct ConvBnTape {
    input: Tensor4<f64>,
    pre_bn: Tensor4<f64>,
    out: Tensor4<f64>,
}

fn conv_bn_taped(x: Tensor4<f64>, cb: &ConvBn<f64>) -> Result<ConvBnTape> {
    let pre_bn = conv2d(&x, &cb.conv)?;
    let out = batchnorm_infer(&pre_bn, &cb.bn)?;
    Ok(ConvBnTape { input: x, pre_bn, out })
}

/// Intermediates of one block forward pass.
pub struct BlockTape {
    activation: Activation,
    k: usize,
    fc_in: ConvBnTape,
    /// Per element of the aggregate: flat index of the winning neighbor, or
    /// `usize::MAX` when the zero self term won.
    argmax: Vec<usize>,
    min_tie_gap: f64,
    proj: ConvBnTape,
    fc_out: ConvBnTape,
    fc1: ConvBnTape,
    fc2: ConvBnTape,
    output: Tensor4<f64>,
}

impl BlockTape {
    pub fn output(&self) -> &Tensor4<f64> {
        &self.output
    }

    /// Smallest distance between the best and runner-up candidate of any
    /// max fold.
    pub fn min_tie_gap(&self) -> f64 {
        self.min_tie_gap
    }

    /// Smallest |activation input|.
    pub fn min_preactivation(&self) -> f64 {
        self.proj
            .out
            .data()
            .iter()
            .chain(self.fc1.out.data())
            .fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }
}

/// Aggregation with argmax bookkeeping; folds candidates in the same order
/// as the roll implementation (zero, downward offsets, rightward offsets).
fn relative_max_taped(x: &Tensor4<f64>, graph: &FixedGraph) -> (Tensor4<f64>, Vec<usize>, f64) {
    let d = x.dims();
    let mut xj = Tensor4::zeros(d);
    let mut argmax = vec![usize::MAX; d.len()];
    let mut min_gap = f64::INFINITY;
    for n in 0..d.n {
        for c in 0..d.c {
            let base = (n * d.c + c) * d.plane();
            let plane = x.plane(n, c);
            for i in 0..d.h {
                for j in 0..d.w {
                    let p = i * d.w + j;
                    let (mut best, mut second, mut arg) = (0.0f64, f64::NEG_INFINITY, usize::MAX);
                    for q in graph.neighbors_of(i, j) {
                        let v = plane[p] - plane[q];
                        if v > best {
                            second = best;
                            best = v;
                            arg = base + q;
                        } else if v > second {
                            second = v;
                        }
                    }
                    min_gap = min_gap.min(best - second);
                    xj.data_mut()[base + p] = best;
                    argmax[base + p] = arg;
                }
            }
        }
    }
    (xj, argmax, min_gap)
}

fn activate(x: &Tensor4<f64>, act: Activation) -> Tensor4<f64> {
    x.map(|v| act.apply(v))
}

/// Block forward recording everything the backward pass needs. With
/// [`Activation::Gelu`] the output is bitwise equal to
/// [`super::svga_block_forward`].
pub fn block_forward_taped(x: &Tensor4<f64>, w: &SvgaBlockWeights<f64>, act: Activation) -> Result<BlockTape> {
    let d = x.dims();
    if d.c != w.channels() {
        return Err(mismatch("block_forward_taped", alloc::format!("{} channels vs width {}", d.c, w.channels())));
    }
    w.grapher.validate()?;
    let graph = super::build_fixed_offsets(d.h, d.w, w.k)?;
    let g = &w.grapher;
    let fc_in = conv_bn_taped(x.clone(), &g.fc_in)?;
    let (xj, argmax, min_tie_gap) = relative_max_taped(&fc_in.out, &graph);
    let proj = conv_bn_taped(concat_channels(&fc_in.out, &xj)?, &g.graph_proj)?;
    let fc_out = conv_bn_taped(activate(&proj.out, act), &g.fc_out)?;
    let y = elem_add(&fc_out.out, x)?;
    let fc1 = conv_bn_taped(y.clone(), &w.ffn.fc1)?;
    let fc2 = conv_bn_taped(activate(&fc1.out, act), &w.ffn.fc2)?;
    let output = elem_add(&fc2.out, &y)?;
    Ok(BlockTape { activation: act, k: w.k, fc_in, argmax, min_tie_gap, proj, fc_out, fc1, fc2, output })
}

/// Gradient of the sum of block outputs.
pub struct BlockGradients {
    pub input: Tensor4<f64>,
    /// Same layout as the weights; BN `eps` is unused and zero.
    pub weights: SvgaBlockWeights<f64>,
}

/// Backward through a 1×1 dense conv + BN. Returns the input gradient and
/// fills `grad` with parameter gradients.
fn conv_bn_backward(tape: &ConvBnTape, cb: &ConvBn<f64>, grad_out: &Tensor4<f64>, grad: &mut ConvBn<f64>) -> Tensor4<f64> {
    let spec = cb.conv.spec;
    assert!(spec.kernel == (1, 1) && spec.groups == 1 && spec.stride == 1 && spec.padding == 0);
    let d = tape.pre_bn.dims();
    let plane = d.plane();
    let bn = &cb.bn;

    // batch norm
    let mut g_pre = Tensor4::zeros(d);
    for n in 0..d.n {
        for c in 0..d.c {
            let s = bn.std(c);
            let v_eps = bn.var[c] + bn.eps;
            let pre = tape.pre_bn.plane(n, c);
            let go = grad_out.plane(n, c);
            let base = (n * d.c + c) * plane;
            for p in 0..plane {
                let centered = pre[p] - bn.mean[c];
                grad.bn.gamma[c] += go[p] * centered / s;
                grad.bn.beta[c] += go[p];
                grad.bn.mean[c] -= go[p] * bn.gamma[c] / s;
                grad.bn.var[c] -= 0.5 * go[p] * bn.gamma[c] * centered / (v_eps * s);
                g_pre.data_mut()[base + p] = go[p] * bn.gamma[c] / s;
            }
        }
    }

    // 1×1 convolution
    let (cin, cout) = (spec.in_channels, spec.out_channels);
    let mut g_in = Tensor4::zeros(tape.input.dims());
    for n in 0..d.n {
        for oc in 0..cout {
            let go = g_pre.plane(n, oc);
            grad.conv.bias[oc] += go.iter().sum::<f64>();
            for ic in 0..cin {
                let wv = cb.conv.weight[oc * cin + ic];
                let xin = tape.input.plane(n, ic);
                let mut gw = 0.0;
                let base = (n * cin + ic) * plane;
                for p in 0..plane {
                    gw += go[p] * xin[p];
                    g_in.data_mut()[base + p] += go[p] * wv;
                }
                grad.conv.weight[oc * cin + ic] += gw;
            }
        }
    }
    g_in
}

fn zero_grads(w: &SvgaBlockWeights<f64>) -> SvgaBlockWeights<f64> {
    let mut g = w.clone();
    g.visit_mut("", &mut |_, data| data.iter_mut().for_each(|v| *v = 0.0));
    for cb in [&mut g.grapher.fc_in, &mut g.grapher.graph_proj, &mut g.grapher.fc_out, &mut g.ffn.fc1, &mut g.ffn.fc2] {
        cb.bn.eps = 0.0;
    }
    g
}

fn activation_backward(pre: &Tensor4<f64>, grad_out: &Tensor4<f64>, act: Activation) -> Tensor4<f64> {
    let data = pre.data().iter().zip(grad_out.data()).map(|(&x, &g)| g * act.derivative(x)).collect();
    Tensor4::from_parts(pre.dims(), data)
}

/// Analytic gradient of `sum(block(x))`.
pub fn block_backward(tape: &BlockTape, w: &SvgaBlockWeights<f64>) -> BlockGradients {
    let act = tape.activation;
    let mut grads = zero_grads(w);
    let ones = Tensor4::full(tape.output.dims(), 1.0);

    // FFN: z = fc2(act(fc1(y))) + y
    let g_hidden = conv_bn_backward(&tape.fc2, &w.ffn.fc2, &ones, &mut grads.ffn.fc2);
    let g_fc1 = activation_backward(&tape.fc1.out, &g_hidden, act);
    let g_y_ffn = conv_bn_backward(&tape.fc1, &w.ffn.fc1, &g_fc1, &mut grads.ffn.fc1);
    let g_y = elem_add(&ones, &g_y_ffn).expect("shapes agree");

    // Grapher: y = fc_out(act(proj(concat(h, xj)))) + x, h = fc_in(x)
    let gw = &w.grapher;
    let g_act = conv_bn_backward(&tape.fc_out, &gw.fc_out, &g_y, &mut grads.grapher.fc_out);
    let g_proj = activation_backward(&tape.proj.out, &g_act, act);
    let g_cat = conv_bn_backward(&tape.proj, &gw.graph_proj, &g_proj, &mut grads.grapher.graph_proj);

    // concat split, then route the aggregate's gradient through the argmax:
    // xj[p] = h[p] - h[q*] unless the zero self term won.
    let d = tape.fc_in.out.dims();
    let half = d.c * d.plane();
    let mut g_h = Tensor4::zeros(d);
    for n in 0..d.n {
        let cat = &g_cat.data()[n * 2 * half..(n + 1) * 2 * half];
        let (direct, via_xj) = cat.split_at(half);
        let dst = &mut g_h.data_mut()[n * half..(n + 1) * half];
        dst.iter_mut().zip(direct).for_each(|(a, &b)| *a += b);
        for (off, &g) in via_xj.iter().enumerate() {
            let flat = n * half + off;
            let q = tape.argmax[flat];
            if q != usize::MAX {
                g_h.data_mut()[flat] += g;
                g_h.data_mut()[q] -= g;
            }
        }
    }
    let g_x_fc = conv_bn_backward(&tape.fc_in, &gw.fc_in, &g_h, &mut grads.grapher.fc_in);
    let input = elem_add(&g_y, &g_x_fc).expect("shapes agree");
    debug_assert_eq!(tape.k, w.k);
    BlockGradients { input, weights: grads }
}

fn loss(x: &Tensor4<f64>, w: &SvgaBlockWeights<f64>, act: Activation) -> Result<f64> {
    Ok(block_forward_taped(x, w, act)?.output.data().iter().sum())
}

fn flatten(w: &SvgaBlockWeights<f64>) -> (Vec<f64>, Vec<(String, usize, ParamKind)>) {
    let mut flat = Vec::new();
    let mut spans = Vec::new();
    w.visit("", &mut |info, data| {
        spans.push((String::from(info.name), data.len(), info.kind));
        flat.extend_from_slice(data);
    });
    (flat, spans)
}

fn unflatten(w: &mut SvgaBlockWeights<f64>, flat: &[f64]) {
    let mut at = 0;
    w.visit_mut("", &mut |_, data| {
        data.copy_from_slice(&flat[at..at + data.len()]);
        at += data.len();
    });
}

/// Draws a random block and input for `dims`, resampling away from
/// nondifferentiable points, and compares the analytic gradient to central
/// differences at every coordinate.
pub fn grad_check_svga_with(dims: Dims, k: usize, seed: u64, cfg: &GradCheckConfig) -> Result<GradCheckReport, GradCheckError> {
    if dims.len() > MAX_CHECK_ELEMENTS {
        return Err(GradCheckError::TooLarge(dims.len()));
    }
    let mut init = crate::init::SeededInit::new(seed);
    let mut resamples = 0;
    let (x, w, tape) = loop {
        let mut w = SvgaBlockWeights::<f64>::zeros(dims.c, k, super::DEFAULT_FFN_RATIO);
        init.init_dense(&mut w, cfg.weight_std);
        let x: Tensor4<f64> = init.tensor(dims, 1.0);
        let tape = block_forward_taped(&x, &w, cfg.activation)?;
        let preact_ok = cfg.activation == Activation::Identity || tape.min_preactivation() >= cfg.preact_margin;
        if tape.min_tie_gap() >= cfg.tie_margin && preact_ok {
            break (x, w, tape);
        }
        resamples += 1;
        if resamples > cfg.max_resamples {
            return Err(GradCheckError::NoSmoothSample(resamples));
        }
    };

    let grads = block_backward(&tape, &w);
    let (analytic_w, spans) = flatten(&grads.weights);

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        coordinates: 0,
        resamples,
    };
    let h = cfg.step;
    let mut record = |name: &str, index: usize, analytic: f64, numeric: f64| -> Result<(), GradCheckError> {
        if !analytic.is_finite() || !numeric.is_finite() {
            return Err(GradCheckError::NonFinite { param: String::from(name), index });
        }
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(cfg.rel_floor);
        report.coordinates += 1;
        if rel > report.max_rel_error || report.worst_param.is_empty() {
            report.max_rel_error = rel;
            report.worst_param = String::from(name);
            report.worst_index = index;
            report.analytic = analytic;
            report.numeric = numeric;
        }
        Ok(())
    };

    for i in 0..x.data().len() {
        let mut xp = x.clone();
        xp.data_mut()[i] += h;
        let mut xm = x.clone();
        xm.data_mut()[i] -= h;
        let numeric = (loss(&xp, &w, cfg.activation)? - loss(&xm, &w, cfg.activation)?) / (2.0 * h);
        record("input", i, grads.input.data()[i], numeric)?;
    }

    let (base, _) = flatten(&w);
    let mut wp = w.clone();
    let mut flat = base.clone();
    let mut at = 0;
    for (name, len, kind) in &spans {
        if *kind == ParamKind::RunningVar && !cfg.check_running_var {
            at += len;
            continue;
        }
        for j in 0..*len {
            let i = at + j;
            flat[i] = base[i] + h;
            unflatten(&mut wp, &flat);
            let lp = loss(&x, &wp, cfg.activation)?;
            flat[i] = base[i] - h;
            unflatten(&mut wp, &flat);
            let lm = loss(&x, &wp, cfg.activation)?;
            flat[i] = base[i];
            record(name, j, analytic_w[i], (lp - lm) / (2.0 * h))?;
        }
        at += len;
    }
    Ok(report)
}

/// [`grad_check_svga_with`] under the default configuration.
pub fn grad_check_svga(dims: Dims, k: usize, seed: u64) -> Result<GradCheckReport, GradCheckError> {
    grad_check_svga_with(dims, k, seed, &GradCheckConfig::default())
}
