use super::model::downsample_spec;
use super::VariantConfig;
use crate::params::Parameters;
use crate::scalar::Scalar;
use crate::tensor::ConvSpec;

use super::ModelWeights;

/// Learned parameters: conv and linear weights and biases plus batch-norm
/// affine terms. Running statistics are not counted.
pub fn count_params<T: Scalar>(w: &ModelWeights<T>) -> usize {
    w.learned_count()
}

/// Analytic multiply-accumulate count of one forward pass on an `h`×`w`
/// image. Only convolutions and linear layers contribute; rolls, max folds,
/// normalization and activations count as zero.
pub fn count_macs(cfg: &VariantConfig, h: usize, w: usize) -> u64 {
    let mut total = 0u64;
    let mut res = (h, w);
    let mut conv = |spec: ConvSpec, res: &mut (usize, usize)| {
        let (oh, ow) = spec.output_hw(res.0, res.1).expect("input large enough for every layer");
        total += spec.macs(oh, ow);
        *res = (oh, ow);
    };
    let ch = cfg.stage_channels;
    conv(ConvSpec::square(3, cfg.stem_width(), 3, 2, 1), &mut res);
    conv(ConvSpec::square(cfg.stem_width(), ch[0], 3, 2, 1), &mut res);
    for s in 0..3 {
        let hidden = ch[s] * cfg.expansion;
        for _ in 0..cfg.stage_depths[s] {
            conv(ConvSpec::pointwise(ch[s], hidden), &mut res);
            conv(ConvSpec::depthwise(hidden, 3, 1, 1), &mut res);
            conv(ConvSpec::pointwise(hidden, ch[s]), &mut res);
        }
        conv(downsample_spec(ch[s], ch[s + 1]), &mut res);
    }
    let c = ch[3];
    for _ in 0..cfg.stage_depths[3] {
        conv(ConvSpec::pointwise(c, c), &mut res);
        conv(ConvSpec::pointwise(2 * c, 2 * c), &mut res);
        conv(ConvSpec::pointwise(2 * c, c), &mut res);
        conv(ConvSpec::pointwise(c, cfg.ffn_ratio * c), &mut res);
        conv(ConvSpec::pointwise(cfg.ffn_ratio * c, c), &mut res);
    }
    total + (c * cfg.head_hidden + cfg.head_hidden * cfg.num_classes) as u64
}

#[cfg(test)]
mod tests {
    use super::super::{build_model, Variant};
    use super::*;

    // Frozen from a closed-form tally written independently of this code:
    // per block 2·4C² + 36C (MBConv) and 15C² (SVGA), plus stem,
    // downsampling and head.
    const EXPECTED: [(Variant, usize, u64, u64); 4] = [
        (Variant::Ti, 5_079_118, 661_951_872, 2_644_913_664),
        (Variant::S, 7_083_880, 983_498_496, 3_931_100_160),
        (Variant::M, 13_304_392, 1_492_657_152, 5_967_403_008),
        (Variant::B, 26_095_276, 2_792_176_896, 11_165_334_528),
    ];

    #[test]
    fn counts_match_closed_form() {
        for (v, params, macs224, macs448) in EXPECTED {
            let cfg = VariantConfig::new(v);
            assert_eq!(count_params(&ModelWeights::<f32>::zeros(&cfg).unwrap()), params, "{v}");
            assert_eq!(count_macs(&cfg, 224, 224), macs224, "{v}");
            assert_eq!(count_macs(&cfg, 448, 448), macs448, "{v}");
        }
    }

    #[test]
    fn small_head_counts() {
        let expect = [(Variant::Ti, 4_317_808, 13_693_824), (Variant::B, 25_333_966, 57_324_288)];
        for (v, params, macs32) in expect {
            let cfg = VariantConfig::new(v).with_num_classes(10);
            assert_eq!(count_params(&build_model(&cfg, 3).unwrap()), params);
            assert_eq!(count_macs(&cfg, 32, 32), macs32);
        }
    }

    #[test]
    fn macs_scale_with_area() {
        for v in Variant::ALL {
            let cfg = VariantConfig::new(v);
            let ratio = count_macs(&cfg, 448, 448) as f64 / count_macs(&cfg, 224, 224) as f64;
            assert!((3.9..4.0).contains(&ratio), "{v}: {ratio}");
        }
    }
}
