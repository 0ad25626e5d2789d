//! Stage table, parameter and MAC counts for a variant.

use mobilevig_core::arch::{count_macs, count_params, ModelWeights, VariantConfig};
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StageRow {
    pub stage: String,
    pub block: String,
    pub depth: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Description {
    pub variant: String,
    pub input: [usize; 2],
    pub num_classes: usize,
    pub stages: Vec<StageRow>,
    pub params: usize,
    pub macs: u64,
}

pub fn describe(cfg: &VariantConfig, h: usize, w: usize) -> Result<Description> {
    if h == 0 || w == 0 || !h.is_multiple_of(32) || !w.is_multiple_of(32) {
        return Err(CliError::Input(format!("input size {h}x{w} must be a positive multiple of 32")));
    }
    let weights = ModelWeights::<f32>::zeros(cfg)?;
    let ch = cfg.stage_channels;
    let mut stages = vec![StageRow {
        stage: "stem".into(),
        block: "conv3x3 s2 ×2".into(),
        depth: 2,
        channels: ch[0],
        height: h / 4,
        width: w / 4,
    }];
    for s in 0..4 {
        let scale = 4 << s;
        stages.push(StageRow {
            stage: format!("stage{}", s + 1),
            block: if s < 3 { "mbconv" } else { "svga" }.into(),
            depth: cfg.stage_depths[s],
            channels: ch[s],
            height: h / scale,
            width: w / scale,
        });
    }
    Ok(Description {
        variant: cfg.variant.name().into(),
        input: [h, w],
        num_classes: cfg.num_classes,
        stages,
        params: count_params(&weights),
        macs: count_macs(cfg, h, w),
    })
}

impl Description {
    pub fn render(&self) -> String {
        let mut s = format!(
            "{} @ {}x{}, {} classes\n{:<7} {:<14} {:>5} {:>8} {:>9}\n",
            self.variant, self.input[0], self.input[1], self.num_classes, "stage", "block", "depth", "channels", "size"
        );
        for r in &self.stages {
            s += &format!(
                "{:<7} {:<14} {:>5} {:>8} {:>9}\n",
                r.stage,
                r.block,
                r.depth,
                r.channels,
                format!("{}x{}", r.height, r.width)
            );
        }
        s += &format!(
            "params {} ({:.2} M)\nMACs   {} ({:.3} G)\n",
            self.params,
            self.params as f64 / 1e6,
            self.macs,
            self.macs as f64 / 1e9
        );
        s
    }
}
