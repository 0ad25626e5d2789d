use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

/// The four published MobileViG sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    Ti,
    S,
    M,
    B,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Ti, Variant::S, Variant::M, Variant::B];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ti => "Ti",
            Variant::S => "S",
            Variant::M => "M",
            Variant::B => "B",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let s = s
            .strip_prefix("mobilevig-")
            .or_else(|| s.strip_prefix("MobileViG-"))
            .unwrap_or(s);
        Variant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(alloc::format!("unknown variant {s:?}; expected Ti, S, M or B")))
    }
}

/// Stage layout of one MobileViG variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct VariantConfig {
    pub variant: Variant,
    /// Blocks per stage: three MBConv stages, then the SVGA stage.
    pub stage_depths: [usize; 4],
    pub stage_channels: [usize; 4],
    /// Connection stride of the SVGA graph.
    pub k: usize,
    /// MBConv expansion ratio.
    pub expansion: usize,
    pub ffn_ratio: usize,
    /// Width of the hidden layer between pooling and the classifier.
    pub head_hidden: usize,
    pub num_classes: usize,
}

impl VariantConfig {
    pub const fn new(variant: Variant) -> Self {
        let (stage_depths, stage_channels) = match variant {
            Variant::Ti => ([2, 2, 6, 2], [42, 84, 168, 256]),
            Variant::S => ([3, 3, 9, 3], [42, 84, 176, 256]),
            Variant::M => ([3, 3, 9, 3], [42, 84, 224, 400]),
            Variant::B => ([5, 5, 15, 5], [42, 84, 240, 464]),
        };
        VariantConfig {
            variant,
            stage_depths,
            stage_channels,
            k: 2,
            expansion: 4,
            ffn_ratio: 4,
            head_hidden: 768,
            num_classes: 1000,
        }
    }

    pub const fn with_num_classes(mut self, num_classes: usize) -> Self {
        self.num_classes = num_classes;
        self
    }

    /// Width of the first stem convolution.
    pub const fn stem_width(&self) -> usize {
        self.stage_channels[0] / 2
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.k >= 1
            && self.expansion >= 1
            && self.ffn_ratio >= 1
            && self.head_hidden >= 1
            && self.num_classes >= 1
            && self.stage_channels.iter().all(|&c| c >= 2)
            && self.stage_depths.iter().all(|&d| d >= 1);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(alloc::format!("invalid variant config {self:?}")))
        }
    }
}
