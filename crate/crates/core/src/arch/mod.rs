//! MobileViG model assembly: convolutional stem, three MBConv stages with
//! stride-2 downsampling, one SVGA stage and a pooled classifier head.

mod config;
mod count;
mod model;

pub use config::{Variant, VariantConfig};
pub use count::{count_macs, count_params};
pub use model::{
    build_model, downsample_forward, downsample_spec, head_forward, mbconv_forward, model_forward,
    model_forward_traced, stem_forward, ForwardTrace, HeadWeights, MbconvWeights, ModelWeights, StemWeights,
};
