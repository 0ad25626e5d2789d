//! Inference entry point: build or load weights, read or synthesize an
//! input, run the model.

use std::fs;
use std::path::Path;

use mobilevig_core::arch::{build_model, model_forward_traced, ModelWeights, VariantConfig};
use mobilevig_core::init::SeededInit;
use mobilevig_core::{Dims, Tensor4};
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::weights_file::WeightsFile;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ForwardOutput {
    pub variant: String,
    pub input: [usize; 2],
    pub stage_shapes: Vec<[usize; 4]>,
    /// `(class, logit)` pairs, highest first.
    pub top5: Vec<(usize, f32)>,
    pub logits: Vec<f32>,
}

impl ForwardOutput {
    pub fn render(&self) -> String {
        let mut s = format!("{} @ {}x{}\n", self.variant, self.input[0], self.input[1]);
        for (i, d) in self.stage_shapes.iter().enumerate() {
            s += &format!("stage{} {:?}\n", i + 1, d);
        }
        s += "top-5:\n";
        for (c, v) in &self.top5 {
            s += &format!("  {c:>5} {v:.6}\n");
        }
        s
    }
}

/// Loads weights from `path` or builds them from `seed`.
pub fn obtain_weights(cfg: &VariantConfig, seed: u64, load: Option<&Path>) -> Result<(VariantConfig, ModelWeights<f32>)> {
    match load {
        Some(p) => {
            let w = WeightsFile::load(p)?.to_model(cfg)?;
            Ok((w.config, w))
        }
        None => Ok((*cfg, build_model(cfg, seed)?)),
    }
}

/// Seeded N(0, 1) image, independent of the weight draw.
pub fn random_input(size: usize, seed: u64) -> Tensor4<f32> {
    SeededInit::new(seed ^ 0x5EED_1A9E).tensor(Dims::new(1, 3, size, size), 1.0)
}

fn ppm_token<'a>(buf: &'a [u8], at: &mut usize) -> Result<&'a [u8]> {
    loop {
        while *at < buf.len() && buf[*at].is_ascii_whitespace() {
            *at += 1;
        }
        if *at < buf.len() && buf[*at] == b'#' {
            while *at < buf.len() && buf[*at] != b'\n' {
                *at += 1;
            }
            continue;
        }
        break;
    }
    let start = *at;
    while *at < buf.len() && !buf[*at].is_ascii_whitespace() {
        *at += 1;
    }
    if start == *at {
        return Err(CliError::Input("truncated PPM header".into()));
    }
    Ok(&buf[start..*at])
}

fn ppm_number(buf: &[u8], at: &mut usize) -> Result<usize> {
    let t = ppm_token(buf, at)?;
    std::str::from_utf8(t)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::Input("bad number in PPM header".into()))
}

/// Binary PPM (P6, maxval ≤ 255), scaled to [0, 1].
pub fn decode_ppm(buf: &[u8]) -> Result<Tensor4<f32>> {
    let mut at = 0;
    if ppm_token(buf, &mut at)? != b"P6" {
        return Err(CliError::Input("only binary PPM (P6) is supported".into()));
    }
    let w = ppm_number(buf, &mut at)?;
    let h = ppm_number(buf, &mut at)?;
    let max = ppm_number(buf, &mut at)?;
    if h == 0 || w == 0 {
        return Err(CliError::Input("PPM image is empty".into()));
    }
    if max == 0 || max > 255 {
        return Err(CliError::Input(format!("unsupported PPM maxval {max}")));
    }
    at += 1;
    let n = 3 * h * w;
    let pix = buf.get(at..at + n).ok_or_else(|| CliError::Input("PPM pixel data truncated".into()))?;
    let max = max as f32;
    Ok(Tensor4::from_fn(Dims::new(1, 3, h, w), |_, c, y, x| pix[3 * (y * w + x) + c] as f32 / max))
}

/// Raw little-endian f32 in NCHW order for a 1×3×size×size image.
pub fn decode_raw(buf: &[u8], size: usize) -> Result<Tensor4<f32>> {
    let dims = Dims::new(1, 3, size, size);
    if buf.len() != dims.len() * 4 {
        return Err(CliError::Input(format!(
            "raw input has {} bytes, expected {} for 1x3x{size}x{size} f32",
            buf.len(),
            dims.len() * 4
        )));
    }
    let data = buf.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
    Ok(Tensor4::new(dims, data)?)
}

pub fn read_input(path: &Path, size: usize) -> Result<Tensor4<f32>> {
    let buf = fs::read(path)?;
    if buf.starts_with(b"P6") {
        decode_ppm(&buf)
    } else {
        decode_raw(&buf, size)
    }
}

pub fn top_k(logits: &[f32], k: usize) -> Vec<(usize, f32)> {
    let mut idx: Vec<usize> = (0..logits.len()).collect();
    idx.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    idx.into_iter().take(k).map(|i| (i, logits[i])).collect()
}

pub fn run_forward(cfg: &VariantConfig, weights: &ModelWeights<f32>, x: &Tensor4<f32>) -> Result<ForwardOutput> {
    let d = x.dims();
    if !d.h.is_multiple_of(32) || !d.w.is_multiple_of(32) || d.h == 0 || d.w == 0 {
        return Err(CliError::Input(format!("input size {}x{} must be a positive multiple of 32", d.h, d.w)));
    }
    let trace = model_forward_traced(x, weights, cfg)?;
    let logits = trace.logits.into_vec();
    Ok(ForwardOutput {
        variant: cfg.variant.name().into(),
        input: [d.h, d.w],
        stage_shapes: trace.stages.iter().map(|s| [s.n, s.c, s.h, s.w]).collect(),
        top5: top_k(&logits, 5),
        logits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_decodes_with_comment() {
        let mut buf = b"P6\n# note\n2 1\n255\n".to_vec();
        buf.extend_from_slice(&[255, 0, 51, 0, 255, 0]);
        let x = decode_ppm(&buf).unwrap();
        assert_eq!(x.dims(), Dims::new(1, 3, 1, 2));
        assert_eq!(x.at(0, 0, 0, 0), 1.0);
        assert_eq!(x.at(0, 2, 0, 0), 51.0 / 255.0);
        assert_eq!(x.at(0, 1, 0, 1), 1.0);
    }

    #[test]
    fn truncated_ppm_is_input_error() {
        let e = decode_ppm(b"P6\n2 2\n255\n\x00\x01").unwrap_err();
        assert!(matches!(e, CliError::Input(_)));
    }

    #[test]
    fn raw_length_checked() {
        assert!(decode_raw(&[0u8; 12], 1).is_ok());
        assert!(matches!(decode_raw(&[0u8; 11], 1), Err(CliError::Input(_))));
    }

    #[test]
    fn top_k_orders_and_breaks_ties_by_index() {
        let t = top_k(&[1.0, 3.0, 3.0, -1.0, 2.0, 0.5], 5);
        assert_eq!(t.iter().map(|p| p.0).collect::<Vec<_>>(), [1, 2, 4, 0, 5]);
    }
}
