//! Binary weights container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "MVIG" | version: u32 | variant: u32 len + UTF-8 | entries: u32
//! per entry: name: u32 len + UTF-8 | rank: u32 | dims: rank × u32 | data: Π dims × f32
//! ```

use std::fs;
use std::path::Path;

use mobilevig_core::arch::{ModelWeights, VariantConfig};
use mobilevig_core::params::Parameters;

use crate::error::{CliError, Result};

pub const MAGIC: [u8; 4] = *b"MVIG";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub name: String,
    pub dims: Vec<u32>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightsFile {
    pub variant: String,
    pub entries: Vec<Entry>,
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len() as u32);
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            CliError::Format(format!("truncated while reading {what} at byte {}", self.at))
        })?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let len = self.u32(what)? as usize;
        let bytes = self.take(len, what)?;
        String::from_utf8(bytes.to_vec()).map_err(|_| CliError::Format(format!("{what} is not valid UTF-8")))
    }
}

impl WeightsFile {
    pub fn from_model(w: &ModelWeights<f32>) -> Self {
        let entries = w
            .named_tensors()
            .into_iter()
            .map(|(name, shape, data)| Entry { name, dims: shape.iter().map(|&d| d as u32).collect(), data })
            .collect();
        WeightsFile { variant: w.config.variant.name().to_string(), entries }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&MAGIC);
        put_u32(&mut out, VERSION);
        put_str(&mut out, &self.variant);
        put_u32(&mut out, self.entries.len() as u32);
        for e in &self.entries {
            put_str(&mut out, &e.name);
            put_u32(&mut out, e.dims.len() as u32);
            for &d in &e.dims {
                put_u32(&mut out, d);
            }
            for &v in &e.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, at: 0 };
        if r.take(4, "magic")? != MAGIC {
            return Err(CliError::Format("bad magic, not an MVIG weights file".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CliError::Format(format!("unsupported format version {version}")));
        }
        let variant = r.string("variant name")?;
        let count = r.u32("entry count")?;
        let mut entries = Vec::with_capacity(count.min(1 << 16) as usize);
        for _ in 0..count {
            let name = r.string("entry name")?;
            let rank = r.u32("rank")?;
            let dims = (0..rank).map(|_| r.u32("dims")).collect::<Result<Vec<_>>>()?;
            let len = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
            let len = len.ok_or_else(|| CliError::Format(format!("{name}: element count overflows")))?;
            let raw = r.take(len.saturating_mul(4), &name)?;
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            entries.push(Entry { name, dims, data });
        }
        if r.at != buf.len() {
            return Err(CliError::Format(format!("{} trailing bytes", buf.len() - r.at)));
        }
        Ok(WeightsFile { variant, entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }

    /// Rebuilds model weights for `cfg`; names, order and shapes must match
    /// exactly. The class count is taken from the stored classifier.
    pub fn to_model(&self, cfg: &VariantConfig) -> Result<ModelWeights<f32>> {
        if !self.variant.eq_ignore_ascii_case(cfg.variant.name()) {
            return Err(CliError::Input(format!(
                "weights are for variant {}, requested {}",
                self.variant, cfg.variant
            )));
        }
        let mut cfg = *cfg;
        if let Some(bias) = self.entries.iter().find(|e| e.name == "head.classifier.bias") {
            if let [classes] = bias.dims[..] {
                cfg.num_classes = classes as usize;
            }
        }
        let mut model = ModelWeights::zeros(&cfg)?;
        let mut expected = 0usize;
        let mut problem: Option<String> = None;
        model.visit_mut("", &mut |info, data| {
            if problem.is_some() {
                return;
            }
            let Some(entry) = self.entries.get(expected) else {
                problem = Some(format!("file ends before {}", info.name));
                return;
            };
            expected += 1;
            let shape: Vec<u32> = info.shape.iter().map(|&d| d as u32).collect();
            if entry.name != info.name || entry.dims != shape {
                problem = Some(format!(
                    "entry {} is {} {:?}, model expects {} {:?}",
                    expected - 1,
                    entry.name,
                    entry.dims,
                    info.name,
                    shape
                ));
                return;
            }
            data.copy_from_slice(&entry.data);
        });
        if let Some(p) = problem {
            return Err(CliError::Input(format!("shape mismatch: {p}")));
        }
        if expected != self.entries.len() {
            return Err(CliError::Input(format!(
                "file has {} entries, model has {expected}",
                self.entries.len()
            )));
        }
        Ok(model)
    }
}
