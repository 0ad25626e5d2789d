//! Latency comparison of the two aggregation mechanisms.
//!
//! Only the aggregation step is timed by default: rolls and max folds for
//! the fixed graph, KNN construction plus reshape and gather for the
//! baseline. The shared 2C→C projection is added to both sides with
//! `include_projection`.

use std::fs::File;
use std::hint::black_box;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use mobilevig_core::init::SeededInit;
use mobilevig_core::knn::{knn_aggregate, knn_graph, mrconv_knn};
use mobilevig_core::svga::{mrconv_roll, relative_max_roll};
use mobilevig_core::tensor::{ConvBn, ConvSpec};
use mobilevig_core::{Dims, Scalar, Tensor4};
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mechanism {
    Svga,
    Knn,
    Both,
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub mechanism: Mechanism,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub knn_k: usize,
    pub batch: usize,
    pub reps: usize,
    pub warmup: usize,
    pub threads: usize,
    pub include_projection: bool,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            mechanism: Mechanism::Both,
            h: 14,
            w: 14,
            c: 256,
            k: 2,
            knn_k: 9,
            batch: 1,
            reps: 100,
            warmup: 10,
            threads: 1,
            include_projection: false,
            seed: 0,
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.reps < 30 {
            return Err(CliError::Usage(format!("--reps must be >= 30, got {}", self.reps)));
        }
        if self.warmup < 5 {
            return Err(CliError::Usage(format!("--warmup must be >= 5, got {}", self.warmup)));
        }
        if self.h == 0 || self.w == 0 || self.c == 0 || self.batch == 0 || self.threads == 0 {
            return Err(CliError::Usage("dimensions, batch and threads must be >= 1".into()));
        }
        if self.k == 0 {
            return Err(CliError::Usage("--k must be >= 1".into()));
        }
        if self.mechanism != Mechanism::Svga && self.knn_k >= self.h * self.w {
            return Err(CliError::Usage(format!(
                "--knn-k {} must be below the pixel count {}",
                self.knn_k,
                self.h * self.w
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseRecord {
    pub mechanism: String,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k_or_knn_k: usize,
    pub batch: usize,
    pub reps: usize,
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvMeta {
    pub threads: usize,
    pub scalar_bits: u32,
    pub build_profile: String,
    pub include_projection: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub cases: Vec<CaseRecord>,
    pub env: EnvMeta,
}

impl BenchReport {
    pub fn case(&self, mechanism: &str) -> Option<&CaseRecord> {
        self.cases.iter().find(|c| c.mechanism == mechanism)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        serde_json::to_writer_pretty(&mut f, self)?;
        writeln!(f)?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut wtr = csv::Writer::from_path(path)?;
        for c in &self.cases {
            wtr.serialize(c)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{:<6} {:>4} {:>4} {:>5} {:>4} {:>5} {:>5} {:>12} {:>12} {:>12}\n",
            "mech", "h", "w", "c", "k", "batch", "reps", "median_ns", "p10_ns", "p90_ns"
        );
        for c in &self.cases {
            s += &format!(
                "{:<6} {:>4} {:>4} {:>5} {:>4} {:>5} {:>5} {:>12} {:>12} {:>12}\n",
                c.mechanism, c.h, c.w, c.c, c.k_or_knn_k, c.batch, c.reps, c.median_ns, c.p10_ns, c.p90_ns
            );
        }
        s += &format!(
            "threads={} scalar=f{} profile={} projection={}\n",
            self.env.threads, self.env.scalar_bits, self.env.build_profile, self.env.include_projection
        );
        s
    }
}

/// Nearest-rank percentile of sorted samples.
pub fn percentile(sorted: &[u64], q: f64) -> u64 {
    let idx = (q * (sorted.len() - 1) as f64).round() as usize;
    sorted[idx.min(sorted.len() - 1)]
}

/// Runs `op` on every batch item, spread over `threads` scoped workers.
fn run_items(items: &[Tensor4<f32>], threads: usize, op: &(dyn Fn(&Tensor4<f32>) + Sync)) {
    if threads <= 1 || items.len() <= 1 {
        items.iter().for_each(op);
        return;
    }
    let per = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        for chunk in items.chunks(per) {
            s.spawn(move || chunk.iter().for_each(op));
        }
    });
}

fn time_case(cfg: &BenchConfig, items: &[Tensor4<f32>], op: &(dyn Fn(&Tensor4<f32>) + Sync)) -> (u64, u64, u64) {
    for _ in 0..cfg.warmup {
        run_items(items, cfg.threads, op);
    }
    let mut samples: Vec<u64> = (0..cfg.reps)
        .map(|_| {
            let t = Instant::now();
            run_items(items, cfg.threads, op);
            t.elapsed().as_nanos() as u64
        })
        .collect();
    samples.sort_unstable();
    (percentile(&samples, 0.5), percentile(&samples, 0.1), percentile(&samples, 0.9))
}

pub fn run_bench(cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut init = SeededInit::new(cfg.seed);
    let dims = Dims::new(1, cfg.c, cfg.h, cfg.w);
    let items: Vec<Tensor4<f32>> = (0..cfg.batch).map(|_| init.tensor(dims, 1.0)).collect();
    let mut proj = ConvBn::<f32>::zeros(ConvSpec::pointwise(2 * cfg.c, cfg.c));
    init.init_standard(&mut proj);

    let mut cases = Vec::new();
    let mut record = |name: &str, k: usize, (median, p10, p90): (u64, u64, u64)| {
        cases.push(CaseRecord {
            mechanism: name.to_string(),
            h: cfg.h,
            w: cfg.w,
            c: cfg.c,
            k_or_knn_k: k,
            batch: cfg.batch,
            reps: cfg.reps,
            median_ns: median,
            p10_ns: p10,
            p90_ns: p90,
        });
    };

    if cfg.mechanism != Mechanism::Knn {
        let (k, proj) = (cfg.k, &proj);
        let t = if cfg.include_projection {
            time_case(cfg, &items, &|x| {
                black_box(mrconv_roll(black_box(x), k, proj).unwrap());
            })
        } else {
            time_case(cfg, &items, &|x| {
                black_box(relative_max_roll(black_box(x), k).unwrap());
            })
        };
        record("svga", cfg.k, t);
    }
    if cfg.mechanism != Mechanism::Svga {
        let (k, proj) = (cfg.knn_k, &proj);
        let t = if cfg.include_projection {
            time_case(cfg, &items, &|x| {
                let adj = knn_graph(black_box(x), k).unwrap();
                black_box(mrconv_knn(x, &adj, proj).unwrap());
            })
        } else {
            time_case(cfg, &items, &|x| {
                black_box(knn_aggregate(black_box(x), k).unwrap());
            })
        };
        record("knn", cfg.knn_k, t);
    }

    Ok(BenchReport {
        cases,
        env: EnvMeta {
            threads: cfg.threads,
            scalar_bits: <f32 as Scalar>::BITS,
            build_profile: if cfg!(debug_assertions) { "debug" } else { "release" }.to_string(),
            include_projection: cfg.include_projection,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_nearest_rank() {
        let s: Vec<u64> = (1..=11).collect();
        assert_eq!(percentile(&s, 0.5), 6);
        assert_eq!(percentile(&s, 0.1), 2);
        assert_eq!(percentile(&s, 0.9), 10);
        assert_eq!(percentile(&[5], 0.9), 5);
    }

    #[test]
    fn validation() {
        let ok = BenchConfig::default();
        assert!(ok.validate().is_ok());
        assert!(BenchConfig { reps: 10, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { warmup: 2, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { h: 2, w: 2, knn_k: 4, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { h: 2, w: 2, knn_k: 4, mechanism: Mechanism::Svga, ..ok }.validate().is_ok());
    }

    #[test]
    fn report_shape() {
        let cfg = BenchConfig { h: 7, w: 7, c: 8, reps: 30, warmup: 5, batch: 2, threads: 2, ..Default::default() };
        let r = run_bench(&cfg).unwrap();
        assert_eq!(r.cases.len(), 2);
        for c in &r.cases {
            assert!(c.p10_ns <= c.median_ns && c.median_ns <= c.p90_ns);
            assert_eq!((c.reps, c.batch), (30, 2));
        }
        assert_eq!(r.case("knn").unwrap().k_or_knn_k, 9);
        assert_eq!(r.env.scalar_bits, 32);
        assert!(r.render().contains("svga"));
    }
}
