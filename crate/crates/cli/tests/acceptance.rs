//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use mobilevig_cli::bench::{run_bench, BenchConfig, Mechanism};
use mobilevig_cli::forward::{random_input, run_forward};
use mobilevig_cli::verify::{equivariance_suite, grad_suite, knn_suite, oracle_suite, PropertyResult};
use mobilevig_cli::weights_file::WeightsFile;
use mobilevig_core::arch::{build_model, count_macs, count_params, model_forward_traced, Variant, VariantConfig};
use mobilevig_core::Dims;

const SEED: u64 = 0;

struct Outcome {
    passed: bool,
    detail: String,
}

fn property(results: &[PropertyResult], name: &str) -> Outcome {
    let r = results.iter().find(|r| r.property == name).expect("property present");
    let mut detail = format!("{} cases, {}", r.cases, r.detail);
    if let Some(c) = &r.counterexample {
        detail += &format!(", counterexample {c}");
    }
    Outcome { passed: r.passed, detail }
}

fn oracle() -> Outcome {
    property(&oracle_suite(SEED), "roll_equals_gather")
}

fn equivariance() -> Outcome {
    property(&equivariance_suite(SEED), "block_commutes_with_roll")
}

fn gradient() -> Outcome {
    property(&grad_suite(SEED), "analytic_matches_central_difference")
}

fn counting() -> Outcome {
    let published = [(5.2e6, 0.7e9), (7.2e6, 1.0e9), (14.0e6, 1.5e9), (26.7e6, 2.8e9)];
    let mut passed = true;
    let mut parts = Vec::new();
    for (v, (p_ref, m_ref)) in Variant::ALL.into_iter().zip(published) {
        let cfg = VariantConfig::new(v);
        let params = count_params(&mobilevig_core::arch::ModelWeights::<f32>::zeros(&cfg).unwrap()) as f64;
        let macs = count_macs(&cfg, 224, 224) as f64;
        let (dp, dm) = (params / p_ref - 1.0, macs / m_ref - 1.0);
        passed &= dp.abs() <= 0.10 && dm.abs() <= 0.15;
        parts.push(format!("{v} {:.2}M ({:+.1}%) {:.3}G ({:+.1}%)", params / 1e6, dp * 100.0, macs / 1e9, dm * 100.0));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn shapes() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for v in Variant::ALL {
        let cfg = VariantConfig::new(v);
        let w = build_model(&cfg, SEED).unwrap();
        let trace = model_forward_traced(&random_input(224, SEED), &w, &cfg).unwrap();
        let expected: Vec<Dims> = [56, 28, 14, 7]
            .iter()
            .zip(cfg.stage_channels)
            .map(|(&s, c)| Dims::new(1, c, s, s))
            .collect();
        let ok = trace.stages.as_slice() == expected.as_slice()
            && trace.logits.c() == cfg.num_classes
            && trace.logits.data().iter().all(|x| x.is_finite());
        passed &= ok;
        let res: Vec<String> = trace.stages.iter().map(|d| format!("{}@{}", d.c, d.h)).collect();
        parts.push(format!("{v} {}", res.join("/")));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn knn() -> Outcome {
    property(&knn_suite(SEED), "matches_brute_force")
}

fn bench_direction() -> Outcome {
    let mut passed = true;
    let mut parts = Vec::new();
    for c in [256, 400] {
        let cfg = BenchConfig { mechanism: Mechanism::Both, h: 14, w: 14, c, reps: 100, threads: 1, batch: 1, ..Default::default() };
        let r = run_bench(&cfg).unwrap();
        let (s, k) = (r.case("svga").unwrap().median_ns, r.case("knn").unwrap().median_ns);
        passed &= s < k;
        parts.push(format!("c={c} svga {:.3} ms vs knn {:.3} ms ({:.1}x)", s as f64 / 1e6, k as f64 / 1e6, k as f64 / s as f64));
    }
    Outcome { passed, detail: parts.join("; ") }
}

fn logits_of(path: &Path) -> Vec<u32> {
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap();
    v["logits"].as_array().unwrap().iter().map(|x| (x.as_f64().unwrap() as f32).to_bits()).collect()
}

fn run_forward_cli(args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_mobilevig"))
        .args(args)
        .env_remove("MVIG_SEED")
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

fn persistence() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let path = |n: &str| dir.path().join(n);
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (a, b, c, w) = (path("a.json"), path("b.json"), path("c.json"), path("w.bin"));
    let base = ["forward", "--variant", "Ti", "--size", "224", "--seed", "5"];
    let ran = run_forward_cli(&[&base[..], &["--json", &s(&a), "--save", &s(&w)]].concat())
        && run_forward_cli(&[&base[..], &["--json", &s(&b)]].concat())
        && run_forward_cli(&[&base[..], &["--json", &s(&c), "--load", &s(&w)]].concat());
    if !ran {
        return Outcome { passed: false, detail: "binary invocation failed".into() };
    }
    let (la, lb, lc) = (logits_of(&a), logits_of(&b), logits_of(&c));
    let repeat = la == lb;
    let cli_round_trip = la == lc;

    // same round trip in-process for every variant on a small input
    let mut in_process = true;
    for v in Variant::ALL {
        let cfg = VariantConfig::new(v).with_num_classes(10);
        let w = build_model(&cfg, SEED).unwrap();
        let x = random_input(32, SEED);
        let before = run_forward(&cfg, &w, &x).unwrap().logits;
        let restored = WeightsFile::decode(&WeightsFile::from_model(&w).encode()).unwrap().to_model(&cfg).unwrap();
        let after = run_forward(&cfg, &restored, &x).unwrap().logits;
        in_process &= restored == w && before.iter().zip(&after).all(|(p, q)| p.to_bits() == q.to_bits());
    }
    Outcome {
        passed: repeat && cli_round_trip && in_process,
        detail: format!(
            "two invocations bitwise {repeat}, save/load bitwise {cli_round_trip}, all-variant round trip {in_process} ({} logits)",
            la.len()
        ),
    }
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 8] = [
        ("oracle equivalence", Duration::from_secs(30), oracle),
        ("translation equivariance", Duration::from_secs(30), equivariance),
        ("gradient check", Duration::from_secs(60), gradient),
        ("architecture counting", Duration::from_secs(10), counting),
        ("shape schedule", Duration::from_secs(60), shapes),
        ("knn correctness", Duration::from_secs(30), knn),
        ("benchmark direction", Duration::from_secs(120), bench_direction),
        ("determinism and persistence", Duration::from_secs(60), persistence),
    ];
    let mut failures = 0;
    for (i, (name, budget, check)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let out = check();
        let elapsed = t.elapsed();
        let ok = out.passed && elapsed <= budget;
        failures += usize::from(!ok);
        println!(
            "criterion {} {name}: {} [{:.1}s / {}s] {}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            out.detail
        );
    }
    if failures > 0 {
        println!("{failures} criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
