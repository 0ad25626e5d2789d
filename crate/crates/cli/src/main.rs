use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mobilevig_cli::bench::{run_bench, BenchConfig, Mechanism};
use mobilevig_cli::describe::describe;
use mobilevig_cli::forward::{obtain_weights, random_input, read_input, run_forward};
use mobilevig_cli::verify::{run_verify, Suite};
use mobilevig_cli::weights_file::WeightsFile;
use mobilevig_cli::{resolve_seed, write_json, CliError, Result};
use mobilevig_core::arch::{Variant, VariantConfig};

#[derive(Parser)]
#[command(name = "mobilevig", version, about = "MobileViG model, SVGA checks and benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the stage table, parameter count and MACs.
    Describe(DescribeArgs),
    /// Run property suites; exits 1 if any property fails.
    Verify(VerifyArgs),
    /// Time SVGA against KNN aggregation.
    Bench(BenchArgs),
    /// Run the model on a random or file input.
    Forward(ForwardArgs),
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "ti")]
    variant: Variant,
    #[arg(long, default_value_t = 1000)]
    num_classes: usize,
}

impl ModelArgs {
    fn config(&self) -> VariantConfig {
        VariantConfig::new(self.variant).with_num_classes(self.num_classes)
    }
}

#[derive(Args)]
struct DescribeArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value = "all")]
    suite: Suite,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_enum, default_value = "both")]
    mechanism: Mechanism,
    #[arg(long, default_value_t = 14)]
    height: usize,
    #[arg(long, default_value_t = 14)]
    width: usize,
    #[arg(long, default_value_t = 256)]
    channels: usize,
    #[arg(long, default_value_t = 2)]
    k: usize,
    #[arg(long, default_value_t = 9)]
    knn_k: usize,
    #[arg(long, default_value_t = 1)]
    batch: usize,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long, default_value_t = 10)]
    warmup: usize,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long)]
    include_projection: bool,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ForwardArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, default_value_t = 224)]
    size: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// PPM (P6) or raw little-endian f32 NCHW file; random if omitted.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    save: Option<PathBuf>,
    #[arg(long)]
    load: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
}

fn cmd_describe(a: DescribeArgs) -> Result<()> {
    let d = describe(&a.model.config(), a.size, a.size)?;
    print!("{}", d.render());
    if let Some(p) = a.json {
        write_json(&p, &d)?;
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let report = run_verify(a.suite, seed);
    print!("{}", report.render());
    if let Some(p) = a.json {
        write_json(&p, &report)?;
    }
    if report.all_passed() {
        Ok(())
    } else {
        let n = report.results.iter().filter(|r| !r.passed).count();
        Err(CliError::Verification(format!("{n} properties failed")))
    }
}

fn cmd_bench(a: BenchArgs) -> Result<()> {
    let cfg = BenchConfig {
        mechanism: a.mechanism,
        h: a.height,
        w: a.width,
        c: a.channels,
        k: a.k,
        knn_k: a.knn_k,
        batch: a.batch,
        reps: a.reps,
        warmup: a.warmup,
        threads: a.threads,
        include_projection: a.include_projection,
        seed: resolve_seed(a.seed)?,
    };
    let report = run_bench(&cfg)?;
    print!("{}", report.render());
    if let Some(p) = a.json {
        report.write_json(&p)?;
    }
    if let Some(p) = a.csv {
        report.write_csv(&p)?;
    }
    Ok(())
}

fn cmd_forward(a: ForwardArgs) -> Result<()> {
    let seed = resolve_seed(a.seed)?;
    let (cfg, weights) = obtain_weights(&a.model.config(), seed, a.load.as_deref())?;
    let x = match &a.input {
        Some(p) => read_input(p, a.size)?,
        None => random_input(a.size, seed),
    };
    let out = run_forward(&cfg, &weights, &x)?;
    print!("{}", out.render());
    if let Some(p) = a.save {
        WeightsFile::from_model(&weights).save(&p)?;
    }
    if let Some(p) = a.json {
        write_json(&p, &out)?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Describe(a) => cmd_describe(a),
        Command::Verify(a) => cmd_verify(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Forward(a) => cmd_forward(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
