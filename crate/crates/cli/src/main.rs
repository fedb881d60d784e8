//! `fsnet`: generate data, run experiments and ablations, summarize results,
//! and check gradients.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fsnet_core::data::{gen_ar1, write_csv, Series, StreamSpec};
use fsnet_core::gradcheck::run_suite_with_fault;
use fsnet_core::harness::{run_experiment, DataSpec, ExperimentConfig, ExperimentSummary, LearnerKind};
use fsnet_core::{Error as CoreError, Variant};

/// Exit code for inputs that cannot be read.
const EXIT_MISSING_INPUT: u8 = 2;

#[derive(Parser)]
#[command(name = "fsnet", version, about = "Online time-series forecasting with fast and slow learning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic stream to CSV.
    GenData(GenDataArgs),
    /// Run one learner over one or more seeds.
    Run(RunArgs),
    /// Run the four FSNet variants on the same data and seeds.
    Ablate(AblateArgs),
    /// Print a table from summary files.
    Summarize(SummarizeArgs),
    /// Compare analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SyntheticKind {
    SAbrupt,
    SGradual,
    Ar1,
}

#[derive(Args)]
struct GenDataArgs {
    kind: SyntheticKind,
    /// AR coefficient, required for `ar1`.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// Series length for `ar1`.
    #[arg(long, default_value_t = 5000)]
    length: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path. Defaults to `<kind>_seed<seed>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Options shared by `run` and `ablate`. Precedence: these flags, then
/// `--set`, then the config file, then built-in defaults.
#[derive(Args)]
struct ExperimentArgs {
    /// TOML experiment config.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set fsnet.tau=0.5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// `s-abrupt`, `s-gradual`, or a CSV path.
    #[arg(long)]
    data: Option<String>,
    /// CSV feature columns (comma separated); all columns when omitted.
    #[arg(long, value_delimiter = ',')]
    columns: Vec<String>,
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    lookback: Option<usize>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at `--seed` (default 0).
    #[arg(long)]
    seeds: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Also write per-step trigger events.
    #[arg(long)]
    verbose: bool,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    learner: Option<LearnerKind>,
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct SummarizeArgs {
    /// Summary files, or directories searched for `*.summary.json`.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Corrupts the analytic gradient of one op (for testing the checker).
    #[arg(long, hide = true)]
    inject_fault: Option<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenData(a) => gen_data(a),
        Command::Run(a) => run(a),
        Command::Ablate(a) => ablate(a),
        Command::Summarize(a) => summarize(a),
        Command::Gradcheck(a) => gradcheck(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_missing_input(&e) {
                ExitCode::from(EXIT_MISSING_INPUT)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn is_missing_input(e: &anyhow::Error) -> bool {
    e.chain().any(|c| match c.downcast_ref::<CoreError>() {
        Some(CoreError::Io { source, .. }) => source.kind() == std::io::ErrorKind::NotFound,
        _ => c
            .downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::NotFound),
    })
}

fn gen_data(a: GenDataArgs) -> Result<ExitCode> {
    let (name, values, boundaries) = match a.kind {
        SyntheticKind::SAbrupt => {
            let spec = StreamSpec::s_abrupt(a.seed);
            ("s-abrupt", spec.generate()?, spec.boundaries())
        }
        SyntheticKind::SGradual => {
            let spec = StreamSpec::s_gradual(a.seed);
            ("s-gradual", spec.generate()?, spec.boundaries())
        }
        SyntheticKind::Ar1 => {
            let phi = a.phi.context("ar1 needs --phi")?;
            ("ar1", gen_ar1(phi, a.length, a.seed)?, Vec::new())
        }
    };
    let out = a.out.unwrap_or_else(|| PathBuf::from(format!("{name}_seed{}.csv", a.seed)));
    let series = Series::univariate("x", values)?;
    write_csv(&out, &series)?;
    println!("wrote {} ({} rows, 1 column)", out.display(), series.len());
    if !boundaries.is_empty() {
        let b: Vec<String> = boundaries.iter().map(ToString::to_string).collect();
        println!("boundaries: {}", b.join(", "));
    }
    Ok(ExitCode::SUCCESS)
}

/// Builds the config: defaults, file, `--set`, then dedicated flags.
fn build_config(exp: &ExperimentArgs, learner: Option<LearnerKind>) -> Result<ExperimentConfig> {
    let mut overrides = exp.overrides.clone();
    if let Some(d) = &exp.data {
        match d.as_str() {
            "s-abrupt" | "s-gradual" => overrides.push(format!("data = {{ kind = \"{d}\" }}")),
            path => {
                let cols: Vec<String> = exp.columns.iter().map(|c| toml_string(c)).collect();
                overrides.push(format!(
                    "data = {{ kind = \"csv\", path = {}, feature_columns = [{}] }}",
                    toml_string(path),
                    cols.join(", ")
                ));
            }
        }
    }
    if let Some(l) = learner {
        overrides.push(format!("learner = \"{l}\""));
    }
    if let Some(h) = exp.horizon {
        overrides.push(format!("horizon = {h}"));
    }
    if let Some(e) = exp.lookback {
        overrides.push(format!("lookback = {e}"));
    }
    if exp.seed.is_some() || exp.seeds.is_some() {
        let first = exp.seed.unwrap_or(0);
        let n = exp.seeds.unwrap_or(1);
        let list: Vec<String> = (first..first + n).map(|s| s.to_string()).collect();
        overrides.push(format!("seeds = [{}]", list.join(", ")));
    }
    if let Some(o) = &exp.out_dir {
        overrides.push(format!("out_dir = {}", toml_string(&o.display().to_string())));
    }
    if let Some(t) = exp.threads {
        overrides.push(format!("threads = {t}"));
    }
    if exp.verbose {
        overrides.push("verbose = true".into());
    }
    let config = match &exp.config {
        Some(p) => ExperimentConfig::load(p, &overrides)?,
        None => ExperimentConfig::from_toml("", &overrides)?,
    };
    if let DataSpec::Csv { path, .. } = &config.data {
        if !path.exists() {
            let missing = std::io::Error::new(std::io::ErrorKind::NotFound, "data file not found");
            return Err(CoreError::io(path, missing).into());
        }
    }
    config.validate()?;
    Ok(config)
}

fn toml_string(s: &str) -> String {
    serde_json::to_string(s).expect("strings serialise")
}

fn mean_pm(mean: f64, std: f64) -> String {
    format!("{mean:.4} ± {std:.4}")
}

fn run(a: RunArgs) -> Result<ExitCode> {
    let config = build_config(&a.exp, a.learner)?;
    let summary = run_experiment(&config)?;
    println!("{:<20} {:<12} {:>3} {:>18} {:>18}", "learner", "data", "H", "MSE", "MAE");
    print_row(&summary);
    println!("results in {}", config.out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn print_row(s: &ExperimentSummary) {
    println!(
        "{:<20} {:<12} {:>3} {:>18} {:>18}",
        s.learner,
        s.data,
        s.horizon,
        mean_pm(s.mean_mse, s.std_mse),
        mean_pm(s.mean_mae, s.std_mae)
    );
}

fn ablate(a: AblateArgs) -> Result<ExitCode> {
    let base = build_config(&a.exp, None)?;
    let order = [Variant::Full, Variant::LargeMemory, Variant::NoMemory, Variant::Naive];
    let mut results = Vec::new();
    for v in order {
        let mut c = base.clone();
        c.learner = LearnerKind::from_variant(v);
        results.push(run_experiment(&c)?);
    }
    let heads: Vec<String> = order
        .iter()
        .zip(&results)
        .map(|(v, _)| match v {
            Variant::Full => format!("{} (N={})", v.label(), base.fsnet.memory_size),
            Variant::LargeMemory => format!("{} (N=128)", v.label()),
            _ => v.label().to_string(),
        })
        .collect();
    let mut table = String::new();
    let _ = write!(table, "{:<14}", format!("{} H={}", base.data.label(), base.horizon));
    for h in &heads {
        let _ = write!(table, " | {h:>26}");
    }
    table.push('\n');
    for (metric, pick) in [("MSE", 0usize), ("MAE", 1)] {
        let _ = write!(table, "{metric:<14}");
        for s in &results {
            let cell = if pick == 0 { mean_pm(s.mean_mse, s.std_mse) } else { mean_pm(s.mean_mae, s.std_mae) };
            let _ = write!(table, " | {cell:>26}");
        }
        table.push('\n');
    }
    print!("{table}");
    let grid = serde_json::json!({
        "data": base.data.label(),
        "horizon": base.horizon,
        "seeds": base.seeds,
        "variants": order.iter().zip(&results).map(|(v, s)| serde_json::json!({
            "variant": v.label(),
            "mean_mse": s.mean_mse, "std_mse": s.std_mse,
            "mean_mae": s.mean_mae, "std_mae": s.std_mae,
        })).collect::<Vec<_>>(),
    });
    let path = base.out_dir.join(format!("ablation_{}_H{}.json", base.data.slug(), base.horizon));
    std::fs::create_dir_all(&base.out_dir).with_context(|| base.out_dir.display().to_string())?;
    std::fs::write(&path, serde_json::to_string_pretty(&grid)?).with_context(|| path.display().to_string())?;
    Ok(ExitCode::SUCCESS)
}

fn summarize(a: SummarizeArgs) -> Result<ExitCode> {
    let mut files = Vec::new();
    for p in &a.paths {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .with_context(|| p.display().to_string())?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.to_string_lossy().ends_with(".summary.json"))
                .collect();
            found.sort();
            files.extend(found);
        } else {
            files.push(p.clone());
        }
    }
    if files.is_empty() {
        bail!("no summary files found");
    }
    println!("{:<20} {:<12} {:>3} {:>18} {:>18}", "learner", "data", "H", "MSE", "MAE");
    for f in files {
        let text = std::fs::read_to_string(&f).map_err(|e| CoreError::io(&f, e))?;
        let s: ExperimentSummary =
            serde_json::from_str(&text).with_context(|| format!("{}: not a summary file", f.display()))?;
        print_row(&s);
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(a: GradcheckArgs) -> Result<ExitCode> {
    let report = run_suite_with_fault(a.seed, a.inject_fault.as_deref());
    println!("{:<28} {:<24} {:>12}", "op", "parameter", "max rel err");
    for e in &report.entries {
        let mark = if e.passed() { "ok" } else { "FAIL" };
        println!("{:<28} {:<24} {:>12.3e} {mark}", e.op, e.parameter, e.max_rel_error);
    }
    if report.passed() {
        println!("all gradients match");
        return Ok(ExitCode::SUCCESS);
    }
    let worst = report.worst().expect("a failing report has entries");
    eprintln!(
        "gradient check failed: worst is {} ({}) with relative error {:.3e}",
        worst.op, worst.parameter, worst.max_rel_error
    );
    Ok(ExitCode::FAILURE)
}
