use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use enkf_core::harness::{
    format_sig6, run_sweep, run_twin, selftest, write_cycles_csv, write_sweep_csv, ExperimentConfig, TaperKind,
};
use enkf_core::{Error, FilterKind, Lorenz96, RadiusConvention};

#[derive(Parser)]
#[command(name = "enkf", version, about = "Localized ensemble Kalman filter twin experiments on Lorenz-96")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one twin experiment and write per-cycle diagnostics.
    Run(RunArgs),
    /// Sweep inflation and localization radius; write one row per cell.
    Sweep(SweepArgs),
    /// Run internal consistency checks.
    Selftest,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Lorenz96,
}

#[derive(Clone, Copy, ValueEnum)]
enum ConventionArg {
    Half,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaperArg {
    Gc,
    Gaussian,
    None,
}

/// Settings shared by `run` and `sweep`. Anything left unset falls back to
/// the config file, then to the built-in defaults.
#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    members: Option<usize>,
    #[arg(long)]
    filter: Option<FilterKind>,
    #[arg(long, allow_negative_numbers = true)]
    inflation: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    radius: Option<f64>,
    #[arg(long, value_enum)]
    taper: Option<TaperArg>,
    #[arg(long, value_enum)]
    radius_convention: Option<ConventionArg>,
    /// Pseudo-time steps for the continuous schemes.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long, allow_negative_numbers = true)]
    obs_interval: Option<f64>,
    #[arg(long)]
    cycles: Option<usize>,
    #[arg(long)]
    spinup: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
    /// JSON file with the same keys as the flags (kebab-case).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    exp: ExperimentArgs,
    #[arg(long, value_delimiter = ',', default_value = "1.0,1.02,1.04,1.06,1.08,1.1,1.12,1.15,1.2")]
    deltas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "2,4,6,10,15,20,30")]
    radii: Vec<f64>,
    #[arg(long)]
    parallel: bool,
}

#[derive(Deserialize, Default)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
struct FileConfig {
    model: Option<String>,
    n: Option<usize>,
    members: Option<usize>,
    filter: Option<String>,
    inflation: Option<f64>,
    radius: Option<f64>,
    taper: Option<String>,
    radius_convention: Option<String>,
    steps: Option<usize>,
    obs_interval: Option<f64>,
    cycles: Option<usize>,
    spinup: Option<usize>,
    seed: Option<u64>,
}

fn read_file_config(path: &Path) -> Result<FileConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_convention(s: &str) -> Result<RadiusConvention, Error> {
    match s {
        "half" => Ok(RadiusConvention::HalfSupport),
        "full" => Ok(RadiusConvention::FullSupport),
        other => Err(Error::Validation(format!("unknown radius convention '{other}'"))),
    }
}

fn build_config(args: &ExperimentArgs) -> Result<ExperimentConfig, Error> {
    let file = match &args.config {
        Some(p) => read_file_config(p)?,
        None => FileConfig::default(),
    };
    let mut cfg = ExperimentConfig::default();

    if let Some(m) = &file.model {
        if m != "lorenz96" {
            return Err(Error::Validation(format!("unknown model '{m}'")));
        }
    }
    let _ = args.model;
    let n = args.n.or(file.n).unwrap_or(cfg.model.n);
    cfg.model = Lorenz96::new(n, cfg.model.forcing)?;
    if let Some(v) = args.members.or(file.members) {
        cfg.members = v;
    }
    if let Some(f) = args.filter {
        cfg.filter.kind = f;
    } else if let Some(f) = &file.filter {
        cfg.filter.kind = f.parse()?;
    }
    if let Some(v) = args.inflation.or(file.inflation) {
        cfg.filter.inflation = v;
    }
    if let Some(v) = args.steps.or(file.steps) {
        cfg.filter.steps = v;
    }
    if let Some(v) = args.radius.or(file.radius) {
        cfg.localization.radius = v;
    }
    match args.taper {
        Some(TaperArg::Gc) => cfg.localization.taper = TaperKind::GaspariCohn,
        Some(TaperArg::Gaussian) => cfg.localization.taper = TaperKind::Gaussian,
        Some(TaperArg::None) => cfg.localization.taper = TaperKind::None,
        None => {
            if let Some(t) = &file.taper {
                cfg.localization.taper = t.parse()?;
            }
        }
    }
    match args.radius_convention {
        Some(ConventionArg::Half) => cfg.localization.convention = RadiusConvention::HalfSupport,
        Some(ConventionArg::Full) => cfg.localization.convention = RadiusConvention::FullSupport,
        None => {
            if let Some(c) = &file.radius_convention {
                cfg.localization.convention = parse_convention(c)?;
            }
        }
    }
    if let Some(v) = args.obs_interval.or(file.obs_interval) {
        cfg.obs_interval = v;
    }
    if let Some(v) = args.cycles.or(file.cycles) {
        cfg.cycles = v;
    }
    if let Some(v) = args.spinup.or(file.spinup) {
        cfg.spin_up_cycles = v;
    }
    if let Some(v) = args.seed.or(file.seed) {
        cfg.seed = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    Ok(BufWriter::new(File::create(path)?))
}

fn run(args: &RunArgs) -> Result<ExitCode, Error> {
    let cfg = build_config(&args.exp)?;
    let outcome = run_twin(&cfg)?;
    write_cycles_csv(&outcome.records, create(&args.exp.out)?)?;
    println!(
        "filter={} delta={} r0={} cycles={} rmse={}",
        cfg.filter.kind,
        cfg.filter.inflation,
        cfg.localization.radius,
        outcome.records.len(),
        format_sig6(outcome.cell.rmse)
    );
    match outcome.divergence {
        Some(reason) => {
            eprintln!("diverged: {reason}");
            Ok(ExitCode::from(2))
        }
        None => Ok(ExitCode::SUCCESS),
    }
}

fn sweep(args: &SweepArgs) -> Result<ExitCode, Error> {
    let cfg = build_config(&args.exp)?;
    let result = run_sweep(&cfg, &args.deltas, &args.radii, args.parallel)?;
    write_sweep_csv(&result, create(&args.exp.out)?)?;
    let diverged = result.cells.iter().filter(|c| c.diverged).count();
    match result.best() {
        Some(best) => println!(
            "filter={} cells={} diverged={} best: delta={} r0={} rmse={}",
            result.filter,
            result.cells.len(),
            diverged,
            best.delta,
            best.r0,
            format_sig6(best.rmse)
        ),
        None => println!("filter={} cells={} diverged={}", result.filter, result.cells.len(), diverged),
    }
    Ok(ExitCode::SUCCESS)
}

fn run_selftest() -> ExitCode {
    let checks = selftest();
    let mut ok = true;
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        ok &= c.passed;
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Usage errors are validation failures; exit code 2 is reserved for divergence.
            return if e.use_stderr() { ExitCode::FAILURE } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Selftest => return run_selftest(),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
