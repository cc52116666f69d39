use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kawahara_harness::{run_scenario, ExperimentConfig, HarnessError, ScenarioKind};

#[derive(Parser)]
#[command(name = "kawahara", version, about = "Run Kawahara laboratory scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the equation and write snapshots plus an invariant log.
    Solve(Common),
    /// Minimum of the normalized resonance over a dyadic scan.
    ResonanceScan(Common),
    /// Block multiplier norms against their predicted bounds.
    BlockNorm(Common),
    /// Bilinear ratio scaling scan.
    BilinearScan(Common),
    /// Trilinear (and optional asymmetric bilinear) ratio scaling scan.
    TrilinearScan(Common),
    /// Homogeneous and Duhamel linear estimates across cutoff scales.
    LinearScan(Common),
    /// Picard, contraction and Lipschitz measurements on rough data.
    Contraction(Common),
    /// Rough-data sweep across the well-posedness threshold.
    WellposedProbe(Common),
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; the built-in example is used when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (must be empty or absent); overrides `out` in the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed` in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for sweep points.
    #[arg(long)]
    threads: Option<usize>,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
}

impl Command {
    fn split(self) -> (ScenarioKind, Common) {
        match self {
            Command::Solve(c) => (ScenarioKind::Solve, c),
            Command::ResonanceScan(c) => (ScenarioKind::ResonanceScan, c),
            Command::BlockNorm(c) => (ScenarioKind::BlockNorm, c),
            Command::BilinearScan(c) => (ScenarioKind::BilinearScan, c),
            Command::TrilinearScan(c) => (ScenarioKind::TrilinearScan, c),
            Command::LinearScan(c) => (ScenarioKind::LinearScan, c),
            Command::Contraction(c) => (ScenarioKind::Contraction, c),
            Command::WellposedProbe(c) => (ScenarioKind::WellposedProbe, c),
        }
    }
}

fn resolve(kind: ScenarioKind, args: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut config = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::example(kind),
    };
    if config.scenario != kind {
        return Err(HarnessError::config("scenario", format!("config is for `{}` but the subcommand is `{kind}`", config.scenario)));
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(o) = &args.out {
        config.out = Some(o.clone());
    }
    if config.out.is_none() {
        config.out = Some(PathBuf::from(format!("runs/{kind}-seed{}", config.seed)));
    }
    config.validate()?;
    Ok(config)
}

fn run(kind: ScenarioKind, args: Common) -> Result<(), HarnessError> {
    let config = resolve(kind, &args)?;
    if args.print_config {
        print!("{}", config.to_toml());
        return Ok(());
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(HarnessError::config("threads", "must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| HarnessError::config("threads", e.to_string()))?;
    }
    let manifest = run_scenario(&config)?;
    println!(
        "{kind}: {} artifacts in {} ({:.2} s)",
        manifest.artifacts.len(),
        config.out.as_ref().unwrap().display(),
        manifest.timings.scenario_seconds
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = cli.command.split();
    match run(kind, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
