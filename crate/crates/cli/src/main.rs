use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use epicontrol::{commands, CliError, Mode, Overrides, RunConfig, EXIT_INTERNAL};

/// Epidemic simulation and social-distancing control experiments.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Number of adherence scenarios.
    #[arg(long, global = true)]
    scenarios: Option<usize>,

    /// Only log warnings and errors.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Ensemble under the observed mobility restrictions.
    SimulateHistorical,
    /// Residential-mobility regression and composed policy weights.
    FitMobility,
    /// Reproduction numbers and stability of the disease-free state.
    StabilityReport,
    /// Receding-horizon social-distancing controller.
    MpcClosedLoop,
}

impl Command {
    fn mode(&self) -> Mode {
        match self {
            Command::SimulateHistorical => Mode::SimulateHistorical,
            Command::FitMobility => Mode::FitMobility,
            Command::StabilityReport => Mode::StabilityReport,
            Command::MpcClosedLoop => Mode::MpcClosedLoop,
        }
    }
}

fn init_threads() {
    let n = match std::env::var("EPICONTROL_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) => n,
            Err(_) => {
                log::warn!("ignoring EPICONTROL_THREADS={v:?}");
                0
            }
        },
        Err(_) => 0,
    };
    if n > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("cannot size thread pool: {e}");
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, CliError> {
    let mode = cli.command.mode();
    let overrides = Overrides {
        seed: cli.seed,
        out_dir: cli.out.clone(),
        scenarios: cli.scenarios,
    };
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path, mode, &overrides)?,
        None => {
            let mut cfg = RunConfig::default();
            cfg.apply(&overrides);
            cfg.validate(mode)?;
            cfg
        }
    };
    log::info!("effective configuration:\n{}", serde_json::to_string_pretty(&cfg)?);
    let outcome = commands::run(mode, &cfg)?;
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    init_threads();

    let code = match std::panic::catch_unwind(|| execute(&cli)) {
        Ok(Ok(code)) => code,
        Ok(Err(e)) => {
            log::error!("{e}");
            e.exit_code()
        }
        Err(_) => EXIT_INTERNAL,
    };
    ExitCode::from(code as u8)
}
