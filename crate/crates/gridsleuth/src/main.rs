use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use gridsleuth::commands::{self, IdentifyOptions, EXIT_CLEAN, EXIT_ERROR};
use gridsleuth::config::{load_scenario, Gamma, Overrides, Scenario};
use gridsleuth::formats::feeder::load_feeder;

/// Phasor stream simulation, admittance identification and event monitoring.
#[derive(Parser)]
#[command(name = "gridsleuth", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replaces the config's master seed.
    #[arg(long)]
    seed_override: Option<u64>,
    /// Output directory; defaults to the config's `output`, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the scenario and write the phasor stream, ground truth and manifest.
    Simulate(ScenarioArgs),
    /// Identify the admittance matrix from a stream file.
    Identify {
        /// Replay (`.gsph`) or CSV stream.
        stream: PathBuf,
        #[arg(long, default_value_t = 1e-6)]
        tau: f64,
        /// First slot of the window (default: first recorded slot).
        #[arg(long)]
        first_slot: Option<u64>,
        /// Window length (default: all remaining slots).
        #[arg(long)]
        samples: Option<usize>,
        /// Ground-truth admittance JSON written by `simulate`.
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Detect and localize admittance changes in a stream, or in a live run
    /// of the scenario when no stream is given.
    Monitor {
        #[command(flatten)]
        scenario: ScenarioArgs,
        stream: Option<PathBuf>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Threshold in amperes, or `auto`.
        #[arg(long)]
        gamma: Option<Gamma>,
        #[arg(long)]
        k_localize: Option<usize>,
    },
    /// Print a stream file's header and optionally convert it to CSV.
    Replay {
        stream: PathBuf,
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Check a config (and the files it names) or a bare feeder file.
    Validate {
        #[arg(long, required_unless_present = "feeder")]
        config: Option<PathBuf>,
        #[arg(long)]
        feeder: Option<PathBuf>,
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        tau: Option<f64>,
    },
}

fn output_dir(args: &ScenarioArgs, sc: &Scenario) -> PathBuf {
    if let Some(o) = &args.out {
        return o.clone();
    }
    match &sc.config.output {
        Some(o) => args.config.parent().unwrap_or(Path::new(".")).join(o),
        None => PathBuf::from("out"),
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate(a) => {
            let sc = load_scenario(&a.config, &Overrides { seed: a.seed_override, ..Default::default() })?;
            let r = commands::cmd_simulate(&sc, &output_dir(&a, &sc))?;
            for f in &r.files {
                println!("{}", f.display());
            }
            Ok(EXIT_CLEAN)
        }
        Command::Identify { stream, tau, first_slot, samples, ground_truth, out } => {
            let s = commands::read_stream(&stream)?;
            let truth = ground_truth.as_deref().map(commands::read_ybus).transpose()?;
            let r = commands::cmd_identify(&s, &IdentifyOptions { tau, first_slot, samples }, truth.as_ref(), &out)?;
            println!("rank {} of {}", r.model.rank, r.model.labels.len());
            if let Some(e) = &r.errors {
                println!("max relative error Y22 {:e}", e.max_relative_error_y22);
                println!("max grid ratio Y22 {:e}", e.max_grid_ratio_y22);
            }
            Ok(EXIT_CLEAN)
        }
        Command::Monitor { scenario, stream, alpha, gamma, k_localize } => {
            let o = Overrides { seed: scenario.seed_override, alpha, gamma, k_localize, ..Default::default() };
            let sc = load_scenario(&scenario.config, &o)?;
            let s = stream.as_deref().map(commands::read_stream).transpose()?;
            let r = commands::cmd_monitor(&sc, s, &output_dir(&scenario, &sc))?;
            println!("alarms {:?}", r.summary.alarms);
            println!("false alarms {}", r.summary.false_alarms);
            for f in &r.summary.localization_failures {
                eprintln!("slot {}: localization failed: {}", f.t, f.advice);
            }
            Ok(r.exit_code)
        }
        Command::Replay { stream, csv } => {
            let s = commands::read_stream(&stream)?;
            print!("{}", commands::cmd_replay(&s, csv.as_deref())?);
            Ok(EXIT_CLEAN)
        }
        Command::Validate { config, feeder, seed_override, tau } => {
            if let Some(c) = config {
                let sc = load_scenario(&c, &Overrides { seed: seed_override, tau, ..Default::default() })?;
                print!("{}", commands::cmd_validate(&sc)?);
            }
            if let Some(p) = feeder {
                let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
                let f = load_feeder(&text).with_context(|| format!("{}", p.display()))?;
                println!("feeder {} buses {} nodes {}", p.display(), f.buses.len(), f.node_count());
            }
            Ok(EXIT_CLEAN)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GRIDSLEUTH_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
