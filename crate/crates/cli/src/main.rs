//! `grape`: run reweighting experiments, verification suites and exports.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use grape_core::analysis::Trajectory;
use grape_core::experiment::{self, parse_config};
use grape_core::reweight::Algorithm;
use grape_core::verify::Suite;
use grape_core::GrapeError;
use log::error;

const EXIT_HELP: &str = "\
EXIT CODES:
    0  success
    1  numerical divergence, or a verification check failed
    2  usage or configuration error
    3  I/O error

ENVIRONMENT:
    RUST_LOG  log verbosity (error, warn, info, debug, trace); default warn";

#[derive(Parser)]
#[command(name = "grape", version, about = "Group-robust multi-target domain reweighting", after_help = EXIT_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML experiment file and write the run directory
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the algorithm (uniform, doge, doge_pcgrad, grape, grape_gap, grape_ema)
        #[arg(long)]
        algo: Option<String>,
    },
    /// Run a verification suite: updates, gradients, theorem1, theorem2, overhead
    Verify { suite: String },
    /// Convert a saved trajectory (JSON or CSV) to another format on stdout
    Export {
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

fn exit_code(e: &GrapeError) -> u8 {
    match e {
        GrapeError::NumericalDivergence { .. } | GrapeError::ScoreError { .. } => 1,
        GrapeError::Io { .. } => 3,
        _ => 2,
    }
}

fn load_trajectory(path: &std::path::Path) -> grape_core::Result<Trajectory> {
    if path.extension().is_some_and(|e| e == "csv") {
        Trajectory::import_csv(path)
    } else {
        Trajectory::load_json(path)
    }
}

fn dispatch(command: Command) -> grape_core::Result<bool> {
    match command {
        Command::Run {
            config,
            seed,
            out,
            algo,
        } => {
            let mut cfg = parse_config(&config)?;
            let algo = algo.as_deref().map(Algorithm::parse).transpose()?;
            cfg.apply_overrides(seed, out, algo);
            cfg.validate()?;
            let summary = experiment::run(&cfg)?;
            println!(
                "{} seed {}: average loss {:.6}, worst {:.6} ({}), output in {}",
                summary.algorithm.name(),
                summary.seed,
                summary.average_loss,
                summary.worst_loss,
                summary.worst_task,
                cfg.out_dir.display()
            );
            Ok(true)
        }
        Command::Verify { suite } => {
            let results = Suite::parse(&suite)?.run()?;
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed))
        }
        Command::Export { trajectory, format } => {
            let traj = load_trajectory(&trajectory)?;
            let text = match format {
                Format::Csv => traj.to_csv()?,
                Format::Json => serde_json::to_string_pretty(&traj).expect("trajectories serialize") + "\n",
            };
            std::io::stdout()
                .write_all(text.as_bytes())
                .map_err(|e| GrapeError::Io {
                    path: "<stdout>".into(),
                    source: e,
                })?;
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
