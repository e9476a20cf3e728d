//! `modeconnect` command-line interface.
//!
//! Exit status: 0 on success, 1 when the input (flags, config, files) is
//! invalid, 2 when a computation fails at run time.

mod commands;
mod config;
mod data;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Context, CurveSource, EnsembleSources, Replica, SplitArg};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "modeconnect",
    version,
    about = "Mode connectivity and fast geometric ensembling"
)]
struct Cli {
    /// Root seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// JSON run configuration.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Config override `key.path=value`; the value is parsed as JSON when possible.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one network and write its checkpoint.
    Train {
        /// Init/batch-order stream pair, so endpoints of one root seed differ.
        #[arg(long, value_enum, default_value = "a")]
        replica: Replica,
        #[arg(short, long)]
        out: Option<PathBuf>,
        /// Per-iteration loss CSV.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Train a curve between two checkpoints and write it.
    Connect {
        start: PathBuf,
        end: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Evaluate loss and error along a curve or a segment.
    CurveEval {
        /// Curve file written by `connect`.
        #[arg(long, conflicts_with = "segment", required_unless_present = "segment")]
        curve: Option<PathBuf>,
        /// Two checkpoints joined by a straight line.
        #[arg(long, num_args = 2, value_names = ["START", "END"])]
        segment: Option<Vec<PathBuf>>,
        /// Number of equally spaced t values.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Training loss over the plane through three checkpoints.
    Plane {
        w1: PathBuf,
        w2: PathBuf,
        w3: PathBuf,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        margin: Option<f64>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Pretrain, run cyclic-rate FGE, and write checkpoints, manifest, and summary.
    Fge {
        /// Output directory.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a probability-averaging ensemble.
    Ensemble {
        checkpoints: Vec<PathBuf>,
        /// FGE manifest whose checkpoints join the ensemble.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Curve whose interior points join the ensemble.
        #[arg(long)]
        curve: Option<PathBuf>,
        /// Fit a shared temperature on the held-out split.
        #[arg(long)]
        temperature_fit: bool,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Scale a checkpoint towards zero and check loss and predictions.
    Trivial {
        checkpoint: PathBuf,
        /// Comma-separated t values in (0, 1].
        #[arg(long, value_delimiter = ',')]
        t_grid: Option<Vec<f64>>,
        #[arg(long, value_enum, default_value = "train")]
        split: SplitArg,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Curve quality against network width.
    Sweep {
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> modeconnect::Result<()> {
    let config = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(modeconnect::Error::InvalidArgument(
                "--threads must be positive".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| modeconnect::Error::InvalidArgument(e.to_string()))?;
    }
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let ctx = Context { config, seed };
    match cli.command {
        Command::Train {
            replica,
            out,
            history,
        } => commands::train(&ctx, replica, out, history),
        Command::Connect {
            start,
            end,
            out,
            history,
        } => commands::connect(&ctx, &start, &end, out, history),
        Command::CurveEval {
            curve,
            segment,
            grid,
            out,
        } => {
            let source = match (curve, segment) {
                (Some(c), _) => CurveSource::Curve(c),
                (None, Some(s)) => {
                    let [a, b]: [PathBuf; 2] = s.try_into().expect("clap enforces two values");
                    CurveSource::Segment(a, b)
                }
                (None, None) => unreachable!("clap requires one source"),
            };
            commands::curve_eval(&ctx, &source, grid, out)
        }
        Command::Plane {
            w1,
            w2,
            w3,
            resolution,
            margin,
            out,
        } => commands::plane(&ctx, &[w1, w2, w3], resolution, margin, out),
        Command::Fge { out } => commands::fge(&ctx, out),
        Command::Ensemble {
            checkpoints,
            manifest,
            curve,
            temperature_fit,
            out,
        } => {
            let sources = EnsembleSources {
                checkpoints,
                manifest,
                curve,
            };
            commands::ensemble(&ctx, &sources, temperature_fit, out)
        }
        Command::Trivial {
            checkpoint,
            t_grid,
            split,
            out,
        } => commands::trivial(&ctx, &checkpoint, t_grid, split, out),
        Command::Sweep { out } => commands::sweep(&ctx, out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            if matches!(e, modeconnect::Error::NothingToTrain) {
                eprintln!("hint: modeconnect curve-eval --segment START END");
            }
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
