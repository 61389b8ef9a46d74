use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gridsentry::commands;
use gridsentry::config::RunConfig;
use gridsentry::{AppError, Result};

#[derive(Parser)]
#[command(name = "gridsentry", version, about = "Synthesize grid measurements, inject attacks, train and score detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run config JSON, or a manifest written by an earlier command.
    #[arg(long)]
    config: PathBuf,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides `out`, the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `case`.
    #[arg(long)]
    case: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write clean train/test datasets.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train_samples: Option<usize>,
        #[arg(long)]
        test_samples: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Inject attacks into the clean datasets.
    Attack {
        #[command(flatten)]
        common: Common,
        /// `fdia` or `ramp`.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        coverage: Option<f64>,
    },
    /// Train a detector on the attacked training set.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Score the checkpoint on the attacked test set.
    Eval {
        #[command(flatten)]
        common: Common,
    },
    /// generate, attack, train and eval in sequence.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Intensity, location or stealth sweeps.
    Sweep {
        #[command(subcommand)]
        kind: SweepKind,
    },
    /// Summarize a run directory into report.md and plot data.
    Report {
        /// Run directory.
        dir: PathBuf,
    },
}

#[derive(Subcommand)]
enum SweepKind {
    Intensity {
        #[command(flatten)]
        common: Common,
        /// Comma-separated signed x' values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
    },
    Location {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        attacks_per_bus: Option<usize>,
    },
    Stealth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        trials: Option<usize>,
    },
}

fn load(common: &Common) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    if let Some(c) = &common.case {
        cfg.case = c.clone();
    }
    Ok(cfg)
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn print_json<T: serde::Serialize>(v: &T) {
    println!("{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate {
            common,
            train_samples,
            test_samples,
            noise_sigma,
        } => {
            let mut cfg = load(&common)?;
            set(&mut cfg.scenario.train_samples, train_samples);
            set(&mut cfg.scenario.test_samples, test_samples);
            set(&mut cfg.scenario.noise_sigma, noise_sigma);
            let g = commands::generate(&cfg)?;
            println!("wrote {} + {} samples of {} buses to {}", g.train.len(), g.test.len(), g.train.n(), cfg.out.display());
        }
        Command::Attack { common, kind, coverage } => {
            let mut cfg = load(&common)?;
            if let Some(k) = kind {
                cfg.attack.kind = serde_json::from_value(serde_json::Value::String(k.clone()))
                    .map_err(|_| AppError::config("attack.kind", format!("`{k}` is not fdia or ramp")))?;
            }
            set(&mut cfg.attack.coverage, coverage);
            let a = commands::attack(&cfg)?;
            println!("{} train and {} test attacks", a.train.2.len(), a.test.2.len());
        }
        Command::Train {
            common,
            epochs,
            batch_size,
            learning_rate,
        } => {
            let mut cfg = load(&common)?;
            if let Some(e) = epochs {
                cfg.train.max_epochs = e;
                cfg.train.early_stop_patience = cfg.train.early_stop_patience.min(e);
            }
            set(&mut cfg.train.batch_size, batch_size);
            set(&mut cfg.train.optimizer.learning_rate, learning_rate);
            let ck = commands::train(&cfg)?;
            let h = &ck.meta.history;
            println!("trained {} epochs, best epoch {:?}", h.epochs.len(), h.best_epoch);
        }
        Command::Eval { common } => print_json(&commands::eval(&load(&common)?)?.report),
        Command::Run { common } => print_json(&commands::run(&load(&common)?)?.report),
        Command::Sweep { kind } => match kind {
            SweepKind::Intensity { common, grid } => {
                let mut cfg = load(&common)?;
                set(&mut cfg.sweep.intensity.grid, grid);
                print_json(&commands::sweep_intensity(&cfg)?);
            }
            SweepKind::Location { common, attacks_per_bus } => {
                let mut cfg = load(&common)?;
                set(&mut cfg.sweep.location.attacks_per_bus, attacks_per_bus);
                print_json(&commands::sweep_location(&cfg)?);
            }
            SweepKind::Stealth { common, trials } => {
                let mut cfg = load(&common)?;
                set(&mut cfg.sweep.stealth.trials, trials);
                print_json(&commands::sweep_stealth(&cfg)?);
            }
        },
        Command::Report { dir } => println!("{}", commands::report(&dir)?.display()),
    }
    Ok(())
}

fn init_threads() -> Result<()> {
    if let Ok(v) = std::env::var("GRIDSENTRY_THREADS") {
        let n: usize = v
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| AppError::config("GRIDSENTRY_THREADS", format!("`{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| AppError::config("GRIDSENTRY_THREADS", e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match init_threads().and_then(|_| dispatch(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
