use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use seld6dof::config::RunConfig;
use seld6dof::dataset::{featurize, simulate, Status};
use seld6dof::error::Result;
use seld6dof::{eval, report, train};
use seld6dof_core::net::{Model, Variant};
use seld6dof_core::sim::Split;

#[derive(Parser)]
#[command(name = "seld6dof", version, about = "Wearable 6DoF sound event localization and detection toolkit")]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the seed of the command (dataset seed for simulate, training seed otherwise).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Recompute outputs that already exist.
    #[arg(long, global = true)]
    force: bool,
    /// Worker threads for per-scene work (0 = one per CPU).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic dataset: WAV, label and pose CSVs plus manifest.json.
    Simulate {
        /// Dataset directory (overrides paths.data_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Extract features and aligned sensor streams for every scene.
    Featurize,
    /// Train a model variant and keep the best-validation checkpoint.
    Train {
        /// A, B, C, D or E (overrides model.variant).
        #[arg(long)]
        variant: Option<Variant>,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a split, overall and per motion profile.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Score the encoded reference labels instead of a model.
        #[arg(long)]
        oracle: bool,
    },
    /// Compare evaluated runs: mean ± standard error per variant, loss curves.
    Report {
        /// Run directories holding eval reports.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Output directory (overrides paths.report_dir).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn status_word(s: Status) -> &'static str {
    match s {
        Status::Created => "written",
        Status::UpToDate => "up to date (use --force to recompute)",
    }
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    match path {
        Some(p) => RunConfig::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    match cli.command {
        Command::Simulate { out } => {
            if let Some(seed) = cli.seed {
                cfg.simulate.seed = seed;
            }
            let dir = out.unwrap_or(cfg.paths.data_dir);
            let summary = simulate(&cfg.simulate, &dir, cli.force, cli.jobs)?;
            print!("{}", summary.render());
            println!("manifest {}: {}", summary.manifest.display(), status_word(summary.status));
        }
        Command::Featurize => {
            let (status, index) = featurize(&cfg.paths.manifest(), &cfg.paths.feature_dir, &cfg.sensor, cli.force, cli.jobs)?;
            println!(
                "{} scenes featurized into {}: {}",
                index.scenes.len(),
                cfg.paths.feature_dir.display(),
                status_word(status)
            );
        }
        Command::Train { variant, run_dir, epochs } => {
            if let Some(v) = variant {
                cfg.model.variant = v;
            }
            if let Some(d) = run_dir {
                cfg.paths.run_dir = d;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            if let Some(seed) = cli.seed {
                cfg.train.seed = seed;
            }
            cfg.validate()?;
            let count = Model::new(cfg.model.clone(), cfg.train.seed)?.param_count();
            println!("variant {} ({}): {count} parameters", cfg.model.variant.letter(), cfg.model.variant.description());
            let summary = train::train(&cfg, cli.force, cli.jobs, |e| {
                println!("epoch {:>3}  train {:.6}  val {:.6}  {:.1}s", e.epoch, e.train_loss, e.val_loss, e.seconds);
            })?;
            println!(
                "best epoch {} (val loss {:.6}); {}: {}",
                summary.model.best_epoch,
                summary.model.best_val_loss,
                summary.run_dir.display(),
                status_word(summary.status)
            );
        }
        Command::Eval { checkpoint, split, run_dir, oracle } => {
            if let Some(d) = run_dir {
                cfg.paths.run_dir = d;
            }
            if oracle {
                print!("{}", eval::eval_oracle(&cfg, split, cli.jobs)?.table());
            } else {
                let (status, rep) = eval::eval(&cfg, split, checkpoint.as_deref(), cli.force, cli.jobs)?;
                print!("{}", rep.table());
                println!("{}: {}", eval::report_path(&cfg.paths.run_dir, split).display(), status_word(status));
            }
        }
        Command::Report { runs, split, out } => {
            let dir = out.unwrap_or(cfg.paths.report_dir);
            let (status, table) = report::report(&runs, split, &dir, cli.force)?;
            print!("{table}");
            println!("{}: {}", dir.display(), status_word(status));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
