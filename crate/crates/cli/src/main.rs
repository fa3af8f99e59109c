use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use faery_core::orchestrator::{self, ExperimentConfig, ExperimentKind, CONFIG_VERSION};
use faery_core::{Error, ObjectiveMode, Result};

#[derive(Parser)]
#[command(
    name = "faery",
    version,
    about = "Meta-learned prior populations for few-shot QD search"
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; overrides the configuration.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    parallelism: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write disjoint train/test pools of distinct random mazes.
    GenerateDataset {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
    },
    /// Meta-train a prior on the maze distribution (resumes from `--out`).
    Train,
    /// Measure a prior, or a random population with --scratch, on test mazes.
    Eval {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        scratch: bool,
        /// Number of test tasks; defaults to `maze.meta.m_test`.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Compare meta-objectives on the grid bandit.
    Ablate {
        #[arg(long)]
        runs: Option<usize>,
        /// Restrict to one objective mode.
        #[arg(long, value_enum)]
        mode: Option<Mode>,
    },
    /// Print the maze generated from `--seed`.
    RenderMaze {
        #[arg(long, default_value_t = 8)]
        n: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
enum Mode {
    F0Only,
    F1Only,
    Joint,
}

impl From<Mode> for ObjectiveMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::F0Only => ObjectiveMode::F0Only,
            Mode::F1Only => ObjectiveMode::F1Only,
            Mode::Joint => ObjectiveMode::Joint,
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig {
            format_version: CONFIG_VERSION,
            ..ExperimentConfig::default()
        },
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    if cli.parallelism.is_some() {
        cfg.parallelism = cli.parallelism;
    }
    if cli.out.is_some() {
        cfg.out = cli.out.clone();
    }
    Ok(cfg)
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .unwrap_or_else(|| PathBuf::from("faery-out"))
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli)?;
    let out = out_dir(&cfg);
    match cli.command {
        Command::GenerateDataset { n, train, test } => {
            let base = cfg.maze.clone().unwrap_or_default();
            let (n, train, test) = (
                n.unwrap_or(base.n),
                train.unwrap_or(base.train_count),
                test.unwrap_or(base.test_count),
            );
            let s = orchestrator::generate_dataset_files(n, train, test, cfg.seed()?, &out)?;
            println!(
                "train pool: {} mazes -> {}",
                s.train,
                s.train_path.display()
            );
            println!("test pool: {} mazes -> {}", s.test, s.test_path.display());
            println!(
                "distinct mazes: {} of {} (no duplicates across pools)",
                s.distinct,
                s.train + s.test
            );
        }
        Command::Train => {
            let t = orchestrator::train(&cfg, &out)?;
            if t.resumed_from > 0 {
                println!("resumed at meta-generation {}", t.resumed_from);
            }
            print_final("train", t.summary.final_train.as_ref());
            print_final("test", t.summary.final_test.as_ref());
            println!(
                "checkpoint: {}",
                out.join(orchestrator::CHECKPOINT_FILE).display()
            );
        }
        Command::Eval {
            checkpoint,
            scratch,
            m,
        } => {
            let s = orchestrator::eval(&cfg, checkpoint.as_deref(), scratch, m, &out)?;
            print_final(if scratch { "scratch" } else { "prior" }, Some(&s.result));
        }
        Command::Ablate { runs, mode } => {
            cfg.kind = ExperimentKind::GridAblation;
            let modes: Vec<ObjectiveMode> = match mode {
                Some(m) => vec![m.into()],
                None => ObjectiveMode::ALL.to_vec(),
            };
            let (_, summary) = orchestrator::ablate(&cfg, runs, &modes, &out)?;
            for m in &summary.modes {
                println!(
                    "{}: {} runs, zone coverage Z0 {:.2} Z1 {:.2} Z2 {:.2}, all zones in {} runs",
                    m.mode.name(),
                    m.runs,
                    m.coverage[0],
                    m.coverage[1],
                    m.coverage[2],
                    m.all_zones
                );
            }
        }
        Command::RenderMaze { n } => {
            if n == 0 {
                return Err(config_error("n", "must be positive"));
            }
            print!("{}", orchestrator::render_maze(n, cfg.seed()?)?);
        }
    }
    Ok(())
}

fn config_error(field: &str, reason: &str) -> Error {
    Error::InvalidConfig {
        field: field.into(),
        reason: reason.into(),
    }
}

fn print_final(label: &str, s: Option<&faery_core::meta::SolveSummary>) {
    match s {
        Some(s) => println!(
            "{label}: solved {}/{} (ratio {:.3}), mean generations over solved {}",
            s.solved,
            s.tasks,
            s.solved_ratio,
            s.mean_generations_over_solved
                .map_or("n/a".to_string(), |g| format!("{g:.2}"))
        ),
        None => println!("{label}: no rows"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
