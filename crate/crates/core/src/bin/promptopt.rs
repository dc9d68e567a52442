use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use tracing_subscriber::EnvFilter;

use promptopt::metaprompt::TemplateRegistry;
use promptopt::runner::{self, RunConfigFile, RunOptions, RunOutcome, RunSummary};
use promptopt::schedule::{EditBudgetSchedule, ScheduleKind};

#[derive(Parser)]
#[command(name = "promptopt", version, about = "Optimize task prompts with an LLM as the optimizer")]
struct Cli {
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Start a run from a config file.
    Run {
        config: PathBuf,
        /// Replace an existing run in the output directory.
        #[arg(long)]
        fresh: bool,
        /// Pause after this many optimization steps.
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Continue a paused or interrupted run.
    Resume {
        dir: PathBuf,
        #[arg(long)]
        max_steps: Option<u64>,
    },
    /// Tabulate test scores of finished runs (run directories or configs).
    Compare {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Print the built-in meta-prompt templates, or write them to a directory.
    Templates {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print an edit-budget curve.
    Schedule {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        c_max: u32,
        /// Number of optimization steps.
        #[arg(long)]
        steps: u32,
        #[arg(long)]
        warmup: bool,
        #[arg(long, default_value_t = 0.2)]
        floor: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    None,
    Fixed,
    LinearDecay,
    CosineDecay,
}

impl From<Kind> for ScheduleKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::None => ScheduleKind::None,
            Kind::Fixed => ScheduleKind::Fixed,
            Kind::LinearDecay => ScheduleKind::LinearDecay,
            Kind::CosineDecay => ScheduleKind::CosineDecay,
        }
    }
}

fn print_summary(s: &RunSummary) {
    let test = s.test_score.map_or_else(|| "-".into(), |t| format!("{:.2}", t.value));
    println!("method: {}  task: {}  steps: {}", s.method, s.task, s.steps);
    println!("best prompt (step {}): {}", s.best_step, s.best_prompt);
    println!("validation: {:.2}  test: {test}", s.best_validation_score.value);
    println!("tokens: {}  dollars: {:.6}", s.total_tokens, s.total_dollars);
}

fn report(outcome: &RunOutcome) {
    match outcome {
        RunOutcome::Stopped(s) => {
            print_summary(s);
            println!("stop reason: {}", s.stop_reason.map_or("-", |r| r.as_str()));
        }
        RunOutcome::Paused(s) => {
            print_summary(s);
            println!("paused after step {}; continue with `promptopt resume`", s.steps);
        }
        RunOutcome::AlreadyConverged(s) => {
            println!("already converged");
            print_summary(s);
        }
    }
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, fresh, max_steps } => {
            let cfg = RunConfigFile::load(&config).with_context(|| format!("loading {}", config.display()))?;
            let outcome = runner::run(cfg, RunOptions { fresh, max_steps })?;
            report(&outcome);
        }
        Command::Resume { dir, max_steps } => {
            let outcome = runner::resume(&dir, RunOptions { fresh: false, max_steps })?;
            report(&outcome);
        }
        Command::Compare { runs, format } => {
            let paths: Vec<&std::path::Path> = runs.iter().map(PathBuf::as_path).collect();
            let table = runner::compare_runs(&paths)?;
            match format {
                Format::Text => print!("{}", table.render_text()),
                Format::Csv => print!("{}", table.render_csv()?),
            }
        }
        Command::Templates { out } => {
            let registry = TemplateRegistry::builtin();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    for t in registry.iter() {
                        std::fs::write(dir.join(format!("{}.txt", t.id)), format!("{}\n", t.body))?;
                    }
                }
                None => {
                    for t in registry.iter() {
                        println!("== {} ==\n{}\n", t.id, t.body);
                    }
                }
            }
        }
        Command::Schedule { kind, c_max, steps, warmup, floor } => {
            let schedule = EditBudgetSchedule::new(kind.into(), c_max, steps)?
                .with_warmup(warmup)
                .with_floor_fraction(floor);
            schedule.validate()?;
            for (t, c) in schedule.curve()?.into_iter().enumerate() {
                println!("{t}\t{}", c.map_or_else(|| "-".into(), |c| c.to_string()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new(default)))
        .with_writer(std::io::stderr)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
