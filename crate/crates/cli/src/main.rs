use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use headcheck::commands;
use headcheck::{exit_code, Overrides, RunConfig, EXIT_USAGE};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "headcheck", version, about = "Real versus generated headline detection pipeline")]
struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Replaces every seed in the config (evaluation seeds become N, N+1, N+2).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output root.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Real-headline corpus CSV.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    /// Classifier to train and evaluate; repeat for several.
    #[arg(long = "spec", global = true)]
    specs: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train per-era generators and sample generated headlines.
    Generate,
    /// Assemble the train/dev/test dataset (generates first if needed).
    Build,
    /// Word and part-of-speech profiles of real versus generated headlines.
    Analyze,
    /// Train each selected detector over the evaluation seeds and score it on the test split.
    TrainEval,
    /// Administer the human judgment survey.
    Survey {
        #[command(subcommand)]
        action: SurveyAction,
    },
    /// Gather the outputs of the other commands into one markdown report.
    Report,
}

#[derive(Subcommand)]
enum SurveyAction {
    Create,
    Serve,
    Aggregate,
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply(&Overrides { seed: cli.seed, out: cli.out.clone(), corpus: cli.corpus.clone(), specs: cli.specs.clone() });
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli)?;
    match cli.command {
        Command::Generate => {
            for s in commands::cmd_generate(&cfg)? {
                println!("{}: {} generated headlines ({} short)", s.era, s.produced, s.shortfall);
            }
        }
        Command::Build => {
            let bundle = commands::cmd_build(&cfg)?;
            println!(
                "train {} / dev {} / test {}  sha256 {}",
                bundle.train.len(),
                bundle.dev.len(),
                bundle.test.len(),
                bundle.content_hash()
            );
        }
        Command::Analyze => print!("{}", commands::cmd_analyze(&cfg)?.render_table()),
        Command::TrainEval => {
            let summary = commands::cmd_train_eval(&cfg)?;
            print!("{}", headcheck_core::evaluation::render_results_table(&summary.rows));
        }
        Command::Survey { action: SurveyAction::Create } => {
            println!("survey written to {}", commands::cmd_survey_create(&cfg)?.display());
        }
        Command::Survey { action: SurveyAction::Serve } => commands::cmd_survey_serve(&cfg)?,
        Command::Survey { action: SurveyAction::Aggregate } => {
            let a = commands::cmd_survey_aggregate(&cfg)?;
            println!(
                "{} participants, {} answers: overall {:.1}%, generated {:.1}%, real {:.1}%",
                a.participants,
                a.total_answers,
                a.overall.fraction * 100.0,
                a.on_generated.fraction * 100.0,
                a.on_real.fraction * 100.0
            );
        }
        Command::Report => println!("{}", commands::cmd_report(&cfg)?.display()),
    }
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
