//! `vidclaim`: ground temporal claims in stored video embeddings, correct
//! answers against them, and run the evaluation tasks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{EvalArgs, EvalSource};
use config::{FileConfig, FlagOverrides, RunConfig};
use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "vidclaim", version, about)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// Embedding store root (one directory per video).
    #[arg(long, global = true)]
    store: Option<PathBuf>,
    /// TOML file with defaults for any of these flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Never contact a service; use the rule fallbacks.
    #[arg(long, global = true)]
    offline: bool,
    /// Worker threads for batch runs (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mean-shift strength for the clip term, in [0, 1].
    #[arg(long, global = true)]
    lambda: Option<f64>,
    /// Cosine backends, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    backends: Option<Vec<String>>,
    /// Drop the mean-shifted clip term.
    #[arg(long, global = true)]
    no_dn: bool,
    /// Base URL of the text transform service.
    #[arg(long, global = true)]
    transform_endpoint: Option<String>,
    /// Base URL of the text embedding service.
    #[arg(long, global = true)]
    embed_endpoint: Option<String>,
    /// Output directory for JSONL records and summaries.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Precomputed text embedding file (repeatable).
    #[arg(long = "embeddings", global = true)]
    embeddings: Vec<PathBuf>,
    /// Recorded transform responses to replay instead of a live service.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Ground a query in one video and print the timestamped claim.
    Ground {
        #[arg(long)]
        video: String,
        #[arg(long)]
        query: String,
        /// Skip grounding when the query has no temporal cue.
        #[arg(long)]
        require_activation: bool,
    },
    /// Rewrite a model response so its times agree with the grounded claim.
    Correct {
        #[arg(long)]
        video: String,
        #[arg(long)]
        query: String,
        #[arg(long)]
        response_file: PathBuf,
    },
    /// Score a task from responses, the pipeline, or random guessing.
    Eval {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        task: u8,
        /// Charades-STA style annotation file.
        #[arg(long)]
        annotations: PathBuf,
        /// JSONL of {"id", "response"} objects.
        #[arg(long, conflicts_with_all = ["pipeline", "random_baseline"])]
        responses: Option<PathBuf>,
        #[arg(long, conflicts_with = "random_baseline")]
        pipeline: bool,
        #[arg(long)]
        random_baseline: bool,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 2)]
        max_per_video: usize,
        /// Method name in the printed table.
        #[arg(long)]
        label: Option<String>,
    },
    /// Print task questions as JSONL.
    Questions {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        task: u8,
        #[arg(long)]
        annotations: PathBuf,
        #[arg(long, default_value_t = 2)]
        max_per_video: usize,
    },
    /// Check every video directory under the store.
    ValidateStore,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let g = cli.global;
    let file = match &g.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let flags = FlagOverrides {
        store: g.store,
        backends: g.backends,
        lambda: g.lambda,
        no_dn: g.no_dn,
        transform_endpoint: g.transform_endpoint,
        embed_endpoint: g.embed_endpoint,
        offline: g.offline,
        seed: g.seed,
        out: g.out,
        jobs: g.jobs,
        embeddings: g.embeddings,
        transcript: g.transcript,
    };
    let cfg = RunConfig::resolve(flags, file)?;
    match cli.command {
        Command::Ground {
            video,
            query,
            require_activation,
        } => commands::ground(&cfg, &video, &query, require_activation),
        Command::Correct {
            video,
            query,
            response_file,
        } => commands::correct(&cfg, &video, &query, &response_file),
        Command::Eval {
            task,
            annotations,
            responses,
            pipeline,
            random_baseline,
            trials,
            max_per_video,
            label,
        } => {
            let source = match (&responses, pipeline, random_baseline) {
                (Some(_), ..) => EvalSource::Responses,
                (None, true, _) => EvalSource::Pipeline,
                (None, _, true) => EvalSource::RandomBaseline,
                _ => {
                    return Err(CliError::Input(
                        "choose one of --responses, --pipeline, --random-baseline".into(),
                    ))
                }
            };
            commands::eval(
                &cfg,
                &EvalArgs {
                    task,
                    annotations,
                    source,
                    responses,
                    trials,
                    max_per_video,
                    label,
                },
            )
        }
        Command::Questions {
            task,
            annotations,
            max_per_video,
        } => commands::questions(&cfg, task, &annotations, max_per_video),
        Command::ValidateStore => commands::validate(cfg.store()?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vidclaim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
