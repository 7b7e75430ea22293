//! `sage`: a staged pipeline for measuring how consistently a language
//! model answers semantically equivalent questions.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::CommandContext;
use config::{RunConfig, ENDPOINT_ENV};
use sage::analysis::{HumanAggregation, ReportFormat, SweepMode};

#[derive(Parser)]
#[command(
    name = "sage",
    version,
    about = "Measure the consistency of language-model outputs under paraphrase"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// TOML configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base URL of the chat/embeddings endpoint (overrides SAGE_ENDPOINT)
    #[arg(long, global = true)]
    endpoint: Option<String>,
    /// Directory for the response cache and embedding sidecar
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Bound on in-flight provider requests
    #[arg(long, global = true)]
    concurrency: Option<usize>,
    /// Use the deterministic offline stub providers
    #[arg(long, global = true)]
    offline: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate, score, and filter paraphrases for each question
    Paraphrase {
        /// Line-delimited question file ({id, question} per line)
        #[arg(long)]
        questions: PathBuf,
        /// Output paraphrase-set file
        #[arg(long)]
        out: PathBuf,
        /// Paraphrase candidates to request per question
        #[arg(long)]
        k: Option<usize>,
        /// Quality threshold for retention (strictly greater wins)
        #[arg(long)]
        threshold: Option<f64>,
        /// Weight of semantic similarity in the quality score
        #[arg(long)]
        beta: Option<f64>,
    },
    /// Generate answers for every retained paraphrase
    Generate {
        #[arg(long)]
        paraphrases: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Target model ids (comma separated); defaults to [models].targets
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Answer draws per paraphrase
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Infer the rule of thumb behind each question-answer pair
    Rot {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Re-answer questions while following fixed rules of thumb
    RotAnswer {
        #[arg(long)]
        records: PathBuf,
        /// Fixed rules of thumb ({question_id, rot} per line)
        #[arg(long)]
        rots: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
    },
    /// Score records and write report files
    Score {
        #[arg(long)]
        records: PathBuf,
        /// Output directory for rows.jsonl and the tables
        #[arg(long)]
        out_dir: PathBuf,
        /// csv or markdown-table
        #[arg(long, default_value = "csv")]
        format: String,
        /// Metrics to compute (comma separated)
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// answers, rots, or both
        #[arg(long)]
        target: Option<String>,
        /// Restrict scoring to these models
        #[arg(long, value_delimiter = ',')]
        models: Vec<String>,
        /// Embedding sidecar file (defaults to <cache-dir>/embeddings.jsonl)
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Consistency across a temperature grid
    Sweep {
        #[arg(long)]
        questions: PathBuf,
        /// Comma-separated strictly increasing grid, e.g. 0.0,0.1,0.5
        #[arg(long)]
        temps: String,
        /// same-question or paraphrase
        #[arg(long)]
        mode: String,
        /// Model to sweep
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Repeated draws per question (same-question mode)
        #[arg(long)]
        draws: Option<usize>,
        /// Paraphrases per question (paraphrase mode)
        #[arg(long)]
        k: Option<usize>,
    },
    /// Correlate per-question scores with human annotations
    Correlate {
        /// rows.jsonl written by `score`
        #[arg(long)]
        rows: PathBuf,
        #[arg(long)]
        annotations: PathBuf,
        /// entropy or mean
        #[arg(long, default_value = "entropy")]
        aggregation: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Check a records file against every invariant
    Validate {
        #[arg(long)]
        records: PathBuf,
    },
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let config = RunConfig::load(cli.global.config.as_deref())?;
    let endpoint = cli
        .global
        .endpoint
        .or_else(|| std::env::var(ENDPOINT_ENV).ok())
        .or_else(|| config.endpoint.clone());
    let offline = cli.global.offline || config.runtime.offline;
    let cache_dir = cli
        .global
        .cache_dir
        .unwrap_or_else(|| config.runtime.cache_dir.clone());
    let concurrency = cli
        .global
        .concurrency
        .unwrap_or(config.runtime.concurrency)
        .max(1);
    let ctx = CommandContext {
        config,
        offline,
        endpoint,
        cache_dir,
        concurrency,
    };

    match cli.command {
        Command::Paraphrase {
            questions,
            out,
            k,
            threshold,
            beta,
        } => {
            commands::cmd_paraphrase(&ctx, &questions, &out, k, threshold, beta)?;
        }
        Command::Generate {
            paraphrases,
            out,
            models,
            samples,
        } => {
            commands::cmd_generate(&ctx, &paraphrases, &out, &models, samples)?;
        }
        Command::Rot {
            records,
            out,
            models,
        } => {
            commands::cmd_rot(&ctx, &records, &out, &models)?;
        }
        Command::RotAnswer {
            records,
            rots,
            out,
            models,
        } => {
            commands::cmd_rot_answer(&ctx, &records, &rots, &out, &models)?;
        }
        Command::Score {
            records,
            out_dir,
            format,
            metrics,
            target,
            models,
            embeddings,
        } => {
            let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;
            commands::cmd_score(
                &ctx,
                &records,
                &out_dir,
                format,
                &metrics,
                target.as_deref(),
                &models,
                embeddings.as_deref(),
            )?;
        }
        Command::Sweep {
            questions,
            temps,
            mode,
            model,
            out,
            format,
            metrics,
            draws,
            k,
        } => {
            let mode: SweepMode = mode.parse().map_err(anyhow::Error::msg)?;
            let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;
            commands::cmd_sweep(
                &ctx, &questions, &temps, mode, &model, &out, format, &metrics, draws, k,
            )?;
        }
        Command::Correlate {
            rows,
            annotations,
            aggregation,
            out,
            format,
        } => {
            let aggregation: HumanAggregation =
                aggregation.parse().map_err(anyhow::Error::msg)?;
            let format: ReportFormat = format.parse().map_err(anyhow::Error::msg)?;
            commands::cmd_correlate(&rows, &annotations, aggregation, &out, format)?;
        }
        Command::Validate { records } => {
            let invalid = commands::cmd_validate(&records)?;
            if invalid > 0 {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
