//! culturekit command line: mine norms, score alignment, benchmark
//! dimensions, synthesize fine-tuning data, and compare runs.
//!
//! Options resolve in three layers: built-in defaults, then an optional
//! TOML config file, then command-line flags. Flags always win. Exit codes
//! map failure classes: 2 configuration, 3 input validation, 4 transport,
//! 5 unparseable model output, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use culturekit::corpus::{load_cdeval, load_corpus};
use culturekit::distiller::DistillVariant;
use culturekit::evaluator::EvalMode;
use culturekit::miner::MiningMethod;
use culturekit::pipeline::{
    self, gateway_from_env, ConfigError, RunConfig,
};
use culturekit::{Error, ErrorCategory};

#[derive(Parser)]
#[command(name = "culturekit", version, about = "Survey-driven cultural norm mining, alignment scoring, and dataset synthesis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine cultural norm sets for (country, topic) pairs.
    Mine(CommonArgs),
    /// Score answers against country majorities and write a report.
    Eval(CommonArgs),
    /// Score tendency agreement on the six-dimension benchmark.
    Cdeval(CommonArgs),
    /// Synthesize SFT and preference datasets by rejection sampling.
    Distill(CommonArgs),
    /// Summarize and compare finished run directories.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
struct CommonArgs {
    /// TOML config file; flags given here override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus document (survey corpus, or benchmark corpus for cdeval).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Comma-separated country names; default is every corpus country.
    #[arg(long, value_delimiter = ',')]
    countries: Vec<String>,
    /// Comma-separated topic names (mining only); default is every topic.
    #[arg(long, value_delimiter = ',')]
    topics: Vec<String>,
    /// Evaluation mode: standard, icl, or norms.
    #[arg(long)]
    mode: Option<String>,
    /// Mining method: t, tq-ta, or tq-ra.
    #[arg(long)]
    method: Option<String>,
    /// Distillation variant: cot or cnca.
    #[arg(long)]
    variant: Option<String>,
    /// Low-level norms mined per topic and injected per prompt.
    #[arg(long)]
    num_norms: Option<usize>,
    /// Scoring repetitions per country.
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    max_tokens: Option<u32>,
    /// Maximum in-flight chat requests.
    #[arg(long)]
    parallelism: Option<usize>,
    /// Train questions kept per topic (the split parameter).
    #[arg(long)]
    train_per_topic: Option<usize>,
    /// Rejection-sampling rounds per question.
    #[arg(long)]
    rounds: Option<u32>,
    /// Completions requested per round.
    #[arg(long)]
    per_round: Option<u32>,
    /// Base sampling seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run directory for artifacts.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory of mined norm sets (defaults to <out>/norms).
    #[arg(long)]
    norms_dir: Option<PathBuf>,
    /// Answer from a recorded response store instead of a live backend.
    #[arg(long)]
    replay: Option<PathBuf>,
    /// Record live responses into a response store.
    #[arg(long)]
    record: Option<PathBuf>,
    /// Emit every correct x incorrect preference combination.
    #[arg(long)]
    dpo_cross_product: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Finished run directories to summarize (two enable the paired test).
    #[arg(required = true)]
    runs: Vec<PathBuf>,
    /// Also write the summary JSON to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Config-file counterpart of the command-line flags.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    corpus: Option<PathBuf>,
    countries: Option<Vec<String>>,
    topics: Option<Vec<String>>,
    mode: Option<String>,
    method: Option<String>,
    variant: Option<String>,
    num_norms: Option<usize>,
    trials: Option<u32>,
    temperature: Option<f64>,
    max_tokens: Option<u32>,
    parallelism: Option<usize>,
    train_per_topic: Option<usize>,
    rounds: Option<u32>,
    per_round: Option<u32>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    norms_dir: Option<PathBuf>,
    replay: Option<PathBuf>,
    record: Option<PathBuf>,
    dpo_cross_product: Option<bool>,
}

struct Resolved {
    corpus: PathBuf,
    run: RunConfig,
    replay: Option<PathBuf>,
    record: Option<PathBuf>,
}

fn bad(field: &'static str, message: impl Into<String>) -> Error {
    ConfigError::BadValue {
        field,
        message: message.into(),
    }
    .into()
}

fn resolve(args: &CommonArgs) -> Result<Resolved, Error> {
    let file: FileConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str(&text).map_err(|e| bad("config", e.to_string()))?
        }
        None => FileConfig::default(),
    };

    let defaults = RunConfig::default();
    let mode = match args.mode.as_deref().or(file.mode.as_deref()) {
        Some(s) => EvalMode::from_str(s).map_err(|e| bad("mode", e))?,
        None => defaults.mode,
    };
    let method = match args.method.as_deref().or(file.method.as_deref()) {
        Some(s) => MiningMethod::from_str(s).map_err(|e| bad("method", e))?,
        None => defaults.method,
    };
    let variant = match args.variant.as_deref().or(file.variant.as_deref()) {
        Some(s) => DistillVariant::from_str(s).map_err(|e| bad("variant", e))?,
        None => defaults.variant,
    };
    let countries = if args.countries.is_empty() {
        file.countries.unwrap_or_default()
    } else {
        args.countries.clone()
    };
    let topics = if args.topics.is_empty() {
        file.topics.unwrap_or_default()
    } else {
        args.topics.clone()
    };

    let run = RunConfig {
        countries,
        topics,
        mode,
        method,
        variant,
        num_norms: args.num_norms.or(file.num_norms).unwrap_or(defaults.num_norms),
        trials: args.trials.or(file.trials).unwrap_or(defaults.trials),
        temperature: args
            .temperature
            .or(file.temperature)
            .unwrap_or(defaults.temperature),
        max_tokens: args.max_tokens.or(file.max_tokens).unwrap_or(defaults.max_tokens),
        parallelism: args
            .parallelism
            .or(file.parallelism)
            .unwrap_or(defaults.parallelism),
        train_per_topic: args
            .train_per_topic
            .or(file.train_per_topic)
            .unwrap_or(defaults.train_per_topic),
        rounds: args.rounds.or(file.rounds).unwrap_or(defaults.rounds),
        per_round: args.per_round.or(file.per_round).unwrap_or(defaults.per_round),
        seed: args.seed.or(file.seed).unwrap_or(defaults.seed),
        out_dir: args.out.clone().or(file.out).unwrap_or(defaults.out_dir),
        norms_dir: args.norms_dir.clone().or(file.norms_dir),
        fixed_timestamp: None,
        dpo_cross_product: args.dpo_cross_product || file.dpo_cross_product.unwrap_or(false),
    };

    let corpus = args
        .corpus
        .clone()
        .or(file.corpus)
        .ok_or_else(|| bad("corpus", "a corpus file is required (--corpus or config file)"))?;

    Ok(Resolved {
        corpus,
        run,
        replay: args.replay.clone().or(file.replay),
        record: args.record.clone().or(file.record),
    })
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Mine(args) => {
            let r = resolve(&args)?;
            r.run.validate()?;
            let gateway = gateway_from_env(r.record.as_deref(), r.replay.as_deref(), r.run.parallelism)?;
            let corpus = load_corpus(&r.corpus)?;
            let out = pipeline::run_mine(&gateway, &corpus, &r.run)?;
            println!(
                "mined {} norm sets into {}",
                out.norm_paths.len(),
                r.run.norms_dir().display()
            );
        }
        Command::Eval(args) => {
            let r = resolve(&args)?;
            r.run.validate()?;
            let gateway = gateway_from_env(r.record.as_deref(), r.replay.as_deref(), r.run.parallelism)?;
            let corpus = load_corpus(&r.corpus)?;
            let out = pipeline::run_eval(&gateway, &corpus, &r.run)?;
            println!(
                "mode {} overall alignment {:.3} invalid rate {:.4}",
                out.report.mode, out.report.overall_mean, out.report.invalid_rate
            );
            println!("report: {}", out.report_path.display());
        }
        Command::Cdeval(args) => {
            let r = resolve(&args)?;
            r.run.validate()?;
            let gateway = gateway_from_env(r.record.as_deref(), r.replay.as_deref(), r.run.parallelism)?;
            let corpus = load_cdeval(&r.corpus)?;
            let out = pipeline::run_cdeval(&gateway, &corpus, &r.run)?;
            for (dimension, score) in &out.report.dimension_scores {
                println!("{dimension}: {score:.4}");
            }
            println!("overall {:.4}", out.report.overall);
            println!("report: {}", out.report_path.display());
        }
        Command::Distill(args) => {
            let r = resolve(&args)?;
            r.run.validate()?;
            let gateway = gateway_from_env(r.record.as_deref(), r.replay.as_deref(), r.run.parallelism)?;
            let corpus = load_corpus(&r.corpus)?;
            let out = pipeline::run_distill(&gateway, &corpus, &r.run)?;
            println!(
                "sft: {} records ({} fallbacks) at {}",
                out.sft_records,
                out.sft_fallbacks,
                out.sft_path.display()
            );
            println!(
                "dpo: {} pairs ({} questions skipped) at {}",
                out.dpo_pairs,
                out.dpo_skipped,
                out.dpo_path.display()
            );
        }
        Command::Report(args) => {
            let summary = pipeline::summarize_runs(&args.runs)?;
            let body = serde_json::to_string_pretty(&summary)
                .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
            if let Some(path) = &args.out {
                std::fs::write(path, body.clone() + "\n")?;
            }
            println!("{body}");
        }
    }
    Ok(())
}

fn exit_code(category: ErrorCategory) -> u8 {
    match category {
        ErrorCategory::Config => 2,
        ErrorCategory::Validation => 3,
        ErrorCategory::Transport => 4,
        ErrorCategory::Parse => 5,
        ErrorCategory::Other => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(e.category()))
        }
    }
}
