use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasetopic::config::PipelineConfig;
use phasetopic::pipeline::{self, Context};
use phasetopic::themes::PercentileMode;
use phasetopic::Error;

/// Topical phases and per-phase topic models for timestamped short texts.
#[derive(Parser, Debug)]
#[command(name = "phasetopic", version, about)]
struct Cli {
    /// Pipeline config file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel LDA chains; results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Sampler seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Model only the first of several documents with identical text.
    #[arg(long, global = true)]
    dedup_text: bool,
    /// Major-topic rule: cumulative75 or distribution25.
    #[arg(long, global = true, value_parser = parse_mode)]
    percentile_mode: Option<PercentileMode>,
    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Smooth daily volume, learn thresholds at the anchor and split into phases.
    Phases,
    /// Fit one topic model per phase, choosing K by perplexity.
    Topics,
    /// Phase statistics plus theme and mention trend tables.
    Report,
    /// Daily counts and a corpus summary.
    Stats,
    /// Generate a synthetic corpus and its ledger from a spec file.
    Synth {
        /// Synthetic corpus spec (TOML).
        spec: PathBuf,
    },
}

fn parse_mode(s: &str) -> Result<PercentileMode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Usage("--config <path> is required for this command".into()))?;
    let mut cfg = PipelineConfig::load(path).map_err(|e| Failure::Usage(e.to_string()))?;
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    if let Some(w) = cli.workers {
        cfg.lda.workers = w;
    }
    if let Some(s) = cli.seed {
        cfg.lda.seed = s;
    }
    if cli.dedup_text {
        cfg.text.dedup_text = true;
    }
    if let Some(m) = cli.percentile_mode {
        cfg.themes.percentile_mode = m;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    if let Command::Synth { spec } = &cli.command {
        let out = cli
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("synth_out"));
        let ledger = pipeline::cmd_synth(spec, &out)?;
        println!(
            "wrote {} documents over {} days to {}",
            ledger.docs.len(),
            ledger.days.len(),
            out.display()
        );
        return Ok(());
    }

    let ctx = Context::new(load_config(cli)?)?;
    match cli.command {
        Command::Phases => {
            let outcome = pipeline::cmd_phases(&ctx)?;
            for r in &outcome.records {
                println!("phase {}: {} .. {}", r.index, r.start, r.end);
            }
        }
        Command::Topics => {
            for r in pipeline::cmd_topics(&ctx)? {
                match (&r.skipped, r.k_star) {
                    (Some(reason), _) => println!("phase {}: skipped ({reason})", r.phase_index),
                    (None, Some(k)) => println!(
                        "phase {}: K* = {k}, {} major topic(s), {} docs",
                        r.phase_index,
                        r.major.len(),
                        r.num_docs
                    ),
                    (None, None) => {}
                }
            }
        }
        Command::Report => {
            for s in pipeline::cmd_report(&ctx)?.phase_stats {
                println!(
                    "phase {}: users/day {:.2}, tweets/day {:.2}, retweets/day {:.2}, depth {:.2}",
                    s.phase, s.users_per_day, s.tweets_per_day, s.retweets_per_day, s.depth
                );
            }
        }
        Command::Stats => {
            let s = pipeline::cmd_stats(&ctx)?;
            println!(
                "{} documents ({} skipped, {} duplicate ids), {} in window",
                s.docs, s.skipped, s.duplicates, s.docs_in_window
            );
        }
        Command::Synth { .. } => unreachable!(),
    }
    println!("config hash {}", ctx.hash);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
