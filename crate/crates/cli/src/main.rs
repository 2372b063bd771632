use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use erd_cli::pipeline::stats_table;
use erd_cli::{CliError, Pipeline, PipelineConfig};
use erd_core::corpus::{Split, SyntheticSpec};
use erd_core::TimeMode;
use erd_server::Scoring;

#[derive(Parser)]
#[command(name = "erd", version, about = "Temporal early risk detection: train, serve, evaluate")]
struct Cli {
    /// TOML pipeline configuration; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for generation, splitting and training.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Run directory holding every artifact and the manifest.
    #[arg(long, global = true, default_value = "run")]
    run_dir: PathBuf,
    /// More logging; repeat for debug output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus and its train/test split.
    Generate {
        /// TOML file with a synthetic corpus spec replacing the config's.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train with the delay schedule and keep the best epoch.
    Train {
        #[arg(long)]
        mode: Option<TimeMode>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Score a checkpoint on a corpus with the offline checkpoint schedule.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Name used in report files; the training mode by default.
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        mode: Option<TimeMode>,
    },
    /// Run the mock-server over the corpus directory.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        corpus_dir: Option<PathBuf>,
    },
    /// Replay the test split against a running mock-server.
    Client {
        /// Base URL of the server.
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        model: Option<String>,
        #[arg(long)]
        mode: Option<TimeMode>,
        /// Corpus name on the server; the generated test split by default.
        #[arg(long)]
        corpus: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long = "min-delay", alias = "minDelay")]
        min_delay: Option<usize>,
        /// Score every round, or only at checkpoints like offline validation.
        #[arg(long, value_parser = ["per_round", "checkpoint"])]
        scoring: Option<String>,
    },
    /// Timelines, offline-versus-server comparison and probe curves.
    Report {
        /// Sentence for the time-sensitivity probe.
        #[arg(long)]
        sentence: Option<String>,
    },
}

/// Stdout that tolerates a closed pipe.
fn emit(text: &str) {
    let _ = std::io::stdout().write_all(text.as_bytes());
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    Ok(match cli.seed {
        Some(s) => cfg.with_seed(s),
        None => cfg,
    })
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = load_config(&cli)?;
    match cli.command {
        Command::Generate { spec } => {
            if let Some(p) = spec {
                let text = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
                cfg.synthetic = SyntheticSpec::from_toml_str(&text)?;
                if let Some(s) = cli.seed {
                    cfg.synthetic.seed = s;
                }
            }
            let out = Pipeline::new(cfg, &cli.run_dir)?.generate()?;
            emit(&stats_table(&out.stats));
        }
        Command::Train { mode, epochs } => {
            if let Some(m) = mode {
                cfg.train.mode = m;
            }
            if let Some(e) = epochs {
                cfg.train.epochs = e;
            }
            let out = Pipeline::new(cfg, &cli.run_dir)?.train()?;
            emit(&format!("best epoch {} -> {}\n", out.best_epoch, out.best_checkpoint.display()));
        }
        Command::Evaluate { checkpoint, corpus, model, mode } => {
            let mode = mode.unwrap_or(cfg.train.mode);
            let p = Pipeline::new(cfg, &cli.run_dir)?;
            let checkpoint = checkpoint.unwrap_or_else(|| p.best_checkpoint(mode));
            let corpus = corpus.unwrap_or_else(|| p.corpus_file(Split::Test));
            let model = model.unwrap_or_else(|| mode.to_string());
            let out = p.evaluate(&checkpoint, &corpus, &model)?;
            emit(&(out.record.report.to_json_pretty() + "\n"));
        }
        Command::Serve { port, corpus_dir } => {
            if let Some(port) = port {
                cfg.server.port = port;
            }
            if corpus_dir.is_some() {
                cfg.server.corpus_dir = corpus_dir;
            }
            Pipeline::new(cfg, &cli.run_dir)?.serve()?;
        }
        Command::Client { endpoint, checkpoint, model, mode, corpus, threshold, min_delay, scoring } => {
            if let Some(t) = threshold {
                cfg.policy.threshold = t;
            }
            if let Some(d) = min_delay {
                cfg.policy.min_delay = d;
            }
            if let Some(s) = scoring {
                cfg.policy.scoring = if s == "checkpoint" { Scoring::Checkpoint } else { Scoring::PerRound };
            }
            let mode = mode.unwrap_or(cfg.train.mode);
            let endpoint = endpoint.unwrap_or_else(|| format!("http://{}:{}", cfg.server.host, cfg.server.port));
            let p = Pipeline::new(cfg, &cli.run_dir)?;
            let checkpoint = checkpoint.unwrap_or_else(|| p.best_checkpoint(mode));
            let model = model.unwrap_or_else(|| mode.to_string());
            let corpus = corpus.unwrap_or_else(|| p.corpus_name(Split::Test));
            let mut http = erd_server::HttpEndpoint::new(endpoint, erd_server::RetryPolicy::default());
            let out = p.client(&mut http, &checkpoint, &model, &corpus, &p.cfg.policy.clone())?;
            emit(&(out.record.report.to_json_pretty() + "\n"));
        }
        Command::Report { sentence } => {
            if sentence.is_some() {
                cfg.probe.sentence = sentence;
            }
            let out = Pipeline::new(cfg, &cli.run_dir)?.report()?;
            for f in &out.files {
                emit(&format!("{}\n", f.display()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("erd: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
