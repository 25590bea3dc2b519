//! `revdict` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data or format
//! error, 3 runtime failure.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use revdict_core::dataset::Split;
use revdict_core::model::{InputMode, TargetMode};
use revdict_core::selection::Similarity;
use revdict_core::train::OptimizerKind;

/// Invalid invocation or configuration (exit code 1).
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(
    name = "revdict",
    version,
    about = "Reverse dictionary over multi-sense word embeddings"
)]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Default)]
pub struct EmbeddingArgs {
    /// Single-sense embeddings (word2vec text format).
    #[arg(long)]
    pub single: Option<PathBuf>,
    /// Multi-sense embeddings (`word<TAB>sense<TAB>values`).
    #[arg(long)]
    pub multi: Option<PathBuf>,
    /// Senses kept per word; extra senses are dropped.
    #[arg(long)]
    pub max_senses: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct EncoderArgs {
    /// single-sense, first-multi-sense, random-multi-sense or attention.
    #[arg(long)]
    pub input_mode: Option<InputMode>,
    /// single-sense or multi-sense.
    #[arg(long)]
    pub target_mode: Option<TargetMode>,
    /// Attention similarity: dot or cosine.
    #[arg(long)]
    pub similarity: Option<Similarity>,
    #[arg(long)]
    pub hidden_dim: Option<usize>,
    #[arg(long)]
    pub max_tokens: Option<usize>,
}

#[derive(Debug, Args, Default)]
pub struct TrainArgs {
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<OptimizerKind>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    /// Root seed for initialization, shuffling and sampling.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build train/dev/test splits from a gloss file.
    BuildDataset {
        /// Tab-separated `lemma synset pos sense gloss` rows.
        #[arg(long)]
        glosses: Option<PathBuf>,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic embeddings plus a gloss file, or the polysemy benchmark.
    GenFixtures {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        words: usize,
        #[arg(long, default_value_t = 16)]
        dim: usize,
        /// Upper bound on senses per synthetic word.
        #[arg(long, default_value_t = 4)]
        senses: usize,
        #[arg(long, default_value_t = 1000)]
        synsets: usize,
        /// Write the two-sense polysemy benchmark (embeddings and splits).
        #[arg(long)]
        polysemy: bool,
    },
    /// Train an encoder; prints one row per epoch.
    Train {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[command(flatten)]
        encoder: EncoderArgs,
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint to write.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-epoch records as JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Report MR, Acc@10, Acc@100 and MRR on a split.
    Evaluate {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Rank against single- or multi-sense vectors; defaults to the
        /// checkpoint's target mode.
        #[arg(long)]
        index: Option<TargetMode>,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        /// Print a JSON record instead of a table.
        #[arg(long)]
        json: bool,
    },
    /// Rank words for a definition, locally or through a running server.
    Query {
        /// The definition; several arguments are joined with spaces.
        #[arg(required = true)]
        definition: Vec<String>,
        #[arg(long, conflicts_with = "server")]
        checkpoint: Option<PathBuf>,
        /// Base URL of a running `revdict serve`.
        #[arg(long)]
        server: Option<String>,
        #[arg(long, default_value_t = 10)]
        top_k: usize,
        /// Show per-token attention weights.
        #[arg(long)]
        trace: bool,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long)]
        json: bool,
    },
    /// Probability each strategy assigns to annotated true senses.
    Study {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Split the label instance ids refer to.
        #[arg(long, default_value = "train")]
        split: Split,
        /// `instance_id<TAB>token_position<TAB>label` rows.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
        #[arg(long)]
        json: bool,
    },
    /// Serve the HTTP API (and optionally a static UI bundle).
    Serve {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Address to bind, e.g. 127.0.0.1:8080.
        #[arg(long)]
        bind: Option<String>,
        /// Directory served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[command(flatten)]
        embeddings: EmbeddingArgs,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use revdict_core::Error as E;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::Config(_) => 1,
                E::Io { .. }
                | E::Format { .. }
                | E::Data(_)
                | E::Checkpoint { .. }
                | E::Eval(_)
                | E::Study(_) => 2,
            };
        }
    }
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<revdict_client::ClientError>() {
            return match e.status() {
                Some(s) if s.is_client_error() => 1,
                _ => 3,
            };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();

    let result = config::RunConfig::load_optional(cli.config.as_deref())
        .and_then(|cfg| run(cli.command, cfg));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(command: Command, cfg: config::RunConfig) -> anyhow::Result<()> {
    use commands as c;
    match command {
        Command::BuildDataset {
            glosses,
            embeddings,
            seed,
            out,
        } => c::build_dataset(cfg, glosses, embeddings, seed, out),
        Command::GenFixtures {
            out,
            seed,
            words,
            dim,
            senses,
            synsets,
            polysemy,
        } => c::gen_fixtures(&out, seed, words, dim, senses, synsets, polysemy),
        Command::Train {
            dataset,
            embeddings,
            encoder,
            train,
            out,
            log,
        } => c::train(cfg, dataset, embeddings, encoder, train, out, log),
        Command::Evaluate {
            checkpoint,
            dataset,
            split,
            index,
            embeddings,
            json,
        } => c::evaluate(cfg, checkpoint, dataset, split, index, embeddings, json),
        Command::Query {
            definition,
            checkpoint,
            server,
            top_k,
            trace,
            embeddings,
            json,
        } => c::query(
            cfg,
            definition.join(" "),
            checkpoint,
            server,
            top_k,
            trace,
            embeddings,
            json,
        ),
        Command::Study {
            checkpoint,
            dataset,
            split,
            labels,
            embeddings,
            json,
        } => c::study(cfg, checkpoint, dataset, split, labels, embeddings, json),
        Command::Serve {
            checkpoint,
            bind,
            static_dir,
            embeddings,
        } => c::serve(cfg, checkpoint, bind, static_dir, embeddings),
    }
}
