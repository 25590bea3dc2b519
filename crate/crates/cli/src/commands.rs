use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use revdict_core::api::{EmbeddingPaths, Engine, QueryRequest, QueryResponse};
use revdict_core::checkpoint::{Checkpoint, EmbeddingSource};
use revdict_core::dataset::{
    build_dataset as assemble_dataset, load_dataset, load_split, parse_gloss_file, pos_stats,
    write_dataset, Dataset, Manifest, Split, Splits,
};
use revdict_core::embeddings::{generate_fixture, write_fixture, Embeddings};
use revdict_core::model::InputMode;
use revdict_core::ranking::{evaluate as eval_split, EvalReport, TargetIndex};
use revdict_core::study::{load_labels, sense_likelihood, Strategy};
use revdict_core::synth::{polysemy_benchmark, synthetic_glosses, write_glosses, PolysemyConfig};
use revdict_core::train::{train as train_model, EpochLog};

use crate::config::{require, RunConfig};
use crate::{EmbeddingArgs, EncoderArgs, TrainArgs, UsageError};

/// Embedding locations from flags, then the config file. `None` if neither
/// names both files.
fn embedding_paths(cfg: &RunConfig, args: &EmbeddingArgs) -> Option<EmbeddingPaths> {
    Some(EmbeddingPaths {
        single: args.single.clone().or_else(|| cfg.paths.single.clone())?,
        multi: args.multi.clone().or_else(|| cfg.paths.multi.clone())?,
        max_senses: args.max_senses.unwrap_or(cfg.paths.max_senses),
    })
}

fn required_embeddings(
    cfg: &RunConfig,
    args: &EmbeddingArgs,
) -> anyhow::Result<(EmbeddingPaths, Embeddings)> {
    let paths = embedding_paths(cfg, args)
        .ok_or_else(|| UsageError("embeddings required: pass --single and --multi".into()))?;
    let emb = Embeddings::load(&paths.single, &paths.multi, paths.max_senses)?;
    Ok((paths, emb))
}

/// Embeddings for an existing checkpoint: flags/config, else the paths it
/// records.
fn checkpoint_embeddings(
    cfg: &RunConfig,
    args: &EmbeddingArgs,
    ckpt: &Checkpoint,
) -> anyhow::Result<Embeddings> {
    let paths = match (embedding_paths(cfg, args), &ckpt.embeddings) {
        (Some(p), _) => p,
        (None, Some(src)) => EmbeddingPaths {
            single: src.single.clone(),
            multi: src.multi.clone(),
            max_senses: src.max_senses,
        },
        (None, None) => {
            return Err(UsageError(
                "checkpoint does not record embeddings: pass --single and --multi".into(),
            )
            .into())
        }
    };
    Ok(Embeddings::load(
        &paths.single,
        &paths.multi,
        paths.max_senses,
    )?)
}

fn print_manifest(m: &Manifest, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "split\tinstances\tdropped_oov_target\tdropped_truncated_sense"
    )?;
    for (split, n) in [("train", m.train), ("dev", m.dev), ("test", m.test)] {
        let d = m.dropped.get(split).copied().unwrap_or_default();
        writeln!(
            out,
            "{split}\t{n}\t{}\t{}",
            d.target_not_in_vocab, d.sense_truncated
        )?;
    }
    writeln!(
        out,
        "rows read: {}, multi-word lemmas skipped: {}, seed: {}",
        m.rows_read, m.rejected_multiword, m.seed
    )
}

pub fn build_dataset(
    cfg: RunConfig,
    glosses: Option<PathBuf>,
    embeddings: EmbeddingArgs,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> anyhow::Result<()> {
    let glosses = require(glosses.or(cfg.paths.glosses.clone()), "--glosses")?;
    let out = require(out.or(cfg.paths.dataset.clone()), "--out")?;
    let seed = seed.unwrap_or(cfg.train.seed);
    let (_, emb) = required_embeddings(&cfg, &embeddings)?;
    let parsed = parse_gloss_file(&glosses)?;
    let ds = assemble_dataset(parsed, &emb, seed)?;
    write_dataset(&ds, &out)?;
    let mut stdout = std::io::stdout().lock();
    print_manifest(&ds.manifest, &mut stdout)?;
    writeln!(stdout)?;
    write!(stdout, "{}", pos_stats(&ds.splits.train, &emb))?;
    Ok(())
}

pub fn gen_fixtures(
    out: &Path,
    seed: u64,
    words: usize,
    dim: usize,
    senses: usize,
    synsets: usize,
    polysemy: bool,
) -> anyhow::Result<()> {
    if words == 0 || dim == 0 || senses == 0 {
        return Err(UsageError("--words, --dim and --senses must be positive".into()).into());
    }
    if polysemy {
        let bench = polysemy_benchmark(&PolysemyConfig {
            seed,
            dim,
            ..PolysemyConfig::default()
        });
        let (single, multi) = write_fixture(&bench.embeddings, out)?;
        let data = out.join("data");
        let manifest = Manifest {
            seed,
            train: bench.splits.train.len(),
            dev: bench.splits.dev.len(),
            test: bench.splits.test.len(),
            rows_read: bench.splits.iter().count(),
            rejected_multiword: 0,
            dropped: Default::default(),
        };
        write_dataset(
            &Dataset {
                splits: bench.splits,
                manifest,
            },
            &data,
        )?;
        println!(
            "{}\n{}\n{}",
            single.display(),
            multi.display(),
            data.display()
        );
    } else {
        let emb = generate_fixture(seed, words, dim, senses);
        let (single, multi) = write_fixture(&emb, out)?;
        let glosses = out.join("glosses.tsv");
        write_glosses(&synthetic_glosses(seed, &emb, synsets), &glosses)?;
        println!(
            "{}\n{}\n{}",
            single.display(),
            multi.display(),
            glosses.display()
        );
    }
    Ok(())
}

fn target_words(splits: &Splits<revdict_core::dataset::Instance>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    splits
        .iter()
        .filter(|i| seen.insert(i.target.as_str()))
        .map(|i| i.target.clone())
        .collect()
}

pub fn train(
    mut cfg: RunConfig,
    dataset: Option<PathBuf>,
    embeddings: EmbeddingArgs,
    encoder: EncoderArgs,
    train: TrainArgs,
    out: Option<PathBuf>,
    log: Option<PathBuf>,
) -> anyhow::Result<()> {
    let dataset = require(dataset.or(cfg.paths.dataset.clone()), "--dataset")?;
    let out = require(out.or(cfg.paths.checkpoint.clone()), "--out")?;

    let enc = &mut cfg.encoder;
    enc.input_mode = encoder.input_mode.unwrap_or(enc.input_mode);
    enc.target_mode = encoder.target_mode.unwrap_or(enc.target_mode);
    enc.selector.similarity = encoder.similarity.unwrap_or(enc.selector.similarity);
    enc.hidden_dim = encoder.hidden_dim.unwrap_or(enc.hidden_dim);
    enc.max_tokens = encoder.max_tokens.unwrap_or(enc.max_tokens);
    let tc = &mut cfg.train;
    tc.batch_size = train.batch_size.unwrap_or(tc.batch_size);
    tc.optimizer = train.optimizer.unwrap_or(tc.optimizer);
    tc.lr = train.lr.unwrap_or(tc.lr);
    tc.max_epochs = train.max_epochs.unwrap_or(tc.max_epochs);
    tc.patience = train.patience.unwrap_or(tc.patience);
    tc.seed = train.seed.unwrap_or(tc.seed);
    // One root seed drives initialization as well as shuffling.
    cfg.encoder.seed = cfg.train.seed;
    cfg.encoder.validate()?;
    cfg.train.validate()?;

    let (paths, emb) = required_embeddings(&cfg, &embeddings)?;
    let splits = load_dataset(&dataset)?;
    let words = target_words(&splits);
    let index = TargetIndex::build(
        cfg.encoder.target_mode,
        words.iter().map(String::as_str),
        &emb,
    )?;

    let mut log_file = match &log {
        Some(p) => Some(std::io::BufWriter::new(
            std::fs::File::create(p).with_context(|| format!("cannot create {}", p.display()))?,
        )),
        None => None,
    };
    let mut stdout = std::io::stdout().lock();
    writeln!(stdout, "{}", EpochLog::HEADER)?;
    let mut io_err = None;
    let outcome = train_model(
        &splits.train,
        &splits.dev,
        &emb,
        &index,
        &cfg.encoder,
        &cfg.train,
        |row| {
            let mut emit = || -> std::io::Result<()> {
                writeln!(stdout, "{}", row.row())?;
                stdout.flush()?;
                if let Some(f) = log_file.as_mut() {
                    writeln!(
                        f,
                        "{}",
                        serde_json::to_string(row).expect("log row serializes")
                    )?;
                }
                Ok(())
            };
            if let Err(e) = emit() {
                io_err.get_or_insert(e);
            }
        },
    )?;
    if let Some(e) = io_err {
        return Err(e.into());
    }
    if let Some(mut f) = log_file {
        f.flush()?;
    }

    let absolute = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_owned());
    let mut ckpt = Checkpoint::new(&outcome.model, words);
    ckpt.train = Some(cfg.train);
    ckpt.seed = cfg.train.seed;
    ckpt.best_epoch = outcome.best_epoch;
    ckpt.optimizer = Some(outcome.optimizer);
    ckpt.embeddings = Some(EmbeddingSource {
        single: absolute(&paths.single),
        multi: absolute(&paths.multi),
        max_senses: paths.max_senses,
        fingerprint: emb.fingerprint(),
    });
    ckpt.save(&out)?;
    writeln!(
        stdout,
        "best epoch {} of {}; checkpoint {} written to {}",
        outcome.best_epoch,
        outcome.history.len(),
        ckpt.id(),
        out.display()
    )?;
    Ok(())
}

pub fn evaluate(
    cfg: RunConfig,
    checkpoint: Option<PathBuf>,
    dataset: Option<PathBuf>,
    split: Split,
    index: Option<revdict_core::model::TargetMode>,
    embeddings: EmbeddingArgs,
    json: bool,
) -> anyhow::Result<()> {
    let checkpoint = require(checkpoint.or(cfg.paths.checkpoint.clone()), "--checkpoint")?;
    let dataset = require(dataset.or(cfg.paths.dataset.clone()), "--dataset")?;
    let ckpt = Checkpoint::load(&checkpoint)?;
    let emb = checkpoint_embeddings(&cfg, &embeddings, &ckpt)?;
    let kind = index.unwrap_or(ckpt.config.target_mode);
    let index = TargetIndex::build(kind, ckpt.target_words.iter().map(String::as_str), &emb)?;
    let instances = load_split(&dataset, split)?;
    let report = eval_split(&ckpt.model(), &instances, &index, &emb)?;
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        println!("{}", EvalReport::HEADER);
        println!("{}", report.row());
    }
    Ok(())
}

fn print_response(resp: &QueryResponse, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "{:>4}  {:<24} {:>5}  {:>8}",
        "rank", "word", "sense", "score"
    )?;
    for c in &resp.candidates {
        writeln!(
            out,
            "{:>4}  {:<24} {:>5}  {:>8.4}",
            c.rank, c.word, c.sense_index, c.score
        )?;
    }
    if let Some(trace) = &resp.trace {
        writeln!(out)?;
        writeln!(out, "attention (weights per sense, sum):")?;
        for row in trace {
            let weights: Vec<String> = row.weights.iter().map(|w| format!("{w:.3}")).collect();
            let sum: f64 = row.weights.iter().sum();
            writeln!(
                out,
                "  {:<20} [{}] {:.3}",
                row.token,
                weights.join(" "),
                sum
            )?;
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn query(
    cfg: RunConfig,
    definition: String,
    checkpoint: Option<PathBuf>,
    server: Option<String>,
    top_k: usize,
    trace: bool,
    embeddings: EmbeddingArgs,
    json: bool,
) -> anyhow::Result<()> {
    if definition.trim().is_empty() {
        return Err(UsageError("definition is empty".into()).into());
    }
    let req = QueryRequest {
        definition,
        top_k,
        trace,
    };
    let resp = match server {
        Some(url) => {
            let rt = tokio::runtime::Builder::new_current_thread()
                .enable_all()
                .build()?;
            rt.block_on(revdict_client::Client::new(url).query(&req))?
        }
        None => {
            let checkpoint = require(
                checkpoint.or(cfg.paths.checkpoint.clone()),
                "--checkpoint or --server",
            )?;
            let engine = Engine::load(&checkpoint, embedding_paths(&cfg, &embeddings).as_ref())?;
            engine.query(&req).map_err(|e| UsageError(e.0))?
        }
    };
    let mut stdout = std::io::stdout().lock();
    if json {
        writeln!(stdout, "{}", serde_json::to_string(&resp)?)?;
    } else {
        print_response(&resp, &mut stdout)?;
    }
    Ok(())
}

pub fn study(
    cfg: RunConfig,
    checkpoint: Option<PathBuf>,
    dataset: Option<PathBuf>,
    split: Split,
    labels: Option<PathBuf>,
    embeddings: EmbeddingArgs,
    json: bool,
) -> anyhow::Result<()> {
    let dataset = require(dataset.or(cfg.paths.dataset.clone()), "--dataset")?;
    let labels = require(labels.or(cfg.paths.labels.clone()), "--labels")?;
    let checkpoint = checkpoint.or(cfg.paths.checkpoint.clone());
    let ckpt = checkpoint.as_deref().map(Checkpoint::load).transpose()?;
    let emb = match &ckpt {
        Some(c) => checkpoint_embeddings(&cfg, &embeddings, c)?,
        None => required_embeddings(&cfg, &embeddings)?.1,
    };
    let model = ckpt.as_ref().map(Checkpoint::model);
    let strategies: &[Strategy] = match &model {
        Some(m) if m.config.input_mode == InputMode::AttentionMultiSense => &Strategy::ALL,
        _ => &[Strategy::Random, Strategy::First],
    };
    let instances = load_split(&dataset, split)?;
    let labels = load_labels(&labels)?;
    let report = sense_likelihood(&labels, model.as_ref(), &instances, &emb, strategies)?;
    if json {
        println!("{}", serde_json::to_string(&report)?);
    } else {
        println!("{report}");
    }
    Ok(())
}

pub fn serve(
    cfg: RunConfig,
    checkpoint: Option<PathBuf>,
    bind: Option<String>,
    static_dir: Option<PathBuf>,
    embeddings: EmbeddingArgs,
) -> anyhow::Result<()> {
    let checkpoint = require(checkpoint.or(cfg.paths.checkpoint.clone()), "--checkpoint")?;
    let bind = bind.unwrap_or(cfg.service.bind.clone());
    let addr = bind
        .parse()
        .map_err(|e| UsageError(format!("invalid bind address {bind:?}: {e}")))?;
    let serve_cfg = revdict_service::ServeConfig {
        addr,
        checkpoint,
        embeddings: embedding_paths(&cfg, &embeddings),
        static_dir: static_dir.or(cfg.service.static_dir.clone()),
    };
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?;
    rt.block_on(revdict_service::serve(serve_cfg, async {
        let _ = tokio::signal::ctrl_c().await;
    }))?;
    Ok(())
}
