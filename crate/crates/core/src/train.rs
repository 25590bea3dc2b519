//! Mini-batch training with early stopping on dev median rank.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::embeddings::Embeddings;
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::model::{clip, loss_and_grads, EncoderConfig, Model, ModelParams};
use crate::nn::{adam_step, sgd_step, AdamConfig, AdamState, Parameters};
use crate::ranking::{evaluate, EvalReport, TargetIndex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adam" => Ok(OptimizerKind::Adam),
            "sgd" => Ok(OptimizerKind::Sgd),
            other => Err(Error::Config(format!("unknown optimizer {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    pub lr: f64,
    pub max_epochs: usize,
    /// Epochs without dev improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 16,
            optimizer: OptimizerKind::Adam,
            lr: AdamConfig::default().lr,
            max_epochs: 300,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::Config(format!("invalid learning rate {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerState {
    Adam {
        config: AdamConfig,
        state: AdamState<ModelParams>,
    },
    Sgd {
        lr: f64,
    },
}

impl OptimizerState {
    pub fn new(cfg: &TrainConfig, params: &ModelParams) -> Self {
        match cfg.optimizer {
            OptimizerKind::Adam => OptimizerState::Adam {
                config: AdamConfig {
                    lr: cfg.lr,
                    ..AdamConfig::default()
                },
                state: AdamState::new(params),
            },
            OptimizerKind::Sgd => OptimizerState::Sgd { lr: cfg.lr },
        }
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams) {
        match self {
            OptimizerState::Adam { config, state } => adam_step(params, grads, state, config),
            OptimizerState::Sgd { lr } => sgd_step(params, grads, *lr),
        }
    }
}

/// Right-padded token sequences with masks. `indices` point into the
/// instance list the batch was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub tokens: Vec<Vec<String>>,
    pub mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Shuffles deterministically by `(seed, epoch)`, chunks, clips to
/// `max_tokens`, and pads each batch to its longest sequence.
pub fn make_batches(
    instances: &[Instance],
    batch_size: usize,
    seed: u64,
    epoch: usize,
    max_tokens: usize,
) -> Vec<Batch> {
    assert!(batch_size > 0);
    let mut order: Vec<usize> = (0..instances.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64]));
    order.shuffle(&mut rng);
    order
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk
                .iter()
                .map(|&i| clip(&instances[i].tokens, max_tokens).len())
                .max()
                .unwrap_or(0);
            let mut tokens = Vec::with_capacity(chunk.len());
            let mut mask = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let t = clip(&instances[i].tokens, max_tokens);
                let mut padded = t.to_vec();
                padded.resize(width, String::new());
                let mut m = vec![true; t.len()];
                m.resize(width, false);
                tokens.push(padded);
                mask.push(m);
            }
            Batch {
                indices: chunk.to_vec(),
                tokens,
                mask,
            }
        })
        .collect()
}

/// One row of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev: EvalReport,
}

impl EpochLog {
    pub const HEADER: &'static str = "epoch\ttrain_loss\tdev_MR\tdev_Acc@10\tdev_Acc@100\tdev_MRR";

    pub fn row(&self) -> String {
        format!(
            "{}\t{:.6}\t{}\t{:.4}\t{:.4}\t{:.4}",
            self.epoch,
            self.train_loss,
            self.dev.median_rank,
            self.dev.acc_at_10,
            self.dev.acc_at_100,
            self.dev.mrr
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the best dev epoch.
    pub model: Model,
    pub optimizer: OptimizerState,
    pub best_epoch: usize,
    pub history: Vec<EpochLog>,
}

/// Mean loss and mean gradient over one batch. Per-example work runs in
/// parallel; the reduction is sequential in batch order.
pub fn batch_gradient(
    params: &ModelParams,
    cfg: &EncoderConfig,
    batch: &Batch,
    targets: &[&[f64]],
    emb: &Embeddings,
    rng_seed: u64,
) -> (f64, ModelParams) {
    let per_example: Vec<(f64, ModelParams)> = (0..batch.len())
        .into_par_iter()
        .map(|b| {
            let idx = batch.indices[b];
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rng_seed, &[idx as u64]));
            let (loss, g) = loss_and_grads(
                params,
                cfg,
                &batch.tokens[b],
                &batch.mask[b],
                targets[idx],
                emb,
                &mut rng,
            );
            (loss, g.params)
        })
        .collect();
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &per_example {
        loss += l;
        total.add_scaled(1.0, g);
    }
    let n = batch.len() as f64;
    total.scale(1.0 / n);
    (loss / n, total)
}

fn improves(candidate: &EvalReport, best: Option<&EvalReport>) -> bool {
    match best {
        None => true,
        Some(b) => {
            candidate.median_rank < b.median_rank
                || (candidate.median_rank == b.median_rank && candidate.mrr > b.mrr)
        }
    }
}

/// Trains a fresh model. `on_epoch` sees every log row as it is produced.
pub fn train(
    train_set: &[Instance],
    dev_set: &[Instance],
    emb: &Embeddings,
    index: &TargetIndex,
    enc_cfg: &EncoderConfig,
    train_cfg: &TrainConfig,
    on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    let model = Model::new(*enc_cfg, emb.dim());
    train_from(model, train_set, dev_set, emb, index, train_cfg, on_epoch)
}

/// Trains starting from `model`'s current parameters.
pub fn train_from(
    mut model: Model,
    train_set: &[Instance],
    dev_set: &[Instance],
    emb: &Embeddings,
    index: &TargetIndex,
    train_cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    model.config.validate()?;
    train_cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    if dev_set.is_empty() {
        return Err(Error::Config("dev split is empty".into()));
    }
    if index.kind() != model.config.target_mode {
        return Err(Error::Config(
            "target index kind does not match the target mode".into(),
        ));
    }
    let targets: Vec<&[f64]> = train_set
        .iter()
        .map(|inst| {
            inst.target_vector(model.config.target_mode, emb)
                .ok_or_else(|| {
                    Error::Data(format!(
                        "no target vector for {:?} sense {}",
                        inst.target, inst.target_sense
                    ))
                })
        })
        .collect::<Result<_>>()?;

    let mut optimizer = OptimizerState::new(train_cfg, &model.params);
    let mut best: Option<(EvalReport, ModelParams, OptimizerState, usize)> = None;
    let mut stale = 0;
    let mut history = Vec::new();

    for epoch in 1..=train_cfg.max_epochs {
        let batches = make_batches(
            train_set,
            train_cfg.batch_size,
            train_cfg.seed,
            epoch,
            model.config.max_tokens,
        );
        let mut loss_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let rng_seed = derive_seed(train_cfg.seed, &[epoch as u64, b as u64, 0x5eed]);
            let (loss, grads) =
                batch_gradient(&model.params, &model.config, batch, &targets, emb, rng_seed);
            loss_sum += loss * batch.len() as f64;
            optimizer.step(&mut model.params, &grads);
        }
        let dev = evaluate(&model, dev_set, index, emb)?;
        let log = EpochLog {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            dev,
        };
        on_epoch(&log);
        history.push(log);

        if improves(&dev, best.as_ref().map(|b| &b.0)) {
            best = Some((dev, model.params.clone(), optimizer.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= train_cfg.patience {
                tracing::info!(epoch, "early stopping");
                break;
            }
        }
    }

    let (best_epoch, params, optimizer) = match best {
        Some((_, p, o, e)) => (e, p, o),
        None => (0, model.params.clone(), optimizer),
    };
    Ok(TrainOutcome {
        model: Model {
            config: model.config,
            params,
        },
        optimizer,
        best_epoch,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Pos;

    fn inst(n: usize, len: usize) -> Vec<Instance> {
        (0..n)
            .map(|i| Instance {
                tokens: (0..len + i % 3).map(|t| format!("t{t}")).collect(),
                target: format!("w{i}"),
                target_sense: 0,
                synset_id: format!("s{i}"),
                pos: Pos::Noun,
            })
            .collect()
    }

    #[test]
    fn batch_sizes_and_padding() {
        let data = inst(17, 2);
        let batches = make_batches(&data, 16, 1, 1, 20);
        assert_eq!(
            batches.iter().map(Batch::len).collect::<Vec<_>>(),
            vec![16, 1]
        );
        for b in &batches {
            let width = b.tokens[0].len();
            for (k, &i) in b.indices.iter().enumerate() {
                assert_eq!(b.tokens[k].len(), width);
                let real = data[i].tokens.len();
                assert_eq!(b.mask[k].iter().filter(|m| **m).count(), real);
                assert!(b.mask[k][real..].iter().all(|m| !m));
                assert_eq!(&b.tokens[k][..real], data[i].tokens.as_slice());
            }
        }
    }

    #[test]
    fn batches_are_deterministic_per_seed_and_epoch() {
        let data = inst(40, 3);
        assert_eq!(
            make_batches(&data, 8, 5, 2, 20),
            make_batches(&data, 8, 5, 2, 20)
        );
        assert_ne!(
            make_batches(&data, 8, 5, 2, 20),
            make_batches(&data, 8, 5, 3, 20)
        );
    }

    #[test]
    fn clipping_applies_in_batches() {
        let data = inst(3, 30);
        for b in make_batches(&data, 3, 0, 1, 20) {
            assert!(b.tokens.iter().all(|t| t.len() == 20));
            assert!(b.mask.iter().all(|m| m.iter().all(|x| *x)));
        }
    }
}
