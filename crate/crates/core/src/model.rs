//! The description encoder: input representation, encoder LSTM, dense
//! projection to embedding size.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embeddings::{single_or_zero, Embeddings};
use crate::error::{Error, Result};
use crate::nn::{cosine_loss, lstm_forward, DenseParams, LstmParams, LstmTape, Parameters};
use crate::selection::{select_masked, AttentionTrace, SelectionTape, SelectorConfig};

/// How description words are turned into input vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputMode {
    /// `e_s(w)`
    SingleSense,
    /// The first (dominant) sense vector.
    FirstMultiSense,
    /// A uniformly drawn sense vector, redrawn on every pass.
    RandomMultiSense,
    /// Attention-weighted mixture of all sense vectors.
    AttentionMultiSense,
}

impl InputMode {
    pub const ALL: [InputMode; 4] = [
        InputMode::SingleSense,
        InputMode::FirstMultiSense,
        InputMode::RandomMultiSense,
        InputMode::AttentionMultiSense,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InputMode::SingleSense => "single-sense",
            InputMode::FirstMultiSense => "first-multi-sense",
            InputMode::RandomMultiSense => "random-multi-sense",
            InputMode::AttentionMultiSense => "attention",
        }
    }
}

impl std::str::FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "single-sense" | "single" => Ok(InputMode::SingleSense),
            "first-multi-sense" | "first" => Ok(InputMode::FirstMultiSense),
            "random-multi-sense" | "random" => Ok(InputMode::RandomMultiSense),
            "attention" | "attention-multi-sense" | "multi-sense" => {
                Ok(InputMode::AttentionMultiSense)
            }
            other => Err(Error::Config(format!("unknown input mode {other:?}"))),
        }
    }
}

/// Which vectors the model is trained towards and ranked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    SingleSense,
    MultiSense,
}

impl TargetMode {
    pub fn name(self) -> &'static str {
        match self {
            TargetMode::SingleSense => "single-sense",
            TargetMode::MultiSense => "multi-sense",
        }
    }
}

impl std::str::FromStr for TargetMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "single-sense" | "single" => Ok(TargetMode::SingleSense),
            "multi-sense" | "multi" => Ok(TargetMode::MultiSense),
            other => Err(Error::Config(format!("unknown target mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    pub input_mode: InputMode,
    pub target_mode: TargetMode,
    pub hidden_dim: usize,
    pub max_tokens: usize,
    pub selector: SelectorConfig,
    pub seed: u64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            input_mode: InputMode::AttentionMultiSense,
            target_mode: TargetMode::MultiSense,
            hidden_dim: 512,
            max_tokens: 20,
            selector: SelectorConfig::default(),
            seed: 0,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if self.max_tokens == 0 {
            return Err(Error::Config("max_tokens must be at least 1".into()));
        }
        Ok(())
    }
}

/// All trainable weights. The context LSTM exists only in attention mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub ctx_lstm: Option<LstmParams>,
    pub enc_lstm: LstmParams,
    pub dense: DenseParams,
}

impl ModelParams {
    pub fn init(cfg: &EncoderConfig, embedding_dim: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let enc_lstm = LstmParams::init(embedding_dim, cfg.hidden_dim, &mut rng);
        let dense = DenseParams::init(cfg.hidden_dim, embedding_dim, &mut rng);
        let ctx_lstm = (cfg.input_mode == InputMode::AttentionMultiSense)
            .then(|| LstmParams::init(embedding_dim, embedding_dim, &mut rng));
        ModelParams {
            ctx_lstm,
            enc_lstm,
            dense,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.dense.out_dim()
    }
}

impl Parameters for ModelParams {
    fn tensors(&self) -> Vec<&[f64]> {
        let mut t = self
            .ctx_lstm
            .as_ref()
            .map(|p| p.tensors())
            .unwrap_or_default();
        t.extend(self.enc_lstm.tensors());
        t.extend(self.dense.tensors());
        t
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t = self
            .ctx_lstm
            .as_mut()
            .map(|p| p.tensors_mut())
            .unwrap_or_default();
        t.extend(self.enc_lstm.tensors_mut());
        t.extend(self.dense.tensors_mut());
        t
    }
}

/// First `max_tokens` tokens.
pub fn clip<S>(tokens: &[S], max_tokens: usize) -> &[S] {
    &tokens[..tokens.len().min(max_tokens)]
}

/// Recorded forward pass of the full encoder.
#[derive(Debug, Clone)]
pub struct ModelTape {
    pub prediction: Vec<f64>,
    pub trace: Option<AttentionTrace>,
    selection: Option<SelectionTape>,
    enc: LstmTape,
    enc_final: Vec<f64>,
}

/// Gradients of a scalar loss.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub params: ModelParams,
    /// `dL/da_ij` for every real token (attention mode only).
    pub mixture_weights: Vec<Vec<f64>>,
}

/// Input vectors for every position per `mode` (zero at masked positions).
fn input_vectors<S: AsRef<str>, R: Rng + ?Sized>(
    mode: InputMode,
    tokens: &[S],
    mask: &[bool],
    emb: &Embeddings,
    rng: &mut R,
) -> Vec<Vec<f64>> {
    tokens
        .iter()
        .zip(mask)
        .map(|(t, &real)| {
            if !real {
                return vec![0.0; emb.dim()];
            }
            let t = t.as_ref();
            match mode {
                InputMode::SingleSense => single_or_zero(t, &emb.single).into_owned(),
                InputMode::FirstMultiSense => emb.lookup(t).vectors[0].clone(),
                InputMode::RandomMultiSense => {
                    let senses = emb.lookup(t).vectors;
                    senses[rng.random_range(0..senses.len())].clone()
                }
                InputMode::AttentionMultiSense => {
                    unreachable!("attention inputs come from the selector")
                }
            }
        })
        .collect()
}

/// Runs the encoder over a (possibly padded) token sequence and records it.
pub fn forward<S: AsRef<str>, R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &EncoderConfig,
    tokens: &[S],
    mask: &[bool],
    emb: &Embeddings,
    rng: &mut R,
) -> ModelTape {
    assert_eq!(tokens.len(), mask.len());
    assert!(mask.iter().any(|m| *m), "encoding an empty description");
    assert_eq!(
        params.embedding_dim(),
        emb.dim(),
        "model/embedding dim mismatch"
    );
    // Positions past max_tokens are clipped by masking them out.
    let mask: Vec<bool> = mask
        .iter()
        .enumerate()
        .map(|(i, m)| *m && i < cfg.max_tokens)
        .collect();

    let (inputs, selection, trace) = match cfg.input_mode {
        InputMode::AttentionMultiSense => {
            let ctx = params
                .ctx_lstm
                .as_ref()
                .expect("attention mode requires a context LSTM");
            let sel = select_masked(tokens, &mask, emb, ctx, &cfg.selector);
            (sel.vectors, Some(sel.tape), Some(sel.trace))
        }
        mode => (input_vectors(mode, tokens, &mask, emb, rng), None, None),
    };

    let enc = lstm_forward(&params.enc_lstm, &inputs, &mask);
    let enc_final = enc.final_state();
    let prediction = params.dense.forward(&enc_final);
    ModelTape {
        prediction,
        trace,
        selection,
        enc,
        enc_final,
    }
}

impl ModelTape {
    /// Backpropagates `d_pred = dL/dt̂` through every layer. Embeddings are
    /// constants and receive no gradient.
    pub fn backward(&self, params: &ModelParams, d_pred: &[f64]) -> ModelGrads {
        let mut grads = params.zeros_like();
        let d_h = params
            .dense
            .backward(&self.enc_final, d_pred, &mut grads.dense);
        let d_inputs = self
            .enc
            .backward(&params.enc_lstm, &d_h, &mut grads.enc_lstm);
        let mixture_weights = match (&self.selection, &params.ctx_lstm, &mut grads.ctx_lstm) {
            (Some(sel), Some(ctx), Some(g)) => sel.backward(ctx, &d_inputs, g),
            _ => Vec::new(),
        };
        ModelGrads {
            params: grads,
            mixture_weights,
        }
    }
}

/// Encoder output for one description.
#[derive(Debug, Clone)]
pub struct Encoded {
    pub prediction: Vec<f64>,
    pub trace: Option<AttentionTrace>,
}

/// Encodes an unpadded description, clipping to `cfg.max_tokens`.
pub fn encode<S: AsRef<str>, R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &EncoderConfig,
    tokens: &[S],
    emb: &Embeddings,
    rng: &mut R,
) -> Encoded {
    let tokens = clip(tokens, cfg.max_tokens);
    let mask = vec![true; tokens.len()];
    let tape = forward(params, cfg, tokens, &mask, emb, rng);
    Encoded {
        prediction: tape.prediction,
        trace: tape.trace,
    }
}

/// Cosine loss against `target` and its gradients.
pub fn loss_and_grads<S: AsRef<str>, R: Rng + ?Sized>(
    params: &ModelParams,
    cfg: &EncoderConfig,
    tokens: &[S],
    mask: &[bool],
    target: &[f64],
    emb: &Embeddings,
    rng: &mut R,
) -> (f64, ModelGrads) {
    let tape = forward(params, cfg, tokens, mask, emb, rng);
    let (loss, d_pred) = cosine_loss(&tape.prediction, target);
    (loss, tape.backward(params, &d_pred))
}

/// A trained encoder bundled with its configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub config: EncoderConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn new(config: EncoderConfig, embedding_dim: usize) -> Self {
        Model {
            params: ModelParams::init(&config, embedding_dim),
            config,
        }
    }

    pub fn encode<S: AsRef<str>, R: Rng + ?Sized>(
        &self,
        tokens: &[S],
        emb: &Embeddings,
        rng: &mut R,
    ) -> Encoded {
        encode(&self.params, &self.config, tokens, emb, rng)
    }

    /// Deterministic encoding; random mode draws from a generator seeded by
    /// `stream` and the model seed.
    pub fn encode_seeded<S: AsRef<str>>(
        &self,
        tokens: &[S],
        emb: &Embeddings,
        stream: u64,
    ) -> Encoded {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::hashing::derive_seed(
            self.config.seed,
            &[u64::MAX, stream],
        ));
        self.encode(tokens, emb, &mut rng)
    }
}
