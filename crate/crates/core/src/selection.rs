//! Attention-based selection of sense vectors.
//!
//! A context LSTM reads the single-sense embeddings of the whole description
//! and produces a context vector `c` of embedding size. Every sense vector
//! `d_ij` of token `i` is scored with `r_ij = relu(sim(c, d_ij))`, the scores
//! are softmax-normalized per token into weights `a_ij`, and the token is
//! represented by the mixture `v_i = Σ_j a_ij d_ij`.

use serde::{Deserialize, Serialize};

use crate::embeddings::{single_or_zero, Embeddings, SenseSource};
use crate::nn::{lstm_forward, LstmParams, LstmTape};
use crate::vecops::{axpy, dot, norm, NORM_EPS};

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Similarity {
    #[default]
    Dot,
    Cosine,
}

impl std::str::FromStr for Similarity {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" | "cos" => Ok(Similarity::Cosine),
            other => Err(crate::Error::Config(format!(
                "unknown similarity {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectorConfig {
    pub similarity: Similarity,
    pub nonlinearity: Nonlinearity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextVector(pub Vec<f64>);

/// Attention over one token's senses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenTrace {
    pub token: String,
    pub position: usize,
    pub source: SenseSource,
    pub senses_considered: usize,
    pub raw: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Versioned, JSON-serializable record of a selection pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionTrace {
    pub version: u32,
    pub tokens: Vec<TokenTrace>,
}

impl AttentionTrace {
    pub fn for_position(&self, position: usize) -> Option<&TokenTrace> {
        self.tokens.iter().find(|t| t.position == position)
    }
}

fn similarity(c: &[f64], d: &[f64], kind: Similarity) -> f64 {
    match kind {
        Similarity::Dot => dot(c, d),
        Similarity::Cosine => crate::vecops::cosine(c, d),
    }
}

fn activate(x: f64, f: Nonlinearity) -> f64 {
    match f {
        Nonlinearity::Relu => x.max(0.0),
    }
}

/// Raw attention score `f(σ(c, d))`.
pub fn raw_attention(c: &ContextVector, d: &[f64], cfg: &SelectorConfig) -> f64 {
    assert_eq!(c.0.len(), d.len(), "context and sense dims differ");
    activate(similarity(&c.0, d, cfg.similarity), cfg.nonlinearity)
}

/// Max-subtracted softmax. Panics on an empty list.
pub fn attention_weights(raw: &[f64]) -> Vec<f64> {
    assert!(!raw.is_empty(), "attention over zero senses");
    if raw.len() == 1 {
        return vec![1.0];
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = raw.iter().map(|r| (r - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Convex combination `Σ_j w_j d_j`.
pub fn select_sense_vector<V: AsRef<[f64]>>(weights: &[f64], senses: &[V]) -> Vec<f64> {
    assert_eq!(weights.len(), senses.len(), "weights and senses length");
    assert!(!senses.is_empty());
    if senses.len() == 1 {
        // Singleton softmax weight is exactly 1; copy to stay bit-exact.
        return senses[0].as_ref().to_vec();
    }
    let mut v = vec![0.0; senses[0].as_ref().len()];
    for (w, d) in weights.iter().zip(senses) {
        axpy(*w, d.as_ref(), &mut v);
    }
    v
}

/// Final hidden state of the context LSTM over single-sense embeddings
/// (zero vectors for OOV tokens).
pub fn context_vector<S: AsRef<str>>(
    ctx_lstm: &LstmParams,
    tokens: &[S],
    emb: &Embeddings,
) -> ContextVector {
    assert!(!tokens.is_empty(), "context vector of an empty sequence");
    let mask = vec![true; tokens.len()];
    let (c, _) = run_context(ctx_lstm, tokens, &mask, emb);
    c
}

fn run_context<S: AsRef<str>>(
    ctx_lstm: &LstmParams,
    tokens: &[S],
    mask: &[bool],
    emb: &Embeddings,
) -> (ContextVector, LstmTape) {
    assert_eq!(
        ctx_lstm.hidden_dim,
        emb.dim(),
        "context LSTM hidden size must equal the embedding dim"
    );
    let inputs: Vec<_> = tokens
        .iter()
        .map(|t| single_or_zero(t.as_ref(), &emb.single))
        .collect();
    let tape = lstm_forward(ctx_lstm, &inputs, mask);
    (ContextVector(tape.final_state()), tape)
}

#[derive(Debug, Clone)]
struct TokenSelection {
    position: usize,
    senses: Vec<Vec<f64>>,
    sims: Vec<f64>,
    weights: Vec<f64>,
}

/// Everything the backward pass through the selector needs.
#[derive(Debug, Clone)]
pub struct SelectionTape {
    context: ContextVector,
    ctx_tape: LstmTape,
    tokens: Vec<TokenSelection>,
    cfg: SelectorConfig,
}

/// Output of a selection pass. `vectors[t]` is `v_t` for real positions and
/// the zero vector at masked ones.
#[derive(Debug, Clone)]
pub struct Selection {
    pub vectors: Vec<Vec<f64>>,
    pub trace: AttentionTrace,
    pub tape: SelectionTape,
}

/// Runs context computation and per-token selection over all tokens.
pub fn select_all<S: AsRef<str>>(
    tokens: &[S],
    emb: &Embeddings,
    ctx_lstm: &LstmParams,
    cfg: &SelectorConfig,
) -> Selection {
    let mask = vec![true; tokens.len()];
    select_masked(tokens, &mask, emb, ctx_lstm, cfg)
}

/// As [`select_all`], skipping positions whose mask is false.
pub fn select_masked<S: AsRef<str>>(
    tokens: &[S],
    mask: &[bool],
    emb: &Embeddings,
    ctx_lstm: &LstmParams,
    cfg: &SelectorConfig,
) -> Selection {
    assert_eq!(tokens.len(), mask.len());
    assert!(mask.iter().any(|m| *m), "selection over an empty sequence");
    let dim = emb.dim();
    let (context, ctx_tape) = run_context(ctx_lstm, tokens, mask, emb);

    let mut vectors = Vec::with_capacity(tokens.len());
    let mut traces = Vec::new();
    let mut selections = Vec::new();
    for (pos, (token, &real)) in tokens.iter().zip(mask).enumerate() {
        if !real {
            vectors.push(vec![0.0; dim]);
            continue;
        }
        let lookup = emb.lookup(token.as_ref());
        let sims: Vec<f64> = lookup
            .vectors
            .iter()
            .map(|d| similarity(&context.0, d, cfg.similarity))
            .collect();
        let raw: Vec<f64> = sims
            .iter()
            .map(|s| activate(*s, cfg.nonlinearity))
            .collect();
        let weights = attention_weights(&raw);
        vectors.push(select_sense_vector(&weights, &lookup.vectors));
        traces.push(TokenTrace {
            token: token.as_ref().to_owned(),
            position: pos,
            source: lookup.source,
            senses_considered: weights.len(),
            raw,
            weights: weights.clone(),
        });
        selections.push(TokenSelection {
            position: pos,
            senses: lookup.vectors.into_owned(),
            sims,
            weights,
        });
    }

    Selection {
        vectors,
        trace: AttentionTrace {
            version: TRACE_VERSION,
            tokens: traces,
        },
        tape: SelectionTape {
            context,
            ctx_tape,
            tokens: selections,
            cfg: *cfg,
        },
    }
}

impl SelectionTape {
    pub fn context(&self) -> &ContextVector {
        &self.context
    }

    /// Backpropagates `dvs` (gradient w.r.t. each position's selected vector)
    /// into the context LSTM parameters. Returns `dL/da_ij` per real token.
    /// Sense vectors are constants.
    pub fn backward(
        &self,
        ctx_lstm: &LstmParams,
        dvs: &[Vec<f64>],
        grads: &mut LstmParams,
    ) -> Vec<Vec<f64>> {
        let c = &self.context.0;
        let c_norm = norm(c);
        let mut dc = vec![0.0; c.len()];
        let mut weight_grads = Vec::with_capacity(self.tokens.len());

        for tok in &self.tokens {
            let dv = &dvs[tok.position];
            let da: Vec<f64> = tok.senses.iter().map(|d| dot(dv, d)).collect();
            weight_grads.push(da.clone());
            if tok.senses.len() == 1 {
                // Softmax of a singleton is constant.
                continue;
            }
            let mean: f64 = tok.weights.iter().zip(&da).map(|(a, g)| a * g).sum();
            for ((d, s), (a, g)) in tok
                .senses
                .iter()
                .zip(&tok.sims)
                .zip(tok.weights.iter().zip(&da))
            {
                let dr = a * (g - mean);
                let ds = match self.cfg.nonlinearity {
                    Nonlinearity::Relu if *s > 0.0 => dr,
                    Nonlinearity::Relu => 0.0,
                };
                if ds == 0.0 {
                    continue;
                }
                match self.cfg.similarity {
                    Similarity::Dot => axpy(ds, d, &mut dc),
                    Similarity::Cosine => {
                        let d_norm = norm(d);
                        if c_norm < NORM_EPS || d_norm < NORM_EPS {
                            continue;
                        }
                        // ∂cos/∂c = d/(|c||d|) − cos·c/|c|²
                        axpy(ds / (c_norm * d_norm), d, &mut dc);
                        axpy(-ds * s / (c_norm * c_norm), c, &mut dc);
                    }
                }
            }
        }

        self.ctx_tape.backward(ctx_lstm, &dc, grads);
        weight_grads
    }
}
