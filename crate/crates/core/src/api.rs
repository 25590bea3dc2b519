//! Query engine and the JSON types of the `/api/v1` HTTP interface.
//!
//! `POST /api/v1/query`
//! : body [`QueryRequest`], response [`QueryResponse`]; 400 with
//!   [`ErrorBody`] on invalid input, 503 while the model is loading.
//!
//! `GET /api/v1/health`
//! : [`Health`], `{"status": "ok"}` or `{"status": "loading"}`.
//!
//! `GET /api/v1/model`
//! : [`ModelInfo`]; 503 while loading.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::dataset::tokenize;
use crate::embeddings::{Embeddings, SenseSource};
use crate::error::{Error, Result};
use crate::model::{clip, InputMode, Model, TargetMode};
use crate::ranking::{rank, RankedEntry, TargetIndex};

pub const DEFAULT_TOP_K: usize = 10;
pub const MAX_TOP_K: usize = 100;
/// Random-stream id used when serving, so random-mode models answer
/// identical requests identically.
pub const SERVING_STREAM: u64 = 0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub definition: String,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub trace: bool,
}

fn default_top_k() -> usize {
    DEFAULT_TOP_K
}

impl QueryRequest {
    pub fn new(definition: impl Into<String>) -> Self {
        QueryRequest {
            definition: definition.into(),
            top_k: DEFAULT_TOP_K,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub token: String,
    pub source: SenseSource,
    pub senses_considered: usize,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub checkpoint_id: String,
    pub input_mode: InputMode,
    pub target_mode: TargetMode,
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub max_tokens: usize,
    pub vocabulary_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryResponse {
    /// Sorted by rank.
    pub candidates: Vec<RankedEntry>,
    /// Present when requested and the model uses attention.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<Vec<TraceRow>>,
    pub model_info: ModelInfo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HealthStatus {
    Ok,
    Loading,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Health {
    pub status: HealthStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
}

/// A request the engine refuses; maps to a 400-class status.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct BadRequest(pub String);

/// An immutable loaded model with its embeddings and ranking index.
#[derive(Debug)]
pub struct Engine {
    model: Model,
    emb: Embeddings,
    index: TargetIndex,
    info: ModelInfo,
}

/// Where to find the embeddings when the checkpoint does not say, or to
/// override what it says.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmbeddingPaths {
    pub single: PathBuf,
    pub multi: PathBuf,
    pub max_senses: usize,
}

impl Engine {
    pub fn new(checkpoint: &Checkpoint, emb: Embeddings) -> Result<Self> {
        if emb.dim() != checkpoint.embedding_dim {
            return Err(Error::Config(format!(
                "embeddings have dim {}, checkpoint expects {}",
                emb.dim(),
                checkpoint.embedding_dim
            )));
        }
        if checkpoint.target_words.is_empty() {
            return Err(Error::Config(
                "checkpoint has an empty target vocabulary".into(),
            ));
        }
        let index = TargetIndex::build(
            checkpoint.config.target_mode,
            checkpoint.target_words.iter().map(String::as_str),
            &emb,
        )?;
        let info = ModelInfo {
            checkpoint_id: checkpoint.id(),
            input_mode: checkpoint.config.input_mode,
            target_mode: checkpoint.config.target_mode,
            embedding_dim: checkpoint.embedding_dim,
            hidden_dim: checkpoint.config.hidden_dim,
            max_tokens: checkpoint.config.max_tokens,
            vocabulary_size: index.num_words(),
        };
        Ok(Engine {
            model: checkpoint.model(),
            emb,
            index,
            info,
        })
    }

    /// Loads a checkpoint and its embeddings. `paths` overrides the
    /// embedding locations recorded in the checkpoint.
    pub fn load(checkpoint: impl AsRef<Path>, paths: Option<&EmbeddingPaths>) -> Result<Self> {
        let ckpt = Checkpoint::load(checkpoint)?;
        let paths = match (paths, &ckpt.embeddings) {
            (Some(p), _) => p.clone(),
            (None, Some(src)) => EmbeddingPaths {
                single: src.single.clone(),
                multi: src.multi.clone(),
                max_senses: src.max_senses,
            },
            (None, None) => {
                return Err(Error::Config(
                    "checkpoint does not record embedding paths; pass them explicitly".into(),
                ))
            }
        };
        let emb = Embeddings::load(&paths.single, &paths.multi, paths.max_senses)?;
        if let Some(src) = &ckpt.embeddings {
            if src.fingerprint != emb.fingerprint() {
                tracing::warn!("embeddings differ from the ones the checkpoint was trained with");
            }
        }
        Engine::new(&ckpt, emb)
    }

    pub fn info(&self) -> &ModelInfo {
        &self.info
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn embeddings(&self) -> &Embeddings {
        &self.emb
    }

    pub fn index(&self) -> &TargetIndex {
        &self.index
    }

    pub fn query(&self, req: &QueryRequest) -> std::result::Result<QueryResponse, BadRequest> {
        if !(1..=MAX_TOP_K).contains(&req.top_k) {
            return Err(BadRequest(format!(
                "top_k must be between 1 and {MAX_TOP_K}, got {}",
                req.top_k
            )));
        }
        let tokens = tokenize(&req.definition);
        if tokens.is_empty() {
            return Err(BadRequest("definition is empty".into()));
        }
        let tokens = clip(&tokens, self.model.config.max_tokens);
        if tokens
            .iter()
            .all(|t| self.emb.lookup(t).source == SenseSource::Oov)
        {
            return Err(BadRequest("definition contains no known words".into()));
        }
        let enc = self.model.encode_seeded(tokens, &self.emb, SERVING_STREAM);
        let candidates = rank(&enc.prediction, &self.index, Some(req.top_k)).entries;
        let trace = match (req.trace, enc.trace) {
            (true, Some(t)) => Some(
                t.tokens
                    .into_iter()
                    .map(|t| TraceRow {
                        token: t.token,
                        source: t.source,
                        senses_considered: t.senses_considered,
                        weights: t.weights,
                    })
                    .collect(),
            ),
            _ => None,
        };
        Ok(QueryResponse {
            candidates,
            trace,
            model_info: self.info.clone(),
        })
    }
}
