//! Run configuration: a TOML file whose values command-line flags override.
//!
//! ```toml
//! [paths]
//! single = "emb/single.txt"
//! multi = "emb/multi.tsv"
//! max_senses = 20
//! dataset = "data"
//! checkpoint = "model.json"
//!
//! [encoder]
//! input_mode = "attention_multi_sense"
//! target_mode = "multi_sense"
//! hidden_dim = 512
//! selector = { similarity = "dot" }
//!
//! [train]
//! optimizer = "adam"
//! lr = 0.001
//! seed = 7
//!
//! [service]
//! bind = "127.0.0.1:8080"
//! ```

use std::path::{Path, PathBuf};

use revdict_core::embeddings::DEFAULT_MAX_SENSES;
use revdict_core::model::EncoderConfig;
use revdict_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub single: Option<PathBuf>,
    pub multi: Option<PathBuf>,
    pub max_senses: usize,
    pub glosses: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub labels: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            single: None,
            multi: None,
            max_senses: DEFAULT_MAX_SENSES,
            glosses: None,
            dataset: None,
            checkpoint: None,
            labels: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub bind: String,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            bind: "127.0.0.1:8080".into(),
            static_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub paths: Paths,
    pub encoder: EncoderConfig,
    pub train: TrainConfig,
    pub service: ServiceConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| UsageError(format!("{}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("{}: {e}", path.display())).into())
    }

    /// Defaults when no file is given.
    pub fn load_optional(path: Option<&Path>) -> anyhow::Result<Self> {
        path.map_or_else(|| Ok(RunConfig::default()), RunConfig::load)
    }
}

/// `value` unless absent, in which case `what` is a usage error.
pub fn require<T>(value: Option<T>, what: &str) -> Result<T, UsageError> {
    value.ok_or_else(|| UsageError(format!("missing {what}")))
}
