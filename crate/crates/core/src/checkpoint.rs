//! Self-describing model checkpoints.
//!
//! A checkpoint is one JSON object:
//!
//! | key              | contents                                                     |
//! |------------------|--------------------------------------------------------------|
//! | `format`         | always `"revdict-checkpoint"`                                |
//! | `version`        | layout version, currently `1`                                |
//! | `embedding_dim`  | `l`, the embedding and prediction dimension                  |
//! | `config`         | the `EncoderConfig` (modes, hidden size, selector, seed)     |
//! | `train`          | the `TrainConfig` used, if any                               |
//! | `seed`           | root seed of the run                                         |
//! | `best_epoch`     | epoch the parameters come from (0 = untrained)               |
//! | `target_words`   | ranking vocabulary, in index order                           |
//! | `embeddings`     | optional source paths, `max_senses` and table fingerprint    |
//! | `params`         | `ctx_lstm` (null unless attention), `enc_lstm`, `dense`      |
//! | `optimizer`      | optional optimizer state (`kind` = `adam` or `sgd`)          |
//!
//! LSTM tensors appear as `w_i, w_f, w_o, w_g, u_i, u_f, u_o, u_g, b_i, b_f,
//! b_o, b_g`; matrices as `{rows, cols, data}` in row-major order. Floats
//! are written with round-trip precision.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hashing::Fnv64;
use crate::model::{EncoderConfig, Model, ModelParams};
use crate::nn::Parameters;
use crate::train::{OptimizerState, TrainConfig};

pub const FORMAT: &str = "revdict-checkpoint";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbeddingSource {
    pub single: PathBuf,
    pub multi: PathBuf,
    pub max_senses: usize,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub embedding_dim: usize,
    pub config: EncoderConfig,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    pub best_epoch: usize,
    pub target_words: Vec<String>,
    pub embeddings: Option<EmbeddingSource>,
    pub params: ModelParams,
    pub optimizer: Option<OptimizerState>,
}

impl Checkpoint {
    pub fn new(model: &Model, target_words: Vec<String>) -> Self {
        Checkpoint {
            format: FORMAT.to_owned(),
            version: VERSION,
            embedding_dim: model.params.embedding_dim(),
            config: model.config,
            train: None,
            seed: model.config.seed,
            best_epoch: 0,
            target_words,
            embeddings: None,
            params: model.params.clone(),
            optimizer: None,
        }
    }

    pub fn model(&self) -> Model {
        Model {
            config: self.config,
            params: self.params.clone(),
        }
    }

    /// Short hex id derived from the configuration and parameters.
    pub fn id(&self) -> String {
        let mut h = Fnv64::default();
        h.write(self.config.input_mode.name().as_bytes());
        h.write(self.config.target_mode.name().as_bytes());
        h.write_u64(self.config.hidden_dim as u64);
        h.write_u64(self.config.max_tokens as u64);
        h.write_u64(self.config.seed);
        for t in self.params.tensors() {
            for v in t {
                h.write_u64(v.to_bits());
            }
        }
        format!("{:016x}", h.finish())
    }

    fn check(&self, path: &Path) -> Result<()> {
        let bad = |msg: String| Error::Checkpoint {
            path: path.to_owned(),
            msg,
        };
        if self.format != FORMAT {
            return Err(bad(format!("not a checkpoint (format {:?})", self.format)));
        }
        if self.version != VERSION {
            return Err(bad(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        let p = &self.params;
        let l = self.embedding_dim;
        let h = self.config.hidden_dim;
        let enc_ok = p.enc_lstm.input_dim == l && p.enc_lstm.hidden_dim == h;
        let dense_ok = p.dense.in_dim() == h && p.dense.out_dim() == l;
        if !enc_ok || !dense_ok {
            return Err(bad(
                "parameter shapes do not match embedding_dim/hidden_dim".into(),
            ));
        }
        let wants_ctx = self.config.input_mode == crate::model::InputMode::AttentionMultiSense;
        match (&p.ctx_lstm, wants_ctx) {
            (Some(c), true) if c.input_dim == l && c.hidden_dim == l => {}
            (None, false) => {}
            _ => {
                return Err(bad(
                    "context LSTM missing or misshaped for the input mode".into()
                ))
            }
        }
        if self
            .params
            .tensors()
            .iter()
            .any(|t| t.iter().any(|v| !v.is_finite()))
        {
            return Err(bad("non-finite parameter".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes).map_err(|e| Error::Checkpoint {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        ckpt.check(path)?;
        Ok(ckpt)
    }

    /// Writes to a temporary file in the target directory, then renames.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d,
            _ => Path::new("."),
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        let json = serde_json::to_vec(self).map_err(|e| Error::Checkpoint {
            path: path.to_owned(),
            msg: e.to_string(),
        })?;
        tmp.write_all(&json).map_err(|e| Error::io(path, e))?;
        tmp.as_file().sync_all().map_err(|e| Error::io(path, e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::InputMode;
    use crate::nn::AdamState;

    fn model(mode: InputMode) -> Model {
        Model::new(
            EncoderConfig {
                input_mode: mode,
                hidden_dim: 5,
                seed: 9,
                ..EncoderConfig::default()
            },
            4,
        )
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        for mode in InputMode::ALL {
            let m = model(mode);
            let mut ck = Checkpoint::new(&m, vec!["a".into(), "b".into()]);
            ck.best_epoch = 3;
            ck.optimizer = Some(OptimizerState::Adam {
                config: Default::default(),
                state: AdamState::new(&m.params),
            });
            let path = dir.path().join(format!("{}.json", mode.name()));
            ck.save(&path).unwrap();
            let back = Checkpoint::load(&path).unwrap();
            assert_eq!(back, ck);
            assert_eq!(back.id(), ck.id());
            assert_eq!(back.model(), m);
        }
    }

    #[test]
    fn save_leaves_no_temp_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        Checkpoint::new(&model(InputMode::SingleSense), vec![])
            .save(&path)
            .unwrap();
        Checkpoint::new(&model(InputMode::SingleSense), vec![])
            .save(&path)
            .unwrap();
        let names: Vec<_> = std::fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(names, vec![std::ffi::OsString::from("m.json")]);
    }

    #[test]
    fn rejects_foreign_and_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.json");
        std::fs::write(&path, "{}").unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Checkpoint { .. })
        ));

        let mut ck = Checkpoint::new(&model(InputMode::AttentionMultiSense), vec![]);
        ck.params.ctx_lstm = None;
        std::fs::write(&path, serde_json::to_vec(&ck).unwrap()).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(Error::Checkpoint { .. })
        ));

        assert!(matches!(
            Checkpoint::load(dir.path().join("missing.json")),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn id_tracks_parameters() {
        let m = model(InputMode::FirstMultiSense);
        let a = Checkpoint::new(&m, vec![]);
        let mut b = a.clone();
        b.params.dense.b[0] += 1e-9;
        assert_ne!(a.id(), b.id());
        assert_eq!(a.id().len(), 16);
    }
}
