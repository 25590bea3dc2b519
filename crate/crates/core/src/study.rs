//! Probability each sense-selection strategy assigns to annotated true senses.

use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Instance;
use crate::embeddings::Embeddings;
use crate::error::{Error, Result};
use crate::model::{clip, InputMode, Model};
use crate::selection::AttentionTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Sense(usize),
    Monosemous,
    Uncovered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SenseLabel {
    /// Row index into the instance list the labels were made against.
    pub instance_id: usize,
    pub token_position: usize,
    pub label: LabelKind,
}

/// Reads `instance_id \t token_position \t label` rows where `label` is a
/// sense index, `MONO` or `UNCOVERED`. Blank lines and `#` comments are
/// skipped.
pub fn read_labels<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<SenseLabel>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(Error::format(
                origin,
                lineno,
                format!("expected 3 columns, found {}", cols.len()),
            ));
        }
        let num = |s: &str, what: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::format(origin, lineno, format!("invalid {what} {s:?}")))
        };
        let label = match cols[2].trim() {
            "MONO" => LabelKind::Monosemous,
            "UNCOVERED" => LabelKind::Uncovered,
            s => LabelKind::Sense(num(s, "label")?),
        };
        out.push(SenseLabel {
            instance_id: num(cols[0], "instance id")?,
            token_position: num(cols[1], "token position")?,
            label,
        });
    }
    Ok(out)
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<Vec<SenseLabel>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(std::io::BufReader::new(file), path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Random,
    First,
    Attention,
    AttentionArgmax,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [
        Strategy::Random,
        Strategy::First,
        Strategy::Attention,
        Strategy::AttentionArgmax,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Random => "random multi-sense",
            Strategy::First => "first multi-sense",
            Strategy::Attention => "attention",
            Strategy::AttentionArgmax => "attention-argmax",
        }
    }

    pub fn needs_attention(self) -> bool {
        matches!(self, Strategy::Attention | Strategy::AttentionArgmax)
    }
}

/// Probability `strategy` assigns to `true_sense` of a word with `k` senses.
/// Argmax ties go to the lowest sense index.
pub fn strategy_probability(
    strategy: Strategy,
    k: usize,
    weights: Option<&[f64]>,
    true_sense: usize,
) -> Result<f64> {
    if k == 0 || true_sense >= k {
        return Err(Error::Study(format!(
            "true sense {true_sense} out of range for {k} senses"
        )));
    }
    let attention = || -> Result<&[f64]> {
        let w = weights.ok_or_else(|| Error::Study("attention weights required".into()))?;
        if w.len() != k {
            return Err(Error::Study(format!(
                "{} attention weights for {k} senses",
                w.len()
            )));
        }
        Ok(w)
    };
    Ok(match strategy {
        Strategy::Random => 1.0 / k as f64,
        Strategy::First => f64::from(u8::from(true_sense == 0)),
        Strategy::Attention => attention()?[true_sense],
        Strategy::AttentionArgmax => {
            f64::from(u8::from(crate::vecops::argmax(attention()?) == true_sense))
        }
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodReport {
    pub rows: Vec<(Strategy, f64)>,
    /// Labelled MONO, or the word has a single stored sense.
    pub monosemous: usize,
    pub uncovered: usize,
    pub evaluated: usize,
}

impl LikelihoodReport {
    pub fn total(&self) -> usize {
        self.monosemous + self.uncovered + self.evaluated
    }

    pub fn get(&self, s: Strategy) -> Option<f64> {
        self.rows.iter().find(|(t, _)| *t == s).map(|(_, v)| *v)
    }
}

impl fmt::Display for LikelihoodReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<20} {:>6}", "Model", "L")?;
        for (s, l) in &self.rows {
            writeln!(f, "{:<20} {:>6.2}", s.label(), l)?;
        }
        let total = self.total().max(1) as f64;
        let pct = |n: usize| 100.0 * n as f64 / total;
        writeln!(f)?;
        writeln!(f, "labelled words: {}", self.total())?;
        writeln!(
            f,
            "one vector representation: {} ({:.0}%)",
            self.monosemous,
            pct(self.monosemous)
        )?;
        writeln!(
            f,
            "sense not covered: {} ({:.0}%)",
            self.uncovered,
            pct(self.uncovered)
        )?;
        write!(
            f,
            "evaluated: {} ({:.0}%)",
            self.evaluated,
            pct(self.evaluated)
        )
    }
}

/// Attention traces for the given instances, keyed by instance id.
pub fn attention_traces(
    model: &Model,
    instances: &[Instance],
    ids: impl IntoIterator<Item = usize>,
    emb: &Embeddings,
) -> Result<BTreeMap<usize, AttentionTrace>> {
    if model.config.input_mode != InputMode::AttentionMultiSense {
        return Err(Error::Study(format!(
            "attention strategies need an attention model, checkpoint is {}",
            model.config.input_mode.name()
        )));
    }
    let mut out = BTreeMap::new();
    for id in ids {
        if out.contains_key(&id) {
            continue;
        }
        let inst = instances
            .get(id)
            .ok_or_else(|| Error::Study(format!("instance {id} out of range")))?;
        let tokens = clip(&inst.tokens, model.config.max_tokens);
        let enc = model.encode_seeded(tokens, emb, id as u64);
        out.insert(id, enc.trace.expect("attention mode always traces"));
    }
    Ok(out)
}

/// Mean strategy probability over labels whose word has several senses.
pub fn sense_likelihood(
    labels: &[SenseLabel],
    model: Option<&Model>,
    instances: &[Instance],
    emb: &Embeddings,
    strategies: &[Strategy],
) -> Result<LikelihoodReport> {
    let mut monosemous = 0;
    let mut uncovered = 0;
    let mut evaluated: Vec<(SenseLabel, usize)> = Vec::new();
    for l in labels {
        let inst = instances.get(l.instance_id).ok_or_else(|| {
            Error::Study(format!(
                "label refers to missing instance {}",
                l.instance_id
            ))
        })?;
        let token = inst.tokens.get(l.token_position).ok_or_else(|| {
            Error::Study(format!(
                "instance {} has no token at position {}",
                l.instance_id, l.token_position
            ))
        })?;
        match l.label {
            LabelKind::Monosemous => monosemous += 1,
            LabelKind::Uncovered => uncovered += 1,
            LabelKind::Sense(j) => {
                let k = emb.multi.sense_count(token).unwrap_or(0);
                if k <= 1 {
                    monosemous += 1;
                } else if j >= k {
                    return Err(Error::Study(format!(
                        "instance {} token {token:?}: sense {j} but only {k} senses",
                        l.instance_id
                    )));
                } else {
                    evaluated.push((*l, k));
                }
            }
        }
    }
    if evaluated.is_empty() {
        return Err(Error::Study(
            "no labels with several senses to evaluate".into(),
        ));
    }

    let traces = if strategies.iter().any(|s| s.needs_attention()) {
        let model =
            model.ok_or_else(|| Error::Study("attention strategies need a model".into()))?;
        attention_traces(
            model,
            instances,
            evaluated.iter().map(|(l, _)| l.instance_id),
            emb,
        )?
    } else {
        BTreeMap::new()
    };

    let mut rows = Vec::with_capacity(strategies.len());
    for &s in strategies {
        let mut sum = 0.0;
        for (l, k) in &evaluated {
            let LabelKind::Sense(j) = l.label else {
                unreachable!()
            };
            let weights = if s.needs_attention() {
                let t = traces[&l.instance_id]
                    .for_position(l.token_position)
                    .ok_or_else(|| {
                        Error::Study(format!(
                            "instance {} position {} is beyond the encoder's token limit",
                            l.instance_id, l.token_position
                        ))
                    })?;
                Some(t.weights.as_slice())
            } else {
                None
            };
            sum += strategy_probability(s, *k, weights, j)?;
        }
        rows.push((s, sum / evaluated.len() as f64));
    }
    Ok(LikelihoodReport {
        rows,
        monosemous,
        uncovered,
        evaluated: evaluated.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn strategy_rules() {
        assert_eq!(
            strategy_probability(Strategy::Random, 4, None, 3).unwrap(),
            0.25
        );
        assert_eq!(
            strategy_probability(Strategy::First, 3, None, 0).unwrap(),
            1.0
        );
        assert_eq!(
            strategy_probability(Strategy::First, 3, None, 2).unwrap(),
            0.0
        );
        let w = [0.1, 0.7, 0.2];
        assert_eq!(
            strategy_probability(Strategy::Attention, 3, Some(&w), 1).unwrap(),
            0.7
        );
        assert_eq!(
            strategy_probability(Strategy::AttentionArgmax, 3, Some(&w), 1).unwrap(),
            1.0
        );
        assert_eq!(
            strategy_probability(Strategy::AttentionArgmax, 3, Some(&w), 2).unwrap(),
            0.0
        );
    }

    #[test]
    fn argmax_ties_go_low() {
        let w = [0.4, 0.4, 0.2];
        assert_eq!(
            strategy_probability(Strategy::AttentionArgmax, 3, Some(&w), 0).unwrap(),
            1.0
        );
        assert_eq!(
            strategy_probability(Strategy::AttentionArgmax, 3, Some(&w), 1).unwrap(),
            0.0
        );
    }

    #[test]
    fn contract_violations() {
        assert!(strategy_probability(Strategy::Random, 2, None, 2).is_err());
        assert!(strategy_probability(Strategy::Attention, 2, None, 0).is_err());
        assert!(strategy_probability(Strategy::Attention, 2, Some(&[1.0]), 0).is_err());
    }

    #[test]
    fn parse_labels() {
        let text = "# id\tpos\tlabel\n0\t1\t2\n3\t0\tMONO\n4\t2\tUNCOVERED\n";
        let labels = read_labels(text.as_bytes(), Path::new("l.tsv")).unwrap();
        assert_eq!(labels.len(), 3);
        assert_eq!(labels[0].label, LabelKind::Sense(2));
        assert_eq!(labels[1].label, LabelKind::Monosemous);
        assert_eq!(labels[2].label, LabelKind::Uncovered);
        let err = read_labels("0\t1\n".as_bytes(), Path::new("l.tsv")).unwrap_err();
        assert!(err.to_string().contains("l.tsv"), "{err}");
        assert!(read_labels("0\t1\tx\n".as_bytes(), Path::new("l.tsv")).is_err());
    }
}
