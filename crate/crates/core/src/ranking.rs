//! Cosine ranking of a target vocabulary and the retrieval metrics.
//!
//! In multi-sense mode a word is scored by its best-matching sense, so every
//! word appears once in a ranking. Ties are broken by ascending word id.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embeddings::{Embeddings, SenseSource, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{Model, TargetMode};
use crate::vecops::{dot, norm, NORM_EPS};

#[derive(Debug, Clone)]
struct Candidate {
    sense_index: usize,
    vector: Vec<f64>,
    norm: f64,
}

/// All candidate vectors of a ranking vocabulary.
#[derive(Debug, Clone)]
pub struct TargetIndex {
    kind: TargetMode,
    dim: usize,
    vocab: Vocabulary,
    candidates: Vec<Candidate>,
    /// Candidate positions per word id.
    word_index: Vec<Vec<usize>>,
}

impl TargetIndex {
    /// Builds the index over `words` (duplicates ignored). Single-sense mode
    /// needs a single-sense vector per word; multi-sense mode uses every
    /// stored sense, falling back to the single-sense vector.
    pub fn build<'a>(
        kind: TargetMode,
        words: impl IntoIterator<Item = &'a str>,
        emb: &Embeddings,
    ) -> Result<Self> {
        let mut vocab = Vocabulary::new();
        let mut candidates = Vec::new();
        let mut word_index = Vec::new();
        for word in words {
            if vocab.insert(word).is_none() {
                continue;
            }
            let vectors: Vec<Vec<f64>> = match kind {
                TargetMode::SingleSense => match emb.single.get(word) {
                    Some(v) => vec![v.to_vec()],
                    None => {
                        return Err(Error::Data(format!(
                            "target word {word:?} has no single-sense vector"
                        )))
                    }
                },
                TargetMode::MultiSense => {
                    let l = emb.lookup(word);
                    if l.source == SenseSource::Oov {
                        return Err(Error::Data(format!(
                            "target word {word:?} has no embedding"
                        )));
                    }
                    l.vectors.into_owned()
                }
            };
            let mut positions = Vec::with_capacity(vectors.len());
            for (j, v) in vectors.into_iter().enumerate() {
                positions.push(candidates.len());
                candidates.push(Candidate {
                    sense_index: j,
                    norm: norm(&v),
                    vector: v,
                });
            }
            word_index.push(positions);
        }
        Ok(TargetIndex {
            kind,
            dim: emb.dim(),
            vocab,
            candidates,
            word_index,
        })
    }

    pub fn kind(&self) -> TargetMode {
        self.kind
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn num_words(&self) -> usize {
        self.vocab.len()
    }

    pub fn num_candidates(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidate_vectors(&self, word: &str) -> Option<Vec<&[f64]>> {
        let id = self.vocab.id(word)?;
        Some(
            self.word_index[id]
                .iter()
                .map(|&c| self.candidates[c].vector.as_slice())
                .collect(),
        )
    }

    fn cosines(&self, query: &[f64]) -> Vec<f64> {
        assert_eq!(query.len(), self.dim, "query dim mismatch");
        let qn = norm(query);
        self.candidates
            .iter()
            .map(|c| {
                if qn < NORM_EPS || c.norm < NORM_EPS {
                    0.0
                } else {
                    dot(query, &c.vector) / (qn * c.norm)
                }
            })
            .collect()
    }

    /// Best (score, sense index) per word id.
    fn word_scores(&self, query: &[f64]) -> Vec<(f64, usize)> {
        let cos = self.cosines(query);
        self.word_index
            .iter()
            .map(|positions| {
                let mut best = (f64::NEG_INFINITY, 0);
                for &p in positions {
                    if cos[p] > best.0 {
                        best = (cos[p], self.candidates[p].sense_index);
                    }
                }
                best
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedEntry {
    pub word: String,
    pub sense_index: usize,
    pub score: f64,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub entries: Vec<RankedEntry>,
}

fn order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Words ordered by cosine similarity to `query`, truncated to `top_k`.
pub fn rank(query: &[f64], index: &TargetIndex, top_k: Option<usize>) -> RankedResult {
    assert!(index.num_words() > 0, "ranking against an empty index");
    let scores = index.word_scores(query);
    let mut ids: Vec<usize> = (0..scores.len()).collect();
    ids.sort_by(|&a, &b| order((a, scores[a].0), (b, scores[b].0)));
    let k = top_k.unwrap_or(ids.len()).min(ids.len());
    let entries = ids[..k]
        .iter()
        .enumerate()
        .map(|(r, &id)| RankedEntry {
            word: index.vocab.word(id).to_owned(),
            sense_index: scores[id].1,
            score: scores[id].0,
            rank: r + 1,
        })
        .collect();
    RankedResult { entries }
}

/// 1-based rank of `gold` in the deduplicated word ordering.
pub fn target_rank(query: &[f64], index: &TargetIndex, gold: &str) -> Result<usize> {
    let gold_id = index
        .vocab
        .id(gold)
        .ok_or_else(|| Error::Eval(format!("gold word {gold:?} is not in the target index")))?;
    let scores = index.word_scores(query);
    let g = scores[gold_id].0;
    let ahead = scores
        .iter()
        .enumerate()
        .filter(|(id, s)| order((*id, s.0), (gold_id, g)) == Ordering::Less)
        .count();
    Ok(ahead + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub median_rank: f64,
    pub acc_at_10: f64,
    pub acc_at_100: f64,
    pub mrr: f64,
    pub n: usize,
}

impl EvalReport {
    /// Median (midpoint convention for even counts), inclusive acc@10/@100
    /// and mean reciprocal rank.
    pub fn from_ranks(ranks: &[usize]) -> Result<Self> {
        if ranks.is_empty() {
            return Err(Error::Eval("no instances to evaluate".into()));
        }
        if ranks.contains(&0) {
            return Err(Error::Eval("ranks are 1-based".into()));
        }
        let n = ranks.len();
        let mut sorted = ranks.to_vec();
        sorted.sort_unstable();
        let median_rank = if n % 2 == 1 {
            sorted[n / 2] as f64
        } else {
            (sorted[n / 2 - 1] + sorted[n / 2]) as f64 / 2.0
        };
        let acc = |k: usize| ranks.iter().filter(|r| **r <= k).count() as f64 / n as f64;
        let mrr = ranks.iter().map(|r| 1.0 / *r as f64).sum::<f64>() / n as f64;
        Ok(EvalReport {
            median_rank,
            acc_at_10: acc(10),
            acc_at_100: acc(100),
            mrr,
            n,
        })
    }

    pub const HEADER: &'static str = "MR\tAcc@10\tAcc@100\tMRR\tn";

    /// Tab-separated values in `HEADER` order.
    pub fn row(&self) -> String {
        format!(
            "{}\t{:.3}\t{:.3}\t{:.3}\t{}",
            self.median_rank, self.acc_at_10, self.acc_at_100, self.mrr, self.n
        )
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>10} {:>8} {:>8} {:>8} {:>7}",
            "MR", "Acc@10", "Acc@100", "MRR", "n"
        )?;
        write!(
            f,
            "{:>10} {:>8.3} {:>8.3} {:>8.3} {:>7}",
            self.median_rank, self.acc_at_10, self.acc_at_100, self.mrr, self.n
        )
    }
}

/// Something with a description and a gold word.
pub trait Query: Sync {
    fn tokens(&self) -> &[String];
    fn gold(&self) -> &str;
}

/// Gold ranks for every query, in input order. Random-mode encoders draw
/// from a stream keyed by the query position so results are reproducible.
pub fn gold_ranks<Q: Query>(
    model: &Model,
    queries: &[Q],
    index: &TargetIndex,
    emb: &Embeddings,
) -> Result<Vec<usize>> {
    queries
        .par_iter()
        .enumerate()
        .map(|(i, q)| {
            let enc = model.encode_seeded(q.tokens(), emb, i as u64);
            target_rank(&enc.prediction, index, q.gold())
        })
        .collect()
}

pub fn evaluate<Q: Query>(
    model: &Model,
    queries: &[Q],
    index: &TargetIndex,
    emb: &Embeddings,
) -> Result<EvalReport> {
    if queries.is_empty() {
        return Err(Error::Eval("empty split".into()));
    }
    EvalReport::from_ranks(&gold_ranks(model, queries, index, emb)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{MultiSenseTable, SingleSenseTable};

    fn emb2() -> Embeddings {
        let mut ss = SingleSenseTable::new(2);
        ss.insert("a", vec![1.0, 0.0]).unwrap();
        ss.insert("b", vec![0.0, 1.0]).unwrap();
        ss.insert("w", vec![1.0, 1.0]).unwrap();
        let mut ms = MultiSenseTable::new(2, 20);
        ms.push_sense("w", vec![1.0, 0.0]).unwrap();
        ms.push_sense("w", vec![0.0, 1.0]).unwrap();
        Embeddings::new(ss, ms).unwrap()
    }

    #[test]
    fn orthogonal_candidates() {
        let emb = emb2();
        let idx = TargetIndex::build(TargetMode::SingleSense, ["a", "b"], &emb).unwrap();
        let r = rank(&[1.0, 0.0], &idx, None);
        assert_eq!(r.entries[0].word, "a");
        assert_eq!(r.entries[0].score, 1.0);
        assert_eq!(r.entries[1].word, "b");
        assert_eq!(r.entries[1].score, 0.0);
        assert_eq!(r.entries[1].rank, 2);
    }

    #[test]
    fn multi_sense_word_scored_by_best_sense() {
        let emb = emb2();
        let idx = TargetIndex::build(TargetMode::MultiSense, ["w", "a"], &emb).unwrap();
        assert_eq!(idx.num_candidates(), 3);
        let r = rank(&[0.0, 1.0], &idx, Some(1));
        assert_eq!(r.entries.len(), 1);
        assert_eq!(r.entries[0].word, "w");
        assert_eq!(r.entries[0].sense_index, 1);
        assert!((r.entries[0].score - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lower_id() {
        let emb = emb2();
        let idx = TargetIndex::build(TargetMode::SingleSense, ["a", "b"], &emb).unwrap();
        // Equal cosine to both.
        assert_eq!(target_rank(&[1.0, 1.0], &idx, "a").unwrap(), 1);
        assert_eq!(target_rank(&[1.0, 1.0], &idx, "b").unwrap(), 2);
        assert_eq!(target_rank(&[1.0, 0.0], &idx, "a").unwrap(), 1);
        assert!(matches!(
            target_rank(&[1.0, 0.0], &idx, "zzz"),
            Err(Error::Eval(_))
        ));
    }

    #[test]
    fn metric_contracts() {
        let r = EvalReport::from_ranks(&[1, 3, 7, 100]).unwrap();
        assert_eq!(r.median_rank, 5.0);
        let r = EvalReport::from_ranks(&[1, 2, 4]).unwrap();
        assert!((r.mrr - 7.0 / 12.0).abs() < 1e-12);
        let r = EvalReport::from_ranks(&[1, 10, 11]).unwrap();
        assert!((r.acc_at_10 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.acc_at_100 - 1.0).abs() < 1e-12);
        assert!(EvalReport::from_ranks(&[]).is_err());
    }

    #[test]
    fn report_row_is_tab_separated() {
        let r = EvalReport::from_ranks(&[1, 2]).unwrap();
        assert_eq!(r.row(), "1.5\t1.000\t1.000\t0.750\t2");
        assert_eq!(
            EvalReport::HEADER.split('\t').count(),
            r.row().split('\t').count()
        );
    }
}
