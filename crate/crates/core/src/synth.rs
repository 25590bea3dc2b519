//! Seeded synthetic corpora: gloss files, an overfit set, and a polysemy
//! benchmark with known sense structure.

use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{GlossRow, Instance, Pos, Split, SplitSpec, Splits};
use crate::embeddings::{Embeddings, MultiSenseTable, SingleSenseTable, DEFAULT_MAX_SENSES};
use crate::error::{Error, Result};
use crate::hashing::derive_seed;
use crate::vecops::normalize;

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        if crate::vecops::norm(&v) > 1e-6 {
            normalize(&mut v);
            return v;
        }
    }
}

fn mix(a: &[f64], wa: f64, b: &[f64], wb: f64) -> Vec<f64> {
    let mut v: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
    normalize(&mut v);
    v
}

/// Gloss rows over `emb`'s vocabulary: each synset has 1-3 lemmas with valid
/// sense indices and a 3-8 word gloss. Roughly one synset in 50 also lists
/// a multi-word lemma.
pub fn synthetic_glosses(seed: u64, emb: &Embeddings, n_synsets: usize) -> Vec<GlossRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let words: Vec<&str> = emb
        .single
        .vocab()
        .words()
        .iter()
        .map(String::as_str)
        .collect();
    assert!(!words.is_empty());
    let poses = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];
    let mut rows = Vec::new();
    for s in 0..n_synsets {
        let synset_id = format!("syn{s:06}");
        let pos = poses[rng.random_range(0..poses.len())];
        let len = rng.random_range(3..=8);
        let gloss = (0..len)
            .map(|_| *words.choose(&mut rng).expect("nonempty"))
            .collect::<Vec<_>>()
            .join(" ");
        for _ in 0..rng.random_range(1..=3) {
            let lemma = *words.choose(&mut rng).expect("nonempty");
            let k = emb.multi.sense_count(lemma).unwrap_or(1).max(1);
            rows.push(GlossRow {
                lemma: lemma.to_owned(),
                synset_id: synset_id.clone(),
                pos,
                sense_index: rng.random_range(0..k),
                gloss: gloss.clone(),
            });
        }
        if rng.random_range(0..50) == 0 {
            rows.push(GlossRow {
                lemma: format!("{}_{}", words[0], words[words.len() - 1]),
                synset_id,
                pos,
                sense_index: 0,
                gloss,
            });
        }
    }
    rows
}

/// Writes rows in the 5-column gloss format.
pub fn write_glosses(rows: &[GlossRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out =
        std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| Error::io(path, e))?);
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.lemma,
            r.synset_id,
            r.pos.as_str(),
            r.sense_index,
            r.gloss
        )
        .map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// `n` instances over a `n`-word fixture vocabulary: instance `i` defines
/// `w{i}` (a random sense) with `len` random vocabulary words.
pub fn overfit_set(seed: u64, n: usize, dim: usize, len: usize) -> (Embeddings, Vec<Instance>) {
    let emb = crate::embeddings::generate_fixture(seed, n, dim, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
    let words: Vec<String> = emb.single.vocab().words().to_vec();
    let instances = (0..n)
        .map(|i| {
            let target = format!("w{i}");
            let k = emb
                .multi
                .sense_count(&target)
                .expect("fixture words have senses");
            Instance {
                tokens: (0..len)
                    .map(|_| words.choose(&mut rng).expect("nonempty").clone())
                    .collect(),
                target_sense: rng.random_range(0..k),
                target,
                synset_id: format!("ovf{i}"),
                pos: Pos::Noun,
            }
        })
        .collect();
    (emb, instances)
}

/// Shape of the polysemy benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolysemyConfig {
    /// Surface target words, each with two senses.
    pub n_words: usize,
    pub dim: usize,
    /// Descriptor tokens per target sense.
    pub pool_size: usize,
    /// Tokens of each pool that only appear in dev and test definitions.
    pub held_out: usize,
    pub defs_per_sense: usize,
    pub min_len: usize,
    pub max_len: usize,
    /// Scale of the random offset between a descriptor and its concept.
    pub token_noise: f64,
    /// Probability that a descriptor's true sense is stored first.
    pub first_is_true: f64,
    /// Weight of sense 0 in a word's single-sense vector.
    pub dominance: f64,
    pub seed: u64,
}

impl Default for PolysemyConfig {
    fn default() -> Self {
        PolysemyConfig {
            n_words: 50,
            dim: 16,
            pool_size: 10,
            held_out: 4,
            defs_per_sense: 8,
            min_len: 3,
            max_len: 4,
            token_noise: 1.0,
            first_is_true: 0.7,
            dominance: 0.7,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PolysemyBenchmark {
    pub embeddings: Embeddings,
    pub splits: Splits<Instance>,
    pub targets: Vec<String>,
}

/// Targets `t{i}` carry two unrelated unit senses; the single-sense vector
/// blends them by `dominance`. Each target sense owns a pool of descriptor
/// tokens. A descriptor has two stored senses: its concept (the target
/// sense plus noise) and a distractor near some other target sense. The
/// concept comes first with probability `first_is_true`, and the
/// descriptor's single-sense vector blends the two in stored order.
/// Definitions sample from one pool and are split by definition; training
/// definitions use the first `pool_size - held_out` tokens of the pool,
/// dev and test definitions the remaining ones.
pub fn polysemy_benchmark(cfg: &PolysemyConfig) -> PolysemyBenchmark {
    assert!(cfg.n_words >= 2 && cfg.min_len >= 1 && cfg.min_len <= cfg.max_len);
    assert!(cfg.held_out >= cfg.max_len && cfg.pool_size - cfg.held_out >= cfg.max_len);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let dim = cfg.dim;
    let mut single = SingleSenseTable::new(dim);
    let mut multi = MultiSenseTable::new(dim, DEFAULT_MAX_SENSES);

    let senses: Vec<[Vec<f64>; 2]> = (0..cfg.n_words)
        .map(|_| [unit(&mut rng, dim), unit(&mut rng, dim)])
        .collect();
    let mut targets = Vec::with_capacity(cfg.n_words);
    for (i, [d0, d1]) in senses.iter().enumerate() {
        let w = format!("t{i}");
        single
            .insert(&w, mix(d0, cfg.dominance, d1, 1.0 - cfg.dominance))
            .expect("fresh word");
        multi.push_sense(&w, d0.clone()).expect("valid");
        multi.push_sense(&w, d1.clone()).expect("valid");
        targets.push(w);
    }

    let near = |rng: &mut ChaCha8Rng, d: &[f64]| {
        let u = unit(rng, dim);
        let mut v: Vec<f64> = d
            .iter()
            .zip(&u)
            .map(|(a, b)| a + cfg.token_noise * b)
            .collect();
        normalize(&mut v);
        v
    };
    let mut pools: Vec<Vec<String>> = Vec::new();
    for (i, pair) in senses.iter().enumerate() {
        for (j, concept) in pair.iter().enumerate() {
            let mut pool = Vec::with_capacity(cfg.pool_size);
            for p in 0..cfg.pool_size {
                let tok = format!("d{i}_{j}_{p}");
                let truth = near(&mut rng, concept);
                let other = loop {
                    let o = rng.random_range(0..cfg.n_words);
                    if o != i {
                        break o;
                    }
                };
                let which = rng.random_range(0..2);
                let distractor = near(&mut rng, &senses[other][which]);
                let (s0, s1) = if rng.random_bool(cfg.first_is_true) {
                    (truth, distractor)
                } else {
                    (distractor, truth)
                };
                single
                    .insert(&tok, mix(&s0, cfg.dominance, &s1, 1.0 - cfg.dominance))
                    .expect("fresh");
                multi.push_sense(&tok, s0).expect("valid");
                multi.push_sense(&tok, s1).expect("valid");
                pool.push(tok);
            }
            pools.push(pool);
        }
    }

    let spec = SplitSpec { seed: cfg.seed };
    let mut splits = Splits::default();
    for (i, target) in targets.iter().enumerate() {
        for j in 0..2 {
            let pool = &pools[2 * i + j];
            for n in 0..cfg.defs_per_sense {
                let synset_id = format!("poly{i}_{j}_{n}");
                let split = spec.assign(&synset_id);
                let (seen, unseen) = pool.split_at(cfg.pool_size - cfg.held_out);
                let source = if split == Split::Train { seen } else { unseen };
                let len = rng.random_range(cfg.min_len..=cfg.max_len);
                let tokens: Vec<String> = source.choose_multiple(&mut rng, len).cloned().collect();
                let inst = Instance {
                    tokens,
                    target: target.clone(),
                    target_sense: j,
                    synset_id,
                    pos: Pos::Noun,
                };
                match split {
                    Split::Train => splits.train.push(inst),
                    Split::Dev => splits.dev.push(inst),
                    Split::Test => splits.test.push(inst),
                }
            }
        }
    }
    PolysemyBenchmark {
        embeddings: Embeddings { single, multi },
        splits,
        targets,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecops::{cosine, norm};

    #[test]
    fn benchmark_shape() {
        let cfg = PolysemyConfig::default();
        let b = polysemy_benchmark(&cfg);
        assert_eq!(b.targets.len(), 50);
        let n = b.splits.train.len() + b.splits.dev.len() + b.splits.test.len();
        assert_eq!(n, 50 * 2 * cfg.defs_per_sense);
        assert!(!b.splits.dev.is_empty() && !b.splits.test.is_empty());
        for inst in b.splits.iter() {
            assert!((cfg.min_len..=cfg.max_len).contains(&inst.tokens.len()));
            assert_eq!(b.embeddings.multi.sense_count(&inst.target), Some(2));
            for t in &inst.tokens {
                assert_eq!(b.embeddings.multi.sense_count(t), Some(2));
                assert!((norm(b.embeddings.single.get(t).unwrap()) - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn descriptors_carry_their_concept() {
        let b = polysemy_benchmark(&PolysemyConfig::default());
        let inst = &b.splits.train[0];
        let concept = &b.embeddings.multi.senses(&inst.target).unwrap()[inst.target_sense];
        for t in &inst.tokens {
            let best = b
                .embeddings
                .multi
                .senses(t)
                .unwrap()
                .iter()
                .map(|s| cosine(s, concept))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(best > 0.5, "{best}");
        }
    }

    #[test]
    fn deterministic() {
        let cfg = PolysemyConfig {
            seed: 3,
            ..PolysemyConfig::default()
        };
        let a = polysemy_benchmark(&cfg);
        let b = polysemy_benchmark(&cfg);
        assert_eq!(a.splits, b.splits);
        assert_eq!(a.embeddings.fingerprint(), b.embeddings.fingerprint());
    }

    #[test]
    fn glosses_parse_back() {
        let emb = crate::embeddings::generate_fixture(1, 30, 4, 3);
        let rows = synthetic_glosses(2, &emb, 200);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.tsv");
        write_glosses(&rows, &path).unwrap();
        let parsed = crate::dataset::parse_gloss_file(&path).unwrap();
        assert_eq!(parsed.rows.len() + parsed.rejected_multiword, rows.len());
        assert!(parsed
            .rows
            .iter()
            .all(|r| r.sense_index < emb.multi.sense_count(&r.lemma).unwrap()));
    }

    #[test]
    fn overfit_set_targets_are_distinct() {
        let (emb, inst) = overfit_set(4, 64, 16, 4);
        assert_eq!(inst.len(), 64);
        assert_eq!(emb.single.len(), 64);
        let mut t: Vec<_> = inst.iter().map(|i| i.target.as_str()).collect();
        t.dedup();
        assert_eq!(t.len(), 64);
    }
}
