//! Single-sense and multi-sense embedding tables.
//!
//! Single-sense tables use the word2vec text format: a `<count> <dim>` header
//! followed by one `<word> <v1> ... <v_dim>` row per word. Multi-sense tables
//! use one tab-separated line per sense, `<word>\t<sense_index>\t<v1> ... <v_dim>`,
//! with sense indices contiguous and ascending per word. Sense order is kept
//! exactly as listed; the first sense is the dominant one.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::hashing::Fnv64;
use crate::vecops::normalize;

pub const DEFAULT_MAX_SENSES: usize = 20;

/// Dense, insertion-ordered word ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds `word` and returns its id, or `None` if it is already present.
    pub fn insert(&mut self, word: &str) -> Option<usize> {
        if self.index.contains_key(word) {
            return None;
        }
        let id = self.words.len();
        self.words.push(word.to_owned());
        self.index.insert(word.to_owned(), id);
        Some(id)
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

impl<'a> FromIterator<&'a str> for Vocabulary {
    fn from_iter<I: IntoIterator<Item = &'a str>>(iter: I) -> Self {
        let mut v = Vocabulary::new();
        for w in iter {
            v.insert(w);
        }
        v
    }
}

/// Names one sense vector of one word.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SenseRef {
    pub word: String,
    pub sense_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SingleSenseTable {
    dim: usize,
    vocab: Vocabulary,
    vectors: Vec<Vec<f64>>,
}

impl SingleSenseTable {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        SingleSenseTable {
            dim,
            vocab: Vocabulary::new(),
            vectors: Vec::new(),
        }
    }

    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        check_vector(self.dim, &vector).map_err(Error::Data)?;
        if self.vocab.insert(word).is_none() {
            return Err(Error::Data(format!("duplicate word {word:?}")));
        }
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.vocab.id(word).map(|id| self.vectors[id].as_slice())
    }

    fn get_vec(&self, word: &str) -> Option<&Vec<f64>> {
        self.vocab.id(word).map(|id| &self.vectors[id])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.vocab
            .words()
            .iter()
            .zip(&self.vectors)
            .map(|(w, v)| (w.as_str(), v.as_slice()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path)
    }

    /// Parses word2vec text format; `origin` is only used in error messages.
    pub fn read<R: BufRead>(reader: R, origin: &Path) -> Result<Self> {
        let mut lines = reader.lines();
        let header = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(origin, e))?,
            None => return Err(Error::format(origin, 1, "missing `<count> <dim>` header")),
        };
        let mut fields = header.split_whitespace();
        let (count, dim) = match (fields.next(), fields.next(), fields.next()) {
            (Some(c), Some(d), None) => match (c.parse::<usize>(), d.parse::<usize>()) {
                (Ok(c), Ok(d)) if d > 0 => (c, d),
                _ => {
                    return Err(Error::format(
                        origin,
                        1,
                        format!("malformed header {header:?}"),
                    ))
                }
            },
            _ => {
                return Err(Error::format(
                    origin,
                    1,
                    format!("malformed header {header:?}"),
                ))
            }
        };

        let mut table = SingleSenseTable::new(dim);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let word = parts.next().unwrap_or_default();
            let values = parse_values(parts, dim).map_err(|m| Error::format(origin, lineno, m))?;
            if table.vocab.contains(word) {
                return Err(Error::format(
                    origin,
                    lineno,
                    format!("duplicate word {word:?}"),
                ));
            }
            table
                .insert(word, values)
                .map_err(|e| Error::format(origin, lineno, e.to_string()))?;
        }
        if table.len() != count {
            return Err(Error::format(
                origin,
                0,
                format!("header declares {count} rows, found {}", table.len()),
            ));
        }
        Ok(table)
    }

    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{} {}", self.len(), self.dim)?;
        for (word, v) in self.iter() {
            write!(out, "{word}")?;
            for x in v {
                write!(out, " {x}")?;
            }
            writeln!(out)?;
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    /// Order-sensitive hash of every word and vector bit pattern.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write_u64(self.dim as u64);
        for (w, v) in self.iter() {
            h.write(w.as_bytes());
            v.iter().for_each(|x| h.write_u64(x.to_bits()));
        }
        h.finish()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiSenseTable {
    dim: usize,
    max_senses: usize,
    vocab: Vocabulary,
    senses: Vec<Vec<Vec<f64>>>,
    /// Number of senses listed in the source before truncation.
    listed: Vec<usize>,
}

impl MultiSenseTable {
    pub fn new(dim: usize, max_senses: usize) -> Self {
        assert!(dim > 0, "embedding dim must be positive");
        assert!(max_senses > 0, "max_senses must be positive");
        MultiSenseTable {
            dim,
            max_senses,
            vocab: Vocabulary::new(),
            senses: Vec::new(),
            listed: Vec::new(),
        }
    }

    /// Appends the next sense of `word`; senses past `max_senses` are counted
    /// but not stored.
    pub fn push_sense(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        check_vector(self.dim, &vector).map_err(Error::Data)?;
        let id = match self.vocab.id(word) {
            Some(id) => id,
            None => {
                self.vocab.insert(word);
                self.senses.push(Vec::new());
                self.listed.push(0);
                self.senses.len() - 1
            }
        };
        self.listed[id] += 1;
        if self.senses[id].len() < self.max_senses {
            self.senses[id].push(vector);
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_senses(&self) -> usize {
        self.max_senses
    }

    pub fn len(&self) -> usize {
        self.senses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senses.is_empty()
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn senses(&self, word: &str) -> Option<&[Vec<f64>]> {
        self.vocab.id(word).map(|id| self.senses[id].as_slice())
    }

    pub fn sense(&self, r: &SenseRef) -> Option<&[f64]> {
        self.senses(&r.word)
            .and_then(|s| s.get(r.sense_index))
            .map(Vec::as_slice)
    }

    pub fn sense_count(&self, word: &str) -> Option<usize> {
        self.vocab.id(word).map(|id| self.senses[id].len())
    }

    /// Whether `word` listed more senses than were retained.
    pub fn was_truncated(&self, word: &str) -> bool {
        self.vocab
            .id(word)
            .is_some_and(|id| self.listed[id] > self.senses[id].len())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[Vec<f64>])> {
        self.vocab
            .words()
            .iter()
            .zip(&self.senses)
            .map(|(w, s)| (w.as_str(), s.as_slice()))
    }

    pub fn load(path: impl AsRef<Path>, max_senses: usize) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file), path, max_senses)
    }

    pub fn read<R: BufRead>(reader: R, origin: &Path, max_senses: usize) -> Result<Self> {
        let mut table: Option<MultiSenseTable> = None;
        for (i, line) in reader.lines().enumerate() {
            let lineno = i + 1;
            let line = line.map_err(|e| Error::io(origin, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.splitn(3, '\t');
            let (word, idx, values) = match (cols.next(), cols.next(), cols.next()) {
                (Some(w), Some(i), Some(v)) if !w.is_empty() => (w, i, v),
                _ => {
                    return Err(Error::format(
                        origin,
                        lineno,
                        "expected `word<TAB>sense_index<TAB>values`",
                    ))
                }
            };
            let idx: usize = idx
                .trim()
                .parse()
                .map_err(|_| Error::format(origin, lineno, format!("bad sense index {idx:?}")))?;
            let dim = match &table {
                Some(t) => t.dim,
                None => values.split_whitespace().count(),
            };
            if dim == 0 {
                return Err(Error::format(origin, lineno, "empty vector"));
            }
            let values = parse_values(values.split_whitespace(), dim)
                .map_err(|m| Error::format(origin, lineno, m))?;
            let t = table.get_or_insert_with(|| MultiSenseTable::new(dim, max_senses));
            let expected = t.vocab.id(word).map_or(0, |id| t.listed[id]);
            if idx != expected {
                return Err(Error::format(
                    origin,
                    lineno,
                    format!("non-contiguous sense index {idx} for {word:?} (expected {expected})"),
                ));
            }
            t.push_sense(word, values)
                .map_err(|e| Error::format(origin, lineno, e.to_string()))?;
        }
        table.ok_or_else(|| Error::format(origin, 0, "no sense vectors"))
    }

    /// Writes the retained senses only.
    pub fn write<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (word, senses) in self.iter() {
            for (j, v) in senses.iter().enumerate() {
                write!(out, "{word}\t{j}\t")?;
                for (n, x) in v.iter().enumerate() {
                    if n > 0 {
                        write!(out, " ")?;
                    }
                    write!(out, "{x}")?;
                }
                writeln!(out)?;
            }
        }
        out.flush()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write(BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }

    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv64::default();
        h.write_u64(self.dim as u64);
        for (w, senses) in self.iter() {
            h.write(w.as_bytes());
            h.write_u64(senses.len() as u64);
            senses
                .iter()
                .flatten()
                .for_each(|x| h.write_u64(x.to_bits()));
        }
        h.finish()
    }
}

fn parse_values<'a>(
    parts: impl Iterator<Item = &'a str>,
    dim: usize,
) -> std::result::Result<Vec<f64>, String> {
    let mut values = Vec::with_capacity(dim);
    for p in parts {
        let x: f64 = p.parse().map_err(|_| format!("bad number {p:?}"))?;
        if !x.is_finite() {
            return Err(format!("non-finite component {p:?}"));
        }
        values.push(x);
    }
    if values.len() != dim {
        return Err(format!("row has {} values, expected {dim}", values.len()));
    }
    Ok(values)
}

fn check_vector(dim: usize, v: &[f64]) -> std::result::Result<(), String> {
    if v.len() != dim {
        return Err(format!("vector length {} != dim {dim}", v.len()));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err("vector has NaN or infinite components".into());
    }
    Ok(())
}

/// Where the vectors returned by [`lookup_senses`] came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SenseSource {
    MultiSense,
    SingleSenseFallback,
    Oov,
}

#[derive(Debug, Clone)]
pub struct SenseLookup<'a> {
    pub vectors: Cow<'a, [Vec<f64>]>,
    pub source: SenseSource,
}

impl SenseLookup<'_> {
    pub fn is_oov(&self) -> bool {
        self.source == SenseSource::Oov
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    /// Always false; kept for clippy's `len_without_is_empty`.
    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

/// Sense vectors for `word`: the multi-sense list if present, otherwise the
/// single-sense vector, otherwise one zero vector flagged as OOV. Never empty.
pub fn lookup_senses<'a>(
    word: &str,
    ms: &'a MultiSenseTable,
    ss: &'a SingleSenseTable,
) -> SenseLookup<'a> {
    debug_assert_eq!(ms.dim(), ss.dim());
    if let Some(senses) = ms.senses(word) {
        return SenseLookup {
            vectors: Cow::Borrowed(senses),
            source: SenseSource::MultiSense,
        };
    }
    if let Some(v) = ss.get_vec(word) {
        return SenseLookup {
            vectors: Cow::Borrowed(std::slice::from_ref(v)),
            source: SenseSource::SingleSenseFallback,
        };
    }
    SenseLookup {
        vectors: Cow::Owned(vec![vec![0.0; ss.dim()]]),
        source: SenseSource::Oov,
    }
}

/// Single-sense vector or the zero vector for OOV words.
pub fn single_or_zero<'a>(word: &str, ss: &'a SingleSenseTable) -> Cow<'a, [f64]> {
    match ss.get(word) {
        Some(v) => Cow::Borrowed(v),
        None => Cow::Owned(vec![0.0; ss.dim()]),
    }
}

/// Paired tables that share one dimensionality.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub single: SingleSenseTable,
    pub multi: MultiSenseTable,
}

impl Embeddings {
    pub fn new(single: SingleSenseTable, multi: MultiSenseTable) -> Result<Self> {
        if single.dim() != multi.dim() {
            return Err(Error::Data(format!(
                "single-sense dim {} != multi-sense dim {}",
                single.dim(),
                multi.dim()
            )));
        }
        Ok(Embeddings { single, multi })
    }

    pub fn load(
        single: impl AsRef<Path>,
        multi: impl AsRef<Path>,
        max_senses: usize,
    ) -> Result<Self> {
        Self::new(
            SingleSenseTable::load(single)?,
            MultiSenseTable::load(multi, max_senses)?,
        )
    }

    pub fn dim(&self) -> usize {
        self.single.dim()
    }

    pub fn lookup(&self, word: &str) -> SenseLookup<'_> {
        lookup_senses(word, &self.multi, &self.single)
    }

    pub fn fingerprint(&self) -> u64 {
        self.single.fingerprint() ^ self.multi.fingerprint().rotate_left(1)
    }
}

/// Deterministic synthetic tables: every word gets a single-sense vector and
/// 1..=max_k sense vectors, all uniform on [-1, 1]^dim then L2-normalized.
pub fn generate_fixture(seed: u64, n_words: usize, dim: usize, max_k: usize) -> Embeddings {
    assert!(n_words >= 1 && dim >= 1 && max_k >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = |rng: &mut ChaCha8Rng| {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        normalize(&mut v);
        v
    };
    let mut single = SingleSenseTable::new(dim);
    let mut multi = MultiSenseTable::new(dim, max_k.max(DEFAULT_MAX_SENSES));
    for i in 0..n_words {
        let word = format!("w{i}");
        single.insert(&word, unit(&mut rng)).expect("fresh word");
        let k = rng.random_range(1..=max_k);
        for _ in 0..k {
            multi
                .push_sense(&word, unit(&mut rng))
                .expect("valid vector");
        }
    }
    Embeddings { single, multi }
}

/// Writes a fixture as `single.txt` (word2vec text) and `multi.tsv`.
pub fn write_fixture(
    emb: &Embeddings,
    dir: impl AsRef<Path>,
) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let single = dir.join("single.txt");
    let multi = dir.join("multi.tsv");
    emb.single.save(&single)?;
    emb.multi.save(&multi)?;
    Ok((single, multi))
}
