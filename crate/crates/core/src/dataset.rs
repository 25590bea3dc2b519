//! Reverse-dictionary dataset construction from a gloss export.
//!
//! Input rows are `lemma \t synset_id \t pos \t sense_index \t gloss`. Rows
//! are split by a seeded hash of the synset id so that all glosses of one
//! synset land in the same split, then filtered against the embeddings.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embeddings::Embeddings;
use crate::error::{Error, Result};
use crate::hashing::Fnv64;
use crate::model::TargetMode;
use crate::ranking::Query;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl Pos {
    pub const ALL: [Pos; 4] = [Pos::Noun, Pos::Verb, Pos::Adj, Pos::Adv];

    pub fn as_str(self) -> &'static str {
        match self {
            Pos::Noun => "noun",
            Pos::Verb => "verb",
            Pos::Adj => "adj",
            Pos::Adv => "adv",
        }
    }
}

impl std::str::FromStr for Pos {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "noun" | "n" => Ok(Pos::Noun),
            "verb" | "v" => Ok(Pos::Verb),
            "adj" | "a" | "s" => Ok(Pos::Adj),
            "adv" | "r" => Ok(Pos::Adv),
            other => Err(format!("unknown part of speech {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlossRow {
    pub lemma: String,
    pub synset_id: String,
    pub pos: Pos,
    pub sense_index: usize,
    pub gloss: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Instance {
    pub tokens: Vec<String>,
    pub target: String,
    pub target_sense: usize,
    pub synset_id: String,
    pub pos: Pos,
}

impl Query for Instance {
    fn tokens(&self) -> &[String] {
        &self.tokens
    }

    fn gold(&self) -> &str {
        &self.target
    }
}

impl Instance {
    /// Target vector for `mode`: the single-sense vector, or the annotated
    /// sense (single-sense vector for words without multi-sense entries).
    pub fn target_vector<'a>(&self, mode: TargetMode, emb: &'a Embeddings) -> Option<&'a [f64]> {
        match mode {
            TargetMode::SingleSense => emb.single.get(&self.target),
            TargetMode::MultiSense => match emb.multi.senses(&self.target) {
                Some(senses) => senses.get(self.target_sense).map(Vec::as_slice),
                None => emb.single.get(&self.target),
            },
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedGlosses {
    pub rows: Vec<GlossRow>,
    pub rejected_multiword: usize,
}

/// Reads the gloss TSV. Multi-word lemmas (containing `_` or a space) are
/// skipped and counted.
pub fn parse_gloss_file(path: impl AsRef<Path>) -> Result<ParsedGlosses> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_glosses(BufReader::new(file), path)
}

pub fn parse_glosses<R: BufRead>(reader: R, origin: &Path) -> Result<ParsedGlosses> {
    let mut out = ParsedGlosses::default();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::format(
                origin,
                lineno,
                format!("expected 5 tab-separated columns, found {}", cols.len()),
            ));
        }
        let lemma = cols[0].trim();
        if lemma.is_empty() {
            return Err(Error::format(origin, lineno, "empty lemma"));
        }
        let gloss = cols[4].trim();
        if gloss.is_empty() {
            return Err(Error::format(origin, lineno, "empty gloss"));
        }
        let synset_id = cols[1].trim();
        if synset_id.is_empty() {
            return Err(Error::format(origin, lineno, "empty synset id"));
        }
        let pos: Pos = cols[2]
            .trim()
            .parse()
            .map_err(|m| Error::format(origin, lineno, m))?;
        let sense_index: usize = cols[3]
            .trim()
            .parse()
            .map_err(|_| Error::format(origin, lineno, format!("bad sense index {:?}", cols[3])))?;
        if lemma.contains(['_', ' ']) {
            out.rejected_multiword += 1;
            continue;
        }
        out.rows.push(GlossRow {
            lemma: lemma.to_owned(),
            synset_id: synset_id.to_owned(),
            pos,
            sense_index,
            gloss: gloss.to_owned(),
        });
    }
    if out.rejected_multiword > 0 {
        tracing::info!(count = out.rejected_multiword, "skipped multi-word lemmas");
    }
    Ok(out)
}

/// Lowercases, splits on whitespace, and splits every punctuation
/// character into its own token.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let mut word = String::new();
        for ch in chunk.chars() {
            if ch.is_alphanumeric() {
                word.extend(ch.to_lowercase());
            } else {
                if !word.is_empty() {
                    tokens.push(std::mem::take(&mut word));
                }
                tokens.push(ch.to_lowercase().collect());
            }
        }
        if !word.is_empty() {
            tokens.push(word);
        }
    }
    tokens
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    pub fn file_name(self) -> String {
        format!("{}.tsv", self.as_str())
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// 80/10/10 split by synset, keyed by a seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub seed: u64,
}

impl SplitSpec {
    /// Buckets 0-7 train, 8 dev, 9 test.
    pub fn assign(&self, synset_id: &str) -> Split {
        let mut h = Fnv64::default();
        h.write_u64(self.seed);
        h.write(synset_id.as_bytes());
        match h.finish() % 10 {
            0..=7 => Split::Train,
            8 => Split::Dev,
            _ => Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

impl<T> Default for Splits<T> {
    fn default() -> Self {
        Splits {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        }
    }
}

impl<T> Splits<T> {
    pub fn get(&self, split: Split) -> &[T] {
        match split {
            Split::Train => &self.train,
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        }
    }

    fn get_mut(&mut self, split: Split) -> &mut Vec<T> {
        match split {
            Split::Train => &mut self.train,
            Split::Dev => &mut self.dev,
            Split::Test => &mut self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.train.iter().chain(&self.dev).chain(&self.test)
    }
}

pub fn split_by_synset(rows: Vec<GlossRow>, spec: &SplitSpec) -> Splits<GlossRow> {
    let mut out = Splits {
        train: Vec::new(),
        dev: Vec::new(),
        test: Vec::new(),
    };
    for row in rows {
        out.get_mut(spec.assign(&row.synset_id)).push(row);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DropStats {
    /// Target word has no single-sense vector.
    pub target_not_in_vocab: usize,
    /// Description is empty after tokenization.
    pub empty_description: usize,
    /// The annotated sense was cut off by the multi-sense cap.
    pub sense_truncated: usize,
}

/// Keeps instances whose target has a single-sense vector and validates the
/// annotated sense index against the multi-sense table. Monosemous words
/// (or words absent from it) get sense 0.
pub fn filter_and_build(
    rows: &[GlossRow],
    emb: &Embeddings,
    stats: &mut DropStats,
) -> Result<Vec<Instance>> {
    let mut out = Vec::with_capacity(rows.len());
    for row in rows {
        if emb.single.get(&row.lemma).is_none() {
            stats.target_not_in_vocab += 1;
            continue;
        }
        let tokens = tokenize(&row.gloss);
        if tokens.is_empty() {
            stats.empty_description += 1;
            continue;
        }
        let k = emb.multi.sense_count(&row.lemma).unwrap_or(1);
        let target_sense = if k == 1 && !emb.multi.was_truncated(&row.lemma) {
            0
        } else if row.sense_index < k {
            row.sense_index
        } else if emb.multi.was_truncated(&row.lemma) {
            stats.sense_truncated += 1;
            continue;
        } else {
            return Err(Error::Data(format!(
                "sense index {} out of range for {:?} ({k} senses) in synset {}",
                row.sense_index, row.lemma, row.synset_id
            )));
        };
        out.push(Instance {
            tokens,
            target: row.lemma.clone(),
            target_sense,
            synset_id: row.synset_id.clone(),
            pos: row.pos,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    pub rows_read: usize,
    pub rejected_multiword: usize,
    pub dropped: BTreeMap<String, DropStats>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub splits: Splits<Instance>,
    pub manifest: Manifest,
}

impl Dataset {
    /// Every distinct target word, in train/dev/test order.
    pub fn target_words(&self) -> Vec<&str> {
        let mut seen = std::collections::HashSet::new();
        self.splits
            .iter()
            .map(|i| i.target.as_str())
            .filter(|w| seen.insert(*w))
            .collect()
    }
}

/// Parse → split → filter. A pure function of its inputs and the seed.
pub fn build_dataset(parsed: ParsedGlosses, emb: &Embeddings, seed: u64) -> Result<Dataset> {
    let rows_read = parsed.rows.len() + parsed.rejected_multiword;
    let rows = split_by_synset(parsed.rows, &SplitSpec { seed });
    let mut splits = Splits::default();
    let mut dropped = BTreeMap::new();
    for split in Split::ALL {
        let mut stats = DropStats::default();
        *splits.get_mut(split) = filter_and_build(rows.get(split), emb, &mut stats)?;
        dropped.insert(split.as_str().to_owned(), stats);
    }
    check_no_synset_leak(&splits)?;
    let manifest = Manifest {
        seed,
        train: splits.train.len(),
        dev: splits.dev.len(),
        test: splits.test.len(),
        rows_read,
        rejected_multiword: parsed.rejected_multiword,
        dropped,
    };
    Ok(Dataset { splits, manifest })
}

/// Fails if any synset id occurs in more than one split.
pub fn check_no_synset_leak(splits: &Splits<Instance>) -> Result<()> {
    let mut owner: HashMap<&str, Split> = HashMap::new();
    for split in Split::ALL {
        for inst in splits.get(split) {
            if let Some(prev) = owner.insert(&inst.synset_id, split) {
                if prev != split {
                    return Err(Error::Data(format!(
                        "synset {} appears in both {prev} and {split}",
                        inst.synset_id
                    )));
                }
            }
        }
    }
    Ok(())
}

fn instance_line(inst: &Instance) -> String {
    format!(
        "{}\t{}\t{}\t{}\t{}\n",
        inst.target,
        inst.target_sense,
        inst.pos.as_str(),
        inst.synset_id,
        inst.tokens.join(" ")
    )
}

pub fn write_instances<W: Write>(instances: &[Instance], mut out: W) -> std::io::Result<()> {
    for inst in instances {
        out.write_all(instance_line(inst).as_bytes())?;
    }
    out.flush()
}

/// Writes `train.tsv`, `dev.tsv`, `test.tsv` and `manifest.json` into `dir`.
pub fn write_dataset(ds: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for split in Split::ALL {
        let path = dir.join(split.file_name());
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        write_instances(ds.splits.get(split), BufWriter::new(file))
            .map_err(|e| Error::io(&path, e))?;
    }
    let path = dir.join("manifest.json");
    let mut json = serde_json::to_string_pretty(&ds.manifest).expect("manifest serializes");
    json.push('\n');
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

pub fn read_instances<R: BufRead>(reader: R, origin: &Path) -> Result<Vec<Instance>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 5 {
            return Err(Error::format(
                origin,
                lineno,
                "expected 5 tab-separated columns",
            ));
        }
        let target_sense = cols[1]
            .parse()
            .map_err(|_| Error::format(origin, lineno, "bad target sense"))?;
        let pos = cols[2]
            .parse()
            .map_err(|m| Error::format(origin, lineno, m))?;
        let tokens: Vec<String> = cols[4]
            .split(' ')
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect();
        if tokens.is_empty() {
            return Err(Error::format(origin, lineno, "empty description"));
        }
        out.push(Instance {
            tokens,
            target: cols[0].to_owned(),
            target_sense,
            synset_id: cols[3].to_owned(),
            pos,
        });
    }
    Ok(out)
}

pub fn load_split(dir: impl AsRef<Path>, split: Split) -> Result<Vec<Instance>> {
    let path: PathBuf = dir.as_ref().join(split.file_name());
    let file = File::open(&path).map_err(|e| Error::io(&path, e))?;
    read_instances(BufReader::new(file), &path)
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Splits<Instance>> {
    let dir = dir.as_ref();
    Ok(Splits {
        train: load_split(dir, Split::Train)?,
        dev: load_split(dir, Split::Dev)?,
        test: load_split(dir, Split::Test)?,
    })
}

/// Number of senses a word has: multi-sense count, 1 for single-sense-only
/// words, 0 for OOV.
pub fn sense_count(word: &str, emb: &Embeddings) -> usize {
    emb.multi
        .sense_count(word)
        .unwrap_or_else(|| usize::from(emb.single.get(word).is_some()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistogramOf {
    Targets,
    DescriptionWords,
}

/// Occurrence counts keyed by number of senses (0 = out of vocabulary).
pub fn sense_histogram(
    instances: &[Instance],
    emb: &Embeddings,
    which: HistogramOf,
) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for inst in instances {
        match which {
            HistogramOf::Targets => *hist.entry(sense_count(&inst.target, emb)).or_default() += 1,
            HistogramOf::DescriptionWords => {
                for t in &inst.tokens {
                    *hist.entry(sense_count(t, emb)).or_default() += 1;
                }
            }
        }
    }
    hist
}

/// Target-word POS shares and, per POS, shares of the sense-count bands
/// 1 / 2 / 3+. All values are percentages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosStats {
    pub pos_share: BTreeMap<Pos, f64>,
    pub bands: BTreeMap<Pos, [f64; 3]>,
    pub n: usize,
}

pub fn pos_stats(instances: &[Instance], emb: &Embeddings) -> PosStats {
    let mut per_pos: BTreeMap<Pos, [usize; 3]> = BTreeMap::new();
    for inst in instances {
        let k = sense_count(&inst.target, emb).max(1);
        let band = (k - 1).min(2);
        per_pos.entry(inst.pos).or_default()[band] += 1;
    }
    let n = instances.len();
    let pct = |a: usize, b: usize| {
        if b == 0 {
            0.0
        } else {
            100.0 * a as f64 / b as f64
        }
    };
    let pos_share = per_pos
        .iter()
        .map(|(p, c)| (*p, pct(c.iter().sum(), n)))
        .collect();
    let bands = per_pos
        .iter()
        .map(|(p, c)| {
            let total: usize = c.iter().sum();
            (*p, [pct(c[0], total), pct(c[1], total), pct(c[2], total)])
        })
        .collect();
    PosStats {
        pos_share,
        bands,
        n,
    }
}

impl fmt::Display for PosStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<28}", "")?;
        for p in Pos::ALL {
            write!(f, "{:>7}", p.as_str())?;
        }
        writeln!(f)?;
        write!(f, "{:<28}", "target words by POS")?;
        for p in Pos::ALL {
            write!(
                f,
                "{:>6.0}%",
                self.pos_share.get(&p).copied().unwrap_or(0.0)
            )?;
        }
        writeln!(f)?;
        for (b, label) in [
            "target word with 1 sense",
            "target word with 2 senses",
            "target word with 3+ senses",
        ]
        .iter()
        .enumerate()
        {
            write!(f, "{label:<28}")?;
            for p in Pos::ALL {
                write!(f, "{:>6.0}%", self.bands.get(&p).map_or(0.0, |x| x[b]))?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
