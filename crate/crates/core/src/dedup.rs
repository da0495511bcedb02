//! Levenshtein similarity and train/eval leakage filtering.
//!
//! A training sentence is dropped when it is too similar to any sentence of
//! an evaluation split. Similarity is the Levenshtein ratio
//! `(|a| + |b| - d2) / (|a| + |b|)`, where `d2` is the edit distance with
//! substitutions charged 2 (equivalently `|a| + |b| - 2 * LCS`).

use std::collections::HashMap;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DedupError {
    #[error("gamma must lie in [0, 1], got {0}")]
    GammaOutOfRange(f64),
    #[error("no evaluation sets given")]
    NoEvalSets,
    #[error("evaluation set `{0}` is empty")]
    EmptyEvalSet(String),
}

/// Units the ratio is computed over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Unit {
    /// Unicode scalar values of the raw line.
    #[default]
    Char,
    /// Whitespace-separated words.
    Word,
}

impl FromStr for Unit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "char" => Ok(Unit::Char),
            "word" => Ok(Unit::Word),
            _ => Err(format!("unknown unit `{s}` (expected `char` or `word`)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DedupConfig {
    gamma: f64,
    pub unit: Unit,
}

impl Default for DedupConfig {
    fn default() -> Self {
        DedupConfig { gamma: 0.70, unit: Unit::Char }
    }
}

impl DedupConfig {
    pub fn new(gamma: f64) -> Result<Self, DedupError> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(DedupError::GammaOutOfRange(gamma));
        }
        Ok(DedupConfig { gamma, unit: Unit::Char })
    }

    pub fn with_unit(mut self, unit: Unit) -> Self {
        self.unit = unit;
        self
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// The most similar evaluation sentence for a removed training sentence.
/// Line numbers are 1-based.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityHit {
    pub train_line: usize,
    pub eval_split: String,
    pub eval_line: usize,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    pub name: String,
    pub sentences: Vec<String>,
}

impl EvalSet {
    pub fn new(name: impl Into<String>, sentences: Vec<String>) -> Self {
        EvalSet { name: name.into(), sentences }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LeakageReport {
    pub kept: Vec<String>,
    pub removed: Vec<SimilarityHit>,
}

/// Unit-cost edit distance between two sequences.
pub fn levenshtein_seq<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Length of the longest common subsequence.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit distance with insertions and deletions costing 1 and substitutions 2.
pub fn indel_distance_seq<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    a.len() + b.len() - 2 * lcs_len(a, b)
}

fn ratio_from(total: usize, dist2: usize) -> f64 {
    if total == 0 {
        1.0
    } else {
        (total - dist2) as f64 / total as f64
    }
}

pub fn lev_ratio_seq<T: PartialEq>(a: &[T], b: &[T]) -> f64 {
    ratio_from(a.len() + b.len(), indel_distance_seq(a, b))
}

/// Character-level edit distance.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    levenshtein_seq(&a, &b)
}

/// Character-level Levenshtein ratio in `[0, 1]`; two empty strings score 1.
pub fn lev_ratio(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    lev_ratio_seq(&a, &b)
}

/// A sentence mapped to integer units, with a sorted copy for the
/// multiset bound.
struct Encoded {
    units: Vec<u32>,
    sorted: Vec<u32>,
}

struct Encoder {
    unit: Unit,
    words: HashMap<String, u32>,
}

impl Encoder {
    fn encode(&mut self, s: &str) -> Encoded {
        let units: Vec<u32> = match self.unit {
            Unit::Char => s.chars().map(u32::from).collect(),
            Unit::Word => s
                .split_whitespace()
                .map(|w| {
                    let next = self.words.len() as u32;
                    *self.words.entry(w.to_string()).or_insert(next)
                })
                .collect(),
        };
        let mut sorted = units.clone();
        sorted.sort_unstable();
        Encoded { units, sorted }
    }
}

/// Size of the multiset intersection of two sorted sequences, an upper bound
/// on their LCS.
fn common_units(a: &[u32], b: &[u32]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

/// Removes every training sentence whose best ratio against any evaluation
/// sentence is strictly greater than `gamma`.
///
/// Pairs whose length gap or unit histograms already cap the ratio at or
/// below `gamma` are skipped; the cap uses the same arithmetic as the ratio
/// itself, so skipping never changes the result. Runs on the current rayon
/// pool; output order always follows the input.
pub fn filter_leakage(
    train: &[String],
    evals: &[EvalSet],
    cfg: &DedupConfig,
) -> Result<LeakageReport, DedupError> {
    if evals.is_empty() {
        return Err(DedupError::NoEvalSets);
    }
    if let Some(empty) = evals.iter().find(|e| e.sentences.is_empty()) {
        return Err(DedupError::EmptyEvalSet(empty.name.clone()));
    }

    let mut encoder = Encoder { unit: cfg.unit, words: HashMap::new() };
    let eval_enc: Vec<Vec<Encoded>> = evals
        .iter()
        .map(|e| e.sentences.iter().map(|s| encoder.encode(s)).collect())
        .collect();
    let train_enc: Vec<Encoded> = train.iter().map(|s| encoder.encode(s)).collect();
    let gamma = cfg.gamma;

    let best: Vec<Option<SimilarityHit>> = train_enc
        .par_iter()
        .enumerate()
        .map(|(t, a)| {
            let mut best: Option<(f64, usize, usize)> = None;
            'outer: for (split, sentences) in eval_enc.iter().enumerate() {
                for (line, b) in sentences.iter().enumerate() {
                    let total = a.units.len() + b.units.len();
                    let floor = best.map_or(gamma, |(r, _, _)| r.max(gamma));
                    let length_cap = ratio_from(total, total - 2 * a.units.len().min(b.units.len()));
                    if length_cap <= floor {
                        continue;
                    }
                    let multiset_cap = ratio_from(total, total - 2 * common_units(&a.sorted, &b.sorted));
                    if multiset_cap <= floor {
                        continue;
                    }
                    let ratio = lev_ratio_seq(&a.units, &b.units);
                    if ratio > floor {
                        best = Some((ratio, split, line));
                        if ratio >= 1.0 {
                            break 'outer;
                        }
                    }
                }
            }
            best.map(|(ratio, split, line)| SimilarityHit {
                train_line: t + 1,
                eval_split: evals[split].name.clone(),
                eval_line: line + 1,
                ratio,
            })
        })
        .collect();

    let mut report = LeakageReport::default();
    for (sentence, hit) in train.iter().zip(best) {
        match hit {
            Some(hit) => report.removed.push(hit),
            None => report.kept.push(sentence.clone()),
        }
    }
    Ok(report)
}

/// Writes hits as TSV with a header row; ratios use six decimals.
pub fn write_hits_tsv<W: Write>(hits: &[SimilarityHit], mut out: W) -> io::Result<()> {
    writeln!(out, "train_line\teval_split\teval_line\tratio")?;
    for h in hits {
        writeln!(out, "{}\t{}\t{}\t{:.6}", h.train_line, h.eval_split, h.eval_line, h.ratio)?;
    }
    Ok(())
}
