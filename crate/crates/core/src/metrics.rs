//! Evaluation metrics: MaxMatch (M²) scoring of corrections and
//! precision/recall/F for sentence-level error recognition.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::edits::{Edit, EditSet, M2Record};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfUnitRange { name: &'static str, value: f64 },
    #[error("beta must be positive, got {0}")]
    BadBeta(f64),
    #[error("length mismatch: {left} {left_name} vs {right} {right_name}")]
    LengthMismatch { left_name: &'static str, left: usize, right_name: &'static str, right: usize },
    #[error("sentence {index}: source does not match its M2 record")]
    SourceMismatch { index: usize },
    #[error("sentence {index}: M2 record has no references")]
    NoReferences { index: usize },
    #[error("unknown label `{0}` (expected `correct` or `incorrect`)")]
    UnknownLabel(String),
    #[error("unknown error type `{0}`")]
    UnknownType(String),
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
pub fn f_beta(precision: f64, recall: f64, beta: f64) -> Result<f64, MetricsError> {
    if !(0.0..=1.0).contains(&precision) {
        return Err(MetricsError::OutOfUnitRange { name: "precision", value: precision });
    }
    if !(0.0..=1.0).contains(&recall) {
        return Err(MetricsError::OutOfUnitRange { name: "recall", value: recall });
    }
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(MetricsError::BadBeta(beta));
    }
    Ok(f_beta_unchecked(precision, recall, beta))
}

fn f_beta_unchecked(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let denom = b2 * p + r;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / denom
    }
}

/// Precision, recall and F from edit counts. With nothing proposed the
/// precision is 1, with nothing to find the recall is 1.
pub fn prf(tp: usize, fp: usize, fn_: usize, beta: f64) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 1.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 1.0 } else { tp as f64 / (tp + fn_) as f64 };
    (p, r, f_beta_unchecked(p, r, beta))
}

/// How one reference is picked per sentence when several annotators exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RefSelection {
    /// Maximise the corpus F so far, sentence by sentence in input order.
    #[default]
    Cumulative,
    /// Maximise the sentence's own F; independent of corpus order.
    PerSentence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct M2Config {
    pub beta: f64,
    pub max_unchanged: usize,
    pub selection: RefSelection,
}

impl Default for M2Config {
    fn default() -> Self {
        M2Config { beta: 0.5, max_unchanged: 2, selection: RefSelection::Cumulative }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceScore {
    pub id: usize,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub annotator: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_beta: f64,
    pub beta: f64,
    pub per_sentence: Vec<SentenceScore>,
}

impl ScoreReport {
    /// `P/R/F0.5 = 54.3/15.4/36.1` style summary, percentages to one decimal.
    pub fn summary_line(&self) -> String {
        format!(
            "P/R/F{} = {:.1}/{:.1}/{:.1}",
            self.beta,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f_beta
        )
    }
}

/// Counts for one hypothesis against one reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EditCounts {
    pub tp: usize,
    pub proposed: usize,
    pub gold: usize,
}

impl EditCounts {
    pub fn fp(&self) -> usize {
        self.proposed - self.tp
    }

    pub fn fn_(&self) -> usize {
        self.gold - self.tp
    }
}

/// Alignment lattice between a source and a hypothesis.
///
/// Nodes are cells `(i, j)` of the edit-distance table lying on at least one
/// minimum-cost alignment. Edges are the atomic steps of those alignments
/// plus every compound edit obtained by merging consecutive steps along an
/// optimal sub-path that keeps at most `max_unchanged` tokens unchanged.
/// A path from `(0, 0)` to `(n, m)` is one way of reading the hypothesis
/// as a set of edits.
#[derive(Debug, Clone)]
pub struct EditLattice {
    nodes: Vec<(usize, usize)>,
    /// `(from, to, edit)`, node indices into `nodes`; `edit` is `None` for a
    /// single unchanged token.
    edges: Vec<(usize, usize, Option<Edit>)>,
}

impl EditLattice {
    pub fn build<S: AsRef<str>, H: AsRef<str>>(source: &[S], hyp: &[H], max_unchanged: usize) -> Self {
        let (n, m) = (source.len(), hyp.len());
        let eq = |i: usize, j: usize| source[i].as_ref() == hyp[j].as_ref();

        let mut fwd = vec![vec![0usize; m + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=m {
                fwd[i][j] = match (i, j) {
                    (0, _) => j,
                    (_, 0) => i,
                    _ => (fwd[i - 1][j - 1] + usize::from(!eq(i - 1, j - 1)))
                        .min(fwd[i - 1][j] + 1)
                        .min(fwd[i][j - 1] + 1),
                };
            }
        }
        let mut bwd = vec![vec![0usize; m + 1]; n + 1];
        for i in (0..=n).rev() {
            for j in (0..=m).rev() {
                bwd[i][j] = match (i == n, j == m) {
                    (true, _) => m - j,
                    (_, true) => n - i,
                    _ => (bwd[i + 1][j + 1] + usize::from(!eq(i, j)))
                        .min(bwd[i + 1][j] + 1)
                        .min(bwd[i][j + 1] + 1),
                };
            }
        }
        let total = fwd[n][m];
        let on_path = |i: usize, j: usize| fwd[i][j] + bwd[i][j] == total;

        // Lexicographic (i, j) order is topological for the lattice.
        let mut id = vec![vec![usize::MAX; m + 1]; n + 1];
        let mut nodes = Vec::new();
        for i in 0..=n {
            for j in 0..=m {
                if on_path(i, j) {
                    id[i][j] = nodes.len();
                    nodes.push((i, j));
                }
            }
        }

        // Optimal atomic steps: (to node, is unchanged token).
        let mut steps: Vec<Vec<(usize, bool)>> = vec![Vec::new(); nodes.len()];
        for (u, &(i, j)) in nodes.iter().enumerate() {
            let mut push = |ti: usize, tj: usize, cost: usize, keep: bool| {
                if ti <= n && tj <= m && on_path(ti, tj) && fwd[i][j] + cost == fwd[ti][tj] {
                    steps[u].push((id[ti][tj], keep));
                }
            };
            if i < n && j < m {
                let same = eq(i, j);
                push(i + 1, j + 1, usize::from(!same), same);
            }
            push(i + 1, j, 1, false);
            push(i, j + 1, 1, false);
        }

        let mut edges = Vec::new();
        for u in 0..nodes.len() {
            // Fewest unchanged tokens on any optimal sub-path u -> v.
            let mut kept = vec![usize::MAX; nodes.len()];
            kept[u] = 0;
            for v in u..nodes.len() {
                if kept[v] == usize::MAX || kept[v] > max_unchanged {
                    continue;
                }
                for &(w, keep) in &steps[v] {
                    let k = kept[v] + usize::from(keep);
                    if k < kept[w] {
                        kept[w] = k;
                    }
                }
            }
            let (ui, uj) = nodes[u];
            for &(w, keep) in &steps[u] {
                if keep {
                    edges.push((u, w, None));
                }
            }
            for v in u + 1..nodes.len() {
                let (vi, vj) = nodes[v];
                if kept[v] > max_unchanged || fwd[vi][vj] == fwd[ui][uj] {
                    continue;
                }
                let edit = Edit {
                    start: ui,
                    end: vi,
                    replacement: hyp[uj..vj].iter().map(|t| t.as_ref().to_string()).collect(),
                    type_tag: None,
                };
                edges.push((u, v, Some(edit)));
            }
        }
        edges.sort_by_key(|&(u, v, _)| (u, v));
        EditLattice { nodes, edges }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = ((usize, usize), (usize, usize), Option<&Edit>)> + '_ {
        self.edges.iter().map(|(u, v, e)| (self.nodes[*u], self.nodes[*v], e.as_ref()))
    }

    /// Best reading of the hypothesis against `gold`: the most true
    /// positives, then the fewest proposed edits.
    ///
    /// A gold edit counts once even if the path proposes it twice, which can
    /// only happen through consecutive insertions at the same offset.
    pub fn best_counts(&self, gold: &EditSet) -> EditCounts {
        let matches = |e: &Edit| gold.edits().iter().any(|g| g.same_change(e));
        // Score is (tp, -proposed); state 1 means "inside an insertion run at
        // this offset that already hit the gold insertion there".
        let mut best: Vec<[Option<(usize, usize)>; 2]> = vec![[None, None]; self.nodes.len()];
        best[0][0] = Some((0, 0));
        let better = |a: (usize, usize), b: Option<(usize, usize)>| match b {
            None => true,
            Some(b) => a.0 > b.0 || (a.0 == b.0 && a.1 < b.1),
        };
        for &(u, v, ref edit) in &self.edges {
            for flag in 0..2 {
                let Some((tp, proposed)) = best[u][flag] else { continue };
                let (next, state) = match edit {
                    None => ((tp, proposed), 0),
                    Some(e) => {
                        let hit = matches(e);
                        if e.is_insertion() {
                            let gain = usize::from(hit && flag == 0);
                            ((tp + gain, proposed + 1), usize::from(hit || flag == 1))
                        } else {
                            ((tp + usize::from(hit), proposed + 1), 0)
                        }
                    }
                };
                if better(next, best[v][state]) {
                    best[v][state] = Some(next);
                }
            }
        }
        let last = self.nodes.len() - 1;
        let (tp, proposed) = [best[last][0], best[last][1]]
            .into_iter()
            .flatten()
            .fold(None, |acc, x| if better(x, acc) { Some(x) } else { acc })
            .expect("the end node is reachable");
        EditCounts { tp, proposed, gold: gold.len() }
    }
}

/// MaxMatch scoring of tokenized hypotheses against M2 references.
pub fn m2_score<S: AsRef<str> + Sync, H: AsRef<str> + Sync>(
    sources: &[Vec<S>],
    hypotheses: &[Vec<H>],
    references: &[M2Record],
    cfg: &M2Config,
) -> Result<ScoreReport, MetricsError> {
    if sources.len() != hypotheses.len() {
        return Err(MetricsError::LengthMismatch {
            left_name: "sources",
            left: sources.len(),
            right_name: "hypotheses",
            right: hypotheses.len(),
        });
    }
    if sources.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            left_name: "sources",
            left: sources.len(),
            right_name: "M2 records",
            right: references.len(),
        });
    }
    if !(cfg.beta > 0.0 && cfg.beta.is_finite()) {
        return Err(MetricsError::BadBeta(cfg.beta));
    }

    for (index, (src, record)) in sources.iter().zip(references).enumerate() {
        let same_source = src.len() == record.source.len()
            && src.iter().zip(&record.source).all(|(a, b)| a.as_ref() == b);
        if !same_source {
            return Err(MetricsError::SourceMismatch { index });
        }
        if record.references.is_empty() {
            return Err(MetricsError::NoReferences { index });
        }
    }

    // Lattices are independent per sentence; reference choice is a fold in
    // corpus order.
    let candidates: Vec<Vec<(usize, EditCounts)>> = sources
        .par_iter()
        .zip(hypotheses)
        .zip(references)
        .map(|((src, hyp), record)| {
            let lattice = EditLattice::build(src, hyp, cfg.max_unchanged);
            let mut refs: Vec<&EditSet> = record.references.iter().collect();
            refs.sort_by_key(|r| r.annotator);
            refs.into_iter().map(|r| (r.annotator, lattice.best_counts(r))).collect()
        })
        .collect();

    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    let mut per_sentence = Vec::with_capacity(sources.len());
    for (index, options) in candidates.into_iter().enumerate() {
        let mut chosen: Option<(f64, EditCounts, usize)> = None;
        for (annotator, c) in options {
            let f = match cfg.selection {
                RefSelection::Cumulative => prf(tp + c.tp, fp + c.fp(), fn_ + c.fn_(), cfg.beta).2,
                RefSelection::PerSentence => prf(c.tp, c.fp(), c.fn_(), cfg.beta).2,
            };
            if chosen.is_none_or(|(best, _, _)| f > best) {
                chosen = Some((f, c, annotator));
            }
        }
        let (_, c, annotator) = chosen.expect("at least one reference");
        tp += c.tp;
        fp += c.fp();
        fn_ += c.fn_();
        per_sentence.push(SentenceScore { id: index, tp: c.tp, fp: c.fp(), fn_: c.fn_(), annotator });
    }

    let (precision, recall, f) = prf(tp, fp, fn_, cfg.beta);
    Ok(ScoreReport { tp, fp, fn_, precision, recall, f_beta: f, beta: cfg.beta, per_sentence })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SentenceLabel {
    Correct,
    Incorrect,
}

impl FromStr for SentenceLabel {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "correct" => Ok(SentenceLabel::Correct),
            "incorrect" => Ok(SentenceLabel::Incorrect),
            other => Err(MetricsError::UnknownLabel(other.to_string())),
        }
    }
}

/// The seven semantic error types of the recognition corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorType {
    WordOrder,
    Missing,
    Collocation,
    Redundant,
    Confusion,
    Fuzziness,
    Illogic,
}

impl ErrorType {
    pub const ALL: [ErrorType; 7] = [
        ErrorType::WordOrder,
        ErrorType::Missing,
        ErrorType::Collocation,
        ErrorType::Redundant,
        ErrorType::Confusion,
        ErrorType::Fuzziness,
        ErrorType::Illogic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::WordOrder => "word order",
            ErrorType::Missing => "missing",
            ErrorType::Collocation => "collocation",
            ErrorType::Redundant => "redundant",
            ErrorType::Confusion => "confusion",
            ErrorType::Fuzziness => "fuzziness",
            ErrorType::Illogic => "illogic",
        }
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ErrorType {
    type Err = MetricsError;

    /// Case-insensitive; spaces, hyphens and underscores are interchangeable.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .trim()
            .chars()
            .map(|c| if c == '_' || c == '-' { ' ' } else { c.to_ascii_lowercase() })
            .collect();
        ErrorType::ALL
            .into_iter()
            .find(|t| t.name() == key)
            .ok_or_else(|| MetricsError::UnknownType(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TypeRecall {
    pub gold: usize,
    pub detected: usize,
    pub recall: f64,
}

/// Metrics for the `incorrect` (positive) class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClsReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub per_type: Option<BTreeMap<ErrorType, TypeRecall>>,
}

/// Precision, recall and F1 of the `incorrect` class. A ratio with an empty
/// denominator is reported as 0.
pub fn cls_metrics(preds: &[SentenceLabel], golds: &[SentenceLabel]) -> Result<ClsReport, MetricsError> {
    if preds.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            left_name: "predictions",
            left: preds.len(),
            right_name: "gold labels",
            right: golds.len(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, g) in preds.iter().zip(golds) {
        match (p, g) {
            (SentenceLabel::Incorrect, SentenceLabel::Incorrect) => tp += 1,
            (SentenceLabel::Incorrect, SentenceLabel::Correct) => fp += 1,
            (SentenceLabel::Correct, SentenceLabel::Incorrect) => fn_ += 1,
            (SentenceLabel::Correct, SentenceLabel::Correct) => tn += 1,
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = f_beta_unchecked(precision, recall, 1.0);
    Ok(ClsReport { tp, fp, fn_, tn, precision, recall, f1, per_type: None })
}

/// [`cls_metrics`] plus recall for each error type among the gold-incorrect
/// sentences carrying that type. Types without any such sentence are left
/// out of the map rather than reported as 0.
pub fn per_type_recall(
    preds: &[SentenceLabel],
    golds: &[SentenceLabel],
    types: &[Option<ErrorType>],
) -> Result<ClsReport, MetricsError> {
    if types.len() != golds.len() {
        return Err(MetricsError::LengthMismatch {
            left_name: "type tags",
            left: types.len(),
            right_name: "gold labels",
            right: golds.len(),
        });
    }
    let mut report = cls_metrics(preds, golds)?;
    let mut map: BTreeMap<ErrorType, TypeRecall> = BTreeMap::new();
    for ((p, g), t) in preds.iter().zip(golds).zip(types) {
        let (Some(t), SentenceLabel::Incorrect) = (t, g) else { continue };
        let entry = map.entry(*t).or_insert(TypeRecall { gold: 0, detected: 0, recall: 0.0 });
        entry.gold += 1;
        if *p == SentenceLabel::Incorrect {
            entry.detected += 1;
        }
    }
    for v in map.values_mut() {
        v.recall = v.detected as f64 / v.gold as f64;
    }
    report.per_type = Some(map);
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edits::{read_m2, tokenize, Granularity};
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        tokenize(s, Granularity::Token)
    }

    #[test]
    fn f_beta_examples() {
        for x in [0.0, 0.3, 0.77, 1.0] {
            for beta in [0.5, 1.0, 2.0] {
                assert!((f_beta(x, x, beta).unwrap() - x).abs() < 1e-12);
            }
        }
        assert!((f_beta(0.543, 0.154, 0.5).unwrap() - 0.361).abs() < 0.0005);
        // The published P/R round to 49.8 here, not 49.7.
        assert!((f_beta(0.538, 0.383, 0.5).unwrap() - 0.497715).abs() < 1e-6);
        assert_eq!(f_beta(0.0, 0.0, 0.5).unwrap(), 0.0);
        assert!(f_beta(1.2, 0.5, 0.5).is_err());
        assert!(f_beta(0.5, -0.1, 0.5).is_err());
        assert!(f_beta(0.5, 0.5, 0.0).is_err());
        assert!(f_beta(f64::NAN, 0.5, 0.5).is_err());
    }

    #[test]
    fn f1_is_harmonic_mean() {
        let (p, r) = (0.6, 0.3);
        assert!((f_beta(p, r, 1.0).unwrap() - 2.0 * p * r / (p + r)).abs() < 1e-12);
    }

    fn record(src: &str, refs: &[&[Edit]]) -> M2Record {
        M2Record {
            source: toks(src),
            references: refs
                .iter()
                .enumerate()
                .map(|(k, e)| EditSet::new(e.to_vec(), k).unwrap())
                .collect(),
        }
    }

    #[test]
    fn perfect_hypothesis() {
        let r = record("a b c d", &[&[Edit::new(1, 2, &["x"]), Edit::new(3, 4, &[])]]);
        let report = m2_score(&[toks("a b c d")], &[toks("a x c")], &[r], &M2Config::default()).unwrap();
        assert_eq!((report.tp, report.fp, report.fn_), (2, 0, 0));
        assert_eq!((report.precision, report.recall, report.f_beta), (1.0, 1.0, 1.0));
        assert_eq!(report.summary_line(), "P/R/F0.5 = 100.0/100.0/100.0");
    }

    #[test]
    fn unchanged_hypothesis_proposes_nothing() {
        let r = record("a b c", &[&[Edit::new(1, 2, &["x"])]]);
        let report = m2_score(&[toks("a b c")], &[toks("a b c")], &[r], &M2Config::default()).unwrap();
        assert_eq!((report.tp, report.fp, report.fn_), (0, 0, 1));
        assert_eq!(report.precision, 1.0);
        assert_eq!(report.recall, 0.0);
        assert_eq!(report.f_beta, 0.0);
    }

    #[test]
    fn compound_edit_matches_wider_gold() {
        // Gold rewrites "b c d" as "x c y"; the hypothesis makes the same
        // change, which only a merged edit across the unchanged `c` matches.
        let r = record("a b c d e", &[&[Edit::new(1, 4, &["x", "c", "y"])]]);
        let hyp = toks("a x c y e");
        let merged = m2_score(&[toks("a b c d e")], std::slice::from_ref(&hyp), std::slice::from_ref(&r), &M2Config::default()).unwrap();
        assert_eq!((merged.tp, merged.fp, merged.fn_), (1, 0, 0));
        let strict = M2Config { max_unchanged: 0, ..M2Config::default() };
        let split = m2_score(&[toks("a b c d e")], &[hyp], &[r], &strict).unwrap();
        assert_eq!((split.tp, split.fp, split.fn_), (0, 2, 1));
    }

    #[test]
    fn unmatched_changes_are_merged_to_fewest_edits() {
        let r = record("a b c", &[&[]]);
        let report = m2_score(&[toks("a b c")], &[toks("x b y")], &[r], &M2Config::default()).unwrap();
        assert_eq!((report.tp, report.fp, report.fn_), (0, 1, 0));
    }

    #[test]
    fn repeated_insertion_counts_gold_once() {
        let r = record("a b", &[&[Edit::new(1, 1, &["x"])]]);
        let report = m2_score(&[toks("a b")], &[toks("a x x b")], &[r], &M2Config::default()).unwrap();
        assert_eq!((report.tp, report.fp, report.fn_), (1, 1, 0));
    }

    #[test]
    fn reference_choice_and_tie_break() {
        let src = toks("a b c");
        let r = record("a b c", &[&[Edit::new(0, 1, &["y"])], &[Edit::new(1, 2, &["x"])]]);
        let report = m2_score(std::slice::from_ref(&src), &[toks("a x c")], &[r], &M2Config::default()).unwrap();
        assert_eq!(report.per_sentence[0].annotator, 1);
        assert_eq!((report.tp, report.fp, report.fn_), (1, 0, 0));

        let tie = record("a b c", &[&[Edit::new(0, 1, &["y"])], &[Edit::new(2, 3, &["z"])]]);
        let report = m2_score(&[src], &[toks("a b c")], &[tie], &M2Config::default()).unwrap();
        assert_eq!(report.per_sentence[0].annotator, 0);
    }

    #[test]
    fn input_validation() {
        let r = record("a b", &[&[]]);
        let cfg = M2Config::default();
        assert!(matches!(
            m2_score(&[toks("a b")], &Vec::<Vec<String>>::new(), std::slice::from_ref(&r), &cfg),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert_eq!(
            m2_score(&[toks("a c")], &[toks("a c")], &[r], &cfg),
            Err(MetricsError::SourceMismatch { index: 0 })
        );
    }

    #[test]
    fn appending_identity_sentence_changes_nothing() {
        let m2 = "S a b c\nA 1 2|||R|||x|||REQUIRED|||-NONE-|||0\n\nS p q\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\n";
        let recs = read_m2(m2).unwrap();
        let cfg = M2Config::default();
        let one = m2_score(&[toks("a b c")], &[toks("a y c")], &recs[..1], &cfg).unwrap();
        let two = m2_score(&[toks("a b c"), toks("p q")], &[toks("a y c"), toks("p q")], &recs, &cfg).unwrap();
        assert_eq!((one.tp, one.fp, one.fn_), (two.tp, two.fp, two.fn_));
        assert_eq!(one.f_beta, two.f_beta);
    }

    #[test]
    fn cls_examples() {
        use SentenceLabel::*;
        let golds = [Incorrect, Correct, Incorrect];
        let perfect = cls_metrics(&golds, &golds).unwrap();
        assert_eq!((perfect.precision, perfect.recall, perfect.f1), (1.0, 1.0, 1.0));

        // tp=3, fp=1, fn=2
        let preds = [Incorrect, Incorrect, Incorrect, Incorrect, Correct, Correct, Correct];
        let golds = [Incorrect, Incorrect, Incorrect, Correct, Incorrect, Incorrect, Correct];
        let r = cls_metrics(&preds, &golds).unwrap();
        assert_eq!((r.tp, r.fp, r.fn_, r.tn), (3, 1, 2, 1));
        assert_eq!(r.precision, 0.75);
        assert_eq!(r.recall, 0.6);
        assert!((r.f1 - 2.0 / 3.0).abs() < 1e-12);

        let all_correct = cls_metrics(&[Correct, Correct], &[Incorrect, Correct]).unwrap();
        assert_eq!(all_correct.recall, 0.0);
        assert!(cls_metrics(&[Correct], &[]).is_err());
        assert_eq!("wrong".parse::<SentenceLabel>(), Err(MetricsError::UnknownLabel("wrong".into())));
    }

    #[test]
    fn per_type_examples() {
        use ErrorType::*;
        use SentenceLabel::*;
        let preds = [Incorrect, Incorrect, Correct, Incorrect, Correct, Incorrect];
        let golds = [Incorrect, Incorrect, Incorrect, Incorrect, Correct, Correct];
        let types = [Some(WordOrder), Some(WordOrder), Some(Missing), Some(Missing), None, Some(Illogic)];
        let r = per_type_recall(&preds, &golds, &types).unwrap();
        let map = r.per_type.unwrap();
        assert_eq!(map[&WordOrder], TypeRecall { gold: 2, detected: 2, recall: 1.0 });
        assert_eq!(map[&Missing], TypeRecall { gold: 2, detected: 1, recall: 0.5 });
        // Illogic only tags a gold-correct sentence, so it has no gold support.
        assert!(!map.contains_key(&Illogic));
        assert!(!map.contains_key(&Redundant));
        assert_eq!(r.precision, 0.75);
    }

    #[test]
    fn error_type_parsing() {
        assert_eq!("Word Order".parse::<ErrorType>().unwrap(), ErrorType::WordOrder);
        assert_eq!("word_order".parse::<ErrorType>().unwrap(), ErrorType::WordOrder);
        assert_eq!("illogic".parse::<ErrorType>().unwrap(), ErrorType::Illogic);
        assert!(matches!("spelling".parse::<ErrorType>(), Err(MetricsError::UnknownType(_))));
    }

    /// Exhaustive reference: every optimal alignment, every way of grouping
    /// its steps into edits, best (tp, proposed).
    fn oracle_counts(src: &[String], hyp: &[String], gold: &EditSet, max_unchanged: usize) -> (usize, usize) {
        #[derive(Clone, Copy, PartialEq)]
        enum Op {
            Keep,
            Sub,
            Del,
            Ins,
        }
        fn dist(a: &[String], b: &[String]) -> usize {
            let mut t = vec![vec![0; b.len() + 1]; a.len() + 1];
            for i in 0..=a.len() {
                for j in 0..=b.len() {
                    t[i][j] = if i == 0 {
                        j
                    } else if j == 0 {
                        i
                    } else {
                        (t[i - 1][j - 1] + usize::from(a[i - 1] != b[j - 1])).min(t[i - 1][j] + 1).min(t[i][j - 1] + 1)
                    };
                }
            }
            t[a.len()][b.len()]
        }
        fn walk(a: &[String], b: &[String], budget: usize, path: &mut Vec<Op>, out: &mut Vec<Vec<Op>>) {
            if a.is_empty() && b.is_empty() {
                out.push(path.clone());
                return;
            }
            let mut step = |op: Op, cost: usize, ra: &[String], rb: &[String], path: &mut Vec<Op>| {
                if cost <= budget && cost + dist(ra, rb) == budget {
                    path.push(op);
                    walk(ra, rb, budget - cost, path, out);
                    path.pop();
                }
            };
            if !a.is_empty() && !b.is_empty() {
                let op = if a[0] == b[0] { Op::Keep } else { Op::Sub };
                step(op, usize::from(op == Op::Sub), &a[1..], &b[1..], path);
            }
            if !a.is_empty() {
                step(Op::Del, 1, &a[1..], b, path);
            }
            if !b.is_empty() {
                step(Op::Ins, 1, a, &b[1..], path);
            }
        }
        let mut paths = Vec::new();
        walk(src, hyp, dist(src, hyp), &mut Vec::new(), &mut paths);

        let mut best: Option<(usize, usize)> = None;
        for ops in paths {
            let mut pos = vec![(0usize, 0usize)];
            for op in &ops {
                let (i, j) = *pos.last().unwrap();
                pos.push(match op {
                    Op::Keep | Op::Sub => (i + 1, j + 1),
                    Op::Del => (i + 1, j),
                    Op::Ins => (i, j + 1),
                });
            }
            let cuts = ops.len().saturating_sub(1);
            'seg: for mask in 0u64..(1u64 << cuts) {
                let mut proposed = Vec::new();
                let mut start = 0;
                for k in 0..ops.len() {
                    if k + 1 < ops.len() && mask & (1 << k) == 0 {
                        continue;
                    }
                    let group = &ops[start..=k];
                    let keeps = group.iter().filter(|o| **o == Op::Keep).count();
                    if keeps == group.len() {
                        if group.len() > 1 {
                            continue 'seg;
                        }
                    } else {
                        if keeps > max_unchanged {
                            continue 'seg;
                        }
                        let (ui, uj) = pos[start];
                        let (vi, vj) = pos[k + 1];
                        proposed.push(Edit {
                            start: ui,
                            end: vi,
                            replacement: hyp[uj..vj].to_vec(),
                            type_tag: None,
                        });
                    }
                    start = k + 1;
                }
                let tp = gold.edits().iter().filter(|g| proposed.iter().any(|p| g.same_change(p))).count();
                let cand = (tp, proposed.len());
                if best.is_none_or(|b| cand.0 > b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
                    best = Some(cand);
                }
            }
        }
        best.unwrap()
    }

    fn arb_case() -> impl Strategy<Value = (Vec<String>, Vec<String>, Vec<Edit>)> {
        let word = prop::sample::select(vec!["a", "b", "c", "x"]).prop_map(String::from);
        (prop::collection::vec(word.clone(), 0..7), prop::collection::vec(word.clone(), 0..7)).prop_flat_map(
            move |(src, hyp)| {
                let n = src.len();
                let edit = (0..=n, 0..=2usize, prop::collection::vec(word.clone(), 0..3))
                    .prop_map(move |(s, w, r)| Edit { start: s, end: (s + w).min(n), replacement: r, type_tag: None });
                (Just(src), Just(hyp), prop::collection::vec(edit, 0..4))
            },
        )
    }

    #[test]
    fn lattice_matches_oracle_on_gold_derived_from_hypothesis() {
        // Gold equal to the hypothesis's own minimal edits must be fully found.
        let src = toks("a b c d e");
        let hyp = toks("a x d y e e");
        let gold = crate::edits::extract_edits(&src, &hyp);
        let lattice = EditLattice::build(&src, &hyp, 2);
        let c = lattice.best_counts(&gold);
        assert_eq!((c.tp, c.proposed), oracle_counts(&src, &hyp, &gold, 2));
        assert_eq!(c.tp, gold.len());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn lattice_matches_oracle((src, hyp, raw) in arb_case(), max_unchanged in 0usize..3) {
            // Keep a disjoint subset of the random gold edits.
            let mut kept: Vec<Edit> = Vec::new();
            for e in raw {
                if EditSet::new(kept.iter().cloned().chain([e.clone()]).collect(), 0).is_ok() {
                    kept.push(e);
                }
            }
            let gold = EditSet::new(kept, 0).unwrap();
            let c = EditLattice::build(&src, &hyp, max_unchanged).best_counts(&gold);
            prop_assert_eq!((c.tp, c.proposed), oracle_counts(&src, &hyp, &gold, max_unchanged));
        }
    }

    proptest! {
        #[test]
        fn f_beta_is_monotone(p in 0.0f64..=1.0, r in 0.0f64..=1.0, dp in 0.0f64..=0.5, beta in 0.1f64..3.0) {
            let base = f_beta(p, r, beta).unwrap();
            prop_assert!(f_beta((p + dp).min(1.0), r, beta).unwrap() >= base - 1e-12);
            prop_assert!(f_beta(p, (r + dp).min(1.0), beta).unwrap() >= base - 1e-12);
        }

        #[test]
        fn precision_is_scale_free(tp in 0usize..50, fp in 0usize..50, fn_ in 0usize..50, k in 1usize..10) {
            prop_assume!(tp + fp > 0);
            let (p1, _, _) = prf(tp, fp, fn_, 0.5);
            let (p2, _, _) = prf(k * tp, k * fp, fn_, 0.5);
            prop_assert!((p1 - p2).abs() < 1e-12);
        }

        #[test]
        fn cls_f1_between_p_and_r(
            pairs in proptest::collection::vec((any::<bool>(), any::<bool>()), 1..40)
        ) {
            let lab = |b: bool| if b { SentenceLabel::Incorrect } else { SentenceLabel::Correct };
            let preds: Vec<_> = pairs.iter().map(|p| lab(p.0)).collect();
            let golds: Vec<_> = pairs.iter().map(|p| lab(p.1)).collect();
            let r = cls_metrics(&preds, &golds).unwrap();
            prop_assert_eq!(r.tp + r.fp + r.fn_ + r.tn, pairs.len());
            prop_assert!(r.f1 >= r.precision.min(r.recall) - 1e-12);
            prop_assert!(r.f1 <= r.precision.max(r.recall) + 1e-12);
        }
    }
}
