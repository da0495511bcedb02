//! Word-pair examples for dependency structure and relation prediction.
//!
//! * DSP: is word `i` the child or the parent of word `j`?
//! * DSP+: the same with a third class, `others`, for pairs more than one
//!   arc apart.
//! * DRP: which dependency relation joins `i` (the head) and `j`?
//! * DSRP / DSRP+: DSP (or DSP+) examples followed by DRP examples of the
//!   same sentence.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deptree::{CharSpan, DepTree, Orientation, Relationship, TokenId};
use crate::seed;

pub const DEFAULT_RELATIONS: [&str; 12] =
    ["SBV", "VOB", "IOB", "FOB", "DBL", "ATT", "ADV", "CMP", "COO", "POB", "LAD", "RAD"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SamplerError {
    #[error("pairs_per_sentence must be positive")]
    ZeroPairs,
    #[error("relation set is empty")]
    EmptyRelationSet,
    #[error("relation `{0}` listed twice")]
    DuplicateRelation(String),
    #[error("unknown task `{0}`")]
    UnknownTask(String),
    #[error("line {line}: {message}")]
    Json { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Task {
    #[serde(rename = "DSP")]
    Dsp,
    #[serde(rename = "DSP+")]
    DspPlus,
    #[serde(rename = "DRP")]
    Drp,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Dsp => "DSP",
            Task::DspPlus => "DSP+",
            Task::Drp => "DRP",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// What to generate for each sentence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Dsp,
    DspPlus,
    Drp,
    Dsrp,
    DsrpPlus,
}

impl FromStr for Scheme {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dsp" => Ok(Scheme::Dsp),
            "dsp+" | "dsp_plus" => Ok(Scheme::DspPlus),
            "drp" => Ok(Scheme::Drp),
            "dsrp" => Ok(Scheme::Dsrp),
            "dsrp+" | "dsrp_plus" => Ok(Scheme::DsrpPlus),
            _ => Err(SamplerError::UnknownTask(s.to_string())),
        }
    }
}

/// One training pair. Field order is the JSONL column order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairExample {
    pub text: String,
    pub span_i: CharSpan,
    pub span_j: CharSpan,
    pub task: Task,
    pub label: String,
    pub source_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplerConfig {
    pairs_per_sentence: usize,
    relation_set: Vec<String>,
    pub seed: u64,
    pub orientation: Orientation,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            pairs_per_sentence: 4,
            relation_set: DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect(),
            seed: 0,
            orientation: Orientation::Standard,
        }
    }
}

impl SamplerConfig {
    pub fn new(pairs_per_sentence: usize, relation_set: Vec<String>, seed: u64) -> Result<Self, SamplerError> {
        if pairs_per_sentence == 0 {
            return Err(SamplerError::ZeroPairs);
        }
        if relation_set.is_empty() {
            return Err(SamplerError::EmptyRelationSet);
        }
        let mut seen = HashSet::new();
        for r in &relation_set {
            if !seen.insert(r.as_str()) {
                return Err(SamplerError::DuplicateRelation(r.clone()));
            }
        }
        Ok(SamplerConfig { pairs_per_sentence, relation_set, seed, orientation: Orientation::Standard })
    }

    pub fn with_orientation(mut self, orientation: Orientation) -> Self {
        self.orientation = orientation;
        self
    }

    pub fn pairs_per_sentence(&self) -> usize {
        self.pairs_per_sentence
    }

    pub fn relation_set(&self) -> &[String] {
        &self.relation_set
    }
}

fn sentence_rng(cfg: &SamplerConfig, source_id: &str, task: Task) -> seed::Rng {
    seed::rng(seed::derive(cfg.seed, &[source_id, task.as_str()]))
}

fn example(t: &DepTree, i: TokenId, j: TokenId, task: Task, label: &str, source_id: &str) -> PairExample {
    PairExample {
        text: t.text().to_string(),
        span_i: t.tokens()[i - 1].char_span,
        span_j: t.tokens()[j - 1].char_span,
        task,
        label: label.to_string(),
        source_id: source_id.to_string(),
    }
}

/// Uniform sample of at most `k` ordered pairs at tree distance above 1,
/// returned in random order.
fn sample_distant_pairs(t: &DepTree, k: usize, rng: &mut seed::Rng) -> Vec<(TokenId, TokenId)> {
    let mut reservoir = Vec::with_capacity(k);
    let mut seen = 0usize;
    for i in 1..=t.len() {
        for j in 1..=t.len() {
            if i == j || t.distance(i, j).expect("indices in range") <= 1 {
                continue;
            }
            seen += 1;
            if reservoir.len() < k {
                reservoir.push((i, j));
            } else {
                let slot = rng.gen_range(0..seen);
                if slot < k {
                    reservoir[slot] = (i, j);
                }
            }
        }
    }
    reservoir.shuffle(rng);
    reservoir
}

fn sample_structure(t: &DepTree, cfg: &SamplerConfig, source_id: &str, task: Task) -> Vec<PairExample> {
    let mut rng = sentence_rng(cfg, source_id, task);
    let mut classes: Vec<Vec<(TokenId, TokenId)>> = vec![Vec::new(), Vec::new()];
    for tok in t.tokens().iter().filter(|tok| tok.head != 0) {
        for (i, j) in [(tok.index, tok.head), (tok.head, tok.index)] {
            let rel = t.relationship_oriented(i, j, cfg.orientation).expect("arc endpoints in range");
            classes[usize::from(rel == Relationship::Parent)].push((i, j));
        }
    }
    for class in &mut classes {
        class.shuffle(&mut rng);
    }
    if task == Task::DspPlus {
        let turns = cfg.pairs_per_sentence.div_ceil(3);
        classes.push(sample_distant_pairs(t, turns, &mut rng));
    }

    let labels = [Relationship::Child, Relationship::Parent, Relationship::Others];
    let k = classes.len();
    let start = rng.gen_range(0..k);
    let mut next = vec![0usize; k];
    let mut out = Vec::new();
    for turn in 0..cfg.pairs_per_sentence {
        let c = (start + turn) % k;
        if let Some(&(i, j)) = classes[c].get(next[c]) {
            next[c] += 1;
            out.push(example(t, i, j, task, labels[c].as_str(), source_id));
        }
    }
    out
}

/// Child/parent examples, alternating between the two classes.
pub fn sample_dsp(t: &DepTree, cfg: &SamplerConfig, source_id: &str) -> Vec<PairExample> {
    sample_structure(t, cfg, source_id, Task::Dsp)
}

/// Child/parent/others examples, rotating through the three classes.
pub fn sample_dsp_plus(t: &DepTree, cfg: &SamplerConfig, source_id: &str) -> Vec<PairExample> {
    sample_structure(t, cfg, source_id, Task::DspPlus)
}

/// Relation-label examples drawn uniformly from arcs whose label is in the
/// configured relation set. `i` is the head and `j` the dependent.
pub fn sample_drp(t: &DepTree, cfg: &SamplerConfig, source_id: &str) -> Vec<PairExample> {
    let mut rng = sentence_rng(cfg, source_id, Task::Drp);
    let arcs: Vec<&crate::deptree::Token> = t
        .tokens()
        .iter()
        .filter(|tok| tok.head != 0 && cfg.relation_set.contains(&tok.deprel))
        .collect();
    arcs.choose_multiple(&mut rng, cfg.pairs_per_sentence)
        .map(|tok| example(t, tok.head, tok.index, Task::Drp, &tok.deprel, source_id))
        .collect()
}

pub fn sample_dsrp(t: &DepTree, cfg: &SamplerConfig, source_id: &str, plus: bool) -> Vec<PairExample> {
    let mut out = if plus { sample_dsp_plus(t, cfg, source_id) } else { sample_dsp(t, cfg, source_id) };
    out.extend(sample_drp(t, cfg, source_id));
    out
}

pub fn sample(t: &DepTree, cfg: &SamplerConfig, source_id: &str, scheme: Scheme) -> Vec<PairExample> {
    match scheme {
        Scheme::Dsp => sample_dsp(t, cfg, source_id),
        Scheme::DspPlus => sample_dsp_plus(t, cfg, source_id),
        Scheme::Drp => sample_drp(t, cfg, source_id),
        Scheme::Dsrp => sample_dsrp(t, cfg, source_id, false),
        Scheme::DsrpPlus => sample_dsrp(t, cfg, source_id, true),
    }
}

/// Samples every tree in parallel; output keeps corpus order.
pub fn sample_corpus(trees: &[DepTree], cfg: &SamplerConfig, scheme: Scheme) -> Vec<PairExample> {
    trees
        .par_iter()
        .enumerate()
        .map(|(k, t)| sample(t, cfg, &t.source_id(k), scheme))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Writes one JSON object per line and returns the number of records.
pub fn write_examples<W: Write>(examples: &[PairExample], mut out: W) -> io::Result<usize> {
    for ex in examples {
        serde_json::to_writer(&mut out, ex)?;
        out.write_all(b"\n")?;
    }
    Ok(examples.len())
}

pub fn read_examples(input: &str) -> Result<Vec<PairExample>, SamplerError> {
    input
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            serde_json::from_str(l).map_err(|e| SamplerError::Json { line: k + 1, message: e.to_string() })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::deptree::Token;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tree(rows: &[(&str, usize, &str)]) -> DepTree {
        let tokens = rows.iter().map(|&(f, h, d)| Token::new(f, "_", "_", h, d)).collect();
        DepTree::from_tokens(Vec::new(), tokens).unwrap()
    }

    const RELS: [&str; 5] = ["SBV", "VOB", "ATT", "ADV", "WP"];

    /// Random tree: a random permutation fixes attachment order so each node
    /// hangs from one placed earlier.
    fn random_tree(n: usize, seed: u64) -> DepTree {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (1..=n).collect();
        order.shuffle(&mut rng);
        let mut heads = vec![0; n + 1];
        for k in 1..n {
            heads[order[k]] = order[rng.gen_range(0..k)];
        }
        let forms: Vec<String> = (1..=n).map(|k| format!("w{k}")).collect();
        let tokens = (1..=n)
            .map(|k| Token::new(&forms[k - 1], "_", "_", heads[k], if heads[k] == 0 { "HED" } else { RELS[rng.gen_range(0..RELS.len())] }))
            .collect();
        DepTree::from_tokens(Vec::new(), tokens).unwrap()
    }

    fn token_at(t: &DepTree, span: CharSpan) -> TokenId {
        t.tokens().iter().find(|tok| tok.char_span == span).expect("span is a whole token").index
    }

    fn cfg(pairs: usize, seed: u64) -> SamplerConfig {
        SamplerConfig::new(pairs, DEFAULT_RELATIONS.iter().map(|s| s.to_string()).collect(), seed).unwrap()
    }

    #[test]
    fn config_validation() {
        assert_eq!(SamplerConfig::new(0, vec!["SBV".into()], 1), Err(SamplerError::ZeroPairs));
        assert_eq!(SamplerConfig::new(4, vec![], 1), Err(SamplerError::EmptyRelationSet));
        assert_eq!(
            SamplerConfig::new(4, vec!["SBV".into(), "SBV".into()], 1),
            Err(SamplerError::DuplicateRelation("SBV".into()))
        );
        assert_eq!(SamplerConfig::default().relation_set().len(), 12);
    }

    #[test]
    fn two_token_tree_is_forced() {
        let t = tree(&[("A", 2, "SBV"), ("B", 0, "HED")]);
        let out = sample_dsp(&t, &cfg(4, 3), "s");
        let got: HashSet<_> = out.iter().map(|e| (t.slice(e.span_i), t.slice(e.span_j), e.label.clone())).collect();
        let expected: HashSet<_> = [("A".to_string(), "B".to_string(), "child".to_string()), ("B".into(), "A".into(), "parent".into())]
            .into_iter()
            .collect();
        assert_eq!(got, expected);
        assert!(sample_dsp_plus(&t, &cfg(4, 3), "s").iter().all(|e| e.label != "others"));
    }

    #[test]
    fn flipped_orientation_swaps_labels() {
        let t = tree(&[("A", 2, "SBV"), ("B", 0, "HED")]);
        let c = cfg(4, 3).with_orientation(Orientation::Flipped);
        for e in sample_dsp(&t, &c, "s") {
            let expected = if t.slice(e.span_i) == "A" { "parent" } else { "child" };
            assert_eq!(e.label, expected);
        }
    }

    #[test]
    fn single_token_tree_is_empty() {
        let t = tree(&[("A", 0, "HED")]);
        for scheme in [Scheme::Dsp, Scheme::DspPlus, Scheme::Drp, Scheme::Dsrp, Scheme::DsrpPlus] {
            assert!(sample(&t, &cfg(4, 1), "s", scheme).is_empty());
        }
    }

    #[test]
    fn chain_far_pair_only_as_others() {
        let t = tree(&[("A", 2, "ATT"), ("B", 3, "SBV"), ("C", 0, "HED")]);
        assert_eq!(t.distance(1, 3).unwrap(), 2);
        for seed in 0..20 {
            for e in sample_dsp_plus(&t, &cfg(6, seed), "s") {
                let pair = (token_at(&t, e.span_i), token_at(&t, e.span_j));
                if pair == (1, 3) || pair == (3, 1) {
                    assert_eq!(e.label, "others");
                }
            }
        }
    }

    #[test]
    fn drp_figure_fragment_and_exclusions() {
        let t = tree(&[("全厂", 2, "ATT"), ("职工", 3, "SBV"), ("听取", 0, "HED"), ("。", 3, "WP")]);
        let out = sample_drp(&t, &cfg(10, 5), "s");
        assert_eq!(out.len(), 2);
        assert!(out.iter().all(|e| e.label != "WP"));
        let att = out.iter().find(|e| e.label == "ATT").unwrap();
        assert_eq!((t.slice(att.span_i).as_str(), t.slice(att.span_j).as_str()), ("职工", "全厂"));
        assert_eq!(att.span_i, (2, 4));
    }

    #[test]
    fn dsrp_task_tags() {
        let t = random_tree(7, 11);
        let tags = |plus| sample_dsrp(&t, &cfg(4, 2), "s", plus).iter().map(|e| e.task).collect::<HashSet<_>>();
        assert!(tags(false).is_subset(&[Task::Dsp, Task::Drp].into_iter().collect()));
        assert!(tags(true).is_subset(&[Task::DspPlus, Task::Drp].into_iter().collect()));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut buf = Vec::new();
        assert_eq!(write_examples(&[], &mut buf).unwrap(), 0);
        assert!(buf.is_empty());
        let t = tree(&[("全厂", 2, "ATT"), ("职工", 3, "SBV"), ("听取", 0, "HED")]);
        let ex = sample_dsp(&t, &cfg(3, 9), "doc-1");
        assert_eq!(ex.len(), 3);
        assert_eq!(write_examples(&ex, &mut buf).unwrap(), 3);
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().next().unwrap().starts_with("{\"text\":\"全厂职工听取\",\"span_i\":["));
        assert_eq!(read_examples(&text).unwrap(), ex);
        for e in &ex {
            assert_eq!(t.slice(e.span_i).chars().count(), 2);
        }
        assert!(matches!(read_examples("{}\n"), Err(SamplerError::Json { line: 1, .. })));
    }

    #[test]
    fn corpus_sampling_matches_per_sentence() {
        let trees: Vec<DepTree> = (0..10).map(|k| random_tree(3 + k, k as u64)).collect();
        let c = cfg(4, 77);
        let all = sample_corpus(&trees, &c, Scheme::DsrpPlus);
        let seq: Vec<_> = trees
            .iter()
            .enumerate()
            .flat_map(|(k, t)| sample(t, &c, &t.source_id(k), Scheme::DsrpPlus))
            .collect();
        assert_eq!(all, seq);
    }

    proptest! {
        #[test]
        fn examples_are_sound(n in 1usize..12, tree_seed in any::<u64>(), seed in any::<u64>(), pairs in 1usize..9) {
            let t = random_tree(n, tree_seed);
            let c = cfg(pairs, seed);
            for scheme in [Scheme::Dsp, Scheme::DspPlus, Scheme::Drp] {
                let out = sample(&t, &c, "s", scheme);
                prop_assert!(out.len() <= pairs);
                let mut seen = HashSet::new();
                let mut counts = [0usize; 3];
                for e in &out {
                    let (i, j) = (token_at(&t, e.span_i), token_at(&t, e.span_j));
                    prop_assert!(seen.insert((i, j, e.task)));
                    match e.task {
                        Task::Drp => {
                            prop_assert_eq!(t.tokens()[j - 1].head, i);
                            prop_assert_eq!(&t.tokens()[j - 1].deprel, &e.label);
                            prop_assert!(c.relation_set().contains(&e.label));
                        }
                        _ => {
                            let rel = t.relationship(i, j).unwrap();
                            prop_assert_eq!(rel.as_str(), e.label.as_str());
                            let head_lookup = if t.tokens()[i - 1].head == j { "child" }
                                else if t.tokens()[j - 1].head == i { "parent" } else { "others" };
                            prop_assert_eq!(head_lookup, e.label.as_str());
                            if e.label == "others" {
                                prop_assert!(t.distance(i, j).unwrap() > 1);
                            }
                            counts[rel as usize] += 1;
                        }
                    }
                }
                if scheme == Scheme::Dsp && n > pairs / 2 {
                    prop_assert!(counts[0].abs_diff(counts[1]) <= 1);
                }
                let again = sample(&t, &c, "s", scheme);
                prop_assert_eq!(&out, &again);
            }
        }

        #[test]
        fn supply_bound(n in 1usize..6, tree_seed in any::<u64>(), seed in any::<u64>()) {
            let t = random_tree(n, tree_seed);
            let c = cfg(50, seed);
            let arcs = n - 1;
            prop_assert!(sample_dsp(&t, &c, "s").len() <= 2 * arcs);
            let distant = (1..=n).flat_map(|i| (1..=n).map(move |j| (i, j)))
                .filter(|&(i, j)| i != j && t.distance(i, j).unwrap() > 1).count();
            prop_assert!(sample_dsp_plus(&t, &c, "s").len() <= 2 * arcs + distant);
        }
    }
}
