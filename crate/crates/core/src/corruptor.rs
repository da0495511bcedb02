//! Pseudo-error generation from correct parsed sentences.
//!
//! Three rules, each producing a sentence that breaks one word-order or
//! completeness constraint:
//!
//! * `adv_att`: swap a verb's adverbial with the attribute of its object.
//! * `conjunction`: put the first clause's subject on the wrong side of the
//!   clause-initial conjunction (before it when both clauses share the
//!   subject, after it otherwise, inverted).
//! * `drop_spo`: delete the subject, predicate or object, never one that
//!   contains a named entity.

use std::collections::HashSet;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deptree::{CharSpan, DepTree, TokenId};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CorruptError {
    #[error("conjunction lexicon is empty")]
    EmptyLexicon,
    #[error("conjunction `{0}` listed twice")]
    DuplicateConjunction(String),
    #[error("rule weights must be finite and non-negative, got {0}")]
    NegativeWeight(f64),
    #[error("rule weights are all zero")]
    ZeroWeights,
    #[error("rate must lie in (0, 1], got {0}")]
    BadRate(f64),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    AdvAtt,
    Conjunction,
    DropSpo,
}

impl Rule {
    pub const ALL: [Rule; 3] = [Rule::AdvAtt, Rule::Conjunction, Rule::DropSpo];

    pub fn as_str(self) -> &'static str {
        match self {
            Rule::AdvAtt => "adv_att",
            Rule::Conjunction => "conjunction",
            Rule::DropSpo => "drop_spo",
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Rule {
    type Err = CorruptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Rule::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| CorruptError::UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpoRole {
    Subject,
    Predicate,
    Object,
}

/// Positions the placement predicates look at, in one surface string.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Anchors {
    AdvAtt { adverbial: CharSpan, verb: CharSpan, attribute: CharSpan },
    Conjunction { subject: CharSpan, conjunction: CharSpan, same_subject: bool },
    DropSpo { role: SpoRole, span: Option<CharSpan> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Satisfied,
    Violated,
}

/// The rule's own well-formedness predicate.
pub fn check_placement(anchors: &Anchors) -> Placement {
    let ok = match *anchors {
        Anchors::AdvAtt { adverbial, verb, attribute } => adverbial.1 <= verb.0 && attribute.0 >= verb.1,
        Anchors::Conjunction { subject, conjunction, same_subject } => {
            if same_subject {
                subject.1 <= conjunction.0
            } else {
                subject.0 >= conjunction.1
            }
        }
        Anchors::DropSpo { span, .. } => span.is_some(),
    };
    if ok {
        Placement::Satisfied
    } else {
        Placement::Violated
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionRecord {
    pub source: String,
    pub corrupted: String,
    pub rule: Rule,
    /// Affected character spans in `source`.
    pub spans: Vec<CharSpan>,
    pub dropped_role: Option<SpoRole>,
    /// Seed that reproduces this record when passed to the rule directly.
    pub seed: u64,
    #[serde(skip)]
    pub source_anchors: Option<Anchors>,
    #[serde(skip)]
    pub corrupted_anchors: Option<Anchors>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConjunctionLexicon {
    entries: Vec<String>,
}

impl ConjunctionLexicon {
    pub fn new(entries: Vec<String>) -> Result<Self, CorruptError> {
        if entries.is_empty() {
            return Err(CorruptError::EmptyLexicon);
        }
        let mut seen = HashSet::new();
        for e in &entries {
            if !seen.insert(e.as_str()) {
                return Err(CorruptError::DuplicateConjunction(e.clone()));
            }
        }
        Ok(ConjunctionLexicon { entries })
    }

    /// One entry per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CorruptError> {
        Self::new(
            text.lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    pub fn contains(&self, word: &str) -> bool {
        self.entries.iter().any(|e| e == word)
    }
}

impl Default for ConjunctionLexicon {
    fn default() -> Self {
        Self::parse(include_str!("../data/conjunctions.txt")).expect("bundled lexicon is valid")
    }
}

fn span_of(t: &DepTree, i: TokenId) -> CharSpan {
    t.tokens()[i - 1].char_span
}

fn text_of(chars: &[char], span: CharSpan) -> String {
    chars[span.0..span.1].iter().collect()
}

/// Exchanges two disjoint spans `x` before `y`, leaving the text between
/// them in place. Returns the new string and a mapping for spans that lie
/// inside `x`, inside `y`, in the gap, or outside both.
fn swap_spans(chars: &[char], x: CharSpan, y: CharSpan) -> (String, impl Fn(CharSpan) -> CharSpan) {
    debug_assert!(x.1 <= y.0);
    let mut out: String = chars[..x.0].iter().collect();
    out.extend(&chars[y.0..y.1]);
    out.extend(&chars[x.1..y.0]);
    out.extend(&chars[x.0..x.1]);
    out.extend(&chars[y.1..]);
    let (lx, ly) = (x.1 - x.0, y.1 - y.0);
    let map = move |s: CharSpan| {
        let shift = |s: CharSpan, by: isize| ((s.0 as isize + by) as usize, (s.1 as isize + by) as usize);
        if s.0 >= x.0 && s.1 <= x.1 {
            shift(s, (y.1 - x.1) as isize)
        } else if s.0 >= y.0 && s.1 <= y.1 {
            shift(s, -((y.0 - x.0) as isize))
        } else if s.0 >= x.1 && s.1 <= y.0 {
            shift(s, ly as isize - lx as isize)
        } else {
            s
        }
    };
    (out, map)
}

/// Contiguous subtree span of `i`, if its tokens form one run.
fn contiguous_subtree(t: &DepTree, i: TokenId) -> Option<CharSpan> {
    let sub = t.subtree(i).expect("index in range");
    sub.contiguous.then_some(sub.char_span)
}

fn record(t: &DepTree, corrupted: String, rule: Rule, spans: Vec<CharSpan>, seed: u64) -> CorruptionRecord {
    CorruptionRecord {
        source: t.text().to_string(),
        corrupted,
        rule,
        spans,
        dropped_role: None,
        seed,
        source_anchors: None,
        corrupted_anchors: None,
    }
}

/// Swaps an adverbial of a verb with an attribute of that verb's object.
pub fn corrupt_adv_att(t: &DepTree, seed: u64) -> Option<CorruptionRecord> {
    let chars: Vec<char> = t.text().chars().collect();
    let mut candidates = Vec::new();
    for verb in t.tokens() {
        let vspan = verb.char_span;
        let advs: Vec<CharSpan> = t
            .children(verb.index)
            .filter(|c| c.deprel == "ADV")
            .filter_map(|c| contiguous_subtree(t, c.index))
            .filter(|s| s.1 <= vspan.0)
            .collect();
        for obj in t.children(verb.index).filter(|c| c.deprel == "VOB") {
            let atts = t
                .children(obj.index)
                .filter(|c| c.deprel == "ATT")
                .filter_map(|c| contiguous_subtree(t, c.index))
                .filter(|s| s.0 >= vspan.1);
            for att in atts {
                for &adv in &advs {
                    if text_of(&chars, adv) != text_of(&chars, att) {
                        candidates.push((adv, vspan, att));
                    }
                }
            }
        }
    }
    let &(adv, verb, att) = candidates.choose(&mut seed::rng(seed))?;
    let (corrupted, map) = swap_spans(&chars, adv, att);
    let mut rec = record(t, corrupted, Rule::AdvAtt, vec![adv, att], seed);
    rec.source_anchors = Some(Anchors::AdvAtt { adverbial: adv, verb, attribute: att });
    rec.corrupted_anchors = Some(Anchors::AdvAtt { adverbial: map(adv), verb: map(verb), attribute: map(att) });
    Some(rec)
}

/// Moves the first clause's subject across the clause-initial conjunction.
///
/// The first clause is headed by a predicate with a `COO` dependent (the
/// second clause). The conjunction is a lexicon word attached to the first
/// predicate. When the second clause has no subject of its own it is taken
/// to share the first one.
pub fn corrupt_conjunction(t: &DepTree, lex: &ConjunctionLexicon, seed: u64) -> Option<CorruptionRecord> {
    let chars: Vec<char> = t.text().chars().collect();
    let subject_text = |p: TokenId| {
        let s = t.child_with(p, "SBV")?;
        let sub = t.subtree(s).expect("index in range");
        Some(sub.tokens.iter().map(|&k| t.tokens()[k - 1].form.as_str()).collect::<String>())
    };
    let mut candidates = Vec::new();
    for p1 in t.tokens() {
        let Some(p2) = t.child_with(p1.index, "COO") else { continue };
        let Some(conj) = t.children(p1.index).find(|c| lex.contains(&c.form)) else { continue };
        let Some(s1) = t.child_with(p1.index, "SBV") else { continue };
        let Some(subject) = contiguous_subtree(t, s1) else { continue };
        let same = match subject_text(p2) {
            None => true,
            Some(s2) => Some(s2) == subject_text(p1.index),
        };
        let cspan = conj.char_span;
        // Tokens strictly between the subject and the conjunction move with
        // the conjunction, so the swap is between two whole-token runs.
        let swap = if same && subject.1 <= cspan.0 {
            let next = t.tokens().iter().find(|k| k.char_span.0 >= subject.1)?;
            Some((subject, (next.char_span.0, cspan.1)))
        } else if !same && subject.0 >= cspan.1 {
            let prev = t.tokens().iter().rev().find(|k| k.char_span.1 <= subject.0)?;
            Some(((cspan.0, prev.char_span.1), subject))
        } else {
            None
        };
        if let Some((x, y)) = swap {
            candidates.push((x, y, subject, cspan, same));
        }
    }
    let &(x, y, subject, conj, same) = candidates.choose(&mut seed::rng(seed))?;
    let (corrupted, map) = swap_spans(&chars, x, y);
    if corrupted == t.text() {
        return None;
    }
    let mut rec = record(t, corrupted, Rule::Conjunction, vec![subject, conj], seed);
    rec.source_anchors = Some(Anchors::Conjunction { subject, conjunction: conj, same_subject: same });
    rec.corrupted_anchors =
        Some(Anchors::Conjunction { subject: map(subject), conjunction: map(conj), same_subject: same });
    Some(rec)
}

/// Deletes the subject subtree, the predicate token or the object subtree,
/// skipping candidates that contain an entity.
pub fn corrupt_drop_spo(t: &DepTree, seed: u64) -> Option<CorruptionRecord> {
    let spo = t.spo();
    let subtree = |i: Option<TokenId>| i.map(|i| t.subtree(i).expect("index in range").tokens);
    let candidates: Vec<(SpoRole, Vec<TokenId>)> = [
        (SpoRole::Subject, subtree(spo.subject)),
        (SpoRole::Predicate, Some(vec![spo.predicate])),
        (SpoRole::Object, subtree(spo.object)),
    ]
    .into_iter()
    .filter_map(|(role, toks)| Some((role, toks?)))
    .filter(|(_, toks)| !toks.iter().any(|&k| t.tokens()[k - 1].is_entity()))
    .collect();
    let (role, tokens) = candidates.choose(&mut seed::rng(seed))?.clone();

    // Merge adjacent tokens into runs of source characters.
    let mut runs: Vec<CharSpan> = Vec::new();
    let mut prev: Option<TokenId> = None;
    for &k in &tokens {
        let span = span_of(t, k);
        match (runs.last_mut(), prev) {
            (Some(last), Some(p)) if p + 1 == k => last.1 = span.1,
            _ => runs.push(span),
        }
        prev = Some(k);
    }

    let chars: Vec<char> = t.text().chars().collect();
    let mut delete = vec![false; chars.len()];
    for &(s, e) in &runs {
        let (mut s, mut e) = (s, e);
        let trailing = chars[e..].iter().take_while(|c| c.is_whitespace()).count();
        if trailing > 0 && e + trailing < chars.len() {
            e += trailing;
        } else {
            while s > 0 && chars[s - 1].is_whitespace() {
                s -= 1;
            }
        }
        delete[s..e].iter_mut().for_each(|d| *d = true);
    }
    let corrupted: String = chars.iter().zip(&delete).filter(|(_, &d)| !d).map(|(c, _)| *c).collect();
    if corrupted.trim().is_empty() || corrupted == t.text() {
        return None;
    }
    let role_span = (runs[0].0, runs[runs.len() - 1].1);
    let mut rec = record(t, corrupted, Rule::DropSpo, runs, seed);
    rec.dropped_role = Some(role);
    rec.source_anchors = Some(Anchors::DropSpo { role, span: Some(role_span) });
    rec.corrupted_anchors = Some(Anchors::DropSpo { role, span: None });
    Some(rec)
}

pub fn apply_rule(rule: Rule, t: &DepTree, lex: &ConjunctionLexicon, seed: u64) -> Option<CorruptionRecord> {
    match rule {
        Rule::AdvAtt => corrupt_adv_att(t, seed),
        Rule::Conjunction => corrupt_conjunction(t, lex, seed),
        Rule::DropSpo => corrupt_drop_spo(t, seed),
    }
}

/// Per-rule weights in `adv_att, conjunction, drop_spo` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RuleMix(pub [f64; 3]);

impl Default for RuleMix {
    fn default() -> Self {
        RuleMix([1.0, 1.0, 1.0])
    }
}

impl RuleMix {
    pub fn validate(&self) -> Result<(), CorruptError> {
        for &w in &self.0 {
            if !(w.is_finite() && w >= 0.0) {
                return Err(CorruptError::NegativeWeight(w));
            }
        }
        if self.0.iter().all(|&w| w == 0.0) {
            return Err(CorruptError::ZeroWeights);
        }
        Ok(())
    }

    fn draw(&self, rng: &mut seed::Rng) -> Rule {
        let total: f64 = self.0.iter().sum();
        let mut u = rng.gen::<f64>() * total;
        for (rule, &w) in Rule::ALL.iter().zip(&self.0) {
            if w > 0.0 && u < w {
                return *rule;
            }
            u -= w;
        }
        // Rounding can leave `u` just above the last positive weight.
        *Rule::ALL.iter().zip(&self.0).rev().find(|(_, &w)| w > 0.0).expect("validated").0
    }

    /// `first`, then every other positive-weight rule by descending weight.
    fn fallback_order(&self, first: Rule) -> Vec<Rule> {
        let mut rest: Vec<(Rule, f64)> =
            Rule::ALL.iter().copied().zip(self.0).filter(|&(r, w)| r != first && w > 0.0).collect();
        rest.sort_by(|a, b| b.1.total_cmp(&a.1));
        std::iter::once(first).chain(rest.into_iter().map(|(r, _)| r)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptConfig {
    pub mix: RuleMix,
    pub rate: f64,
    pub seed: u64,
}

impl Default for CorruptConfig {
    fn default() -> Self {
        CorruptConfig { mix: RuleMix::default(), rate: 1.0, seed: 0 }
    }
}

/// Corrupts a corpus. Each sentence is selected with probability `rate`
/// and gets exactly one rule; sentences no rule applies to are skipped.
pub fn corrupt_batch(
    trees: &[DepTree],
    cfg: &CorruptConfig,
    lex: &ConjunctionLexicon,
) -> Result<Vec<CorruptionRecord>, CorruptError> {
    cfg.mix.validate()?;
    if !(cfg.rate > 0.0 && cfg.rate <= 1.0) {
        return Err(CorruptError::BadRate(cfg.rate));
    }
    Ok(trees
        .par_iter()
        .enumerate()
        .map(|(k, t)| {
            let sentence_seed = seed::derive(cfg.seed, &[&t.source_id(k)]);
            let mut rng = seed::rng(sentence_seed);
            if rng.gen::<f64>() >= cfg.rate {
                return None;
            }
            let drawn = cfg.mix.draw(&mut rng);
            cfg.mix.fallback_order(drawn).into_iter().find_map(|rule| {
                apply_rule(rule, t, lex, seed::derive(sentence_seed, &[rule.as_str()]))
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect())
}

pub fn write_jsonl<W: Write>(records: &[CorruptionRecord], mut out: W) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// `corrupted<TAB>source` lines, the input/target order a trainer reads.
pub fn write_tsv<W: Write>(records: &[CorruptionRecord], mut out: W) -> io::Result<()> {
    for r in records {
        writeln!(out, "{}\t{}", r.corrupted, r.source)?;
    }
    Ok(())
}
