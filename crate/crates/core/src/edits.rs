//! Token edits between a source sentence and its correction, the M2
//! interchange format, and edit statistics.

use std::fmt::Write as _;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

/// Replace `source[start..end]` by `replacement`. An insertion has
/// `start == end`, a deletion an empty replacement.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
    pub type_tag: Option<String>,
}

impl Edit {
    pub fn new(start: usize, end: usize, replacement: &[&str]) -> Self {
        Edit {
            start,
            end,
            replacement: replacement.iter().map(|s| s.to_string()).collect(),
            type_tag: None,
        }
    }

    pub fn is_insertion(&self) -> bool {
        self.start == self.end
    }

    /// Position and replacement, ignoring the type tag.
    pub fn same_change(&self, other: &Edit) -> bool {
        self.start == other.start && self.end == other.end && self.replacement == other.replacement
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("edit {start}..{end} is out of bounds for a source of {len} tokens")]
    OutOfBounds { start: usize, end: usize, len: usize },
    #[error("edits {first:?} and {second:?} overlap")]
    Overlap { first: (usize, usize), second: (usize, usize) },
    #[error("no sentence pairs given")]
    EmptyInput,
}

/// One annotator's edits for a sentence: sorted by `(start, end)` and
/// pairwise non-overlapping.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct EditSet {
    edits: Vec<Edit>,
    pub annotator: usize,
}

impl EditSet {
    pub fn new(mut edits: Vec<Edit>, annotator: usize) -> Result<Self, EditError> {
        edits.sort_by_key(|e| (e.start, e.end));
        check_disjoint(&edits)?;
        Ok(EditSet { edits, annotator })
    }

    pub fn empty(annotator: usize) -> Self {
        EditSet { edits: Vec::new(), annotator }
    }

    pub fn edits(&self) -> &[Edit] {
        &self.edits
    }

    pub fn len(&self) -> usize {
        self.edits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

fn check_disjoint(sorted: &[Edit]) -> Result<(), EditError> {
    for pair in sorted.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let clash = a.end > b.start || (a.is_insertion() && b.is_insertion() && a.start == b.start);
        if clash {
            return Err(EditError::Overlap { first: (a.start, a.end), second: (b.start, b.end) });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct M2Record {
    pub source: Vec<String>,
    pub references: Vec<EditSet>,
}

/// How raw text is split into units for edit extraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Granularity {
    /// Whitespace-separated tokens (parser words).
    #[default]
    Token,
    /// Individual non-whitespace characters.
    Char,
}

impl FromStr for Granularity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "token" | "word" => Ok(Granularity::Token),
            "char" => Ok(Granularity::Char),
            _ => Err(format!("unknown granularity `{s}` (expected `token` or `char`)")),
        }
    }
}

pub fn tokenize(text: &str, granularity: Granularity) -> Vec<String> {
    match granularity {
        Granularity::Token => text.split_whitespace().map(str::to_string).collect(),
        Granularity::Char => text.chars().filter(|c| !c.is_whitespace()).map(String::from).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Op {
    Keep,
    Sub,
    Del,
    Ins,
}

/// Minimal unit-cost alignment of `src` to `tgt`, with maximal runs of
/// non-matching operations merged into single edits.
///
/// The shared prefix and suffix are stripped before aligning, so padding
/// both sides with the same tokens never changes the extracted edits beyond
/// shifting their offsets.
pub fn extract_edits<S: AsRef<str>, T: AsRef<str>>(src: &[S], tgt: &[T]) -> EditSet {
    let prefix = src
        .iter()
        .zip(tgt)
        .take_while(|(a, b)| a.as_ref() == b.as_ref())
        .count();
    let suffix = src[prefix..]
        .iter()
        .rev()
        .zip(tgt[prefix..].iter().rev())
        .take_while(|(a, b)| a.as_ref() == b.as_ref())
        .count();
    let s = &src[prefix..src.len() - suffix];
    let t = &tgt[prefix..tgt.len() - suffix];

    let (n, m) = (s.len(), t.len());
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let cost = usize::from(s[i - 1].as_ref() != t[j - 1].as_ref());
            d[i][j] = (d[i - 1][j - 1] + cost).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = s[i - 1].as_ref() == t[j - 1].as_ref();
            if same && d[i][j] == d[i - 1][j - 1] {
                ops.push(Op::Keep);
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && d[i][j] == d[i - 1][j - 1] + 1 {
                ops.push(Op::Sub);
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && d[i][j] == d[i - 1][j] + 1 {
            ops.push(Op::Del);
            i -= 1;
        } else {
            ops.push(Op::Ins);
            j -= 1;
        }
    }
    ops.reverse();

    let mut edits = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<Edit> = None;
    for op in ops {
        if op == Op::Keep {
            edits.extend(open.take());
            i += 1;
            j += 1;
            continue;
        }
        let edit = open.get_or_insert_with(|| Edit {
            start: prefix + i,
            end: prefix + i,
            replacement: Vec::new(),
            type_tag: None,
        });
        if matches!(op, Op::Sub | Op::Del) {
            i += 1;
            edit.end = prefix + i;
        }
        if matches!(op, Op::Sub | Op::Ins) {
            edit.replacement.push(t[j].as_ref().to_string());
            j += 1;
        }
    }
    edits.extend(open);
    EditSet { edits, annotator: 0 }
}

/// Applies sorted, non-overlapping edits to `src`.
pub fn apply_edits<S: AsRef<str>>(src: &[S], edits: &[Edit]) -> Result<Vec<String>, EditError> {
    let mut sorted: Vec<&Edit> = edits.iter().collect();
    sorted.sort_by_key(|e| (e.start, e.end));
    for e in &sorted {
        if e.start > e.end || e.end > src.len() {
            return Err(EditError::OutOfBounds { start: e.start, end: e.end, len: src.len() });
        }
    }
    let owned: Vec<Edit> = sorted.iter().map(|&e| e.clone()).collect();
    check_disjoint(&owned)?;

    let mut out = Vec::with_capacity(src.len());
    let mut cursor = 0;
    for e in sorted {
        out.extend(src[cursor..e.start].iter().map(|t| t.as_ref().to_string()));
        out.extend(e.replacement.iter().cloned());
        cursor = e.end;
    }
    out.extend(src[cursor..].iter().map(|t| t.as_ref().to_string()));
    Ok(out)
}

/// Mean number of extracted edits per sentence pair.
pub fn avg_edit_stat<S: AsRef<str>>(pairs: &[(Vec<S>, Vec<S>)]) -> Result<f64, EditError> {
    if pairs.is_empty() {
        return Err(EditError::EmptyInput);
    }
    let total: usize = pairs.iter().map(|(s, t)| extract_edits(s, t).len()).sum();
    Ok(total as f64 / pairs.len() as f64)
}

const NONE: &str = "-NONE-";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct M2Error {
    pub line: usize,
    pub kind: M2ErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum M2ErrorKind {
    #[error("expected an `S` line to open the record")]
    MalformedHeader,
    #[error("malformed `A` line: {0}")]
    MalformedEdit(String),
    #[error("edit offsets {start}..{end} out of range for {len} source tokens")]
    OffsetOutOfRange { start: usize, end: usize, len: usize },
    #[error("new `S` line without a blank separator line before it")]
    MissingSeparator,
    #[error(transparent)]
    Edits(EditError),
}

struct PendingRecord {
    line: usize,
    source: Vec<String>,
    groups: Vec<(usize, Vec<Edit>)>,
}

impl PendingRecord {
    fn finish(self) -> Result<M2Record, M2Error> {
        let line = self.line;
        let references = if self.groups.is_empty() {
            vec![EditSet::empty(0)]
        } else {
            self.groups
                .into_iter()
                .map(|(annotator, edits)| EditSet::new(edits, annotator))
                .collect::<Result<_, _>>()
                .map_err(|e| M2Error { line, kind: M2ErrorKind::Edits(e) })?
        };
        Ok(M2Record { source: self.source, references })
    }
}

/// Parses M2 text. `A` lines are grouped by annotator id in order of first
/// appearance; a `noop` line yields an empty edit set for its annotator and a
/// record without any `A` line gets one empty reference for annotator 0.
pub fn read_m2(input: &str) -> Result<Vec<M2Record>, M2Error> {
    let mut records = Vec::new();
    let mut pending: Option<PendingRecord> = None;

    for (k, raw) in input.lines().enumerate() {
        let line = k + 1;
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let err = |kind| M2Error { line, kind };

        if raw.trim().is_empty() {
            if let Some(p) = pending.take() {
                records.push(p.finish()?);
            }
            continue;
        }
        if raw == "S" || raw.starts_with("S ") {
            if pending.is_some() {
                return Err(err(M2ErrorKind::MissingSeparator));
            }
            let source = raw.get(2..).unwrap_or("").split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect();
            pending = Some(PendingRecord { line, source, groups: Vec::new() });
            continue;
        }
        let Some(body) = raw.strip_prefix("A ") else {
            let kind = if pending.is_some() {
                M2ErrorKind::MalformedEdit("expected a line starting with `A `".to_string())
            } else {
                M2ErrorKind::MalformedHeader
            };
            return Err(err(kind));
        };
        let Some(p) = pending.as_mut() else {
            return Err(err(M2ErrorKind::MalformedHeader));
        };

        let fields: Vec<&str> = body.split("|||").collect();
        if fields.len() != 6 {
            return Err(err(M2ErrorKind::MalformedEdit(format!("expected 6 `|||` fields, found {}", fields.len()))));
        }
        let annotator: usize = fields[5]
            .trim()
            .parse()
            .map_err(|_| err(M2ErrorKind::MalformedEdit(format!("annotator id `{}`", fields[5]))))?;
        let group = match p.groups.iter().position(|(a, _)| *a == annotator) {
            Some(g) => g,
            None => {
                p.groups.push((annotator, Vec::new()));
                p.groups.len() - 1
            }
        };

        let mut offsets = fields[0].split(' ');
        let (Some(start), Some(end), None) = (offsets.next(), offsets.next(), offsets.next()) else {
            return Err(err(M2ErrorKind::MalformedEdit(format!("offsets `{}`", fields[0]))));
        };
        if start == "-1" && end == "-1" {
            continue;
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| err(M2ErrorKind::MalformedEdit(format!("offsets `{}`", fields[0]))))
        };
        let (start, end) = (parse(start)?, parse(end)?);
        if start > end || end > p.source.len() {
            return Err(err(M2ErrorKind::OffsetOutOfRange { start, end, len: p.source.len() }));
        }
        let replacement = if fields[2] == NONE {
            Vec::new()
        } else {
            fields[2].split(' ').filter(|t| !t.is_empty()).map(str::to_string).collect()
        };
        let type_tag = (fields[1] != NONE).then(|| fields[1].to_string());
        p.groups[group].1.push(Edit { start, end, replacement, type_tag });
    }
    if let Some(p) = pending.take() {
        records.push(p.finish()?);
    }
    Ok(records)
}

/// Formats records as M2 text, one blank line after each record.
pub fn format_m2(records: &[M2Record]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "S {}", r.source.join(" "));
        for set in &r.references {
            if set.is_empty() {
                let _ = writeln!(out, "A -1 -1|||noop|||{NONE}|||REQUIRED|||{NONE}|||{}", set.annotator);
            }
            for e in set.edits() {
                let _ = writeln!(
                    out,
                    "A {} {}|||{}|||{}|||REQUIRED|||{NONE}|||{}",
                    e.start,
                    e.end,
                    e.type_tag.as_deref().unwrap_or(NONE),
                    e.replacement.join(" "),
                    set.annotator
                );
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_m2<W: Write>(records: &[M2Record], mut out: W) -> io::Result<()> {
    out.write_all(format_m2(records).as_bytes())
}
