//! Dataset statistics tables.
//!
//! Recognition data (one labeled sentence per line) gets `#Line`,
//! `Avg.Length` and `Error Ratio`; correction data (source/target pairs)
//! gets `#Line`, `Avg.Length.S`, `Avg.Length.T` and `Avg.Edit`.

use std::fmt::Write as _;

use thiserror::Error;

use crate::edits::{extract_edits, tokenize, Granularity};
use crate::metrics::SentenceLabel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StatsError {
    #[error("input is empty")]
    Empty,
    #[error("line {line}: expected two tab-separated columns")]
    Malformed { line: usize },
    #[error("line {line}: unknown label `{label}`")]
    UnknownLabel { line: usize, label: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledStats {
    pub lines: usize,
    pub avg_length: f64,
    /// Share of incorrect sentences, in `[0, 1]`.
    pub error_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairStats {
    pub lines: usize,
    pub avg_length_source: f64,
    pub avg_length_target: f64,
    pub avg_edit: f64,
}

/// Sentence length in characters, whitespace excluded.
pub fn char_length(s: &str) -> usize {
    s.chars().filter(|c| !c.is_whitespace()).count()
}

fn two_columns(text: &str) -> Result<Vec<(usize, &str, &str)>, StatsError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(k, l)| {
            let (a, b) = l.split_once('\t').ok_or(StatsError::Malformed { line: k + 1 })?;
            if b.contains('\t') {
                return Err(StatsError::Malformed { line: k + 1 });
            }
            Ok((k + 1, a, b))
        })
        .collect()
}

/// `label<TAB>sentence` lines, label `correct` or `incorrect`.
pub fn parse_labeled(text: &str) -> Result<Vec<(SentenceLabel, String)>, StatsError> {
    two_columns(text)?
        .into_iter()
        .map(|(line, label, sentence)| {
            let label = label
                .parse()
                .map_err(|_| StatsError::UnknownLabel { line, label: label.to_string() })?;
            Ok((label, sentence.to_string()))
        })
        .collect()
}

/// `source<TAB>target` lines.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>, StatsError> {
    Ok(two_columns(text)?.into_iter().map(|(_, s, t)| (s.to_string(), t.to_string())).collect())
}

pub fn labeled_stats(rows: &[(SentenceLabel, String)]) -> Result<LabeledStats, StatsError> {
    if rows.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = rows.len() as f64;
    let chars: usize = rows.iter().map(|(_, s)| char_length(s)).sum();
    let incorrect = rows.iter().filter(|(l, _)| *l == SentenceLabel::Incorrect).count();
    Ok(LabeledStats { lines: rows.len(), avg_length: chars as f64 / n, error_ratio: incorrect as f64 / n })
}

/// `Avg.Edit` counts edits between the two sides tokenized at `granularity`.
pub fn pair_stats(pairs: &[(String, String)], granularity: Granularity) -> Result<PairStats, StatsError> {
    if pairs.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = pairs.len() as f64;
    let src: usize = pairs.iter().map(|(s, _)| char_length(s)).sum();
    let tgt: usize = pairs.iter().map(|(_, t)| char_length(t)).sum();
    let edits: usize = pairs
        .iter()
        .map(|(s, t)| extract_edits(&tokenize(s, granularity), &tokenize(t, granularity)).len())
        .sum();
    Ok(PairStats {
        lines: pairs.len(),
        avg_length_source: src as f64 / n,
        avg_length_target: tgt as f64 / n,
        avg_edit: edits as f64 / n,
    })
}

/// `45248` -> `45,248`.
pub fn group_thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (k, c) in digits.chars().enumerate() {
        if k > 0 && (digits.len() - k).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Tab-separated table, one row per named split.
pub fn format_labeled_table(rows: &[(String, LabeledStats)]) -> String {
    let mut out = String::from("\t#Line\tAvg.Length\tError Ratio\n");
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "{name}\t{}\t{:.1}\t{:.1}%",
            group_thousands(s.lines),
            s.avg_length,
            100.0 * s.error_ratio
        );
    }
    out
}

pub fn format_pair_table(rows: &[(String, PairStats)]) -> String {
    let mut out = String::from("\t#Line\tAvg.Length.S\tAvg.Length.T\tAvg.Edit\n");
    for (name, s) in rows {
        let _ = writeln!(
            out,
            "{name}\t{}\t{:.1}\t{:.1}\t{:.1}",
            group_thousands(s.lines),
            s.avg_length_source,
            s.avg_length_target,
            s.avg_edit
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_ratio_example() {
        let rows = parse_labeled("incorrect\t甲乙\nincorrect\t丙丁\ncorrect\t戊己\nincorrect\t庚辛\n").unwrap();
        let s = labeled_stats(&rows).unwrap();
        assert_eq!(s.lines, 4);
        assert_eq!(s.error_ratio, 0.75);
        assert_eq!(s.avg_length, 2.0);
        assert_eq!(
            format_labeled_table(&[("train".to_string(), s)]),
            "\t#Line\tAvg.Length\tError Ratio\ntrain\t4\t2.0\t75.0%\n"
        );
    }

    #[test]
    fn length_counts_characters() {
        let rows = parse_labeled("correct\t一二三四五 六七八九十\n").unwrap();
        assert_eq!(labeled_stats(&rows).unwrap().avg_length, 10.0);
    }

    #[test]
    fn pair_table() {
        let same = parse_pairs("甲乙丙\t甲乙丙\n丁戊\t丁戊\n").unwrap();
        let s = pair_stats(&same, Granularity::Char).unwrap();
        assert_eq!(s.avg_edit, 0.0);
        assert_eq!(s.avg_length_source, 2.5);

        // One substitution and one deletion separated by a kept char: 2 edits.
        let pairs = parse_pairs("甲乙丙丁\t甲戊丙\n").unwrap();
        let s = pair_stats(&pairs, Granularity::Char).unwrap();
        assert_eq!(s.avg_edit, 2.0);
        assert_eq!(
            format_pair_table(&[("dev".to_string(), s)]),
            "\t#Line\tAvg.Length.S\tAvg.Length.T\tAvg.Edit\ndev\t1\t4.0\t3.0\t2.0\n"
        );
    }

    #[test]
    fn errors() {
        assert_eq!(labeled_stats(&[]), Err(StatsError::Empty));
        assert_eq!(pair_stats(&[], Granularity::Char), Err(StatsError::Empty));
        assert_eq!(parse_pairs("only one column\n"), Err(StatsError::Malformed { line: 1 }));
        assert_eq!(
            parse_labeled("correct\tok\nmaybe\tx\n"),
            Err(StatsError::UnknownLabel { line: 2, label: "maybe".into() })
        );
    }

    #[test]
    fn thousands() {
        assert_eq!(group_thousands(0), "0");
        assert_eq!(group_thousands(999), "999");
        assert_eq!(group_thousands(45248), "45,248");
        assert_eq!(group_thousands(1000000), "1,000,000");
    }
}
