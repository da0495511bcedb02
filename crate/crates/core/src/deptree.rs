//! Dependency trees read from CoNLL-U, with the structural queries the
//! samplers and corruption rules are built on: undirected tree distance,
//! head/dependent relationships, arc labels, subtree spans and the
//! subject/predicate/object skeleton of a clause.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 1-based token position, as in the CoNLL-U ID column. `0` denotes the
/// artificial root in head links.
pub type TokenId = usize;

/// Half-open `(start, end)` character offsets into the sentence text.
pub type CharSpan = (usize, usize);

/// Part-of-speech tags (`xpos`) that mark named entities in the LTP tagset:
/// person, organisation and place names.
pub const ENTITY_XPOS: [&str; 3] = ["nh", "ni", "ns"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub index: TokenId,
    pub form: String,
    pub lemma: String,
    pub upos: String,
    pub xpos: String,
    pub feats: String,
    pub head: TokenId,
    pub deprel: String,
    pub deps: String,
    pub misc: Option<String>,
    pub char_span: CharSpan,
}

impl Token {
    /// A token with the columns the toolkit reads; the rest are left empty.
    pub fn new(form: &str, upos: &str, xpos: &str, head: TokenId, deprel: &str) -> Self {
        Token {
            index: 0,
            form: form.to_string(),
            lemma: "_".to_string(),
            upos: upos.to_string(),
            xpos: xpos.to_string(),
            feats: "_".to_string(),
            head,
            deprel: deprel.to_string(),
            deps: "_".to_string(),
            misc: None,
            char_span: (0, 0),
        }
    }

    pub fn with_misc(mut self, misc: &str) -> Self {
        self.misc = Some(misc.to_string());
        self
    }

    /// Whether the token is tagged as a named entity, either through an NER
    /// entry in MISC (`NE=`, `NER=` or `Entity=` with a value other than `O`)
    /// or, failing that, through an entity xpos tag.
    pub fn is_entity(&self) -> bool {
        if let Some(misc) = &self.misc {
            for entry in misc.split('|') {
                if let Some((key, value)) = entry.split_once('=') {
                    if matches!(key, "NE" | "NER" | "Entity") && value != "O" && value != "_" {
                        return true;
                    }
                }
            }
        }
        ENTITY_XPOS.contains(&self.xpos.as_str())
    }

    pub fn is_verb(&self) -> bool {
        matches!(self.upos.as_str(), "VERB" | "AUX" | "v") || self.xpos.starts_with('v')
    }

    pub fn is_noun(&self) -> bool {
        matches!(self.upos.as_str(), "NOUN" | "PROPN" | "PRON" | "n") || self.xpos.starts_with('n')
    }
}

/// Structural relationship between an ordered pair of tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relationship {
    Child,
    Parent,
    Others,
}

impl Relationship {
    pub fn as_str(self) -> &'static str {
        match self {
            Relationship::Child => "child",
            Relationship::Parent => "parent",
            Relationship::Others => "others",
        }
    }
}

impl fmt::Display for Relationship {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Relationship {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "child" => Ok(Relationship::Child),
            "parent" => Ok(Relationship::Parent),
            "others" => Ok(Relationship::Others),
            _ => Err(format!("unknown relationship `{s}`")),
        }
    }
}

/// Which end of an arc is called the child.
///
/// `Standard` labels `(i, j)` as `child` when `head(i) = j`. `Flipped` swaps
/// `child` and `parent` everywhere, for the reading in which the governor is
/// the one called child.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Orientation {
    #[default]
    Standard,
    Flipped,
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(Orientation::Standard),
            "flip" | "flipped" => Ok(Orientation::Flipped),
            _ => Err(format!("unknown orientation `{s}` (expected `standard` or `flip`)")),
        }
    }
}

/// Errors raised while building or querying a tree. Token positions are
/// 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TreeError {
    #[error("sentence has no tokens")]
    Empty,
    #[error("token {token}: head {head} out of range 0..={len}")]
    HeadOutOfRange { token: TokenId, head: usize, len: usize },
    #[error("tokens {first} and {second} are both attached to the root")]
    MultipleRoots { first: TokenId, second: TokenId },
    #[error("token {token} lies on a head cycle")]
    Cycle { token: TokenId },
    #[error("token {token}: form `{form}` not found at its position in the sentence text")]
    SpanMismatch { token: TokenId, form: String },
    #[error("sentence text has trailing content `{rest}` after the last token")]
    TrailingText { rest: String },
    #[error("token index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("a token cannot be paired with itself (index {0})")]
    SameIndex(TokenId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepTree {
    text: String,
    tokens: Vec<Token>,
    comments: Vec<String>,
    depth: Vec<usize>,
}

/// Tokens dominated by a node, in sentence order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    pub tokens: Vec<TokenId>,
    /// From the start of the leftmost token to the end of the rightmost one.
    pub char_span: CharSpan,
    pub contiguous: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Spo {
    pub subject: Option<TokenId>,
    pub predicate: TokenId,
    pub object: Option<TokenId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModifierKind {
    Adverbial,
    Attribute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Modifier {
    pub kind: ModifierKind,
    /// The modifier word, i.e. the root of the modifier subtree.
    pub root: TokenId,
    /// The verb or noun it modifies.
    pub head: TokenId,
}

impl DepTree {
    /// Builds a tree from tokens in sentence order. Token indices are
    /// renumbered `1..=n`; character spans are computed against the
    /// `# text = ...` comment when present, otherwise the text is the plain
    /// concatenation of the forms.
    pub fn from_tokens(comments: Vec<String>, mut tokens: Vec<Token>) -> Result<Self, TreeError> {
        if tokens.is_empty() {
            return Err(TreeError::Empty);
        }
        let n = tokens.len();
        for (k, tok) in tokens.iter_mut().enumerate() {
            tok.index = k + 1;
            if tok.head > n {
                return Err(TreeError::HeadOutOfRange { token: k + 1, head: tok.head, len: n });
            }
        }

        let mut root = None;
        for tok in &tokens {
            if tok.head == 0 {
                if let Some(first) = root {
                    return Err(TreeError::MultipleRoots { first, second: tok.index });
                }
                root = Some(tok.index);
            }
        }
        if root.is_none() {
            // Without a root every head chain ends in a cycle, which is the
            // more useful thing to report.
            let token = first_cycle_member(&tokens).unwrap_or(1);
            return Err(TreeError::Cycle { token });
        }

        let mut depth = vec![0usize; n];
        for tok in &tokens {
            let mut steps = 0;
            let mut cur = tok.index;
            while cur != 0 {
                steps += 1;
                if steps > n {
                    return Err(TreeError::Cycle { token: tok.index });
                }
                cur = tokens[cur - 1].head;
            }
            depth[tok.index - 1] = steps - 1;
        }

        let text = comments
            .iter()
            .find_map(|c| text_comment(c))
            .map(str::to_string);
        let text = match text {
            Some(text) => {
                align_spans(&text, &mut tokens)?;
                text
            }
            None => {
                let mut text = String::new();
                let mut offset = 0;
                for tok in tokens.iter_mut() {
                    let len = tok.form.chars().count();
                    tok.char_span = (offset, offset + len);
                    offset += len;
                    text.push_str(&tok.form);
                }
                text
            }
        };

        Ok(DepTree { text, tokens, comments, depth })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }

    /// Comment lines without their leading `#`, in file order.
    pub fn comments(&self) -> &[String] {
        &self.comments
    }

    /// Value of a `# sent_id = ...` comment, if any.
    pub fn sent_id(&self) -> Option<&str> {
        self.comments.iter().find_map(|c| {
            let (key, value) = c.split_once('=')?;
            (key.trim() == "sent_id").then(|| value.trim())
        })
    }

    /// `sent_id` if present, else the 1-based position `ordinal + 1`.
    pub fn source_id(&self, ordinal: usize) -> String {
        self.sent_id().map_or_else(|| (ordinal + 1).to_string(), str::to_string)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn token(&self, index: TokenId) -> Result<&Token, TreeError> {
        self.check(index)?;
        Ok(&self.tokens[index - 1])
    }

    pub fn root(&self) -> TokenId {
        self.tokens
            .iter()
            .find(|t| t.head == 0)
            .map(|t| t.index)
            .expect("validated tree has a root")
    }

    /// Text covered by a character span.
    pub fn slice(&self, span: CharSpan) -> String {
        self.text.chars().skip(span.0).take(span.1 - span.0).collect()
    }

    /// Dependents of `index`, in sentence order.
    pub fn children(&self, index: TokenId) -> impl Iterator<Item = &Token> + '_ {
        self.tokens.iter().filter(move |t| t.head == index)
    }

    /// First dependent of `index` carrying `deprel`, by sentence order.
    pub fn child_with(&self, index: TokenId, deprel: &str) -> Option<TokenId> {
        self.children(index).find(|t| t.deprel == deprel).map(|t| t.index)
    }

    fn check(&self, index: usize) -> Result<(), TreeError> {
        if index == 0 || index > self.tokens.len() {
            Err(TreeError::IndexOutOfRange { index, len: self.tokens.len() })
        } else {
            Ok(())
        }
    }

    /// Number of edges on the undirected path between `i` and `j`.
    pub fn distance(&self, i: TokenId, j: TokenId) -> Result<usize, TreeError> {
        self.check(i)?;
        self.check(j)?;
        let (mut a, mut b) = (i, j);
        let mut dist = 0;
        while self.depth[a - 1] > self.depth[b - 1] {
            a = self.tokens[a - 1].head;
            dist += 1;
        }
        while self.depth[b - 1] > self.depth[a - 1] {
            b = self.tokens[b - 1].head;
            dist += 1;
        }
        while a != b {
            a = self.tokens[a - 1].head;
            b = self.tokens[b - 1].head;
            dist += 2;
        }
        Ok(dist)
    }

    pub fn relationship(&self, i: TokenId, j: TokenId) -> Result<Relationship, TreeError> {
        self.relationship_oriented(i, j, Orientation::Standard)
    }

    pub fn relationship_oriented(
        &self,
        i: TokenId,
        j: TokenId,
        orientation: Orientation,
    ) -> Result<Relationship, TreeError> {
        self.check(i)?;
        self.check(j)?;
        if i == j {
            return Err(TreeError::SameIndex(i));
        }
        let rel = if self.tokens[i - 1].head == j {
            Relationship::Child
        } else if self.tokens[j - 1].head == i {
            Relationship::Parent
        } else {
            Relationship::Others
        };
        Ok(match (orientation, rel) {
            (Orientation::Flipped, Relationship::Child) => Relationship::Parent,
            (Orientation::Flipped, Relationship::Parent) => Relationship::Child,
            _ => rel,
        })
    }

    /// Label of the arc joining `i` and `j` in either direction.
    pub fn relation_label(&self, i: TokenId, j: TokenId) -> Result<Option<&str>, TreeError> {
        self.check(i)?;
        self.check(j)?;
        if self.tokens[i - 1].head == j {
            Ok(Some(&self.tokens[i - 1].deprel))
        } else if self.tokens[j - 1].head == i {
            Ok(Some(&self.tokens[j - 1].deprel))
        } else {
            Ok(None)
        }
    }

    /// Whether `ancestor` dominates `index` (every token dominates itself).
    pub fn dominates(&self, ancestor: TokenId, index: TokenId) -> bool {
        let mut cur = index;
        while cur != 0 {
            if cur == ancestor {
                return true;
            }
            cur = self.tokens[cur - 1].head;
        }
        false
    }

    pub fn subtree(&self, index: TokenId) -> Result<Subtree, TreeError> {
        self.check(index)?;
        let tokens: Vec<TokenId> = (1..=self.len()).filter(|&k| self.dominates(index, k)).collect();
        let first = tokens[0];
        let last = *tokens.last().unwrap();
        Ok(Subtree {
            char_span: (self.tokens[first - 1].char_span.0, self.tokens[last - 1].char_span.1),
            contiguous: last - first + 1 == tokens.len(),
            tokens,
        })
    }

    /// Subject-predicate-object skeleton: the root is the predicate, the
    /// subject and object are its leftmost `SBV` and `VOB` dependents.
    pub fn spo(&self) -> Spo {
        let predicate = self.root();
        Spo {
            subject: self.child_with(predicate, "SBV"),
            predicate,
            object: self.child_with(predicate, "VOB"),
        }
    }

    /// `ADV` dependents of verbs and `ATT` dependents of nouns, in sentence
    /// order of the modifier.
    pub fn modifiers(&self) -> Vec<Modifier> {
        self.tokens
            .iter()
            .filter(|t| t.head != 0)
            .filter_map(|t| {
                let head = &self.tokens[t.head - 1];
                let kind = match t.deprel.as_str() {
                    "ADV" if head.is_verb() => ModifierKind::Adverbial,
                    "ATT" if head.is_noun() => ModifierKind::Attribute,
                    _ => return None,
                };
                Some(Modifier { kind, root: t.index, head: head.index })
            })
            .collect()
    }
}

fn first_cycle_member(tokens: &[Token]) -> Option<TokenId> {
    let n = tokens.len();
    let mut cur = tokens.first()?.index;
    // After n steps we are guaranteed to be inside the cycle.
    for _ in 0..n {
        cur = tokens[cur - 1].head;
        if cur == 0 {
            return None;
        }
    }
    Some(cur)
}

fn text_comment(comment: &str) -> Option<&str> {
    let (key, value) = comment.split_once('=')?;
    (key.trim() == "text").then(|| value.strip_prefix(' ').unwrap_or(value))
}

/// Places each form in `text`, allowing only whitespace between tokens.
fn align_spans(text: &str, tokens: &mut [Token]) -> Result<(), TreeError> {
    let chars: Vec<char> = text.chars().collect();
    let mut cursor = 0;
    for tok in tokens.iter_mut() {
        while cursor < chars.len() && chars[cursor].is_whitespace() {
            cursor += 1;
        }
        let form: Vec<char> = tok.form.chars().collect();
        let end = cursor + form.len();
        if end > chars.len() || chars[cursor..end] != form[..] {
            return Err(TreeError::SpanMismatch { token: tok.index, form: tok.form.clone() });
        }
        tok.char_span = (cursor, end);
        cursor = end;
    }
    let rest: String = chars[cursor..].iter().collect();
    if !rest.trim().is_empty() {
        return Err(TreeError::TrailingText { rest });
    }
    Ok(())
}

/// A CoNLL-U problem located at a 1-based line of the input.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {kind}")]
pub struct ConlluError {
    pub line: usize,
    pub kind: ConlluErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConlluErrorKind {
    #[error("expected 10 tab-separated columns, found {0}")]
    ColumnCount(usize),
    #[error("token id `{0}` is not a positive integer (ranges and empty nodes are not supported)")]
    BadId(String),
    #[error("expected token id {expected}, found {found}")]
    IdSequence { expected: usize, found: usize },
    #[error("head `{0}` is not an integer")]
    NonIntegerHead(String),
    #[error(transparent)]
    Tree(TreeError),
}

/// Reads every record, failing on the first malformed one.
pub fn parse_conllu(input: &str) -> Result<Vec<DepTree>, ConlluError> {
    let mut trees = Vec::new();
    for record in records(input) {
        trees.push(parse_record(&record)?);
    }
    Ok(trees)
}

/// Reads every record, skipping malformed ones. Returns the good trees and
/// the errors of the rejected records.
pub fn parse_conllu_lenient(input: &str) -> (Vec<DepTree>, Vec<ConlluError>) {
    let mut trees = Vec::new();
    let mut errors = Vec::new();
    for record in records(input) {
        match parse_record(&record) {
            Ok(tree) => trees.push(tree),
            Err(e) => errors.push(e),
        }
    }
    (trees, errors)
}

/// Lines of one record paired with their 1-based line numbers.
type Record<'a> = Vec<(usize, &'a str)>;

fn records(input: &str) -> Vec<Record<'_>> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    for (k, line) in input.lines().enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(std::mem::take(&mut current));
            }
        } else {
            current.push((k + 1, line));
        }
    }
    if !current.is_empty() {
        out.push(current);
    }
    out
}

fn parse_record(record: &[(usize, &str)]) -> Result<DepTree, ConlluError> {
    let first_line = record[0].0;
    let mut comments = Vec::new();
    let mut tokens = Vec::new();
    let mut lines = Vec::new();

    for &(line, content) in record {
        if let Some(comment) = content.strip_prefix('#') {
            comments.push(comment.to_string());
            continue;
        }
        let err = |kind| ConlluError { line, kind };
        let cols: Vec<&str> = content.split('\t').collect();
        if cols.len() != 10 {
            return Err(err(ConlluErrorKind::ColumnCount(cols.len())));
        }
        let id: usize = cols[0]
            .parse()
            .ok()
            .filter(|&id| id > 0)
            .ok_or_else(|| err(ConlluErrorKind::BadId(cols[0].to_string())))?;
        if id != tokens.len() + 1 {
            return Err(err(ConlluErrorKind::IdSequence { expected: tokens.len() + 1, found: id }));
        }
        let head: usize = cols[6]
            .parse()
            .map_err(|_| err(ConlluErrorKind::NonIntegerHead(cols[6].to_string())))?;
        tokens.push(Token {
            index: id,
            form: cols[1].to_string(),
            lemma: cols[2].to_string(),
            upos: cols[3].to_string(),
            xpos: cols[4].to_string(),
            feats: cols[5].to_string(),
            head,
            deprel: cols[7].to_string(),
            deps: cols[8].to_string(),
            misc: (cols[9] != "_").then(|| cols[9].to_string()),
            char_span: (0, 0),
        });
        lines.push(line);
    }

    DepTree::from_tokens(comments, tokens).map_err(|e| {
        let line = match &e {
            TreeError::HeadOutOfRange { token, .. }
            | TreeError::Cycle { token }
            | TreeError::SpanMismatch { token, .. } => lines[token - 1],
            TreeError::MultipleRoots { second, .. } => lines[second - 1],
            _ => first_line,
        };
        ConlluError { line, kind: ConlluErrorKind::Tree(e) }
    })
}

/// Writes trees back as CoNLL-U, each record followed by a blank line.
pub fn serialize_conllu(trees: &[DepTree]) -> String {
    let mut out = String::new();
    for tree in trees {
        for comment in &tree.comments {
            out.push('#');
            out.push_str(comment);
            out.push('\n');
        }
        for t in &tree.tokens {
            let misc = t.misc.as_deref().unwrap_or("_");
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                t.index, t.form, t.lemma, t.upos, t.xpos, t.feats, t.head, t.deprel, t.deps, misc
            ));
        }
        out.push('\n');
    }
    out
}
