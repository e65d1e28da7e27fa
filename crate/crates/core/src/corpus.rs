//! CoNLL-style corpora with BIO tags.
//!
//! Files are UTF-8, one token per line, blank lines between sentences. A line
//! starting with `#` at the start of a sentence carries the sentence id
//! (`# id <value> ...`). By default the token is column 0 and the gold tag is
//! the last column; any columns in between are kept verbatim and written back
//! unchanged.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

pub const OUTSIDE: &str = "O";

/// A parsed BIO label borrowing its class name.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bio<'a> {
    Outside,
    Begin(&'a str),
    Inside(&'a str),
}

impl<'a> Bio<'a> {
    pub fn parse(label: &'a str) -> Result<Self> {
        if label == OUTSIDE {
            return Ok(Bio::Outside);
        }
        let bad = || Error::InvalidLabel(label.to_string());
        let (prefix, class) = label.split_once('-').ok_or_else(bad)?;
        if class.is_empty() || class.chars().any(char::is_whitespace) {
            return Err(bad());
        }
        match prefix {
            "B" => Ok(Bio::Begin(class)),
            "I" => Ok(Bio::Inside(class)),
            _ => Err(bad()),
        }
    }

    pub fn class(self) -> Option<&'a str> {
        match self {
            Bio::Outside => None,
            Bio::Begin(c) | Bio::Inside(c) => Some(c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub pos: Option<String>,
    pub gold_tag: String,
    /// Columns between the token and the tag, kept verbatim.
    pub columns: Vec<String>,
}

impl Token {
    pub fn new(surface: impl Into<String>, gold_tag: impl Into<String>) -> Self {
        Self {
            surface: surface.into(),
            pos: None,
            gold_tag: gold_tag.into(),
            columns: Vec::new(),
        }
    }

    pub fn with_pos(mut self, pos: impl Into<String>) -> Self {
        self.pos = Some(pos.into());
        self
    }

    fn middle_columns(&self) -> Vec<&str> {
        if !self.columns.is_empty() {
            self.columns.iter().map(String::as_str).collect()
        } else if let Some(pos) = &self.pos {
            vec![pos.as_str()]
        } else {
            Vec::new()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    pub fn new(id: impl Into<String>, tokens: Vec<Token>) -> Self {
        Self {
            id: id.into(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn gold_tags(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.gold_tag.clone()).collect()
    }
}

/// Entity classes plus the derived label list `O, B-c1, I-c1, B-c2, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct TagSet {
    classes: Vec<String>,
    labels: Vec<String>,
}

impl TagSet {
    /// Builds a tagset keeping the first occurrence of each class name.
    pub fn new<I, S>(classes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut seen = HashSet::new();
        let classes: Vec<String> = classes
            .into_iter()
            .map(Into::into)
            .filter(|c| seen.insert(c.clone()))
            .collect();
        let mut labels = Vec::with_capacity(2 * classes.len() + 1);
        labels.push(OUTSIDE.to_string());
        for c in &classes {
            labels.push(format!("B-{c}"));
            labels.push(format!("I-{c}"));
        }
        Self { classes, labels }
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn contains_class(&self, class: &str) -> bool {
        self.classes.iter().any(|c| c == class)
    }

    /// Sorted union of both class sets.
    pub fn union(&self, other: &TagSet) -> TagSet {
        let all: BTreeSet<&String> = self.classes.iter().chain(&other.classes).collect();
        TagSet::new(all.into_iter().cloned())
    }
}

impl From<Vec<String>> for TagSet {
    fn from(classes: Vec<String>) -> Self {
        TagSet::new(classes)
    }
}

impl From<TagSet> for Vec<String> {
    fn from(t: TagSet) -> Self {
        t.classes
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    pub name: String,
    pub sentences: Vec<Sentence>,
    pub tagset: TagSet,
    pub provenance: Vec<String>,
    /// False when the source had no gold column; every gold tag is then `O`.
    pub labeled: bool,
}

impl LabeledCorpus {
    /// Builds a corpus, inferring the tagset (sorted) from the gold tags.
    pub fn new(name: impl Into<String>, sentences: Vec<Sentence>) -> Result<Self> {
        let name = name.into();
        let mut classes = BTreeSet::new();
        for s in &sentences {
            for t in &s.tokens {
                if let Some(c) = Bio::parse(&t.gold_tag)?.class() {
                    classes.insert(c.to_string());
                }
            }
        }
        let corpus = Self {
            provenance: vec![format!("source:{name}")],
            name,
            sentences,
            tagset: TagSet::new(classes),
            labeled: true,
        };
        corpus.validate()?;
        Ok(corpus)
    }

    /// Checks the corpus invariants.
    pub fn validate(&self) -> Result<()> {
        if self.sentences.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "corpus `{}` has no sentences",
                self.name
            )));
        }
        let mut ids = HashSet::new();
        for s in &self.sentences {
            if s.id.is_empty() || s.id.chars().any(char::is_whitespace) {
                return Err(Error::InvalidArgument(format!(
                    "sentence id `{}` must be non-empty and whitespace-free",
                    s.id
                )));
            }
            if !ids.insert(s.id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate sentence id `{}`",
                    s.id
                )));
            }
            if s.tokens.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "sentence `{}` has no tokens",
                    s.id
                )));
            }
            for t in &s.tokens {
                if t.surface.is_empty() || t.surface.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidArgument(format!(
                        "token `{}` in sentence `{}` is empty or contains whitespace",
                        t.surface, s.id
                    )));
                }
                if let Some(c) = Bio::parse(&t.gold_tag)?.class() {
                    if !self.tagset.contains_class(c) {
                        return Err(Error::InvalidArgument(format!(
                            "class `{c}` in sentence `{}` is not in the tagset",
                            s.id
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn token_count(&self) -> usize {
        self.sentences.iter().map(Sentence::len).sum()
    }

    /// True when every token carries a POS tag.
    pub fn has_pos(&self) -> bool {
        self.sentences
            .iter()
            .flat_map(|s| &s.tokens)
            .all(|t| t.pos.is_some())
    }

    pub fn gold_tags(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(Sentence::gold_tags).collect()
    }
}

/// An entity mention covering tokens `start..end`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Chunk {
    pub class: String,
    pub start: usize,
    pub end: usize,
}

impl Chunk {
    pub fn new(class: impl Into<String>, start: usize, end: usize) -> Self {
        Self {
            class: class.into(),
            start,
            end,
        }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

impl fmt::Display for Chunk {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({},{})", self.class, self.start, self.end)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TagColumn {
    Last,
    Index(usize),
    /// Unlabeled input: every token gets `O` and the corpus is marked unlabeled.
    Absent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ColumnConfig {
    pub token: usize,
    pub tag: TagColumn,
    pub pos: Option<usize>,
}

impl Default for ColumnConfig {
    fn default() -> Self {
        Self {
            token: 0,
            tag: TagColumn::Last,
            pos: None,
        }
    }
}

impl ColumnConfig {
    pub fn unlabeled() -> Self {
        Self {
            tag: TagColumn::Absent,
            ..Self::default()
        }
    }

    pub fn with_pos(mut self, column: usize) -> Self {
        self.pos = Some(column);
        self
    }
}

/// Text normalization applied to every token surface after NFC.
pub type Normalizer = dyn Fn(&str) -> String;

pub fn parse_conll(text: &str, columns: ColumnConfig, source_name: &str) -> Result<LabeledCorpus> {
    parse_conll_with(text, columns, source_name, &|s: &str| s.to_string())
}

/// Like [`parse_conll`] with a custom surface normalizer.
pub fn parse_conll_with(
    text: &str,
    columns: ColumnConfig,
    source_name: &str,
    normalize: &Normalizer,
) -> Result<LabeledCorpus> {
    let err = |line: usize, message: String| Error::Parse {
        source_name: source_name.to_string(),
        line,
        message,
    };

    let mut sentences: Vec<Sentence> = Vec::new();
    let mut ids = HashSet::new();
    let mut current: Vec<Token> = Vec::new();
    let mut pending_id: Option<(String, usize)> = None;
    let mut width: Option<usize> = None;
    let mut generated = 0usize;
    let mut classes = BTreeSet::new();

    let mut finish = |tokens: &mut Vec<Token>,
                      pending: &mut Option<(String, usize)>,
                      sentences: &mut Vec<Sentence>,
                      line: usize|
     -> Result<()> {
        if tokens.is_empty() {
            return Ok(());
        }
        let (id, id_line) = match pending.take() {
            Some(p) => p,
            None => loop {
                generated += 1;
                let candidate = format!("s{generated}");
                if !ids.contains(&candidate) {
                    break (candidate, line);
                }
            },
        };
        if !ids.insert(id.clone()) {
            return Err(err(id_line, format!("duplicate sentence id `{id}`")));
        }
        sentences.push(Sentence::new(id, std::mem::take(tokens)));
        Ok(())
    };

    let mut last_line = 0;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        last_line = line_no;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            finish(&mut current, &mut pending_id, &mut sentences, line_no)?;
            continue;
        }
        if current.is_empty() && line.starts_with('#') {
            if let Some(id) = comment_id(line) {
                if pending_id.is_none() || line[1..].trim_start().starts_with("id ") {
                    pending_id = Some((id, line_no));
                }
            }
            continue;
        }

        let line: String = line.nfc().collect();
        let fields: Vec<&str> = line.split_whitespace().collect();
        let expected = *width.get_or_insert(fields.len());
        if fields.len() != expected {
            return Err(err(
                line_no,
                format!("expected {expected} columns, found {}", fields.len()),
            ));
        }
        let tag_index = match columns.tag {
            TagColumn::Last => Some(fields.len() - 1),
            TagColumn::Index(i) => Some(i),
            TagColumn::Absent => None,
        };
        let min_width = match tag_index {
            Some(t) => 2.max(t + 1).max(columns.token + 1),
            None => columns.token + 1,
        };
        if fields.len() < min_width || tag_index == Some(columns.token) {
            return Err(err(
                line_no,
                format!(
                    "expected at least {} columns (token and tag), found {}",
                    min_width.max(2),
                    fields.len()
                ),
            ));
        }
        let gold_tag = match tag_index {
            Some(t) => fields[t].to_string(),
            None => OUTSIDE.to_string(),
        };
        let bio = Bio::parse(&gold_tag).map_err(|e| err(line_no, e.to_string()))?;
        if let Some(c) = bio.class() {
            classes.insert(c.to_string());
        }
        let pos = match columns.pos {
            Some(p) if p < fields.len() => Some(fields[p].to_string()),
            Some(p) => {
                return Err(err(line_no, format!("POS column {p} is out of range")));
            }
            None => None,
        };
        let middle = fields
            .iter()
            .enumerate()
            .filter(|(i, _)| *i != columns.token && Some(*i) != tag_index)
            .map(|(_, f)| f.to_string())
            .collect();
        let surface = normalize(fields[columns.token]);
        if surface.is_empty() || surface.chars().any(char::is_whitespace) {
            return Err(err(line_no, "normalized token is empty or contains whitespace".into()));
        }
        current.push(Token {
            surface,
            pos,
            gold_tag,
            columns: middle,
        });
    }
    finish(&mut current, &mut pending_id, &mut sentences, last_line + 1)?;

    if sentences.is_empty() {
        return Err(err(last_line.max(1), "input contains no sentences".into()));
    }
    Ok(LabeledCorpus {
        name: source_name.to_string(),
        sentences,
        tagset: TagSet::new(classes),
        provenance: vec![format!("source:{source_name}")],
        labeled: columns.tag != TagColumn::Absent,
    })
}

/// Extracts the sentence id from a `#` comment line.
fn comment_id(line: &str) -> Option<String> {
    let rest = line[1..].trim();
    let mut words = rest.split_whitespace();
    match words.next()? {
        "id" => words.next().map(str::to_string),
        first => Some(first.to_string()),
    }
}

/// Serializes a corpus; `predictions`, when given, adds a trailing column.
pub fn write_conll(corpus: &LabeledCorpus, predictions: Option<&[Vec<String>]>) -> Result<String> {
    if let Some(preds) = predictions {
        check_alignment(corpus, preds.iter().map(Vec::len))?;
    }
    let mut out = String::new();
    for (si, s) in corpus.sentences.iter().enumerate() {
        if si > 0 {
            out.push('\n');
        }
        writeln!(out, "# id {}", s.id).unwrap();
        for (ti, t) in s.tokens.iter().enumerate() {
            out.push_str(&t.surface);
            for c in t.middle_columns() {
                out.push(' ');
                out.push_str(c);
            }
            if corpus.labeled {
                out.push(' ');
                out.push_str(&t.gold_tag);
            }
            if let Some(preds) = predictions {
                out.push(' ');
                out.push_str(&preds[si][ti]);
            }
            out.push('\n');
        }
    }
    Ok(out)
}

/// Errors unless `lengths` matches the corpus sentence-by-sentence.
pub(crate) fn check_alignment(
    corpus: &LabeledCorpus,
    lengths: impl ExactSizeIterator<Item = usize>,
) -> Result<()> {
    if lengths.len() != corpus.len() {
        return Err(Error::Alignment(format!(
            "expected {} sentences, found {}",
            corpus.len(),
            lengths.len()
        )));
    }
    for (s, n) in corpus.sentences.iter().zip(lengths) {
        if s.len() != n {
            return Err(Error::Alignment(format!(
                "sentence `{}` has {} tokens but {} labels were given",
                s.id,
                s.len(),
                n
            )));
        }
    }
    Ok(())
}

/// Positions where a label is unparseable or an `I-X` does not continue an
/// entity of class X.
pub fn validate_bio<S: AsRef<str>>(tags: &[S]) -> Vec<usize> {
    let mut violations = Vec::new();
    let mut prev: Option<&str> = None;
    for (i, tag) in tags.iter().enumerate() {
        match Bio::parse(tag.as_ref()) {
            Ok(Bio::Outside) => prev = None,
            Ok(Bio::Begin(c)) => prev = Some(c),
            Ok(Bio::Inside(c)) => {
                if prev != Some(c) {
                    violations.push(i);
                }
                prev = Some(c);
            }
            Err(_) => {
                violations.push(i);
                prev = None;
            }
        }
    }
    violations
}

/// Turns every orphan `I-X` into `B-X`. Unparseable labels become `O`.
pub fn repair_bio<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out = Vec::with_capacity(tags.len());
    let mut prev: Option<String> = None;
    for tag in tags {
        let tag = tag.as_ref();
        match Bio::parse(tag) {
            Ok(Bio::Outside) | Err(_) => {
                prev = None;
                out.push(OUTSIDE.to_string());
            }
            Ok(Bio::Begin(c)) => {
                prev = Some(c.to_string());
                out.push(tag.to_string());
            }
            Ok(Bio::Inside(c)) => {
                if prev.as_deref() == Some(c) {
                    out.push(tag.to_string());
                } else {
                    out.push(format!("B-{c}"));
                }
                prev = Some(c.to_string());
            }
        }
    }
    out
}

/// Maximal `B-X (I-X)*` runs, ordered by start.
pub fn extract_chunks<S: AsRef<str>>(tags: &[S]) -> Result<Vec<Chunk>> {
    let violations = validate_bio(tags);
    if !violations.is_empty() {
        return Err(Error::InvalidBio {
            positions: violations,
        });
    }
    let mut chunks = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.iter().enumerate() {
        match Bio::parse(tag.as_ref())? {
            Bio::Inside(_) => {}
            Bio::Outside => {
                if let Some((c, start)) = open.take() {
                    chunks.push(Chunk::new(c, start, i));
                }
            }
            Bio::Begin(c) => {
                if let Some((prev, start)) = open.take() {
                    chunks.push(Chunk::new(prev, start, i));
                }
                open = Some((c.to_string(), i));
            }
        }
    }
    if let Some((c, start)) = open {
        chunks.push(Chunk::new(c, start, tags.len()));
    }
    Ok(chunks)
}

/// Shuffles sentences under `seed` and splits at `ceil(n * train_fraction)`.
pub fn split_corpus(
    corpus: &LabeledCorpus,
    train_fraction: f64,
    seed: u64,
) -> Result<(LabeledCorpus, LabeledCorpus)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let n = corpus.len();
    if n == 0 {
        return Err(Error::InvalidArgument("cannot split an empty corpus".into()));
    }
    let cut = train_size(n, train_fraction);
    if cut == 0 || cut == n {
        return Err(Error::InvalidArgument(format!(
            "splitting {n} sentences at {train_fraction} leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let part = |indices: &[usize], role: &str| LabeledCorpus {
        name: format!("{}.{role}", corpus.name),
        sentences: indices.iter().map(|&i| corpus.sentences[i].clone()).collect(),
        tagset: corpus.tagset.clone(),
        provenance: corpus
            .provenance
            .iter()
            .cloned()
            .chain([format!("split:{role}(fraction={train_fraction},seed={seed})")])
            .collect(),
        labeled: corpus.labeled,
    };
    Ok((part(&order[..cut], "train"), part(&order[cut..], "dev")))
}

/// `ceil(n * fraction)`, ignoring floating-point noise below 1e-9.
pub fn train_size(n: usize, fraction: f64) -> usize {
    let exact = n as f64 * fraction;
    let rounded = exact.round();
    if (exact - rounded).abs() < 1e-9 {
        rounded as usize
    } else {
        exact.ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StatsReport {
    pub sentences: usize,
    pub tokens: usize,
    pub chunks_per_class: BTreeMap<String, usize>,
    pub single_token_chunks: usize,
    pub multi_token_chunks: usize,
}

impl StatsReport {
    pub fn total_chunks(&self) -> usize {
        self.chunks_per_class.values().sum()
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let width = self
            .chunks_per_class
            .keys()
            .map(|k| k.chars().count())
            .chain(["single-token chunks".len()])
            .max()
            .unwrap_or(0);
        let mut row = |k: &str, v: usize| {
            writeln!(out, "{k:<width$}  {v:>8}").unwrap();
        };
        row("sentences", self.sentences);
        row("tokens", self.tokens);
        row("chunks", self.total_chunks());
        row("single-token chunks", self.single_token_chunks);
        row("multi-token chunks", self.multi_token_chunks);
        writeln!(out).unwrap();
        writeln!(out, "{:<width$}  {:>8}", "class", "chunks").unwrap();
        for (class, n) in &self.chunks_per_class {
            writeln!(out, "{class:<width$}  {n:>8}").unwrap();
        }
        out
    }

    pub fn render_kv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "sentences={}", self.sentences).unwrap();
        writeln!(out, "tokens={}", self.tokens).unwrap();
        writeln!(out, "chunks={}", self.total_chunks()).unwrap();
        writeln!(out, "single_token_chunks={}", self.single_token_chunks).unwrap();
        writeln!(out, "multi_token_chunks={}", self.multi_token_chunks).unwrap();
        for (class, n) in &self.chunks_per_class {
            writeln!(out, "class.{class}={n}").unwrap();
        }
        out
    }
}

/// Sentence count and gold chunk tallies. Gold sequences are repaired before
/// chunking so malformed data still gets counted.
pub fn corpus_stats(corpus: &LabeledCorpus) -> StatsReport {
    let mut per_class: BTreeMap<String, usize> = corpus
        .tagset
        .classes()
        .iter()
        .map(|c| (c.clone(), 0))
        .collect();
    let (mut single, mut multi) = (0, 0);
    for s in &corpus.sentences {
        let repaired = repair_bio(&s.gold_tags());
        let chunks = extract_chunks(&repaired).expect("repaired tags are valid");
        for c in chunks {
            if c.len() == 1 {
                single += 1;
            } else {
                multi += 1;
            }
            *per_class.entry(c.class).or_default() += 1;
        }
    }
    StatsReport {
        sentences: corpus.len(),
        tokens: corpus.token_count(),
        chunks_per_class: per_class,
        single_token_chunks: single,
        multi_token_chunks: multi,
    }
}
