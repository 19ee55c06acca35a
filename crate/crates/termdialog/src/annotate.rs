//! Distant-supervision terminology annotation.
//!
//! `identify` marks every token that matches the lexicon and merges maximal
//! runs of adjacent matches into terminology phrases (adjacent medical words
//! are assumed to form one phrase; punctuation breaks adjacency). `flatten`
//! re-emits the token sequence with one `[TERM]` marker inserted immediately
//! before each phrase, plus a per-token binary label. `annotate` is the
//! composition of the two over a tokenized input.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lexicon::Lexicon;

/// Marker inserted before each terminology phrase in flattened output.
pub const TERM_MARKER: &str = "[TERM]";

#[derive(Debug, Error)]
pub enum AnnotateError {
    #[error("input already contains the {TERM_MARKER} marker (record {0})")]
    MarkerInInput(String),
    #[error("invalid span [{start},{end}) over {len} tokens: {reason}")]
    InvalidSpan {
        start: usize,
        end: usize,
        len: usize,
        reason: &'static str,
    },
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at {path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },
}

/// One whitespace-delimited unit of text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub is_punct: bool,
}

impl Token {
    fn word(surface: String) -> Self {
        let normalized = surface.to_lowercase();
        Self {
            surface,
            normalized,
            is_punct: false,
        }
    }

    fn punct(c: char) -> Self {
        let s = c.to_string();
        Self {
            surface: s.clone(),
            normalized: s,
            is_punct: true,
        }
    }
}

/// Half-open token index range `[start, end)` covering one terminology phrase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermSpan {
    pub start: usize,
    pub end: usize,
}

impl TermSpan {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.start
    }
}

/// Result of annotating one token sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotatedSequence {
    /// Original tokens, no markers.
    pub tokens: Vec<Token>,
    /// Disjoint, sorted terminology phrase spans.
    pub spans: Vec<TermSpan>,
    /// Token surfaces in order with one marker before each span.
    pub flattened: Vec<String>,
    /// One {0,1} label per original token; 1 inside a span.
    pub labels: Vec<u8>,
}

impl AnnotatedSequence {
    /// Flattened sequence as a single space-joined string.
    pub fn flattened_text(&self) -> String {
        self.flattened.join(" ")
    }

    pub fn marker_count(&self) -> usize {
        self.flattened.iter().filter(|t| *t == TERM_MARKER).count()
    }

    /// Flattened sequence with markers removed; equals the original surfaces.
    pub fn without_markers(&self) -> Vec<&str> {
        self.flattened
            .iter()
            .filter(|t| *t != TERM_MARKER)
            .map(String::as_str)
            .collect()
    }
}

/// Split text into word and punctuation tokens.
///
/// Chunks are whitespace-separated; leading and trailing non-alphanumeric
/// characters of each chunk become one punctuation token per character, so
/// "infection." yields ["infection", "."]. Interior punctuation (hyphens,
/// apostrophes) stays inside the word token.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && !chars[start].is_alphanumeric() {
            start += 1;
        }
        while end > start && !chars[end - 1].is_alphanumeric() {
            end -= 1;
        }
        for &c in &chars[..start] {
            tokens.push(Token::punct(c));
        }
        if start < end {
            tokens.push(Token::word(chars[start..end].iter().collect()));
        }
        for &c in &chars[end..] {
            tokens.push(Token::punct(c));
        }
    }
    tokens
}

/// Mark lexicon matches and merge adjacent matches into phrase spans.
///
/// Punctuation tokens never match and break adjacency, so "infection . spine"
/// yields two spans even when both words are terms.
pub fn identify(tokens: &[Token], lexicon: &Lexicon) -> Vec<TermSpan> {
    let mut spans = Vec::new();
    let mut run_start: Option<usize> = None;
    for (i, tok) in tokens.iter().enumerate() {
        let is_term = !tok.is_punct && lexicon.matches_token(&tok.normalized);
        match (is_term, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                spans.push(TermSpan { start: s, end: i });
                run_start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = run_start {
        spans.push(TermSpan {
            start: s,
            end: tokens.len(),
        });
    }
    spans
}

/// Insert one marker before each span and emit per-token labels.
///
/// Spans must be sorted, disjoint, and inside the token range.
pub fn flatten(tokens: &[Token], spans: &[TermSpan]) -> Result<AnnotatedSequence, AnnotateError> {
    let len = tokens.len();
    let mut prev_end = 0;
    for span in spans {
        let invalid = |reason| AnnotateError::InvalidSpan {
            start: span.start,
            end: span.end,
            len,
            reason,
        };
        if span.start >= span.end {
            return Err(invalid("empty span"));
        }
        if span.end > len {
            return Err(invalid("out of range"));
        }
        if span.start < prev_end {
            return Err(invalid("overlaps or is out of order"));
        }
        prev_end = span.end;
    }

    let mut flattened = Vec::with_capacity(len + spans.len());
    let mut labels = vec![0u8; len];
    let mut span_iter = spans.iter().peekable();
    for (i, tok) in tokens.iter().enumerate() {
        if let Some(span) = span_iter.peek() {
            if span.start == i {
                flattened.push(TERM_MARKER.to_string());
            }
            if i >= span.start && i < span.end {
                labels[i] = 1;
            }
            if span.end == i + 1 {
                span_iter.next();
            }
        }
        flattened.push(tok.surface.clone());
    }

    Ok(AnnotatedSequence {
        tokens: tokens.to_vec(),
        spans: spans.to_vec(),
        flattened,
        labels,
    })
}

/// Tokenize, identify, and flatten one text.
///
/// Inputs that already contain the marker string are rejected so a flattened
/// sequence can never be annotated twice.
pub fn annotate(text: &str, lexicon: &Lexicon) -> Result<AnnotatedSequence, AnnotateError> {
    annotate_with_id(text, lexicon, "<input>")
}

fn annotate_with_id(
    text: &str,
    lexicon: &Lexicon,
    id: &str,
) -> Result<AnnotatedSequence, AnnotateError> {
    if text.contains(TERM_MARKER) {
        return Err(AnnotateError::MarkerInInput(id.to_string()));
    }
    let tokens = tokenize(text);
    let spans = identify(&tokens, lexicon);
    flatten(&tokens, &spans)
}

/// A raw (input text, target text) pair ready for annotation.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TextPair {
    pub id: String,
    pub src_text: String,
    pub tgt_text: String,
}

/// Annotated dialogue pair in the JSON-lines exchange format.
///
/// `*_flattened` is the marker-bearing sequence as a space-joined string;
/// `*_spans` are `[start, end)` index pairs over the original token list.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct AnnotatedRecord {
    pub id: String,
    pub src_text: String,
    pub src_flattened: String,
    pub src_labels: Vec<u8>,
    pub src_spans: Vec<(usize, usize)>,
    pub tgt_text: String,
    pub tgt_flattened: String,
    pub tgt_labels: Vec<u8>,
    pub tgt_spans: Vec<(usize, usize)>,
}

impl AnnotatedRecord {
    pub fn from_pair(pair: &TextPair, lexicon: &Lexicon) -> Result<Self, AnnotateError> {
        let src = annotate_with_id(&pair.src_text, lexicon, &pair.id)?;
        let tgt = annotate_with_id(&pair.tgt_text, lexicon, &pair.id)?;
        Ok(Self {
            id: pair.id.clone(),
            src_text: pair.src_text.clone(),
            src_flattened: src.flattened_text(),
            src_labels: src.labels,
            src_spans: src.spans.iter().map(|s| (s.start, s.end)).collect(),
            tgt_text: pair.tgt_text.clone(),
            tgt_flattened: tgt.flattened_text(),
            tgt_labels: tgt.labels,
            tgt_spans: tgt.spans.iter().map(|s| (s.start, s.end)).collect(),
        })
    }

    /// Flattened source tokens (markers included).
    pub fn src_tokens(&self) -> Vec<&str> {
        self.src_flattened.split_whitespace().collect()
    }

    /// Flattened target tokens (markers included).
    pub fn tgt_tokens(&self) -> Vec<&str> {
        self.tgt_flattened.split_whitespace().collect()
    }
}

/// Annotate both sides of every pair; output order equals input order.
///
/// Work fans out across the rayon pool, but the indexed collect keeps the
/// result order independent of thread count.
pub fn annotate_corpus(
    pairs: &[TextPair],
    lexicon: &Lexicon,
) -> Result<Vec<AnnotatedRecord>, AnnotateError> {
    pairs
        .par_iter()
        .map(|pair| AnnotatedRecord::from_pair(pair, lexicon))
        .collect()
}

/// Single-threaded variant of [`annotate_corpus`]; same output bytes.
pub fn annotate_corpus_serial(
    pairs: &[TextPair],
    lexicon: &Lexicon,
) -> Result<Vec<AnnotatedRecord>, AnnotateError> {
    pairs
        .iter()
        .map(|pair| AnnotatedRecord::from_pair(pair, lexicon))
        .collect()
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AnnotateError + '_ {
    move |source| AnnotateError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Write records as JSON lines.
pub fn write_records(
    path: impl AsRef<Path>,
    records: &[AnnotatedRecord],
) -> Result<(), AnnotateError> {
    let path = path.as_ref();
    let mut out = BufWriter::new(File::create(path).map_err(io_err(path))?);
    for rec in records {
        let line = serde_json::to_string(rec).expect("record serialization cannot fail");
        writeln!(out, "{line}").map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Read records from a JSON-lines file.
pub fn read_records(path: impl AsRef<Path>) -> Result<Vec<AnnotatedRecord>, AnnotateError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|source| AnnotateError::Json {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        records.push(rec);
    }
    Ok(records)
}

/// Read raw text pairs from a JSON-lines file.
pub fn read_pairs(path: impl AsRef<Path>) -> Result<Vec<TextPair>, AnnotateError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(io_err(path))?);
    let mut pairs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let pair = serde_json::from_str(&line).map_err(|source| AnnotateError::Json {
            path: path.to_path_buf(),
            line: idx + 1,
            source,
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}
