//! Medical terminology wordlist used for distant supervision.
//!
//! The wordlist file is UTF-8 plain text with one single-word term per line.
//! Lines starting with `#` are comments. Entries are normalized to lowercase
//! and trimmed; blank lines and duplicates are dropped. Multi-word phrases are
//! not stored here — they arise later from the annotator's adjacency merge.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("failed to read wordlist {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("wordlist {path} is not valid UTF-8 at line {line}")]
    Encoding { path: PathBuf, line: usize },
}

/// Immutable set of normalized single-word medical terms.
///
/// Safe to share across threads; all lookups are read-only.
#[derive(Debug, Clone)]
pub struct Lexicon {
    terms: HashSet<String>,
    source_path: Option<PathBuf>,
}

impl Lexicon {
    /// Load a wordlist file, one term per line.
    ///
    /// Blank lines, `#` comments, and duplicate entries (after lowercasing and
    /// trimming) are dropped. Non-UTF-8 content is reported with its line
    /// number rather than lossily decoded.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, LexiconError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| LexiconError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut terms = HashSet::new();
        for (idx, raw_line) in bytes.split(|&b| b == b'\n').enumerate() {
            let line = std::str::from_utf8(raw_line).map_err(|_| LexiconError::Encoding {
                path: path.to_path_buf(),
                line: idx + 1,
            })?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            terms.insert(line.to_lowercase());
        }
        Ok(Self {
            terms,
            source_path: Some(path.to_path_buf()),
        })
    }

    /// Build a lexicon directly from term strings (normalized on insert).
    pub fn from_terms<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms = terms
            .into_iter()
            .map(|t| t.as_ref().trim().to_lowercase())
            .filter(|t| !t.is_empty())
            .collect();
        Self {
            terms,
            source_path: None,
        }
    }

    /// Number of distinct terms.
    pub fn size(&self) -> usize {
        self.terms.len()
    }

    /// Path the lexicon was loaded from, if any.
    pub fn source_path(&self) -> Option<&Path> {
        self.source_path.as_deref()
    }

    /// Exact membership test after normalization (lowercase + trim).
    pub fn contains(&self, token: &str) -> bool {
        self.terms.contains(token.trim().to_lowercase().as_str())
    }

    /// Terminology match as used by the annotator.
    ///
    /// The token is looked up whole first; if that fails and it contains
    /// internal hyphens, it matches when every hyphen-separated part is a
    /// term (covers compounds like "x-ray" listed as separate words).
    pub fn matches_token(&self, token: &str) -> bool {
        if self.contains(token) {
            return true;
        }
        let trimmed = token.trim();
        if trimmed.contains('-') {
            let mut parts = trimmed.split('-').filter(|p| !p.is_empty());
            let mut any = false;
            for part in parts.by_ref() {
                if !self.contains(part) {
                    return false;
                }
                any = true;
            }
            return any;
        }
        false
    }

    /// Iterate the normalized terms (arbitrary order).
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.terms.iter().map(String::as_str)
    }
}

impl PartialEq for Lexicon {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}
