//! Token/id vocabulary with the five reserved specials.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::annotate::{AnnotatedRecord, TERM_MARKER};
use crate::model::ModelError;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const TERM_ID: u32 = 4;

pub const SPECIALS: [&str; 5] = ["<pad>", "<bos>", "<eos>", "<unk>", TERM_MARKER];

/// Bijective token <-> id map. Ids 0..5 are PAD, BOS, EOS, UNK, TERM.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Build from token occurrences, keeping tokens seen at least `min_freq`
    /// times. Ordering is deterministic: frequency descending, then token.
    pub fn build<'a>(
        occurrences: impl Iterator<Item = &'a str>,
        min_freq: usize,
    ) -> Result<Self, ModelError> {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut seen_any = false;
        for tok in occurrences {
            seen_any = true;
            if SPECIALS.contains(&tok) {
                continue;
            }
            *counts.entry(tok.to_string()).or_insert(0) += 1;
        }
        if !seen_any {
            return Err(ModelError::EmptyCorpus);
        }
        let mut kept: Vec<(String, usize)> =
            counts.into_iter().filter(|(_, c)| *c >= min_freq).collect();
        kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(kept.into_iter().map(|(t, _)| t));
        Ok(Self::from_tokens(tokens))
    }

    /// Build over both sides of an annotated corpus, in normalized
    /// (lowercase) form. The marker maps to its reserved id.
    pub fn build_from_records(
        records: &[AnnotatedRecord],
        min_freq: usize,
    ) -> Result<Self, ModelError> {
        let mut stream: Vec<String> = Vec::new();
        for rec in records {
            for tok in rec.src_tokens().iter().chain(rec.tgt_tokens().iter()) {
                if *tok == TERM_MARKER {
                    continue;
                }
                stream.push(tok.to_lowercase());
            }
        }
        if stream.is_empty() {
            return Err(ModelError::EmptyCorpus);
        }
        Self::build(stream.iter().map(String::as_str), min_freq)
    }

    /// Restore from an ordered token list (checkpoint load).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Id of a token; unknown tokens map to UNK.
    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Rebuild the lookup index after deserialization.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn validate_specials(&self) -> Result<(), ModelError> {
        for (i, expected) in SPECIALS.iter().enumerate() {
            if self.tokens.get(i).map(String::as_str) != Some(*expected) {
                return Err(ModelError::BadCheckpoint(format!(
                    "special token {i} is not {expected}"
                )));
            }
        }
        Ok(())
    }
}
