//! Raw dialogue ingestion, filtering, splitting, and corpus statistics.
//!
//! Raw dumps are JSON lines, one dialogue per line:
//! `{"id": "...", "utterances": [{"speaker": "patient"|"doctor", "text": "..."}]}`.
//! Every doctor turn becomes one training pair whose input is the full
//! preceding history; malformed lines are skipped and counted rather than
//! aborting a long ingest.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{self, TextPair};
use crate::lexicon::Lexicon;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("split ratios must sum to 1.0 (got {sum})")]
    BadRatios { sum: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speaker {
    Patient,
    Doctor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub speaker: Speaker,
    pub text: String,
}

/// One training example: dialogue history (ending in a patient turn) and the
/// doctor response that follows it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialoguePair {
    pub id: String,
    pub input_utterances: Vec<Utterance>,
    pub target_utterances: Vec<Utterance>,
}

impl DialoguePair {
    /// Input side as one text, utterances joined with single spaces.
    pub fn src_text(&self) -> String {
        join_texts(&self.input_utterances)
    }

    /// Target side as one text.
    pub fn tgt_text(&self) -> String {
        join_texts(&self.target_utterances)
    }

    /// Conversion into the annotator's raw pair format.
    pub fn to_text_pair(&self) -> TextPair {
        TextPair {
            id: self.id.clone(),
            src_text: self.src_text(),
            tgt_text: self.tgt_text(),
        }
    }
}

fn join_texts(utterances: &[Utterance]) -> String {
    utterances
        .iter()
        .map(|u| u.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Deserialize)]
struct RawDialogue {
    id: String,
    utterances: Vec<Utterance>,
}

/// Result of parsing a raw dump.
#[derive(Debug)]
pub struct ParseOutcome {
    pub pairs: Vec<DialoguePair>,
    /// Lines that failed to parse (bad JSON, missing fields, unknown speaker).
    pub skipped_lines: usize,
}

/// Parse a raw JSON-lines dump into dialogue pairs.
///
/// Each doctor turn yields one pair with all preceding turns as input. Turns
/// with blank text are dropped first; doctor turns whose history is empty or
/// does not end in a patient turn produce no pair (the pair invariant requires
/// a final patient question).
pub fn parse_raw(path: impl AsRef<Path>) -> Result<ParseOutcome, CorpusError> {
    let path = path.as_ref();
    let reader = BufReader::new(File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?);
    let mut pairs = Vec::new();
    let mut skipped_lines = 0;
    for line in reader.lines() {
        let line = line.map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<RawDialogue>(&line) {
            Ok(dialogue) => pairs.extend(pairs_from_dialogue(dialogue)),
            Err(_) => skipped_lines += 1,
        }
    }
    Ok(ParseOutcome {
        pairs,
        skipped_lines,
    })
}

fn pairs_from_dialogue(dialogue: RawDialogue) -> Vec<DialoguePair> {
    let turns: Vec<Utterance> = dialogue
        .utterances
        .into_iter()
        .filter(|u| !u.text.trim().is_empty())
        .collect();
    let mut pairs = Vec::new();
    for (i, turn) in turns.iter().enumerate() {
        if turn.speaker != Speaker::Doctor {
            continue;
        }
        let history = &turns[..i];
        if history.last().map(|u| u.speaker) != Some(Speaker::Patient) {
            continue;
        }
        pairs.push(DialoguePair {
            id: format!("{}-{}", dialogue.id, pairs.len()),
            input_utterances: history.to_vec(),
            target_utterances: vec![turn.clone()],
        });
    }
    pairs
}

/// Outlier filtering and truncation thresholds.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Minimum word-token count required on each side.
    pub min_tokens: usize,
    /// Input budget in tokens; oldest turns (then oldest tokens) are dropped.
    pub max_src_tokens: usize,
    /// Target budget in tokens; the tail is cut.
    pub max_tgt_tokens: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_tokens: 2,
            max_src_tokens: 512,
            max_tgt_tokens: 512,
        }
    }
}

fn word_count(utterances: &[Utterance]) -> usize {
    utterances
        .iter()
        .map(|u| {
            annotate::tokenize(&u.text)
                .iter()
                .filter(|t| !t.is_punct)
                .count()
        })
        .sum()
}

fn token_count(utterances: &[Utterance]) -> usize {
    utterances
        .iter()
        .map(|u| annotate::tokenize(&u.text).len())
        .sum()
}

/// Keep the last `budget` tokens of an utterance, rejoining with spaces.
fn keep_token_tail(utterance: &Utterance, budget: usize) -> Utterance {
    let tokens = annotate::tokenize(&utterance.text);
    let skip = tokens.len().saturating_sub(budget);
    Utterance {
        speaker: utterance.speaker,
        text: tokens[skip..]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// Keep the first `budget` tokens of an utterance.
fn keep_token_head(utterance: &Utterance, budget: usize) -> Utterance {
    let tokens = annotate::tokenize(&utterance.text);
    let take = budget.min(tokens.len());
    Utterance {
        speaker: utterance.speaker,
        text: tokens[..take]
            .iter()
            .map(|t| t.surface.as_str())
            .collect::<Vec<_>>()
            .join(" "),
    }
}

/// Drop short pairs, then truncate the survivors to the token budgets.
///
/// The input side keeps the most recent turns: whole oldest utterances go
/// first, then oldest tokens of the one that remains. The target side is cut
/// at `max_tgt_tokens` from the front. Order is preserved.
pub fn filter_and_truncate(pairs: Vec<DialoguePair>, config: &FilterConfig) -> Vec<DialoguePair> {
    pairs
        .into_iter()
        .filter(|p| {
            word_count(&p.input_utterances) >= config.min_tokens
                && word_count(&p.target_utterances) >= config.min_tokens
        })
        .map(|mut p| {
            while token_count(&p.input_utterances) > config.max_src_tokens
                && p.input_utterances.len() > 1
            {
                p.input_utterances.remove(0);
            }
            if token_count(&p.input_utterances) > config.max_src_tokens {
                p.input_utterances[0] =
                    keep_token_tail(&p.input_utterances[0], config.max_src_tokens);
            }

            let mut budget = config.max_tgt_tokens;
            let mut kept = Vec::new();
            for utt in &p.target_utterances {
                if budget == 0 {
                    break;
                }
                let n = annotate::tokenize(&utt.text).len();
                if n <= budget {
                    budget -= n;
                    kept.push(utt.clone());
                } else {
                    kept.push(keep_token_head(utt, budget));
                    budget = 0;
                }
            }
            p.target_utterances = kept;
            p
        })
        .collect()
}

/// Shuffle with a seeded permutation and cut at floor boundaries.
///
/// Floor remainders go to the training split, so the three parts always
/// partition the input exactly.
/// (train, val, test) partition.
pub type SplitPairs = (Vec<DialoguePair>, Vec<DialoguePair>, Vec<DialoguePair>);

pub fn split(
    pairs: Vec<DialoguePair>,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<SplitPairs, CorpusError> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    let sum = ratios.0 + ratios.1 + ratios.2;
    if (sum - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadRatios { sum });
    }

    let mut shuffled = pairs;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let n_train = (n as f64 * ratios.0).floor() as usize;
    let n_val = (n as f64 * ratios.1).floor() as usize;
    let n_test = (n as f64 * ratios.2).floor() as usize;
    let remainder = n - n_train - n_val - n_test;

    let mut iter = shuffled.into_iter();
    let train: Vec<_> = iter.by_ref().take(n_train + remainder).collect();
    let val: Vec<_> = iter.by_ref().take(n_val).collect();
    let test: Vec<_> = iter.collect();
    debug_assert_eq!(test.len(), n_test);
    Ok((train, val, test))
}

/// Corpus statistics in the shape of the dataset summary table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub n_dialogues: usize,
    pub n_words: usize,
    pub n_term_words: usize,
    pub avg_words_in: f64,
    pub avg_utts_in: f64,
    pub avg_terms_in: f64,
    pub avg_words_out: f64,
    pub avg_utts_out: f64,
    pub avg_terms_out: f64,
}

impl CorpusStats {
    pub fn zero() -> Self {
        Self {
            n_dialogues: 0,
            n_words: 0,
            n_term_words: 0,
            avg_words_in: 0.0,
            avg_utts_in: 0.0,
            avg_terms_in: 0.0,
            avg_words_out: 0.0,
            avg_utts_out: 0.0,
            avg_terms_out: 0.0,
        }
    }
}

/// Integer totals that merge associatively; means are taken at the end.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StatsAccumulator {
    pub n_dialogues: usize,
    pub words_in: usize,
    pub words_out: usize,
    pub term_words_in: usize,
    pub term_words_out: usize,
    pub utts_in: usize,
    pub utts_out: usize,
}

impl StatsAccumulator {
    pub fn add_pair(&mut self, pair: &DialoguePair, lexicon: &Lexicon) {
        let (w_in, t_in) = side_counts(&pair.src_text(), lexicon);
        let (w_out, t_out) = side_counts(&pair.tgt_text(), lexicon);
        self.n_dialogues += 1;
        self.words_in += w_in;
        self.words_out += w_out;
        self.term_words_in += t_in;
        self.term_words_out += t_out;
        self.utts_in += pair.input_utterances.len();
        self.utts_out += pair.target_utterances.len();
    }

    pub fn merge(mut self, other: Self) -> Self {
        self.n_dialogues += other.n_dialogues;
        self.words_in += other.words_in;
        self.words_out += other.words_out;
        self.term_words_in += other.term_words_in;
        self.term_words_out += other.term_words_out;
        self.utts_in += other.utts_in;
        self.utts_out += other.utts_out;
        self
    }

    pub fn finalize(&self) -> CorpusStats {
        let n = self.n_dialogues;
        if n == 0 {
            return CorpusStats::zero();
        }
        let mean = |total: usize| total as f64 / n as f64;
        CorpusStats {
            n_dialogues: n,
            n_words: self.words_in + self.words_out,
            n_term_words: self.term_words_in + self.term_words_out,
            avg_words_in: mean(self.words_in),
            avg_utts_in: mean(self.utts_in),
            avg_terms_in: mean(self.term_words_in),
            avg_words_out: mean(self.words_out),
            avg_utts_out: mean(self.utts_out),
            avg_terms_out: mean(self.term_words_out),
        }
    }
}

/// (word count, term-word count) for one side's joined text.
///
/// Punctuation is excluded from word counts; term words are the tokens
/// covered by identified phrase spans.
fn side_counts(text: &str, lexicon: &Lexicon) -> (usize, usize) {
    let tokens = annotate::tokenize(text);
    let words = tokens.iter().filter(|t| !t.is_punct).count();
    let spans = annotate::identify(&tokens, lexicon);
    let term_words = spans.iter().map(|s| s.len()).sum();
    (words, term_words)
}

/// Compute statistics over a pair collection.
///
/// Accumulation is associative and commutative, so the parallel reduction
/// matches a serial pass exactly.
pub fn compute_stats(pairs: &[DialoguePair], lexicon: &Lexicon) -> CorpusStats {
    pairs
        .par_iter()
        .fold(StatsAccumulator::default, |mut acc, pair| {
            acc.add_pair(pair, lexicon);
            acc
        })
        .reduce(StatsAccumulator::default, StatsAccumulator::merge)
        .finalize()
}

/// Row labels for the plain-text statistics table.
pub const STATS_ROW_LABELS: [&str; 9] = [
    "# Dialogues",
    "# Words",
    "# Terms (words)",
    "Avg. # Words in Input Text",
    "Avg. # Utterances in Input Text",
    "Avg. # Terms in Input Text",
    "Avg. # Words in Output Text",
    "Avg. # Utterances in Output Text",
    "Avg. # Terms in Output Text",
];

/// Render an aligned text table, one column per named split.
pub fn render_stats_table(columns: &[(&str, CorpusStats)]) -> String {
    let label_width = STATS_ROW_LABELS.iter().map(|l| l.len()).max().unwrap_or(0);
    let cells: Vec<Vec<String>> = columns
        .iter()
        .map(|(_, s)| {
            vec![
                s.n_dialogues.to_string(),
                s.n_words.to_string(),
                s.n_term_words.to_string(),
                format!("{:.2}", s.avg_words_in),
                format!("{:.2}", s.avg_utts_in),
                format!("{:.2}", s.avg_terms_in),
                format!("{:.2}", s.avg_words_out),
                format!("{:.2}", s.avg_utts_out),
                format!("{:.2}", s.avg_terms_out),
            ]
        })
        .collect();
    let col_widths: Vec<usize> = columns
        .iter()
        .enumerate()
        .map(|(c, (name, _))| {
            cells[c]
                .iter()
                .map(|v| v.len())
                .chain(std::iter::once(name.len()))
                .max()
                .unwrap_or(0)
        })
        .collect();

    let mut out = String::new();
    out.push_str(&format!("{:<label_width$}", "Datasets"));
    for (c, (name, _)) in columns.iter().enumerate() {
        out.push_str(&format!("  {:>width$}", name, width = col_widths[c]));
    }
    out.push('\n');
    for (r, label) in STATS_ROW_LABELS.iter().enumerate() {
        out.push_str(&format!("{label:<label_width$}"));
        for (c, _) in columns.iter().enumerate() {
            out.push_str(&format!("  {:>width$}", cells[c][r], width = col_widths[c]));
        }
        out.push('\n');
    }
    out
}
