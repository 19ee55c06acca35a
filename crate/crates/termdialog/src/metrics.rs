//! Referenced and unreferenced response evaluation.
//!
//! Corpus-level BLEU (modified n-gram precision, geometric mean, brevity
//! penalty, no smoothing), per-pair ROUGE F1 averaged over the corpus,
//! corpus-level Distinct-n, perplexity from per-token negative log
//! likelihoods, and distinct-terminology counting via the annotator.
//!
//! All scores are kept in [0,1] internally; the reporting layer scales ROUGE
//! by 100 to match the usual presentation.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::io::BufRead;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::annotate::{self, TERM_MARKER};
use crate::lexicon::Lexicon;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("empty input")]
    EmptyInput,
    #[error("non-finite value in input")]
    NonFinite,
    #[error("n-gram order {0} unsupported here")]
    BadOrder(usize),
    #[error("candidate/reference count mismatch: {candidates} vs {references}")]
    LengthMismatch {
        candidates: usize,
        references: usize,
    },
    #[error("no {0}-grams available in the responses")]
    NoNgrams(usize),
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
    #[error("ids in NLL file do not line up with the evaluation pairs")]
    NllMismatch,
}

/// exp(mean per-token NLL), NLLs in nats with PAD positions excluded.
pub fn perplexity(token_nlls: &[f64]) -> Result<f64, MetricsError> {
    if token_nlls.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    if token_nlls.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mean = token_nlls.iter().sum::<f64>() / token_nlls.len() as f64;
    Ok(mean.exp())
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if n > 0 && tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-n: pooled clipped precisions for orders 1..=n, geometric mean,
/// times the brevity penalty exp(min(0, 1 - r/c)).
///
/// Counts are pooled over the corpus with no smoothing; a zero precision at
/// any order gives a zero score.
pub fn bleu_n(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    n: usize,
) -> Result<f64, MetricsError> {
    if !(1..=4).contains(&n) {
        return Err(MetricsError::BadOrder(n));
    }
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let cand_len: usize = candidates.iter().map(Vec::len).sum();
    let ref_len: usize = references.iter().map(Vec::len).sum();
    if cand_len == 0 {
        return Ok(0.0);
    }

    let mut log_precision_sum = 0.0;
    for order in 1..=n {
        let mut clipped = 0usize;
        let mut total = 0usize;
        for (cand, reference) in candidates.iter().zip(references) {
            let ref_counts = ngram_counts(reference, order);
            for (gram, count) in ngram_counts(cand, order) {
                clipped += count.min(ref_counts.get(gram).copied().unwrap_or(0));
            }
            total += cand.len().saturating_sub(order - 1);
        }
        if clipped == 0 || total == 0 {
            return Ok(0.0);
        }
        log_precision_sum += (clipped as f64 / total as f64).ln();
    }

    let brevity = (1.0 - ref_len as f64 / cand_len as f64).min(0.0).exp();
    Ok(brevity * (log_precision_sum / n as f64).exp())
}

/// Per-pair ROUGE-n F1 from clipped n-gram overlap.
pub fn rouge_n_pair(
    candidate: &[String],
    reference: &[String],
    n: usize,
) -> Result<f64, MetricsError> {
    if !(1..=2).contains(&n) {
        return Err(MetricsError::BadOrder(n));
    }
    let cand_counts = ngram_counts(candidate, n);
    let ref_counts = ngram_counts(reference, n);
    let cand_total: usize = cand_counts.values().sum();
    let ref_total: usize = ref_counts.values().sum();
    if cand_total == 0 || ref_total == 0 {
        return Ok(0.0);
    }
    let overlap: usize = cand_counts
        .iter()
        .map(|(gram, &c)| c.min(ref_counts.get(gram).copied().unwrap_or(0)))
        .sum();
    let precision = overlap as f64 / cand_total as f64;
    let recall = overlap as f64 / ref_total as f64;
    Ok(f1(precision, recall))
}

/// Mean ROUGE-n F1 over aligned pairs.
pub fn rouge_n(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    n: usize,
) -> Result<f64, MetricsError> {
    mean_over_pairs(candidates, references, |c, r| rouge_n_pair(c, r, n))
}

/// Per-pair ROUGE-L F1 from the longest common subsequence.
pub fn rouge_l_pair(candidate: &[String], reference: &[String]) -> f64 {
    let lcs = lcs_length(candidate, reference);
    if lcs == 0 || candidate.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let precision = lcs as f64 / candidate.len() as f64;
    let recall = lcs as f64 / reference.len() as f64;
    f1(precision, recall)
}

/// Mean ROUGE-L F1 over aligned pairs.
pub fn rouge_l(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
) -> Result<f64, MetricsError> {
    mean_over_pairs(candidates, references, |c, r| Ok(rouge_l_pair(c, r)))
}

fn mean_over_pairs(
    candidates: &[Vec<String>],
    references: &[Vec<String>],
    score: impl Fn(&[String], &[String]) -> Result<f64, MetricsError>,
) -> Result<f64, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut total = 0.0;
    for (cand, reference) in candidates.iter().zip(references) {
        total += score(cand, reference)?;
    }
    Ok(total / candidates.len() as f64)
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Two-row LCS dynamic program.
fn lcs_length(a: &[String], b: &[String]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut curr = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            curr[j + 1] = if x == y {
                prev[j] + 1
            } else {
                prev[j + 1].max(curr[j])
            };
        }
        std::mem::swap(&mut prev, &mut curr);
    }
    prev[b.len()]
}

/// Corpus Distinct-n: unique n-grams across all responses over total n-grams.
pub fn distinct_n(responses: &[Vec<String>], n: usize) -> Result<f64, MetricsError> {
    if !(1..=4).contains(&n) {
        return Err(MetricsError::BadOrder(n));
    }
    let mut unique: HashSet<&[String]> = HashSet::new();
    let mut total = 0usize;
    for response in responses {
        if response.len() >= n {
            for window in response.windows(n) {
                unique.insert(window);
                total += 1;
            }
        }
    }
    if total == 0 {
        return Err(MetricsError::NoNgrams(n));
    }
    Ok(unique.len() as f64 / total as f64)
}

/// Distinct terminology phrases across responses.
///
/// Each response is annotated against the lexicon; phrase surfaces are
/// normalized (lowercase, single-space joined) before counting. Marker tokens
/// in the input are ignored.
pub fn distinct_terms(responses: &[String], lexicon: &Lexicon) -> (usize, BTreeSet<String>) {
    let mut phrases = BTreeSet::new();
    for response in responses {
        let cleaned: String = response
            .split_whitespace()
            .filter(|w| *w != TERM_MARKER)
            .collect::<Vec<_>>()
            .join(" ");
        let tokens = annotate::tokenize(&cleaned);
        for span in annotate::identify(&tokens, lexicon) {
            let phrase = tokens[span.start..span.end]
                .iter()
                .map(|t| t.normalized.as_str())
                .collect::<Vec<_>>()
                .join(" ");
            phrases.insert(phrase);
        }
    }
    (phrases.len(), phrases)
}

/// All metric values for one evaluation run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub ppl: f64,
    /// BLEU-1..4, in [0,1].
    pub bleu: [f64; 4],
    /// ROUGE-1/2 F1, in [0,1].
    pub rouge_1: f64,
    pub rouge_2: f64,
    /// ROUGE-L F1, in [0,1].
    pub rouge_l: f64,
    /// Distinct-1..4, in [0,1].
    pub distinct: [f64; 4],
    pub distinct_term_count: usize,
    pub distinct_terms: BTreeSet<String>,
}

impl MetricReport {
    /// Presentation table column names, in report order.
    pub const COLUMNS: [&'static str; 13] = [
        "PPL",
        "B-1",
        "B-2",
        "B-3",
        "B-4",
        "R-1",
        "R-2",
        "R-L",
        "Dist-1",
        "Dist-2",
        "Dist-3",
        "Dist-4",
        "Distinct Terms",
    ];

    /// Values in presentation scale: ROUGE x100, everything else as stored.
    pub fn presentation_values(&self) -> Vec<f64> {
        vec![
            self.ppl,
            self.bleu[0],
            self.bleu[1],
            self.bleu[2],
            self.bleu[3],
            self.rouge_1 * 100.0,
            self.rouge_2 * 100.0,
            self.rouge_l * 100.0,
            self.distinct[0],
            self.distinct[1],
            self.distinct[2],
            self.distinct[3],
            self.distinct_term_count as f64,
        ]
    }

    /// Flat JSON object keyed by the presentation column names.
    pub fn presentation_json(&self) -> String {
        let mut fields = Vec::new();
        for (name, value) in Self::COLUMNS.iter().zip(self.presentation_values()) {
            let rendered = if *name == "Distinct Terms" {
                format!("{}", value as usize)
            } else {
                serde_json::Number::from_f64(value)
                    .map(|n| n.to_string())
                    .unwrap_or_else(|| "null".to_string())
            };
            fields.push(format!("\"{name}\": {rendered}"));
        }
        format!("{{{}}}", fields.join(", "))
    }

    /// Aligned one-line-of-values text table.
    pub fn render_table(&self) -> String {
        let values: Vec<String> = Self::COLUMNS
            .iter()
            .zip(self.presentation_values())
            .map(|(name, v)| {
                if *name == "Distinct Terms" {
                    format!("{}", v as usize)
                } else {
                    format!("{v:.4}")
                }
            })
            .collect();
        let widths: Vec<usize> = Self::COLUMNS
            .iter()
            .zip(&values)
            .map(|(c, v)| c.len().max(v.len()))
            .collect();
        let header: Vec<String> = Self::COLUMNS
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}"))
            .collect();
        let row: Vec<String> = values
            .iter()
            .zip(&widths)
            .map(|(v, w)| format!("{v:>w$}"))
            .collect();
        format!("{}\n{}\n", header.join("  "), row.join("  "))
    }
}

/// All referenced and diversity metrics; PPL supplied by the caller.
fn evaluate_core(
    candidates: &[String],
    references: &[String],
    ppl: f64,
    lexicon: &Lexicon,
) -> Result<MetricReport, MetricsError> {
    if candidates.len() != references.len() {
        return Err(MetricsError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    if candidates.is_empty() {
        return Err(MetricsError::EmptyInput);
    }

    let stripped = |text: &String| -> String {
        text.split_whitespace()
            .filter(|w| *w != TERM_MARKER)
            .collect::<Vec<_>>()
            .join(" ")
    };
    // Strip before tokenizing; the tokenizer would split the marker apart.
    let strip_tokens = |text: &String| -> Vec<String> {
        annotate::tokenize(&stripped(text))
            .into_iter()
            .map(|t| t.surface)
            .collect()
    };

    let cand_tokens: Vec<Vec<String>> = candidates.iter().map(strip_tokens).collect();
    let ref_tokens: Vec<Vec<String>> = references.iter().map(strip_tokens).collect();
    let cand_texts: Vec<String> = candidates.iter().map(stripped).collect();

    let mut bleu = [0.0; 4];
    for (i, slot) in bleu.iter_mut().enumerate() {
        *slot = bleu_n(&cand_tokens, &ref_tokens, i + 1)?;
    }
    let mut distinct = [0.0; 4];
    for (i, slot) in distinct.iter_mut().enumerate() {
        *slot = distinct_n(&cand_tokens, i + 1)?;
    }
    let (distinct_term_count, terms) = distinct_terms(&cand_texts, lexicon);

    Ok(MetricReport {
        ppl,
        bleu,
        rouge_1: rouge_n(&cand_tokens, &ref_tokens, 1)?,
        rouge_2: rouge_n(&cand_tokens, &ref_tokens, 2)?,
        rouge_l: rouge_l(&cand_tokens, &ref_tokens)?,
        distinct,
        distinct_term_count,
        distinct_terms: terms,
    })
}

/// Assemble the full report for one run.
///
/// Markers are stripped from candidates and references before any metric is
/// computed; `token_nlls` are the per-token reference NLLs from the model.
pub fn evaluate_run(
    candidates: &[String],
    references: &[String],
    token_nlls: &[Vec<f64>],
    lexicon: &Lexicon,
) -> Result<MetricReport, MetricsError> {
    let all_nlls: Vec<f64> = token_nlls.iter().flatten().copied().collect();
    let ppl = perplexity(&all_nlls)?;
    evaluate_core(candidates, references, ppl, lexicon)
}

/// One line of a candidate/reference evaluation file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub candidate: String,
    pub reference: String,
}

/// One line of a per-token NLL file, as written by the model module.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NllRecord {
    pub id: String,
    pub nlls: Vec<f64>,
}

fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, MetricsError> {
    let io_err = |source| MetricsError::Io {
        path: path.to_path_buf(),
        source,
    };
    let reader = std::io::BufReader::new(std::fs::File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| MetricsError::Json {
                path: path.to_path_buf(),
                line: idx + 1,
                source,
            })?,
        );
    }
    Ok(out)
}

/// Read `{id, candidate, reference}` JSON lines.
pub fn read_eval_pairs(path: impl AsRef<Path>) -> Result<Vec<EvalPair>, MetricsError> {
    read_jsonl(path.as_ref())
}

/// Read `{id, nlls}` JSON lines.
pub fn read_nll_records(path: impl AsRef<Path>) -> Result<Vec<NllRecord>, MetricsError> {
    read_jsonl(path.as_ref())
}

/// Score an evaluation file against an optional aligned NLL file.
///
/// When an NLL file is given, its ids must match the pairs line by line.
/// Without one the PPL column is reported as NaN (the referenced metrics do
/// not need model likelihoods).
pub fn evaluate_files(
    pairs_path: impl AsRef<Path>,
    nlls_path: Option<&Path>,
    lexicon: &Lexicon,
) -> Result<MetricReport, MetricsError> {
    let pairs = read_eval_pairs(pairs_path)?;
    if pairs.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let candidates: Vec<String> = pairs.iter().map(|p| p.candidate.clone()).collect();
    let references: Vec<String> = pairs.iter().map(|p| p.reference.clone()).collect();
    match nlls_path {
        Some(path) => {
            let nll_records = read_nll_records(path)?;
            if nll_records.len() != pairs.len()
                || nll_records.iter().zip(&pairs).any(|(n, p)| n.id != p.id)
            {
                return Err(MetricsError::NllMismatch);
            }
            let nlls: Vec<Vec<f64>> = nll_records.into_iter().map(|n| n.nlls).collect();
            evaluate_run(&candidates, &references, &nlls, lexicon)
        }
        // Referenced metrics only; PPL has no inputs and is reported as NaN.
        None => evaluate_core(&candidates, &references, f64::NAN, lexicon),
    }
}
