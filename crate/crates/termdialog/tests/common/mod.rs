//! Shared oracles and synthetic data builders for the integration suites.
//!
//! Everything here is deliberately naive and independent of the library's
//! fast paths: linear scans, quadratic n-gram matching, full DP tables.

#![allow(dead_code)]

use rand::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use termdialog::annotate::{Token, TERM_MARKER};
use termdialog::lexicon::Lexicon;

/// Naive mark-and-merge annotation: linear-scan membership, run merge by
/// scanning, marker insertion and labels by construction.
pub struct OracleAnnotation {
    pub spans: Vec<(usize, usize)>,
    pub flattened: Vec<String>,
    pub labels: Vec<u8>,
}

fn oracle_is_term(token: &Token, lexicon: &Lexicon) -> bool {
    if token.is_punct {
        return false;
    }
    let norm = &token.normalized;
    if lexicon.terms().any(|t| t == norm) {
        return true;
    }
    if norm.contains('-') {
        let parts: Vec<&str> = norm.split('-').filter(|p| !p.is_empty()).collect();
        return !parts.is_empty() && parts.iter().all(|p| lexicon.terms().any(|t| t == *p));
    }
    false
}

pub fn oracle_annotate(tokens: &[Token], lexicon: &Lexicon) -> OracleAnnotation {
    let marked: Vec<bool> = tokens.iter().map(|t| oracle_is_term(t, lexicon)).collect();
    let mut spans = Vec::new();
    let mut i = 0;
    while i < marked.len() {
        if marked[i] {
            let start = i;
            while i < marked.len() && marked[i] {
                i += 1;
            }
            spans.push((start, i));
        } else {
            i += 1;
        }
    }
    let mut flattened = Vec::new();
    let mut labels = vec![0u8; tokens.len()];
    for (idx, tok) in tokens.iter().enumerate() {
        if spans.iter().any(|&(s, _)| s == idx) {
            flattened.push(TERM_MARKER.to_string());
        }
        if marked[idx] {
            labels[idx] = 1;
        }
        flattened.push(tok.surface.clone());
    }
    OracleAnnotation {
        spans,
        flattened,
        labels,
    }
}

// ---------------------------------------------------------------------------
// Naive metric implementations.
// ---------------------------------------------------------------------------

pub fn oracle_bleu(cands: &[Vec<String>], refs: &[Vec<String>], n: usize) -> f64 {
    let mut log_sum = 0.0;
    for order in 1..=n {
        let mut clipped = 0usize;
        let mut total = 0usize;
        for (cand, reference) in cands.iter().zip(refs) {
            if cand.len() + 1 > order {
                total += cand.len() + 1 - order;
            }
            let cand_grams: Vec<&[String]> = cand.windows(order).collect();
            let ref_grams: Vec<&[String]> = reference.windows(order).collect();
            let mut used = vec![false; ref_grams.len()];
            for gram in cand_grams {
                for (j, rg) in ref_grams.iter().enumerate() {
                    if !used[j] && *rg == gram {
                        used[j] = true;
                        clipped += 1;
                        break;
                    }
                }
            }
        }
        if clipped == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c: usize = cands.iter().map(Vec::len).sum();
    let r: usize = refs.iter().map(Vec::len).sum();
    if c == 0 {
        return 0.0;
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    bp * (log_sum / n as f64).exp()
}

pub fn oracle_rouge_n(cand: &[String], reference: &[String], n: usize) -> f64 {
    if cand.len() < n || reference.len() < n {
        return 0.0;
    }
    let cand_grams: Vec<&[String]> = cand.windows(n).collect();
    let ref_grams: Vec<&[String]> = reference.windows(n).collect();
    let mut used = vec![false; ref_grams.len()];
    let mut overlap = 0usize;
    for gram in &cand_grams {
        for (j, rg) in ref_grams.iter().enumerate() {
            if !used[j] && rg == gram {
                used[j] = true;
                overlap += 1;
                break;
            }
        }
    }
    let p = overlap as f64 / cand_grams.len() as f64;
    let r = overlap as f64 / ref_grams.len() as f64;
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

pub fn oracle_rouge_l(cand: &[String], reference: &[String]) -> f64 {
    let mut table = vec![vec![0usize; reference.len() + 1]; cand.len() + 1];
    for i in 1..=cand.len() {
        for j in 1..=reference.len() {
            table[i][j] = if cand[i - 1] == reference[j - 1] {
                table[i - 1][j - 1] + 1
            } else {
                table[i - 1][j].max(table[i][j - 1])
            };
        }
    }
    let lcs = table[cand.len()][reference.len()];
    if lcs == 0 || cand.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let p = lcs as f64 / cand.len() as f64;
    let r = lcs as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

pub fn oracle_distinct(responses: &[Vec<String>], n: usize) -> Option<f64> {
    let mut grams: Vec<Vec<String>> = Vec::new();
    let mut total = 0usize;
    for response in responses {
        if response.len() >= n {
            for w in response.windows(n) {
                grams.push(w.to_vec());
                total += 1;
            }
        }
    }
    if total == 0 {
        return None;
    }
    grams.sort();
    grams.dedup();
    Some(grams.len() as f64 / total as f64)
}

// ---------------------------------------------------------------------------
// Synthetic corpora.
// ---------------------------------------------------------------------------

/// Random sentence over a term pool, a distractor pool, and punctuation.
pub fn random_sentence(rng: &mut ChaCha8Rng, terms: &[String], words: &[String]) -> String {
    let len = rng.random_range(1..=18);
    let mut out: Vec<String> = Vec::with_capacity(len);
    for _ in 0..len {
        let roll: f64 = rng.random();
        if roll < 0.30 {
            out.push(terms[rng.random_range(0..terms.len())].clone());
        } else if roll < 0.38 {
            // punctuation attached to the previous token, or standalone
            let p = [".", ",", "!", "?"][rng.random_range(0..4)];
            if let Some(last) = out.last_mut() {
                last.push_str(p);
            } else {
                out.push(p.to_string());
            }
        } else if roll < 0.45 {
            let mut t = terms[rng.random_range(0..terms.len())].clone();
            if rng.random_bool(0.5) {
                t = t.to_uppercase();
            }
            out.push(t);
        } else {
            out.push(words[rng.random_range(0..words.len())].clone());
        }
    }
    out.join(" ")
}

/// Ten fixed memorizable dialogue pairs with lexicon terms on both sides.
pub fn overfit_pairs() -> Vec<(&'static str, &'static str)> {
    vec![
        (
            "i have fever and chills today",
            "take rest and drink fluids",
        ),
        (
            "my cough will not stop at night",
            "try warm tea and see me tomorrow",
        ),
        (
            "there is infection on my hand",
            "you need antibiotics for the infection",
        ),
        (
            "this rash keeps spreading fast",
            "apply the cream twice a day",
        ),
        ("my migraine is very strong", "stay in a dark quiet room"),
        (
            "i feel nausea after eating",
            "avoid heavy food for two days",
        ),
        (
            "my asthma got worse this week",
            "use the inhaler every morning",
        ),
        (
            "the ulcer pain wakes me up",
            "stop coffee and take the tablets",
        ),
        (
            "my ankle sprain still hurts",
            "keep the foot raised and iced",
        ),
        (
            "sudden vertigo when i stand up",
            "drink more water and rise slowly",
        ),
    ]
}

pub fn overfit_lexicon() -> Lexicon {
    Lexicon::from_terms([
        "fever",
        "cough",
        "infection",
        "rash",
        "migraine",
        "nausea",
        "asthma",
        "ulcer",
        "sprain",
        "vertigo",
        "antibiotics",
    ])
}

pub fn ablation_term_pool() -> Vec<String> {
    (0..40).map(|i| format!("term{i:02}")).collect()
}

pub fn ablation_word_pool() -> Vec<String> {
    (0..80).map(|i| format!("word{i:02}")).collect()
}

/// Synthetic pair corpus with terms drawn from the ablation pool.
pub fn ablation_corpus(n: usize, seed: u64) -> Vec<termdialog::annotate::TextPair> {
    let terms = ablation_term_pool();
    let words = ablation_word_pool();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sentence = |rng: &mut ChaCha8Rng| {
        let len = rng.random_range(5..=12);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            if rng.random_bool(0.3) {
                out.push(terms[rng.random_range(0..terms.len())].clone());
            } else {
                out.push(words[rng.random_range(0..words.len())].clone());
            }
        }
        out.join(" ")
    };
    (0..n)
        .map(|i| termdialog::annotate::TextPair {
            id: format!("s{i}"),
            src_text: sentence(&mut rng),
            tgt_text: sentence(&mut rng),
        })
        .collect()
}

/// Classifier accuracy at threshold 0.5 over masked positions.
pub fn classifier_accuracy(
    model: &termdialog::model::Model,
    examples: &[termdialog::model::Example],
) -> (usize, usize) {
    let mut correct = 0usize;
    let mut total = 0usize;
    for example in examples {
        let probs = model.classify_terms(&example.src_ids).unwrap();
        for (i, (&label, &mask)) in example
            .src_labels
            .iter()
            .zip(&example.src_cls_mask)
            .enumerate()
        {
            if mask {
                total += 1;
                if (probs[i] >= 0.5) == (label > 0.5) {
                    correct += 1;
                }
            }
        }
    }
    (correct, total)
}

/// Records serialized exactly as `write_records` would emit them.
pub fn records_to_jsonl(records: &[termdialog::annotate::AnnotatedRecord]) -> String {
    let mut out = String::new();
    for rec in records {
        out.push_str(&serde_json::to_string(rec).unwrap());
        out.push('\n');
    }
    out
}
