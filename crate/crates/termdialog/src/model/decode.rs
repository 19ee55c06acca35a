//! Autoregressive decoding: greedy argmax and length-normalized beam search.

use super::net::{self, Dropout};
use super::tape::{logsumexp, Tape};
use super::vocab::{BOS_ID, EOS_ID};
use super::{Model, ModelError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeStrategy {
    Greedy,
    Beam(usize),
}

/// Decode from BOS until EOS or `max_new` tokens.
///
/// Returns the generated ids without BOS and without the terminating EOS.
/// Greedy takes the argmax at every step (lowest id on ties); beam search
/// keeps `k` hypotheses ranked by cumulative log probability and returns the
/// best finished hypothesis under length normalization. `Beam(1)` is
/// step-for-step identical to greedy.
pub fn generate(
    model: &Model,
    src_ids: &[u32],
    max_new: usize,
    strategy: DecodeStrategy,
) -> Result<Vec<u32>, ModelError> {
    if src_ids.is_empty() {
        return Err(ModelError::EmptySource("<input>".into()));
    }
    model.validate_ids(src_ids)?;
    if max_new == 0 {
        return Ok(Vec::new());
    }
    match strategy {
        DecodeStrategy::Greedy => greedy(model, src_ids, max_new),
        DecodeStrategy::Beam(0) => Err(ModelError::ZeroBeam),
        DecodeStrategy::Beam(width) => beam(model, src_ids, max_new, width),
    }
}

/// Log-probabilities for the next token given the decoded prefix.
fn next_token_log_probs(model: &Model, src_ids: &[u32], prefix: &[u32]) -> Vec<f64> {
    let mut tape = Tape::new(&model.params);
    let dropout = &mut Dropout::Off;
    let f = net::encoder_graph(&mut tape, &model.config, src_ids, dropout);
    let o = net::decoder_graph(&mut tape, &model.config, prefix, f, dropout);
    let logits = net::lm_logits_graph(&mut tape, o);
    let value = tape.value(logits);
    let last = value.row(value.rows() - 1);
    let lse = logsumexp(last);
    last.iter().map(|&z| z - lse).collect()
}

fn argmax(row: &[f64]) -> u32 {
    let mut best = 0usize;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

fn greedy(model: &Model, src_ids: &[u32], max_new: usize) -> Result<Vec<u32>, ModelError> {
    let mut prefix = vec![BOS_ID];
    let mut out = Vec::new();
    for _ in 0..max_new {
        if prefix.len() >= model.config.max_len {
            break;
        }
        let log_probs = next_token_log_probs(model, src_ids, &prefix);
        let next = argmax(&log_probs);
        if next == EOS_ID {
            break;
        }
        prefix.push(next);
        out.push(next);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
struct Hypothesis {
    ids: Vec<u32>,
    log_prob: f64,
    /// Decoding steps taken, counting the EOS step for finished hypotheses.
    steps: usize,
}

impl Hypothesis {
    fn normalized_score(&self) -> f64 {
        self.log_prob / self.steps.max(1) as f64
    }
}

fn beam(
    model: &Model,
    src_ids: &[u32],
    max_new: usize,
    width: usize,
) -> Result<Vec<u32>, ModelError> {
    let mut live = vec![Hypothesis {
        ids: Vec::new(),
        log_prob: 0.0,
        steps: 0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();

    for _ in 0..max_new {
        let mut pool: Vec<(f64, u32, usize)> = Vec::new();
        for (h, hyp) in live.iter().enumerate() {
            if 1 + hyp.ids.len() >= model.config.max_len {
                continue;
            }
            let mut prefix = Vec::with_capacity(1 + hyp.ids.len());
            prefix.push(BOS_ID);
            prefix.extend_from_slice(&hyp.ids);
            let log_probs = next_token_log_probs(model, src_ids, &prefix);
            for (token, &lp) in log_probs.iter().enumerate() {
                pool.push((hyp.log_prob + lp, token as u32, h));
            }
        }
        if pool.is_empty() {
            break;
        }
        pool.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| a.2.cmp(&b.2))
        });

        let mut next_live = Vec::with_capacity(width);
        for &(log_prob, token, h) in pool.iter().take(width) {
            let parent = &live[h];
            if token == EOS_ID {
                finished.push(Hypothesis {
                    ids: parent.ids.clone(),
                    log_prob,
                    steps: parent.steps + 1,
                });
            } else {
                let mut ids = parent.ids.clone();
                ids.push(token);
                next_live.push(Hypothesis {
                    ids,
                    log_prob,
                    steps: parent.steps + 1,
                });
            }
        }
        live = next_live;
        if live.is_empty() {
            break;
        }
    }

    let best = finished
        .into_iter()
        .chain(live)
        .max_by(|a, b| {
            a.normalized_score()
                .partial_cmp(&b.normalized_score())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
        .expect("beam always holds at least one hypothesis");
    Ok(best.ids)
}
