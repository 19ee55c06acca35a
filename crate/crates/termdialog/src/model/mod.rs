//! Desk-scale terminology-aware encoder-decoder.
//!
//! The model trains a response generator and an auxiliary per-position
//! terminology classifier on the encoder features; the overall training loss
//! is the exact sum of the two. Everything runs in f64 on the CPU so analytic
//! gradients can be checked against central finite differences.

pub mod checkpoint;
pub mod data;
pub mod decode;
pub mod net;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod vocab;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use data::{encode_record, encode_records, Example};
pub use decode::DecodeStrategy;
pub use tape::{Gradients, ParamStore};
pub use tensor::Matrix;
pub use train::{train, HistoryRow, TrainConfig, TrainOutcome};
pub use vocab::{Vocab, BOS_ID, EOS_ID, PAD_ID, TERM_ID, UNK_ID};

use net::Dropout;
use tape::{bce_with_logit, logsumexp, sigmoid, Tape};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    InvalidConfig(String),
    #[error("token id {id} out of range for vocabulary of {vocab_size}")]
    IdOutOfRange { id: u32, vocab_size: usize },
    #[error("sequence of {len} tokens exceeds max_len {max_len}")]
    SequenceTooLong { len: usize, max_len: usize },
    #[error("source sequence is empty (record {0})")]
    EmptySource(String),
    #[error("target sequence is empty (record {0})")]
    EmptyTarget(String),
    #[error("target must begin with BOS")]
    MissingBos,
    #[error("labels/mask not aligned with source positions (record {0})")]
    MisalignedLabels(String),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("training diverged at step {step}: non-finite loss")]
    Diverged { step: usize },
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error("checkpoint rejected: {0}")]
    BadCheckpoint(String),
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint parse error: {0}")]
    Json(#[from] serde_json::Error),
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub ffn_dim: usize,
    pub max_len: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl ModelConfig {
    /// CPU-trainable default: exercises every component in minutes.
    pub fn desk() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_enc_layers: 2,
            n_dec_layers: 2,
            ffn_dim: 256,
            max_len: 128,
            dropout: 0.0,
        }
    }

    /// Minimal configuration for gradient checking.
    pub fn tiny() -> Self {
        Self {
            d_model: 16,
            n_heads: 2,
            n_enc_layers: 1,
            n_dec_layers: 1,
            ffn_dim: 32,
            max_len: 64,
            dropout: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_model == 0 || self.n_heads == 0 || self.ffn_dim == 0 || self.max_len == 0 {
            return Err(ModelError::InvalidConfig("zero-sized dimension".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(ModelError::InvalidConfig(format!(
                "d_model {} not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ModelError::InvalidConfig(format!(
                "dropout {} outside [0,1)",
                self.dropout
            )));
        }
        if self.n_enc_layers == 0 || self.n_dec_layers == 0 {
            return Err(ModelError::InvalidConfig("need at least one layer".into()));
        }
        Ok(())
    }
}

/// All tensors produced by one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// F: one d_model row per source position.
    pub encoder_features: Matrix,
    /// Decoder features, one row per predicted position (targets 1..L).
    pub decoder_features: Matrix,
    /// One logits row per target position. Row t is the prediction of
    /// tgt[t] from the strict prefix tgt[0..t]; row 0 (the BOS position,
    /// conditioned on nothing) is the LM head bias alone.
    pub lm_logits: Matrix,
    /// Classifier logit per source position.
    pub term_logits: Vec<f64>,
    /// sigmoid(term_logits), strictly inside (0,1).
    pub term_probs: Vec<f64>,
}

/// Loss values in nats. `overall_loss` is always computed as
/// `lm_loss + classifier_loss` on the same arithmetic path that reports them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub lm_loss: f64,
    pub classifier_loss: f64,
    pub overall_loss: f64,
}

impl LossBreakdown {
    fn new(lm_loss: f64, classifier_loss: f64) -> Self {
        Self {
            lm_loss,
            classifier_loss,
            overall_loss: lm_loss + classifier_loss,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.lm_loss.is_finite() && self.classifier_loss.is_finite()
    }
}

/// Trained or trainable model: config + vocabulary + parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub params: ParamStore,
}

impl Model {
    /// Fresh model with seeded initialization.
    pub fn new(config: ModelConfig, vocab: Vocab, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        vocab.validate_specials()?;
        let params = net::init_params(&config, vocab.size(), seed);
        Ok(Self {
            config,
            vocab,
            params,
        })
    }

    fn validate_ids(&self, ids: &[u32]) -> Result<(), ModelError> {
        if ids.len() > self.config.max_len {
            return Err(ModelError::SequenceTooLong {
                len: ids.len(),
                max_len: self.config.max_len,
            });
        }
        let vocab_size = self.vocab.size();
        for &id in ids {
            if id as usize >= vocab_size {
                return Err(ModelError::IdOutOfRange { id, vocab_size });
            }
        }
        Ok(())
    }

    /// Encoder features F for a source sequence (eval mode).
    pub fn encode(&self, src_ids: &[u32]) -> Result<Matrix, ModelError> {
        if src_ids.is_empty() {
            return Err(ModelError::EmptySource("<input>".into()));
        }
        self.validate_ids(src_ids)?;
        let mut tape = Tape::new(&self.params);
        let f = net::encoder_graph(&mut tape, &self.config, src_ids, &mut Dropout::Off);
        Ok(tape.value(f).clone())
    }

    /// Full forward pass under teacher forcing (eval mode).
    ///
    /// `tgt_ids` must begin with BOS.
    pub fn forward(&self, src_ids: &[u32], tgt_ids: &[u32]) -> Result<ForwardOutput, ModelError> {
        if src_ids.is_empty() {
            return Err(ModelError::EmptySource("<input>".into()));
        }
        if tgt_ids.is_empty() {
            return Err(ModelError::EmptyTarget("<input>".into()));
        }
        if tgt_ids[0] != BOS_ID {
            return Err(ModelError::MissingBos);
        }
        self.validate_ids(src_ids)?;
        self.validate_ids(tgt_ids)?;

        let mut tape = Tape::new(&self.params);
        let dropout = &mut Dropout::Off;
        let f = net::encoder_graph(&mut tape, &self.config, src_ids, dropout);
        let cls = net::classifier_graph(&mut tape, f);

        let vocab_size = self.vocab.size();
        let consumed = &tgt_ids[..tgt_ids.len() - 1];
        let (decoder_features, predicted_logits) = if consumed.is_empty() {
            (
                Matrix::zeros(0, self.config.d_model),
                Matrix::zeros(0, vocab_size),
            )
        } else {
            let o = net::decoder_graph(&mut tape, &self.config, consumed, f, dropout);
            let logits = net::lm_logits_graph(&mut tape, o);
            (tape.value(o).clone(), tape.value(logits).clone())
        };

        // Row 0 is the prediction of the BOS position from an empty prefix,
        // which only the head bias can express.
        let mut lm_logits = Matrix::zeros(tgt_ids.len(), vocab_size);
        lm_logits
            .row_mut(0)
            .copy_from_slice(self.params.by_name("lm.b").row(0));
        for t in 1..tgt_ids.len() {
            lm_logits
                .row_mut(t)
                .copy_from_slice(predicted_logits.row(t - 1));
        }

        let cls_value = tape.value(cls);
        let term_logits: Vec<f64> = (0..cls_value.rows()).map(|r| cls_value.get(r, 0)).collect();
        let term_probs = term_logits.iter().map(|&z| sigmoid(z)).collect();

        Ok(ForwardOutput {
            encoder_features: tape.value(f).clone(),
            decoder_features,
            lm_logits,
            term_logits,
            term_probs,
        })
    }

    /// Per-position terminology probabilities for a source sequence.
    pub fn classify_terms(&self, src_ids: &[u32]) -> Result<Vec<f64>, ModelError> {
        if src_ids.is_empty() {
            return Err(ModelError::EmptySource("<input>".into()));
        }
        self.validate_ids(src_ids)?;
        let mut tape = Tape::new(&self.params);
        let f = net::encoder_graph(&mut tape, &self.config, src_ids, &mut Dropout::Off);
        let cls = net::classifier_graph(&mut tape, f);
        let z = tape.value(cls);
        Ok((0..z.rows()).map(|r| sigmoid(z.get(r, 0))).collect())
    }

    /// Negative log likelihood of each target token (positions 1..L) under
    /// teacher forcing; the input for perplexity.
    pub fn token_nlls(&self, src_ids: &[u32], tgt_ids: &[u32]) -> Result<Vec<f64>, ModelError> {
        let out = self.forward(src_ids, tgt_ids)?;
        Ok((1..tgt_ids.len())
            .map(|t| {
                let row = out.lm_logits.row(t);
                logsumexp(row) - row[tgt_ids[t] as usize]
            })
            .collect())
    }

    /// Autoregressive decoding; see [`decode::generate`].
    pub fn generate(
        &self,
        src_ids: &[u32],
        max_new: usize,
        strategy: DecodeStrategy,
    ) -> Result<Vec<u32>, ModelError> {
        decode::generate(self, src_ids, max_new, strategy)
    }
}

/// Joint loss for one example from its forward output.
///
/// The LM term averages `-log P(y_t | y_<t, X)` over target positions 1..L
/// (BOS is conditioning, not prediction). The classifier term averages binary
/// cross entropy over the positions selected by `cls_mask`; an empty mask
/// contributes zero.
pub fn compute_loss(
    output: &ForwardOutput,
    tgt_ids: &[u32],
    src_labels: &[f64],
    src_cls_mask: &[bool],
) -> Result<LossBreakdown, ModelError> {
    if tgt_ids.len() < 2 {
        return Err(ModelError::EmptyTarget("<loss>".into()));
    }
    if output.lm_logits.rows() != tgt_ids.len() {
        return Err(ModelError::LengthMismatch(format!(
            "lm_logits rows {} vs target length {}",
            output.lm_logits.rows(),
            tgt_ids.len()
        )));
    }
    if src_labels.len() != output.term_logits.len() || src_cls_mask.len() != src_labels.len() {
        return Err(ModelError::LengthMismatch(format!(
            "labels {} / mask {} vs source positions {}",
            src_labels.len(),
            src_cls_mask.len(),
            output.term_logits.len()
        )));
    }

    let mut lm_sum = 0.0;
    for t in 1..tgt_ids.len() {
        let row = output.lm_logits.row(t);
        lm_sum += logsumexp(row) - row[tgt_ids[t] as usize];
    }
    let lm_loss = lm_sum / (tgt_ids.len() - 1) as f64;

    let mut cls_sum = 0.0;
    let mut cls_count = 0usize;
    for (i, (&z, &label)) in output.term_logits.iter().zip(src_labels).enumerate() {
        if src_cls_mask[i] {
            cls_sum += bce_with_logit(z, label);
            cls_count += 1;
        }
    }
    let classifier_loss = if cls_count > 0 {
        cls_sum / cls_count as f64
    } else {
        0.0
    };

    Ok(LossBreakdown::new(lm_loss, classifier_loss))
}

struct ExampleGraph {
    lm_sum: tape::NodeId,
    cls_sum: tape::NodeId,
}

/// Training graph for one example: raw loss sums, not means.
fn example_graph(
    tape: &mut Tape,
    config: &ModelConfig,
    example: &Example,
    dropout: &mut Dropout,
) -> ExampleGraph {
    let f = net::encoder_graph(tape, config, &example.src_ids, dropout);
    let cls_logits = net::classifier_graph(tape, f);
    let cls_sum = tape.bce_sum(cls_logits, &example.src_labels, &example.src_cls_mask);

    let consumed = &example.tgt_ids[..example.tgt_ids.len() - 1];
    let o = net::decoder_graph(tape, config, consumed, f, dropout);
    let logits = net::lm_logits_graph(tape, o);
    let lm_sum = tape.nll_sum(logits, &example.tgt_ids[1..]);

    ExampleGraph { lm_sum, cls_sum }
}

fn batch_totals(batch: &[Example]) -> (usize, usize) {
    let lm_tokens = batch.iter().map(|e| e.tgt_ids.len() - 1).sum();
    let cls_positions = batch
        .iter()
        .map(|e| e.src_cls_mask.iter().filter(|&&m| m).count())
        .sum();
    (lm_tokens, cls_positions)
}

pub(crate) fn batch_pass(
    model: &Model,
    batch: &[Example],
    auxiliary: bool,
    dropout: &mut Dropout,
    mut grads: Option<&mut Gradients>,
) -> Result<LossBreakdown, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    let (lm_tokens, cls_positions) = batch_totals(batch);
    if lm_tokens == 0 {
        return Err(ModelError::EmptyTarget("<batch>".into()));
    }
    let lm_weight = 1.0 / lm_tokens as f64;
    let cls_weight = if cls_positions > 0 {
        1.0 / cls_positions as f64
    } else {
        0.0
    };

    let mut lm_total = 0.0;
    let mut cls_total = 0.0;
    for example in batch {
        let mut tape = Tape::new(&model.params);
        let graph = example_graph(&mut tape, &model.config, example, dropout);
        lm_total += tape.value(graph.lm_sum).item();
        cls_total += tape.value(graph.cls_sum).item();
        if let Some(g) = grads.as_deref_mut() {
            let seed_cls = if auxiliary { cls_weight } else { 0.0 };
            let total = tape.add_scaled(graph.lm_sum, graph.cls_sum, lm_weight, seed_cls);
            tape.backward(total, g);
        }
    }

    Ok(LossBreakdown::new(
        lm_total * lm_weight,
        cls_total * cls_weight,
    ))
}

/// Pooled joint loss over a batch (token-level LM normalization).
pub fn batch_loss(model: &Model, batch: &[Example]) -> Result<LossBreakdown, ModelError> {
    batch_pass(model, batch, true, &mut Dropout::Off, None)
}

/// Analytic gradients of the pooled joint loss.
///
/// With `auxiliary` false the classifier term is excluded from the gradient
/// (its value is still reported): the no-auxiliary ablation.
pub fn batch_gradients(
    model: &Model,
    batch: &[Example],
    auxiliary: bool,
) -> Result<(Gradients, LossBreakdown), ModelError> {
    let mut grads = Gradients::zeros_like(&model.params);
    let loss = batch_pass(model, batch, auxiliary, &mut Dropout::Off, Some(&mut grads))?;
    Ok((grads, loss))
}

/// Softmax of one logits row; reporting and test helper.
pub fn softmax_row(row: &[f64]) -> Vec<f64> {
    let lse = logsumexp(row);
    row.iter().map(|&z| (z - lse).exp()).collect()
}
