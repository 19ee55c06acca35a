//! Adam training loop with per-epoch validation and best-checkpoint tracking.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::Dropout;
use super::tape::Gradients;
use super::vocab::Vocab;
use super::{batch_pass, Example, Model, ModelConfig, ModelError};

/// Optimization hyperparameters. Defaults: batch 36, lr 1e-4, Adam, up to
/// 10 epochs; [`TrainConfig::desk`] drops the batch to 8 for laptop-scale
/// runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    /// Global-norm clip; non-positive disables clipping.
    pub grad_clip_norm: f64,
    /// Include marker positions in the classifier loss (the literal reading;
    /// leaky, so off by default).
    pub classify_on_markers: bool,
    /// Train with the auxiliary terminology loss (false = LM-only ablation).
    pub auxiliary_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 36,
            learning_rate: 1e-4,
            epochs: 10,
            seed: 0,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_epsilon: 1e-8,
            grad_clip_norm: 1.0,
            classify_on_markers: false,
            auxiliary_loss: true,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            batch_size: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.batch_size == 0 {
            return Err(ModelError::InvalidConfig("batch_size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 {
            return Err(ModelError::InvalidConfig(
                "learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One training step as recorded in the history CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub lm_loss: f64,
    pub classifier_loss: f64,
    pub overall_loss: f64,
    /// Present on the last step of each epoch when a validation set exists.
    pub val_ppl: Option<f64>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub history: Vec<HistoryRow>,
    pub best_val_ppl: Option<f64>,
}

struct Adam {
    m: Gradients,
    v: Gradients,
    t: usize,
}

impl Adam {
    fn new(model: &Model) -> Self {
        Self {
            m: Gradients::zeros_like(&model.params),
            v: Gradients::zeros_like(&model.params),
            t: 0,
        }
    }

    fn update(&mut self, model: &mut Model, grads: &Gradients, cfg: &TrainConfig) {
        self.t += 1;
        let b1 = cfg.adam_beta1;
        let b2 = cfg.adam_beta2;
        let bias1 = 1.0 - b1.powi(self.t as i32);
        let bias2 = 1.0 - b2.powi(self.t as i32);
        for p in 0..grads.tensors.len() {
            let g = grads.tensors[p].data();
            let m = self.m.tensors[p].data_mut();
            let v = self.v.tensors[p].data_mut();
            let theta = model.params.get_mut(p).data_mut();
            for i in 0..g.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let m_hat = m[i] / bias1;
                let v_hat = v[i] / bias2;
                theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_epsilon);
            }
        }
    }
}

/// Token-level validation perplexity.
pub fn validation_ppl(model: &Model, val_set: &[Example]) -> Result<f64, ModelError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for example in val_set {
        for nll in model.token_nlls(&example.src_ids, &example.tgt_ids)? {
            total += nll;
            count += 1;
        }
    }
    if count == 0 {
        return Err(ModelError::EmptyCorpus);
    }
    Ok((total / count as f64).exp())
}

/// Train a fresh model on encoded examples.
///
/// Fully deterministic for a given seed: initialization, batch order, and
/// dropout masks all derive from it. The parameters kept at the end are the
/// best-by-validation-PPL snapshot (final parameters when no validation set
/// is given). Aborts with [`ModelError::Diverged`] on a non-finite loss.
pub fn train(
    train_set: &[Example],
    val_set: &[Example],
    vocab: Vocab,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<TrainOutcome, ModelError> {
    if train_set.is_empty() {
        return Err(ModelError::EmptyCorpus);
    }
    train_config.validate()?;
    let mut model = Model::new(model_config.clone(), vocab, train_config.seed)?;
    let mut adam = Adam::new(&model);
    let mut order_rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0x5eed_0001));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(train_config.seed.wrapping_add(0x5eed_0002));

    let mut history = Vec::new();
    let mut best_val_ppl: Option<f64> = None;
    let mut best_params = None;
    let mut step = 0usize;

    for _epoch in 0..train_config.epochs {
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut order_rng);

        for chunk in order.chunks(train_config.batch_size) {
            step += 1;
            let batch: Vec<Example> = chunk.iter().map(|&i| train_set[i].clone()).collect();
            let mut grads = Gradients::zeros_like(&model.params);
            let mut dropout = if model.config.dropout > 0.0 {
                Dropout::On {
                    p: model.config.dropout,
                    rng: &mut dropout_rng,
                }
            } else {
                Dropout::Off
            };
            let loss = batch_pass(
                &model,
                &batch,
                train_config.auxiliary_loss,
                &mut dropout,
                Some(&mut grads),
            )?;
            if !loss.is_finite() || !grads.is_finite() {
                return Err(ModelError::Diverged { step });
            }
            if train_config.grad_clip_norm > 0.0 {
                let norm = grads.global_norm();
                if norm > train_config.grad_clip_norm {
                    grads.scale_all(train_config.grad_clip_norm / norm);
                }
            }
            adam.update(&mut model, &grads, train_config);
            history.push(HistoryRow {
                step,
                lm_loss: loss.lm_loss,
                classifier_loss: loss.classifier_loss,
                overall_loss: loss.overall_loss,
                val_ppl: None,
            });
        }

        if !val_set.is_empty() {
            let ppl = validation_ppl(&model, val_set)?;
            if let Some(row) = history.last_mut() {
                row.val_ppl = Some(ppl);
            }
            if best_val_ppl.is_none_or(|best| ppl < best) {
                best_val_ppl = Some(ppl);
                best_params = Some(model.params.clone());
            }
        }
    }

    if let Some(params) = best_params {
        model.params = params;
    }
    Ok(TrainOutcome {
        model,
        history,
        best_val_ppl,
    })
}

/// Write the step history as CSV: step,lm_loss,classifier_loss,overall_loss,val_ppl.
pub fn write_history_csv(path: impl AsRef<Path>, history: &[HistoryRow]) -> Result<(), ModelError> {
    let path = path.as_ref();
    let io_err = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    writeln!(out, "step,lm_loss,classifier_loss,overall_loss,val_ppl").map_err(io_err)?;
    for row in history {
        let val = row.val_ppl.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{}",
            row.step, row.lm_loss, row.classifier_loss, row.overall_loss, val
        )
        .map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}
