//! Annotated records to model-ready id sequences.

use crate::annotate::{AnnotatedRecord, TERM_MARKER};

use super::vocab::{Vocab, BOS_ID, EOS_ID, TERM_ID};
use super::{ModelConfig, ModelError};

/// One encoded training example.
///
/// `src_ids` carry the flattened (marker-bearing) input. `src_labels` and
/// `src_cls_mask` align with it position by position: label 1 marks
/// terminology, and the mask selects the positions that enter the classifier
/// loss. `tgt_ids` are `BOS tokens... EOS`.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub src_ids: Vec<u32>,
    pub src_labels: Vec<f64>,
    pub src_cls_mask: Vec<bool>,
    pub tgt_ids: Vec<u32>,
}

/// Encode one record.
///
/// Tokens are matched in normalized (lowercase) form. Marker positions get
/// label 1 and enter the classifier loss only when `classify_on_markers` is
/// set; with markers present in the input the classification of the marker
/// itself is trivially leaky, so the default keeps them masked out. Sequences
/// are cut to `max_len`: the source keeps its most recent tokens, the target
/// its head.
pub fn encode_record(
    record: &AnnotatedRecord,
    vocab: &Vocab,
    config: &ModelConfig,
    classify_on_markers: bool,
) -> Result<Example, ModelError> {
    let mut src_ids = Vec::new();
    let mut src_labels = Vec::new();
    let mut src_cls_mask = Vec::new();
    let mut orig_idx = 0usize;
    for tok in record.src_tokens() {
        if tok == TERM_MARKER {
            src_ids.push(TERM_ID);
            src_labels.push(1.0);
            src_cls_mask.push(classify_on_markers);
        } else {
            src_ids.push(vocab.id(&tok.to_lowercase()));
            let label = record
                .src_labels
                .get(orig_idx)
                .copied()
                .ok_or_else(|| ModelError::MisalignedLabels(record.id.clone()))?;
            src_labels.push(f64::from(label));
            src_cls_mask.push(true);
            orig_idx += 1;
        }
    }
    if orig_idx != record.src_labels.len() {
        return Err(ModelError::MisalignedLabels(record.id.clone()));
    }
    if src_ids.is_empty() {
        return Err(ModelError::EmptySource(record.id.clone()));
    }
    if src_ids.len() > config.max_len {
        let skip = src_ids.len() - config.max_len;
        src_ids.drain(..skip);
        src_labels.drain(..skip);
        src_cls_mask.drain(..skip);
    }

    let mut tgt_ids = vec![BOS_ID];
    for tok in record.tgt_tokens() {
        let id = if tok == TERM_MARKER {
            TERM_ID
        } else {
            vocab.id(&tok.to_lowercase())
        };
        tgt_ids.push(id);
        if tgt_ids.len() == config.max_len - 1 {
            break;
        }
    }
    if tgt_ids.len() == 1 {
        return Err(ModelError::EmptyTarget(record.id.clone()));
    }
    tgt_ids.push(EOS_ID);

    Ok(Example {
        id: record.id.clone(),
        src_ids,
        src_labels,
        src_cls_mask,
        tgt_ids,
    })
}

/// Encode a whole split, skipping nothing: any bad record is an error.
pub fn encode_records(
    records: &[AnnotatedRecord],
    vocab: &Vocab,
    config: &ModelConfig,
    classify_on_markers: bool,
) -> Result<Vec<Example>, ModelError> {
    records
        .iter()
        .map(|r| encode_record(r, vocab, config, classify_on_markers))
        .collect()
}
