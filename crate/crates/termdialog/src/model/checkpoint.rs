//! Self-describing JSON checkpoint: config, vocabulary, and named tensors.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net;
use super::tensor::Matrix;
use super::vocab::Vocab;
use super::{Model, ModelConfig, ModelError};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: ModelConfig,
    vocab: Vec<String>,
    tensors: Vec<NamedTensor>,
}

/// Serialize a model to a checkpoint file.
pub fn save(model: &Model, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let path = path.as_ref();
    let checkpoint = Checkpoint {
        version: CHECKPOINT_VERSION,
        config: model.config.clone(),
        vocab: model.vocab.tokens().to_vec(),
        tensors: model
            .params
            .iter()
            .map(|(name, tensor)| NamedTensor {
                name: name.to_string(),
                rows: tensor.rows(),
                cols: tensor.cols(),
                data: tensor.data().to_vec(),
            })
            .collect(),
    };
    let file = File::create(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::to_writer(BufWriter::new(file), &checkpoint)?;
    Ok(())
}

/// Load and validate a checkpoint.
///
/// The tensor names and shapes must exactly match a fresh parameter layout
/// for the stored config and vocabulary size.
pub fn load(path: impl AsRef<Path>) -> Result<Model, ModelError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let checkpoint: Checkpoint = serde_json::from_reader(BufReader::new(file))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(ModelError::BadCheckpoint(format!(
            "version {} unsupported (expected {CHECKPOINT_VERSION})",
            checkpoint.version
        )));
    }
    checkpoint.config.validate()?;
    let vocab = Vocab::from_tokens(checkpoint.vocab);
    vocab.validate_specials()?;

    let mut params = net::init_params(&checkpoint.config, vocab.size(), 0);
    if checkpoint.tensors.len() != params.len() {
        return Err(ModelError::BadCheckpoint(format!(
            "expected {} tensors, found {}",
            params.len(),
            checkpoint.tensors.len()
        )));
    }
    for (idx, named) in checkpoint.tensors.iter().enumerate() {
        if params.name(idx) != named.name {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor {} out of order: expected {}, found {}",
                idx,
                params.name(idx),
                named.name
            )));
        }
        let expected = params.get(idx);
        if (expected.rows(), expected.cols()) != (named.rows, named.cols) {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor {} has shape {}x{}, expected {}x{}",
                named.name,
                named.rows,
                named.cols,
                expected.rows(),
                expected.cols()
            )));
        }
        if named.data.len() != named.rows * named.cols {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor {} data length mismatch",
                named.name
            )));
        }
        if named.data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::BadCheckpoint(format!(
                "tensor {} contains non-finite values",
                named.name
            )));
        }
        *params.get_mut(idx) = Matrix::from_vec(named.rows, named.cols, named.data.clone());
    }

    Ok(Model {
        config: checkpoint.config,
        vocab,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::vocab::Vocab;

    fn sample_model() -> Model {
        let vocab = Vocab::build(["fever", "rest"].into_iter(), 1).unwrap();
        Model::new(ModelConfig::tiny(), vocab, 21).unwrap()
    }

    #[test]
    fn save_load_round_trip() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt.json");
        save(&model, &path).unwrap();
        let loaded = load(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.vocab, model.vocab);
        for ((na, ta), (nb, tb)) in model.params.iter().zip(loaded.params.iter()) {
            assert_eq!(na, nb);
            assert_eq!(ta, tb);
        }
        // Identical forward behavior.
        let out_a = model.forward(&[5, 6], &[1, 5, 2]).unwrap();
        let out_b = loaded.forward(&[5, 6], &[1, 5, 2]).unwrap();
        assert_eq!(out_a.lm_logits, out_b.lm_logits);
    }

    #[test]
    fn save_is_deterministic() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        save(&model, &a).unwrap();
        save(&model, &b).unwrap();
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    }

    #[test]
    fn version_and_shape_validation() {
        let model = sample_model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        save(&model, &path).unwrap();

        let mut text = std::fs::read_to_string(&path).unwrap();
        text = text.replace("\"version\":1", "\"version\":9");
        std::fs::write(&path, &text).unwrap();
        assert!(matches!(load(&path), Err(ModelError::BadCheckpoint(_))));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load("/nonexistent/model.json"),
            Err(ModelError::Io { .. })
        ));
    }
}
