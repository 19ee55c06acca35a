//! Batch pipeline commands behind the `termdialog` binary.
//!
//! Every command is driven by a [`PipelineConfig`] (a TOML file with nested
//! sections, overridable by flags) and writes the resolved config next to its
//! outputs so a run can be reproduced from its artifacts alone.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use crate::annotate::{self, AnnotatedRecord, TextPair, TERM_MARKER};
use crate::corpus::{self, FilterConfig};
use crate::lexicon::Lexicon;
use crate::metrics::{self, MetricReport};
use crate::model::{
    self, checkpoint, encode_records, train::write_history_csv, DecodeStrategy, Model, ModelConfig,
    TrainConfig, Vocab, BOS_ID, EOS_ID,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct PathsConfig {
    pub raw: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub train: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSettings {
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    pub seed: u64,
}

impl Default for SplitSettings {
    fn default() -> Self {
        Self {
            train_ratio: 0.9,
            val_ratio: 0.05,
            test_ratio: 0.05,
            seed: 13,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeKind {
    Greedy,
    Beam,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DecodeSettings {
    pub strategy: DecodeKind,
    pub beam_width: usize,
    pub max_new: usize,
}

impl Default for DecodeSettings {
    fn default() -> Self {
        Self {
            strategy: DecodeKind::Greedy,
            beam_width: 4,
            max_new: 64,
        }
    }
}

impl DecodeSettings {
    pub fn strategy(&self) -> DecodeStrategy {
        match self.strategy {
            DecodeKind::Greedy => DecodeStrategy::Greedy,
            DecodeKind::Beam => DecodeStrategy::Beam(self.beam_width),
        }
    }
}

fn default_min_freq() -> usize {
    1
}

/// Full pipeline configuration; all sections have working defaults.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub paths: PathsConfig,
    pub split: SplitSettings,
    pub filter: FilterConfig,
    #[serde(rename = "vocab_min_freq", default = "default_min_freq")]
    pub vocab_min_freq: usize,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub decode: DecodeSettings,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            paths: PathsConfig {
                out_dir: PathBuf::from("out"),
                ..PathsConfig::default()
            },
            split: SplitSettings::default(),
            filter: FilterConfig::default(),
            vocab_min_freq: 1,
            model: ModelConfig::desk(),
            train: TrainConfig::desk(),
            decode: DecodeSettings::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn train_path(&self) -> PathBuf {
        self.paths
            .train
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("train.jsonl"))
    }

    pub fn val_path(&self) -> PathBuf {
        self.paths
            .val
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("val.jsonl"))
    }

    pub fn test_path(&self) -> PathBuf {
        self.paths
            .test
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("test.jsonl"))
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.paths
            .checkpoint
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("checkpoint.json"))
    }

    /// Write the fully resolved config next to the run's outputs.
    pub fn write_resolved(&self, out_dir: &Path) -> Result<()> {
        fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
        let text = toml::to_string(self).context("serializing resolved config")?;
        fs::write(out_dir.join("config.resolved.toml"), text)
            .with_context(|| format!("writing resolved config in {}", out_dir.display()))?;
        Ok(())
    }
}

fn load_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::load(path).with_context(|| format!("loading lexicon {}", path.display()))
}

/// Per-file summary printed by `annotate`.
#[derive(Debug, Serialize)]
pub struct AnnotateSummary {
    pub records: usize,
    pub tokens: usize,
    pub term_phrases: usize,
}

/// Annotate a JSONL file of `{id, src_text, tgt_text}` pairs.
pub fn run_annotate(input: &Path, lexicon_path: &Path, output: &Path) -> Result<AnnotateSummary> {
    let lexicon = load_lexicon(lexicon_path)?;
    let pairs =
        annotate::read_pairs(input).with_context(|| format!("reading {}", input.display()))?;
    let records = annotate::annotate_corpus(&pairs, &lexicon)?;
    annotate::write_records(output, &records)
        .with_context(|| format!("writing {}", output.display()))?;
    let tokens = records
        .iter()
        .map(|r| r.src_labels.len() + r.tgt_labels.len())
        .sum();
    let term_phrases = records
        .iter()
        .map(|r| r.src_spans.len() + r.tgt_spans.len())
        .sum();
    Ok(AnnotateSummary {
        records: records.len(),
        tokens,
        term_phrases,
    })
}

#[derive(Debug, Serialize)]
pub struct PrepareSummary {
    pub parsed_pairs: usize,
    pub skipped_lines: usize,
    pub kept_pairs: usize,
    pub train_records: usize,
    pub val_records: usize,
    pub test_records: usize,
    pub stats_table: String,
}

/// parse -> filter -> split -> annotate -> stats.
pub fn run_prepare(config: &PipelineConfig) -> Result<PrepareSummary> {
    let raw = config
        .paths
        .raw
        .as_deref()
        .context("config is missing paths.raw")?;
    let lexicon_path = config
        .paths
        .lexicon
        .as_deref()
        .context("config is missing paths.lexicon")?;
    let lexicon = load_lexicon(lexicon_path)?;
    let out_dir = &config.paths.out_dir;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let parsed = corpus::parse_raw(raw)?;
    let parsed_pairs = parsed.pairs.len();
    let kept = corpus::filter_and_truncate(parsed.pairs, &config.filter);
    let kept_pairs = kept.len();
    let ratios = (
        config.split.train_ratio,
        config.split.val_ratio,
        config.split.test_ratio,
    );
    let (train, val, test) = corpus::split(kept, ratios, config.split.seed)?;

    let mut stats_columns = Vec::new();
    let mut sizes = Vec::new();
    for (name, pairs, path) in [
        ("Train", &train, config.train_path()),
        ("Val", &val, config.val_path()),
        ("Test", &test, config.test_path()),
    ] {
        let text_pairs: Vec<TextPair> = pairs.iter().map(|p| p.to_text_pair()).collect();
        let records = annotate::annotate_corpus(&text_pairs, &lexicon)?;
        annotate::write_records(&path, &records)
            .with_context(|| format!("writing {}", path.display()))?;
        stats_columns.push((name, corpus::compute_stats(pairs, &lexicon)));
        sizes.push(records.len());
    }

    let stats_table = corpus::render_stats_table(&stats_columns);
    fs::write(out_dir.join("stats.txt"), &stats_table).context("writing stats.txt")?;
    let stats_json: serde_json::Value = stats_columns
        .iter()
        .map(|(name, stats)| (name.to_lowercase(), serde_json::to_value(stats).unwrap()))
        .collect::<serde_json::Map<String, serde_json::Value>>()
        .into();
    fs::write(
        out_dir.join("stats.json"),
        serde_json::to_string_pretty(&stats_json)?,
    )
    .context("writing stats.json")?;
    config.write_resolved(out_dir)?;

    Ok(PrepareSummary {
        parsed_pairs,
        skipped_lines: parsed.skipped_lines,
        kept_pairs,
        train_records: sizes[0],
        val_records: sizes[1],
        test_records: sizes[2],
        stats_table,
    })
}

/// Table-style statistics for one raw dump.
pub fn run_stats(input: &Path, lexicon_path: &Path) -> Result<String> {
    let lexicon = load_lexicon(lexicon_path)?;
    let parsed = corpus::parse_raw(input)?;
    let stats = corpus::compute_stats(&parsed.pairs, &lexicon);
    Ok(corpus::render_stats_table(&[("All", stats)]))
}

#[derive(Debug, Serialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub final_lm_loss: f64,
    pub final_classifier_loss: f64,
    pub final_overall_loss: f64,
    pub best_val_ppl: Option<f64>,
    pub checkpoint: PathBuf,
}

/// Build the vocabulary, train, and write checkpoint + history CSV.
pub fn run_train(config: &PipelineConfig) -> Result<TrainSummary> {
    let out_dir = &config.paths.out_dir;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let train_records = annotate::read_records(config.train_path())
        .with_context(|| format!("reading {}", config.train_path().display()))?;
    let val_records = match fs::metadata(config.val_path()) {
        Ok(_) => annotate::read_records(config.val_path())?,
        Err(_) => Vec::new(),
    };

    let vocab = Vocab::build_from_records(&train_records, config.vocab_min_freq)?;
    let train_set = encode_records(
        &train_records,
        &vocab,
        &config.model,
        config.train.classify_on_markers,
    )?;
    let val_set = encode_records(
        &val_records,
        &vocab,
        &config.model,
        config.train.classify_on_markers,
    )?;

    let outcome = model::train(&train_set, &val_set, vocab, &config.model, &config.train)?;

    let checkpoint_path = config.checkpoint_path();
    checkpoint::save(&outcome.model, &checkpoint_path)?;
    write_history_csv(out_dir.join("history.csv"), &outcome.history)?;
    config.write_resolved(out_dir)?;

    let last = outcome.history.last().context("no training steps ran")?;
    Ok(TrainSummary {
        steps: last.step,
        final_lm_loss: last.lm_loss,
        final_classifier_loss: last.classifier_loss,
        final_overall_loss: last.overall_loss,
        best_val_ppl: outcome.best_val_ppl,
        checkpoint: checkpoint_path,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct GeneratedResponse {
    pub id: String,
    pub response: String,
}

/// Render generated ids as text, markers stripped.
fn ids_to_text(model: &Model, ids: &[u32]) -> String {
    ids.iter()
        .map(|&id| model.vocab.token(id))
        .filter(|t| *t != TERM_MARKER)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Reference text in the model's normalized token space, markers stripped.
fn reference_text(model: &Model, tgt_ids: &[u32]) -> String {
    let inner: Vec<u32> = tgt_ids
        .iter()
        .copied()
        .filter(|&id| id != BOS_ID && id != EOS_ID)
        .collect();
    ids_to_text(model, &inner)
}

struct DecodedRow {
    id: String,
    candidate: String,
    reference: String,
    nlls: Vec<f64>,
}

fn decode_test_set(
    model: &Model,
    records: &[AnnotatedRecord],
    decode: &DecodeSettings,
) -> Result<Vec<DecodedRow>> {
    if records.is_empty() {
        bail!("test set is empty");
    }
    let examples = encode_records(records, &model.vocab, &model.config, false)?;
    let mut rows = Vec::with_capacity(examples.len());
    for example in &examples {
        let generated = model.generate(&example.src_ids, decode.max_new, decode.strategy())?;
        let nlls = model.token_nlls(&example.src_ids, &example.tgt_ids)?;
        rows.push(DecodedRow {
            id: example.id.clone(),
            candidate: ids_to_text(model, &generated),
            reference: reference_text(model, &example.tgt_ids),
            nlls,
        });
    }
    Ok(rows)
}

/// Decode a test set into a responses JSONL file.
pub fn run_generate(
    checkpoint_path: &Path,
    input: &Path,
    output: &Path,
    decode: &DecodeSettings,
) -> Result<usize> {
    let model = checkpoint::load(checkpoint_path)?;
    let records = annotate::read_records(input)?;
    let rows = decode_test_set(&model, &records, decode)?;
    let mut out = std::io::BufWriter::new(
        fs::File::create(output).with_context(|| format!("creating {}", output.display()))?,
    );
    for row in &rows {
        let line = serde_json::to_string(&GeneratedResponse {
            id: row.id.clone(),
            response: row.candidate.clone(),
        })?;
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(rows.len())
}

/// Decode a test set and compute the full metric report.
pub fn run_evaluate(
    checkpoint_path: &Path,
    input: &Path,
    lexicon_path: &Path,
    report_json: Option<&Path>,
    decode: &DecodeSettings,
) -> Result<MetricReport> {
    let model = checkpoint::load(checkpoint_path)?;
    let lexicon = load_lexicon(lexicon_path)?;
    let records = annotate::read_records(input)?;
    let rows = decode_test_set(&model, &records, decode)?;

    let candidates: Vec<String> = rows.iter().map(|r| r.candidate.clone()).collect();
    let references: Vec<String> = rows.iter().map(|r| r.reference.clone()).collect();
    let nlls: Vec<Vec<f64>> = rows.iter().map(|r| r.nlls.clone()).collect();
    let report = metrics::evaluate_run(&candidates, &references, &nlls, &lexicon)?;

    if let Some(path) = report_json {
        fs::write(path, report.presentation_json())
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_round_trips_through_toml() {
        let config = PipelineConfig::default();
        let text = toml::to_string(&config).unwrap();
        let parsed: PipelineConfig = toml::from_str(&text).unwrap();
        assert_eq!(parsed.split.seed, config.split.seed);
        assert_eq!(parsed.model, config.model);
        assert_eq!(parsed.train, config.train);
    }

    #[test]
    fn config_sections_are_optional() {
        let parsed: PipelineConfig = toml::from_str(
            r#"
            [paths]
            out_dir = "run1"

            [train]
            epochs = 2
            "#,
        )
        .unwrap();
        assert_eq!(parsed.paths.out_dir, PathBuf::from("run1"));
        assert_eq!(parsed.train.epochs, 2);
        // Untouched sections keep defaults.
        assert_eq!(parsed.split.train_ratio, 0.9);
        assert_eq!(parsed.model, ModelConfig::desk());
    }

    #[test]
    fn derived_paths_follow_out_dir() {
        let mut config = PipelineConfig::default();
        config.paths.out_dir = PathBuf::from("exp");
        assert_eq!(config.train_path(), PathBuf::from("exp/train.jsonl"));
        assert_eq!(
            config.checkpoint_path(),
            PathBuf::from("exp/checkpoint.json")
        );
        config.paths.train = Some(PathBuf::from("elsewhere.jsonl"));
        assert_eq!(config.train_path(), PathBuf::from("elsewhere.jsonl"));
    }
}
