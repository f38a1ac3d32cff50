//! Experiment grid: every (model, prompt, decoder) combination decoded and
//! scored over a fixed set of test samples, plus ranking and report files.

mod report;
mod run;

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, SplitRatios};
use crate::decode::{DecodeConfig, FinishReason};
use crate::lm::{LmError, NGramConfig};
use crate::metrics::Metric;
use crate::prompt::{PromptError, PromptSpec};
use crate::provenance::Provenance;
use crate::{MetricReport, TotalScoreWeights};

pub use report::{emit_report, rank_combinations, RankedCombination};
pub use run::{run_grid, select_eval_samples, RunOptions};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("invalid grid config: {0}")]
    Config(String),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("model `{model}`: {source}")]
    Model {
        model: String,
        #[source]
        source: LmError,
    },
    #[error("sample `{0}` is not in the test split")]
    UnknownSample(String),
    #[error("no evaluation samples available")]
    NoEvalSamples,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> HarnessError {
        let path = path.into();
        move |source| HarnessError::Io { path, source }
    }
}

/// Where a grid model comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Reference n-gram model, fit on the train split once per prompt
    /// variant using the prompt-wrapped targets.
    Ngram {
        id: String,
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_k")]
        k: f64,
        #[serde(default = "default_vocab_cap")]
        vocab_cap: usize,
    },
    /// A persisted n-gram model used as-is for every prompt.
    File { id: String, path: PathBuf },
    /// A model server speaking the line-delimited JSON protocol.
    Remote { id: String, endpoint: String },
}

fn default_order() -> usize {
    NGramConfig::default().order
}

fn default_k() -> f64 {
    NGramConfig::default().k
}

fn default_vocab_cap() -> usize {
    NGramConfig::default().vocab_cap
}

impl ModelSpec {
    pub fn id(&self) -> &str {
        match self {
            ModelSpec::Ngram { id, .. } | ModelSpec::File { id, .. } | ModelSpec::Remote { id, .. } => id,
        }
    }

    pub fn ngram(id: &str, order: usize) -> Self {
        ModelSpec::Ngram {
            id: id.to_string(),
            order,
            k: default_k(),
            vocab_cap: default_vocab_cap(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSplit {
    pub ratios: SplitRatios,
    pub seed: u64,
}

/// Grid configuration, read from the `--config` JSON file. Missing fields
/// take the defaults: three n-gram models (orders 1–3), all seven prompts,
/// the five decoders with default hyperparameters, and the ten most viewed
/// test samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentGrid {
    pub models: Vec<ModelSpec>,
    pub prompts: Vec<PromptSpec>,
    pub decoders: Vec<DecodeConfig>,
    /// Explicit sample ids from the test split; empty selects
    /// `eval_count` samples by page views.
    pub eval_samples: Vec<String>,
    pub eval_count: usize,
    pub weights: TotalScoreWeights,
    pub split: GridSplit,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        Self {
            models: vec![
                ModelSpec::ngram("ngram1", 1),
                ModelSpec::ngram("ngram2", 2),
                ModelSpec::ngram("ngram3", 3),
            ],
            prompts: PromptSpec::all(),
            decoders: DecodeConfig::paper_defaults(),
            eval_samples: Vec::new(),
            eval_count: 10,
            weights: TotalScoreWeights::default(),
            split: GridSplit::default(),
        }
    }
}

impl ExperimentGrid {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let fail = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.models.is_empty() || self.prompts.is_empty() || self.decoders.is_empty() {
            return fail("models, prompts and decoders must all be non-empty");
        }
        let mut ids = HashSet::new();
        for m in &self.models {
            if !ids.insert(m.id()) {
                return Err(HarnessError::Config(format!("duplicate model id `{}`", m.id())));
            }
        }
        let mut prompts = HashSet::new();
        for p in &self.prompts {
            if !prompts.insert(p) {
                return Err(HarnessError::Config(format!("duplicate prompt `{}`", p.label())));
            }
        }
        for d in &self.decoders {
            d.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        self.weights
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.split.ratios.validate()?;
        if self.eval_samples.is_empty() && self.eval_count == 0 {
            return fail("eval_count must be positive when eval_samples is empty");
        }
        Ok(())
    }

    pub fn combination_count(&self) -> usize {
        self.models.len() * self.prompts.len() * self.decoders.len()
    }

    /// Replaces the split seed and every decoder seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.split.seed = seed;
        for d in &mut self.decoders {
            d.seed = seed;
        }
        self
    }

    /// Report keys for the decoders: the strategy name, suffixed with
    /// `#index` when a strategy appears more than once.
    pub fn decoder_ids(&self) -> Vec<String> {
        self.decoders
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let dup = self.decoders.iter().filter(|o| o.strategy == d.strategy).count() > 1;
                if dup {
                    format!("{}#{i}", d.strategy.as_str())
                } else {
                    d.strategy.as_str().to_string()
                }
            })
            .collect()
    }
}

/// Identifies one grid combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationKey {
    pub model: String,
    pub prompt: String,
    pub decoder: String,
}

/// A scored generation for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub model: String,
    pub prompt: String,
    pub decoder: String,
    pub sample_id: String,
    pub prediction: String,
    pub finish_reason: FinishReason,
    #[serde(with = "crate::lm::wire::float_or_neg_inf")]
    pub log_prob: f64,
    pub generated_tokens: usize,
    pub metrics: MetricReport,
}

/// A sample whose decode failed; kept in place of its row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleFailure {
    pub model: String,
    pub prompt: String,
    pub decoder: String,
    pub sample_id: String,
    pub error_kind: String,
    pub message: String,
}

/// One line of `grid.jsonl` after the provenance header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SampleOutcome {
    Ok(SampleRow),
    Failed(SampleFailure),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    pub key: CombinationKey,
    pub decode_config: DecodeConfig,
    pub outcomes: Vec<SampleOutcome>,
    /// Field-wise mean over successful rows; `None` when every sample failed.
    pub mean: Option<MetricReport>,
}

impl CombinationResult {
    pub fn rows(&self) -> impl Iterator<Item = &SampleRow> {
        self.outcomes.iter().filter_map(|o| match o {
            SampleOutcome::Ok(r) => Some(r),
            SampleOutcome::Failed(_) => None,
        })
    }

    pub fn failures(&self) -> impl Iterator<Item = &SampleFailure> {
        self.outcomes.iter().filter_map(|o| match o {
            SampleOutcome::Failed(f) => Some(f),
            SampleOutcome::Ok(_) => None,
        })
    }

    /// Builds a result and computes its mean over the successful rows.
    pub fn finalize(key: CombinationKey, decode_config: DecodeConfig, outcomes: Vec<SampleOutcome>) -> Self {
        let mut c = Self {
            key,
            decode_config,
            outcomes,
            mean: None,
        };
        c.mean = MetricReport::mean(c.rows().map(|r| &r.metrics));
        c
    }

    pub fn mean_of(&self, metric: Metric) -> Option<f64> {
        self.mean.map(|m| m.get(metric))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub provenance: Provenance,
    pub eval_sample_ids: Vec<String>,
    pub combinations: Vec<CombinationResult>,
}

impl GridResult {
    pub fn rows(&self) -> impl Iterator<Item = &SampleRow> {
        self.combinations.iter().flat_map(|c| c.rows())
    }

    pub fn failures(&self) -> impl Iterator<Item = &SampleFailure> {
        self.combinations.iter().flat_map(|c| c.failures())
    }
}
