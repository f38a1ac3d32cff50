use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;

use super::{
    CombinationKey, CombinationResult, ExperimentGrid, GridResult, HarnessError, ModelSpec, SampleFailure,
    SampleOutcome, SampleRow,
};
use crate::corpus::{self, Sample, SCHEMA_VERSION};
use crate::decode::{decode, DecodeConfig, DecodeError};
use crate::lm::{fit_ngram, LanguageModel, LmError, NGramConfig, NGramModel, RemoteModel};
use crate::metrics::evaluate;
use crate::prompt::{extract_generation, render, render_with_target, PromptSpec};
use crate::provenance::Provenance;

/// Execution knobs that do not change results.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: thread::available_parallelism().map_or(1, |n| n.get().min(8)),
        }
    }
}

/// Evaluation samples: the configured ids, looked up in the test split, or
/// else the `count` test samples with the most page views (missing views
/// count as zero; ties keep test-split order).
pub fn select_eval_samples(test: &[Sample], ids: &[String], count: usize) -> Result<Vec<Sample>, HarnessError> {
    let picked = if ids.is_empty() {
        let mut ranked: Vec<&Sample> = test.iter().collect();
        ranked.sort_by_key(|s| std::cmp::Reverse(s.page_views.unwrap_or(0)));
        ranked.into_iter().take(count).cloned().collect::<Vec<_>>()
    } else {
        let by_id: HashMap<&str, &Sample> = test.iter().map(|s| (s.sample_id.as_str(), s)).collect();
        ids.iter()
            .map(|id| {
                by_id
                    .get(id.as_str())
                    .map(|s| (*s).clone())
                    .ok_or_else(|| HarnessError::UnknownSample(id.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?
    };
    if picked.is_empty() {
        return Err(HarnessError::NoEvalSamples);
    }
    Ok(picked)
}

enum ModelSource {
    PerPrompt(Vec<Arc<NGramModel>>),
    Shared(Arc<NGramModel>),
    Remote(String),
}

fn prepare_models(grid: &ExperimentGrid, train: &[Sample]) -> Result<Vec<ModelSource>, HarnessError> {
    grid.models
        .iter()
        .map(|spec| {
            let model_err = |source| HarnessError::Model {
                model: spec.id().to_string(),
                source,
            };
            Ok(match spec {
                ModelSpec::Ngram {
                    order, k, vocab_cap, ..
                } => {
                    let cfg = NGramConfig {
                        order: *order,
                        k: *k,
                        vocab_cap: *vocab_cap,
                    };
                    let per_prompt = grid
                        .prompts
                        .iter()
                        .map(|p| {
                            let texts = training_texts(p, train);
                            fit_ngram(&texts, cfg).map(Arc::new).map_err(model_err)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    ModelSource::PerPrompt(per_prompt)
                }
                ModelSpec::File { path, .. } => {
                    ModelSource::Shared(Arc::new(NGramModel::load(path).map_err(model_err)?))
                }
                ModelSpec::Remote { endpoint, .. } => ModelSource::Remote(endpoint.clone()),
            })
        })
        .collect()
}

/// Prompt-wrapped training targets; samples the prompt cannot render are
/// skipped.
pub(crate) fn training_texts(prompt: &PromptSpec, train: &[Sample]) -> Vec<String> {
    train
        .iter()
        .filter_map(|s| render_with_target(prompt, s).ok())
        .collect()
}

struct Job<'a> {
    key: CombinationKey,
    model_index: usize,
    prompt: PromptSpec,
    prompt_index: usize,
    decoder: &'a DecodeConfig,
}

fn decode_sample<M: LanguageModel + ?Sized>(
    model: &M,
    prompt: &PromptSpec,
    decoder: &DecodeConfig,
    sample: &Sample,
    grid: &ExperimentGrid,
    key: &CombinationKey,
) -> Result<SampleRow, (String, String)> {
    let fail = |kind: &str, msg: String| (kind.to_string(), msg);
    let rendered = render(prompt, sample).map_err(|e| fail("prompt", e.to_string()))?;
    let vocab = model.vocabulary();
    let mut prompt_ids = vec![vocab.bos()];
    prompt_ids.extend(vocab.encode(&rendered.text));

    let mut attempt = decode(model, &prompt_ids, decoder);
    if matches!(&attempt, Err(e) if e.is_retryable()) {
        attempt = decode(model, &prompt_ids, decoder);
    }
    let generation = attempt.map_err(|e: DecodeError| fail(e.kind(), e.to_string()))?;

    let generated = vocab.decode(&generation.ids);
    let full_output = if generated.is_empty() {
        rendered.text.clone()
    } else {
        format!("{} {}", rendered.text, generated)
    };
    let prediction = extract_generation(&full_output, &rendered)
        .map_err(|e| fail("prompt", e.to_string()))?
        .to_string();
    let metrics = evaluate(&prediction, &sample.annotation, &sample.lyrics, &grid.weights)
        .map_err(|e| fail("metric", e.to_string()))?;
    Ok(SampleRow {
        model: key.model.clone(),
        prompt: key.prompt.clone(),
        decoder: key.decoder.clone(),
        sample_id: sample.sample_id.clone(),
        prediction,
        finish_reason: generation.finish_reason,
        log_prob: generation.log_prob,
        generated_tokens: generation.ids.len(),
        metrics,
    })
}

fn failure(key: &CombinationKey, sample: &Sample, kind: String, message: String) -> SampleOutcome {
    SampleOutcome::Failed(SampleFailure {
        model: key.model.clone(),
        prompt: key.prompt.clone(),
        decoder: key.decoder.clone(),
        sample_id: sample.sample_id.clone(),
        error_kind: kind,
        message,
    })
}

/// Per-worker model handles; remote clients are never shared across workers.
struct WorkerModels<'a> {
    sources: &'a [ModelSource],
    remotes: HashMap<usize, RemoteModel>,
}

impl WorkerModels<'_> {
    fn run(&mut self, job: &Job<'_>, samples: &[Sample], grid: &ExperimentGrid) -> CombinationResult {
        let outcomes = match &self.sources[job.model_index] {
            ModelSource::PerPrompt(models) => run_samples(&*models[job.prompt_index], job, samples, grid),
            ModelSource::Shared(model) => run_samples(&**model, job, samples, grid),
            ModelSource::Remote(endpoint) => {
                let model = match self.remotes.entry(job.model_index) {
                    Entry::Occupied(o) => o.into_mut(),
                    Entry::Vacant(v) => match RemoteModel::connect(endpoint) {
                        Ok(m) => v.insert(m),
                        Err(e) => return all_failed(job, samples, &e),
                    },
                };
                run_samples(&*model, job, samples, grid)
            }
        };
        CombinationResult::finalize(job.key.clone(), *job.decoder, outcomes)
    }
}

fn all_failed(job: &Job<'_>, samples: &[Sample], err: &LmError) -> CombinationResult {
    let outcomes = samples
        .iter()
        .map(|s| failure(&job.key, s, err.kind().to_string(), err.to_string()))
        .collect();
    CombinationResult::finalize(job.key.clone(), *job.decoder, outcomes)
}

fn run_samples<M: LanguageModel + ?Sized>(
    model: &M,
    job: &Job<'_>,
    samples: &[Sample],
    grid: &ExperimentGrid,
) -> Vec<SampleOutcome> {
    samples
        .iter()
        .map(
            |s| match decode_sample(model, &job.prompt, job.decoder, s, grid, &job.key) {
                Ok(row) => SampleOutcome::Ok(row),
                Err((kind, msg)) => failure(&job.key, s, kind, msg),
            },
        )
        .collect()
}

pub(crate) fn write_outcome_lines<W: Write>(w: &mut W, c: &CombinationResult) -> std::io::Result<()> {
    for o in &c.outcomes {
        serde_json::to_writer(&mut *w, o).map_err(std::io::Error::other)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub(crate) fn write_provenance_line<W: Write>(w: &mut W, p: &Provenance) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, &serde_json::json!({ "provenance": p })).map_err(std::io::Error::other)?;
    w.write_all(b"\n")
}

/// Runs the whole grid, streaming `grid.jsonl` into `out_dir` one
/// combination at a time in grid order (models, then prompts, then
/// decoders).
///
/// Remote failures are recorded per sample and the grid continues; corpus,
/// config, model-fitting and output I/O errors abort.
pub fn run_grid(
    grid: &ExperimentGrid,
    corpus_path: &Path,
    out_dir: &Path,
    options: RunOptions,
) -> Result<GridResult, HarnessError> {
    grid.validate()?;
    let corpus_bytes = fs::read(corpus_path).map_err(HarnessError::io(corpus_path))?;
    let loaded = corpus::parse_corpus(corpus_bytes.as_slice(), SCHEMA_VERSION)?;
    let (records, _) = corpus::clean_corpus(loaded.records);
    let samples = corpus::flatten(&records);
    let split = corpus::split(&samples, grid.split.ratios, grid.split.seed)?;
    let eval = select_eval_samples(&split.test, &grid.eval_samples, grid.eval_count)?;
    let provenance = Provenance::new(&corpus_bytes, grid, grid.split.seed);
    let sources = prepare_models(grid, &split.train)?;

    let decoder_ids = grid.decoder_ids();
    let mut jobs = Vec::with_capacity(grid.combination_count());
    for (mi, m) in grid.models.iter().enumerate() {
        for (pi, p) in grid.prompts.iter().enumerate() {
            for (di, d) in grid.decoders.iter().enumerate() {
                jobs.push(Job {
                    key: CombinationKey {
                        model: m.id().to_string(),
                        prompt: p.label(),
                        decoder: decoder_ids[di].clone(),
                    },
                    model_index: mi,
                    prompt: *p,
                    prompt_index: pi,
                    decoder: d,
                });
            }
        }
    }

    fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;
    let grid_path = out_dir.join("grid.jsonl");
    let mut writer = BufWriter::new(File::create(&grid_path).map_err(HarnessError::io(&grid_path))?);
    write_provenance_line(&mut writer, &provenance).map_err(HarnessError::io(&grid_path))?;
    writer.flush().map_err(HarnessError::io(&grid_path))?;

    let next_job = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let workers = options.workers.clamp(1, jobs.len().max(1));
    let mut combinations = Vec::with_capacity(jobs.len());

    let written: Result<(), HarnessError> = thread::scope(|scope| {
        let (tx, rx) = mpsc::channel::<(usize, CombinationResult)>();
        for _ in 0..workers {
            let tx = tx.clone();
            let (jobs, eval, sources, next_job, abort) = (&jobs, &eval, &sources, &next_job, &abort);
            scope.spawn(move || {
                let mut models = WorkerModels {
                    sources,
                    remotes: HashMap::new(),
                };
                loop {
                    if abort.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next_job.fetch_add(1, Ordering::SeqCst);
                    let Some(job) = jobs.get(i) else { break };
                    if tx.send((i, models.run(job, eval, grid))).is_err() {
                        break;
                    }
                }
            });
        }
        drop(tx);

        // Single writer; results are reordered so the file follows grid order.
        let mut pending = BTreeMap::new();
        let mut next_to_write = 0usize;
        for (i, result) in rx {
            pending.insert(i, result);
            while let Some(result) = pending.remove(&next_to_write) {
                let wrote = write_outcome_lines(&mut writer, &result).and_then(|_| writer.flush());
                if let Err(e) = wrote {
                    abort.store(true, Ordering::SeqCst);
                    return Err(HarnessError::Io {
                        path: grid_path.clone(),
                        source: e,
                    });
                }
                combinations.push(result);
                next_to_write += 1;
            }
        }
        Ok(())
    });
    written?;

    Ok(GridResult {
        provenance,
        eval_sample_ids: eval.iter().map(|s| s.sample_id.clone()).collect(),
        combinations,
    })
}
