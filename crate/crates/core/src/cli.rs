//! Command-line entry point.

use std::ffi::OsString;
use std::fs;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, Sample, SplitRatios, SCHEMA_VERSION};
use crate::decode::{decode, DecodeConfig, Strategy};
use crate::harness::{emit_report, rank_combinations, run_grid, ExperimentGrid, ModelSpec, RunOptions};
use crate::lm::server::{serve_connection, serve_forever, Fault};
use crate::lm::{fit_ngram, LanguageModel, NGramConfig, NGramModel, RemoteModel};
use crate::metrics::{evaluate, Metric};
use crate::prompt::{extract_generation, render, render_with_target, PromptSpec};
use crate::provenance::Provenance;
use crate::{MetricReport, TotalScoreWeights};

#[derive(Parser, Debug)]
#[command(name = "songmeaning", version, about = "Generate and score song-lyric meanings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load, clean and split a corpus; write statistics and split files.
    Ingest(IngestArgs),
    /// Fit the reference n-gram model on the train split and save it.
    FitLm(FitLmArgs),
    /// Generate a meaning for one sample and print it.
    Generate(GenerateArgs),
    /// Score predictions from a JSONL file.
    Evaluate(EvaluateArgs),
    /// Run the model × prompt × decoder grid and write reports.
    Grid(GridArgs),
    /// Serve a saved model over the line-delimited JSON protocol.
    ServeMock(ServeMockArgs),
}

#[derive(Args, Debug)]
struct SplitArgs {
    /// Train, validation and test fractions.
    #[arg(long, value_parser = parse_triple, default_value = "0.8,0.1,0.1")]
    ratios: [f64; 3],
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl SplitArgs {
    fn ratios(&self) -> SplitRatios {
        SplitRatios::new(self.ratios[0], self.ratios[1], self.ratios[2])
    }
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Debug)]
struct FitLmArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Output model file (JSON).
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 3)]
    order: usize,
    #[arg(long, default_value_t = 0.1)]
    k: f64,
    #[arg(long, default_value_t = 5000)]
    vocab_cap: usize,
    /// Prompt variant wrapping the training targets, e.g. `lyrics_meaning+meta`.
    #[arg(long, default_value = "lyrics_meaning")]
    prompt: PromptSpec,
    #[command(flatten)]
    split: SplitArgs,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// Saved n-gram model.
    #[arg(long, conflicts_with = "endpoint", required_unless_present = "endpoint")]
    model: Option<PathBuf>,
    /// Model server address, `host:port`.
    #[arg(long)]
    endpoint: Option<String>,
    /// Corpus holding `--sample`.
    #[arg(long, requires = "sample")]
    corpus: Option<PathBuf>,
    /// Sample id (`song_id:index`) from the corpus.
    #[arg(long, requires = "corpus", conflicts_with = "fragment")]
    sample: Option<String>,
    /// Lyric fragment given directly.
    #[arg(long, required_unless_present = "sample")]
    fragment: Option<String>,
    #[arg(long, default_value = "")]
    artist: String,
    #[arg(long, default_value = "")]
    title: String,
    #[arg(long, default_value = "lyrics_meaning")]
    prompt: PromptSpec,
    /// DecodeConfig JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's strategy.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<Strategy>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// JSONL with `prediction`, `annotation`, `lyrics` and optional `id`.
    #[arg(long)]
    predictions: PathBuf,
    /// Output JSONL; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// alpha1,alpha2,alpha3.
    #[arg(long, value_parser = parse_triple, default_value = "0.5,0.5,0.5")]
    weights: [f64; 3],
}

#[derive(Args, Debug)]
struct GridArgs {
    /// JSONL corpus file.
    #[arg(long)]
    corpus: PathBuf,
    /// Output directory for grid.jsonl, summary.csv and plotdata.json.
    #[arg(long)]
    out: PathBuf,
    /// ExperimentGrid JSON; defaults reproduce the standard 3 × 7 × 5 grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the split seed and every decoder seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available cores, at most 8.
    #[arg(long)]
    workers: Option<usize>,
    /// Adds a remote model with id `remote` served at this address.
    #[arg(long)]
    endpoint: Option<String>,
}

#[derive(Args, Debug)]
struct ServeMockArgs {
    /// Saved n-gram model to serve.
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value = "127.0.0.1:0", conflicts_with = "stdio")]
    listen: String,
    /// Serve a single session over stdin/stdout.
    #[arg(long)]
    stdio: bool,
    /// none, wrong-length, close-mid-response, garbage, error-reply, stall.
    #[arg(long, default_value = "none")]
    fault: Fault,
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts.as_slice() else {
        return Err(format!("expected three comma-separated numbers, got `{s}`"));
    };
    let num = |x: &str| x.parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok([num(a)?, num(b)?, num(c)?])
}

fn parse_strategy(s: &str) -> Result<Strategy, String> {
    Strategy::ALL
        .into_iter()
        .find(|st| st.as_str() == s)
        .ok_or_else(|| format!("unknown strategy `{s}`"))
}

type CliResult<T = ()> = Result<T, Box<dyn std::error::Error>>;

/// Parses `args` (program name first) and runs the subcommand. Returns the
/// process exit code: 0 on success, 1 on runtime errors, 2 on usage errors.
pub fn cli_main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Ingest(a) => ingest(a),
        Command::FitLm(a) => fit_lm(a),
        Command::Generate(a) => generate(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Grid(a) => grid(a),
        Command::ServeMock(a) => serve_mock(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, Box<dyn std::error::Error>> {
    fs::read(path).map_err(|e| format!("{}: {e}", path.display()).into())
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> CliResult {
    let mut buf = Vec::new();
    for it in items {
        serde_json::to_writer(&mut buf, it)?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(())
}

/// Loads and cleans a corpus, reporting malformed lines on stderr.
fn load_clean_records(path: &Path) -> CliResult<Vec<corpus::SongRecord>> {
    let bytes = read(path)?;
    let loaded = corpus::parse_corpus(bytes.as_slice(), SCHEMA_VERSION)?;
    for err in &loaded.errors {
        eprintln!("warning: {}:{}: {}", path.display(), err.line, err.message);
    }
    Ok(corpus::clean_corpus(loaded.records).0)
}

#[derive(Serialize)]
struct IngestConfig {
    ratios: SplitRatios,
}

#[derive(Serialize)]
struct IngestSummary<'a> {
    provenance: &'a Provenance,
    records_loaded: usize,
    line_errors: &'a [corpus::LineError],
    clean: &'a corpus::CleanReport,
    songs_kept: usize,
    samples: usize,
    train_samples: usize,
    validation_samples: usize,
    test_samples: usize,
}

fn ingest(a: IngestArgs) -> CliResult {
    let ratios = a.split.ratios();
    let bytes = read(&a.corpus)?;
    let loaded = corpus::parse_corpus(bytes.as_slice(), SCHEMA_VERSION)?;
    let n_loaded = loaded.records.len();
    let (records, clean_report) = corpus::clean_corpus(loaded.records);
    let samples = corpus::flatten(&records);
    let split = corpus::split(&samples, ratios, a.split.seed)?;
    let stats = corpus::compute_stats(&records);
    let provenance = Provenance::new(&bytes, &IngestConfig { ratios }, a.split.seed);

    corpus::write_stats(&stats, &provenance, &a.out)?;
    write_jsonl(&a.out.join("train.jsonl"), &split.train)?;
    write_jsonl(&a.out.join("validation.jsonl"), &split.validation)?;
    write_jsonl(&a.out.join("test.jsonl"), &split.test)?;
    let summary = IngestSummary {
        provenance: &provenance,
        records_loaded: n_loaded,
        line_errors: &loaded.errors,
        clean: &clean_report,
        songs_kept: records.len(),
        samples: samples.len(),
        train_samples: split.train.len(),
        validation_samples: split.validation.len(),
        test_samples: split.test.len(),
    };
    let mut json = serde_json::to_string_pretty(&summary)?;
    json.push('\n');
    fs::write(a.out.join("ingest_summary.json"), &json)?;
    print!("{json}");
    Ok(())
}

fn fit_lm(a: FitLmArgs) -> CliResult {
    let records = load_clean_records(&a.corpus)?;
    let samples = corpus::flatten(&records);
    let split = corpus::split(&samples, a.split.ratios(), a.split.seed)?;
    let texts: Vec<String> = split
        .train
        .iter()
        .filter_map(|s| render_with_target(&a.prompt, s).ok())
        .collect();
    let model = fit_ngram(
        &texts,
        NGramConfig {
            order: a.order,
            k: a.k,
            vocab_cap: a.vocab_cap,
        },
    )?;
    model.save(&a.out)?;
    println!(
        "fit order-{} model on {} texts, vocabulary {} -> {}",
        a.order,
        texts.len(),
        model.vocabulary().len(),
        a.out.display()
    );
    Ok(())
}

fn generate(a: GenerateArgs) -> CliResult {
    let mut cfg = match &a.config {
        Some(p) => serde_json::from_slice::<DecodeConfig>(&read(p)?)?,
        None => DecodeConfig::default(),
    };
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let sample = match (&a.sample, &a.corpus) {
        (Some(id), Some(path)) => {
            let records = load_clean_records(path)?;
            corpus::flatten(&records)
                .into_iter()
                .find(|s| &s.sample_id == id)
                .ok_or_else(|| format!("sample `{id}` not found"))?
        }
        _ => Sample {
            sample_id: "cli:0".into(),
            song_id: "cli".into(),
            fragment_index: 0,
            title: a.title.clone(),
            artist: a.artist.clone(),
            fragment: a.fragment.clone().unwrap_or_default(),
            annotation: String::new(),
            lyrics: a.fragment.clone().unwrap_or_default(),
            page_views: None,
        },
    };
    let model: Box<dyn LanguageModel> = match (&a.model, &a.endpoint) {
        (Some(path), _) => Box::new(NGramModel::load(path)?),
        (None, Some(ep)) => Box::new(RemoteModel::connect(ep)?),
        (None, None) => return Err("either --model or --endpoint is required".into()),
    };
    let rendered = render(&a.prompt, &sample)?;
    let vocab = model.vocabulary();
    let mut prompt_ids = vec![vocab.bos()];
    prompt_ids.extend(vocab.encode(&rendered.text));
    let generation = decode(&*model, &prompt_ids, &cfg)?;
    let text = vocab.decode(&generation.ids);
    let full = if text.is_empty() {
        rendered.text.clone()
    } else {
        format!("{} {text}", rendered.text)
    };
    println!("{}", extract_generation(&full, &rendered)?);
    Ok(())
}

#[derive(Deserialize)]
struct PredictionLine {
    #[serde(default)]
    id: Option<String>,
    prediction: String,
    annotation: String,
    #[serde(default)]
    lyrics: String,
}

#[derive(Serialize)]
struct EvaluatedLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    id: Option<String>,
    #[serde(flatten)]
    report: MetricReport,
}

#[derive(Serialize)]
struct AggregateLine {
    aggregate: bool,
    count: usize,
    #[serde(flatten)]
    mean: Option<MetricReport>,
}

fn evaluate_cmd(a: EvaluateArgs) -> CliResult {
    let weights = TotalScoreWeights {
        alpha1: a.weights[0],
        alpha2: a.weights[1],
        alpha3: a.weights[2],
    };
    weights.validate()?;
    let file = fs::File::open(&a.predictions).map_err(|e| format!("{}: {e}", a.predictions.display()))?;
    let mut out = Vec::new();
    let mut reports = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let p: PredictionLine =
            serde_json::from_str(&line).map_err(|e| format!("{}:{}: {e}", a.predictions.display(), i + 1))?;
        let report = evaluate(&p.prediction, &p.annotation, &p.lyrics, &weights)?;
        serde_json::to_writer(&mut out, &EvaluatedLine { id: p.id, report })?;
        out.push(b'\n');
        reports.push(report);
    }
    serde_json::to_writer(
        &mut out,
        &AggregateLine {
            aggregate: true,
            count: reports.len(),
            mean: MetricReport::mean(&reports),
        },
    )?;
    out.push(b'\n');
    match &a.out {
        Some(path) => fs::write(path, out)?,
        None => io::stdout().write_all(&out)?,
    }
    Ok(())
}

fn grid(a: GridArgs) -> CliResult {
    let mut grid = match &a.config {
        Some(p) => serde_json::from_slice::<ExperimentGrid>(&read(p)?)?,
        None => ExperimentGrid::default(),
    };
    if let Some(seed) = a.seed {
        grid = grid.with_seed(seed);
    }
    if let Some(ep) = a.endpoint {
        grid.models.push(ModelSpec::Remote {
            id: "remote".into(),
            endpoint: ep,
        });
    }
    let options = match a.workers {
        Some(w) => RunOptions { workers: w },
        None => RunOptions::default(),
    };
    let result = run_grid(&grid, &a.corpus, &a.out, options)?;
    emit_report(&result, &a.out)?;
    let rows = result.rows().count();
    let failed = result.failures().count();
    println!(
        "{} combinations, {} rows, {} failures -> {}",
        result.combinations.len(),
        rows,
        failed,
        a.out.display()
    );
    for (i, r) in rank_combinations(&result, Metric::TotalScore)
        .iter()
        .take(5)
        .enumerate()
    {
        println!(
            "{:>2}. {:.4}  {} / {} / {}",
            i + 1,
            r.value,
            r.model,
            r.prompt,
            r.decoder
        );
    }
    Ok(())
}

fn serve_mock(a: ServeMockArgs) -> CliResult {
    let model: Arc<dyn LanguageModel> = Arc::new(NGramModel::load(&a.model)?);
    if a.stdio {
        let stdin = io::stdin();
        serve_connection(&*model, a.fault, stdin.lock(), io::stdout().lock())?;
        return Ok(());
    }
    let listener = TcpListener::bind(&a.listen)?;
    println!("listening on {}", listener.local_addr()?);
    io::stdout().flush()?;
    serve_forever(listener, model, a.fault)?;
    Ok(())
}
