use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::run::{write_outcome_lines, write_provenance_line};
use super::{GridResult, HarnessError};
use crate::metrics::Metric;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedCombination {
    pub model: String,
    pub prompt: String,
    pub decoder: String,
    pub value: f64,
}

/// Combinations with at least one successful row, best mean first. Ties
/// are ordered by (model, prompt, decoder).
pub fn rank_combinations(result: &GridResult, metric: Metric) -> Vec<RankedCombination> {
    let mut ranked: Vec<RankedCombination> = result
        .combinations
        .iter()
        .filter_map(|c| {
            c.mean_of(metric).map(|value| RankedCombination {
                model: c.key.model.clone(),
                prompt: c.key.prompt.clone(),
                decoder: c.key.decoder.clone(),
                value,
            })
        })
        .collect();
    ranked.sort_by(|a, b| {
        b.value
            .total_cmp(&a.value)
            .then_with(|| a.model.cmp(&b.model))
            .then_with(|| a.prompt.cmp(&b.prompt))
            .then_with(|| a.decoder.cmp(&b.decoder))
    });
    ranked
}

#[derive(Serialize)]
struct BestDecoder {
    decoder: String,
    total_score: f64,
}

#[derive(Serialize)]
struct PlotData<'a> {
    provenance: &'a crate::provenance::Provenance,
    /// model → prompt → mean over decoders of the combination total score.
    total_score_by_prompt: BTreeMap<String, BTreeMap<String, f64>>,
    /// model → prompt → the decoder with the highest total score.
    best_decoder_by_prompt: BTreeMap<String, BTreeMap<String, BestDecoder>>,
    /// model → decoder → mean over prompts of the combination total score.
    total_score_by_decoder: BTreeMap<String, BTreeMap<String, f64>>,
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn plot_data(result: &GridResult) -> PlotData<'_> {
    let mut by_prompt: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut by_decoder: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut best: BTreeMap<String, BTreeMap<String, BestDecoder>> = BTreeMap::new();
    for c in &result.combinations {
        let Some(total) = c.mean_of(Metric::TotalScore) else {
            continue;
        };
        let k = &c.key;
        by_prompt
            .entry(k.model.clone())
            .or_default()
            .entry(k.prompt.clone())
            .or_default()
            .push(total);
        by_decoder
            .entry(k.model.clone())
            .or_default()
            .entry(k.decoder.clone())
            .or_default()
            .push(total);
        let slot = best.entry(k.model.clone()).or_default();
        let better = slot.get(&k.prompt).is_none_or(|b| total > b.total_score);
        if better {
            slot.insert(
                k.prompt.clone(),
                BestDecoder {
                    decoder: k.decoder.clone(),
                    total_score: total,
                },
            );
        }
    }
    let collapse = |m: BTreeMap<String, BTreeMap<String, Vec<f64>>>| {
        m.into_iter()
            .map(|(model, inner)| (model, inner.into_iter().map(|(k, v)| (k, mean(&v))).collect()))
            .collect()
    };
    PlotData {
        provenance: &result.provenance,
        total_score_by_prompt: collapse(by_prompt),
        best_decoder_by_prompt: best,
        total_score_by_decoder: collapse(by_decoder),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes `grid.jsonl` (raw rows), `summary.csv` (one line per
/// combination) and `plotdata.json` (total score grouped by prompt and by
/// decoder). Returns the written paths.
pub fn emit_report(result: &GridResult, out_dir: &Path) -> Result<Vec<PathBuf>, HarnessError> {
    fs::create_dir_all(out_dir).map_err(HarnessError::io(out_dir))?;

    let grid_path = out_dir.join("grid.jsonl");
    {
        let file = fs::File::create(&grid_path).map_err(HarnessError::io(&grid_path))?;
        let mut w = BufWriter::new(file);
        let write = |w: &mut BufWriter<fs::File>| -> std::io::Result<()> {
            write_provenance_line(w, &result.provenance)?;
            for c in &result.combinations {
                write_outcome_lines(w, c)?;
            }
            w.flush()
        };
        write(&mut w).map_err(HarnessError::io(&grid_path))?;
    }

    let summary_path = out_dir.join("summary.csv");
    {
        let mut buf = Vec::new();
        result.provenance.write_csv_comment(&mut buf).expect("write to vec");
        let mut w = csv::Writer::from_writer(&mut buf);
        let to_io = |e: csv::Error| std::io::Error::other(e);
        let write = |w: &mut csv::Writer<&mut Vec<u8>>| -> std::io::Result<()> {
            w.write_record([
                "model",
                "prompt",
                "decoder",
                "strategy",
                "n_ok",
                "n_failed",
                "rouge1",
                "cos_pred_annotation",
                "cos_pred_lyrics",
                "total_score",
            ])
            .map_err(to_io)?;
            for c in &result.combinations {
                w.write_record([
                    c.key.model.clone(),
                    c.key.prompt.clone(),
                    c.key.decoder.clone(),
                    c.decode_config.strategy.as_str().to_string(),
                    c.rows().count().to_string(),
                    c.failures().count().to_string(),
                    fmt_opt(c.mean_of(Metric::Rouge1)),
                    fmt_opt(c.mean_of(Metric::CosPredAnnotation)),
                    fmt_opt(c.mean_of(Metric::CosPredLyrics)),
                    fmt_opt(c.mean_of(Metric::TotalScore)),
                ])
                .map_err(to_io)?;
            }
            w.flush()
        };
        write(&mut w).map_err(HarnessError::io(&summary_path))?;
        drop(w);
        fs::write(&summary_path, buf).map_err(HarnessError::io(&summary_path))?;
    }

    let plot_path = out_dir.join("plotdata.json");
    let mut json = serde_json::to_string_pretty(&plot_data(result)).expect("plot data serializes");
    json.push('\n');
    fs::write(&plot_path, json).map_err(HarnessError::io(&plot_path))?;

    Ok(vec![grid_path, summary_path, plot_path])
}
