use std::fs;

use proptest::prelude::*;
use songmeaning::decode::{self, DecodeConfig, FinishReason};
use songmeaning::harness::{
    emit_report, rank_combinations, CombinationKey, CombinationResult, GridResult, SampleFailure, SampleOutcome,
    SampleRow,
};
use songmeaning::metrics::Metric;
use songmeaning::provenance::Provenance;
use songmeaning::rng::SeededRng;
use songmeaning::MetricReport;

fn provenance() -> Provenance {
    Provenance::new(b"corpus", &serde_json::json!({"k": 1}), 5)
}

fn row(key: &CombinationKey, i: usize, m: [f64; 4]) -> SampleOutcome {
    SampleOutcome::Ok(SampleRow {
        model: key.model.clone(),
        prompt: key.prompt.clone(),
        decoder: key.decoder.clone(),
        sample_id: format!("s:{i}"),
        prediction: "p".into(),
        finish_reason: FinishReason::Eos,
        log_prob: -1.5,
        generated_tokens: 3,
        metrics: MetricReport {
            rouge1: m[0],
            cos_pred_annotation: m[1],
            cos_pred_lyrics: m[2],
            total_score: m[3],
        },
    })
}

fn combination(model: &str, prompt: &str, decoder: &str, rows: &[[f64; 4]], failures: usize) -> CombinationResult {
    let key = CombinationKey {
        model: model.into(),
        prompt: prompt.into(),
        decoder: decoder.into(),
    };
    let mut outcomes: Vec<SampleOutcome> = rows.iter().enumerate().map(|(i, m)| row(&key, i, *m)).collect();
    for i in 0..failures {
        outcomes.push(SampleOutcome::Failed(SampleFailure {
            model: model.into(),
            prompt: prompt.into(),
            decoder: decoder.into(),
            sample_id: format!("f:{i}"),
            error_kind: "protocol".into(),
            message: "bad".into(),
        }));
    }
    CombinationResult::finalize(key, DecodeConfig::with_strategy(decode::Strategy::Greedy), outcomes)
}

fn result(combinations: Vec<CombinationResult>) -> GridResult {
    GridResult {
        provenance: provenance(),
        eval_sample_ids: vec![],
        combinations,
    }
}

#[test]
fn empty_result_gives_header_only_summary() {
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&result(vec![]), dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("# toolkit_version="));
    assert_eq!(
        lines[1],
        "model,prompt,decoder,strategy,n_ok,n_failed,rouge1,cos_pred_annotation,cos_pred_lyrics,total_score"
    );
    let grid = fs::read_to_string(dir.path().join("grid.jsonl")).unwrap();
    assert_eq!(grid.lines().count(), 1);
    let plot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("plotdata.json")).unwrap()).unwrap();
    assert_eq!(plot["total_score_by_prompt"], serde_json::json!({}));
}

#[test]
fn all_failed_combination_has_empty_means() {
    let dir = tempfile::tempdir().unwrap();
    let r = result(vec![combination("m", "none", "greedy", &[], 2)]);
    emit_report(&r, dir.path()).unwrap();
    let summary = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().nth(2).unwrap(), "m,none,greedy,greedy,0,2,,,,");
    assert!(rank_combinations(&r, Metric::TotalScore).is_empty());
}

#[test]
fn plot_data_groups_by_prompt_and_decoder() {
    let dir = tempfile::tempdir().unwrap();
    let r = result(vec![
        combination("m", "a", "greedy", &[[0.0, 0.0, 0.0, 0.2]], 0),
        combination("m", "a", "beam", &[[0.0, 0.0, 0.0, 0.6]], 0),
        combination("m", "b", "greedy", &[[0.0, 0.0, 0.0, 0.4]], 0),
        combination("m", "b", "beam", &[[0.0, 0.0, 0.0, 0.4]], 0),
    ]);
    emit_report(&r, dir.path()).unwrap();
    let plot: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("plotdata.json")).unwrap()).unwrap();
    let close = |v: &serde_json::Value, x: f64| (v.as_f64().unwrap() - x).abs() < 1e-12;
    assert!(close(&plot["total_score_by_prompt"]["m"]["a"], 0.4));
    assert!(close(&plot["total_score_by_prompt"]["m"]["b"], 0.4));
    assert!(close(&plot["total_score_by_decoder"]["m"]["greedy"], 0.3));
    assert!(close(&plot["total_score_by_decoder"]["m"]["beam"], 0.5));
    assert_eq!(plot["best_decoder_by_prompt"]["m"]["a"]["decoder"], "beam");
    // Ties keep the first decoder in grid order.
    assert_eq!(plot["best_decoder_by_prompt"]["m"]["b"]["decoder"], "greedy");
}

fn metric_strategy() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(0.0f64..=1.0)
}

fn random_grid() -> impl Strategy<Value = GridResult> {
    prop::collection::vec(
        (
            0usize..3,
            0usize..7,
            0usize..5,
            prop::collection::vec(metric_strategy(), 0..4),
            0usize..2,
        ),
        0..20,
    )
    .prop_map(|specs| {
        let mut seen = std::collections::HashSet::new();
        let combos = specs
            .into_iter()
            .filter(|(m, p, d, _, _)| seen.insert((*m, *p, *d)))
            .map(|(m, p, d, rows, f)| combination(&format!("m{m}"), &format!("p{p}"), &format!("d{d}"), &rows, f))
            .collect();
        result(combos)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn summary_cells_round_trip(r in random_grid()) {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        let mut reader = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
        let records: Vec<csv::StringRecord> = reader.records().map(|r| r.unwrap()).collect();
        prop_assert_eq!(records.len(), r.combinations.len());
        let metrics = [Metric::Rouge1, Metric::CosPredAnnotation, Metric::CosPredLyrics, Metric::TotalScore];
        for (rec, c) in records.iter().zip(&r.combinations) {
            prop_assert_eq!(&rec[0], c.key.model.as_str());
            prop_assert_eq!(rec[4].parse::<usize>().unwrap(), c.rows().count());
            prop_assert_eq!(rec[5].parse::<usize>().unwrap(), c.failures().count());
            for (j, m) in metrics.iter().enumerate() {
                match c.mean_of(*m) {
                    Some(v) => prop_assert!((rec[6 + j].parse::<f64>().unwrap() - v).abs() <= 1e-9),
                    None => prop_assert_eq!(&rec[6 + j], ""),
                }
            }
        }
    }

    #[test]
    fn ranking_ignores_combination_order(r in random_grid(), seed in any::<u64>()) {
        let mut shuffled = r.clone();
        SeededRng::new(seed).shuffle(&mut shuffled.combinations);
        for m in [Metric::Rouge1, Metric::TotalScore] {
            let a = rank_combinations(&r, m);
            prop_assert_eq!(&a, &rank_combinations(&shuffled, m));
            prop_assert!(a.windows(2).all(|w| w[0].value >= w[1].value));
        }
    }

    #[test]
    fn grid_jsonl_round_trips(r in random_grid()) {
        let dir = tempfile::tempdir().unwrap();
        emit_report(&r, dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join("grid.jsonl")).unwrap();
        let outcomes: Vec<SampleOutcome> = text.lines().skip(1).map(|l| serde_json::from_str(l).unwrap()).collect();
        let expected: Vec<SampleOutcome> = r.combinations.iter().flat_map(|c| c.outcomes.clone()).collect();
        prop_assert_eq!(outcomes, expected);
    }
}
