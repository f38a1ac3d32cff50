mod common;

use std::collections::HashSet;

use common::{enumerate_outputs, RandomModel};
use proptest::prelude::*;
use songmeaning::corpus::{self, AnnotatedFragment, Sample, SongRecord, SplitRatios};
use songmeaning::decode::{decode, DecodeConfig, FinishReason, Strategy as Decoder};
use songmeaning::lm::{continuation_log_prob, fit_ngram, LanguageModel, NGramConfig, TokenId};
use songmeaning::metrics::{cosine_bow, evaluate, rouge1, total_score};
use songmeaning::prompt::{extract_generation, render, render_with_target, PromptSpec};
use songmeaning::TotalScoreWeights;

fn text() -> impl Strategy<Value = String> {
    prop::collection::vec(
        prop_oneof![
            4 => "[a-zA-Z']{1,6}",
            1 => "[.,!?;:-]{1,2}",
            1 => "https?://[a-z./]{1,8}",
            1 => "www\\.[a-z]{1,5}",
            1 => "[ \\t\\n]{1,3}",
            1 => "[éßñ]{1,2}",
            1 => "[дя강]{1,2}",
        ],
        0..10,
    )
    .prop_map(|parts| parts.join(" "))
}

fn record() -> impl Strategy<Value = SongRecord> {
    (
        0u32..30,
        text(),
        text(),
        text(),
        prop::option::of(0u64..1000),
        prop::collection::vec((text(), text()), 0..5),
    )
        .prop_map(|(id, title, artist, lyrics, page_views, frags)| SongRecord {
            song_id: format!("s{id}"),
            title,
            artist,
            genre: None,
            lyrics,
            page_views,
            fragments: frags
                .into_iter()
                .map(|(fragment, annotation)| AnnotatedFragment { fragment, annotation })
                .collect(),
        })
}

fn ratios() -> impl Strategy<Value = SplitRatios> {
    (0u32..=10, 0u32..=10).prop_filter_map("sum within 1", |(a, b)| {
        (a + b <= 10).then(|| SplitRatios::new(a as f64 / 10.0, b as f64 / 10.0, (10 - a - b) as f64 / 10.0))
    })
}

fn words() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-c]{1,2}", 0..12)
}

fn sample_with(fragment: String, annotation: String, artist: String, title: String) -> Sample {
    Sample {
        sample_id: "x:0".into(),
        song_id: "x".into(),
        fragment_index: 0,
        title,
        artist,
        fragment,
        annotation,
        lyrics: String::new(),
        page_views: None,
    }
}

fn normalized(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

proptest! {
    #[test]
    fn clean_is_idempotent(records in prop::collection::vec(record(), 0..12)) {
        let (once, _) = corpus::clean_corpus(records);
        let (twice, report) = corpus::clean_corpus(once.clone());
        prop_assert_eq!(&twice, &once);
        prop_assert!(report.rejected_song_ids.is_empty());
        for r in &once {
            prop_assert!(!corpus::has_non_latin_letter(&r.lyrics));
            for f in &r.fragments {
                prop_assert!(!f.annotation.is_empty());
                prop_assert!(!f.annotation.contains("http://") && !f.annotation.contains("https://") && !f.annotation.contains("www."));
            }
        }
    }

    #[test]
    fn flatten_preserves_fragment_count(records in prop::collection::vec(record(), 0..12)) {
        let samples = corpus::flatten(&records);
        prop_assert_eq!(samples.len(), records.iter().map(|r| r.fragments.len()).sum::<usize>());
    }

    #[test]
    fn split_is_a_song_level_partition(records in prop::collection::vec(record(), 0..20), r in ratios(), seed in any::<u64>()) {
        let samples = corpus::flatten(&records);
        let out = corpus::split(&samples, r, seed).unwrap();
        let songs = |v: &[Sample]| v.iter().map(|s| s.song_id.clone()).collect::<HashSet<_>>();
        let (a, b, c) = (songs(&out.train), songs(&out.validation), songs(&out.test));
        prop_assert!(a.is_disjoint(&b) && a.is_disjoint(&c) && b.is_disjoint(&c));
        let mut all: Vec<Sample> = out.train.iter().chain(&out.validation).chain(&out.test).cloned().collect();
        let mut expected = samples.clone();
        let key = |s: &Sample| (s.song_id.clone(), s.fragment_index, s.annotation.clone(), s.fragment.clone());
        all.sort_by_key(key);
        expected.sort_by_key(key);
        prop_assert_eq!(all, expected);
        let n = songs(&samples).len();
        prop_assert_eq!(a.len(), (r.train * n as f64).round() as usize);
        prop_assert_eq!(out.clone(), corpus::split(&samples, r, seed).unwrap());
    }

    #[test]
    fn metrics_are_symmetric_and_bounded(a in text(), b in text()) {
        let r_ab: f64 = rouge1(&a, &b);
        let r_ba: f64 = rouge1(&b, &a);
        let c_ab: f64 = cosine_bow(&a, &b);
        let c_ba: f64 = cosine_bow(&b, &a);
        prop_assert_eq!(r_ab, r_ba);
        prop_assert!((c_ab - c_ba).abs() <= 1e-15);
        for v in [r_ab, c_ab] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        let rep = evaluate(&a, &b, &a, &TotalScoreWeights::default()).unwrap();
        prop_assert!((0.0..=1.0).contains(&rep.total_score));
    }

    #[test]
    fn metrics_ignore_word_order(ws in words(), other in words(), rot in 0usize..12) {
        let a = ws.join(" ");
        let mut shuffled = ws.clone();
        if !shuffled.is_empty() {
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
        }
        let a2 = shuffled.join(" ");
        let b = other.join(" ");
        prop_assert_eq!(rouge1::<f64>(&a, &b), rouge1::<f64>(&a2, &b));
        prop_assert_eq!(cosine_bow::<f64>(&a, &b), cosine_bow::<f64>(&a2, &b));
    }

    #[test]
    fn self_similarity_is_one(ws in prop::collection::vec("[a-z]{1,4}", 1..10)) {
        let a = ws.join(" ");
        prop_assert_eq!(rouge1::<f64>(&a, &a), 1.0);
        prop_assert!((cosine_bow::<f64>(&a, &a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn total_score_is_monotone(
        r in 0.0f64..=1.0, pa in 0.0f64..=1.0, pl in 0.0f64..=1.0, d in 0.0f64..=1.0,
        a1 in 0.01f64..2.0, a2 in 0.01f64..2.0, a3 in 0.0f64..2.0,
    ) {
        let w = TotalScoreWeights { alpha1: a1, alpha2: a2, alpha3: a3 };
        let base = total_score(r, pa, pl, &w).unwrap();
        prop_assert!((0.0..=1.0).contains(&base));
        prop_assert!(total_score((r + d).min(1.0), pa, pl, &w).unwrap() >= base);
        prop_assert!(total_score(r, (pa + d).min(1.0), pl, &w).unwrap() >= base);
        prop_assert!(total_score(r, pa, (pl + d).min(1.0), &w).unwrap() <= base);
    }

    #[test]
    fn render_is_injective_in_the_fragment(f1 in "[a-z]{1,5}( [a-z]{1,5}){0,3}", f2 in "[a-z]{1,5}( [a-z]{1,5}){0,3}") {
        prop_assume!(f1 != f2);
        for spec in PromptSpec::all() {
            let s1 = sample_with(f1.clone(), "a".into(), "Art".into(), "Song".into());
            let s2 = sample_with(f2.clone(), "a".into(), "Art".into(), "Song".into());
            prop_assert_ne!(render(&spec, &s1).unwrap().text, render(&spec, &s2).unwrap().text);
        }
    }

    #[test]
    fn extraction_inverts_render_with_target(fragment in text(), annotation in text(), artist in text(), title in text()) {
        let s = sample_with(normalized(&fragment), normalized(&annotation), normalized(&artist), normalized(&title));
        for spec in PromptSpec::all() {
            let Ok(rendered) = render(&spec, &s) else { continue };
            prop_assert!(rendered.text.ends_with(&rendered.continuation_marker));
            let full = render_with_target(&spec, &s).unwrap();
            prop_assert_eq!(extract_generation(&full, &rendered).unwrap(), s.annotation.as_str());
        }
    }

    #[test]
    fn ngram_distributions_normalize(
        texts in prop::collection::vec("[a-d]{1,2}( [a-d]{1,2}){0,6}", 1..6),
        order in 1usize..5,
        k in 0.01f64..2.0,
        ctx in prop::collection::vec(0u32..40, 0..6),
        prefix in prop::collection::vec(0u32..40, 0..4),
    ) {
        let model = fit_ngram(&texts, NGramConfig { order, k, vocab_cap: 5000 }).unwrap();
        let v = model.vocabulary().len() as u32;
        let ctx: Vec<TokenId> = ctx.into_iter().map(|t| t % v).collect();
        let d = model.next(&ctx).unwrap();
        let total: f64 = d.probs().iter().sum();
        prop_assert!((total - 1.0).abs() <= 1e-6);
        // Only the last order-1 ids matter.
        let mut longer: Vec<TokenId> = prefix.into_iter().map(|t| t % v).collect();
        longer.extend(std::iter::repeat_n(model.vocabulary().bos(), order));
        longer.extend_from_slice(&ctx);
        prop_assert_eq!(model.next(&longer).unwrap(), d);
    }

    #[test]
    fn enumerated_outputs_exhaust_the_probability_mass(v in 3usize..6, order in 1usize..4, seed in any::<u64>(), max_new in 1usize..4) {
        let model = RandomModel::new(v, order, seed);
        let total: f64 = enumerate_outputs(&model, &[1], max_new).iter().map(|(_, lp)| lp.exp()).sum();
        prop_assert!((total - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn decoding_is_bounded_deterministic_and_self_consistent(
        v in 4usize..9, order in 1usize..4, model_seed in any::<u64>(), seed in any::<u64>(),
        max_new in 1usize..12, strategy in 0usize..5, beams in 1usize..4, no_repeat in 0usize..3,
    ) {
        let model = RandomModel::new(v, order, model_seed);
        let cfg = DecodeConfig {
            strategy: Decoder::ALL[strategy],
            num_beams: beams,
            no_repeat_ngram_size: no_repeat,
            max_new_tokens: max_new,
            seed,
            ..DecodeConfig::default()
        };
        let prompt = [model.vocabulary().bos(), 3];
        let g = decode(&model, &prompt, &cfg).unwrap();
        prop_assert!(g.ids.len() <= max_new);
        prop_assert!(!g.ids.contains(&model.vocabulary().eos()));
        if g.finish_reason == FinishReason::MaxLen {
            prop_assert_eq!(g.ids.len(), max_new);
        }
        prop_assert_eq!(&g, &decode(&model, &prompt, &cfg).unwrap());
        let mut scored = g.ids.clone();
        if g.finish_reason == FinishReason::Eos {
            scored.push(model.vocabulary().eos());
        }
        let lp = continuation_log_prob(&model, &prompt, &scored).unwrap();
        prop_assert!((lp - g.log_prob).abs() <= 1e-9, "{} vs {}", lp, g.log_prob);
    }
}
