use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Genre, SongRecord};
use crate::provenance::Provenance;
use crate::text::word_tokens;

/// Histogram buckets are `[k·W, (k+1)·W)` whitespace tokens, keyed by `k·W`.
pub const LENGTH_BUCKET_WIDTH: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub num_songs: u64,
    pub num_samples: u64,
    pub length_bucket_width: usize,
    pub songs_per_genre: BTreeMap<String, u64>,
    pub songs_per_artist: BTreeMap<String, u64>,
    pub annotation_length_histogram: BTreeMap<usize, u64>,
    pub sample_length_histogram: BTreeMap<usize, u64>,
    pub word_frequencies_annotations: BTreeMap<String, u64>,
    pub word_frequencies_lyrics: BTreeMap<String, u64>,
}

fn bucket(len: usize) -> usize {
    len / LENGTH_BUCKET_WIDTH * LENGTH_BUCKET_WIDTH
}

fn count_words(into: &mut BTreeMap<String, u64>, text: &str) {
    for tok in word_tokens(text) {
        *into.entry(tok).or_insert(0) += 1;
    }
}

/// Exploration statistics over cleaned records. Songs without a genre count
/// as `other`; lyric word frequencies use each song's full lyrics.
pub fn compute_stats(records: &[SongRecord]) -> CorpusStats {
    let mut st = CorpusStats {
        length_bucket_width: LENGTH_BUCKET_WIDTH,
        ..Default::default()
    };
    for rec in records {
        st.num_songs += 1;
        let genre = rec.genre.unwrap_or(Genre::Other).as_str();
        *st.songs_per_genre.entry(genre.to_string()).or_insert(0) += 1;
        *st.songs_per_artist.entry(rec.artist.clone()).or_insert(0) += 1;
        count_words(&mut st.word_frequencies_lyrics, &rec.lyrics);
        for frag in &rec.fragments {
            st.num_samples += 1;
            let a_len = frag.annotation.split_whitespace().count();
            let s_len = frag.fragment.split_whitespace().count();
            *st.annotation_length_histogram.entry(bucket(a_len)).or_insert(0) += 1;
            *st.sample_length_histogram.entry(bucket(s_len)).or_insert(0) += 1;
            count_words(&mut st.word_frequencies_annotations, &frag.annotation);
        }
    }
    st
}

#[derive(Serialize)]
struct StatsDocument<'a> {
    provenance: &'a Provenance,
    stats: &'a CorpusStats,
}

fn write_table<K: ToString>(
    path: &Path,
    provenance: &Provenance,
    header: [&str; 2],
    rows: impl IntoIterator<Item = (K, u64)>,
) -> Result<(), CorpusError> {
    let werr = |source| CorpusError::Write {
        path: path.to_path_buf(),
        source,
    };
    let mut buf = Vec::new();
    provenance.write_csv_comment(&mut buf).map_err(werr)?;
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        let to_io = |e: csv::Error| std::io::Error::other(e);
        w.write_record(header).map_err(to_io).map_err(werr)?;
        for (k, v) in rows {
            w.write_record([k.to_string(), v.to_string()])
                .map_err(to_io)
                .map_err(werr)?;
        }
        w.flush().map_err(werr)?;
    }
    fs::write(path, buf).map_err(werr)
}

/// Writes `stats.json` plus one CSV per table under `out_dir`.
///
/// Word-frequency tables are ordered by descending count, then token.
pub fn write_stats(stats: &CorpusStats, provenance: &Provenance, out_dir: &Path) -> Result<(), CorpusError> {
    fs::create_dir_all(out_dir).map_err(|source| CorpusError::Write {
        path: out_dir.to_path_buf(),
        source,
    })?;
    let json_path = out_dir.join("stats.json");
    let mut json = serde_json::to_string_pretty(&StatsDocument { provenance, stats }).expect("stats serialize");
    json.push('\n');
    fs::write(&json_path, json).map_err(|source| CorpusError::Write {
        path: json_path.clone(),
        source,
    })?;

    let by_count = |m: &BTreeMap<String, u64>| {
        let mut v: Vec<(String, u64)> = m.iter().map(|(k, c)| (k.clone(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v
    };
    let hist = |m: &BTreeMap<usize, u64>| m.iter().map(|(k, c)| (*k, *c)).collect::<Vec<_>>();
    let str_map = |m: &BTreeMap<String, u64>| m.iter().map(|(k, c)| (k.clone(), *c)).collect::<Vec<_>>();

    write_table(
        &out_dir.join("annotation_length_histogram.csv"),
        provenance,
        ["bucket_start", "count"],
        hist(&stats.annotation_length_histogram),
    )?;
    write_table(
        &out_dir.join("sample_length_histogram.csv"),
        provenance,
        ["bucket_start", "count"],
        hist(&stats.sample_length_histogram),
    )?;
    write_table(
        &out_dir.join("songs_per_genre.csv"),
        provenance,
        ["genre", "songs"],
        str_map(&stats.songs_per_genre),
    )?;
    write_table(
        &out_dir.join("songs_per_artist.csv"),
        provenance,
        ["artist", "songs"],
        str_map(&stats.songs_per_artist),
    )?;
    write_table(
        &out_dir.join("word_frequencies_annotations.csv"),
        provenance,
        ["token", "count"],
        by_count(&stats.word_frequencies_annotations),
    )?;
    write_table(
        &out_dir.join("word_frequencies_lyrics.csv"),
        provenance,
        ["token", "count"],
        by_count(&stats.word_frequencies_lyrics),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::record;
    use super::*;

    #[test]
    fn annotation_word_counts() {
        let mut r = record("a", 1);
        r.fragments[0].annotation = "the song the".into();
        let st = compute_stats(&[r]);
        let expected: BTreeMap<String, u64> = [("the".to_string(), 2), ("song".to_string(), 1)].into();
        assert_eq!(st.word_frequencies_annotations, expected);
    }

    #[test]
    fn empty_corpus_has_empty_maps() {
        let st = compute_stats(&[]);
        assert!(st.songs_per_genre.is_empty());
        assert!(st.songs_per_artist.is_empty());
        assert!(st.annotation_length_histogram.is_empty());
        assert!(st.sample_length_histogram.is_empty());
        assert!(st.word_frequencies_annotations.is_empty());
        assert!(st.word_frequencies_lyrics.is_empty());
    }

    #[test]
    fn genre_counts() {
        let mut r = record("a", 0);
        r.genre = Some(Genre::Rap);
        let st = compute_stats(&[r]);
        assert_eq!(st.songs_per_genre, [("rap".to_string(), 1)].into());
        let mut r = record("b", 0);
        r.genre = None;
        assert_eq!(compute_stats(&[r]).songs_per_genre, [("other".to_string(), 1)].into());
    }

    #[test]
    fn histograms_bucket_by_tokens() {
        let mut r = record("a", 2);
        r.fragments[0].annotation = "w ".repeat(9);
        r.fragments[1].annotation = "w ".repeat(10);
        let st = compute_stats(&[r]);
        assert_eq!(st.annotation_length_histogram, [(0, 1), (10, 1)].into());
        assert_eq!(st.annotation_length_histogram.values().sum::<u64>(), st.num_samples);
        assert_eq!(st.sample_length_histogram.values().sum::<u64>(), st.num_samples);
    }
}
