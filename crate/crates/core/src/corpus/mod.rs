//! Annotated-lyrics corpus: loading, cleaning, flattening, splitting and
//! exploration statistics.

mod clean;
mod load;
mod split;
mod stats;

use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use clean::{clean_corpus, clean_record, has_non_latin_letter, is_latin_letter, strip_urls, CleanReport};
pub use load::{load_corpus, parse_corpus, LineError, LoadedCorpus, SCHEMA_VERSION};
pub use split::{split, CorpusSplit, SplitRatios};
pub use stats::{compute_stats, write_stats, CorpusStats, LENGTH_BUCKET_WIDTH};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema version mismatch: file declares {found}, expected {expected}")]
    SchemaMismatch { found: String, expected: u32 },
    #[error("invalid split ratios: {0}")]
    InvalidRatios(String),
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Genre label. Input strings outside the known set map to [`Genre::Other`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Genre {
    Pop,
    Rap,
    Rock,
    Country,
    Rnb,
    Other,
}

impl Genre {
    pub fn as_str(self) -> &'static str {
        match self {
            Genre::Pop => "pop",
            Genre::Rap => "rap",
            Genre::Rock => "rock",
            Genre::Country => "country",
            Genre::Rnb => "rnb",
            Genre::Other => "other",
        }
    }

    pub fn parse_lenient(s: &str) -> Genre {
        match s.trim().to_lowercase().as_str() {
            "pop" => Genre::Pop,
            "rap" | "hip-hop" | "hip hop" => Genre::Rap,
            "rock" => Genre::Rock,
            "country" => Genre::Country,
            "rnb" | "r&b" | "r-b" => Genre::Rnb,
            _ => Genre::Other,
        }
    }
}

impl Serialize for Genre {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for Genre {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Ok(Genre::parse_lenient(&s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatedFragment {
    pub fragment: String,
    pub annotation: String,
}

/// One song with its metadata and annotated lyric fragments.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SongRecord {
    pub song_id: String,
    pub title: String,
    pub artist: String,
    #[serde(default)]
    pub genre: Option<Genre>,
    pub lyrics: String,
    #[serde(default)]
    pub page_views: Option<u64>,
    pub fragments: Vec<AnnotatedFragment>,
}

/// One (fragment, annotation) pair with the metadata of its song.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    /// `"{song_id}:{fragment_index}"`.
    pub sample_id: String,
    pub song_id: String,
    pub fragment_index: usize,
    pub title: String,
    pub artist: String,
    pub fragment: String,
    pub annotation: String,
    pub lyrics: String,
    pub page_views: Option<u64>,
}

/// One sample per (record, fragment), in record order then fragment order.
pub fn flatten(records: &[SongRecord]) -> Vec<Sample> {
    records
        .iter()
        .flat_map(|rec| {
            rec.fragments.iter().enumerate().map(move |(i, frag)| Sample {
                sample_id: format!("{}:{}", rec.song_id, i),
                song_id: rec.song_id.clone(),
                fragment_index: i,
                title: rec.title.clone(),
                artist: rec.artist.clone(),
                fragment: frag.fragment.clone(),
                annotation: frag.annotation.clone(),
                lyrics: rec.lyrics.clone(),
                page_views: rec.page_views,
            })
        })
        .collect()
}


#[cfg(test)]
mod tests {
    use super::fixtures::record;
    use super::*;

    #[test]
    fn flatten_counts() {
        let one = flatten(&[record("a", 3)]);
        assert_eq!(one.len(), 3);
        assert!(one.iter().all(|s| s.song_id == "a"));
        assert_eq!(one[2].sample_id, "a:2");
        assert!(flatten(&[]).is_empty());
        let two = flatten(&[record("a", 2), record("b", 5)]);
        assert_eq!(two.len(), 7);
        assert_eq!(two[1].sample_id, "a:1");
        assert_eq!(two[2].sample_id, "b:0");
    }

    #[test]
    fn genre_parsing() {
        let g: Genre = serde_json::from_str("\"R&B\"").unwrap();
        assert_eq!(g, Genre::Rnb);
        let g: Genre = serde_json::from_str("\"polka\"").unwrap();
        assert_eq!(g, Genre::Other);
        assert_eq!(serde_json::to_string(&Genre::Country).unwrap(), "\"country\"");
    }
}
