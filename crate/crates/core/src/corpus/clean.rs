use std::sync::OnceLock;

use regex::Regex;
use serde::Serialize;

use super::{AnnotatedFragment, SongRecord};
use crate::text::normalize_whitespace;

/// Letters in Basic Latin, Latin-1 Supplement and Latin Extended-A/B.
pub fn is_latin_letter(c: char) -> bool {
    c.is_alphabetic() && (c as u32) <= 0x024F
}

/// True when the text holds a letter from any other script. Digits,
/// punctuation, symbols and emoji never count.
pub fn has_non_latin_letter(text: &str) -> bool {
    text.chars().any(|c| c.is_alphabetic() && !is_latin_letter(c))
}

fn url_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:https?://|www\.)\S*").expect("valid regex"))
}

/// Removes `http://`, `https://` and `www.` runs up to the next whitespace,
/// then collapses whitespace.
pub fn strip_urls(text: &str) -> String {
    normalize_whitespace(&url_regex().replace_all(text, ""))
}

/// Cleans one record.
///
/// Returns `None` when the lyrics contain a non-Latin letter or are blank.
/// Otherwise URLs are stripped from annotations, whitespace is normalized in
/// titles, artists, fragments and annotations, and fragments left with an
/// empty side are dropped.
pub fn clean_record(record: SongRecord) -> Option<SongRecord> {
    if has_non_latin_letter(&record.lyrics) {
        return None;
    }
    let lyrics = record.lyrics.trim().to_string();
    if lyrics.is_empty() {
        return None;
    }
    let fragments = record
        .fragments
        .into_iter()
        .filter_map(|f| {
            let fragment = normalize_whitespace(&f.fragment);
            let annotation = strip_urls(&f.annotation);
            (!fragment.is_empty() && !annotation.is_empty()).then_some(AnnotatedFragment { fragment, annotation })
        })
        .collect();
    Some(SongRecord {
        title: normalize_whitespace(&record.title),
        artist: normalize_whitespace(&record.artist),
        lyrics,
        fragments,
        ..record
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CleanReport {
    pub rejected_song_ids: Vec<String>,
    pub dropped_fragments: usize,
}

/// Applies [`clean_record`] to every record, preserving order.
pub fn clean_corpus(records: Vec<SongRecord>) -> (Vec<SongRecord>, CleanReport) {
    let mut report = CleanReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for rec in records {
        let id = rec.song_id.clone();
        let before = rec.fragments.len();
        match clean_record(rec) {
            Some(c) => {
                report.dropped_fragments += before - c.fragments.len();
                kept.push(c);
            }
            None => report.rejected_song_ids.push(id),
        }
    }
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::super::fixtures::record;
    use super::*;

    /// Hand scanner: drops every maximal non-whitespace run starting at a
    /// URL prefix.
    fn oracle_strip(text: &str) -> String {
        let mut out = String::new();
        let mut rest = text;
        while !rest.is_empty() {
            let hit = ["http://", "https://", "www."]
                .iter()
                .filter_map(|p| rest.find(p))
                .min();
            match hit {
                None => {
                    out.push_str(rest);
                    break;
                }
                Some(i) => {
                    out.push_str(&rest[..i]);
                    let tail = &rest[i..];
                    let end = tail.find(char::is_whitespace).unwrap_or(tail.len());
                    rest = &tail[end..];
                }
            }
        }
        out.split_whitespace().collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn url_removed_and_spaces_collapsed() {
        let input = "see https://x.y/z for more";
        assert_eq!(oracle_strip(input), "see for more");
        assert_eq!(strip_urls(input), "see for more");
        for s in [
            "www.a.com",
            "lead http://a b www.c.d e",
            "nohttp:here",
            "x https://a.b/c?d=e\tf",
        ] {
            assert_eq!(strip_urls(s), oracle_strip(s), "{s}");
        }
    }

    #[test]
    fn hangul_lyrics_rejected() {
        let mut r = record("k", 1);
        r.lyrics = "hello 사랑".into();
        assert!(clean_record(r).is_none());
    }

    #[test]
    fn accents_digits_and_emoji_tolerated() {
        let mut r = record("e", 1);
        r.lyrics = "Zoé café naïve 1999 ❤️ ŁŻ ǅ!".into();
        assert!(clean_record(r).is_some());
        assert!(has_non_latin_letter("привет"));
        assert!(has_non_latin_letter("ἀλήθεια"));
    }

    #[test]
    fn clean_ascii_record_unchanged() {
        let r = record("a", 3);
        assert_eq!(clean_record(r.clone()), Some(r));
    }

    #[test]
    fn fragments_emptied_by_cleaning_are_dropped() {
        let mut r = record("u", 2);
        r.fragments[0].annotation = " https://only.a/link ".into();
        let (kept, report) = clean_corpus(vec![r]);
        assert_eq!(kept[0].fragments.len(), 1);
        assert_eq!(report.dropped_fragments, 1);
    }

    #[test]
    fn blank_lyrics_rejected() {
        let mut r = record("b", 1);
        r.lyrics = "  \n ".into();
        let (kept, report) = clean_corpus(vec![r]);
        assert!(kept.is_empty());
        assert_eq!(report.rejected_song_ids, ["b"]);
    }
}
