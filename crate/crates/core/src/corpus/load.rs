use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Serialize;

use super::{CorpusError, SongRecord};

/// Schema version written in the `{"trbll_schema": N}` header line.
pub const SCHEMA_VERSION: u32 = 1;

const HEADER_KEY: &str = "trbll_schema";

/// A line that could not be turned into a record. `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub records: Vec<SongRecord>,
    pub errors: Vec<LineError>,
}

pub fn load_corpus(path: &Path, schema_version: u32) -> Result<LoadedCorpus, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io_err)?;
    parse_corpus(BufReader::new(file), schema_version).map_err(|e| match e {
        CorpusError::Io { source, .. } => io_err(source),
        other => other,
    })
}

/// Parses JSONL corpus text.
///
/// The optional header must be the first non-blank line. Blank lines are
/// skipped. Malformed lines and duplicate `song_id`s are collected as
/// [`LineError`]s; parsing continues past them.
pub fn parse_corpus<R: BufRead>(mut reader: R, schema_version: u32) -> Result<LoadedCorpus, CorpusError> {
    let mut out = LoadedCorpus::default();
    let mut seen = HashSet::new();
    let mut first_content = true;
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|source| CorpusError::Io {
            path: "<reader>".into(),
            source,
        })?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = match std::str::from_utf8(&buf) {
            Ok(s) => s.trim(),
            Err(e) => {
                out.errors.push(LineError {
                    line: line_no,
                    message: format!("invalid UTF-8: {e}"),
                });
                first_content = false;
                continue;
            }
        };
        if line.is_empty() {
            continue;
        }
        if std::mem::take(&mut first_content) {
            if let Some(found) = header_version(line) {
                if found != Some(schema_version as u64) {
                    return Err(CorpusError::SchemaMismatch {
                        found: found.map_or_else(|| "a non-integer".into(), |v| v.to_string()),
                        expected: schema_version,
                    });
                }
                continue;
            }
        }
        match serde_json::from_str::<SongRecord>(line) {
            Ok(rec) if !seen.insert(rec.song_id.clone()) => out.errors.push(LineError {
                line: line_no,
                message: format!("duplicate song_id `{}`", rec.song_id),
            }),
            Ok(rec) => out.records.push(rec),
            Err(e) => out.errors.push(LineError {
                line: line_no,
                message: e.to_string(),
            }),
        }
    }
    Ok(out)
}

/// `Some(version)` when the line is a header object; the inner option is
/// `None` when the version is not a non-negative integer.
fn header_version(line: &str) -> Option<Option<u64>> {
    let value: serde_json::Value = serde_json::from_str(line).ok()?;
    let v = value.as_object()?.get(HEADER_KEY)?;
    Some(v.as_u64())
}
