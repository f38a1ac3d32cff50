use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, Sample};
use crate::rng::SeededRng;

/// Train / validation / test fractions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            validation: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn new(train: f64, validation: f64, test: f64) -> Self {
        Self {
            train,
            validation,
            test,
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(CorpusError::InvalidRatios(format!(
                "ratios must be finite and non-negative, got {parts:?}"
            )));
        }
        let sum: f64 = parts.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CorpusError::InvalidRatios(format!("ratios sum to {sum}, not 1")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CorpusSplit {
    pub train: Vec<Sample>,
    pub validation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// Song-level split.
///
/// Distinct song ids are listed in first-appearance order and shuffled with
/// [`SeededRng::shuffle`] seeded by `seed`. The first `round(train·n)` songs
/// go to train, the next `round(validation·n)` (capped by what is left) to
/// validation, the rest to test. Samples keep their input order inside each
/// split.
pub fn split(samples: &[Sample], ratios: SplitRatios, seed: u64) -> Result<CorpusSplit, CorpusError> {
    ratios.validate()?;
    let mut songs: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for s in samples {
        if !index.contains_key(s.song_id.as_str()) {
            index.insert(&s.song_id, songs.len());
            songs.push(&s.song_id);
        }
    }
    SeededRng::new(seed).shuffle(&mut songs);

    let n = songs.len();
    let n_train = ((ratios.train * n as f64).round() as usize).min(n);
    let n_val = ((ratios.validation * n as f64).round() as usize).min(n - n_train);
    let bucket: HashMap<&str, u8> = songs
        .iter()
        .enumerate()
        .map(|(pos, id)| {
            let b = if pos < n_train {
                0
            } else if pos < n_train + n_val {
                1
            } else {
                2
            };
            (*id, b)
        })
        .collect();

    let mut out = CorpusSplit::default();
    for s in samples {
        match bucket[s.song_id.as_str()] {
            0 => out.train.push(s.clone()),
            1 => out.validation.push(s.clone()),
            _ => out.test.push(s.clone()),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{fixtures::record, flatten};
    use super::*;
    use std::collections::HashSet;

    fn samples(n_songs: usize) -> Vec<Sample> {
        let recs: Vec<_> = (0..n_songs).map(|i| record(&format!("s{i}"), 2)).collect();
        flatten(&recs)
    }

    fn songs_of(v: &[Sample]) -> HashSet<String> {
        v.iter().map(|s| s.song_id.clone()).collect()
    }

    #[test]
    fn everything_to_train() {
        let s = samples(5);
        let out = split(&s, SplitRatios::new(1.0, 0.0, 0.0), 3).unwrap();
        assert_eq!(out.train, s);
        assert!(out.validation.is_empty() && out.test.is_empty());
    }

    #[test]
    fn deterministic_for_seed() {
        let s = samples(12);
        let a = split(&s, SplitRatios::default(), 11).unwrap();
        let b = split(&s, SplitRatios::default(), 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ten_songs_eight_one_one() {
        let s = samples(10);
        let out = split(&s, SplitRatios::default(), 0).unwrap();
        // Reproduce the documented assignment: shuffle ids, cut at 8 and 9.
        let mut ids: Vec<String> = (0..10).map(|i| format!("s{i}")).collect();
        SeededRng::new(0).shuffle(&mut ids);
        assert_eq!(songs_of(&out.train), ids[..8].iter().cloned().collect());
        assert_eq!(songs_of(&out.validation), ids[8..9].iter().cloned().collect());
        assert_eq!(songs_of(&out.test), ids[9..].iter().cloned().collect());
        assert_eq!(out.train.len(), 16);
    }

    #[test]
    fn bad_ratios_rejected() {
        let s = samples(3);
        assert!(split(&s, SplitRatios::new(0.5, 0.5, 0.5), 0).is_err());
        assert!(split(&s, SplitRatios::new(1.5, -0.5, 0.0), 0).is_err());
        assert!(split(&s, SplitRatios::new(f64::NAN, 0.5, 0.5), 0).is_err());
    }
}
