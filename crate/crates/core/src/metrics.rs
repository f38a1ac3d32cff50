//! ROUGE-1, bag-of-words cosine similarity and the combined Total Score.
//!
//! All metrics share one tokenizer ([`tokenize_for_metrics`]) and are generic
//! over the floating-point [`Scalar`]. ROUGE-1 additionally has an exact
//! rational form, [`rouge1_exact`].

use std::collections::HashMap;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::num::Scalar;
use crate::text;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("metric input `{name}` = {value} is outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("weight `{name}` = {value} must be finite and non-negative")]
    InvalidWeight { name: &'static str, value: f64 },
    #[error("alpha1 + alpha2 must be positive to normalize the total score")]
    ZeroNormalizer,
}

/// Shared normalization for both metrics: lowercase, whitespace split,
/// edge punctuation stripped, empty tokens dropped.
pub fn tokenize_for_metrics(text: &str) -> Vec<String> {
    text::word_tokens(text)
}

/// Multiset of metric tokens. Never stores a zero count.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BagOfWords {
    counts: HashMap<String, u64>,
    total: u64,
}

impl BagOfWords {
    pub fn from_text(text: &str) -> Self {
        tokenize_for_metrics(text).into_iter().collect()
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    /// Number of tokens, counting repeats.
    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> {
        self.counts.iter().map(|(k, &v)| (k.as_str(), v))
    }

    /// Σ_w min(self(w), other(w)).
    pub fn clipped_overlap(&self, other: &BagOfWords) -> u64 {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(w, c)| c.min(large.count(w))).sum()
    }

    pub fn dot(&self, other: &BagOfWords) -> u64 {
        let (small, large) = if self.counts.len() <= other.counts.len() {
            (self, other)
        } else {
            (other, self)
        };
        small.iter().map(|(w, c)| c * large.count(w)).sum()
    }

    pub fn squared_norm(&self) -> u64 {
        self.counts.values().map(|c| c * c).sum()
    }
}

impl FromIterator<String> for BagOfWords {
    fn from_iter<I: IntoIterator<Item = String>>(iter: I) -> Self {
        let mut bag = BagOfWords::default();
        for tok in iter {
            *bag.counts.entry(tok).or_insert(0) += 1;
            bag.total += 1;
        }
        bag
    }
}

/// ROUGE-1 F1 with clipped unigram counts, as an exact fraction.
///
/// Both texts empty scores 1; exactly one empty scores 0.
pub fn rouge1_exact(prediction: &str, reference: &str) -> Ratio<u64> {
    let pred = BagOfWords::from_text(prediction);
    let refr = BagOfWords::from_text(reference);
    match (pred.is_empty(), refr.is_empty()) {
        (true, true) => return Ratio::from_integer(1),
        (true, false) | (false, true) => return Ratio::from_integer(0),
        _ => {}
    }
    // 2PR/(P+R) with P = o/|pred|, R = o/|ref| reduces to 2o/(|pred|+|ref|).
    let overlap = pred.clipped_overlap(&refr);
    Ratio::new(2 * overlap, pred.len() + refr.len())
}

/// ROUGE-1 F1 over unigram multiset overlap.
pub fn rouge1<F: Scalar>(prediction: &str, reference: &str) -> F {
    let r = rouge1_exact(prediction, reference);
    F::from_u64(*r.numer()).unwrap() / F::from_u64(*r.denom()).unwrap()
}

/// Cosine of the bag-of-words count vectors. Zero when either bag is empty.
pub fn cosine_bow<F: Scalar>(a: &str, b: &str) -> F {
    let a = BagOfWords::from_text(a);
    let b = BagOfWords::from_text(b);
    if a.is_empty() || b.is_empty() {
        return F::zero();
    }
    let dot = F::from_u64(a.dot(&b)).unwrap();
    let norms = F::from_u64(a.squared_norm()).unwrap() * F::from_u64(b.squared_norm()).unwrap();
    (dot / norms.sqrt()).min(F::one())
}

/// Weights of the Total Score. Defaults are 0.5 each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TotalScoreWeights<F> {
    pub alpha1: F,
    pub alpha2: F,
    pub alpha3: F,
}

impl<F: Scalar> Default for TotalScoreWeights<F> {
    fn default() -> Self {
        let half = F::lit(0.5);
        Self {
            alpha1: half,
            alpha2: half,
            alpha3: half,
        }
    }
}

impl<F: Scalar> TotalScoreWeights<F> {
    pub fn validate(&self) -> Result<(), MetricError> {
        for (name, value) in [
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("alpha3", self.alpha3),
        ] {
            if !value.is_finite() || value < F::zero() {
                return Err(MetricError::InvalidWeight {
                    name,
                    value: value.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        if self.alpha1 + self.alpha2 <= F::zero() {
            return Err(MetricError::ZeroNormalizer);
        }
        Ok(())
    }
}

fn check_unit<F: Scalar>(name: &'static str, value: F) -> Result<(), MetricError> {
    if value >= F::zero() && value <= F::one() {
        Ok(())
    } else {
        Err(MetricError::OutOfRange {
            name,
            value: value.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// `max(0, α1·rouge + α2·cs_pa − α3·cs_pl) / (α1 + α2)`.
///
/// The divisor is the largest raw value reachable with inputs in [0, 1], so
/// the result lies in [0, 1]. A prediction that copies the lyrics is pushed
/// towards zero.
pub fn total_score<F: Scalar>(rouge: F, cs_pa: F, cs_pl: F, weights: &TotalScoreWeights<F>) -> Result<F, MetricError> {
    check_unit("rouge", rouge)?;
    check_unit("cs_pa", cs_pa)?;
    check_unit("cs_pl", cs_pl)?;
    weights.validate()?;
    let raw = weights.alpha1 * rouge + weights.alpha2 * cs_pa - weights.alpha3 * cs_pl;
    let clamped = raw.max(F::zero());
    Ok((clamped / (weights.alpha1 + weights.alpha2)).min(F::one()))
}

/// Scores of one generated meaning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport<F> {
    pub rouge1: F,
    pub cos_pred_annotation: F,
    pub cos_pred_lyrics: F,
    pub total_score: F,
}

impl<F: Scalar> MetricReport<F> {
    pub fn get(&self, metric: Metric) -> F {
        match metric {
            Metric::Rouge1 => self.rouge1,
            Metric::CosPredAnnotation => self.cos_pred_annotation,
            Metric::CosPredLyrics => self.cos_pred_lyrics,
            Metric::TotalScore => self.total_score,
        }
    }

    /// Field-wise arithmetic mean, `None` for an empty input.
    pub fn mean<'a, I>(reports: I) -> Option<Self>
    where
        I: IntoIterator<Item = &'a Self>,
        F: 'a,
    {
        let mut n = 0usize;
        let mut acc = [F::zero(); 4];
        for r in reports {
            n += 1;
            acc[0] = acc[0] + r.rouge1;
            acc[1] = acc[1] + r.cos_pred_annotation;
            acc[2] = acc[2] + r.cos_pred_lyrics;
            acc[3] = acc[3] + r.total_score;
        }
        if n == 0 {
            return None;
        }
        let n = F::from_count(n);
        Some(Self {
            rouge1: acc[0] / n,
            cos_pred_annotation: acc[1] / n,
            cos_pred_lyrics: acc[2] / n,
            total_score: acc[3] / n,
        })
    }
}

/// Selector over the fields of a [`MetricReport`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Rouge1,
    CosPredAnnotation,
    CosPredLyrics,
    TotalScore,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rouge1" => Ok(Metric::Rouge1),
            "cos_pred_annotation" => Ok(Metric::CosPredAnnotation),
            "cos_pred_lyrics" => Ok(Metric::CosPredLyrics),
            "total_score" => Ok(Metric::TotalScore),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Scores a prediction against its annotation and the song lyrics.
pub fn evaluate<F: Scalar>(
    prediction: &str,
    annotation: &str,
    lyrics: &str,
    weights: &TotalScoreWeights<F>,
) -> Result<MetricReport<F>, MetricError> {
    let rouge1 = rouge1::<F>(prediction, annotation);
    let cos_pred_annotation = cosine_bow::<F>(prediction, annotation);
    let cos_pred_lyrics = cosine_bow::<F>(prediction, lyrics);
    let total_score = total_score(rouge1, cos_pred_annotation, cos_pred_lyrics, weights)?;
    Ok(MetricReport {
        rouge1,
        cos_pred_annotation,
        cos_pred_lyrics,
        total_score,
    })
}
