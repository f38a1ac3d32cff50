use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmError, NextTokenDistribution, TokenId, Vocabulary};
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NGramConfig {
    /// Model order `n`; contexts are the previous `n - 1` tokens.
    pub order: usize,
    /// Add-k smoothing constant.
    pub k: f64,
    /// Vocabulary size cap, reserved tokens included.
    pub vocab_cap: usize,
}

impl Default for NGramConfig {
    fn default() -> Self {
        Self {
            order: 3,
            k: 0.1,
            vocab_cap: 5000,
        }
    }
}

impl NGramConfig {
    pub fn validate(&self) -> Result<(), LmError> {
        if self.order < 1 {
            return Err(LmError::InvalidParameter("order must be at least 1".into()));
        }
        if !(self.k.is_finite() && self.k > 0.0) {
            return Err(LmError::InvalidParameter(format!("k must be positive, got {}", self.k)));
        }
        if self.vocab_cap < 3 {
            return Err(LmError::InvalidParameter("vocab_cap must be at least 3".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ContextCounts {
    total: u64,
    /// Sorted by token id.
    counts: Vec<(TokenId, u64)>,
}

/// Add-k smoothed n-gram model:
/// `P(w | ctx) = (count(ctx, w) + k) / (count(ctx) + k·|V|)`.
///
/// Contexts shorter than `n - 1` are left-padded with BOS. Every training
/// text is terminated with EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct NGramModel {
    config: NGramConfig,
    vocab: Vocabulary,
    contexts: HashMap<Vec<TokenId>, ContextCounts>,
}

/// Fits an [`NGramModel`] on `texts` tokenized with [`text::lm_tokens`].
///
/// The vocabulary keeps the `vocab_cap - 3` most frequent words (ties by
/// token string) after the reserved tokens; other words become UNK.
pub fn fit_ngram<S: AsRef<str>>(texts: &[S], config: NGramConfig) -> Result<NGramModel, LmError> {
    config.validate()?;
    let tokenized: Vec<Vec<String>> = texts.iter().map(|t| text::lm_tokens(t.as_ref())).collect();
    if tokenized.iter().all(Vec::is_empty) {
        return Err(LmError::EmptyTrainingText);
    }

    let mut freq: HashMap<&str, u64> = HashMap::new();
    for tok in tokenized.iter().flatten() {
        *freq.entry(tok.as_str()).or_insert(0) += 1;
    }
    let mut ranked: Vec<(&str, u64)> = freq
        .into_iter()
        .filter(|(t, _)| ![super::EOS_TOKEN, super::BOS_TOKEN, super::UNK_TOKEN].contains(t))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(config.vocab_cap - 3);
    let vocab = Vocabulary::with_reserved(ranked.into_iter().map(|(t, _)| t));

    let ctx_len = config.order - 1;
    let mut raw: HashMap<Vec<TokenId>, BTreeMap<TokenId, u64>> = HashMap::new();
    for toks in tokenized.iter().filter(|t| !t.is_empty()) {
        let mut seq = vec![vocab.bos(); ctx_len];
        seq.extend(toks.iter().map(|t| vocab.id(t).unwrap_or(vocab.unk())));
        seq.push(vocab.eos());
        for i in ctx_len..seq.len() {
            let ctx = seq[i - ctx_len..i].to_vec();
            *raw.entry(ctx).or_default().entry(seq[i]).or_insert(0) += 1;
        }
    }
    let contexts = raw
        .into_iter()
        .map(|(ctx, counts)| {
            let total = counts.values().sum();
            (
                ctx,
                ContextCounts {
                    total,
                    counts: counts.into_iter().collect(),
                },
            )
        })
        .collect();
    Ok(NGramModel {
        config,
        vocab,
        contexts,
    })
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.config.order
    }

    pub fn config(&self) -> NGramConfig {
        self.config
    }

    /// The `n - 1` ids the model conditions on, BOS-padded on the left.
    pub fn effective_context(&self, context: &[TokenId]) -> Vec<TokenId> {
        let ctx_len = self.config.order - 1;
        let tail = &context[context.len().saturating_sub(ctx_len)..];
        let mut ctx = vec![self.vocab.bos(); ctx_len - tail.len()];
        ctx.extend_from_slice(tail);
        ctx
    }

    /// Raw count of `token` after `context` (already truncated/padded).
    pub fn count(&self, context: &[TokenId], token: TokenId) -> u64 {
        self.contexts
            .get(context)
            .and_then(|c| {
                c.counts
                    .binary_search_by_key(&token, |e| e.0)
                    .ok()
                    .map(|i| c.counts[i].1)
            })
            .unwrap_or(0)
    }

    pub fn save(&self, path: &Path) -> Result<(), LmError> {
        let file_err = |message: String| LmError::ModelFile {
            path: path.display().to_string(),
            message,
        };
        let mut contexts: Vec<ContextEntry> = self
            .contexts
            .iter()
            .map(|(ctx, c)| ContextEntry {
                ctx: ctx.clone(),
                counts: c.counts.clone(),
            })
            .collect();
        contexts.sort_by(|a, b| a.ctx.cmp(&b.ctx));
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            config: self.config,
            vocabulary: self.vocab.clone(),
            contexts,
        };
        let json = serde_json::to_string(&file).map_err(|e| file_err(e.to_string()))?;
        fs::write(path, json + "\n").map_err(|e| file_err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, LmError> {
        let file_err = |message: String| LmError::ModelFile {
            path: path.display().to_string(),
            message,
        };
        let bytes = fs::read(path).map_err(|e| file_err(e.to_string()))?;
        let file: ModelFile = serde_json::from_slice(&bytes).map_err(|e| file_err(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(file_err(format!("unsupported format `{}`", file.format)));
        }
        file.config.validate()?;
        let size = file.vocabulary.len();
        let mut contexts = HashMap::with_capacity(file.contexts.len());
        for entry in file.contexts {
            if entry.ctx.len() != file.config.order - 1 {
                return Err(file_err("context length does not match order".into()));
            }
            file.vocabulary.check_ids(&entry.ctx)?;
            let mut counts = entry.counts;
            counts.sort_by_key(|e| e.0);
            if counts.iter().any(|e| e.0 as usize >= size) {
                return Err(file_err("count entry outside vocabulary".into()));
            }
            let total = counts.iter().map(|e| e.1).sum();
            contexts.insert(entry.ctx, ContextCounts { total, counts });
        }
        Ok(Self {
            config: file.config,
            vocab: file.vocabulary,
            contexts,
        })
    }
}

const MODEL_FORMAT: &str = "songmeaning-ngram-v1";

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    config: NGramConfig,
    vocabulary: Vocabulary,
    contexts: Vec<ContextEntry>,
}

#[derive(Serialize, Deserialize)]
struct ContextEntry {
    ctx: Vec<TokenId>,
    counts: Vec<(TokenId, u64)>,
}

impl LanguageModel for NGramModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        self.vocab.check_ids(context)?;
        let ctx = self.effective_context(context);
        let v = self.vocab.len() as f64;
        let k = self.config.k;
        let (total, counts) = match self.contexts.get(&ctx) {
            Some(c) => (c.total as f64, c.counts.as_slice()),
            None => (0.0, &[][..]),
        };
        let denom = total + k * v;
        let mut log_probs = vec![(k / denom).ln(); self.vocab.len()];
        for &(tok, c) in counts {
            log_probs[tok as usize] = ((c as f64 + k) / denom).ln();
        }
        Ok(NextTokenDistribution { log_probs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(order: usize, k: f64) -> NGramConfig {
        NGramConfig {
            order,
            k,
            vocab_cap: 100,
        }
    }

    #[test]
    fn bigram_limit_small_k() {
        let m = fit_ngram(&["a b", "a b"], cfg(2, 1e-9)).unwrap();
        let v = m.vocabulary();
        let (a, b) = (v.id("a").unwrap(), v.id("b").unwrap());
        let d = m.next(&[v.bos(), a]).unwrap();
        // (2 + k) / (2 + k|V|) with |V| = 5.
        let k = 1e-9;
        let expected = (2.0 + k) / (2.0 + 5.0 * k);
        assert!((d.log_prob(b).exp() - expected).abs() < 1e-15);
        assert!(d.log_prob(b).exp() > 1.0 - 1e-8);
    }

    #[test]
    fn add_k_closed_form() {
        let m = fit_ngram(&["a b", "a c"], cfg(2, 0.5)).unwrap();
        let v = m.vocabulary();
        assert_eq!(v.len(), 6);
        let a = v.id("a").unwrap();
        let d = m.next(&[a]).unwrap();
        // count(a) = 2, count(a b) = 1: (1 + 0.5) / (2 + 0.5·6) = 0.3
        assert!((d.log_prob(v.id("b").unwrap()).exp() - 0.3).abs() < 1e-15);
        // unseen continuation: 0.5 / 5 = 0.1
        assert!((d.log_prob(v.eos()).exp() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn unigram_ignores_context() {
        let m = fit_ngram(&["x y y z"], cfg(1, 0.1)).unwrap();
        let v = m.vocabulary();
        let d0 = m.next(&[]).unwrap();
        let d1 = m.next(&[v.id("x").unwrap(), v.id("z").unwrap()]).unwrap();
        assert_eq!(d0, d1);
    }

    #[test]
    fn unseen_context_is_uniform() {
        let m = fit_ngram(&["a b c"], cfg(2, 0.1)).unwrap();
        let v = m.vocabulary();
        let d = m.next(&[v.id("c").unwrap(), v.eos()]).unwrap();
        let first = d.log_probs()[0];
        assert!(d.log_probs().iter().all(|&x| x == first));
        assert!((first.exp() * v.len() as f64 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_token_dominates() {
        let m = fit_ngram(&["a a a"], cfg(2, 0.1)).unwrap();
        let a = m.vocabulary().id("a").unwrap();
        assert_eq!(m.next(&[a]).unwrap().argmax(), a);
    }

    #[test]
    fn vocab_cap_and_unk() {
        let m = fit_ngram(
            &["a a a b b c"],
            NGramConfig {
                order: 2,
                k: 0.1,
                vocab_cap: 5,
            },
        )
        .unwrap();
        let v = m.vocabulary();
        assert_eq!(v.len(), 5);
        assert_eq!(v.id("c"), None);
        assert_eq!(v.encode("c"), vec![v.unk()]);
        let b = v.id("b").unwrap();
        assert_eq!(m.count(&[b], v.unk()), 1);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fit_ngram(&["", "  "], cfg(2, 0.1)),
            Err(LmError::EmptyTrainingText)
        ));
        assert!(fit_ngram(&["a"], cfg(0, 0.1)).is_err());
        assert!(fit_ngram(&["a"], cfg(2, 0.0)).is_err());
        assert!(fit_ngram(
            &["a"],
            NGramConfig {
                order: 2,
                k: 0.1,
                vocab_cap: 2
            }
        )
        .is_err());
        let m = fit_ngram(&["a"], cfg(2, 0.1)).unwrap();
        assert!(matches!(m.next(&[99]), Err(LmError::IdOutOfRange { id: 99, .. })));
    }

    #[test]
    fn save_load_round_trip() {
        let m = fit_ngram(&["one two three", "two three four"], cfg(3, 0.2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        m.save(&path).unwrap();
        let back = NGramModel::load(&path).unwrap();
        assert_eq!(back, m);
    }
}
