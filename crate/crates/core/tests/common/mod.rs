//! Toy models and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use songmeaning::lm::{LanguageModel, LmError, NextTokenDistribution, TokenId, Vocabulary};
use songmeaning::rng::SeededRng;

pub fn mini_corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/mini_corpus.jsonl")
}

pub fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_songmeaning")
}

/// Vocabulary of `size` tokens: the three reserved ids, then `w3`, `w4`, ...
pub fn toy_vocab(size: usize) -> Vocabulary {
    assert!(size >= 3);
    let words: Vec<String> = (3..size).map(|i| format!("w{i}")).collect();
    Vocabulary::with_reserved(words)
}

/// Random conditional model: logits for each context are drawn from a
/// stream seeded by the model seed and the last `order` context ids.
pub struct RandomModel {
    vocab: Vocabulary,
    seed: u64,
    order: usize,
    spread: f64,
    eos_bias: f64,
}

impl RandomModel {
    pub fn new(vocab_size: usize, order: usize, seed: u64) -> Self {
        Self {
            vocab: toy_vocab(vocab_size),
            seed,
            order,
            spread: 4.0,
            eos_bias: 0.0,
        }
    }

    /// Subtracts `bias` from the EOS logit so generations run longer.
    pub fn with_eos_bias(mut self, bias: f64) -> Self {
        self.eos_bias = bias;
        self
    }

    /// Logits rounded to a coarse grid so ties are common.
    pub fn coarse(vocab_size: usize, order: usize, seed: u64) -> Self {
        Self {
            spread: -2.0,
            ..Self::new(vocab_size, order, seed)
        }
    }
}

fn mix(mut h: u64, x: u64) -> u64 {
    h ^= x
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(h << 6)
        .wrapping_add(h >> 2);
    h.wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

impl LanguageModel for RandomModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        let tail = &context[context.len().saturating_sub(self.order)..];
        let mut h = mix(self.seed, tail.len() as u64);
        for &id in tail {
            h = mix(h, u64::from(id) + 1);
        }
        let mut rng = SeededRng::new(h);
        let mut logits: Vec<f64> = (0..self.vocab.len())
            .map(|_| {
                if self.spread > 0.0 {
                    (rng.next_unit() * 2.0 - 1.0) * self.spread
                } else {
                    rng.below(3) as f64
                }
            })
            .collect();
        logits[self.vocab.eos() as usize] -= self.eos_bias;
        NextTokenDistribution::from_logits(&logits)
    }
}

/// Context-free model with a fixed distribution.
pub struct FixedModel {
    vocab: Vocabulary,
    log_probs: Vec<f64>,
}

impl FixedModel {
    pub fn new(vocab: Vocabulary, log_probs: Vec<f64>) -> Self {
        assert_eq!(vocab.len(), log_probs.len());
        NextTokenDistribution::from_log_probs(log_probs.clone()).expect("normalized");
        Self { vocab, log_probs }
    }

    /// Reserved ids get probability zero; the words get `probs`.
    pub fn over_words(probs: &[f64]) -> Self {
        let vocab = toy_vocab(3 + probs.len());
        let mut lp = vec![f64::NEG_INFINITY; 3];
        lp.extend(probs.iter().map(|p| p.ln()));
        Self::new(vocab, lp)
    }
}

impl LanguageModel for FixedModel {
    fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    fn next(&self, _context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        NextTokenDistribution::from_log_probs(self.log_probs.clone())
    }
}

/// Every token sequence the decoder can return with `max_new` steps:
/// `j < max_new` tokens followed by EOS, or `max_new` non-EOS tokens.
/// Yields `(ids, log_prob)` with the EOS term included.
pub fn enumerate_outputs<M: LanguageModel>(model: &M, prompt: &[TokenId], max_new: usize) -> Vec<(Vec<TokenId>, f64)> {
    let eos = model.vocabulary().eos();
    let v = model.vocabulary().len() as TokenId;
    let mut out = Vec::new();
    let mut stack: Vec<(Vec<TokenId>, f64)> = vec![(Vec::new(), 0.0)];
    while let Some((ids, lp)) = stack.pop() {
        let mut ctx = prompt.to_vec();
        ctx.extend_from_slice(&ids);
        if ids.len() == max_new {
            out.push((ids, lp));
            continue;
        }
        let dist = model.next(&ctx).unwrap();
        out.push((ids.clone(), lp + dist.log_prob(eos)));
        for t in 0..v {
            if t != eos {
                let mut next = ids.clone();
                next.push(t);
                stack.push((next, lp + dist.log_prob(t)));
            }
        }
    }
    out
}
