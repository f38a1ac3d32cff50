//! Greedy, beam, plain sampling, top-k and top-p decoding over any
//! [`LanguageModel`].
//!
//! Conventions shared by all strategies:
//! * ties always go to the lowest token id;
//! * temperature applies to the three sampling strategies only, before any
//!   filtering;
//! * [`Generation::log_prob`] is the untempered model log probability of the
//!   emitted tokens, including the terminating EOS when there is one;
//! * generations never contain EOS; a drawn EOS ends decoding.

mod beam;
pub mod filter;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{LanguageModel, LmError, NextTokenDistribution, TokenId};
use crate::rng::SeededRng;

pub use beam::beam_search;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("invalid decode config: {0}")]
    Config(String),
    #[error(transparent)]
    Lm(#[from] LmError),
}

impl DecodeError {
    pub fn kind(&self) -> &'static str {
        match self {
            DecodeError::Config(_) => "config",
            DecodeError::Lm(e) => e.kind(),
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, DecodeError::Lm(e) if e.is_retryable())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Greedy,
    Beam,
    Sampling,
    TopK,
    TopP,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::Greedy,
        Strategy::Beam,
        Strategy::Sampling,
        Strategy::TopK,
        Strategy::TopP,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Greedy => "greedy",
            Strategy::Beam => "beam",
            Strategy::Sampling => "sampling",
            Strategy::TopK => "top_k",
            Strategy::TopP => "top_p",
        }
    }
}

/// Decoding parameters; serializes as a flat JSON object. Every field has a
/// default, so `{"strategy": "top_p"}` is a complete config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodeConfig {
    pub strategy: Strategy,
    pub num_beams: usize,
    /// 0 disables the constraint.
    pub no_repeat_ngram_size: usize,
    pub early_stopping: bool,
    pub temperature: f64,
    pub k: usize,
    pub p: f64,
    pub max_new_tokens: usize,
    pub seed: u64,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Greedy,
            num_beams: 3,
            no_repeat_ngram_size: 2,
            early_stopping: true,
            temperature: 0.95,
            k: 50,
            p: 0.92,
            max_new_tokens: 64,
            seed: 0,
        }
    }
}

impl DecodeConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        Self {
            strategy,
            ..Self::default()
        }
    }

    /// One config per strategy, all with the default hyperparameters.
    pub fn paper_defaults() -> Vec<Self> {
        Strategy::ALL.into_iter().map(Self::with_strategy).collect()
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        let fail = |m: String| Err(DecodeError::Config(m));
        if self.num_beams < 1 {
            return fail("num_beams must be at least 1".into());
        }
        if self.k < 1 {
            return fail("k must be at least 1".into());
        }
        if !(self.p > 0.0 && self.p <= 1.0) {
            return fail(format!("p must lie in (0, 1], got {}", self.p));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return fail(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.max_new_tokens < 1 {
            return fail("max_new_tokens must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FinishReason {
    Eos,
    MaxLen,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generation {
    /// Emitted ids, prompt and EOS excluded.
    pub ids: Vec<TokenId>,
    #[serde(with = "crate::lm::wire::float_or_neg_inf")]
    pub log_prob: f64,
    pub finish_reason: FinishReason,
}

fn check_prompt<M: LanguageModel + ?Sized>(model: &M, prompt_ids: &[TokenId]) -> Result<(), DecodeError> {
    model.vocabulary().check_ids(prompt_ids)?;
    Ok(())
}

/// Shared left-to-right loop: `pick` chooses the next token from each
/// step's distribution.
fn step_loop<M, P>(
    model: &M,
    prompt_ids: &[TokenId],
    max_new_tokens: usize,
    mut pick: P,
) -> Result<Generation, DecodeError>
where
    M: LanguageModel + ?Sized,
    P: FnMut(&NextTokenDistribution) -> TokenId,
{
    check_prompt(model, prompt_ids)?;
    let eos = model.vocabulary().eos();
    let mut ctx = prompt_ids.to_vec();
    let mut ids = Vec::new();
    let mut log_prob = 0.0;
    for _ in 0..max_new_tokens {
        let dist = model.next(&ctx)?;
        let tok = pick(&dist);
        log_prob += dist.log_prob(tok);
        if tok == eos {
            return Ok(Generation {
                ids,
                log_prob,
                finish_reason: FinishReason::Eos,
            });
        }
        ids.push(tok);
        ctx.push(tok);
    }
    Ok(Generation {
        ids,
        log_prob,
        finish_reason: FinishReason::MaxLen,
    })
}

/// Argmax at every step. Ignores the seed.
pub fn greedy<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation, DecodeError> {
    cfg.validate()?;
    step_loop(model, prompt_ids, cfg.max_new_tokens, NextTokenDistribution::argmax)
}

#[derive(Clone, Copy)]
enum Truncation {
    None,
    TopK(usize),
    TopP(f64),
}

/// The per-step weights a sampling strategy draws from, before
/// normalization.
fn step_weights(log_probs: &[f64], temperature: f64, truncation: Truncation) -> Vec<f64> {
    let mut w = filter::tempered_weights(log_probs, temperature);
    match truncation {
        Truncation::None => {}
        Truncation::TopK(k) => filter::top_k_filter(log_probs, &mut w, k),
        Truncation::TopP(p) => filter::top_p_filter(log_probs, &mut w, p),
    }
    w
}

/// Normalized per-step sampling distribution for `cfg`'s strategy. Greedy
/// and beam return a point mass on the argmax.
pub fn step_distribution(dist: &NextTokenDistribution, cfg: &DecodeConfig) -> Vec<f64> {
    let truncation = match cfg.strategy {
        Strategy::Sampling => Truncation::None,
        Strategy::TopK => Truncation::TopK(cfg.k),
        Strategy::TopP => Truncation::TopP(cfg.p),
        Strategy::Greedy | Strategy::Beam => {
            let mut v = vec![0.0; dist.len()];
            v[dist.argmax() as usize] = 1.0;
            return v;
        }
    };
    filter::normalize(&step_weights(dist.log_probs(), cfg.temperature, truncation))
}

fn sample_with<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
    truncation: Truncation,
) -> Result<Generation, DecodeError> {
    cfg.validate()?;
    let mut rng = SeededRng::new(cfg.seed);
    step_loop(model, prompt_ids, cfg.max_new_tokens, |dist| {
        let w = step_weights(dist.log_probs(), cfg.temperature, truncation);
        filter::categorical(&w, rng.next_unit()) as TokenId
    })
}

/// Draws each token from `softmax(log_probs / T)`; one uniform per step.
pub fn sample<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation, DecodeError> {
    sample_with(model, prompt_ids, cfg, Truncation::None)
}

/// Sampling restricted to the `cfg.k` most probable tokens.
pub fn top_k_sample<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation, DecodeError> {
    sample_with(model, prompt_ids, cfg, Truncation::TopK(cfg.k))
}

/// Sampling restricted to the smallest probability-ranked prefix whose mass
/// reaches `cfg.p`.
pub fn top_p_sample<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation, DecodeError> {
    sample_with(model, prompt_ids, cfg, Truncation::TopP(cfg.p))
}

/// Dispatches on `cfg.strategy`.
pub fn decode<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation, DecodeError> {
    match cfg.strategy {
        Strategy::Greedy => greedy(model, prompt_ids, cfg),
        Strategy::Beam => beam_search(model, prompt_ids, cfg),
        Strategy::Sampling => sample(model, prompt_ids, cfg),
        Strategy::TopK => top_k_sample(model, prompt_ids, cfg),
        Strategy::TopP => top_p_sample(model, prompt_ids, cfg),
    }
}
