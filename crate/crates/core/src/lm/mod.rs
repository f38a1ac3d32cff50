//! Next-token model contract, the add-k n-gram reference model, and the
//! line-delimited JSON protocol for models hosted out of process.

mod ngram;
pub mod remote;
pub mod server;
pub mod wire;

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

pub use ngram::{fit_ngram, NGramConfig, NGramModel};
pub use remote::{remote_next, RemoteModel};

pub type TokenId = u32;

/// Tolerance on `Σ exp(log_probs) = 1`.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum LmError {
    #[error("token id {id} out of range for vocabulary of size {size}")]
    IdOutOfRange { id: TokenId, size: usize },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid vocabulary: {0}")]
    InvalidVocabulary(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("training text is empty")]
    EmptyTrainingText,
    #[error("transport error: {message}")]
    Transport { message: String, retryable: bool },
    #[error("timed out waiting for the model server")]
    Timeout,
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("vocabulary mismatch: {0}")]
    VocabularyMismatch(String),
    #[error("server error {code}: {message}")]
    Remote { code: String, message: String },
    #[error("model file {path}: {message}")]
    ModelFile { path: String, message: String },
}

impl LmError {
    /// Transport failures and timeouts may succeed on a fresh connection.
    pub fn is_retryable(&self) -> bool {
        match self {
            LmError::Transport { retryable, .. } => *retryable,
            LmError::Timeout => true,
            _ => false,
        }
    }

    /// Short machine-readable class name, used in failure records.
    pub fn kind(&self) -> &'static str {
        match self {
            LmError::IdOutOfRange { .. } => "id_out_of_range",
            LmError::InvalidDistribution(_) => "invalid_distribution",
            LmError::InvalidVocabulary(_) => "invalid_vocabulary",
            LmError::InvalidParameter(_) => "invalid_parameter",
            LmError::EmptyTrainingText => "empty_training_text",
            LmError::Transport { .. } => "transport",
            LmError::Timeout => "timeout",
            LmError::Protocol(_) => "protocol",
            LmError::VocabularyMismatch(_) => "vocabulary_mismatch",
            LmError::Remote { .. } => "remote",
            LmError::ModelFile { .. } => "model_file",
        }
    }
}

/// Token inventory with reserved BOS, EOS and UNK ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    tokens: Vec<String>,
    ids: HashMap<String, TokenId>,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    tokens: Vec<String>,
    bos: TokenId,
    eos: TokenId,
    unk: TokenId,
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = LmError;

    fn try_from(r: VocabularyRepr) -> Result<Self, LmError> {
        Vocabulary::new(r.tokens, r.bos, r.eos, r.unk)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            tokens: v.tokens,
            bos: v.bos,
            eos: v.eos,
            unk: v.unk,
        }
    }
}

pub const EOS_TOKEN: &str = "<eos>";
pub const BOS_TOKEN: &str = "<bos>";
pub const UNK_TOKEN: &str = "<unk>";

impl Vocabulary {
    pub fn new(tokens: Vec<String>, bos: TokenId, eos: TokenId, unk: TokenId) -> Result<Self, LmError> {
        let size = tokens.len();
        for (name, id) in [("bos", bos), ("eos", eos), ("unk", unk)] {
            if id as usize >= size {
                return Err(LmError::InvalidVocabulary(format!(
                    "{name} id {id} outside vocabulary of size {size}"
                )));
            }
        }
        if bos == eos || bos == unk || eos == unk {
            return Err(LmError::InvalidVocabulary("reserved ids must be distinct".into()));
        }
        let mut ids = HashMap::with_capacity(size);
        for (i, tok) in tokens.iter().enumerate() {
            if ids.insert(tok.clone(), i as TokenId).is_some() {
                return Err(LmError::InvalidVocabulary(format!("duplicate token `{tok}`")));
            }
        }
        Ok(Self {
            tokens,
            ids,
            bos,
            eos,
            unk,
        })
    }

    /// `<eos>` = 0, `<bos>` = 1, `<unk>` = 2, then `words` in order with
    /// duplicates and reserved spellings skipped.
    pub fn with_reserved<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut tokens = vec![EOS_TOKEN.to_string(), BOS_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut seen: std::collections::HashSet<String> = tokens.iter().cloned().collect();
        for w in words {
            let w = w.into();
            if seen.insert(w.clone()) {
                tokens.push(w);
            }
        }
        Vocabulary::new(tokens, 1, 0, 2).expect("reserved layout is valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn bos(&self) -> TokenId {
        self.bos
    }

    pub fn eos(&self) -> TokenId {
        self.eos
    }

    pub fn unk(&self) -> TokenId {
        self.unk
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn is_reserved(&self, id: TokenId) -> bool {
        id == self.bos || id == self.eos || id == self.unk
    }

    /// Tokenizes with [`text::lm_tokens`]; unknown words map to UNK.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        text::lm_tokens(text)
            .iter()
            .map(|t| self.id(t).unwrap_or(self.unk))
            .collect()
    }

    /// Inverse of [`encode`](Self::encode) up to spacing. BOS and EOS are
    /// skipped; UNK renders as its token string.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let toks: Vec<&str> = ids
            .iter()
            .filter(|&&id| id != self.bos && id != self.eos)
            .filter_map(|&id| self.token(id))
            .collect();
        text::join_lm_tokens(&toks)
    }

    pub fn check_ids(&self, ids: &[TokenId]) -> Result<(), LmError> {
        match ids.iter().find(|&&id| id as usize >= self.len()) {
            Some(&id) => Err(LmError::IdOutOfRange { id, size: self.len() }),
            None => Ok(()),
        }
    }
}

/// Natural-log next-token probabilities over the whole vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct NextTokenDistribution {
    log_probs: Vec<f64>,
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

impl NextTokenDistribution {
    /// Accepts already-normalized log probabilities.
    pub fn from_log_probs(log_probs: Vec<f64>) -> Result<Self, LmError> {
        if log_probs.is_empty() {
            return Err(LmError::InvalidDistribution("empty vector".into()));
        }
        if let Some(bad) = log_probs.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
            return Err(LmError::InvalidDistribution(format!("entry {bad} not allowed")));
        }
        let total: f64 = log_probs.iter().map(|v| v.exp()).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(LmError::InvalidDistribution(format!("probabilities sum to {total}")));
        }
        Ok(Self { log_probs })
    }

    /// Log-softmax of arbitrary finite-or-minus-infinity scores.
    pub fn from_logits(logits: &[f64]) -> Result<Self, LmError> {
        if let Some(bad) = logits.iter().find(|v| v.is_nan() || **v == f64::INFINITY) {
            return Err(LmError::InvalidDistribution(format!("logit {bad} not allowed")));
        }
        let lse = log_sum_exp(logits);
        if lse == f64::NEG_INFINITY {
            return Err(LmError::InvalidDistribution("all logits are -inf".into()));
        }
        Self::from_log_probs(logits.iter().map(|v| v - lse).collect())
    }

    pub fn uniform(size: usize) -> Self {
        Self {
            log_probs: vec![-(size as f64).ln(); size],
        }
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    pub fn log_prob(&self, id: TokenId) -> f64 {
        self.log_probs[id as usize]
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|v| v.exp()).collect()
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    /// Most probable token; the lowest id wins ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, &v) in self.log_probs.iter().enumerate().skip(1) {
            if v > self.log_probs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

/// A conditional next-token model. Implementations are deterministic and
/// safe to share between concurrent decoders.
pub trait LanguageModel: Send + Sync {
    fn vocabulary(&self) -> &Vocabulary;

    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError>;
}

impl<M: LanguageModel + ?Sized> LanguageModel for &M {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        (**self).next(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Arc<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        (**self).next(context)
    }
}

impl<M: LanguageModel + ?Sized> LanguageModel for Box<M> {
    fn vocabulary(&self) -> &Vocabulary {
        (**self).vocabulary()
    }

    fn next(&self, context: &[TokenId]) -> Result<NextTokenDistribution, LmError> {
        (**self).next(context)
    }
}

/// `Σ_t log P(ids[t] | prefix ++ ids[..t])`.
pub fn continuation_log_prob<M: LanguageModel + ?Sized>(
    model: &M,
    prefix: &[TokenId],
    ids: &[TokenId],
) -> Result<f64, LmError> {
    let vocab = model.vocabulary();
    vocab.check_ids(prefix)?;
    vocab.check_ids(ids)?;
    let mut ctx = prefix.to_vec();
    let mut total = 0.0;
    for &id in ids {
        total += model.next(&ctx)?.log_prob(id);
        ctx.push(id);
    }
    Ok(total)
}

/// Log probability of a whole sequence, conditioned on a single BOS.
pub fn sequence_log_prob<M: LanguageModel + ?Sized>(model: &M, ids: &[TokenId]) -> Result<f64, LmError> {
    if ids.is_empty() {
        return Err(LmError::InvalidParameter("sequence must be non-empty".into()));
    }
    continuation_log_prob(model, &[model.vocabulary().bos()], ids)
}
