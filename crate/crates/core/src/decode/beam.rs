use std::cmp::Ordering;
use std::collections::HashSet;

use super::{check_prompt, DecodeConfig, DecodeError, FinishReason, Generation};
use crate::lm::{LanguageModel, TokenId};

#[derive(Debug, Clone)]
struct Hypothesis {
    ids: Vec<TokenId>,
    score: f64,
}

/// Tokens that would complete an `m`-gram already present in `seq`.
fn banned_tokens(seq: &[TokenId], m: usize) -> HashSet<TokenId> {
    let mut banned = HashSet::new();
    if m == 0 || seq.len() < m {
        return banned;
    }
    let prefix = &seq[seq.len() + 1 - m..];
    for start in 0..=seq.len() - m {
        if &seq[start..start + m - 1] == prefix {
            banned.insert(seq[start + m - 1]);
        }
    }
    banned
}

/// Beam search over summed log probabilities, no length normalization.
///
/// Each step expands every live hypothesis by every token not banned by the
/// no-repeat constraint (n-grams are counted over prompt + hypothesis), keeps
/// the `num_beams` best candidates (score, then parent rank, then token id),
/// and retires EOS candidates as finished. A hypothesis with every
/// continuation banned is finished with a forced EOS.
///
/// Search ends when no live hypothesis remains, at `max_new_tokens`, or,
/// with `early_stopping`, once `num_beams` hypotheses have finished. Without
/// early stopping it also ends once no live score can beat the
/// `num_beams`-th finished score. The result is the best finished
/// hypothesis, where hypotheses still live at the length limit count as
/// finished with reason `max_len`.
pub fn beam_search<M: LanguageModel + ?Sized>(
    model: &M,
    prompt_ids: &[TokenId],
    cfg: &DecodeConfig,
) -> Result<Generation, DecodeError> {
    cfg.validate()?;
    check_prompt(model, prompt_ids)?;
    let eos = model.vocabulary().eos();
    let width = cfg.num_beams;
    let mut live = vec![Hypothesis {
        ids: Vec::new(),
        score: 0.0,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut reached_limit = true;

    for _ in 0..cfg.max_new_tokens {
        let mut candidates: Vec<(f64, usize, TokenId)> = Vec::new();
        for (rank, hyp) in live.iter().enumerate() {
            let mut ctx = prompt_ids.to_vec();
            ctx.extend_from_slice(&hyp.ids);
            let dist = model.next(&ctx)?;
            let banned = banned_tokens(&ctx, cfg.no_repeat_ngram_size);
            let before = candidates.len();
            for (tok, &lp) in dist.log_probs().iter().enumerate() {
                let tok = tok as TokenId;
                if !banned.contains(&tok) {
                    candidates.push((hyp.score + lp, rank, tok));
                }
            }
            if candidates.len() == before {
                finished.push(Hypothesis {
                    ids: hyp.ids.clone(),
                    score: hyp.score + dist.log_prob(eos),
                });
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(Ordering::Equal)
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        candidates.truncate(width);

        let mut next_live = Vec::with_capacity(candidates.len());
        for (score, rank, tok) in candidates {
            let mut ids = live[rank].ids.clone();
            if tok == eos {
                finished.push(Hypothesis { ids, score });
            } else {
                ids.push(tok);
                next_live.push(Hypothesis { ids, score });
            }
        }
        live = next_live;

        if live.is_empty() {
            reached_limit = false;
            break;
        }
        if finished.len() >= width {
            let stop = cfg.early_stopping || {
                let mut scores: Vec<f64> = finished.iter().map(|h| h.score).collect();
                scores.sort_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
                let kth = scores[width - 1];
                live.iter().all(|h| h.score <= kth)
            };
            if stop {
                reached_limit = false;
                break;
            }
        }
    }

    let mut best: Option<(&Hypothesis, FinishReason)> = None;
    let limit_pool = if reached_limit { live.as_slice() } else { &[] };
    for (hyp, reason) in finished
        .iter()
        .map(|h| (h, FinishReason::Eos))
        .chain(limit_pool.iter().map(|h| (h, FinishReason::MaxLen)))
    {
        if best.as_ref().is_none_or(|(b, _)| hyp.score > b.score) {
            best = Some((hyp, reason));
        }
    }
    let (hyp, finish_reason) = best.expect("beam search always retains a hypothesis");
    Ok(Generation {
        ids: hyp.ids.clone(),
        log_prob: hyp.score,
        finish_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn banned_bigrams() {
        // seq a b a -> bigram (a, b) exists, so b is banned after a.
        let b = banned_tokens(&[1, 2, 1], 2);
        assert_eq!(b, [2].into());
        assert!(banned_tokens(&[1, 2, 3], 2).is_empty());
        assert_eq!(banned_tokens(&[4, 5], 1), [4, 5].into());
        assert!(banned_tokens(&[1, 2, 1], 0).is_empty());
        assert!(banned_tokens(&[], 2).is_empty());
        assert!(banned_tokens(&[7], 2).is_empty());
        assert!(banned_tokens(&[7, 8], 3).is_empty());
        // trigram (1, 2, 3) exists; context ends with 1 2.
        assert_eq!(banned_tokens(&[1, 2, 3, 1, 2], 3), [3].into());
    }
}
