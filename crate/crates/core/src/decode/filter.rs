//! Per-step temperature scaling, top-k and nucleus filters, and the
//! categorical draw. Weights stay unnormalized; a filter zeroes the tokens
//! it removes and leaves the others untouched, so an all-keeping filter
//! changes nothing bit for bit.

use crate::num::Scalar;

/// Smallest temperature applied; lower values are clamped to this.
pub const MIN_TEMPERATURE: f64 = 1e-4;

/// `exp((lp - max) / T)` per token, with `T` clamped at [`MIN_TEMPERATURE`].
/// Proportional to `softmax(log_probs / T)`.
pub fn tempered_weights<F: Scalar>(log_probs: &[F], temperature: F) -> Vec<F> {
    let t = temperature.max(F::lit(MIN_TEMPERATURE));
    let max = log_probs.iter().copied().fold(F::neg_infinity(), F::max);
    log_probs.iter().map(|&lp| ((lp - max) / t).exp()).collect()
}

/// Token ids ordered by descending log probability, lower id first on ties.
pub fn rank_descending<F: Scalar>(log_probs: &[F]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..log_probs.len()).collect();
    order.sort_by(|&a, &b| {
        log_probs[b]
            .partial_cmp(&log_probs[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Keeps the `k` highest-ranked tokens. Ranking uses the untempered log
/// probabilities, which temperature does not reorder.
pub fn top_k_filter<F: Scalar>(log_probs: &[F], weights: &mut [F], k: usize) {
    if k >= weights.len() {
        return;
    }
    for &i in &rank_descending(log_probs)[k..] {
        weights[i] = F::zero();
    }
}

/// Keeps the shortest prefix of the ranking whose normalized cumulative
/// weight reaches `p` (at least one token). `p >= 1` keeps everything.
pub fn top_p_filter<F: Scalar>(log_probs: &[F], weights: &mut [F], p: F) {
    if p >= F::one() {
        return;
    }
    let total: F = weights.iter().copied().sum();
    let order = rank_descending(log_probs);
    let mut cum = F::zero();
    let mut keep = order.len();
    for (n, &i) in order.iter().enumerate() {
        cum = cum + weights[i] / total;
        if cum >= p {
            keep = n + 1;
            break;
        }
    }
    for &i in &order[keep..] {
        weights[i] = F::zero();
    }
}

/// Inverse-CDF draw in token-id order: the first `i` with
/// `u · Σw < Σ_{j≤i} w_j`. `u` must lie in [0, 1).
pub fn categorical<F: Scalar>(weights: &[F], u: F) -> usize {
    let total: F = weights.iter().copied().sum();
    let target = u * total;
    let mut acc = F::zero();
    let mut last_positive = 0;
    for (i, &w) in weights.iter().enumerate() {
        if w > F::zero() {
            last_positive = i;
            acc = acc + w;
            if target < acc {
                return i;
            }
        }
    }
    last_positive
}

/// Normalizes weights to probabilities.
pub fn normalize<F: Scalar>(weights: &[F]) -> Vec<F> {
    let total: F = weights.iter().copied().sum();
    weights.iter().map(|&w| w / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(p: &[f64]) -> Vec<f64> {
        p.iter().map(|x| x.ln()).collect()
    }

    #[test]
    fn nucleus_boundary() {
        let logp = lp(&[0.6, 0.3, 0.1]);
        let mut w = tempered_weights(&logp, 1.0);
        top_p_filter(&logp, &mut w, 0.62);
        assert!(w[0] > 0.0 && w[1] > 0.0 && w[2] == 0.0);

        let mut w = tempered_weights(&logp, 1.0);
        top_p_filter(&logp, &mut w, 0.6);
        assert!(w[0] > 0.0 && w[1] == 0.0 && w[2] == 0.0, "boundary is inclusive");

        let mut w = tempered_weights(&logp, 1.0);
        top_p_filter(&logp, &mut w, 0.1);
        assert_eq!(w.iter().filter(|x| **x > 0.0).count(), 1);
    }

    #[test]
    fn top_k_keeps_highest_with_low_id_ties() {
        let logp = lp(&[0.25, 0.25, 0.25, 0.25]);
        let mut w = tempered_weights(&logp, 1.0);
        top_k_filter(&logp, &mut w, 2);
        assert_eq!(
            w.iter().map(|x| *x > 0.0).collect::<Vec<_>>(),
            [true, true, false, false]
        );
    }

    #[test]
    fn full_filters_are_identity() {
        let logp = lp(&[0.5, 0.3, 0.2]);
        let w0 = tempered_weights(&logp, 0.95);
        let mut w = w0.clone();
        top_k_filter(&logp, &mut w, 3);
        top_p_filter(&logp, &mut w, 1.0);
        assert_eq!(w, w0);
    }

    #[test]
    fn categorical_inverse_cdf() {
        let w = [1.0, 0.0, 3.0];
        assert_eq!(categorical(&w, 0.0), 0);
        assert_eq!(categorical(&w, 0.2499), 0);
        assert_eq!(categorical(&w, 0.25), 2);
        assert_eq!(categorical(&w, 0.999_999), 2);
    }

    #[test]
    fn generic_over_f32() {
        let logp: Vec<f32> = [0.7f32, 0.2, 0.1].iter().map(|x| x.ln()).collect();
        let mut w = tempered_weights(&logp, 1.0f32);
        top_k_filter(&logp, &mut w, 2);
        let p = normalize(&w);
        assert!((p[0] - 0.7 / 0.9).abs() < 1e-6);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn low_temperature_is_peaked() {
        let w = tempered_weights(&lp(&[0.5, 0.3, 0.2]), 0.0);
        assert_eq!(w, vec![1.0, 0.0, 0.0]);
    }
}
