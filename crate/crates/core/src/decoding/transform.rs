use std::cmp::Ordering;

use super::{DecodeError, DecodingConfig};
use crate::lm::{penalize_token, TokenDistribution};

/// Softmax of `logprobs / t`. `t = 1` returns the input unchanged.
pub fn apply_temperature(dist: &TokenDistribution, t: f64) -> Result<TokenDistribution, DecodeError> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(DecodeError::Temperature(t));
    }
    if t == 1.0 {
        return Ok(dist.clone());
    }
    let scaled: Vec<f64> = dist.logprobs().iter().map(|l| l / t).collect();
    Ok(TokenDistribution::from_scores(&scaled))
}

/// Keeps the smallest top-probability set whose mass reaches `p` (the token
/// crossing the threshold included) and renormalizes. Equal probabilities
/// are ranked by ascending token index. `p >= 1` returns the input unchanged.
pub fn apply_nucleus(dist: &TokenDistribution, p: f64) -> TokenDistribution {
    if p >= 1.0 {
        return dist.clone();
    }
    let logprobs = dist.logprobs();
    let mut order: Vec<usize> = (0..logprobs.len()).collect();
    order.sort_by(|&a, &b| match logprobs[b].total_cmp(&logprobs[a]) {
        Ordering::Equal => a.cmp(&b),
        o => o,
    });
    let mut scores = vec![f64::NEG_INFINITY; logprobs.len()];
    let mut mass = 0.0;
    for &i in &order {
        scores[i] = logprobs[i];
        mass += logprobs[i].exp();
        if mass >= p {
            break;
        }
    }
    TokenDistribution::from_scores(&scores)
}

/// The distribution actually sampled from: temperature, then nucleus, then
/// the optional token penalty.
pub fn transform_distribution(
    dist: &TokenDistribution,
    config: &DecodingConfig,
) -> Result<TokenDistribution, DecodeError> {
    let mut out = apply_temperature(dist, config.temperature)?;
    out = apply_nucleus(&out, config.nucleus_p);
    if let Some((token, factor)) = config.unk_penalty {
        out = penalize_token(&out, token, factor);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn temperature_half_on_two_logits() {
        let d = TokenDistribution::from_scores(&[2.0, 0.0]);
        let out = apply_temperature(&d, 0.5).unwrap().probs();
        let e4 = 4f64.exp();
        assert!(close(&out, &[e4 / (e4 + 1.0), 1.0 / (e4 + 1.0)], 1e-12));
        assert!((out[0] - 0.98201).abs() < 5e-6);
    }

    #[test]
    fn temperature_rejects_zero() {
        let d = TokenDistribution::uniform(3);
        assert!(matches!(apply_temperature(&d, 0.0), Err(DecodeError::Temperature(_))));
        assert_eq!(apply_temperature(&d, 1.0).unwrap(), d);
    }

    #[test]
    fn nucleus_keeps_crossing_token() {
        let d = TokenDistribution::from_probs(&[0.5, 0.3, 0.15, 0.05]);
        let out = apply_nucleus(&d, 0.9).probs();
        assert!(close(&out, &[0.5 / 0.95, 0.3 / 0.95, 0.15 / 0.95, 0.0], 1e-12));
        assert!((out[0] - 0.5263).abs() < 1e-4);
        assert_eq!(apply_nucleus(&d, 1.0), d);
    }

    #[test]
    fn nucleus_on_point_mass() {
        let d = TokenDistribution::from_probs(&[0.0, 1.0, 0.0]);
        for p in [0.1, 0.5, 0.99] {
            assert!(close(&apply_nucleus(&d, p).probs(), &[0.0, 1.0, 0.0], 0.0));
        }
    }

    #[test]
    fn nucleus_ties_prefer_low_index() {
        let d = TokenDistribution::from_probs(&[0.25, 0.25, 0.25, 0.25]);
        let out = apply_nucleus(&d, 0.5).probs();
        assert!(close(&out, &[0.5, 0.5, 0.0, 0.0], 1e-12));
    }

    #[test]
    fn sharper_temperature_raises_max() {
        let d = TokenDistribution::from_probs(&[0.6, 0.3, 0.1]);
        let out = apply_temperature(&d, 0.7).unwrap();
        assert!(out.prob(0) > d.prob(0));
    }
}
