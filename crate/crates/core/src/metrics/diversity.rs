use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::decoding::CompletionSet;

/// Share of distinct texts among the kept completions of a set.
pub fn unique_ratio(set: &CompletionSet) -> Result<f64, MetricError> {
    let texts: Vec<&str> = set.kept().map(|c| c.text.as_str()).collect();
    if texts.is_empty() {
        return Err(MetricError::TooFew { needed: 1, got: 0 });
    }
    let distinct: HashSet<&str> = texts.iter().copied().collect();
    Ok(distinct.len() as f64 / texts.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelfBleuConfig {
    /// Multiply each precision by `min(1, exp(1 - r/c))`, `r` the closest
    /// reference length.
    pub brevity_penalty: bool,
}

impl Default for SelfBleuConfig {
    fn default() -> Self {
        SelfBleuConfig { brevity_penalty: true }
    }
}

fn ngrams<'a>(tokens: &[&'a str], n: usize) -> HashMap<Vec<&'a str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.to_vec()).or_insert(0) += 1;
        }
    }
    counts
}

/// Mean order-`n` Self-BLEU of whitespace-tokenized texts.
///
/// Each text is scored against all the others: its `n`-gram counts are
/// clipped at the largest count in any single other text, divided by its
/// number of `n`-grams, and optionally scaled by the brevity penalty. Texts
/// shorter than `n` tokens score 0.
pub fn self_bleu(texts: &[&str], n: usize, config: SelfBleuConfig) -> Result<f64, MetricError> {
    if texts.len() < 2 {
        return Err(MetricError::TooFew { needed: 2, got: texts.len() });
    }
    if n == 0 {
        return Err(MetricError::Undefined("n-gram order 0"));
    }
    let tokens: Vec<Vec<&str>> = texts.iter().map(|t| t.split_whitespace().collect()).collect();
    let counts: Vec<_> = tokens.iter().map(|t| ngrams(t, n)).collect();
    let mut total = 0.0;
    for (i, cand) in tokens.iter().enumerate() {
        if cand.len() < n {
            continue;
        }
        let mut clipped = 0usize;
        for (gram, &c) in &counts[i] {
            let max_ref = (0..tokens.len())
                .filter(|&j| j != i)
                .map(|j| counts[j].get(gram).copied().unwrap_or(0))
                .max()
                .unwrap_or(0);
            clipped += c.min(max_ref);
        }
        let precision = clipped as f64 / (cand.len() + 1 - n) as f64;
        let bp = if config.brevity_penalty {
            let c = cand.len() as f64;
            let r = (0..tokens.len())
                .filter(|&j| j != i)
                .map(|j| tokens[j].len())
                .min_by_key(|&len| (len.abs_diff(cand.len()), len))
                .unwrap_or(0) as f64;
            (1.0 - r / c).exp().min(1.0)
        } else {
            1.0
        };
        total += precision * bp;
    }
    Ok(total / tokens.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoding::{Completion, CompletionStatus};

    const BP: SelfBleuConfig = SelfBleuConfig { brevity_penalty: true };

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(self_bleu(&["a b c", "a b c"], 1, BP).unwrap(), 1.0);
        assert_eq!(self_bleu(&["a b c", "a b c"], 2, BP).unwrap(), 1.0);
        assert_eq!(self_bleu(&["a b", "c d"], 1, BP).unwrap(), 0.0);
    }

    #[test]
    fn hand_computed_case() {
        // "a a b": unigrams a×2 (max in others 1) + b×1 → 2/3, r = 3 → bp 1.
        // "a c": a (1), c (1) → 1; closest other length 2 ("b c") → bp 1.
        // "b c": b (1), c (1) → 1, bp 1.
        let v = self_bleu(&["a a b", "a c", "b c"], 1, BP).unwrap();
        assert!((v - (2.0 / 3.0 + 1.0 + 1.0) / 3.0).abs() < 1e-12);
        // Bigrams: "a a b" has (a a), (a b); neither occurs elsewhere → 0.
        // "a c", "b c": their single bigram is unique → 0.
        assert_eq!(self_bleu(&["a a b", "a c", "b c"], 2, BP).unwrap(), 0.0);
    }

    #[test]
    fn brevity_penalty_and_short_texts() {
        // "a" against "a b c": precision 1, bp exp(1 - 3) ; the other scores 1/3.
        let v = self_bleu(&["a", "a b c"], 1, BP).unwrap();
        assert!((v - ((-2f64).exp() + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        let no_bp = self_bleu(&["a", "a b c"], 1, SelfBleuConfig { brevity_penalty: false }).unwrap();
        assert!((no_bp - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(self_bleu(&["a", "a"], 2, BP).unwrap(), 0.0);
        assert!(self_bleu(&["a"], 1, BP).is_err());
    }

    fn set(texts: &[&str]) -> CompletionSet {
        CompletionSet {
            prompt_id: "p".into(),
            prompt_text: String::new(),
            completions: texts
                .iter()
                .enumerate()
                .map(|(i, t)| Completion {
                    prompt_id: "p".into(),
                    sample_index: i,
                    status: CompletionStatus::Kept,
                    text: t.to_string(),
                    generated_token_ids: vec![],
                    logprob: 0.0,
                })
                .collect(),
            requested_n: texts.len(),
        }
    }

    #[test]
    fn unique_ratios() {
        assert_eq!(unique_ratio(&set(&["a.", "b.", "c."])).unwrap(), 1.0);
        assert_eq!(unique_ratio(&set(&["a."; 100])).unwrap(), 0.01);
        assert!(unique_ratio(&set(&[])).is_err());
    }
}
