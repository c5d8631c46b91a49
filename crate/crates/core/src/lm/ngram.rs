use std::collections::HashMap;

use thiserror::Error;

use super::{check_context, BackendDescriptor, BackendError, LanguageModel, TokenDistribution, TokenId, Vocabulary};
use crate::text::split_word;

pub const DEFAULT_ORDER: usize = 3;
pub const DEFAULT_DISCOUNT: f64 = 0.75;

pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

#[derive(Debug, Error, PartialEq)]
pub enum NgramError {
    #[error("corpus contains no tokens")]
    EmptyCorpus,
    #[error("order must be at least 1")]
    ZeroOrder,
    #[error("discount {0} outside [0, 1)")]
    Discount(f64),
}

#[derive(Debug, Clone, Default)]
struct HistoryCounts {
    total: u64,
    next: HashMap<TokenId, u64>,
}

/// Interpolated absolute-discounting n-gram model over word-level tokens.
///
/// `P_k(w|h) = max(c(h,w) - d, 0) / c(h) + d * N1+(h .) / c(h) * P_{k-1}(w|h')`,
/// bottoming out in the uniform distribution over the vocabulary. With
/// `d > 0` every token has nonzero probability in every context; with
/// `d = 0` seen histories get their maximum-likelihood estimates.
#[derive(Debug, Clone)]
pub struct NgramModel {
    descriptor: BackendDescriptor,
    order: usize,
    discount: f64,
    /// `counts[k]` maps histories of length `k` to their continuation counts.
    counts: Vec<HashMap<Vec<TokenId>, HistoryCounts>>,
}

impl NgramModel {
    /// Trains on a whitespace-separated token stream; punctuation is split
    /// off words. Line breaks are ordinary whitespace.
    pub fn train(corpus: &str, order: usize, discount: f64) -> Result<Self, NgramError> {
        if order == 0 {
            return Err(NgramError::ZeroOrder);
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(NgramError::Discount(discount));
        }
        let mut tokens: Vec<String> = Vec::new();
        let mut index: HashMap<String, TokenId> = HashMap::new();
        let mut stream = Vec::new();
        for word in corpus.split_whitespace() {
            for piece in split_word(word) {
                let id = *index.entry(piece.to_string()).or_insert_with(|| {
                    tokens.push(piece.to_string());
                    (tokens.len() - 1) as TokenId
                });
                stream.push(id);
            }
        }
        if stream.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        let vocabulary = Vocabulary::word_level(tokens, Some(UNK), EOS).expect("distinct tokens");
        let mut counts = vec![HashMap::new(); order];
        for i in 0..stream.len() {
            for (k, table) in counts.iter_mut().enumerate() {
                if k > i {
                    break;
                }
                let entry: &mut HistoryCounts = table.entry(stream[i - k..i].to_vec()).or_default();
                entry.total += 1;
                *entry.next.entry(stream[i]).or_default() += 1;
            }
        }
        Ok(NgramModel {
            descriptor: BackendDescriptor {
                name: format!("ngram{order}-d{discount}"),
                vocabulary,
                max_context: usize::MAX,
            },
            order,
            discount,
            counts,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Raw count of `next` after `history` (history length < order).
    pub fn count(&self, history: &[TokenId], next: TokenId) -> u64 {
        self.counts
            .get(history.len())
            .and_then(|t| t.get(history))
            .and_then(|h| h.next.get(&next).copied())
            .unwrap_or(0)
    }

    fn probabilities(&self, context: &[TokenId]) -> Vec<f64> {
        let v = self.descriptor.vocabulary.len();
        let mut probs = vec![1.0 / v as f64; v];
        for (k, table) in self.counts.iter().enumerate() {
            if k > context.len() {
                break;
            }
            let Some(h) = table.get(&context[context.len() - k..]) else {
                break;
            };
            let total = h.total as f64;
            let backoff = self.discount * h.next.len() as f64 / total;
            for p in probs.iter_mut() {
                *p *= backoff;
            }
            for (&w, &c) in &h.next {
                probs[w as usize] += (c as f64 - self.discount).max(0.0) / total;
            }
        }
        probs
    }
}

impl LanguageModel for NgramModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        check_context(&self.descriptor, context)?;
        let probs = self.probabilities(context);
        Ok(TokenDistribution::from_logprobs(probs.iter().map(|p| p.ln()).collect()))
    }
}
