//! Language-model backends behind a single next-token contract.

mod ngram;
#[cfg(feature = "remote")]
pub mod protocol;
#[cfg(feature = "remote")]
mod remote;
#[cfg(feature = "remote")]
pub mod server;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ngram::{NgramError, NgramModel, DEFAULT_DISCOUNT, DEFAULT_ORDER};
#[cfg(feature = "remote")]
pub use remote::{RemoteBackend, RemoteConfig};
pub use vocab::{TokenizerKind, Tokenization, Vocabulary};

pub type TokenId = u32;

/// Tolerance on the total probability mass of a distribution.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("empty context")]
    EmptyContext,
    #[error("context of {len} tokens exceeds the backend maximum of {max}")]
    ContextTooLong { len: usize, max: usize },
    #[error("token id {0} is outside the vocabulary")]
    UnknownTokenId(TokenId),
    #[error("cannot tokenize `{0}`")]
    Tokenize(String),
    #[error("word {word} cannot be aligned to a token span of `{sentence}`")]
    WordAlignment { sentence: String, word: usize },
    #[error("sequence needs at least {0} tokens")]
    SequenceTooShort(usize),
    #[error("remote backend failed after {attempts} attempts: {message}")]
    Remote { attempts: usize, message: String },
    #[error("protocol violation: {0}")]
    Protocol(String),
}

/// Log-probabilities (natural log) over the whole vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenDistribution {
    logprobs: Vec<f64>,
}

impl TokenDistribution {
    /// Wraps log-probabilities that already normalize.
    pub fn from_logprobs(logprobs: Vec<f64>) -> Self {
        debug_assert!(logprobs.iter().all(|l| !l.is_nan() && *l != f64::INFINITY));
        TokenDistribution { logprobs }
    }

    /// Softmax over arbitrary scores; `-inf` scores get probability zero.
    pub fn from_scores(scores: &[f64]) -> Self {
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Self::uniform(scores.len());
        }
        let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
        TokenDistribution {
            logprobs: scores.iter().map(|s| s - lse).collect(),
        }
    }

    pub fn from_probs(probs: &[f64]) -> Self {
        let scores: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        Self::from_scores(&scores)
    }

    pub fn uniform(size: usize) -> Self {
        let lp = -(size as f64).ln();
        TokenDistribution { logprobs: vec![lp; size] }
    }

    pub fn logprobs(&self) -> &[f64] {
        &self.logprobs
    }

    pub fn into_logprobs(self) -> Vec<f64> {
        self.logprobs
    }

    pub fn probs(&self) -> Vec<f64> {
        self.logprobs.iter().map(|l| l.exp()).collect()
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.logprobs[token as usize].exp()
    }

    pub fn len(&self) -> usize {
        self.logprobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logprobs.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.logprobs.iter().map(|l| l.exp()).sum()
    }

    pub fn is_normalized(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= NORMALIZATION_TOLERANCE
    }

    /// Entropy in nats.
    pub fn entropy(&self) -> f64 {
        self.logprobs
            .iter()
            .filter(|l| l.is_finite())
            .map(|l| -l.exp() * l)
            .sum()
    }

    /// Index of the most probable token, lowest index on ties.
    pub fn argmax(&self) -> TokenId {
        let mut best = 0;
        for (i, l) in self.logprobs.iter().enumerate() {
            if *l > self.logprobs[best] {
                best = i;
            }
        }
        best as TokenId
    }
}

/// Divides the probability of `token` by `factor` and renormalizes.
pub fn penalize_token(dist: &TokenDistribution, token: TokenId, factor: f64) -> TokenDistribution {
    assert!(factor >= 1.0, "penalty factor must be at least 1");
    if factor == 1.0 {
        return dist.clone();
    }
    let mut scores = dist.logprobs.clone();
    scores[token as usize] -= factor.ln();
    TokenDistribution::from_scores(&scores)
}

/// What a backend is: its name, vocabulary and context limit.
#[derive(Debug, Clone)]
pub struct BackendDescriptor {
    pub name: String,
    pub vocabulary: Vocabulary,
    pub max_context: usize,
}

/// A source of next-token distributions.
///
/// Implementations must be deterministic for a fixed state and return
/// distributions that normalize within [`NORMALIZATION_TOLERANCE`].
pub trait LanguageModel: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// `P(next | context)` for a non-empty context.
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError>;

    fn vocabulary(&self) -> &Vocabulary {
        &self.descriptor().vocabulary
    }

    fn tokenize(&self, text: &str) -> Result<Tokenization, BackendError> {
        self.vocabulary().tokenize(text)
    }

    /// Natural-log probability of each token given its prefix; the first
    /// token has no entry.
    fn score_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        if tokens.len() < 2 {
            return Err(BackendError::SequenceTooShort(2));
        }
        (1..tokens.len())
            .map(|i| {
                let dist = self.next_distribution(&tokens[..i])?;
                let id = tokens[i] as usize;
                dist.logprobs()
                    .get(id)
                    .copied()
                    .ok_or(BackendError::UnknownTokenId(tokens[i]))
            })
            .collect()
    }

    /// Per-token surprisal in bits; entry `i` belongs to `tokens[i + 1]`.
    fn score_sequence(&self, tokens: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        Ok(self
            .score_logprobs(tokens)?
            .into_iter()
            .map(|lp| -lp / std::f64::consts::LN_2)
            .collect())
    }

    /// Surprisal in bits of one whitespace word of `sentence`, summed over
    /// the tokens that make it up.
    fn word_surprisal(&self, sentence: &str, word_index: usize) -> Result<f64, BackendError> {
        let tokenization = self.tokenize(sentence)?;
        let misaligned = || BackendError::WordAlignment {
            sentence: sentence.to_string(),
            word: word_index,
        };
        let &(start, end) = tokenization.word_spans.get(word_index).ok_or_else(misaligned)?;
        if start == 0 || end <= start || end > tokenization.ids.len() {
            return Err(misaligned());
        }
        let surprisals = self.score_sequence(&tokenization.ids[..end])?;
        Ok(surprisals[start - 1..end - 1].iter().sum())
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for &T {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        (**self).next_distribution(context)
    }
    fn tokenize(&self, text: &str) -> Result<Tokenization, BackendError> {
        (**self).tokenize(text)
    }
    fn score_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        (**self).score_logprobs(tokens)
    }
}

impl<T: LanguageModel + ?Sized> LanguageModel for Box<T> {
    fn descriptor(&self) -> &BackendDescriptor {
        (**self).descriptor()
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        (**self).next_distribution(context)
    }
    fn tokenize(&self, text: &str) -> Result<Tokenization, BackendError> {
        (**self).tokenize(text)
    }
    fn score_logprobs(&self, tokens: &[TokenId]) -> Result<Vec<f64>, BackendError> {
        (**self).score_logprobs(tokens)
    }
}

/// Checks the shared preconditions of [`LanguageModel::next_distribution`].
pub fn check_context(descriptor: &BackendDescriptor, context: &[TokenId]) -> Result<(), BackendError> {
    if context.is_empty() {
        return Err(BackendError::EmptyContext);
    }
    if context.len() > descriptor.max_context {
        return Err(BackendError::ContextTooLong {
            len: context.len(),
            max: descriptor.max_context,
        });
    }
    let size = descriptor.vocabulary.len() as TokenId;
    if let Some(&bad) = context.iter().find(|&&t| t >= size) {
        return Err(BackendError::UnknownTokenId(bad));
    }
    Ok(())
}

/// A backend that ignores its context and returns a uniform distribution.
#[derive(Debug, Clone)]
pub struct UniformModel {
    descriptor: BackendDescriptor,
}

impl UniformModel {
    pub fn new(vocabulary: Vocabulary) -> Self {
        UniformModel {
            descriptor: BackendDescriptor {
                name: "uniform".into(),
                vocabulary,
                max_context: usize::MAX,
            },
        }
    }
}

impl LanguageModel for UniformModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        check_context(&self.descriptor, context)?;
        Ok(TokenDistribution::uniform(self.descriptor.vocabulary.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::word_level(words.iter().map(|s| s.to_string()).collect(), None, "</s>").unwrap()
    }

    #[test]
    fn uniform_backend_logprobs() {
        let v = vocab(&["a", "b", "c"]);
        let size = v.len();
        let m = UniformModel::new(v);
        let d = m.next_distribution(&[0, 1]).unwrap();
        assert!(d.logprobs().iter().all(|&l| l == -(size as f64).ln()));
        assert!(matches!(m.next_distribution(&[]), Err(BackendError::EmptyContext)));
    }

    #[test]
    fn penalty_identity_and_renormalization() {
        let d = TokenDistribution::uniform(4);
        assert_eq!(penalize_token(&d, 2, 1.0), d);
        let p = penalize_token(&d, 0, 1e16);
        let probs = p.probs();
        // closed form: 0.25 / (0.75 + 0.25e-16) for the others
        let expected_other = 0.25 / (0.75 + 0.25e-16);
        for &q in &probs[1..] {
            assert!((q - expected_other).abs() < 1e-12);
            assert!((q - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(probs[0] < 1e-16);
        assert!(p.is_normalized());
    }

    #[test]
    fn penalty_monotone() {
        let d = TokenDistribution::from_probs(&[0.1, 0.6, 0.3, 0.0]);
        for t in 0..3 {
            assert!(penalize_token(&d, t, 3.0).prob(t) < d.prob(t));
        }
        assert_eq!(penalize_token(&d, 3, 3.0).prob(3), 0.0);
    }

    #[test]
    fn score_sequence_half_probabilities() {
        let v = vocab(&["a"]);
        // vocab is {a, </s>}: uniform gives 1/2 each step
        let m = UniformModel::new(v);
        let s = m.score_sequence(&[0, 1, 0]).unwrap();
        assert_eq!(s, vec![1.0, 1.0]);
        assert!(matches!(m.score_sequence(&[0]), Err(BackendError::SequenceTooShort(2))));
    }
}
