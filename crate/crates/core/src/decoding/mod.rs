//! Turning a backend and a prompt into sentence completions.

mod beam;
mod crop;
mod sample;
mod transform;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lm::{BackendError, LanguageModel, TokenId, TokenizerKind, Vocabulary};

pub use beam::beam_search;
pub use crop::crop_to_sentence;
pub use sample::{prompt_seed, sample_completion, sample_index_rng, sample_set, sample_token, uniform01};
pub use transform::{apply_nucleus, apply_temperature, transform_distribution};

/// Default number of completions per prompt.
pub const DEFAULT_SAMPLES: usize = 100;
pub const WORD_LEVEL_BUDGET: usize = 30;
pub const SUBWORD_BUDGET: usize = 50;
pub const DEFAULT_BEAM_SIZE: usize = 16;
/// Divisor applied to the unknown-word probability of word-level models.
pub const UNK_PENALTY: f64 = 1e16;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("temperature must be positive and finite, got {0}")]
    Temperature(f64),
    #[error("invalid decoding config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    Sample,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub strategy: Strategy,
    /// Nucleus mass in (0, 1]; 1 disables truncation.
    pub nucleus_p: f64,
    /// Temperature > 0; 1 leaves scores unchanged.
    pub temperature: f64,
    pub beam_size: usize,
    pub token_budget: usize,
    pub seed: u64,
    /// Token whose probability is divided by the factor before sampling.
    pub unk_penalty: Option<(TokenId, f64)>,
    pub samples: usize,
    /// Re-sample to replace discarded completions.
    pub top_up: bool,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        DecodingConfig {
            strategy: Strategy::Sample,
            nucleus_p: 1.0,
            temperature: 1.0,
            beam_size: DEFAULT_BEAM_SIZE,
            token_budget: WORD_LEVEL_BUDGET,
            seed: 0,
            unk_penalty: None,
            samples: DEFAULT_SAMPLES,
            top_up: false,
        }
    }
}

impl DecodingConfig {
    /// Pure sampling with the budget and unknown-word penalty suited to the
    /// vocabulary: 30 tokens and a 1e16 penalty on `<unk>` for word-level
    /// models, 50 tokens and no penalty for subword models.
    pub fn for_vocabulary(vocab: &Vocabulary) -> Self {
        match vocab.kind() {
            TokenizerKind::WordLevel => DecodingConfig {
                token_budget: WORD_LEVEL_BUDGET,
                unk_penalty: vocab.unk_id().map(|u| (u, UNK_PENALTY)),
                ..Default::default()
            },
            TokenizerKind::Subword => DecodingConfig {
                token_budget: SUBWORD_BUDGET,
                ..Default::default()
            },
        }
    }

    pub fn nucleus(mut self, p: f64) -> Self {
        self.nucleus_p = p;
        self
    }

    pub fn temperature(mut self, t: f64) -> Self {
        self.temperature = t;
        self
    }

    pub fn beam(mut self, size: usize) -> Self {
        self.strategy = Strategy::Beam;
        self.beam_size = size;
        self
    }

    pub fn validate(&self) -> Result<(), DecodeError> {
        if !(self.nucleus_p > 0.0 && self.nucleus_p <= 1.0) {
            return Err(DecodeError::Config(format!("nucleus p {} outside (0, 1]", self.nucleus_p)));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(DecodeError::Temperature(self.temperature));
        }
        if self.beam_size == 0 || self.token_budget == 0 || self.samples == 0 {
            return Err(DecodeError::Config("beam size, budget and sample count must be positive".into()));
        }
        if let Some((_, f)) = self.unk_penalty {
            if f.is_nan() || f < 1.0 {
                return Err(DecodeError::Config(format!("penalty factor {f} below 1")));
            }
        }
        Ok(())
    }

    /// Short label used in file names and report rows, e.g. `p0.9_t1` or `beam16`.
    pub fn slug(&self) -> String {
        match self.strategy {
            Strategy::Sample => format!("p{}_t{}", self.nucleus_p, self.temperature),
            Strategy::Beam => format!("beam{}", self.beam_size),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompletionStatus {
    Kept,
    DiscardedSubwordExtension,
    DiscardedNoBoundary,
}

/// One generated continuation, cropped to its first sentence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub prompt_id: String,
    pub sample_index: usize,
    pub status: CompletionStatus,
    /// Prompt text followed by the rendered continuation.
    pub text: String,
    pub generated_token_ids: Vec<TokenId>,
    /// Natural-log probability of the generated tokens under the raw model.
    pub logprob: f64,
}

impl Completion {
    pub fn is_kept(&self) -> bool {
        self.status == CompletionStatus::Kept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSet {
    pub prompt_id: String,
    pub prompt_text: String,
    pub completions: Vec<Completion>,
    pub requested_n: usize,
}

impl CompletionSet {
    pub fn kept(&self) -> impl Iterator<Item = &Completion> {
        self.completions.iter().filter(|c| c.is_kept())
    }

    /// Kept continuations with the prompt removed.
    pub fn kept_continuations(&self) -> Vec<&str> {
        self.kept()
            .map(|c| c.text.get(self.prompt_text.len()..).unwrap_or(""))
            .collect()
    }
}

/// A prompt tokenized for one backend.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedPrompt {
    pub id: String,
    pub text: String,
    pub tokens: Vec<TokenId>,
}

impl EncodedPrompt {
    pub fn new(backend: &dyn LanguageModel, id: impl Into<String>, text: impl Into<String>) -> Result<Self, BackendError> {
        let text = text.into();
        let tokens = backend.tokenize(&text)?.ids;
        if tokens.is_empty() {
            return Err(BackendError::EmptyContext);
        }
        Ok(EncodedPrompt { id: id.into(), text, tokens })
    }
}

/// Runs the configured strategy: `samples` draws, or a single beam result.
pub fn generate(
    backend: &dyn LanguageModel,
    prompt: &EncodedPrompt,
    config: &DecodingConfig,
) -> Result<CompletionSet, DecodeError> {
    match config.strategy {
        Strategy::Sample => sample_set(backend, prompt, config),
        Strategy::Beam => Ok(CompletionSet {
            prompt_id: prompt.id.clone(),
            prompt_text: prompt.text.clone(),
            completions: vec![beam_search(backend, prompt, config)?],
            requested_n: 1,
        }),
    }
}

/// Final text and status of a continuation.
pub(crate) fn finish(
    vocab: &Vocabulary,
    prompt: &EncodedPrompt,
    sample_index: usize,
    generated: Vec<TokenId>,
    logprob: f64,
) -> Completion {
    let mut text = prompt.text.clone();
    vocab.render_onto(&mut text, &generated);
    let extends_word = generated.first().is_some_and(|&t| vocab.is_continuation(t));
    let (cropped, found) = crop_to_sentence(&text, prompt.text.len());
    let status = if extends_word {
        CompletionStatus::DiscardedSubwordExtension
    } else if found {
        CompletionStatus::Kept
    } else {
        CompletionStatus::DiscardedNoBoundary
    };
    Completion {
        prompt_id: prompt.id.clone(),
        sample_index,
        status,
        text: cropped,
        generated_token_ids: generated,
        logprob,
    }
}
