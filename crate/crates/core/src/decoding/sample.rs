use rand_chacha::rand_core::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{crop_to_sentence, finish, transform_distribution, Completion, CompletionSet, DecodeError, DecodingConfig, EncodedPrompt};
use crate::lm::{LanguageModel, TokenDistribution, TokenId};

/// Top-up stops after this many draws per requested completion.
const TOP_UP_LIMIT: usize = 10;

/// Uniform draw in `[0, 1)` with 53 bits of precision.
pub fn uniform01<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// The generator for one sample. Each sample index has its own stream, so
/// results do not depend on how samples are scheduled.
pub fn sample_index_rng(seed: u64, sample_index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(sample_index as u64))
}

/// Seed for one prompt's completion set, so different prompts draw from
/// unrelated streams. FNV-1a of the id keeps it stable across platforms and
/// toolchains.
pub fn prompt_seed(seed: u64, prompt_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in prompt_id.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    seed ^ h
}

/// Inverse-CDF lookup in token-index order. Zero-probability tokens are never
/// returned; if rounding leaves `u` past the total mass, the last token with
/// positive probability is used.
pub fn sample_token(dist: &TokenDistribution, u: f64) -> TokenId {
    let mut cumulative = 0.0;
    let mut last = 0;
    for (i, lp) in dist.logprobs().iter().enumerate() {
        if *lp == f64::NEG_INFINITY {
            continue;
        }
        cumulative += lp.exp();
        last = i;
        if u < cumulative {
            return i as TokenId;
        }
    }
    last as TokenId
}

/// Draws one completion. Generation stops at end-of-sequence, at the token
/// budget, as soon as the continuation contains a complete sentence, or
/// right away when the first token would extend the prompt's last word.
pub fn sample_completion(
    backend: &dyn LanguageModel,
    prompt: &EncodedPrompt,
    config: &DecodingConfig,
    sample_index: usize,
) -> Result<Completion, DecodeError> {
    let vocab = backend.vocabulary();
    let mut rng = sample_index_rng(config.seed, sample_index);
    let mut context = prompt.tokens.clone();
    let mut generated = Vec::new();
    let mut logprob = 0.0;
    let mut text = prompt.text.clone();
    while generated.len() < config.token_budget {
        let raw = backend.next_distribution(&context)?;
        let dist = transform_distribution(&raw, config)?;
        let token = sample_token(&dist, uniform01(&mut rng));
        logprob += raw.logprobs()[token as usize];
        context.push(token);
        generated.push(token);
        if token == vocab.eos_id() || (generated.len() == 1 && vocab.is_continuation(token)) {
            break;
        }
        vocab.render_onto(&mut text, &[token]);
        if crop_to_sentence(&text, prompt.text.len()).1 {
            break;
        }
    }
    Ok(finish(vocab, prompt, sample_index, generated, logprob))
}

fn draw(
    backend: &dyn LanguageModel,
    prompt: &EncodedPrompt,
    config: &DecodingConfig,
    indices: std::ops::Range<usize>,
) -> Result<Vec<Completion>, DecodeError> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        indices
            .into_par_iter()
            .map(|i| sample_completion(backend, prompt, config, i))
            .collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        indices.map(|i| sample_completion(backend, prompt, config, i)).collect()
    }
}

/// Draws `config.samples` completions in sample-index order. With
/// `config.top_up`, further indices are drawn until that many are kept or
/// ten times as many draws have been made.
pub fn sample_set(
    backend: &dyn LanguageModel,
    prompt: &EncodedPrompt,
    config: &DecodingConfig,
) -> Result<CompletionSet, DecodeError> {
    config.validate()?;
    let n = config.samples;
    let mut completions = draw(backend, prompt, config, 0..n)?;
    if config.top_up {
        let limit = n.saturating_mul(TOP_UP_LIMIT);
        loop {
            let kept = completions.iter().filter(|c| c.is_kept()).count();
            let next = completions.len();
            if kept >= n || next >= limit {
                break;
            }
            let end = (next + n - kept).min(limit);
            completions.extend(draw(backend, prompt, config, next..end)?);
        }
    }
    Ok(CompletionSet {
        prompt_id: prompt.id.clone(),
        prompt_text: prompt.text.clone(),
        completions,
        requested_n: n,
    })
}
