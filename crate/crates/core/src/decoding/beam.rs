use std::cmp::Ordering;

use super::{crop_to_sentence, finish, Completion, CompletionStatus, DecodeError, DecodingConfig, EncodedPrompt};
use crate::lm::{penalize_token, LanguageModel, TokenId};

#[derive(Debug, Clone)]
struct Hypothesis {
    tokens: Vec<TokenId>,
    /// Log-probability under the penalized distribution; the ranking key.
    score: f64,
    /// Log-probability under the raw model.
    logprob: f64,
    text: String,
}

/// Higher score first, then lexicographically smaller token ids.
fn rank(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.tokens.cmp(&b.tokens))
}

/// Deterministic beam search. Hypotheses are ranked by model log-probability
/// after the optional token penalty.
///
/// A hypothesis is finished when it emits end-of-sequence, when its
/// continuation contains a complete sentence, or when its first token extends
/// the prompt's last word. Finished hypotheses are all kept; the live beam is
/// cut to `beam_size` after every step. The best finished hypothesis wins.
/// If none finishes within the budget, the best live one is returned as
/// [`CompletionStatus::DiscardedNoBoundary`].
pub fn beam_search(
    backend: &dyn LanguageModel,
    prompt: &EncodedPrompt,
    config: &DecodingConfig,
) -> Result<Completion, DecodeError> {
    config.validate()?;
    let vocab = backend.vocabulary();
    let mut alive = vec![Hypothesis {
        tokens: Vec::new(),
        score: 0.0,
        logprob: 0.0,
        text: prompt.text.clone(),
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let mut context = prompt.tokens.clone();

    for _ in 0..config.token_budget {
        // Scores never increase along a hypothesis, so nothing alive can beat
        // a finished hypothesis that already scores at least as high.
        let best_alive = alive.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        let best_done = finished.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        if alive.is_empty() || best_done > best_alive {
            break;
        }
        let mut candidates = Vec::new();
        for h in &alive {
            context.truncate(prompt.tokens.len());
            context.extend_from_slice(&h.tokens);
            let raw = backend.next_distribution(&context)?;
            let ranked = match config.unk_penalty {
                Some((token, factor)) => penalize_token(&raw, token, factor),
                None => raw.clone(),
            };
            for (i, &lp) in ranked.logprobs().iter().enumerate() {
                if lp == f64::NEG_INFINITY {
                    continue;
                }
                let token = i as TokenId;
                let mut tokens = h.tokens.clone();
                tokens.push(token);
                let mut text = h.text.clone();
                vocab.render_onto(&mut text, &[token]);
                let next = Hypothesis {
                    tokens,
                    score: h.score + lp,
                    logprob: h.logprob + raw.logprobs()[i],
                    text,
                };
                let done = token == vocab.eos_id()
                    || (h.tokens.is_empty() && vocab.is_continuation(token))
                    || crop_to_sentence(&next.text, prompt.text.len()).1;
                if done {
                    finished.push(next);
                } else {
                    candidates.push(next);
                }
            }
        }
        candidates.sort_by(rank);
        candidates.truncate(config.beam_size);
        alive = candidates;
    }

    finished.sort_by(rank);
    alive.sort_by(rank);
    let (best, finished_ok) = match (finished.into_iter().next(), alive.into_iter().next()) {
        (Some(f), _) => (f, true),
        (None, Some(a)) => (a, false),
        (None, None) => unreachable!("the first step always yields a candidate"),
    };
    let mut completion = finish(vocab, prompt, 0, best.tokens, best.logprob);
    if !finished_ok {
        completion.status = CompletionStatus::DiscardedNoBoundary;
    }
    Ok(completion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{BackendDescriptor, BackendError, TokenDistribution, Vocabulary};

    /// Fixed next-token table keyed by the last token.
    struct Table {
        descriptor: BackendDescriptor,
        rows: Vec<Vec<f64>>,
    }

    impl LanguageModel for Table {
        fn descriptor(&self) -> &BackendDescriptor {
            &self.descriptor
        }
        fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
            Ok(TokenDistribution::from_probs(&self.rows[*context.last().unwrap() as usize]))
        }
    }

    fn table(rows: Vec<Vec<f64>>) -> Table {
        // ids: 0 a, 1 b, 2 ., 3 </s>
        let vocab = Vocabulary::word_level(vec!["a".into(), "b".into(), ".".into()], None, "</s>").unwrap();
        Table {
            descriptor: BackendDescriptor { name: "table".into(), vocabulary: vocab, max_context: 64 },
            rows,
        }
    }

    #[test]
    fn prefers_higher_sequence_probability_over_greedy() {
        // Greedy picks `a` (0.6) but then must continue at 0.5 to a boundary;
        // `b` (0.4) goes to `.` with certainty.
        let model = table(vec![
            vec![0.0, 0.0, 0.5, 0.5],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.6, 0.4, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
        ]);
        let prompt = EncodedPrompt { id: "p".into(), text: ".".into(), tokens: vec![2] };
        let config = DecodingConfig::default().beam(4);
        let c = beam_search(&model, &prompt, &config).unwrap();
        assert_eq!(c.generated_token_ids, vec![1, 2]);
        assert_eq!(c.status, CompletionStatus::Kept);
        assert!((c.logprob - 0.4f64.ln()).abs() < 1e-12);
        assert_eq!(c.text, ". b.");
    }

    #[test]
    fn ties_break_on_token_ids() {
        let model = table(vec![vec![0.0, 0.0, 0.5, 0.5]; 4]);
        let prompt = EncodedPrompt { id: "p".into(), text: "a".into(), tokens: vec![0] };
        let c = beam_search(&model, &prompt, &DecodingConfig::default().beam(2)).unwrap();
        assert_eq!(c.generated_token_ids, vec![2]);
    }

    #[test]
    fn no_boundary_within_budget() {
        let model = table(vec![vec![0.7, 0.3, 0.0, 0.0]; 4]);
        let prompt = EncodedPrompt { id: "p".into(), text: "a".into(), tokens: vec![0] };
        let mut config = DecodingConfig::default().beam(3);
        config.token_budget = 4;
        let c = beam_search(&model, &prompt, &config).unwrap();
        assert_eq!(c.status, CompletionStatus::DiscardedNoBoundary);
        assert_eq!(c.generated_token_ids, vec![0, 0, 0, 0]);
    }
}
