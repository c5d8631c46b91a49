//! In-memory versions of the stages, chained the same way the command-line
//! tool chains files.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::classifier::{classify_one, discard_report, BatchResult, ClassifierConfig, DiscardReason, LabeledRecord};
use crate::decoding::{generate, prompt_seed, CompletionSet, CompletionStatus, DecodeError, DecodingConfig, EncodedPrompt};
use crate::lm::LanguageModel;
use crate::materials::{derive_all_prompts, AmbiguityItem, AmbiguityType, Prompt, PromptType, Reading};
use crate::parses::DependencyParse;
use crate::toy::ToyGrammar;
use crate::uncertainty::{estimate_all, EstimateError, EstimateRow};

/// Identifies a run in every table it produces.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub seed: u64,
    pub backend: String,
    pub decoding: String,
}

/// Generates completions for every prompt, in prompt order. Each prompt
/// samples with its own seed, derived from the configured one and its id.
pub fn generate_all(
    backend: &dyn LanguageModel,
    prompts: &[Prompt],
    config: &DecodingConfig,
) -> Result<Vec<CompletionSet>, DecodeError> {
    prompts
        .iter()
        .map(|p| {
            let encoded = EncodedPrompt::new(backend, p.id(), p.text.clone())?;
            let config = DecodingConfig { seed: prompt_seed(config.seed, &encoded.id), ..config.clone() };
            generate(backend, &encoded, &config)
        })
        .collect()
}

/// Labels every completion: generation discards keep their reason, kept
/// completions are classified from their parse (sentence id
/// `prompt_id/sample_index`), and kept completions without a parse are
/// discarded as unparsed.
pub fn label_completions(
    sets: &[CompletionSet],
    parses: &[DependencyParse],
    prompts: &[Prompt],
    ambiguity: AmbiguityType,
    config: &ClassifierConfig,
) -> BatchResult {
    let by_id: HashMap<&str, &DependencyParse> = parses.iter().map(|p| (p.sentence_id.as_str(), p)).collect();
    let prompt_by_id: HashMap<String, &Prompt> = prompts.iter().map(|p| (p.id(), p)).collect();
    let mut records = Vec::new();
    for set in sets {
        for c in &set.completions {
            let record = match c.status {
                CompletionStatus::DiscardedNoBoundary => {
                    LabeledRecord::discarded(&c.prompt_id, c.sample_index, DiscardReason::NoBoundary)
                }
                CompletionStatus::DiscardedSubwordExtension => {
                    LabeledRecord::discarded(&c.prompt_id, c.sample_index, DiscardReason::SubwordExtension)
                }
                CompletionStatus::Kept => {
                    let key = format!("{}/{}", c.prompt_id, c.sample_index);
                    match (by_id.get(key.as_str()), prompt_by_id.get(&c.prompt_id)) {
                        (Some(parse), Some(prompt)) => classify_one(parse, prompt, ambiguity, config, c.sample_index),
                        (_, None) => LabeledRecord::discarded(&c.prompt_id, c.sample_index, DiscardReason::UnknownPrompt),
                        (None, _) => LabeledRecord::discarded(&c.prompt_id, c.sample_index, DiscardReason::Unparsed),
                    }
                }
            };
            records.push(record);
        }
    }
    let discards = discard_report(&records, prompts);
    BatchResult { records, discards }
}

/// Per-prompt estimate rows. Prompts whose completions were all discarded
/// are returned separately.
pub fn estimate_rows(
    records: &[LabeledRecord],
    prompts: &[Prompt],
    items: &[AmbiguityItem],
    ambiguity: AmbiguityType,
    meta: &RunMeta,
) -> (Vec<EstimateRow>, Vec<EstimateError>) {
    let prompt_by_id: HashMap<String, &Prompt> = prompts.iter().map(|p| (p.id(), p)).collect();
    let item_by_id: HashMap<&str, &AmbiguityItem> = items.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for result in estimate_all(records, ambiguity) {
        let e = match result {
            Ok(e) => e,
            Err(err) => {
                log::warn!("{err}");
                errors.push(err);
                continue;
            }
        };
        let prompt = prompt_by_id.get(&e.prompt_id);
        let (prompt_type, item_id) = match prompt {
            Some(p) => (p.prompt_type, p.item_id.clone()),
            None => (PromptType::NoCue, e.prompt_id.clone()),
        };
        let reading = match item_by_id.get(item_id.as_str()) {
            Some(i) if ambiguity == AmbiguityType::NounVerb && prompt_type != PromptType::NoCue => match i.reading {
                Reading::Noun => "noun",
                Reading::Verb => "verb",
                Reading::None => "",
            },
            _ => "",
        };
        let target = ambiguity.target_label();
        let (lo, hi) = e.target_ci();
        rows.push(EstimateRow {
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            backend: meta.backend.clone(),
            decoding: meta.decoding.clone(),
            ambiguity,
            prompt_type: prompt_type.to_string(),
            reading: reading.to_string(),
            item_id,
            prompt_id: e.prompt_id.clone(),
            target_label: target,
            classified: e.classified(),
            discards: e.discards,
            target_count: e.counts[&target],
            p_hat: e.target(),
            ci_lo: lo,
            ci_hi: hi,
        });
    }
    (rows, errors)
}

/// Everything one in-memory run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub prompts: Vec<Prompt>,
    pub sets: Vec<CompletionSet>,
    pub batch: BatchResult,
    pub rows: Vec<EstimateRow>,
    pub all_discarded: Vec<EstimateError>,
}

/// Generates, parses with the grammar, classifies and estimates every prompt
/// of `items` against the toy grammar.
pub fn run_toy(
    grammar: &ToyGrammar,
    items: &[AmbiguityItem],
    ambiguity: AmbiguityType,
    decoding: &DecodingConfig,
    classifier: &ClassifierConfig,
) -> Result<RunOutput, DecodeError> {
    let items: Vec<AmbiguityItem> = items.iter().filter(|i| i.ambiguity == ambiguity).cloned().collect();
    let prompts = derive_all_prompts(&items);
    let sets = generate_all(grammar.model(), &prompts, decoding)?;
    let (parses, _) = grammar.parse_completions(&sets);
    let batch = label_completions(&sets, &parses, &prompts, ambiguity, classifier);
    let meta = RunMeta {
        config_hash: String::new(),
        seed: decoding.seed,
        backend: grammar.model().descriptor().name.clone(),
        decoding: decoding.slug(),
    };
    let (rows, all_discarded) = estimate_rows(&batch.records, &prompts, &items, ambiguity, &meta);
    Ok(RunOutput {
        prompts,
        sets,
        batch,
        rows,
        all_discarded,
    })
}
