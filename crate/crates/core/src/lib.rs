//! Probing the syntactic uncertainty of language models on temporarily
//! ambiguous sentence prefixes.
//!
//! The pipeline has five stages, each usable on its own:
//!
//! 1. [`materials`] loads ambiguity items and derives the four prompt types.
//! 2. [`decoding`] samples (or beam-searches) sentence completions from any
//!    [`lm::LanguageModel`].
//! 3. [`parses`] ingests CoNLL-U parses of those completions.
//! 4. [`classifier`] maps each parse to an interpretation of the locus.
//! 5. [`uncertainty`] turns interpretation counts into probability estimates.
//!
//! [`metrics`] holds the diversity, agreement and surprisal analyses, and
//! [`toy`] provides a small probabilistic grammar with known interpretation
//! probabilities, usable as a backend and as its own parser.

pub mod classifier;
pub mod decoding;
pub mod lm;
pub mod materials;
pub mod metrics;
pub mod parses;
pub mod pipeline;
pub mod text;
pub mod toy;
pub mod uncertainty;

pub use classifier::{ClassifierConfig, InterpretationLabel, LabeledRecord};
pub use decoding::{Completion, CompletionSet, CompletionStatus, DecodingConfig, Strategy};
pub use lm::{LanguageModel, TokenDistribution, TokenId, Vocabulary};
pub use materials::{AmbiguityItem, AmbiguityType, Prompt, PromptType, Reading};
pub use parses::{DependencyParse, ParsedToken};
pub use uncertainty::UncertaintyEstimate;
