//! Diversity, agreement and correlation analyses.

mod agreement;
mod correlation;
mod diversity;
mod surprisal;

use thiserror::Error;

pub use agreement::{
    accuracy, agreement, annotation_label, cohen_kappa, grammaticality_counts, parse_annotations, AgreementRow,
    AnnotationLabel, AnnotationRecord, Grammaticality, ANNOTATION_HEADER,
};
pub use correlation::{average_ranks, pearson, spearman};
pub use diversity::{self_bleu, unique_ratio, SelfBleuConfig};
pub use surprisal::{surprisal_gp_analysis, SurprisalAnalysis, SurprisalRow};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("inputs have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("undefined: {0}")]
    Undefined(&'static str),
    #[error("annotation line {line}: {message}")]
    Annotation { line: usize, message: String },
}
