use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::classifier::{InterpretationLabel, LabeledRecord};
use crate::materials::AmbiguityType;

pub const ANNOTATION_HEADER: &str = "prompt_id\tsample_index\tlabel\tgrammaticality";

/// Manual annotation label: the reported interpretation (`i1`), the other
/// candidate (`i2`), neither, or undecidable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotationLabel {
    I1,
    I2,
    Other,
    Unclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grammaticality {
    Wellformed,
    WellformedModuloTypos,
    Illformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub prompt_id: String,
    pub sample_index: usize,
    pub label: AnnotationLabel,
    pub grammaticality: Grammaticality,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(s: &str) -> Option<T> {
    serde_json::from_value(serde_json::Value::String(s.trim().to_ascii_lowercase())).ok()
}

/// Reads the annotation TSV (`prompt_id sample_index label grammaticality`).
pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, MetricError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == ANNOTATION_HEADER => {}
        _ => {
            return Err(MetricError::Annotation {
                line: 1,
                message: format!("expected header `{ANNOTATION_HEADER}`"),
            })
        }
    }
    let mut out = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| MetricError::Annotation { line: i + 1, message };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", cols.len())));
        }
        out.push(AnnotationRecord {
            prompt_id: cols[0].to_string(),
            sample_index: cols[1].trim().parse().map_err(|_| bad(format!("bad sample index `{}`", cols[1])))?,
            label: parse_enum(cols[2]).ok_or_else(|| bad(format!("bad label `{}`", cols[2])))?,
            grammaticality: parse_enum(cols[3]).ok_or_else(|| bad(format!("bad grammaticality `{}`", cols[3])))?,
        });
    }
    Ok(out)
}

/// The annotation-space label of an automatic classification.
pub fn annotation_label(label: InterpretationLabel, ambiguity: AmbiguityType) -> AnnotationLabel {
    let [i1, i2] = ambiguity.candidates();
    if label == i1 {
        AnnotationLabel::I1
    } else if label == i2 {
        AnnotationLabel::I2
    } else {
        AnnotationLabel::Other
    }
}

/// Share of positions where the two sequences agree.
pub fn accuracy<T: PartialEq>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::TooFew { needed: 1, got: 0 });
    }
    Ok(a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64)
}

/// Cohen's kappa; undefined when chance agreement is 1.
pub fn cohen_kappa<T: Eq + Hash>(a: &[T], b: &[T]) -> Result<f64, MetricError> {
    let p_o = accuracy(a, b)?;
    let n = a.len() as f64;
    let mut ma: HashMap<&T, usize> = HashMap::new();
    let mut mb: HashMap<&T, usize> = HashMap::new();
    for x in a {
        *ma.entry(x).or_default() += 1;
    }
    for y in b {
        *mb.entry(y).or_default() += 1;
    }
    let p_e: f64 = ma
        .iter()
        .map(|(k, &ca)| ca as f64 / n * mb.get(k).copied().unwrap_or(0) as f64 / n)
        .sum();
    if (1.0 - p_e).abs() < 1e-12 {
        return Err(MetricError::Undefined("chance agreement is 1"));
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub matched: usize,
    pub unmatched_annotations: usize,
    pub kappa: Option<f64>,
    pub accuracy: Option<f64>,
}

/// Agreement of automatic labels with manual annotations, over the
/// completions present in both.
pub fn agreement(records: &[LabeledRecord], annotations: &[AnnotationRecord], ambiguity: AmbiguityType) -> AgreementRow {
    let auto: HashMap<(&str, usize), AnnotationLabel> = records
        .iter()
        .map(|r| ((r.prompt_id.as_str(), r.sample_index), annotation_label(r.label, ambiguity)))
        .collect();
    let mut a = Vec::new();
    let mut m = Vec::new();
    for ann in annotations {
        if let Some(&l) = auto.get(&(ann.prompt_id.as_str(), ann.sample_index)) {
            a.push(l);
            m.push(ann.label);
        }
    }
    AgreementRow {
        matched: a.len(),
        unmatched_annotations: annotations.len() - a.len(),
        kappa: cohen_kappa(&a, &m).ok(),
        accuracy: accuracy(&a, &m).ok(),
    }
}

pub fn grammaticality_counts(annotations: &[AnnotationRecord]) -> BTreeMap<Grammaticality, usize> {
    let mut counts = BTreeMap::new();
    for a in annotations {
        *counts.entry(a.grammaticality).or_default() += 1;
    }
    counts
}
