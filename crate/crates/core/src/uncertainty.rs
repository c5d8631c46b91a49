//! Interpretation probabilities from labeled samples, and their summaries.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{InterpretationLabel, LabeledRecord};
use crate::materials::AmbiguityType;

/// Two-sided 95% standard normal quantile.
pub const Z95: f64 = 1.959963984540054;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EstimateError {
    #[error("no records")]
    Empty,
    #[error("all {total} completions of prompt {prompt_id} were discarded")]
    AllDiscarded { prompt_id: String, total: usize },
    #[error("records mix prompts {0} and {1}")]
    MixedPrompts(String, String),
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    let lo = (center - half).max(0.0).min(p);
    let hi = (center + half).min(1.0).max(p);
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyEstimate {
    pub prompt_id: String,
    pub ambiguity: AmbiguityType,
    /// Counts of the two candidate labels among kept records.
    pub counts: BTreeMap<InterpretationLabel, usize>,
    pub discards: usize,
    pub p_hat: BTreeMap<InterpretationLabel, f64>,
    pub ci95: BTreeMap<InterpretationLabel, (f64, f64)>,
}

impl UncertaintyEstimate {
    /// Records that entered the denominator.
    pub fn classified(&self) -> usize {
        self.counts.values().sum()
    }

    /// Probability of the reported interpretation (S, Z or Verb).
    pub fn target(&self) -> f64 {
        self.p_hat[&self.ambiguity.target_label()]
    }

    pub fn target_ci(&self) -> (f64, f64) {
        self.ci95[&self.ambiguity.target_label()]
    }
}

/// Relative frequencies of the two candidate interpretations among the
/// records of one prompt. Discarded records, and records whose label is not
/// a candidate for `ambiguity`, are left out of the denominator.
pub fn estimate(records: &[LabeledRecord], ambiguity: AmbiguityType) -> Result<UncertaintyEstimate, EstimateError> {
    let first = records.first().ok_or(EstimateError::Empty)?;
    if let Some(r) = records.iter().find(|r| r.prompt_id != first.prompt_id) {
        return Err(EstimateError::MixedPrompts(first.prompt_id.clone(), r.prompt_id.clone()));
    }
    let [a, b] = ambiguity.candidates();
    let mut counts = BTreeMap::from([(a, 0), (b, 0)]);
    let mut discards = 0;
    for r in records {
        match counts.get_mut(&r.label) {
            Some(c) if !r.discarded => *c += 1,
            _ => discards += 1,
        }
    }
    let n = counts[&a] + counts[&b];
    if n == 0 {
        return Err(EstimateError::AllDiscarded {
            prompt_id: first.prompt_id.clone(),
            total: records.len(),
        });
    }
    let pa = counts[&a] as f64 / n as f64;
    let p_hat = BTreeMap::from([(a, pa), (b, 1.0 - pa)]);
    let ci95 = BTreeMap::from([(a, wilson_interval(counts[&a], n, Z95)), (b, wilson_interval(counts[&b], n, Z95))]);
    Ok(UncertaintyEstimate {
        prompt_id: first.prompt_id.clone(),
        ambiguity,
        counts,
        discards,
        p_hat,
        ci95,
    })
}

/// Groups records by prompt id (in first-seen order) and estimates each.
/// Prompts whose records are all discarded come back as errors.
pub fn estimate_all(records: &[LabeledRecord], ambiguity: AmbiguityType) -> Vec<Result<UncertaintyEstimate, EstimateError>> {
    let mut order: Vec<&str> = Vec::new();
    let mut groups: BTreeMap<&str, Vec<LabeledRecord>> = BTreeMap::new();
    for r in records {
        let g = groups.entry(&r.prompt_id).or_default();
        if g.is_empty() {
            order.push(&r.prompt_id);
        }
        g.push(r.clone());
    }
    order.into_iter().map(|id| estimate(&groups[id], ambiguity)).collect()
}

/// Fraction of kept records flagged as blended; `None` when nothing was kept.
pub fn blended_rate<'a>(records: impl IntoIterator<Item = &'a LabeledRecord>) -> Option<f64> {
    let (mut kept, mut blended) = (0usize, 0usize);
    for r in records {
        if !r.discarded {
            kept += 1;
            blended += r.blended as usize;
        }
    }
    (kept > 0).then(|| blended as f64 / kept as f64)
}

/// One row of the per-item estimate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub config_hash: String,
    pub seed: u64,
    pub backend: String,
    pub decoding: String,
    pub ambiguity: AmbiguityType,
    pub prompt_type: String,
    /// `noun` or `verb` for cued Noun/Verb prompts, empty otherwise.
    pub reading: String,
    pub item_id: String,
    pub prompt_id: String,
    pub target_label: InterpretationLabel,
    pub classified: usize,
    pub discards: usize,
    pub target_count: usize,
    pub p_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl EstimateRow {
    fn group_key(&self) -> (String, String, String, String, String) {
        (
            self.ambiguity.to_string(),
            self.prompt_type.clone(),
            self.reading.clone(),
            self.backend.clone(),
            self.decoding.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Item with the smallest value (first in input order on ties).
    pub min_item: String,
    pub max_item: String,
}

/// Mean, median and extremes of per-item values.
pub fn summarize(values: &[(String, f64)]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len();
    let mean = values.iter().map(|v| v.1).sum::<f64>() / n as f64;
    let mut sorted: Vec<f64> = values.iter().map(|v| v.1).collect();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mut lo = &values[0];
    let mut hi = &values[0];
    for v in values {
        if v.1 < lo.1 {
            lo = v;
        }
        if v.1 > hi.1 {
            hi = v;
        }
    }
    Some(Summary {
        n,
        mean,
        median,
        min: lo.1,
        max: hi.1,
        min_item: lo.0.clone(),
        max_item: hi.0.clone(),
    })
}

/// Summary of one (ambiguity, prompt type, reading, backend, decoding) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub ambiguity: String,
    pub prompt_type: String,
    pub reading: String,
    pub backend: String,
    pub decoding: String,
    pub summary: Summary,
    pub values: Vec<(String, f64)>,
}

/// Groups per-item rows and summarizes the target probability of each group.
pub fn aggregate(rows: &[EstimateRow]) -> Vec<GroupSummary> {
    let mut groups: BTreeMap<_, Vec<(String, f64)>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.group_key()).or_default().push((r.item_id.clone(), r.p_hat));
    }
    groups
        .into_iter()
        .map(|((ambiguity, prompt_type, reading, backend, decoding), values)| GroupSummary {
            ambiguity,
            prompt_type,
            reading,
            backend,
            decoding,
            summary: summarize(&values).expect("groups are non-empty"),
            values,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::DiscardReason;
    use InterpretationLabel::*;

    fn records(id: &str, labels: &[(InterpretationLabel, usize)], discards: usize) -> Vec<LabeledRecord> {
        let mut out = Vec::new();
        for &(label, n) in labels {
            for _ in 0..n {
                out.push(LabeledRecord {
                    prompt_id: id.into(),
                    sample_index: out.len(),
                    label,
                    discarded: false,
                    discard_reason: None,
                    blended: false,
                });
            }
        }
        for _ in 0..discards {
            out.push(LabeledRecord::discarded(id, out.len(), DiscardReason::Other));
        }
        out
    }

    #[test]
    fn relative_frequencies() {
        let e = estimate(&records("a", &[(S, 27), (Np, 73)], 0), AmbiguityType::Nps).unwrap();
        assert_eq!(e.target(), 0.27);
        let e = estimate(&records("b", &[(Z, 1), (Np, 97)], 2), AmbiguityType::Npz).unwrap();
        assert_eq!(e.discards, 2);
        assert!((e.target() - 1.0 / 98.0).abs() < 1e-15);
        let e = estimate(&records("c", &[(Verb, 50)], 0), AmbiguityType::NounVerb).unwrap();
        assert_eq!(e.p_hat[&Verb], 1.0);
        assert_eq!(e.p_hat[&Noun], 0.0);
    }

    #[test]
    fn all_discarded_is_an_error() {
        let err = estimate(&records("a", &[], 5), AmbiguityType::Nps).unwrap_err();
        assert!(matches!(err, EstimateError::AllDiscarded { total: 5, .. }));
        assert_eq!(estimate(&[], AmbiguityType::Nps).unwrap_err(), EstimateError::Empty);
    }

    #[test]
    fn wilson_known_value() {
        // 27 of 100: center (0.27 + 0.019207) / 1.038415.
        let (lo, hi) = wilson_interval(27, 100, Z95);
        assert!((lo - 0.192696).abs() < 1e-6, "{lo}");
        assert!((hi - 0.364321).abs() < 1e-6, "{hi}");
        assert_eq!(wilson_interval(0, 10, Z95).0, 0.0);
        assert_eq!(wilson_interval(10, 10, Z95).1, 1.0);
    }

    #[test]
    fn blended_rates() {
        let mut r = records("a", &[(Z, 100)], 3);
        assert_eq!(blended_rate(&r), Some(0.0));
        for rec in r.iter_mut().take(25) {
            rec.blended = true;
        }
        assert_eq!(blended_rate(&r), Some(0.25));
        assert_eq!(blended_rate(&records("a", &[], 2)), None);
    }

    #[test]
    fn summary_statistics() {
        let v: Vec<(String, f64)> = [("a", 0.1), ("b", 0.4), ("c", 0.2), ("d", 0.3)]
            .iter()
            .map(|(k, x)| (k.to_string(), *x))
            .collect();
        let s = summarize(&v).unwrap();
        assert!((s.mean - 0.25).abs() < 1e-15);
        assert!((s.median - 0.25).abs() < 1e-15);
        assert_eq!((s.min_item.as_str(), s.max_item.as_str()), ("a", "b"));
        let one = summarize(&v[1..2]).unwrap();
        assert_eq!(one.mean, 0.4);
    }
}
