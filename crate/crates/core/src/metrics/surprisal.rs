use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::spearman;
use crate::lm::LanguageModel;
use crate::materials::AmbiguityItem;
use crate::text::{trim_punctuation, words};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalRow {
    pub item_id: String,
    /// Bits.
    pub ambiguous_surprisal: f64,
    pub unambiguous_surprisal: f64,
    /// Ambiguous minus unambiguous surprisal of the post-locus cue.
    pub delta: f64,
    pub p_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurprisalAnalysis {
    pub rows: Vec<SurprisalRow>,
    /// Items left out, with the reason.
    pub excluded: Vec<(String, String)>,
    /// Spearman correlation of delta with the estimate; `None` if undefined.
    pub rho: Option<f64>,
}

/// Word offset of the post-locus cue in a base sentence.
fn cue_word(sentence: &str, locus: Result<usize, String>, cue: &str) -> Result<usize, String> {
    let at = locus? + 1;
    match words(sentence).get(at) {
        Some(w) if trim_punctuation(w).eq_ignore_ascii_case(cue) => Ok(at),
        _ => Err(format!("post-locus cue `{cue}` does not follow the locus in `{sentence}`")),
    }
}

/// Surprisal of each item's post-locus cue in its ambiguous and unambiguous
/// base sentences, paired with the item's estimate from `p_hat` (keyed by
/// item id).
pub fn surprisal_gp_analysis(items: &[AmbiguityItem], backend: &dyn LanguageModel, p_hat: &HashMap<String, f64>) -> SurprisalAnalysis {
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for item in items {
        let row = (|| -> Result<SurprisalRow, String> {
            let p = *p_hat.get(&item.id).ok_or("no estimate")?;
            let a = cue_word(&item.ambiguous_sentence, item.ambiguous_locus_word(), &item.post_locus_cue)?;
            let u = cue_word(&item.unambiguous_sentence, item.unambiguous_locus_word(), &item.post_locus_cue)?;
            let sa = backend.word_surprisal(&item.ambiguous_sentence, a).map_err(|e| e.to_string())?;
            let su = backend.word_surprisal(&item.unambiguous_sentence, u).map_err(|e| e.to_string())?;
            Ok(SurprisalRow {
                item_id: item.id.clone(),
                ambiguous_surprisal: sa,
                unambiguous_surprisal: su,
                delta: sa - su,
                p_hat: p,
            })
        })();
        match row {
            Ok(r) => rows.push(r),
            Err(reason) => {
                log::warn!("item {} excluded from the surprisal analysis: {reason}", item.id);
                excluded.push((item.id.clone(), reason));
            }
        }
    }
    let d: Vec<f64> = rows.iter().map(|r| r.delta).collect();
    let p: Vec<f64> = rows.iter().map(|r| r.p_hat).collect();
    let rho = spearman(&d, &p).ok();
    SurprisalAnalysis { rows, excluded, rho }
}
