//! Rule-based mapping from a completion's parse to an interpretation.
//!
//! Label and tag sets are configuration. Comparisons ignore ASCII case and
//! also accept a subtyped label (`nsubj:pass`) when its base (`nsubj`) is
//! listed, so Stanford-style and Universal Dependencies output both work with
//! the defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::materials::{AmbiguityType, Prompt};
use crate::parses::{align_locus, completion_key, DependencyParse};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum InterpretationLabel {
    #[serde(rename = "NP")]
    Np,
    S,
    Z,
    Noun,
    Verb,
    Other,
}

impl InterpretationLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            InterpretationLabel::Np => "NP",
            InterpretationLabel::S => "S",
            InterpretationLabel::Z => "Z",
            InterpretationLabel::Noun => "Noun",
            InterpretationLabel::Verb => "Verb",
            InterpretationLabel::Other => "Other",
        }
    }
}

impl fmt::Display for InterpretationLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InterpretationLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "np" => Ok(InterpretationLabel::Np),
            "s" => Ok(InterpretationLabel::S),
            "z" => Ok(InterpretationLabel::Z),
            "noun" => Ok(InterpretationLabel::Noun),
            "verb" => Ok(InterpretationLabel::Verb),
            "other" => Ok(InterpretationLabel::Other),
            _ => Err(format!("unknown interpretation `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub subject_labels: Vec<String>,
    pub object_labels: Vec<String>,
    /// Labels that make a token part of a larger NP whose head lies to the right.
    pub modifier_labels: Vec<String>,
    /// Labels a finite verb can carry after the locus.
    pub finite_verb_labels: Vec<String>,
    pub finite_verb_pos: Vec<String>,
    pub noun_pos: Vec<String>,
    pub verb_pos: Vec<String>,
    pub root_labels: Vec<String>,
    pub conjunction_pos: Vec<String>,
    pub conjunction_labels: Vec<String>,
    pub max_recursion: usize,
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            subject_labels: strings(&["nsubj", "nsubjpass", "csubj", "csubjpass"]),
            object_labels: strings(&["dobj", "obj"]),
            modifier_labels: strings(&["nmod", "nn", "compound", "poss", "amod"]),
            finite_verb_labels: strings(&["root", "ccomp"]),
            finite_verb_pos: strings(&["VBD", "VBZ", "VBP", "MD"]),
            noun_pos: strings(&["NN", "NNS", "NNP", "NNPS", "NOUN", "PROPN"]),
            verb_pos: strings(&["VB", "VBD", "VBG", "VBN", "VBP", "VBZ", "MD", "VERB", "AUX"]),
            root_labels: strings(&["root"]),
            conjunction_pos: strings(&["CC", "CCONJ"]),
            conjunction_labels: strings(&["cc"]),
            max_recursion: 5,
        }
    }
}

fn matches(set: &[String], label: &str) -> bool {
    let base = label.split(':').next().unwrap_or(label);
    set.iter()
        .any(|s| s.eq_ignore_ascii_case(label) || s.eq_ignore_ascii_case(base))
}

impl ClassifierConfig {
    pub fn is_subject(&self, deprel: &str) -> bool {
        matches(&self.subject_labels, deprel)
    }

    pub fn is_object(&self, deprel: &str) -> bool {
        matches(&self.object_labels, deprel)
    }

    pub fn is_modifier(&self, deprel: &str) -> bool {
        matches(&self.modifier_labels, deprel)
    }

    /// Subject and object label sets must not overlap.
    pub fn validate(&self) -> Result<(), String> {
        if let Some(l) = self.subject_labels.iter().find(|l| self.is_object(l)) {
            return Err(format!("`{l}` is both a subject and an object label"));
        }
        Ok(())
    }
}

/// Head of the NP containing a token.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NpHead {
    pub index: usize,
    /// The recursion limit stopped the search early.
    pub capped: bool,
}

/// Follows modifier attachments to the right, up to `max_recursion` steps.
/// A modifier whose head lies to its left ends the search.
pub fn resolve_np_head(parse: &DependencyParse, index: usize, config: &ClassifierConfig) -> NpHead {
    let mut cur = index;
    for _ in 0..config.max_recursion {
        let t = parse.token(cur);
        if !(config.is_modifier(&t.deprel) && t.head > cur) {
            return NpHead { index: cur, capped: false };
        }
        cur = t.head;
    }
    let t = parse.token(cur);
    let capped = config.is_modifier(&t.deprel) && t.head > cur;
    if capped {
        log::warn!("{}: NP head search stopped at token {cur}", parse.sentence_id);
    }
    NpHead { index: cur, capped }
}

/// The nearest finite verb after `after`, if any.
fn next_finite_verb(parse: &DependencyParse, after: usize, config: &ClassifierConfig) -> Option<usize> {
    parse.tokens[after..]
        .iter()
        .find(|t| matches(&config.finite_verb_labels, &t.deprel) && matches(&config.finite_verb_pos, t.pos()))
        .map(|t| t.index)
}

/// NP versus S (or Z) from the role of the locus NP's head.
///
/// A direct object followed by a finite verb that has no subject before it
/// is taken to be a misparsed subject.
pub fn classify_np_s_z(parse: &DependencyParse, config: &ClassifierConfig, ambiguity: AmbiguityType) -> InterpretationLabel {
    let clause = match ambiguity {
        AmbiguityType::Nps => InterpretationLabel::S,
        AmbiguityType::Npz => InterpretationLabel::Z,
        AmbiguityType::NounVerb => return classify_noun_verb(parse, config),
    };
    let Some(locus) = parse.locus_index else {
        return InterpretationLabel::Other;
    };
    let h = resolve_np_head(parse, locus, config).index;
    let deprel = &parse.token(h).deprel;
    if config.is_subject(deprel) {
        return clause;
    }
    if !config.is_object(deprel) {
        return InterpretationLabel::Other;
    }
    match next_finite_verb(parse, h, config) {
        Some(v) if !parse.dependents(v).any(|d| d < v && config.is_subject(&parse.token(d).deprel)) => clause,
        _ => InterpretationLabel::Np,
    }
}

/// Whether an NP/Z completion packs a second predicate into the subordinate
/// clause: the post-locus token is not the root, the root follows it, and a
/// comma lies between them without being followed by a conjunction.
pub fn detect_blended_npz(parse: &DependencyParse, config: &ClassifierConfig) -> bool {
    let Some(post) = parse.post_locus_index else {
        return false;
    };
    let cue = parse.token(post);
    if cue.head == 0 || matches(&config.root_labels, &cue.deprel) {
        return false;
    }
    let root = parse.root();
    if root <= post {
        return false;
    }
    let commas: Vec<usize> = (post + 1..root).filter(|&i| parse.token(i).form == ",").collect();
    if commas.is_empty() {
        return false;
    }
    commas.iter().all(|&c| {
        let next = parse.token(c + 1);
        !(matches(&config.conjunction_pos, next.pos()) || matches(&config.conjunction_labels, &next.deprel))
    })
}

/// Noun or Verb from the locus tag alone.
pub fn classify_noun_verb(parse: &DependencyParse, config: &ClassifierConfig) -> InterpretationLabel {
    let Some(locus) = parse.locus_index else {
        return InterpretationLabel::Other;
    };
    let pos = parse.token(locus).pos();
    if matches(&config.noun_pos, pos) {
        InterpretationLabel::Noun
    } else if matches(&config.verb_pos, pos) {
        InterpretationLabel::Verb
    } else {
        InterpretationLabel::Other
    }
}

pub fn classify(parse: &DependencyParse, config: &ClassifierConfig, ambiguity: AmbiguityType) -> InterpretationLabel {
    match ambiguity {
        AmbiguityType::NounVerb => classify_noun_verb(parse, config),
        _ => classify_np_s_z(parse, config, ambiguity),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    /// Parsed, but neither candidate interpretation applies.
    Other,
    /// The prompt's locus could not be found in the parse.
    Alignment,
    /// The sentence id names no known prompt.
    UnknownPrompt,
    /// Generation ended without a sentence boundary.
    NoBoundary,
    /// The first generated token extended the prompt's last word.
    SubwordExtension,
    /// The completion has no usable parse.
    Unparsed,
}

/// One completion's classification, written as a JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub prompt_id: String,
    pub sample_index: usize,
    pub label: InterpretationLabel,
    pub discarded: bool,
    pub discard_reason: Option<DiscardReason>,
    pub blended: bool,
}

impl LabeledRecord {
    pub fn discarded(prompt_id: &str, sample_index: usize, reason: DiscardReason) -> Self {
        LabeledRecord {
            prompt_id: prompt_id.to_string(),
            sample_index,
            label: InterpretationLabel::Other,
            discarded: true,
            discard_reason: Some(reason),
            blended: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscardRow {
    pub prompt_type: String,
    pub total: usize,
    pub discarded: usize,
    pub rate: f64,
    pub reasons: BTreeMap<DiscardReason, usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub records: Vec<LabeledRecord>,
    pub discards: Vec<DiscardRow>,
}

/// Labels one record per parse. Parse sentence ids are
/// `prompt_id/sample_index`; the blended flag is computed for NP/Z prompts
/// with a post-locus cue.
pub fn classify_one(parse: &DependencyParse, prompt: &Prompt, ambiguity: AmbiguityType, config: &ClassifierConfig, sample_index: usize) -> LabeledRecord {
    let aligned = match align_locus(parse, prompt) {
        Ok(a) => a,
        Err(e) => {
            log::debug!("{}: {e}", parse.sentence_id);
            return LabeledRecord::discarded(&prompt.id(), sample_index, DiscardReason::Alignment);
        }
    };
    let label = classify(&aligned, config, ambiguity);
    let blended = ambiguity == AmbiguityType::Npz && detect_blended_npz(&aligned, config);
    let discarded = label == InterpretationLabel::Other;
    LabeledRecord {
        prompt_id: prompt.id(),
        sample_index,
        label,
        discarded,
        discard_reason: discarded.then_some(DiscardReason::Other),
        blended,
    }
}

pub fn classify_batch(parses: &[DependencyParse], prompts: &[Prompt], ambiguity: AmbiguityType, config: &ClassifierConfig) -> BatchResult {
    let by_id: BTreeMap<String, &Prompt> = prompts.iter().map(|p| (p.id(), p)).collect();
    let records = parses
        .iter()
        .map(|parse| {
            let key = completion_key(&parse.sentence_id);
            match key.and_then(|(id, i)| by_id.get(id).map(|p| (*p, i))) {
                Some((prompt, i)) => classify_one(parse, prompt, ambiguity, config, i),
                None => {
                    let (id, i) = key.unwrap_or((parse.sentence_id.as_str(), 0));
                    LabeledRecord::discarded(id, i, DiscardReason::UnknownPrompt)
                }
            }
        })
        .collect::<Vec<_>>();
    let discards = discard_report(&records, prompts);
    BatchResult { records, discards }
}

/// Discard counts per prompt type. Records of unknown prompts are grouped
/// under `unknown`.
pub fn discard_report(records: &[LabeledRecord], prompts: &[Prompt]) -> Vec<DiscardRow> {
    let types: BTreeMap<String, String> = prompts.iter().map(|p| (p.id(), p.prompt_type.to_string())).collect();
    let mut rows: BTreeMap<String, DiscardRow> = BTreeMap::new();
    for r in records {
        let t = types.get(&r.prompt_id).cloned().unwrap_or_else(|| "unknown".into());
        let row = rows.entry(t.clone()).or_insert_with(|| DiscardRow {
            prompt_type: t,
            total: 0,
            discarded: 0,
            rate: 0.0,
            reasons: BTreeMap::new(),
        });
        row.total += 1;
        if r.discarded {
            row.discarded += 1;
            if let Some(reason) = r.discard_reason {
                *row.reasons.entry(reason).or_default() += 1;
            }
        }
    }
    rows.into_values()
        .map(|mut r| {
            r.rate = r.discarded as f64 / r.total as f64;
            r
        })
        .collect()
}
