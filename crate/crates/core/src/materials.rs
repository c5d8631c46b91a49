//! Experiment materials: ambiguity items and the prompts derived from them.
//!
//! Materials are UTF-8 TSV files with the header
//! `id ambiguity reading ambiguous_sentence unambiguous_sentence locus pre_locus_cue post_locus_cue`.
//! Base sentences run at least up to the post-locus cue.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{classify_noun_verb, ClassifierConfig, InterpretationLabel};
use crate::parses::{align_words, DependencyParse};
use crate::text::{trim_punctuation, word_spans};

pub const MATERIALS_HEADER: &str = "id\tambiguity\treading\tambiguous_sentence\tunambiguous_sentence\tlocus\tpre_locus_cue\tpost_locus_cue";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AmbiguityType {
    #[serde(rename = "NPS")]
    Nps,
    #[serde(rename = "NPZ")]
    Npz,
    NounVerb,
}

impl AmbiguityType {
    pub fn as_str(self) -> &'static str {
        match self {
            AmbiguityType::Nps => "NPS",
            AmbiguityType::Npz => "NPZ",
            AmbiguityType::NounVerb => "NounVerb",
        }
    }

    /// The two candidate interpretations; the first is the one whose
    /// probability is reported (S, Z, Verb).
    pub fn candidates(self) -> [InterpretationLabel; 2] {
        use InterpretationLabel::*;
        match self {
            AmbiguityType::Nps => [S, Np],
            AmbiguityType::Npz => [Z, Np],
            AmbiguityType::NounVerb => [Verb, Noun],
        }
    }

    pub fn target_label(self) -> InterpretationLabel {
        self.candidates()[0]
    }
}

impl fmt::Display for AmbiguityType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AmbiguityType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['/', '-', '_'], "").as_str() {
            "nps" => Ok(AmbiguityType::Nps),
            "npz" => Ok(AmbiguityType::Npz),
            "nounverb" | "nv" => Ok(AmbiguityType::NounVerb),
            _ => Err(format!("unknown ambiguity type `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Reading {
    None,
    Noun,
    Verb,
}

impl Reading {
    fn as_str(self) -> &'static str {
        match self {
            Reading::None => "None",
            Reading::Noun => "Noun",
            Reading::Verb => "Verb",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbiguityItem {
    pub id: String,
    pub ambiguity: AmbiguityType,
    pub reading: Reading,
    pub ambiguous_sentence: String,
    pub unambiguous_sentence: String,
    pub locus: String,
    pub pre_locus_cue: Option<String>,
    pub post_locus_cue: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PromptType {
    NoCue,
    PostLocusCue,
    PreLocusCue,
    PrePostLocusCues,
}

impl PromptType {
    pub const ALL: [PromptType; 4] = [
        PromptType::NoCue,
        PromptType::PostLocusCue,
        PromptType::PreLocusCue,
        PromptType::PrePostLocusCues,
    ];

    pub fn slug(self) -> &'static str {
        match self {
            PromptType::NoCue => "nocue",
            PromptType::PostLocusCue => "post",
            PromptType::PreLocusCue => "pre",
            PromptType::PrePostLocusCues => "prepost",
        }
    }

    pub fn has_post_cue(self) -> bool {
        matches!(self, PromptType::PostLocusCue | PromptType::PrePostLocusCues)
    }

    pub fn has_pre_cue(self) -> bool {
        matches!(self, PromptType::PreLocusCue | PromptType::PrePostLocusCues)
    }
}

impl fmt::Display for PromptType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PromptType::NoCue => "NoCue",
            PromptType::PostLocusCue => "PostLocusCue",
            PromptType::PreLocusCue => "PreLocusCue",
            PromptType::PrePostLocusCues => "PrePostLocusCues",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub item_id: String,
    pub prompt_type: PromptType,
    pub text: String,
    /// Word offset of the locus within `text`.
    pub locus_index: usize,
    pub expected_interpretation: Option<InterpretationLabel>,
}

impl Prompt {
    /// Identifier used for completions and CoNLL-U sentence ids.
    pub fn id(&self) -> String {
        format!("{}.{}", self.item_id, self.prompt_type.slug())
    }

    /// Word offset of the post-locus cue, for prompt types that contain it.
    pub fn post_locus_index(&self) -> Option<usize> {
        self.prompt_type.has_post_cue().then_some(self.locus_index + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

#[derive(Debug, Error)]
pub enum MaterialsError {
    #[error("cannot read materials: {0}")]
    Io(#[from] std::io::Error),
    #[error("materials header mismatch: expected `{MATERIALS_HEADER}`")]
    Header,
    #[error("invalid materials rows: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvalidRows(Vec<RowError>),
    #[error("no parse for the {which} sentence of item `{item}`")]
    MissingParse { item: String, which: &'static str },
}

pub fn load_materials(
    path: impl AsRef<Path>,
    ambiguity: AmbiguityType,
) -> Result<Vec<AmbiguityItem>, MaterialsError> {
    let content = std::fs::read_to_string(path)?;
    parse_materials(&content, ambiguity)
}

pub fn parse_materials(
    content: &str,
    ambiguity: AmbiguityType,
) -> Result<Vec<AmbiguityItem>, MaterialsError> {
    let mut lines = content.lines();
    if lines.next() != Some(MATERIALS_HEADER) {
        return Err(MaterialsError::Header);
    }
    let mut items = Vec::new();
    let mut errors = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        match parse_row(line, ambiguity) {
            Ok(item) => {
                if !ids.insert(item.id.clone()) {
                    errors.push(RowError {
                        line: line_no,
                        message: format!("duplicate id `{}`", item.id),
                    });
                } else {
                    items.push(item);
                }
            }
            Err(message) => errors.push(RowError { line: line_no, message }),
        }
    }
    if errors.is_empty() {
        Ok(items)
    } else {
        Err(MaterialsError::InvalidRows(errors))
    }
}

fn parse_row(line: &str, expected: AmbiguityType) -> Result<AmbiguityItem, String> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 8 {
        return Err(format!("expected 8 columns, found {}", cols.len()));
    }
    let ambiguity: AmbiguityType = cols[1].parse()?;
    if ambiguity != expected {
        return Err(format!("ambiguity `{}` where `{expected}` was expected", cols[1]));
    }
    let reading = match cols[2] {
        "None" => Reading::None,
        "Noun" => Reading::Noun,
        "Verb" => Reading::Verb,
        other => return Err(format!("unknown reading `{other}`")),
    };
    let item = AmbiguityItem {
        id: cols[0].to_string(),
        ambiguity,
        reading,
        ambiguous_sentence: cols[3].to_string(),
        unambiguous_sentence: cols[4].to_string(),
        locus: cols[5].to_string(),
        pre_locus_cue: (!cols[6].is_empty()).then(|| cols[6].to_string()),
        post_locus_cue: cols[7].to_string(),
    };
    item.validate()?;
    Ok(item)
}

/// Serializes items back to the TSV format accepted by [`parse_materials`].
pub fn write_materials(items: &[AmbiguityItem]) -> String {
    let mut out = String::from(MATERIALS_HEADER);
    out.push('\n');
    for item in items {
        let cols = [
            item.id.as_str(),
            item.ambiguity.as_str(),
            item.reading.as_str(),
            &item.ambiguous_sentence,
            &item.unambiguous_sentence,
            &item.locus,
            item.pre_locus_cue.as_deref().unwrap_or(""),
            &item.post_locus_cue,
        ];
        out.push_str(&cols.join("\t"));
        out.push('\n');
    }
    out
}

fn locate_locus(sentence: &str, locus: &str) -> Result<usize, String> {
    let hits: Vec<usize> = sentence
        .split_whitespace()
        .enumerate()
        .filter(|(_, w)| trim_punctuation(w) == locus)
        .map(|(i, _)| i)
        .collect();
    match hits.as_slice() {
        [i] => Ok(*i),
        [] => Err(format!("locus `{locus}` not found in `{sentence}`")),
        _ => Err(format!("locus `{locus}` occurs {} times in `{sentence}`", hits.len())),
    }
}

impl AmbiguityItem {
    pub fn validate(&self) -> Result<(), String> {
        match (self.ambiguity, self.reading) {
            (AmbiguityType::NounVerb, Reading::None) => {
                return Err("Noun/Verb items need a Noun or Verb reading".into())
            }
            (AmbiguityType::Nps | AmbiguityType::Npz, r) if r != Reading::None => {
                return Err("only Noun/Verb items carry a reading".into())
            }
            _ => {}
        }
        if self.locus.is_empty() || self.post_locus_cue.is_empty() {
            return Err("locus and post-locus cue are required".into());
        }
        let amb_locus = self.ambiguous_locus_word()?;
        let unamb_locus = self.unambiguous_locus_word()?;
        for (sentence, at) in [
            (&self.ambiguous_sentence, amb_locus),
            (&self.unambiguous_sentence, unamb_locus),
        ] {
            let next = sentence.split_whitespace().nth(at + 1).map(trim_punctuation);
            if next != Some(self.post_locus_cue.as_str()) {
                return Err(format!(
                    "post-locus cue `{}` does not follow the locus in `{sentence}`",
                    self.post_locus_cue
                ));
            }
        }
        self.check_cue_edit(amb_locus)
    }

    /// The unambiguous sentence must equal the ambiguous one up to a single
    /// insertion (possibly glued to the previous word) or substitution of the
    /// pre-locus cue, placed before the locus.
    fn check_cue_edit(&self, amb_locus: usize) -> Result<(), String> {
        let amb: Vec<&str> = self.ambiguous_sentence.split_whitespace().collect();
        let unamb: Vec<&str> = self.unambiguous_sentence.split_whitespace().collect();
        let Some(cue) = self.pre_locus_cue.as_deref() else {
            return if amb == unamb {
                Ok(())
            } else {
                Err("sentences differ but no pre-locus cue is given".into())
            };
        };
        let ok = (0..=amb_locus).any(|i| {
            // inserted as its own word
            let inserted = unamb.len() == amb.len() + 1
                && unamb[i] == cue
                && unamb[..i] == amb[..i]
                && unamb[i + 1..] == amb[i..];
            // glued to the previous word ("left,")
            let glued = i > 0
                && unamb.len() == amb.len()
                && unamb[i - 1] == format!("{}{cue}", amb[i - 1])
                && unamb[..i - 1] == amb[..i - 1]
                && unamb[i..] == amb[i..];
            // substituted for a word before the locus
            let substituted = i < amb_locus
                && unamb.len() == amb.len()
                && unamb[i] == cue
                && amb[i] != cue
                && unamb[..i] == amb[..i]
                && unamb[i + 1..] == amb[i + 1..];
            inserted || glued || substituted
        });
        if ok {
            Ok(())
        } else {
            Err(format!(
                "unambiguous sentence is not the ambiguous one plus the pre-locus cue `{cue}`"
            ))
        }
    }

    pub fn ambiguous_locus_word(&self) -> Result<usize, String> {
        locate_locus(&self.ambiguous_sentence, &self.locus)
    }

    pub fn unambiguous_locus_word(&self) -> Result<usize, String> {
        locate_locus(&self.unambiguous_sentence, &self.locus)
    }

    /// The interpretation both base sentences ultimately receive.
    pub fn ultimate_interpretation(&self) -> InterpretationLabel {
        match (self.ambiguity, self.reading) {
            (AmbiguityType::Nps, _) => InterpretationLabel::S,
            (AmbiguityType::Npz, _) => InterpretationLabel::Z,
            (AmbiguityType::NounVerb, Reading::Verb) => InterpretationLabel::Verb,
            (AmbiguityType::NounVerb, _) => InterpretationLabel::Noun,
        }
    }
}

fn prefix_through_word(sentence: &str, word: usize) -> String {
    let spans = word_spans(sentence);
    sentence[..spans[word].1].to_string()
}

/// The four prompts of one item, in [`PromptType::ALL`] order.
///
/// # Panics
///
/// Panics if the item violates its invariants; items from
/// [`parse_materials`] are always valid.
pub fn derive_prompts(item: &AmbiguityItem) -> Vec<Prompt> {
    let amb_locus = item.ambiguous_locus_word().expect("validated item");
    let unamb_locus = item.unambiguous_locus_word().expect("validated item");
    let expected = Some(item.ultimate_interpretation());
    PromptType::ALL
        .iter()
        .map(|&prompt_type| {
            let (sentence, locus) = if prompt_type.has_pre_cue() {
                (&item.unambiguous_sentence, unamb_locus)
            } else {
                (&item.ambiguous_sentence, amb_locus)
            };
            let end = if prompt_type.has_post_cue() { locus + 1 } else { locus };
            Prompt {
                item_id: item.id.clone(),
                prompt_type,
                text: prefix_through_word(sentence, end),
                locus_index: locus,
                expected_interpretation: if prompt_type == PromptType::NoCue {
                    None
                } else {
                    expected
                },
            }
        })
        .collect()
}

/// Prompts for a whole item list. Noun/Verb items sharing an ambiguous
/// prefix get a single NoCue prompt, attributed to the first such item.
pub fn derive_all_prompts(items: &[AmbiguityItem]) -> Vec<Prompt> {
    let mut seen_nocue = HashSet::new();
    let mut out = Vec::new();
    for item in items {
        for prompt in derive_prompts(item) {
            if prompt.prompt_type == PromptType::NoCue
                && item.ambiguity == AmbiguityType::NounVerb
                && !seen_nocue.insert(prompt.text.clone())
            {
                continue;
            }
            out.push(prompt);
        }
    }
    out
}

/// Gold (or parser) analyses of an item's two base sentences.
#[derive(Debug, Clone)]
pub struct BaseParses {
    pub ambiguous: DependencyParse,
    pub unambiguous: DependencyParse,
}

/// Drops Noun/Verb items whose base sentences the tagger gets wrong; other
/// ambiguity types pass through unchanged.
pub fn apply_item_filter(
    items: &[AmbiguityItem],
    gold_parses: &HashMap<String, BaseParses>,
    config: &ClassifierConfig,
) -> Result<Vec<AmbiguityItem>, MaterialsError> {
    let mut kept = Vec::new();
    for item in items {
        if item.ambiguity != AmbiguityType::NounVerb {
            kept.push(item.clone());
            continue;
        }
        let parses = gold_parses.get(&item.id).ok_or_else(|| MaterialsError::MissingParse {
            item: item.id.clone(),
            which: "base",
        })?;
        let expected = item.ultimate_interpretation();
        let checks = [
            (&parses.ambiguous, &item.ambiguous_sentence, item.ambiguous_locus_word()),
            (&parses.unambiguous, &item.unambiguous_sentence, item.unambiguous_locus_word()),
        ];
        let correct = checks.into_iter().all(|(parse, sentence, locus)| {
            let Ok(locus) = locus else { return false };
            match align_words(parse, sentence, locus, None) {
                Ok(aligned) => classify_noun_verb(&aligned, config) == expected,
                Err(_) => false,
            }
        });
        if correct {
            kept.push(item.clone());
        } else {
            log::info!("item {} dropped: base sentence misclassified", item.id);
        }
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;

    const NPS: &str = include_str!("../data/materials/nps.tsv");
    const NPZ: &str = include_str!("../data/materials/npz.tsv");
    const NV: &str = include_str!("../data/materials/nv.tsv");

    fn row(fields: [&str; 8]) -> String {
        format!("{MATERIALS_HEADER}\n{}\n", fields.join("\t"))
    }

    #[test]
    fn nps_row_fields() {
        let items = parse_materials(NPS, AmbiguityType::Nps).unwrap();
        assert_eq!(items.len(), 20);
        let first = &items[0];
        assert_eq!(first.locus, "contract");
        assert_eq!(first.pre_locus_cue.as_deref(), Some("that"));
        assert_eq!(first.post_locus_cue, "would");
    }

    #[test]
    fn npz_row_uses_comma_cue() {
        let items = parse_materials(NPZ, AmbiguityType::Npz).unwrap();
        let band = &items[0];
        assert_eq!(band.ambiguous_sentence, "Even though the band left the party went");
        assert_eq!(band.pre_locus_cue.as_deref(), Some(","));
        assert_eq!(band.post_locus_cue, "went");
    }

    #[test]
    fn missing_locus_is_reported_with_line() {
        let content = row([
            "x1",
            "NPS",
            "None",
            "The employees understood the deal would",
            "The employees understood that the deal would",
            "contract",
            "that",
            "would",
        ]);
        match parse_materials(&content, AmbiguityType::Nps) {
            Err(MaterialsError::InvalidRows(errs)) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].line, 2);
                assert!(errs[0].message.contains("not found"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows_are_rejected() {
        let short = format!("{MATERIALS_HEADER}\nx\tNPS\n");
        assert!(matches!(
            parse_materials(&short, AmbiguityType::Nps),
            Err(MaterialsError::InvalidRows(_))
        ));
        let wrong_type = row(["x", "NPZ", "None", "a b", "a b", "a", "", "b"]);
        assert!(parse_materials(&wrong_type, AmbiguityType::Nps).is_err());
        assert!(matches!(
            parse_materials("id\tfoo\n", AmbiguityType::Nps),
            Err(MaterialsError::Header)
        ));
    }

    #[test]
    fn cue_must_follow_locus() {
        let content = row([
            "x",
            "NPS",
            "None",
            "The employees understood the contract soon would",
            "The employees understood that the contract soon would",
            "contract",
            "that",
            "would",
        ]);
        assert!(parse_materials(&content, AmbiguityType::Nps).is_err());
    }

    #[test]
    fn unambiguous_sentence_must_only_add_cue() {
        let content = row([
            "x",
            "NPS",
            "None",
            "The employees understood the contract would",
            "The workers understood that the contract would",
            "contract",
            "that",
            "would",
        ]);
        assert!(parse_materials(&content, AmbiguityType::Nps).is_err());
    }

    #[test]
    fn nps_prompts_match_table() {
        let content = row([
            "knew",
            "NPS",
            "None",
            "The employees knew the contract would be changed very soon.",
            "The employees knew that the contract would be changed very soon.",
            "contract",
            "that",
            "would",
        ]);
        let item = &parse_materials(&content, AmbiguityType::Nps).unwrap()[0];
        let texts: Vec<String> = derive_prompts(item).into_iter().map(|p| p.text).collect();
        assert_eq!(
            texts,
            [
                "The employees knew the contract",
                "The employees knew the contract would",
                "The employees knew that the contract",
                "The employees knew that the contract would",
            ]
        );
    }

    #[test]
    fn npz_pre_cue_prompt_keeps_comma_glued() {
        let items = parse_materials(NPZ, AmbiguityType::Npz).unwrap();
        let prompts = derive_prompts(&items[0]);
        assert_eq!(prompts[2].text, "Even though the band left, the party");
        assert_eq!(prompts[2].locus_index, 6);
        assert_eq!(prompts[3].text, "Even though the band left, the party went");
        assert_eq!(prompts[3].post_locus_index(), Some(7));
    }

    #[test]
    fn noun_verb_prompts_and_dedup() {
        let items = parse_materials(NV, AmbiguityType::NounVerb).unwrap();
        let verb = items.iter().find(|i| i.id == "nv01-verb").unwrap();
        let prompts = derive_prompts(verb);
        assert_eq!(prompts[1].text, "Mary thinks that the pants suit me");
        assert_eq!(prompts[3].text, "Mary thinks that those pants suit me");
        assert_eq!(prompts[1].expected_interpretation, Some(InterpretationLabel::Verb));

        let all = derive_all_prompts(&items);
        let nocue = all.iter().filter(|p| p.prompt_type == PromptType::NoCue).count();
        assert_eq!(nocue, 22);
        assert_eq!(all.len(), 22 + 3 * items.len());
    }

    #[test]
    fn prompts_are_prefixes_with_expected_labels() {
        for (src, amb) in [
            (NPS, AmbiguityType::Nps),
            (NPZ, AmbiguityType::Npz),
            (NV, AmbiguityType::NounVerb),
        ] {
            for item in parse_materials(src, amb).unwrap() {
                for p in derive_prompts(&item) {
                    let base = if p.prompt_type.has_pre_cue() {
                        &item.unambiguous_sentence
                    } else {
                        &item.ambiguous_sentence
                    };
                    assert!(base.starts_with(&p.text));
                    let words: Vec<&str> = p.text.split_whitespace().collect();
                    assert_eq!(trim_punctuation(words[p.locus_index]), item.locus);
                    let last = if p.prompt_type.has_post_cue() { p.locus_index + 1 } else { p.locus_index };
                    assert_eq!(words.len(), last + 1);
                    match p.prompt_type {
                        PromptType::NoCue => assert_eq!(p.expected_interpretation, None),
                        _ => assert_eq!(
                            p.expected_interpretation,
                            Some(item.ultimate_interpretation())
                        ),
                    }
                }
            }
        }
    }

    #[test]
    fn shipped_materials_round_trip() {
        for (src, amb) in [
            (NPS, AmbiguityType::Nps),
            (NPZ, AmbiguityType::Npz),
            (NV, AmbiguityType::NounVerb),
        ] {
            let items = parse_materials(src, amb).unwrap();
            assert_eq!(write_materials(&items), src);
        }
    }
}
