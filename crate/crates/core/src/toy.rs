//! A small probabilistic grammar with known interpretation probabilities.
//!
//! Every prompt derived from the materials is the prefix of a handful of
//! weighted sentences. Each sentence carries an interpretation and a
//! hand-built dependency parse, so the grammar serves both as a language
//! model ([`ToyModel`]) and as the parser for its own output.
//!
//! For an ambiguous prefix with target probability `p`, the sentences that
//! continue it with the reported interpretation (S, Z or Verb) share weight
//! `p` and the others share `1 - p`. Unambiguous sentences only continue with
//! the expected interpretation, so cued prompts have probability 1. The first
//! word after an ambiguous prefix is the post-locus cue exactly when the
//! continuation has the reported interpretation, which makes the cue's
//! surprisal `-log2 p` bits in the ambiguous sentence and 0 in the
//! unambiguous one.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::InterpretationLabel;
use crate::decoding::CompletionSet;
use crate::lm::{check_context, BackendDescriptor, BackendError, LanguageModel, TokenDistribution, TokenId, Vocabulary};
use crate::materials::{derive_all_prompts, parse_materials, AmbiguityItem, AmbiguityType, Reading};
use crate::parses::DependencyParse;
use crate::text::words;

const NPS_TSV: &str = include_str!("../data/materials/nps.tsv");
const NPZ_TSV: &str = include_str!("../data/materials/npz.tsv");
const NV_TSV: &str = include_str!("../data/materials/nv.tsv");

const DETERMINERS: &[&str] = &[
    "the", "a", "an", "this", "these", "that", "those", "his", "her", "their", "its", "my", "our", "your", "two",
    "many", "some",
];

const NP_TAILS: &[&[&str]] = &[&["well"], &["at", "once"], &["quite", "well"], &["by", "now"]];
const CLAUSE_TAILS: &[&[&str]] = &[&["in", "the", "end"], &["after", "all"], &["again"], &["soon"]];
const NPZ_NP_TAILS: &[&[&str]] = &[&["we", "stayed"], &["they", "laughed"], &["everyone", "cheered"], &["nobody", "cared"]];
const BLENDED_TAIL: &[&str] = &["on", ",", "the", "crowd", "cheered"];
const NOUN_FALLBACK_CUE: &str = "was";
const VERB_FALLBACK_CUE: &str = "them";

/// Target probabilities per ambiguous prefix. Prefix `k` (in materials
/// order) uses entry `k % len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyProfile {
    /// P(S) for NP/S prefixes.
    pub nps: Vec<f64>,
    /// P(Z) for NP/Z prefixes.
    pub npz: Vec<f64>,
    /// Share of post-locus-cue Z continuations that are blended.
    pub npz_blended: f64,
    /// P(Verb) for Noun/Verb prefixes.
    pub noun_verb: Vec<f64>,
}

impl Default for ToyProfile {
    fn default() -> Self {
        ToyProfile {
            nps: vec![0.1, 0.2, 0.3, 0.4, 0.5],
            npz: vec![0.02, 0.03, 0.04, 0.05, 0.06],
            npz_blended: 0.25,
            noun_verb: vec![0.2, 0.3, 0.4, 0.5, 0.6],
        }
    }
}

impl ToyProfile {
    fn target(&self, ambiguity: AmbiguityType, group: usize) -> f64 {
        let v = match ambiguity {
            AmbiguityType::Nps => &self.nps,
            AmbiguityType::Npz => &self.npz,
            AmbiguityType::NounVerb => &self.noun_verb,
        };
        v[group % v.len()]
    }
}

#[derive(Debug, Error)]
pub enum ToyError {
    #[error("profile entry {0} is outside [0, 1] or a profile is empty")]
    Profile(f64),
    #[error("item {item}: {message}")]
    Item { item: String, message: String },
    #[error("sentence `{0}` is generated with two different analyses")]
    Conflict(String),
}

/// One weighted sentence of the grammar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToySentence {
    pub text: String,
    pub tokens: Vec<TokenId>,
    pub weight: f64,
    pub ambiguity: AmbiguityType,
    pub label: InterpretationLabel,
    pub blended: bool,
    /// Whitespace-word offset of the locus.
    pub locus_word: usize,
}

#[derive(Debug, Clone, Default)]
struct Node {
    weight: f64,
    children: BTreeMap<TokenId, usize>,
}

/// Language model over a finite weighted set of sentences: the next-token
/// distribution is the weight share of the sentences extending the context.
/// Contexts that extend no sentence get the uniform distribution.
#[derive(Debug, Clone)]
pub struct ToyModel {
    descriptor: BackendDescriptor,
    nodes: Vec<Node>,
}

impl ToyModel {
    fn new(vocabulary: Vocabulary, sentences: &[(Vec<TokenId>, f64)]) -> Self {
        let eos = vocabulary.eos_id();
        let mut nodes = vec![Node::default()];
        for (tokens, w) in sentences {
            let mut cur = 0;
            nodes[0].weight += w;
            for &t in tokens.iter().chain(std::iter::once(&eos)) {
                let next = match nodes[cur].children.get(&t) {
                    Some(&n) => n,
                    None => {
                        nodes.push(Node::default());
                        let n = nodes.len() - 1;
                        nodes[cur].children.insert(t, n);
                        n
                    }
                };
                nodes[next].weight += w;
                cur = next;
            }
        }
        ToyModel {
            descriptor: BackendDescriptor {
                name: "toy-grammar".into(),
                vocabulary,
                max_context: 1024,
            },
            nodes,
        }
    }
}

impl LanguageModel for ToyModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }

    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        check_context(&self.descriptor, context)?;
        let v = self.descriptor.vocabulary.len();
        let mut cur = 0;
        for t in context {
            match self.nodes[cur].children.get(t) {
                Some(&n) => cur = n,
                None => return Ok(TokenDistribution::uniform(v)),
            }
        }
        let node = &self.nodes[cur];
        if node.children.is_empty() || node.weight <= 0.0 {
            return Ok(TokenDistribution::uniform(v));
        }
        let mut probs = vec![0.0; v];
        for (&t, &n) in &node.children {
            probs[t as usize] = self.nodes[n].weight / node.weight;
        }
        Ok(TokenDistribution::from_probs(&probs))
    }
}

/// Grammar, model and parse table built from ambiguity items.
#[derive(Debug, Clone)]
pub struct ToyGrammar {
    model: ToyModel,
    sentences: Vec<ToySentence>,
    parses: HashMap<Vec<TokenId>, DependencyParse>,
    targets: BTreeMap<String, f64>,
}

/// Roles of the tokens of one sentence, used to build its parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    NpsObject,
    NpsClause,
    NpzObject,
    NpzClause,
    NpzBlended,
    Noun,
    Verb,
}

struct Plan {
    words: Vec<String>,
    locus_word: usize,
    shape: Shape,
    weight: f64,
    label: InterpretationLabel,
    ambiguity: AmbiguityType,
}

fn sentence_text(words: &[String]) -> String {
    let mut s = String::new();
    for w in words {
        if !s.is_empty() && w != "," {
            s.push(' ');
        }
        s.push_str(w);
    }
    s.push('.');
    s
}

/// Builds `(pos, head, deprel)` for each token. Indices are 0-based here;
/// heads are 1-based with 0 for the root.
fn analyse(forms: &[&str], locus: usize, prefix_len: usize, shape: Shape) -> Vec<(&'static str, usize, &'static str)> {
    let n = forms.len();
    let mut rows: Vec<(&'static str, usize, &'static str)> = vec![("X", 0, "dep"); n];
    let is_det = |i: usize| DETERMINERS.contains(&forms[i].to_lowercase().as_str());
    let np_start = if locus > 0 && is_det(locus - 1) { locus - 1 } else { locus };
    let verb = (0..np_start)
        .rev()
        .find(|&i| forms[i] != "," && !forms[i].eq_ignore_ascii_case("that"))
        .unwrap_or(0);
    let cue = prefix_len;
    let last = n - 1;
    let h = |i: usize| i + 1;

    if matches!(shape, Shape::Noun | Shape::Verb) {
        for (i, r) in rows.iter_mut().enumerate() {
            *r = ("X", h(locus), if i == last { "punct" } else { "dep" });
        }
        let pos = if shape == Shape::Noun { "NN" } else { "VBZ" };
        rows[locus] = (pos, 0, "root");
        rows[last].0 = ".";
        return rows;
    }

    // (root, attachment of the prefix verb)
    let (root, verb_rel) = match shape {
        Shape::NpsObject | Shape::NpsClause => (verb, "root"),
        Shape::NpzObject => (cue + 1, "advcl"),
        Shape::NpzClause => (cue, "advcl"),
        Shape::NpzBlended => (cue + 5, "advcl"),
        Shape::Noun | Shape::Verb => unreachable!(),
    };
    rows[..prefix_len].fill(("X", h(verb), "dep"));
    rows[verb] = ("VBD", if verb == root { 0 } else { h(root) }, verb_rel);
    if np_start < locus {
        rows[np_start] = ("DT", h(locus), "det");
    }
    rows[prefix_len..n].fill(("RB", h(root), "advmod"));
    match shape {
        Shape::NpsObject => {
            rows[locus] = ("NN", h(verb), "dobj");
        }
        Shape::NpsClause => {
            let modal = ["would", "could", "should", "might", "will", "can", "must", "may"];
            let tag = if modal.contains(&forms[cue]) { "MD" } else { "VBD" };
            rows[locus] = ("NN", h(cue), "nsubj");
            rows[cue] = (tag, h(verb), "ccomp");
            rows[cue + 1..last].fill(("RB", h(cue), "advmod"));
            if np_start > 0 && forms[np_start - 1].eq_ignore_ascii_case("that") {
                rows[np_start - 1] = ("IN", h(cue), "mark");
            }
        }
        Shape::NpzObject => {
            rows[locus] = ("NN", h(verb), "dobj");
            rows[cue] = ("PRP", h(root), "nsubj");
            rows[root] = ("VBD", 0, "root");
        }
        Shape::NpzClause => {
            rows[locus] = ("NN", h(cue), "nsubj");
            rows[cue] = ("VBD", 0, "root");
        }
        Shape::NpzBlended => {
            rows[locus] = ("NN", h(cue), "nsubj");
            rows[cue] = ("VBD", h(root), "dep");
            rows[cue + 1] = ("RP", h(cue), "prt");
            rows[cue + 2] = (",", h(root), "punct");
            rows[cue + 3] = ("DT", h(cue + 4), "det");
            rows[cue + 4] = ("NN", h(root), "nsubj");
            rows[root] = ("VBD", 0, "root");
        }
        Shape::Noun | Shape::Verb => unreachable!(),
    }
    for i in 0..prefix_len {
        if forms[i] == "," {
            rows[i] = (",", h(root), "punct");
        }
    }
    rows[last] = (".", h(root), "punct");
    rows
}

fn tails(list: &'static [&'static [&'static str]]) -> impl Iterator<Item = Vec<String>> {
    list.iter().map(|t| t.iter().map(|s| s.to_string()).collect())
}

impl ToyGrammar {
    /// The grammar over the shipped materials with the default profile.
    pub fn standard() -> Self {
        Self::build(&standard_items(), &ToyProfile::default()).expect("shipped materials build a toy grammar")
    }

    pub fn build(items: &[AmbiguityItem], profile: &ToyProfile) -> Result<Self, ToyError> {
        for v in [&profile.nps, &profile.npz, &profile.noun_verb] {
            if v.is_empty() {
                return Err(ToyError::Profile(f64::NAN));
            }
        }
        let all = profile.nps.iter().chain(&profile.npz).chain(&profile.noun_verb);
        if let Some(&bad) = all.chain(std::iter::once(&profile.npz_blended)).find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(ToyError::Profile(bad));
        }

        let mut plans = Vec::new();
        let mut targets = BTreeMap::new();
        let mut counters: HashMap<AmbiguityType, usize> = HashMap::new();
        let mut next_target = |ambiguity: AmbiguityType| {
            let k = counters.entry(ambiguity).or_default();
            *k += 1;
            profile.target(ambiguity, *k - 1)
        };
        let mut nv_order: Vec<String> = Vec::new();
        let mut nv_groups: HashMap<String, Vec<&AmbiguityItem>> = HashMap::new();
        for item in items {
            let err = |message: String| ToyError::Item { item: item.id.clone(), message };
            let locus = item.ambiguous_locus_word().map_err(err)?;
            let key = words(&item.ambiguous_sentence)[..=locus].join(" ");
            if item.ambiguity == AmbiguityType::NounVerb {
                let g = nv_groups.entry(key.clone()).or_default();
                if g.is_empty() {
                    nv_order.push(key);
                }
                g.push(item);
            } else {
                let p = next_target(item.ambiguity);
                targets.insert(key, p);
                plan_np(item, p, profile.npz_blended, &mut plans)?;
            }
        }
        for key in nv_order {
            let p = next_target(AmbiguityType::NounVerb);
            plan_noun_verb(&nv_groups[&key], p, &mut plans)?;
            targets.insert(key, p);
        }

        let mut vocab_words: BTreeSet<String> = BTreeSet::new();
        let texts: Vec<String> = plans.iter().map(|p| sentence_text(&p.words)).collect();
        for t in &texts {
            for w in words(t) {
                for piece in crate::text::split_word(w) {
                    vocab_words.insert(piece.to_string());
                }
            }
        }
        let vocabulary = Vocabulary::word_level(vocab_words.into_iter().collect(), None, "</s>").expect("toy vocabulary");

        let mut sentences = Vec::new();
        let mut parses = HashMap::new();
        let mut labels: HashMap<Vec<TokenId>, (InterpretationLabel, bool)> = HashMap::new();
        for (plan, text) in plans.iter().zip(&texts) {
            let tok = vocabulary.tokenize(text).expect("toy text uses its own vocabulary");
            let forms: Vec<&str> = tok.ids.iter().map(|&i| vocabulary.token(i).unwrap()).collect();
            let locus = tok.word_spans[plan.locus_word].0;
            let prefix_len = tok.word_spans[plan.locus_word].1;
            let rows = analyse(&forms, locus, prefix_len, plan.shape);
            let blended = plan.shape == Shape::NpzBlended;
            if let Some(&prev) = labels.get(&tok.ids) {
                if prev != (plan.label, blended) {
                    return Err(ToyError::Conflict(text.clone()));
                }
            }
            labels.insert(tok.ids.clone(), (plan.label, blended));
            let table: Vec<(&str, &str, usize, &str)> =
                forms.iter().zip(rows).map(|(f, (pos, head, rel))| (*f, pos, head, rel)).collect();
            let parse = DependencyParse::from_rows("", &table)
                .map_err(|e| ToyError::Item { item: text.clone(), message: e.to_string() })?;
            parses.insert(tok.ids.clone(), parse);
            sentences.push(ToySentence {
                text: text.clone(),
                tokens: tok.ids,
                weight: plan.weight,
                ambiguity: plan.ambiguity,
                label: plan.label,
                blended,
                locus_word: plan.locus_word,
            });
        }
        let weighted: Vec<(Vec<TokenId>, f64)> = sentences.iter().map(|s| (s.tokens.clone(), s.weight)).collect();
        Ok(ToyGrammar {
            model: ToyModel::new(vocabulary, &weighted),
            sentences,
            parses,
            targets,
        })
    }

    pub fn model(&self) -> &ToyModel {
        &self.model
    }

    pub fn sentences(&self) -> &[ToySentence] {
        &self.sentences
    }

    /// Target probability of each ambiguous prefix (words joined by spaces).
    pub fn targets(&self) -> &BTreeMap<String, f64> {
        &self.targets
    }

    /// The grammar's analysis of a sentence it generates.
    pub fn parse(&self, sentence_id: &str, text: &str) -> Option<DependencyParse> {
        let ids = self.model.vocabulary().tokenize(text).ok()?.ids;
        let mut parse = self.parses.get(&ids)?.clone();
        parse.sentence_id = sentence_id.to_string();
        parse.comments = vec![format!("# sent_id = {sentence_id}"), format!("# text = {text}")];
        Some(parse)
    }

    /// CoNLL-U parses of the kept completions, with sentence ids
    /// `prompt_id/sample_index`. Texts the grammar cannot generate are
    /// skipped and counted.
    pub fn parse_completions<'a>(&self, sets: impl IntoIterator<Item = &'a CompletionSet>) -> (Vec<DependencyParse>, usize) {
        let mut out = Vec::new();
        let mut missing = 0;
        for set in sets {
            for c in set.kept() {
                match self.parse(&format!("{}/{}", c.prompt_id, c.sample_index), &c.text) {
                    Some(p) => out.push(p),
                    None => missing += 1,
                }
            }
        }
        (out, missing)
    }
}

fn plan_np(item: &AmbiguityItem, p: f64, blended: f64, plans: &mut Vec<Plan>) -> Result<(), ToyError> {
    let err = |message: String| ToyError::Item { item: item.id.clone(), message };
    let a_locus = item.ambiguous_locus_word().map_err(err)?;
    let u_locus = item.unambiguous_locus_word().map_err(err)?;
    let amb: Vec<String> = words(&item.ambiguous_sentence)[..=a_locus].iter().map(|s| s.to_string()).collect();
    let unamb: Vec<String> = words(&item.unambiguous_sentence)[..=u_locus].iter().map(|s| s.to_string()).collect();
    let cue = item.post_locus_cue.clone();
    let (label, object, clause) = match item.ambiguity {
        AmbiguityType::Nps => (InterpretationLabel::S, Shape::NpsObject, Shape::NpsClause),
        _ => (InterpretationLabel::Z, Shape::NpzObject, Shape::NpzClause),
    };
    let mut push = |prefix: &[String], locus_word: usize, tail: Vec<String>, shape: Shape, weight: f64, label| {
        let mut words = prefix.to_vec();
        words.extend(tail);
        plans.push(Plan { words, locus_word, shape, weight, label, ambiguity: item.ambiguity });
    };
    let np_tails: Vec<Vec<String>> = match item.ambiguity {
        AmbiguityType::Nps => tails(NP_TAILS).collect(),
        _ => tails(NPZ_NP_TAILS).collect(),
    };
    let clause_tails: Vec<Vec<String>> = tails(CLAUSE_TAILS)
        .map(|t| std::iter::once(cue.clone()).chain(t).collect())
        .collect();
    for t in &np_tails {
        if t[0].eq_ignore_ascii_case(&cue) {
            return Err(err(format!("continuation `{}` starts with the cue", t.join(" "))));
        }
        push(&amb, a_locus, t.clone(), object, (1.0 - p) / np_tails.len() as f64, InterpretationLabel::Np);
    }
    let plain = if item.ambiguity == AmbiguityType::Npz { 1.0 - blended } else { 1.0 };
    for t in &clause_tails {
        push(&amb, a_locus, t.clone(), clause, p * plain / clause_tails.len() as f64, label);
        push(&unamb, u_locus, t.clone(), clause, 1.0 / clause_tails.len() as f64, label);
    }
    if item.ambiguity == AmbiguityType::Npz && blended > 0.0 {
        let t = std::iter::once(cue.clone()).chain(BLENDED_TAIL.iter().map(|s| s.to_string())).collect();
        push(&amb, a_locus, t, Shape::NpzBlended, p * blended, label);
    }
    Ok(())
}

fn plan_noun_verb(group: &[&AmbiguityItem], p: f64, plans: &mut Vec<Plan>) -> Result<(), ToyError> {
    let cue_of = |reading: Reading, fallback: &str| {
        group
            .iter()
            .find(|i| i.reading == reading)
            .map_or(fallback.to_string(), |i| i.post_locus_cue.clone())
    };
    let noun_cue = cue_of(Reading::Noun, NOUN_FALLBACK_CUE);
    let verb_cue = cue_of(Reading::Verb, VERB_FALLBACK_CUE);
    let first = group[0];
    let err = |message: String| ToyError::Item { item: first.id.clone(), message };
    let a_locus = first.ambiguous_locus_word().map_err(err)?;
    let amb: Vec<String> = words(&first.ambiguous_sentence)[..=a_locus].iter().map(|s| s.to_string()).collect();
    let tails: Vec<Vec<String>> = tails(&CLAUSE_TAILS[..3]).collect();
    let share = 1.0 / tails.len() as f64;
    for (cue, shape, label, weight) in [
        (&noun_cue, Shape::Noun, InterpretationLabel::Noun, 1.0 - p),
        (&verb_cue, Shape::Verb, InterpretationLabel::Verb, p),
    ] {
        for t in &tails {
            let mut words = amb.clone();
            words.push(cue.clone());
            words.extend(t.iter().cloned());
            plans.push(Plan { words, locus_word: a_locus, shape, weight: weight * share, label, ambiguity: AmbiguityType::NounVerb });
        }
    }
    for item in group {
        let u_locus = item.unambiguous_locus_word().map_err(err)?;
        let (shape, label) = match item.reading {
            Reading::Verb => (Shape::Verb, InterpretationLabel::Verb),
            _ => (Shape::Noun, InterpretationLabel::Noun),
        };
        for t in &tails {
            let mut words: Vec<String> = words(&item.unambiguous_sentence)[..=u_locus].iter().map(|s| s.to_string()).collect();
            words.push(item.post_locus_cue.clone());
            words.extend(t.iter().cloned());
            plans.push(Plan { words, locus_word: u_locus, shape, weight: share, label, ambiguity: AmbiguityType::NounVerb });
        }
    }
    Ok(())
}

/// The shipped NP/S, NP/Z and Noun/Verb items.
pub fn standard_items() -> Vec<AmbiguityItem> {
    let mut items = parse_materials(NPS_TSV, AmbiguityType::Nps).expect("shipped NP/S materials");
    items.extend(parse_materials(NPZ_TSV, AmbiguityType::Npz).expect("shipped NP/Z materials"));
    items.extend(parse_materials(NV_TSV, AmbiguityType::NounVerb).expect("shipped Noun/Verb materials"));
    items
}

/// Items of one ambiguity type from the shipped materials.
pub fn standard_items_of(ambiguity: AmbiguityType) -> Vec<AmbiguityItem> {
    standard_items().into_iter().filter(|i| i.ambiguity == ambiguity).collect()
}

/// Checks that every derived prompt is a prefix the grammar can continue.
pub fn covers_prompts(grammar: &ToyGrammar, items: &[AmbiguityItem]) -> Result<(), String> {
    let vocab = grammar.model().vocabulary();
    for prompt in derive_all_prompts(items) {
        let ids = vocab.tokenize(&prompt.text).map_err(|e| format!("{}: {e}", prompt.id()))?.ids;
        if !grammar.sentences().iter().any(|s| s.tokens.starts_with(&ids)) {
            return Err(format!("no sentence continues prompt {}", prompt.id()));
        }
    }
    Ok(())
}
