//! Browser demo over the toy grammar: list prompts, look at the next-word
//! distribution under nucleus and temperature settings, estimate a prompt's
//! interpretation probability, and classify a pasted CoNLL-U parse.
//!
//! Every export returns a JSON string.

use std::cell::OnceCell;

use serde::Serialize;
use synprobe::classifier::{classify, detect_blended_npz, ClassifierConfig};
use synprobe::decoding::{transform_distribution, DecodingConfig};
use synprobe::materials::derive_all_prompts;
use synprobe::parses::{align_words, read_conllu};
use synprobe::pipeline::{generate_all, label_completions};
use synprobe::toy::{standard_items, ToyGrammar};
use synprobe::uncertainty::estimate;
use synprobe::{AmbiguityItem, AmbiguityType, LanguageModel, Prompt};
use wasm_bindgen::prelude::*;

struct Demo {
    grammar: ToyGrammar,
    items: Vec<AmbiguityItem>,
    prompts: Vec<Prompt>,
}

thread_local! {
    static DEMO: OnceCell<Demo> = const { OnceCell::new() };
}

fn with_demo<T>(f: impl FnOnce(&Demo) -> T) -> T {
    DEMO.with(|cell| {
        let demo = cell.get_or_init(|| {
            let items = standard_items();
            Demo { grammar: ToyGrammar::standard(), prompts: derive_all_prompts(&items), items }
        });
        f(demo)
    })
}

fn json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serializable")
}

fn err(e: impl ToString) -> String {
    e.to_string()
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

fn ambiguity_of(demo: &Demo, prompt: &Prompt) -> AmbiguityType {
    demo.items.iter().find(|i| i.id == prompt.item_id).map(|i| i.ambiguity).unwrap_or(AmbiguityType::Nps)
}

fn find_prompt<'a>(demo: &'a Demo, id: &str) -> Result<&'a Prompt, String> {
    demo.prompts.iter().find(|p| p.id() == id).ok_or_else(|| err(format!("no prompt `{id}`")))
}

fn decoding(demo: &Demo, p: f64, t: f64) -> Result<DecodingConfig, String> {
    let c = DecodingConfig::for_vocabulary(demo.grammar.model().vocabulary()).nucleus(p).temperature(t);
    c.validate().map_err(err)?;
    Ok(c)
}

#[derive(Serialize)]
struct PromptEntry<'a> {
    id: String,
    ambiguity: AmbiguityType,
    prompt_type: String,
    text: &'a str,
}

/// All prompts of one ambiguity type (`NPS`, `NPZ` or `NounVerb`).
fn list_prompts_json(ambiguity: &str) -> Result<String, String> {
    let ambiguity: AmbiguityType = ambiguity.parse().map_err(err)?;
    Ok(with_demo(|demo| {
        let list: Vec<PromptEntry> = demo
            .prompts
            .iter()
            .filter(|p| ambiguity_of(demo, p) == ambiguity)
            .map(|p| PromptEntry { id: p.id(), ambiguity, prompt_type: p.prompt_type.to_string(), text: &p.text })
            .collect();
        json(&list)
    }))
}

#[derive(Serialize)]
struct NextWord {
    word: String,
    raw: f64,
    transformed: f64,
}

/// Words that can follow the prompt, with raw and transformed probabilities.
fn next_words_json(prompt_id: &str, p: f64, t: f64) -> Result<String, String> {
    with_demo(|demo| {
        let prompt = find_prompt(demo, prompt_id)?;
        let model = demo.grammar.model();
        let ids = model.tokenize(&prompt.text).map_err(err)?.ids;
        let raw = model.next_distribution(&ids).map_err(err)?;
        let shaped = transform_distribution(&raw, &decoding(demo, p, t)?).map_err(err)?;
        let vocab = model.vocabulary();
        let mut words: Vec<NextWord> = raw
            .probs()
            .iter()
            .zip(shaped.probs())
            .enumerate()
            .filter(|(_, (r, _))| **r > 0.0)
            .map(|(i, (&r, s))| NextWord { word: vocab.token(i as u32).unwrap_or("?").to_string(), raw: r, transformed: s })
            .collect();
        words.sort_by(|a, b| b.raw.total_cmp(&a.raw));
        Ok(json(&words))
    })
}

#[derive(Serialize)]
struct Example {
    text: String,
    label: String,
    blended: bool,
}

#[derive(Serialize)]
struct Estimate {
    target: String,
    p_hat: f64,
    ci: (f64, f64),
    classified: usize,
    discards: usize,
    examples: Vec<Example>,
}

/// Samples `n` completions, parses and labels them, and estimates the
/// probability of the reported interpretation.
fn estimate_prompt_json(prompt_id: &str, p: f64, t: f64, n: usize, seed: u64) -> Result<String, String> {
    with_demo(|demo| {
        let prompt = find_prompt(demo, prompt_id)?.clone();
        let ambiguity = ambiguity_of(demo, &prompt);
        let mut config = decoding(demo, p, t)?;
        config.samples = n.clamp(1, 5000);
        config.seed = seed;
        let prompts = [prompt];
        let sets = generate_all(demo.grammar.model(), &prompts, &config).map_err(err)?;
        let (parses, _) = demo.grammar.parse_completions(&sets);
        let batch = label_completions(&sets, &parses, &prompts, ambiguity, &ClassifierConfig::default());
        let e = estimate(&batch.records, ambiguity).map_err(err)?;
        let examples = sets[0]
            .completions
            .iter()
            .zip(&batch.records)
            .take(12)
            .map(|(c, r)| Example { text: c.text.clone(), label: r.label.to_string(), blended: r.blended })
            .collect();
        Ok(json(&Estimate {
            target: ambiguity.target_label().to_string(),
            p_hat: e.target(),
            ci: e.target_ci(),
            classified: e.classified(),
            discards: e.discards,
            examples,
        }))
    })
}

#[derive(Serialize)]
struct Classified {
    sentence_id: String,
    label: String,
    blended: bool,
}

/// Labels the first sentence of a CoNLL-U document. Word offsets are
/// 0-based over the `# text` comment, or the token forms if it is missing.
fn classify_conllu_json(conllu: &str, ambiguity: &str, locus_word: usize, post_locus_word: Option<usize>) -> Result<String, String> {
    let ambiguity: AmbiguityType = ambiguity.parse().map_err(err)?;
    let read = read_conllu(conllu);
    let parse = match (read.parses.first(), read.errors.first()) {
        (Some(p), _) => p,
        (None, Some(e)) => return Err(err(e)),
        (None, None) => return Err(err("no sentence")),
    };
    let text = parse
        .comments
        .iter()
        .find_map(|c| c.strip_prefix("# text = "))
        .map(str::to_string)
        .unwrap_or_else(|| parse.forms().join(" "));
    let aligned = align_words(parse, &text, locus_word, post_locus_word).map_err(err)?;
    let config = ClassifierConfig::default();
    Ok(json(&Classified {
        sentence_id: parse.sentence_id.clone(),
        label: classify(&aligned, &config, ambiguity).to_string(),
        blended: ambiguity == AmbiguityType::Npz && post_locus_word.is_some() && detect_blended_npz(&aligned, &config),
    }))
}

#[wasm_bindgen]
pub fn list_prompts(ambiguity: &str) -> Result<String, JsValue> {
    js(list_prompts_json(ambiguity))
}

#[wasm_bindgen]
pub fn next_words(prompt_id: &str, p: f64, t: f64) -> Result<String, JsValue> {
    js(next_words_json(prompt_id, p, t))
}

#[wasm_bindgen]
pub fn estimate_prompt(prompt_id: &str, p: f64, t: f64, n: usize, seed: u64) -> Result<String, JsValue> {
    js(estimate_prompt_json(prompt_id, p, t, n, seed))
}

#[wasm_bindgen]
pub fn classify_conllu(conllu: &str, ambiguity: &str, locus_word: usize, post_locus_word: Option<usize>) -> Result<String, JsValue> {
    js(classify_conllu_json(conllu, ambiguity, locus_word, post_locus_word))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn estimate_on_a_cued_prompt_is_certain() {
        let list: serde_json::Value = serde_json::from_str(&list_prompts_json("NPS").unwrap()).unwrap();
        let cued = list.as_array().unwrap().iter().find(|p| p["prompt_type"] == "PostLocusCue").unwrap();
        let out: serde_json::Value =
            serde_json::from_str(&estimate_prompt_json(cued["id"].as_str().unwrap(), 1.0, 1.0, 50, 1).unwrap()).unwrap();
        assert_eq!(out["p_hat"], 1.0);
        assert_eq!(out["target"], "S");
    }

    #[test]
    fn next_words_sum_to_one() {
        let list: serde_json::Value = serde_json::from_str(&list_prompts_json("NPZ").unwrap()).unwrap();
        let id = list[0]["id"].as_str().unwrap().to_string();
        let words: Vec<serde_json::Value> = serde_json::from_str(&next_words_json(&id, 0.6, 0.75).unwrap()).unwrap();
        let raw: f64 = words.iter().map(|w| w["raw"].as_f64().unwrap()).sum();
        let shaped: f64 = words.iter().map(|w| w["transformed"].as_f64().unwrap()).sum();
        assert!((raw - 1.0).abs() < 1e-9 && (shaped - 1.0).abs() < 1e-9);
    }

    #[test]
    fn classifies_pasted_parse() {
        let conllu = "# sent_id = x\n# text = The employees understood the contract would change.\n\
            1\tThe\tthe\tDET\tDT\t_\t2\tdet\t_\t_\n\
            2\temployees\temployee\tNOUN\tNNS\t_\t3\tnsubj\t_\t_\n\
            3\tunderstood\tunderstand\tVERB\tVBD\t_\t0\troot\t_\t_\n\
            4\tthe\tthe\tDET\tDT\t_\t5\tdet\t_\t_\n\
            5\tcontract\tcontract\tNOUN\tNN\t_\t7\tnsubj\t_\t_\n\
            6\twould\twould\tAUX\tMD\t_\t7\taux\t_\t_\n\
            7\tchange\tchange\tVERB\tVB\t_\t3\tccomp\t_\t_\n\
            8\t.\t.\tPUNCT\t.\t_\t3\tpunct\t_\t_\n\n";
        let out: serde_json::Value = serde_json::from_str(&classify_conllu_json(conllu, "NPS", 4, Some(5)).unwrap()).unwrap();
        assert_eq!(out["label"], "S");
        assert!(classify_conllu_json("", "NPS", 0, None).is_err());
    }
}
