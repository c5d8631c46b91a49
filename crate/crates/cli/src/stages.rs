use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use synprobe::classifier::{BatchResult, ClassifierConfig, DiscardRow};
use synprobe::decoding::DecodingConfig;
use synprobe::materials::{apply_item_filter, derive_all_prompts, parse_materials, write_materials, BaseParses};
use synprobe::metrics::{
    agreement, grammaticality_counts, parse_annotations, self_bleu, surprisal_gp_analysis, unique_ratio, Grammaticality,
    SelfBleuConfig,
};
use synprobe::parses::{read_conllu, write_conllu};
use synprobe::pipeline::{estimate_rows, generate_all, label_completions, RunMeta};
use synprobe::toy::standard_items_of;
use synprobe::uncertainty::{aggregate, blended_rate, EstimateRow};
use synprobe::{AmbiguityItem, AmbiguityType, CompletionSet, LabeledRecord, Prompt, PromptType};

use crate::backend::{self, BackendSpec, Loaded, LoadError};
use crate::files::{
    config_hash, meta_path, read_csv, read_json, read_jsonl, read_text, sha256_hex, write_csv, write_json, write_jsonl,
    write_text, Layout,
};
use crate::{CliError, ResultExt};

pub struct Run {
    pub layout: Layout,
    pub ambiguity: AmbiguityType,
    pub seed: u64,
}

fn load_items(ctx: &Run) -> Result<Vec<AmbiguityItem>, CliError> {
    let text = read_text(&ctx.layout.items(), "derive-prompts").stage()?;
    parse_materials(&text, ctx.ambiguity)
        .with_context(|| format!("{} does not hold {} items", ctx.layout.items().display(), ctx.ambiguity))
        .stage()
}

fn load_prompts(ctx: &Run) -> Result<Vec<Prompt>, CliError> {
    read_jsonl(&ctx.layout.prompts(), "derive-prompts").stage()
}

fn read_meta(path: &Path, stage: &str) -> Result<RunMeta, CliError> {
    read_json(&meta_path(path), stage).stage()
}

fn write_with_meta<T: Serialize>(path: &Path, rows: &[T], meta: &RunMeta) -> Result<(), CliError> {
    write_jsonl(path, rows).stage()?;
    write_json(&meta_path(path), meta).stage()
}

pub fn derive_prompts(ctx: &Run, materials: Option<&Path>, base_parses: Option<&Path>) -> Result<(), CliError> {
    let text = match materials {
        Some(p) => std::fs::read_to_string(p).with_context(|| format!("cannot read materials {}", p.display())).config()?,
        None => write_materials(&standard_items_of(ctx.ambiguity)),
    };
    let mut items = parse_materials(&text, ctx.ambiguity).config()?;
    let label_config = ClassifierConfig::default();
    if ctx.ambiguity == AmbiguityType::NounVerb {
        match base_parses {
            Some(path) => {
                let read = read_conllu(&read_text(path, "derive-prompts").config()?);
                for e in &read.errors {
                    log::warn!("{}: {e}", path.display());
                }
                let by_id: HashMap<&str, _> = read.parses.iter().map(|p| (p.sentence_id.as_str(), p)).collect();
                let mut gold = HashMap::new();
                for item in &items {
                    let get = |which: &str| by_id.get(format!("{}/{which}", item.id).as_str()).map(|p| (*p).clone());
                    if let (Some(ambiguous), Some(unambiguous)) = (get("ambiguous"), get("unambiguous")) {
                        gold.insert(item.id.clone(), BaseParses { ambiguous, unambiguous });
                    }
                }
                let before = items.len();
                items = apply_item_filter(&items, &gold, &label_config).config()?;
                log::info!("kept {} of {before} Noun/Verb items", items.len());
            }
            None => log::warn!("no --base-parses given: Noun/Verb items are not filtered"),
        }
    }
    let prompts = derive_all_prompts(&items);
    let items_text = write_materials(&items);
    let meta = RunMeta {
        config_hash: config_hash(&(sha256_hex(items_text.as_bytes()), ctx.ambiguity)),
        seed: ctx.seed,
        backend: String::new(),
        decoding: String::new(),
    };
    write_text(&ctx.layout.items(), &items_text).stage()?;
    write_with_meta(&ctx.layout.prompts(), &prompts, &meta)?;
    println!("{} items, {} prompts -> {}", items.len(), prompts.len(), ctx.layout.prompts().display());
    Ok(())
}

/// The decoding rows of the standard comparison: pure sampling, three
/// nucleus masses, three temperatures and a 16-wide beam.
pub fn decoding_grid(base: &DecodingConfig) -> Vec<DecodingConfig> {
    let mut grid = vec![base.clone()];
    for p in [0.9, 0.75, 0.6] {
        grid.push(base.clone().nucleus(p));
    }
    for t in [0.9, 0.75, 0.6] {
        grid.push(base.clone().temperature(t));
    }
    grid.push(base.clone().beam(16));
    grid
}

pub struct DecodingArgs {
    pub p: f64,
    pub t: f64,
    pub beam: Option<usize>,
    pub grid: bool,
    pub n: usize,
    pub budget: Option<usize>,
    pub top_up: bool,
}

fn load_backend(spec: &BackendSpec, env_url: Option<&str>, items: &[AmbiguityItem]) -> Result<Loaded, CliError> {
    backend::check_spec(spec).config()?;
    backend::load(spec, env_url, items).map_err(|e| match e {
        LoadError::Config(e) => CliError::Config(e),
        LoadError::Unavailable(e) => CliError::Stage(e),
    })
}

pub fn generate(ctx: &Run, spec: &BackendSpec, env_url: Option<&str>, args: &DecodingArgs) -> Result<(), CliError> {
    let prompts = load_prompts(ctx)?;
    let items = load_items(ctx)?;
    let loaded = load_backend(spec, env_url, &items)?;
    let model = loaded.backend.model();
    let mut base = DecodingConfig::for_vocabulary(model.vocabulary());
    base.samples = args.n;
    base.seed = ctx.seed;
    base.top_up = args.top_up;
    if let Some(b) = args.budget {
        base.token_budget = b;
    }
    let configs = if args.grid {
        decoding_grid(&base)
    } else {
        let c = base.nucleus(args.p).temperature(args.t);
        vec![match args.beam {
            Some(b) => c.beam(b),
            None => c,
        }]
    };
    for c in &configs {
        c.validate().config()?;
    }
    let items_hash = sha256_hex(write_materials(&items).as_bytes());
    for config in &configs {
        let slug = config.slug();
        let sets = generate_all(model, &prompts, config).context("generation failed").stage()?;
        let meta = RunMeta {
            config_hash: config_hash(&(&items_hash, ctx.ambiguity, &loaded.fingerprint, config)),
            seed: ctx.seed,
            backend: model.descriptor().name.clone(),
            decoding: slug.clone(),
        };
        let path = ctx.layout.completions(&slug);
        write_with_meta(&path, &sets, &meta)?;
        let kept: usize = sets.iter().map(|s| s.kept().count()).sum();
        let total: usize = sets.iter().map(|s| s.completions.len()).sum();
        println!("{slug}: {kept}/{total} completions kept -> {}", path.display());
    }
    Ok(())
}

fn load_completions(ctx: &Run, slug: &str) -> Result<(Vec<CompletionSet>, RunMeta), CliError> {
    let path = ctx.layout.completions(slug);
    Ok((read_jsonl(&path, "generate").stage()?, read_meta(&path, "generate")?))
}

pub fn parse_toy(ctx: &Run) -> Result<(), CliError> {
    let items = load_items(ctx)?;
    let loaded = load_backend(&BackendSpec::Toy, None, &items)?;
    let grammar = loaded.backend.toy().expect("toy backend");
    for slug in ctx.layout.slugs().stage()? {
        let (sets, _) = load_completions(ctx, &slug)?;
        let (parses, missing) = grammar.parse_completions(&sets);
        if missing > 0 {
            log::warn!("{slug}: {missing} completions are not sentences of the toy grammar");
        }
        let path = ctx.layout.parses(&slug);
        write_text(&path, &write_conllu(&parses)).stage()?;
        println!("{slug}: {} parses -> {}", parses.len(), path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DiscardCsvRow {
    config_hash: String,
    seed: u64,
    decoding: String,
    prompt_type: String,
    total: usize,
    discarded: usize,
    rate: f64,
    /// `reason=count` pairs separated by `;`.
    reasons: String,
}

fn discard_rows(meta: &RunMeta, rows: &[DiscardRow]) -> Vec<DiscardCsvRow> {
    rows.iter()
        .map(|r| DiscardCsvRow {
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            decoding: meta.decoding.clone(),
            prompt_type: r.prompt_type.clone(),
            total: r.total,
            discarded: r.discarded,
            rate: r.rate,
            reasons: r
                .reasons
                .iter()
                .map(|(k, v)| format!("{}={v}", serde_json::to_value(k).unwrap().as_str().unwrap_or_default()))
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect()
}

pub fn classify(ctx: &Run, parses_dir: Option<&Path>, classifier: Option<&Path>) -> Result<(), CliError> {
    let config: ClassifierConfig = match classifier {
        Some(p) => read_json(p, "classify").config()?,
        None => ClassifierConfig::default(),
    };
    config.validate().map_err(|e| anyhow!(e)).config()?;
    let prompts = load_prompts(ctx)?;
    for slug in ctx.layout.slugs().stage()? {
        let (sets, meta) = load_completions(ctx, &slug)?;
        let parse_path = match parses_dir {
            Some(dir) => dir.join(format!("{slug}.conllu")),
            None => ctx.layout.parses(&slug),
        };
        if !parse_path.exists() {
            return Err(CliError::Stage(anyhow!(
                "missing stage input {}: run `synprobe parse-toy` or an external parser first",
                parse_path.display()
            )));
        }
        let conllu = read_text(&parse_path, "parse-toy").stage()?;
        let read = read_conllu(&conllu);
        for e in &read.errors {
            log::warn!("{}: {e}", parse_path.display());
        }
        let BatchResult { records, discards } = label_completions(&sets, &read.parses, &prompts, ctx.ambiguity, &config);
        let meta = RunMeta {
            config_hash: config_hash(&(&meta.config_hash, sha256_hex(conllu.as_bytes()), &config)),
            ..meta
        };
        write_with_meta(&ctx.layout.labels(&slug), &records, &meta)?;
        write_csv(&ctx.layout.discards(&slug), &discard_rows(&meta, &discards)).stage()?;
        let dropped = records.iter().filter(|r| r.discarded).count();
        println!("{slug}: {} records, {dropped} discarded -> {}", records.len(), ctx.layout.labels(&slug).display());
    }
    Ok(())
}

fn load_labels(ctx: &Run, slug: &str) -> Result<(Vec<LabeledRecord>, RunMeta), CliError> {
    let path = ctx.layout.labels(slug);
    Ok((read_jsonl(&path, "classify").stage()?, read_meta(&path, "classify")?))
}

pub fn estimate(ctx: &Run) -> Result<(), CliError> {
    let prompts = load_prompts(ctx)?;
    let items = load_items(ctx)?;
    for slug in ctx.layout.slugs().stage()? {
        let (records, meta) = load_labels(ctx, &slug)?;
        let (rows, errors) = estimate_rows(&records, &prompts, &items, ctx.ambiguity, &meta);
        let path = ctx.layout.estimates(&slug);
        write_csv(&path, &rows).stage()?;
        println!("{slug}: {} estimates, {} prompts fully discarded -> {}", rows.len(), errors.len(), path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct DiversityRow {
    config_hash: String,
    seed: u64,
    decoding: String,
    prompt_id: String,
    kept: usize,
    unique_ratio: Option<f64>,
    self_bleu: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct AgreementCsvRow {
    config_hash: String,
    seed: u64,
    decoding: String,
    matched: usize,
    unmatched_annotations: usize,
    kappa: Option<f64>,
    accuracy: Option<f64>,
    wellformed: usize,
    wellformed_modulo_typos: usize,
    illformed: usize,
}

pub struct MetricArgs {
    pub bleu_n: usize,
    pub brevity_penalty: bool,
    pub annotations: Option<PathBuf>,
    pub decoding: String,
}

pub fn metrics(ctx: &Run, args: &MetricArgs) -> Result<(), CliError> {
    let bleu = SelfBleuConfig { brevity_penalty: args.brevity_penalty };
    let mut rows = Vec::new();
    for slug in ctx.layout.slugs().stage()? {
        let (sets, meta) = load_completions(ctx, &slug)?;
        for set in &sets {
            rows.push(DiversityRow {
                config_hash: meta.config_hash.clone(),
                seed: meta.seed,
                decoding: slug.clone(),
                prompt_id: set.prompt_id.clone(),
                kept: set.kept().count(),
                unique_ratio: unique_ratio(set).ok(),
                self_bleu: self_bleu(&set.kept_continuations(), args.bleu_n, bleu).ok(),
            });
        }
    }
    let path = ctx.layout.metrics("diversity.csv");
    write_csv(&path, &rows).stage()?;
    println!("{} diversity rows -> {}", rows.len(), path.display());

    if let Some(ann_path) = &args.annotations {
        let text = std::fs::read_to_string(ann_path)
            .with_context(|| format!("cannot read annotations {}", ann_path.display()))
            .config()?;
        let annotations = parse_annotations(&text).config()?;
        let (records, meta) = load_labels(ctx, &args.decoding)?;
        let a = agreement(&records, &annotations, ctx.ambiguity);
        let g = grammaticality_counts(&annotations);
        let count = |k| g.get(&k).copied().unwrap_or(0);
        let row = AgreementCsvRow {
            config_hash: meta.config_hash,
            seed: meta.seed,
            decoding: meta.decoding,
            matched: a.matched,
            unmatched_annotations: a.unmatched_annotations,
            kappa: a.kappa,
            accuracy: a.accuracy,
            wellformed: count(Grammaticality::Wellformed),
            wellformed_modulo_typos: count(Grammaticality::WellformedModuloTypos),
            illformed: count(Grammaticality::Illformed),
        };
        let path = ctx.layout.metrics("agreement.csv");
        write_csv(&path, &[row]).stage()?;
        println!("agreement on {} annotations -> {}", a.matched, path.display());
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct SurprisalCsvRow {
    config_hash: String,
    seed: u64,
    backend: String,
    decoding: String,
    item_id: String,
    ambiguous_surprisal: f64,
    unambiguous_surprisal: f64,
    delta: f64,
    p_hat: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SurprisalSummaryRow {
    config_hash: String,
    seed: u64,
    backend: String,
    decoding: String,
    items: usize,
    excluded: usize,
    spearman_rho: Option<f64>,
}

pub fn surprisal(ctx: &Run, spec: &BackendSpec, env_url: Option<&str>, decoding: &str) -> Result<(), CliError> {
    let items = load_items(ctx)?;
    let rows: Vec<EstimateRow> = read_csv(&ctx.layout.estimates(decoding), "estimate").stage()?;
    let p_hat: HashMap<String, f64> = rows
        .iter()
        .filter(|r| r.prompt_type == PromptType::NoCue.to_string())
        .map(|r| (r.item_id.clone(), r.p_hat))
        .collect();
    let loaded = load_backend(spec, env_url, &items)?;
    let model = loaded.backend.model();
    let analysis = surprisal_gp_analysis(&items, model, &p_hat);
    for (id, why) in &analysis.excluded {
        log::info!("surprisal: {id} excluded: {why}");
    }
    let (config_hash_, seed) = rows.first().map(|r| (r.config_hash.clone(), r.seed)).unwrap_or_default();
    let backend = model.descriptor().name.clone();
    let out: Vec<SurprisalCsvRow> = analysis
        .rows
        .iter()
        .map(|r| SurprisalCsvRow {
            config_hash: config_hash_.clone(),
            seed,
            backend: backend.clone(),
            decoding: decoding.to_string(),
            item_id: r.item_id.clone(),
            ambiguous_surprisal: r.ambiguous_surprisal,
            unambiguous_surprisal: r.unambiguous_surprisal,
            delta: r.delta,
            p_hat: r.p_hat,
        })
        .collect();
    let summary = SurprisalSummaryRow {
        config_hash: config_hash_,
        seed,
        backend,
        decoding: decoding.to_string(),
        items: analysis.rows.len(),
        excluded: analysis.excluded.len(),
        spearman_rho: analysis.rho,
    };
    write_csv(&ctx.layout.metrics("surprisal.csv"), &out).stage()?;
    write_csv(&ctx.layout.metrics("surprisal_summary.csv"), &[&summary]).stage()?;
    match analysis.rho {
        Some(rho) => println!("surprisal: {} items, rho = {rho:.3}", analysis.rows.len()),
        None => println!("surprisal: {} items, rho undefined", analysis.rows.len()),
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct GroupRow {
    ambiguity: String,
    prompt_type: String,
    reading: String,
    backend: String,
    decoding: String,
    items: usize,
    mean: f64,
    median: f64,
    min: f64,
    max: f64,
    min_item: String,
    max_item: String,
}

#[derive(Debug, Serialize)]
struct GridRow {
    decoding: String,
    config_hash: String,
    seed: u64,
    no_cue: Option<f64>,
    post_locus_cue: Option<f64>,
    pre_locus_cue: Option<f64>,
    pre_post_locus_cues: Option<f64>,
}

#[derive(Debug, Serialize)]
struct BlendedRow {
    config_hash: String,
    seed: u64,
    decoding: String,
    prompt_type: String,
    blended_rate: Option<f64>,
}

/// Sort key placing pure sampling first, then nucleus and temperature rows
/// from mild to strong, then beam search.
fn grid_order(slug: &str) -> (u8, i64, String) {
    let parse = |s: &str| s.parse::<f64>().unwrap_or(0.0);
    if let Some(b) = slug.strip_prefix("beam") {
        return (3, parse(b) as i64, slug.into());
    }
    let (p, t) = slug
        .strip_prefix('p')
        .and_then(|s| s.split_once("_t"))
        .map(|(p, t)| (parse(p), parse(t)))
        .unwrap_or((1.0, 1.0));
    let key = |x: f64| (-x * 1e6) as i64;
    match (p == 1.0, t == 1.0) {
        (true, true) => (0, 0, slug.into()),
        (false, true) => (1, key(p), slug.into()),
        (true, false) => (2, key(t), slug.into()),
        (false, false) => (4, key(p), slug.into()),
    }
}

pub fn report(ctx: &Run) -> Result<(), CliError> {
    let mut slugs = ctx.layout.slugs().stage()?;
    slugs.sort_by_key(|s| grid_order(s));
    let prompts = load_prompts(ctx)?;
    let prompt_type: HashMap<String, String> = prompts.iter().map(|p| (p.id(), p.prompt_type.to_string())).collect();

    let mut all_rows: Vec<EstimateRow> = Vec::new();
    let mut grid = Vec::new();
    let mut discards = Vec::new();
    let mut blended = Vec::new();
    for slug in &slugs {
        let rows: Vec<EstimateRow> = read_csv(&ctx.layout.estimates(slug), "estimate").stage()?;
        let mean = |t: PromptType| {
            let t = t.to_string();
            let vals: Vec<f64> = rows.iter().filter(|r| r.prompt_type == t).map(|r| r.p_hat).collect();
            (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
        };
        let (labels, meta) = load_labels(ctx, slug)?;
        grid.push(GridRow {
            decoding: slug.clone(),
            config_hash: meta.config_hash.clone(),
            seed: meta.seed,
            no_cue: mean(PromptType::NoCue),
            post_locus_cue: mean(PromptType::PostLocusCue),
            pre_locus_cue: mean(PromptType::PreLocusCue),
            pre_post_locus_cues: mean(PromptType::PrePostLocusCues),
        });
        discards.extend(read_csv::<DiscardCsvRow>(&ctx.layout.discards(slug), "classify").stage()?);
        let mut by_type: BTreeMap<&str, Vec<&LabeledRecord>> = BTreeMap::new();
        for r in &labels {
            let t = prompt_type.get(&r.prompt_id).map(String::as_str).unwrap_or("unknown");
            by_type.entry(t).or_default().push(r);
        }
        for (t, records) in by_type {
            blended.push(BlendedRow {
                config_hash: meta.config_hash.clone(),
                seed: meta.seed,
                decoding: slug.clone(),
                prompt_type: t.to_string(),
                blended_rate: blended_rate(records),
            });
        }
        all_rows.extend(rows);
    }
    let groups: Vec<GroupRow> = aggregate(&all_rows)
        .into_iter()
        .map(|g| GroupRow {
            ambiguity: g.ambiguity,
            prompt_type: g.prompt_type,
            reading: g.reading,
            backend: g.backend,
            decoding: g.decoding,
            items: g.summary.n,
            mean: g.summary.mean,
            median: g.summary.median,
            min: g.summary.min,
            max: g.summary.max,
            min_item: g.summary.min_item,
            max_item: g.summary.max_item,
        })
        .collect();
    let l = &ctx.layout;
    write_csv(&l.report("estimates.csv"), &all_rows).stage()?;
    write_csv(&l.report("prompt_types.csv"), &groups).stage()?;
    write_csv(&l.report("decoding_grid.csv"), &grid).stage()?;
    write_csv(&l.report("discards.csv"), &discards).stage()?;
    write_csv(&l.report("blended.csv"), &blended).stage()?;
    for name in ["diversity.csv", "agreement.csv", "surprisal.csv", "surprisal_summary.csv"] {
        let src = l.metrics(name);
        if src.exists() {
            std::fs::copy(&src, l.report(name)).with_context(|| format!("cannot copy {}", src.display())).stage()?;
        }
    }
    println!("report: {} decoding configs, {} estimate rows -> {}", slugs.len(), all_rows.len(), l.report("").display());
    Ok(())
}
