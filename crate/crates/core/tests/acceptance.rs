//! Acceptance criteria. Runs without the libtest harness so every criterion
//! prints one PASS/FAIL line; exits non-zero if any fails.

use std::collections::HashMap;
use std::time::{Duration, Instant};

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use synprobe::classifier::{classify, detect_blended_npz, ClassifierConfig, DiscardReason, InterpretationLabel, LabeledRecord};
use synprobe::decoding::{
    apply_nucleus, apply_temperature, beam_search, crop_to_sentence, sample_set, transform_distribution, uniform01, DecodingConfig,
    EncodedPrompt,
};
use synprobe::lm::{BackendDescriptor, BackendError, LanguageModel, TokenDistribution, TokenId, Vocabulary};
use synprobe::materials::{AmbiguityType, PromptType};
use synprobe::metrics::{cohen_kappa, self_bleu, spearman, surprisal_gp_analysis, SelfBleuConfig};
use synprobe::parses::{align_words, read_conllu, DependencyParse};
use synprobe::pipeline::run_toy;
use synprobe::toy::{standard_items_of, ToyGrammar};
use synprobe::uncertainty::{aggregate, estimate, wilson_interval, Z95};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome, Duration);

fn check(ok: bool, detail: impl Into<String>) -> Outcome {
    if ok {
        Ok(detail.into())
    } else {
        Err(detail.into())
    }
}

fn random_probs(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    // Some exact zeros, and a wide dynamic range.
    let w: Vec<f64> = (0..len)
        .map(|_| {
            let u = uniform01(rng);
            if u < 0.1 {
                0.0
            } else {
                u.powi(4)
            }
        })
        .collect();
    let total: f64 = w.iter().sum();
    if total == 0.0 {
        let mut w = vec![0.0; len];
        w[0] = 1.0;
        return w;
    }
    w.iter().map(|x| x / total).collect()
}

fn oracle_temperature(p: &[f64], t: f64) -> Vec<f64> {
    let w: Vec<f64> = p.iter().map(|&x| if x == 0.0 { 0.0 } else { x.powf(1.0 / t) }).collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|x| x / total).collect()
}

fn oracle_nucleus(p: &[f64], top: f64) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..p.len()).collect();
    // Stable sort keeps lower indices first among equal probabilities.
    idx.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap());
    let mut keep = vec![false; p.len()];
    let mut mass = 0.0;
    for &i in &idx {
        keep[i] = true;
        mass += p[i];
        if mass >= top {
            break;
        }
    }
    let kept: f64 = (0..p.len()).filter(|&i| keep[i]).map(|i| p[i]).sum();
    (0..p.len()).map(|i| if keep[i] { p[i] / kept } else { 0.0 }).collect()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn transforms() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for case in 0..1000 {
        let len = 1 + (uniform01(&mut rng) * 40.0) as usize;
        let p = random_probs(&mut rng, len);
        let d = TokenDistribution::from_probs(&p);
        if apply_nucleus(&d, 1.0) != d || apply_temperature(&d, 1.0).unwrap() != d {
            return Err(format!("case {case}: unit parameter is not an exact identity"));
        }
        let t = 0.1 + uniform01(&mut rng) * 2.9;
        let top = 0.01 + uniform01(&mut rng) * 0.98;
        worst = worst.max(max_diff(&apply_temperature(&d, t).unwrap().probs(), &oracle_temperature(&p, t)));
        worst = worst.max(max_diff(&apply_nucleus(&d, top).probs(), &oracle_nucleus(&p, top)));
    }
    check(worst <= 1e-9, format!("1000 distributions, max abs error {worst:.1e}"))
}

/// Next-token distributions drawn from a hash of the whole context.
struct RandomModel {
    descriptor: BackendDescriptor,
    seed: u64,
}

impl LanguageModel for RandomModel {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        let mut h = self.seed;
        for &t in context {
            h = h.wrapping_mul(1_000_003).wrapping_add(t as u64 + 1);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(h);
        Ok(TokenDistribution::from_probs(&random_probs(&mut rng, self.descriptor.vocabulary.len())))
    }
}

fn random_model(words: &[&str], seed: u64) -> RandomModel {
    let vocabulary = Vocabulary::word_level(words.iter().map(|s| s.to_string()).collect(), None, "</s>").unwrap();
    RandomModel {
        descriptor: BackendDescriptor { name: "random".into(), vocabulary, max_context: 64 },
        seed,
    }
}

/// Best finished sequence over every continuation within the budget, or the
/// best unfinished one of full length if none finishes. Ties go to the
/// lexicographically smaller token sequence.
fn exhaustive(model: &RandomModel, prompt: &EncodedPrompt, budget: usize) -> Vec<TokenId> {
    let vocab = model.vocabulary();
    let better = |best: &Option<(f64, Vec<TokenId>)>, s: f64, t: &Vec<TokenId>| {
        best.as_ref().is_none_or(|(bs, bt)| s > *bs || (s == *bs && t < bt))
    };
    let mut done: Option<(f64, Vec<TokenId>)> = None;
    let mut open: Option<(f64, Vec<TokenId>)> = None;
    let mut stack = vec![(Vec::new(), 0.0)];
    while let Some((tokens, score)) = stack.pop() {
        let mut context = prompt.tokens.clone();
        context.extend(&tokens);
        let d = model.next_distribution(&context).unwrap();
        for (i, &lp) in d.logprobs().iter().enumerate() {
            if lp == f64::NEG_INFINITY {
                continue;
            }
            let mut next = tokens.clone();
            next.push(i as TokenId);
            let s = score + lp;
            let text = format!("{}{}", prompt.text, vocab.render(&next));
            let finished = i as TokenId == vocab.eos_id() || crop_to_sentence(&text, prompt.text.len()).1;
            if finished {
                if better(&done, s, &next) {
                    done = Some((s, next));
                }
            } else if next.len() < budget {
                stack.push((next, s));
            } else if better(&open, s, &next) {
                open = Some((s, next));
            }
        }
    }
    done.or(open).unwrap().1
}

fn beam_exactness() -> Outcome {
    let words = ["a", "b", ".", "c"];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for case in 0..200 {
        let v = 2 + (uniform01(&mut rng) * 4.0) as usize;
        let budget = 1 + (uniform01(&mut rng) * 4.0) as usize;
        let model = random_model(&words[..v - 1], 1000 + case);
        let prompt = EncodedPrompt::new(&model, "p", "a").unwrap();
        let mut config = DecodingConfig::for_vocabulary(model.vocabulary()).beam(16);
        config.token_budget = budget;
        let got = beam_search(&model, &prompt, &config).unwrap().generated_token_ids;
        let want = exhaustive(&model, &prompt, budget);
        if got != want {
            return Err(format!("case {case} (|V| = {v}, budget {budget}): beam {got:?}, exhaustive {want:?}"));
        }
    }
    Ok("200 random cases, |V| 2..=5, budget 1..=4".into())
}

/// First step draws from a fixed distribution; the second always ends the
/// sentence.
struct FirstStep {
    descriptor: BackendDescriptor,
    first: TokenDistribution,
    stop: TokenDistribution,
    prompt_len: usize,
}

impl LanguageModel for FirstStep {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.descriptor
    }
    fn next_distribution(&self, context: &[TokenId]) -> Result<TokenDistribution, BackendError> {
        Ok(if context.len() == self.prompt_len { self.first.clone() } else { self.stop.clone() })
    }
}

fn sampling_fidelity() -> Outcome {
    let words: Vec<String> = ["start", "w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8", "."].iter().map(|s| s.to_string()).collect();
    let vocabulary = Vocabulary::word_level(words, None, "</s>").unwrap();
    let v = vocabulary.len();
    let dot = vocabulary.id(".").unwrap() as usize;
    let mut first = vec![0.0; v];
    for (k, w) in ["w1", "w2", "w3", "w4", "w5", "w6", "w7", "w8"].iter().enumerate() {
        first[vocabulary.id(w).unwrap() as usize] = 1.0 / (k + 1) as f64;
    }
    let total: f64 = first.iter().sum();
    let first: Vec<f64> = first.iter().map(|x| x / total).collect();
    let mut stop = vec![0.0; v];
    stop[dot] = 1.0;
    let model = FirstStep {
        descriptor: BackendDescriptor { name: "first-step".into(), vocabulary, max_context: 64 },
        first: TokenDistribution::from_probs(&first),
        stop: TokenDistribution::from_probs(&stop),
        prompt_len: 1,
    };
    let prompt = EncodedPrompt::new(&model, "p", "start").unwrap();
    let base = {
        let mut c = DecodingConfig::for_vocabulary(model.vocabulary());
        c.samples = 10_000;
        c.seed = 7;
        c
    };
    let mut details = Vec::new();
    let mut ok = true;
    for (name, config) in [("pure", base.clone()), ("p=.9", base.clone().nucleus(0.9)), ("t=.75", base.clone().temperature(0.75))] {
        let expected = transform_distribution(&model.first, &config).unwrap().probs();
        let set = sample_set(&model, &prompt, &config).unwrap();
        let mut observed = vec![0usize; v];
        for c in &set.completions {
            observed[c.generated_token_ids[0] as usize] += 1;
        }
        let n = set.completions.len() as f64;
        let mut stat = 0.0;
        let mut cells = 0;
        for i in 0..v {
            if expected[i] == 0.0 {
                ok &= observed[i] == 0;
                continue;
            }
            let e = expected[i] * n;
            stat += (observed[i] as f64 - e).powi(2) / e;
            cells += 1;
        }
        let p_value = 1.0 - ChiSquared::new((cells - 1) as f64).unwrap().cdf(stat);
        ok &= p_value > 0.01;
        details.push(format!("{name} chi2={stat:.2} df={} p={p_value:.3}", cells - 1));
    }
    check(ok, details.join("; "))
}

fn gold_suite() -> Outcome {
    let read = read_conllu(include_str!("fixtures/gold.conllu"));
    if !read.errors.is_empty() {
        return Err(format!("{:?}", read.errors));
    }
    let by_id: HashMap<&str, &DependencyParse> = read.parses.iter().map(|p| (p.sentence_id.as_str(), p)).collect();
    let at = |id: &str, locus: usize, post: Option<usize>| {
        let p = by_id[id];
        let text = p.comments.iter().find_map(|c| c.strip_prefix("# text = ")).unwrap();
        align_words(p, text, locus, post).unwrap()
    };
    let c = ClassifierConfig::default();
    use AmbiguityType::*;
    use InterpretationLabel::*;
    let labels = [
        ("2a", Nps, 4, None, Np),
        ("2b", Nps, 4, Some(5), S),
        ("3a", Npz, 6, None, Np),
        ("3b", Npz, 6, Some(7), Z),
        ("4a", NounVerb, 5, None, Noun),
        ("4b", NounVerb, 5, None, Verb),
        ("c1-complex", Nps, 4, None, S),
        ("c1-error", Nps, 4, None, S),
    ];
    let mut failures = Vec::new();
    for (id, ambiguity, locus, post, want) in labels {
        let got = classify(&at(id, locus, post), &c, ambiguity);
        if got != want {
            failures.push(format!("{id}: {got} (want {want})"));
        }
    }
    let blended = [
        ("5-blended", 5, 6, true),
        ("t3-2b", 5, 6, false),
        ("3b", 6, 7, false),
        ("prepost-conj", 5, 6, false),
        ("prepost-plain", 6, 7, false),
    ];
    for (id, locus, post, want) in blended {
        if detect_blended_npz(&at(id, locus, Some(post)), &c) != want {
            failures.push(format!("{id}: blended should be {want}"));
        }
    }
    check(failures.is_empty(), if failures.is_empty() { "8 labels and 5 blended checks".into() } else { failures.join("; ") })
}

fn estimator() -> Outcome {
    let mut configs = 0;
    for a in 0..=40usize {
        for b in 0..=40usize {
            for discards in 0..=3usize {
                let mut recs: Vec<LabeledRecord> = Vec::new();
                for (label, n) in [(InterpretationLabel::S, a), (InterpretationLabel::Np, b)] {
                    for _ in 0..n {
                        recs.push(LabeledRecord {
                            prompt_id: "p".into(),
                            sample_index: recs.len(),
                            label,
                            discarded: false,
                            discard_reason: None,
                            blended: false,
                        });
                    }
                }
                for _ in 0..discards {
                    recs.push(LabeledRecord::discarded("p", recs.len(), DiscardReason::Other));
                }
                configs += 1;
                let result = estimate(&recs, AmbiguityType::Nps);
                if a + b == 0 {
                    if result.is_ok() {
                        return Err(format!("{discards} discards only: expected an error"));
                    }
                    continue;
                }
                let e = result.map_err(|e| e.to_string())?;
                let s = e.p_hat[&InterpretationLabel::S];
                let np = e.p_hat[&InterpretationLabel::Np];
                let want = a as f64 / (a + b) as f64;
                if s != want || np != 1.0 - want || s + np != 1.0 || e.discards != discards {
                    return Err(format!("S={a} NP={b} discards={discards}: p_hat {s}, {np}"));
                }
                for (label, p) in &e.p_hat {
                    let (lo, hi) = e.ci95[label];
                    if !(0.0 <= lo && lo <= *p && *p <= hi && hi <= 1.0) {
                        return Err(format!("S={a} NP={b}: interval ({lo}, {hi}) misses {p}"));
                    }
                }
                let (lo, hi) = wilson_interval(a, a + b, Z95);
                if (lo, hi) != e.ci95[&InterpretationLabel::S] {
                    return Err(format!("S={a} NP={b}: interval mismatch"));
                }
            }
        }
    }
    Ok(format!("{configs} count configurations"))
}

fn oracle_kappa(a: &[u8], b: &[u8]) -> Option<f64> {
    let k = 4;
    let n = a.len() as f64;
    let mut table = vec![vec![0usize; k]; k];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize][y as usize] += 1;
    }
    let p_o = (0..k).map(|i| table[i][i]).sum::<usize>() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: usize = table[i].iter().sum();
            let col: usize = (0..k).map(|j| table[j][i]).sum();
            row as f64 / n * col as f64 / n
        })
        .sum();
    ((1.0 - p_e).abs() > 1e-12).then(|| (p_o - p_e) / (1.0 - p_e))
}

fn oracle_ranks(x: &[f64]) -> Vec<f64> {
    x.iter()
        .map(|&v| {
            let less = x.iter().filter(|&&w| w < v).count() as f64;
            let equal = x.iter().filter(|&&w| w == v).count() as f64;
            less + (equal + 1.0) / 2.0
        })
        .collect()
}

fn oracle_spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    let (rx, ry) = (oracle_ranks(x), oracle_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    (vx > 0.0 && vy > 0.0).then(|| cov / (vx * vy).sqrt())
}

fn oracle_self_bleu(texts: &[Vec<&str>], n: usize, brevity: bool) -> f64 {
    let grams = |t: &[&str]| -> Vec<Vec<String>> {
        if t.len() < n {
            return Vec::new();
        }
        (0..=t.len() - n).map(|i| t[i..i + n].iter().map(|s| s.to_string()).collect()).collect()
    };
    let count = |list: &[Vec<String>], g: &Vec<String>| list.iter().filter(|x| *x == g).count();
    let mut sum = 0.0;
    for (i, cand) in texts.iter().enumerate() {
        let cg = grams(cand);
        if cg.is_empty() {
            continue;
        }
        let mut seen: Vec<&Vec<String>> = Vec::new();
        let mut clipped = 0;
        for g in &cg {
            if seen.contains(&g) {
                continue;
            }
            seen.push(g);
            let max_ref = (0..texts.len()).filter(|&j| j != i).map(|j| count(&grams(&texts[j]), g)).max().unwrap();
            clipped += count(&cg, g).min(max_ref);
        }
        let precision = clipped as f64 / cg.len() as f64;
        let mut bp = 1.0;
        if brevity {
            let c = cand.len() as f64;
            let mut r = None::<usize>;
            for (j, t) in texts.iter().enumerate() {
                if j == i {
                    continue;
                }
                let closer = match r {
                    None => true,
                    Some(best) => {
                        let (d, bd) = (t.len().abs_diff(cand.len()), best.abs_diff(cand.len()));
                        d < bd || (d == bd && t.len() < best)
                    }
                };
                if closer {
                    r = Some(t.len());
                }
            }
            bp = f64::min(1.0, (1.0 - r.unwrap() as f64 / c).exp());
        }
        sum += precision * bp;
    }
    sum / texts.len() as f64
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut draw = |k: usize| (uniform01(&mut rng) * k as f64) as usize;
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let len = 2 + draw(30);
        let a: Vec<u8> = (0..len).map(|_| draw(4) as u8).collect();
        let b: Vec<u8> = a.iter().map(|&x| if draw(3) == 0 { draw(4) as u8 } else { x }).collect();
        match (cohen_kappa(&a, &b).ok(), oracle_kappa(&a, &b)) {
            (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
            (None, None) => {}
            (x, y) => return Err(format!("kappa case {case}: {x:?} vs {y:?}")),
        }

        let len = 3 + draw(20);
        let x: Vec<f64> = (0..len).map(|_| draw(8) as f64).collect();
        let y: Vec<f64> = (0..len).map(|_| draw(8) as f64).collect();
        match (spearman(&x, &y).ok(), oracle_spearman(&x, &y)) {
            (Some(p), Some(q)) => worst = worst.max((p - q).abs()),
            (None, None) => {}
            (p, q) => return Err(format!("spearman case {case}: {p:?} vs {q:?}")),
        }

        let vocab = ["a", "b", "c", "d", "e"];
        let texts: Vec<Vec<&str>> = (0..2 + draw(5)).map(|_| (0..draw(7)).map(|_| vocab[draw(5)]).collect()).collect();
        let joined: Vec<String> = texts.iter().map(|t| t.join(" ")).collect();
        let refs: Vec<&str> = joined.iter().map(String::as_str).collect();
        for n in [1, 2] {
            for brevity in [true, false] {
                let got = self_bleu(&refs, n, SelfBleuConfig { brevity_penalty: brevity }).unwrap();
                worst = worst.max((got - oracle_self_bleu(&texts, n, brevity)).abs());
            }
        }
    }
    // Both-A 40, both-B 40, 10 A/B, 10 B/A.
    let mut a = vec![0u8; 40];
    let mut b = vec![0u8; 40];
    a.extend([1u8; 40]);
    b.extend([1u8; 40]);
    a.extend([0u8; 10]);
    b.extend([1u8; 10]);
    a.extend([1u8; 10]);
    b.extend([0u8; 10]);
    let hand = cohen_kappa(&a, &b).unwrap();
    check(worst <= 1e-9 && (hand - 0.6).abs() < 1e-12, format!("100 instances, max abs error {worst:.1e}; hand kappa {hand}"))
}

fn end_to_end() -> Outcome {
    let grammar = ToyGrammar::standard();
    let items = standard_items_of(AmbiguityType::Nps);
    let mut config = DecodingConfig::for_vocabulary(grammar.model().vocabulary());
    config.samples = 1000;
    config.seed = 2024;
    let out = run_toy(&grammar, &items, AmbiguityType::Nps, &config, &ClassifierConfig::default()).map_err(|e| e.to_string())?;
    let groups = aggregate(&out.rows);
    let mean = |t: PromptType| groups.iter().find(|g| g.prompt_type == t.to_string()).map(|g| g.summary.mean);
    let nocue = mean(PromptType::NoCue).ok_or("no NoCue estimates")?;
    let cued: Vec<f64> = [PromptType::PostLocusCue, PromptType::PreLocusCue, PromptType::PrePostLocusCues]
        .iter()
        .map(|&t| mean(t).unwrap_or(f64::NAN))
        .collect();
    let cued_min = cued.iter().copied().fold(f64::INFINITY, f64::min);

    let p_hat: HashMap<String, f64> = out
        .rows
        .iter()
        .filter(|r| r.prompt_type == PromptType::NoCue.to_string())
        .map(|r| (r.item_id.clone(), r.p_hat))
        .collect();
    let analysis = surprisal_gp_analysis(&items, grammar.model(), &p_hat);
    let rho = analysis.rho.ok_or("rho undefined")?;
    check(
        (nocue - 0.30).abs() <= 0.05 && cued_min >= 0.97 && rho < 0.0,
        format!("NoCue mean {nocue:.4}, cued means {cued:.3?}, rho {rho:.3}"),
    )
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("decoding-transform oracles", transforms, Duration::from_secs(10)),
        ("beam-search exactness", beam_exactness, Duration::from_secs(30)),
        ("sampling fidelity", sampling_fidelity, Duration::MAX),
        ("classifier gold suite", gold_suite, Duration::from_secs(1)),
        ("estimator correctness", estimator, Duration::MAX),
        ("metric oracles", metric_oracles, Duration::MAX),
        ("end-to-end desk-scale run", end_to_end, Duration::from_secs(300)),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let start = Instant::now();
        let outcome = run();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(d) if elapsed > limit => Err(format!("{d}; took {elapsed:.2?}, limit {limit:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {name}: {detail} ({elapsed:.2?})"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name}: {detail} ({elapsed:.2?})");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 7 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
