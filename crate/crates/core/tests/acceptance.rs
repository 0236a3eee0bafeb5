// SPDX-License-Identifier: MIT OR Apache-2.0

//! Acceptance checks, one PASS/FAIL line each. Exits non-zero if any fail.
//!
//! Tolerances: additivity and linearity 1e-5 absolute on logits and
//! vectors, F1 agreement 1e-12, every other comparison exact.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempsteer_core::datasets::{default_fewshot, DatasetSchema};
use tempsteer_core::engine::{InjectionPlan, TapRequest, Tensor};
use tempsteer_core::evalkit::{f1_max, normalize_answer, token_f1, year_avg_f1, ScoredAnswer, YearRange};
use tempsteer_core::steering::{
    build_layer_vector, build_plan, temporal_prompt_set, LayerMode, PromptStyle, SteeringSpec,
    WeightedPrompt,
};
use tempsteer_core::sweep::{emit_report, expected_row_count, Experiment, ExperimentConfig, ExperimentMode};

use common::{bits, bundle, question_tokens, world};

const LINEAR_TOL: f32 = 1e-5;
const F1_TOL: f64 = 1e-12;

type Check = std::result::Result<String, String>;
type Expected = (PromptStyle, LayerMode, Vec<(&'static str, f32)>);
type Criterion = (&'static str, fn() -> Check, Duration);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn random_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f32) -> Tensor {
    Tensor::new(vec![rows, cols], (0..rows * cols).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn zero_injection_identity() -> Check {
    let b = bundle(2, 1);
    for i in 0..5 {
        let tokens = question_tokens(&b, i);
        let base = b.prefill(&tokens, &TapRequest::none(), None).map_err(err)?;
        for layer in 0..2 {
            let plan = InjectionPlan::single(layer, Tensor::zeros(vec![3, b.d_model()])).map_err(err)?;
            let z = b.prefill(&tokens, &TapRequest::none(), Some(&plan)).map_err(err)?;
            ensure(bits(base.logits.data()) == bits(z.logits.data()), || {
                format!("prompt {i} layer {layer}: logits differ")
            })?;
        }
    }
    Ok("5 prompts x 2 layers bit-identical".into())
}

fn tap_inject_consistency() -> Check {
    let b = bundle(4, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for layer in 0..4 {
        let tokens = question_tokens(&b, layer);
        let base = b.prefill(&tokens, &TapRequest::layers([layer]), None).map_err(err)?;
        let ae = random_tensor(&mut rng, 4, b.d_model(), 1.0);
        let plan = InjectionPlan::single(layer, ae.clone()).map_err(err)?;
        let steered = b.prefill(&tokens, &TapRequest::layers([layer]), Some(&plan)).map_err(err)?;
        let mut expected = base.tapped[&layer].data().to_vec();
        for (e, a) in expected.iter_mut().zip(ae.data()) {
            *e += a;
        }
        ensure(bits(steered.tapped[&layer].data()) == bits(&expected), || {
            format!("layer {layer}: tapped residual is not h + ae")
        })?;
        // re-entering at the tap point with the steered residual gives the steered logits
        let resumed = b.continue_from(layer, &steered.tapped[&layer]).map_err(err)?;
        ensure(bits(resumed.data()) == bits(steered.logits.data()), || {
            format!("layer {layer}: resuming from the tap changes the logits")
        })?;
    }
    Ok("4 layers bit-identical".into())
}

fn linearity() -> Check {
    let b = bundle(4, 3);
    let d = b.d_model();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0f32;
    for pair in 0..20 {
        let layer = rng.random_range(0..4);
        let mtl = rng.random_range(1..5);
        let tokens = question_tokens(&b, pair);
        let u = random_tensor(&mut rng, mtl, d, 1.0);
        let v = random_tensor(&mut rng, mtl, d, 1.0);
        let mut sum = u.clone();
        sum.add_assign(&v).map_err(err)?;
        let joint = b
            .prefill(&tokens, &TapRequest::none(), Some(&InjectionPlan::single(layer, sum).map_err(err)?))
            .map_err(err)?
            .logits;
        let mut after_u = b
            .prefill(&tokens, &TapRequest::layers([layer]), Some(&InjectionPlan::single(layer, u).map_err(err)?))
            .map_err(err)?
            .tapped
            .remove(&layer)
            .unwrap()
            .into_data();
        for (x, a) in after_u.iter_mut().zip(v.data()) {
            *x += a;
        }
        let seq = b
            .continue_from(layer, &Tensor::new(vec![tokens.len(), d], after_u).map_err(err)?)
            .map_err(err)?;
        for (a, c) in joint.data().iter().zip(seq.data()) {
            worst = worst.max((a - c).abs());
        }
        // vector side: c1*h1 + c2*h2 from two equal-length prompts
        let (y1, y2) = (rng.random_range(1945..=1975), rng.random_range(1945..=1975));
        let (c1, c2) = (rng.random_range(0.5f32..4.0), rng.random_range(-4.0f32..-0.5));
        let spec = SteeringSpec::new(
            PromptStyle::ContrastingPair,
            y1,
            vec![WeightedPrompt::new(y1.to_string(), c1), WeightedPrompt::new(y2.to_string(), c2)],
        )
        .map_err(err)?;
        let ae = build_layer_vector(&b, &spec, layer).map_err(err)?;
        let t = TapRequest::layers([layer]);
        let h1 = b.prefill(&b.encode_prompt(&y1.to_string()), &t, None).map_err(err)?.tapped.remove(&layer).unwrap();
        let h2 = b.prefill(&b.encode_prompt(&y2.to_string()), &t, None).map_err(err)?.tapped.remove(&layer).unwrap();
        for ((a, x1), x2) in ae.data().iter().zip(h1.data()).zip(h2.data()) {
            worst = worst.max((a - (c1 * x1 + c2 * x2)).abs());
        }
    }
    ensure(worst <= LINEAR_TOL, || format!("max deviation {worst:e} > {LINEAR_TOL:e}"))?;
    Ok(format!("20 pairs, max deviation {worst:e}"))
}

fn cancellation() -> Check {
    let b = bundle(6, 4);
    for text in ["1950", "the year is 1950", "recent"] {
        let spec = SteeringSpec::new(
            PromptStyle::ContrastingPair,
            1950,
            vec![WeightedPrompt::new(text, 2.5), WeightedPrompt::new(text, -2.5)],
        )
        .map_err(err)?;
        let plan = build_plan(&b, &spec, LayerMode::Multi { lo: 0, hi: 5 }).map_err(err)?;
        for inj in plan.entries() {
            let m = inj.ae.max_abs();
            ensure(m == 0.0, || format!("`{text}` layer {}: max |ae| = {m:e}", inj.layer))?;
        }
    }
    Ok("3 prompts x 6 layers, max |ae| = 0".into())
}

fn one_layer_multi_is_single() -> Check {
    let b = bundle(8, 5);
    for style in PromptStyle::ALL {
        let spec = temporal_prompt_set(style, 1960, LayerMode::single(4)).map_err(err)?;
        let single = build_plan(&b, &spec, LayerMode::single(4)).map_err(err)?;
        let multi = build_plan(&b, &spec, LayerMode::Multi { lo: 4, hi: 4 }).map_err(err)?;
        ensure(single == multi, || format!("{style}: plans differ"))?;
        for i in 0..3 {
            let tokens = question_tokens(&b, i);
            let a = b.prefill(&tokens, &TapRequest::none(), Some(&single)).map_err(err)?;
            let c = b.prefill(&tokens, &TapRequest::none(), Some(&multi)).map_err(err)?;
            ensure(bits(a.logits.data()) == bits(c.logits.data()), || format!("{style}: logits differ"))?;
        }
    }
    Ok("3 styles x 3 prompts bit-identical".into())
}

fn cache_consistency() -> Check {
    let b = bundle(6, 6);
    let mut checked = 0;
    for i in 0..10 {
        let tokens = question_tokens(&b, i);
        let style = PromptStyle::ALL[i % 3];
        let mode = if i % 2 == 0 { LayerMode::single(4) } else { LayerMode::multi_to(5) };
        let spec = temporal_prompt_set(style, 1950 + i as i32, mode).map_err(err)?;
        let plan = build_plan(&b, &spec, mode).map_err(err)?;
        for plan in [None, Some(&plan)] {
            let cached = b.generate(&tokens, plan, 8).map_err(err)?;
            let full = b.generate_uncached(&tokens, plan, 8).map_err(err)?;
            ensure(cached == full, || format!("prompt {i}: {cached:?} != {full:?}"))?;
            checked += 1;
        }
    }
    Ok(format!("{checked} generations, max_new 8, identical"))
}

/// Regex-free, allocation-heavy reference: explicit char filters and a
/// counting map.
fn oracle_f1(p: &str, g: &str) -> f64 {
    let toks = |s: &str| -> Vec<String> {
        let cleaned: String = s
            .to_lowercase()
            .chars()
            .filter(|c| !(c.is_ascii() && (c.is_ascii_punctuation())))
            .collect();
        cleaned
            .split_whitespace()
            .filter(|w| *w != "a" && *w != "an" && *w != "the")
            .map(String::from)
            .collect()
    };
    let (p, g) = (toks(p), toks(g));
    if p.is_empty() || g.is_empty() {
        return f64::from(u8::from(p.is_empty() && g.is_empty()));
    }
    let mut counts: BTreeMap<&str, i64> = BTreeMap::new();
    for t in &g {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0;
    for t in &p {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let (pr, rc) = (common as f64 / p.len() as f64, common as f64 / g.len() as f64);
    2.0 * pr * rc / (pr + rc)
}

fn f1_oracle() -> Check {
    const WORDS: [&str; 12] = ["the", "An", "paris", "Paris,", "2022", "year.", "a", "Voss", "U.S.", "x", "x!", "leader"];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let answer = |rng: &mut ChaCha8Rng| -> String {
        (0..rng.random_range(0..6))
            .map(|_| WORDS[rng.random_range(0..WORDS.len())])
            .collect::<Vec<_>>()
            .join(if rng.random_bool(0.5) { " " } else { "  " })
    };
    for _ in 0..200 {
        let p = answer(&mut rng);
        let g = answer(&mut rng);
        let (ours, theirs) = (token_f1(&p, &g), oracle_f1(&p, &g));
        ensure((ours - theirs).abs() <= F1_TOL, || format!("{p:?}/{g:?}: {ours} vs {theirs}"))?;
    }
    ensure(normalize_answer("The  U.S.!") == "us", || "normalization".into())?;
    ensure((token_f1("the year 2022", "2022") - 2.0 / 3.0).abs() <= F1_TOL, || "2/3 example".into())?;
    let range = YearRange::new(2000, 2009).map_err(err)?;
    for _ in 0..50 {
        let mut table: BTreeMap<String, BTreeMap<i32, f64>> = BTreeMap::new();
        for q in 0..rng.random_range(1..10) {
            table.insert(format!("q{q}"), range.years().map(|y| (y, rng.random_range(0.0..=1.0))).collect());
        }
        let fmax = f1_max(&table, range).map_err(err)?;
        for y in range.years() {
            let scored: Vec<ScoredAnswer> = table
                .iter()
                .map(|(q, row)| ScoredAnswer {
                    question_id: q.clone(),
                    year: y,
                    prediction: String::new(),
                    f1: row[&y],
                })
                .collect();
            let avg = year_avg_f1(&scored).map_err(err)?;
            ensure(fmax + F1_TOL >= avg, || format!("f1_max {fmax} < avg {avg} at {y}"))?;
        }
    }
    Ok("200 pairs agree, f1_max >= avg on 50 tables".into())
}

fn coefficient_table() -> Check {
    let expect: [Expected; 6] = [
        (PromptStyle::YearOnly, LayerMode::single(6), vec![("2015", 4.0)]),
        (PromptStyle::YearOnly, LayerMode::multi_to(10), vec![("2015", 1.0)]),
        (PromptStyle::ContextPhrase, LayerMode::single(6), vec![("the year is 2015", 4.0)]),
        (PromptStyle::ContextPhrase, LayerMode::multi_to(10), vec![("the year is 2015", 1.0)]),
        (PromptStyle::ContrastingPair, LayerMode::single(6), vec![("2015", 4.0), ("recent", -2.0)]),
        (PromptStyle::ContrastingPair, LayerMode::multi_to(10), vec![("2015", 2.0), ("recent", -1.0)]),
    ];
    for (style, mode, want) in expect {
        let spec = temporal_prompt_set(style, 2015, mode).map_err(err)?;
        let got: Vec<(&str, f32)> = spec.prompts().iter().map(|p| (p.text.as_str(), p.coefficient)).collect();
        ensure(got == want, || format!("{style} {mode}: {got:?}"))?;
    }
    ensure(LayerMode::multi_to(10).layers().first() == Some(&4), || "multi start".into())?;
    Ok("6 (style, mode) entries match".into())
}

fn sweep_accounting() -> Check {
    let dir = tempfile::tempdir().map_err(err)?;
    let w = world();
    let b = bundle(8, 8);
    for (k, mode) in [
        ExperimentMode::SweepSingle { lo: 4, hi: 7 },
        ExperimentMode::SweepMulti { lo: 4, hi_max: 7 },
    ]
    .into_iter()
    .enumerate()
    {
        let config = ExperimentConfig {
            model: "in-memory".into(),
            dataset: "in-memory".into(),
            schema: DatasetSchema::Hog,
            years: vec![1950, 1970],
            styles: PromptStyle::ALL.to_vec(),
            mode,
            f1max_range: Some(YearRange::new(1945, 1975).map_err(err)?),
            fewshot: None,
            out: dir.path().into(),
            seed: 0,
            limit: Some(3),
            max_new: 3,
            coefficients: Default::default(),
        };
        let want = expected_row_count(&config);
        ensure(want == 24, || format!("{mode:?}: expected_row_count {want}"))?;
        let exp = Experiment::new(config, b.clone(), w.records.clone(), default_fewshot()).map_err(err)?;
        let rows = exp.run().map_err(err)?;
        ensure(rows.len() == 24, || format!("{mode:?}: {} rows", rows.len()))?;
        let a = emit_report(&rows, &dir.path().join(format!("{k}-a"))).map_err(err)?;
        let c = emit_report(&rows, &dir.path().join(format!("{k}-b"))).map_err(err)?;
        let (x, y) = (std::fs::read(&a.rows_csv).map_err(err)?, std::fs::read(&c.rows_csv).map_err(err)?);
        ensure(x == y, || format!("{mode:?}: re-emitted CSV differs"))?;
        let lines = String::from_utf8_lossy(&x).lines().count();
        ensure(lines == 25, || format!("{mode:?}: {lines} CSV lines"))?;
    }
    Ok("single 24 rows, multi 24 rows, CSV byte-identical".into())
}

fn main() -> ExitCode {
    let checks: [Criterion; 9] = [
        ("zero_injection_identity", zero_injection_identity, Duration::from_secs(1)),
        ("tap_inject_consistency", tap_inject_consistency, Duration::from_secs(1)),
        ("injection_linearity", linearity, Duration::from_secs(5)),
        ("contrast_cancellation", cancellation, Duration::from_secs(1)),
        ("multi_one_layer_equals_single", one_layer_multi_is_single, Duration::from_secs(1)),
        ("kv_cache_consistency", cache_consistency, Duration::from_secs(10)),
        ("f1_oracle_agreement", f1_oracle, Duration::from_secs(5)),
        ("prompt_style_coefficients", coefficient_table, Duration::from_secs(1)),
        ("sweep_row_accounting", sweep_accounting, Duration::from_secs(10)),
    ];
    let mut failed = 0;
    for (name, check, budget) in checks {
        let started = Instant::now();
        let outcome = check();
        let elapsed = started.elapsed();
        let (status, detail) = match outcome {
            Ok(d) if elapsed <= budget => ("PASS", d),
            Ok(d) => ("FAIL", format!("{d}; took {elapsed:.2?}, budget {budget:?}")),
            Err(e) => ("FAIL", e),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!("{status} {name} ({:.3}s): {detail}", elapsed.as_secs_f64());
    }
    println!("{} passed, {failed} failed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
