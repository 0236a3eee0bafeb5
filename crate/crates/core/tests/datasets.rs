// SPDX-License-Identifier: MIT OR Apache-2.0

mod common;

use proptest::prelude::*;
use regex::Regex;
use tempsteer_core::datasets::{
    answers_at, ask, build_prompt, default_fewshot, filter_by_relative_f1, load_srot, parse_srot,
    save_srot, select_by_score, DatasetSchema, FewShotExample, FilterConfig, PromptMode, SrotRecord,
    TimelineSpan,
};
use tempsteer_core::engine::ModelBundle;
use tempsteer_core::evalkit::token_f1;
use tempsteer_core::synth::{ToyWorld, ToyWorldSpec};
use tempsteer_core::Error;

use common::{bundle, world};

#[test]
fn toy_world_round_trips_through_disk() {
    let w = world();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("hog.json");
    save_srot(&path, &w.records).unwrap();
    for schema in [DatasetSchema::Hog, DatasetSchema::Taqa] {
        let back = load_srot(&path, schema).unwrap();
        assert_eq!(back.len(), 20);
        assert_eq!(back, w.records);
    }
}

#[test]
fn overlapping_spans_name_the_record() {
    let mut records = world().records;
    records[3].timeline[1].start = records[3].timeline[0].end;
    let text = serde_json::to_string(&records).unwrap();
    match parse_srot(&text) {
        Err(Error::Record { id, .. }) => assert_eq!(id, records[3].id),
        other => panic!("expected record error, got {other:?}"),
    }
}

#[test]
fn empty_and_malformed_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.json");
    std::fs::write(&path, "").unwrap();
    assert!(load_srot(&path, DatasetSchema::Hog).unwrap().is_empty());
    std::fs::write(&path, "[]").unwrap();
    assert!(load_srot(&path, DatasetSchema::Hog).unwrap().is_empty());
    std::fs::write(&path, "{not json").unwrap();
    assert!(matches!(load_srot(&path, DatasetSchema::Hog), Err(Error::Json { .. })));
    assert!(matches!(
        load_srot(&dir.path().join("missing.json"), DatasetSchema::Hog),
        Err(Error::Io { .. })
    ));
}

#[test]
fn duplicate_ids_and_bad_templates() {
    let mut records = world().records;
    records[1].id = records[0].id.clone();
    assert!(parse_srot(&serde_json::to_string(&records).unwrap()).is_err());
    let mut records = world().records;
    records[2].explicit_template = "Who led it?".into();
    assert!(parse_srot(&serde_json::to_string(&records).unwrap()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn random_worlds_round_trip(seed in any::<u64>(), n in 1usize..24, tenure in 1i32..12) {
        let spec = ToyWorldSpec { seed, n_entities: n, max_tenure: tenure, ..ToyWorldSpec::default() };
        let w = ToyWorld::generate(&spec);
        let text = serde_json::to_string(&w.records).unwrap();
        prop_assert_eq!(parse_srot(&text).unwrap(), w.records.clone());
        // exactly one span covers each year
        for r in &w.records {
            for y in spec.years.years() {
                prop_assert_eq!(r.timeline.iter().filter(|s| s.contains(y)).count(), 1);
                prop_assert!(!answers_at(r, y).is_empty());
            }
            prop_assert!(answers_at(r, spec.years.end + 1).is_empty());
        }
    }
}

#[test]
fn relative_prompts_never_mention_a_year() {
    let year = Regex::new(r"\d{4}").unwrap();
    let fewshot = default_fewshot();
    for r in &world().records {
        let p = build_prompt(r, PromptMode::Relative, &fewshot).unwrap();
        assert!(!year.is_match(&p), "{p}");
        assert!(p.ends_with(&format!("Q: {}\nA:", r.relative_question)));
        let e = build_prompt(r, PromptMode::Explicit(1961), &fewshot).unwrap();
        assert!(e.ends_with("Q: as of the year 1961, Who was the leader of Aland in 1961?\nA:") || r.subject != "Aland");
        assert_eq!(e.matches("as of the year 1961,").count(), fewshot.len() + 1);
    }
}

#[test]
fn relative_prompts_reject_dated_examples() {
    let r = &world().records[0];
    let dated = vec![FewShotExample {
        question: "Who won in 1999?".into(),
        answer: "Ana".into(),
    }];
    assert!(matches!(build_prompt(r, PromptMode::Relative, &dated), Err(Error::Prompt(_))));
    assert!(build_prompt(r, PromptMode::Explicit(1950), &dated).is_ok());
}

/// Greedy answer recomputed without the cache or the crate's prompt cutting.
fn reference_answer(b: &ModelBundle, record: &SrotRecord, max_new: usize) -> String {
    let prompt = build_prompt(record, PromptMode::Relative, &default_fewshot()).unwrap();
    let out = b.generate_uncached(&b.encode_prompt(&prompt), None, max_new).unwrap();
    let words: Vec<&str> = out
        .iter()
        .take_while(|&&t| !b.vocab().is_stop(t))
        .filter_map(|&t| b.vocab().token(t))
        .filter(|w| !matches!(*w, "<pad>" | "<bos>"))
        .collect();
    words.join(" ")
}

#[test]
fn filter_keeps_records_the_model_already_answers() {
    let b = bundle(3, 41);
    let max_new = 4;
    let cutoff = 1970;
    let mut records = world().records;
    // Half the records get the model's own prediction as the cutoff gold.
    for (i, r) in records.iter_mut().enumerate() {
        let pred = reference_answer(&b, r, max_new);
        assert_eq!(pred, ask(&b, &build_prompt(r, PromptMode::Relative, &default_fewshot()).unwrap(), None, max_new).unwrap());
        if i % 2 == 0 && !pred.is_empty() {
            let span = r.timeline.iter_mut().find(|s| s.contains(cutoff)).unwrap();
            span.answers = vec![pred];
        }
    }
    let expected: Vec<String> = records
        .iter()
        .filter(|r| {
            let pred = reference_answer(&b, r, max_new);
            answers_at(r, cutoff).iter().map(|g| token_f1(&pred, g)).fold(0.0, f64::max) > 0.5
        })
        .map(|r| r.id.clone())
        .collect();
    assert!(!expected.is_empty());

    let config = FilterConfig {
        max_new,
        ..FilterConfig::new(cutoff, usize::MAX)
    };
    let kept = filter_by_relative_f1(&records, &b, &default_fewshot(), &config);
    assert_eq!(kept.iter().map(|r| r.id.clone()).collect::<Vec<_>>(), expected);

    // Filtering again keeps everything it kept before.
    assert_eq!(filter_by_relative_f1(&kept, &b, &default_fewshot(), &config), kept);

    let strict = FilterConfig { threshold: 1.01, ..config.clone() };
    assert!(filter_by_relative_f1(&records, &b, &default_fewshot(), &strict).is_empty());

    let capped = FilterConfig { take: 2, ..config };
    assert_eq!(filter_by_relative_f1(&records, &b, &default_fewshot(), &capped), kept[..2.min(kept.len())]);
}

#[test]
fn records_without_a_cutoff_gold_score_zero() {
    let b = bundle(2, 1);
    let records = vec![SrotRecord {
        id: "late".into(),
        subject: "Aland".into(),
        relation: "leader".into(),
        relative_question: "Who is the current leader of Aland?".into(),
        explicit_template: "Who was the leader of Aland in <YEAR>?".into(),
        timeline: vec![TimelineSpan {
            answers: vec!["Ana Voss".into()],
            start: 1990,
            end: 1999,
        }],
    }];
    let config = FilterConfig {
        threshold: -1.0,
        ..FilterConfig::new(1950, 10)
    };
    let kept = filter_by_relative_f1(&records, &b, &default_fewshot(), &config);
    assert_eq!(kept.len(), 1, "score 0 is above a negative threshold");
    assert!(select_by_score(&records, &[0.0], 0.0, 10).is_empty());
}
