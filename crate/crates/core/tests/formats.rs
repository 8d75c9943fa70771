use std::fs;

use dshift::corpus::{build_candidate_sets, expand_instances, load_candidate_sets, load_dialogues, load_instances};
use dshift::harness::{load_predictions, predictions_from_records, PredictionRecord};
use dshift::importance::{load_importance, ImportanceMap};
use dshift::io::to_jsonl;
use dshift::lexicon::{build_vocab_stats, SynonymLexicon, VocabStats};
use dshift::metrics::{evaluate, load_reports, EceBinning, EceMode};
use dshift::pipeline::{evaluate_predictions, score_dataset, EvalOptions, ToySuiteConfig};
use dshift::shift_uw::{shift_dataset_uw, UwConfig};
use dshift::lexicon::ReplacementMode;
use dshift::synth::{generate, SynthConfig};
use dshift::Error;

fn small() -> dshift::synth::SynthCorpus {
    generate(&SynthConfig {
        train_dialogues: 60,
        dev_dialogues: 5,
        test_dialogues: 15,
        ..SynthConfig::default()
    })
}

#[test]
fn every_file_format_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = small();
    let stats = build_vocab_stats(&c.train);
    let instances = expand_instances(&c.test).unwrap();
    let sets = build_candidate_sets(&instances, 10, 2).unwrap();
    let (shifted, _) = shift_dataset_uw(
        &instances,
        &UwConfig::with_ratio(ReplacementMode::unknown(), 0.3, 4).unwrap(),
        &c.lexicon,
        &stats,
        None,
    )
    .unwrap();
    let importance = ImportanceMap::fallback(&instances, &stats);
    let preds = score_dataset(&instances, &sets, &ToySuiteConfig::default()).unwrap();
    let records: Vec<_> = preds.iter().map(|p| p.to_record()).collect();
    let rows = evaluate_predictions(&preds, &sets, &EvalOptions::new("source")).unwrap();

    let p = |name: &str| dir.path().join(name);
    fs::write(p("d.jsonl"), to_jsonl(&c.test)).unwrap();
    fs::write(p("i.jsonl"), to_jsonl(&shifted)).unwrap();
    fs::write(p("c.jsonl"), to_jsonl(&sets)).unwrap();
    fs::write(p("v.jsonl"), to_jsonl(&stats.to_records())).unwrap();
    fs::write(p("l.jsonl"), to_jsonl(&c.lexicon.to_records())).unwrap();
    fs::write(p("m.jsonl"), to_jsonl(&importance.to_records())).unwrap();
    fs::write(p("p.jsonl"), to_jsonl(&records)).unwrap();
    fs::write(p("r.jsonl"), to_jsonl(&rows)).unwrap();

    assert_eq!(load_dialogues(&p("d.jsonl")).unwrap(), c.test);
    assert_eq!(load_instances(&p("i.jsonl")).unwrap(), shifted);
    assert_eq!(load_candidate_sets(&p("c.jsonl")).unwrap(), sets);
    assert_eq!(VocabStats::load(&p("v.jsonl")).unwrap(), stats);
    assert_eq!(SynonymLexicon::load(&p("l.jsonl")).unwrap(), c.lexicon);
    assert_eq!(load_importance(&p("m.jsonl")).unwrap(), importance);
    assert_eq!(load_predictions(&p("p.jsonl")).unwrap(), preds);
    assert_eq!(load_reports(&p("r.jsonl")).unwrap(), rows);
}

#[test]
fn parse_errors_carry_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.jsonl");
    fs::write(&path, "{\"id\":\"a\",\"utterances\":[\"x\",\"y\"]}\n\n{oops\n").unwrap();
    match load_dialogues(&path) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn prediction_fields_member_and_pass_are_optional() {
    let line = r#"{"instance_id":"a#1","logits":[1.0,0.0],"method":"vanilla"}"#;
    let rec: PredictionRecord = serde_json::from_str(line).unwrap();
    assert_eq!((rec.member, rec.pass), (None, None));
    assert_eq!(serde_json::to_string(&rec).unwrap(), line);
    let dup = vec![rec.clone(), rec];
    assert!(matches!(predictions_from_records(dup), Err(Error::DuplicateId(_))));
}

#[test]
fn evaluate_is_permutation_invariant() {
    let c = small();
    let instances = expand_instances(&c.test).unwrap();
    let sets = build_candidate_sets(&instances, 10, 9).unwrap();
    let preds = score_dataset(&instances, &sets, &ToySuiteConfig::default()).unwrap();
    let vanilla: Vec<_> = preds.iter().filter(|p| p.method == "vanilla").map(|p| p.vector.clone()).collect();
    let mut reversed = vanilla.clone();
    reversed.reverse();
    let a = evaluate(&vanilla, &sets, "vanilla", "s", EceBinning::default(), EceMode::Top1).unwrap();
    let b = evaluate(&reversed, &sets, "vanilla", "s", EceBinning::default(), EceMode::Top1).unwrap();
    assert_eq!(a, b);
}
