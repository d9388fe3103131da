use std::path::PathBuf;

use fuzzkb_core::dataset::{impute, normalize, parse_arff, split, Dataset, SplitConfig};
use fuzzkb_core::fuzzy_rough::{complexity, score_rules, top_rules, ScoringConfig};
use fuzzkb_core::granulation::{FcmConfig, Granulation};
use fuzzkb_core::prediction::{accuracy, baseline_classify, from_labels, DEFAULT_NEIGHBORS};
use fuzzkb_core::rulebase::{build_rules, confidence_gap, parse_prolog_kb, prolog_string};

fn data(name: &str) -> Dataset {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name);
    let text = std::fs::read_to_string(&path).unwrap();
    normalize(&impute(&parse_arff(&text).unwrap()).unwrap()).unwrap()
}

#[test]
fn diabetes_shape_and_split() {
    let ds = data("diabetes.arff");
    assert_eq!(ds.len(), 768);
    assert_eq!(ds.features.len(), 8);
    assert_eq!(ds.class_domain(), ["tested_negative", "tested_positive"]);
    let (train, test) = split(&ds, &SplitConfig::default()).unwrap();
    assert_eq!((train.len(), test.len()), (614, 154));
}

#[test]
fn diabetes_kb_roundtrip() {
    let ds = data("diabetes.arff");
    let gran = Granulation::fit(&ds, &FcmConfig::default()).unwrap();
    let (train, test) = split(&ds, &SplitConfig::default()).unwrap();
    let preds = baseline_classify(&train, &ds, DEFAULT_NEIGHBORS).unwrap();
    let test_preds = baseline_classify(&train, &test, DEFAULT_NEIGHBORS).unwrap();
    let acc = accuracy(&test_preds, &test).unwrap();
    assert!(acc > 0.6, "baseline accuracy {acc}");

    let mut kb = build_rules(&ds, &gran, &preds, ScoringConfig::default()).unwrap();
    assert_eq!(kb.len(), 768);
    assert!(kb.rules.iter().all(|r| r.antecedent.len() == 8));
    score_rules(&mut kb, &ScoringConfig::default()).unwrap();
    let c = complexity(&kb).unwrap();
    assert!((0.0..=1.0).contains(&c));
    let top = top_rules(&kb, 3).unwrap();
    assert!(top[0].rule_confidence >= top[2].rule_confidence);

    let back = parse_prolog_kb(&prolog_string(&kb)).unwrap();
    assert!(confidence_gap(&back.rules, &kb.rules).unwrap() <= 5e-7);
    assert_eq!(back.features, kb.features);
    assert_eq!(back.class_domain, kb.class_domain);
    assert_eq!(back.scoring, kb.scoring);
}

#[test]
fn wine_with_three_symbols() {
    let ds = data("wine.arff");
    let gran = Granulation::fit(&ds, &FcmConfig::with_clusters(3)).unwrap();
    let kb = build_rules(&ds, &gran, &from_labels(&ds), ScoringConfig::default()).unwrap();
    assert_eq!(kb.len(), 178);
    assert!(kb.features.iter().all(|f| f.terms == ["low", "medium", "high"]));
}
