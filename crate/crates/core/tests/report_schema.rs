mod common;

use common::*;
use serde_json::Value;

fn validator() -> jsonschema::Validator {
    let text = std::fs::read_to_string(repo_root().join("schemas/report.schema.json")).unwrap();
    let schema: Value = serde_json::from_str(&text).unwrap();
    jsonschema::validator_for(&schema).unwrap()
}

fn errors(v: &jsonschema::Validator, doc: &Value) -> Vec<String> {
    v.iter_errors(doc)
        .map(|e| format!("{} at {}", e, e.instance_path))
        .collect()
}

#[test]
fn every_scenario_report_matches_the_schema() {
    let v = validator();
    for name in [
        "closure_a",
        "fix_and_batch_b",
        "halves",
        "seed_sweep",
        "ttc_enhanced",
    ] {
        let dir = tempfile::tempdir().unwrap();
        run_scenario(&manifest(name, dir.path()));
        let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        let doc: Value = serde_json::from_str(&text).unwrap();
        assert_eq!(errors(&v, &doc), Vec::<String>::new(), "{name}");
        let back: covclose::report::Report = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_json(), text, "{name} round trip");
    }
}

#[test]
fn schema_rejects_malformed_reports() {
    let v = validator();
    let dir = tempfile::tempdir().unwrap();
    run_scenario(&manifest("closure_a", dir.path()));
    let good: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap())
            .unwrap();

    let mut bad = good.clone();
    bad["conversations"][0]["iterations"][0]["merged_percent"] = 101.0.into();
    assert!(!v.is_valid(&bad));
    let mut bad = good.clone();
    bad["feature_label"] = "turbo".into();
    assert!(!v.is_valid(&bad));
    let mut bad = good.clone();
    bad.as_object_mut().unwrap().remove("pass_at_k");
    assert!(!v.is_valid(&bad));
    let mut bad = good;
    bad["pass_at_k"]["pooled"]["pass@1"] = 1.5.into();
    assert!(!v.is_valid(&bad));
}
