use std::collections::BTreeMap;
use std::path::Path;

use twsample_core::pipeline::{run_pipeline, Manifest, PipelineConfig, STAGES};

fn artifact_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let m: Manifest = serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap();
    m.artifacts
        .iter()
        .map(|a| (a.path.clone(), std::fs::read(dir.join(&a.path)).unwrap()))
        .collect()
}

#[test]
fn tiny_pipeline_runs_caches_and_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::tiny(a.path());
    let first = run_pipeline(&cfg, None).unwrap();
    assert_eq!(first.executed, STAGES.iter().map(|s| s.to_string()).collect::<Vec<_>>());
    assert!(first.artifacts.len() >= 10, "{}", first.artifacts.len());
    for p in &first.artifacts {
        assert!(p.exists(), "{}", p.display());
    }
    assert!(!a.path().join(".lock").exists());

    let again = run_pipeline(&cfg, None).unwrap();
    assert!(again.executed.is_empty(), "{:?}", again.executed);
    assert_eq!(again.skipped.len(), STAGES.len());

    let b = tempfile::tempdir().unwrap();
    run_pipeline(&PipelineConfig::tiny(b.path()), None).unwrap();
    let (xa, xb) = (artifact_bytes(a.path()), artifact_bytes(b.path()));
    assert_eq!(xa.keys().collect::<Vec<_>>(), xb.keys().collect::<Vec<_>>());
    for (k, v) in &xa {
        assert!(v == &xb[k], "{k} differs between runs");
    }

    let changed = cfg.with_overrides(&["filter.min_tweets=50".into()]).unwrap();
    let third = run_pipeline(&changed, None).unwrap();
    assert!(third.executed.contains(&"preprocess".to_string()));
    let upstream = ["world", "simulate", "tile", "sample", "draw"];
    assert!(third.executed.iter().all(|s| !upstream.contains(&s.as_str())), "{:?}", third.executed);
}

#[test]
fn stage_errors_name_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = PipelineConfig::tiny(dir.path());
    cfg.pool_size = 1_000_000;
    let err = run_pipeline(&cfg, None).unwrap_err();
    let text = err.to_string();
    assert!(text.starts_with("stage draw failed"), "{text}");
    assert!(text.contains("twsample run --config"), "{text}");
    assert_eq!(err.class().exit_code(), 3);
}

#[test]
fn tiny_pipeline_records_grid_failures_instead_of_aborting() {
    // two states leave too few units for cross-validation
    let dir = tempfile::tempdir().unwrap();
    run_pipeline(&PipelineConfig::tiny(dir.path()), None).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("eval/reports.json")).unwrap()).unwrap();
    assert!(!v["failures"].as_array().unwrap().is_empty());
}
