use std::path::Path;
use std::process::{Command, Output};

use twsample_core::{Method, PipelineConfig};

fn twsample(cfg: Option<&Path>, args: &[&str]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_twsample"));
    if let Some(c) = cfg {
        cmd.arg("--config").arg(c);
    }
    cmd.args(args).output().expect("binary runs")
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn same(a: &Path, b: &Path) {
    let (x, y) = (std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    assert!(x == y, "{} differs from {}", a.display(), b.display());
}

#[test]
fn piped_subcommands_reproduce_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut cfg = PipelineConfig::tiny(&run);
    cfg.methods = vec![Method::Bb];
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let c = Some(cfg_path.as_path());
    ok(twsample(c, &["run"]));

    let p = |name: &str| dir.path().join("piped").join(name);
    std::fs::create_dir_all(p("")).unwrap();
    ok(twsample(c, &["gen-world", "--out", s(&p("users.jsonl")), "--census-out", s(&p("census.csv"))]));
    ok(twsample(c, &["simulate", "--world", s(&p("users.jsonl")), "--out", s(&p("tweets.jsonl"))]));
    ok(twsample(c, &["tile", "--out", s(&p("tiles.csv"))]));
    ok(twsample(
        c,
        &["sample", "--method", "bb", "--stream", s(&p("tweets.jsonl")), "--tiles", s(&p("tiles.csv")), "--out", s(&p("bb.json"))],
    ));
    ok(twsample(
        c,
        &[
            "preprocess", "--sample", s(&p("bb.json")), "--world", s(&p("users.jsonl")), "--out", s(&p("filtered.jsonl")),
            "--pool-out", s(&p("pool.jsonl")),
        ],
    ));
    ok(twsample(c, &["infer", "--in", s(&p("filtered.jsonl")), "--out", s(&p("bb.jsonl"))]));
    ok(twsample(c, &["debias", "--in", s(&p("bb.jsonl")), "--census", s(&p("census.csv")), "--out-dir", s(&p("debias"))]));
    ok(twsample(
        c,
        &[
            "evaluate", "--in", s(&p("bb.jsonl")), "--census", s(&p("census.csv")), "--pool", s(&p("pool.jsonl")), "--out-dir",
            s(&p("eval")),
        ],
    ));
    ok(twsample(c, &["metrics", "--sample", s(&p("bb.json")), "--labeled", s(&p("bb.jsonl")), "--out-dir", s(&p("metrics"))]));
    ok(twsample(c, &["report", "--in", s(&p("eval/reports.json")), "--out-dir", s(&p("report"))]));

    let pairs = [
        ("users.jsonl", "world/users.jsonl"),
        ("census.csv", "world/census.csv"),
        ("tweets.jsonl", "stream/tweets.jsonl"),
        ("tiles.csv", "tiles/tiles.csv"),
        ("bb.json", "samples/bb.json"),
        ("pool.jsonl", "pools/bb.jsonl"),
        ("filtered.jsonl", "filtered/bb.jsonl"),
        ("bb.jsonl", "labeled/bb.jsonl"),
        ("debias/bb.design.csv", "debias/bb.design.csv"),
        ("debias/bb.fits.json", "debias/bb.fits.json"),
        ("debias/bb.inclusion.csv", "debias/bb.inclusion.csv"),
        ("eval/reports.json", "eval/reports.json"),
        ("eval/estimates.csv", "eval/estimates.csv"),
        ("metrics/bb.csv", "metrics/bb.csv"),
        ("metrics/pvalues_tweets_per_day.csv", "metrics/pvalues_tweets_per_day.csv"),
        ("report/mape_grid.csv", "report/mape_grid.csv"),
    ];
    for (piped, staged) in pairs {
        same(&p(piped), &run.join(staged));
    }
}

#[test]
fn run_twice_uses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let cfg_path = dir.path().join("config.json");
    std::fs::write(&cfg_path, serde_json::to_vec(&PipelineConfig::tiny(&out)).unwrap()).unwrap();
    ok(twsample(Some(&cfg_path), &["run"]));
    let second = ok(twsample(Some(&cfg_path), &["run"]));
    let msg = String::from_utf8_lossy(&second.stderr);
    assert!(msg.contains("0 stages run, 11 cached"), "{msg}");
}

#[test]
fn tile_subcommand_writes_a_grid() {
    let dir = tempfile::tempdir().unwrap();
    let poly = dir.path().join("square.json");
    std::fs::write(
        &poly,
        r#"{"type":"Polygon","coordinates":[[[-100,40],[-99,40],[-99,41],[-100,41],[-100,40]]]}"#,
    )
    .unwrap();
    let out = dir.path().join("tiles.csv");
    ok(twsample(None, &["tile", "--polygon", s(&poly), "--spacing", "0.3", "--out", s(&out)]));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.lines().count() > 10, "{text}");
}

#[test]
fn evaluate_can_select_one_variant() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let cfg_path = dir.path().join("config.json");
    let mut cfg = PipelineConfig::tiny(&run);
    cfg.states = None;
    cfg.persons = Some(20_000);
    cfg.methods = vec![Method::Loc];
    cfg.pool_size = 300;
    cfg.final_n = 200;
    std::fs::write(&cfg_path, serde_json::to_vec(&cfg).unwrap()).unwrap();
    let c = Some(cfg_path.as_path());
    ok(twsample(c, &["run", "--only", "world"]));
    for stage in ["simulate", "tile", "sample", "draw", "preprocess", "infer"] {
        ok(twsample(c, &["run", "--only", stage]));
    }
    let eval = dir.path().join("eval");
    ok(twsample(
        c,
        &[
            "evaluate", "--in", s(&run.join("labeled/loc.jsonl")), "--census", s(&run.join("world/census.csv")), "--variant",
            "division_level", "--out-dir", s(&eval),
        ],
    ));
    let csv = std::fs::read_to_string(eval.join("estimates.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("method,spec,variant,geo,N,Nhat,APE"));
    let rows: Vec<&str> = lines.collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.contains(",division_level,")), "{csv}");
}

#[test]
fn snowflake_decompose_prints_fields() {
    let out = ok(twsample(None, &["snowflake", "decompose", "1541815603606036480"]));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let id: u64 = 1541815603606036480;
    assert_eq!(v["timestamp_ms"], id >> 22);
    assert_eq!(v["machine"], (id >> 12) & 1023);
    assert_eq!(v["sequence"], id & 4095);
}

#[test]
fn errors_are_one_line_with_class_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = twsample(None, &["--set", "no_such_key=1", "tile", "--out", s(&dir.path().join("t.csv"))]);
    assert_eq!(bad.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&bad.stderr);
    assert_eq!(msg.trim_end().lines().count(), 1, "{msg}");
    assert!(msg.starts_with("error: "), "{msg}");

    let missing = twsample(None, &["infer", "--in", s(&dir.path().join("absent.jsonl")), "--out", s(&dir.path().join("x"))]);
    assert_eq!(missing.status.code(), Some(3));

    let usage = twsample(None, &["sample", "--method", "nope"]);
    assert_eq!(usage.status.code(), Some(2));
}
