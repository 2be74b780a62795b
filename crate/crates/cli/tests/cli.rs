use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use gradrec_service::{router, AppState, Engine};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gradrec"))
}

fn run(args: &[&str]) -> Output {
    bin()
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("spawn gradrec")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "gradrec {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: &str = r#"{"n": 1500, "n_estimators": 25, "oof_folds": 3}"#;

/// Run every stage into `dir` with the small config.
fn chain(dir: &Path) {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let c = s(&cfg);
    let p = |name: &str| dir.join(name).to_str().unwrap().to_string();
    ok(&["--quiet", "--config", c, "datagen", "--out-dir", &p("gen")]);
    ok(&[
        "--quiet",
        "--config",
        c,
        "ingest",
        "--input",
        &p("gen/corpus.jsonl"),
        "--out",
        &p("clean.jsonl"),
    ]);
    ok(&[
        "--quiet",
        "enrich",
        "--input",
        &p("clean.jsonl"),
        "--universities",
        &p("gen/universities.csv"),
        "--disciplines",
        &p("gen/disciplines.csv"),
        "--out",
        &p("enriched.jsonl"),
    ]);
    ok(&[
        "--quiet",
        "--config",
        c,
        "featurize",
        "--input",
        &p("enriched.jsonl"),
        "--out-dir",
        &p("data"),
    ]);
    ok(&[
        "--quiet",
        "--config",
        c,
        "train",
        "--data",
        &p("data"),
        "--out",
        &p("model.json"),
    ]);
    ok(&[
        "--quiet",
        "evaluate",
        "--model",
        &p("model.json"),
        "--data",
        &p("data"),
        "--out",
        &p("eval.json"),
    ]);
    ok(&[
        "--quiet",
        "export-rejected",
        "--data",
        &p("data"),
        "--split",
        "test",
        "--out",
        &p("queries.jsonl"),
    ]);
    ok(&[
        "--quiet",
        "recommend",
        "--model",
        &p("model.json"),
        "--pool",
        &p("data/pool.json"),
        "--batch",
        &p("queries.jsonl"),
        "--strategy",
        "all",
        "--out",
        &p("recs.jsonl"),
        "--stats",
        &p("stats.json"),
    ]);
}

fn shared() -> &'static PathBuf {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        chain(&dir);
        dir
    })
}

const ARTIFACTS: &[&str] = &[
    "gen/corpus.jsonl",
    "gen/universities.csv",
    "gen/disciplines.csv",
    "gen/truth.jsonl",
    "clean.jsonl",
    "enriched.jsonl",
    "data/records.jsonl",
    "data/split.json",
    "data/schema.json",
    "data/train.csv",
    "data/test.csv",
    "data/pool.json",
    "model.json",
    "eval.json",
    "queries.jsonl",
    "recs.jsonl",
    "stats.json",
];

#[test]
fn two_runs_write_identical_artifacts() {
    let a = shared();
    let b = tempfile::tempdir().unwrap();
    chain(b.path());
    for f in ARTIFACTS {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert!(!x.is_empty(), "{f} is empty");
        assert!(x == y, "{f} differs between runs");
    }
}

#[test]
fn seed_flag_changes_the_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shared().join("config.json");
    let out = dir.path().join("gen");
    ok(&[
        "--quiet",
        "--config",
        s(&cfg),
        "--seed",
        "7",
        "datagen",
        "--out-dir",
        s(&out),
    ]);
    let x = std::fs::read(shared().join("gen/corpus.jsonl")).unwrap();
    let y = std::fs::read(out.join("corpus.jsonl")).unwrap();
    assert_ne!(x, y);
}

#[test]
fn retrained_bundle_is_byte_identical_and_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let data = shared().join("data");
    let cfg = shared().join("config.json");
    let m = dir.path().join("m.json");
    ok(&[
        "--quiet",
        "--config",
        s(&cfg),
        "train",
        "--data",
        s(&data),
        "--out",
        s(&m),
    ]);
    assert!(std::fs::read(&m).unwrap() == std::fs::read(shared().join("model.json")).unwrap());

    let m2 = dir.path().join("m2.json");
    ok(&[
        "--quiet",
        "--config",
        s(&cfg),
        "train",
        "--data",
        s(&data),
        "--out",
        s(&m2),
        "--n-estimators",
        "5",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(&m2).unwrap()).unwrap();
    assert_eq!(
        v["metadata"]["trees"].as_u64().unwrap()
            + v["metadata"]["rejected_rounds"].as_u64().unwrap(),
        5
    );
}

#[test]
fn exit_codes_separate_usage_from_runtime_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["--no-such-flag", "datagen"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));

    let missing = dir.path().join("absent");
    let out = run(&[
        "train",
        "--data",
        s(&missing),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"trees": 3}"#).unwrap();
    assert_eq!(
        run(&["--config", s(&bad), "datagen", "--out-dir", s(dir.path())])
            .status
            .code(),
        Some(1)
    );
    std::fs::write(&bad, r#"{"band": [0.7, 0.3]}"#).unwrap();
    let data = shared().join("data");
    let out = run(&[
        "--config",
        s(&bad),
        "train",
        "--data",
        s(&data),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));

    let garbage = dir.path().join("g.jsonl");
    std::fs::write(&garbage, "{not json\n").unwrap();
    let out = run(&[
        "ingest",
        "--strict",
        "--input",
        s(&garbage),
        "--out",
        s(&dir.path().join("c.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn evaluate_rejects_a_matrix_with_foreign_columns() {
    let dir = tempfile::tempdir().unwrap();
    let test = std::fs::read_to_string(shared().join("data/test.csv")).unwrap();
    let renamed = test.replacen("Applicant_GPA", "Something_Else", 1);
    let csv = dir.path().join("t.csv");
    std::fs::write(&csv, renamed).unwrap();
    let model = shared().join("model.json");
    let out = run(&["evaluate", "--model", s(&model), "--test", s(&csv)]);
    assert_eq!(out.status.code(), Some(1));
}

async fn post(state: AppState, uri: &str, body: Vec<u8>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method("POST")
        .uri(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    let resp = router(state).oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

fn engine() -> Engine {
    Engine::load(
        &shared().join("model.json"),
        &shared().join("data/pool.json"),
    )
    .unwrap()
}

#[tokio::test]
async fn batch_recommendations_match_the_http_api() {
    let state = AppState::ready(engine());
    let queries = std::fs::read_to_string(shared().join("queries.jsonl")).unwrap();
    let recs = std::fs::read_to_string(shared().join("recs.jsonl")).unwrap();
    let mut lines = recs.lines();
    let mut n = 0;
    for q in queries.lines().take(25) {
        let mut v: serde_json::Value = serde_json::from_str(q).unwrap();
        for strategy in ["university_only", "program_only", "hybrid"] {
            v["strategy"] = strategy.into();
            let (status, body) = post(
                state.clone(),
                "/api/v1/recommend",
                serde_json::to_vec(&v).unwrap(),
            )
            .await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(std::str::from_utf8(&body).unwrap(), lines.next().unwrap());
            n += 1;
        }
    }
    assert_eq!(n, 75);
}

#[tokio::test]
async fn explain_lines_match_the_http_api() {
    let dir = tempfile::tempdir().unwrap();
    let queries = std::fs::read_to_string(shared().join("queries.jsonl")).unwrap();
    let mut requests: Vec<String> = queries
        .lines()
        .take(10)
        .map(|q| {
            let mut v: serde_json::Value = serde_json::from_str(q).unwrap();
            v.as_object_mut().unwrap().remove("preferences");
            v.to_string()
        })
        .collect();
    let mut bad: serde_json::Value = serde_json::from_str(&requests[0]).unwrap();
    bad["applicant"]["gpa"] = 7.0.into();
    requests.push(bad.to_string());
    requests.push(r#"{"applicant": 1}"#.into());
    let input = dir.path().join("req.jsonl");
    std::fs::write(&input, requests.join("\n") + "\n").unwrap();
    let out = dir.path().join("explain.jsonl");
    let pool = shared().join("data/pool.json");
    let model = shared().join("model.json");
    ok(&[
        "--quiet",
        "explain",
        "--model",
        s(&model),
        "--pool",
        s(&pool),
        "--requests",
        s(&input),
        "--out",
        s(&out),
    ]);

    let written = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = written.lines().collect();
    assert_eq!(lines.len(), requests.len());
    let state = AppState::ready(engine());
    for (req, line) in requests.iter().zip(&lines) {
        let (_, body) = post(state.clone(), "/api/v1/predict", req.clone().into_bytes()).await;
        assert_eq!(std::str::from_utf8(&body).unwrap(), *line);
    }
    assert!(lines[10].contains(r#""field":"applicant.gpa""#));
    assert!(lines[11].starts_with(r#"{"error":"schema""#));
}
