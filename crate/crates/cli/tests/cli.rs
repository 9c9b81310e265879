use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::Request;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use gae_core::model::ModelParams;
use gae_core::persist::{load_gae, save_gae};
use gae_core::registry::AvatarRegistry;
use gae_core::Roster;

fn gae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = gae(args);
    assert_eq!(
        code(&out),
        0,
        "gae {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    stdout(&out)
}

fn id(model: &ModelParams, name: &str) -> usize {
    model.registry().get(name).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// CSV output minus the header, split into fields.
fn csv_rows(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn synth(&self, name: &str, matches: usize, seed: u64) -> PathBuf {
        let path = self.path(name);
        ok(&["synth", "--out", s(&path), "--matches", &matches.to_string(), "--seed", &seed.to_string()]);
        path
    }

    fn trained(&self) -> PathBuf {
        let data = self.synth("train.jsonl", 3000, 5);
        let model = self.path("trained.model");
        ok(&["train", "--data", s(&data), "--dim", "6", "--epochs", "3", "--out", s(&model)]);
        model
    }
}

#[test]
fn synth_is_deterministic_per_seed() {
    let ws = Workspace::new();
    for ext in ["jsonl", "csv"] {
        let a = std::fs::read(ws.synth(&format!("a.{ext}"), 500, 7)).unwrap();
        let b = std::fs::read(ws.synth(&format!("b.{ext}"), 500, 7)).unwrap();
        let c = std::fs::read(ws.synth(&format!("c.{ext}"), 500, 8)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
    let jsonl = std::fs::read_to_string(ws.path("a.jsonl")).unwrap();
    assert_eq!(jsonl.lines().count(), 500);
}

#[test]
fn synth_truth_file_loads() {
    let ws = Workspace::new();
    let truth = ws.path("truth.model");
    let data = ws.path("m.csv");
    let out = ok(&[
        "synth", "--out", s(&data), "--matches", "200", "--avatars", "12", "--dim", "3", "--truth", s(&truth),
        "--format", "csv",
    ]);
    let model = load_gae(&truth).unwrap();
    assert_eq!((model.n_avatars(), model.latent_dim()), (12, 3));
    let row = &csv_rows(&out)[0];
    assert_eq!(row[..3], ["200", "12", "3"]);
}

#[test]
fn train_is_byte_for_byte_repeatable() {
    let ws = Workspace::new();
    let data = ws.synth("m.jsonl", 2000, 1);
    let valid = ws.synth("v.jsonl", 500, 2);
    let run = |out: &Path| {
        ok(&[
            "train", "--data", s(&data), "--valid", s(&valid), "--dim", "5", "--lr", "0.1", "--epochs", "4",
            "--batch", "128", "--l2", "0.001", "--seed", "3", "--out", s(out), "--format", "csv",
        ])
    };
    let log_a = run(&ws.path("a.model"));
    let log_b = run(&ws.path("b.model"));
    assert_eq!(log_a, log_b);
    assert_eq!(std::fs::read(ws.path("a.model")).unwrap(), std::fs::read(ws.path("b.model")).unwrap());

    let rows = csv_rows(&log_a);
    assert_eq!(rows.len(), 4);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (i + 1).to_string());
        let auc: f64 = row[3].parse().unwrap();
        assert!((0.0..=1.0).contains(&auc));
    }
    let model = load_gae(&ws.path("a.model")).unwrap();
    assert_eq!((model.n_avatars(), model.latent_dim()), (30, 5));
}

#[test]
fn train_rejects_validation_with_unseen_avatars() {
    let ws = Workspace::new();
    let data = ws.synth("m.csv", 300, 1);
    let valid = ws.path("v.csv");
    let mut text = std::fs::read_to_string(&data).unwrap();
    text.push_str("stranger,avatar_001,avatar_002,avatar_003,avatar_004,avatar_005,avatar_006,avatar_007,avatar_008,avatar_009,red\n");
    std::fs::write(&valid, text).unwrap();
    let out = gae(&["train", "--data", s(&data), "--valid", s(&valid), "--epochs", "1", "--out", s(&ws.path("x"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("stranger"));
    assert!(!ws.path("x").exists());
}

#[test]
fn pair_is_symmetric() {
    let ws = Workspace::new();
    let model = ws.trained();
    for (a, b) in [("avatar_000", "avatar_001"), ("avatar_017", "avatar_004"), ("avatar_029", "avatar_010")] {
        for format in ["csv", "table"] {
            let ab = ok(&["pair", "--model", s(&model), "--a", a, "--b", b, "--format", format]);
            let ba = ok(&["pair", "--model", s(&model), "--a", b, "--b", a, "--format", format]);
            assert_eq!(ab, ba);
        }
    }
}

#[test]
fn pair_and_similar_match_library() {
    let ws = Workspace::new();
    let path = ws.trained();
    let model = load_gae(&path).unwrap();
    let out = ok(&["pair", "--model", s(&path), "--a", "avatar_003", "--b", "avatar_008", "--format", "csv"]);
    let row: Vec<f64> = csv_rows(&out)[0].iter().map(|x| x.parse().unwrap()).collect();
    let (i, j) = (id(&model, "avatar_003"), id(&model, "avatar_008"));
    assert_eq!(row[0], model.pair_synergy_level(i, j).unwrap());
    assert_eq!(row[1], model.pair_opposition_level(i, j).unwrap());
    assert_eq!(row[2], model.similarity(i, j).unwrap());

    let out = ok(&["similar", "--model", s(&path), "--avatar", "avatar_003", "--top-k", "29", "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 29);
    let mut previous = f64::INFINITY;
    for (rank, row) in rows.iter().enumerate() {
        assert_eq!(row[0], (rank + 1).to_string());
        assert_ne!(row[1], "avatar_003");
        let sim: f64 = row[2].parse().unwrap();
        assert_eq!(sim, model.similarity(i, id(&model, &row[1])).unwrap());
        assert!(sim <= previous);
        previous = sim;
    }
}

#[test]
fn gradcheck_default_passes() {
    let out = ok(&["gradcheck", "--format", "csv"]);
    let rows = csv_rows(&out);
    let blocks: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(blocks, ["embeddings", "synergy", "opposition", "bias", "max"]);
    let max: f64 = rows[4][1].parse().unwrap();
    assert!(max < 1e-5, "max relative error {max}");

    let human = ok(&["gradcheck"]);
    assert!(human.lines().last().unwrap().starts_with("max"));
}

#[test]
fn exit_codes() {
    let ws = Workspace::new();
    let model = ws.trained();
    let m = s(&model);

    // usage
    assert_eq!(code(&gae(&[])), 1);
    assert_eq!(code(&gae(&["fly"])), 1);
    assert_eq!(code(&gae(&["train", "--data", "x.jsonl"])), 1);
    assert_eq!(code(&gae(&["similar", "--model", m, "--avatar", "avatar_001", "--top-k", "many"])), 1);
    assert_eq!(code(&gae(&["serve", "--model", m, "--port", "0"])), 1);
    let data = ws.synth("d.jsonl", 100, 1);
    assert_eq!(code(&gae(&["train", "--data", s(&data), "--dim", "0", "--out", s(&ws.path("z"))])), 1);
    assert_eq!(code(&gae(&["similar", "--model", m, "--avatar", "avatar_001", "--top-k", "0"])), 1);

    // help and version
    assert_eq!(code(&gae(&["--help"])), 0);
    assert_eq!(code(&gae(&["--version"])), 0);

    // data
    let missing = gae(&["train", "--data", s(&ws.path("missing.jsonl")), "--out", s(&ws.path("y"))]);
    assert_eq!(code(&missing), 2);
    assert!(String::from_utf8_lossy(&missing.stderr).contains("missing.jsonl"));
    assert_eq!(code(&gae(&["train", "--data", s(&ws.path("m.txt")), "--out", s(&ws.path("y"))])), 2);
    let garbage = ws.path("garbage.jsonl");
    std::fs::write(&garbage, "{not json}\n").unwrap();
    assert_eq!(code(&gae(&["train", "--data", s(&garbage), "--out", s(&ws.path("y"))])), 2);
    assert_eq!(code(&gae(&["similar", "--model", s(&garbage), "--avatar", "a"])), 2);
    assert_eq!(code(&gae(&["similar", "--model", m, "--avatar", "nobody"])), 2);
    assert_eq!(code(&gae(&["predict", "--model", m, "--red", "avatar_001", "--blue", "avatar_001"])), 2);
    assert_eq!(code(&gae(&["pair", "--model", m, "--a", "avatar_001", "--b", "avatar_001"])), 2);
    assert_eq!(
        code(&gae(&["recommend", "--model", m, "--ally", "avatar_001,avatar_002,avatar_003,avatar_004,avatar_005"])),
        2
    );

    // numerical
    assert_eq!(code(&gae(&["gradcheck", "--tolerance", "1e-15"])), 3);
    let zero = ws.path("zero.model");
    let registry = AvatarRegistry::from_names((0..10).map(|i| format!("z{i}"))).unwrap();
    save_gae(&ModelParams::zeros(registry, 3).unwrap(), &zero).unwrap();
    let degenerate = gae(&["similar", "--model", s(&zero), "--avatar", "z1"]);
    assert_eq!(code(&degenerate), 3);
    assert!(String::from_utf8_lossy(&degenerate.stderr).contains("zero norm"));
}

#[test]
fn every_subcommand_documents_its_defaults() {
    let expected: &[(&str, &[&str])] = &[
        ("train", &["16", "0.05", "20", "512"]),
        ("predict", &["table"]),
        ("eval", &["10"]),
        ("similar", &["5"]),
        ("pair", &["table"]),
        ("recommend", &["5", "3"]),
        ("synth", &["10000", "30", "8"]),
        ("gradcheck", &["0.01", "0.00001"]),
        ("serve", &["127.0.0.1", "8080"]),
    ];
    for (sub, defaults) in expected {
        let help = ok(&[sub, "--help"]);
        for d in *defaults {
            assert!(help.contains(&format!("[default: {d}]")), "{sub} --help lacks default {d}:\n{help}");
        }
    }
}

#[test]
fn eval_reports_one_row_per_fold_and_kind() {
    let ws = Workspace::new();
    let data = ws.synth("m.jsonl", 1500, 4);
    let grid = ws.path("grid.toml");
    std::fs::write(
        &grid,
        "[[gae]]\nlatent_dim = 4\nepochs = 3\nbatch_size = 128\n\n\
         [[gae]]\nlatent_dim = 4\nepochs = 3\nbatch_size = 128\nlearning_rate = 0.1\n\n\
         [[lr]]\nepochs = 3\n\n[[fm]]\nlatent_dim = 4\nepochs = 3\n",
    )
    .unwrap();
    let run = |report: &Path| {
        ok(&[
            "eval", "--data", s(&data), "--model-kind", "gae,lr", "--model-kind", "fm", "--grid", s(&grid), "--folds",
            "10", "--seed", "9", "--report", s(report),
        ])
    };
    let summary = run(&ws.path("a.csv"));
    assert_eq!(summary, run(&ws.path("b.csv")));
    let report = std::fs::read_to_string(ws.path("a.csv")).unwrap();
    assert_eq!(report, std::fs::read_to_string(ws.path("b.csv")).unwrap());

    let mut lines = report.lines();
    assert_eq!(lines.next(), Some("model,fold,auc,hyperparameters"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.splitn(4, ',').collect()).collect();
    for kind in ["gae", "lr", "fm"] {
        let folds: Vec<&str> = rows.iter().filter(|r| r[0] == kind).map(|r| r[1]).collect();
        let expected: Vec<String> = (0..10).map(|f| f.to_string()).collect();
        assert_eq!(folds, expected, "{kind}");
    }
    assert!(summary.contains("p_value"));
    assert!(summary.lines().any(|l| l.starts_with("lr")));

    // more folds than matches, and a kind the grid does not cover
    let too_many = gae(&[
        "eval", "--data", s(&data), "--model-kind", "lr", "--grid", s(&grid), "--folds", "2000", "--report",
        s(&ws.path("c.csv")),
    ]);
    assert_ne!(code(&too_many), 0);
    std::fs::write(ws.path("lr_only.toml"), "[[lr]]\n").unwrap();
    let uncovered = gae(&[
        "eval", "--data", s(&data), "--model-kind", "gae", "--grid", s(&ws.path("lr_only.toml")), "--report",
        s(&ws.path("d.csv")),
    ]);
    assert_eq!(code(&uncovered), 1);
}

#[test]
fn predict_matches_library_and_service_exactly() {
    let ws = Workspace::new();
    let path = ws.trained();
    let model = Arc::new(load_gae(&path).unwrap());
    let app = gae_service::router(model.clone(), false);
    let runtime = tokio::runtime::Runtime::new().unwrap();
    let cases: &[(&[usize], &[usize])] = &[
        (&[0, 1, 2, 3, 4], &[5, 6, 7, 8, 9]),
        (&[29, 3, 17], &[11]),
        (&[12], &[13, 14, 15, 16, 18]),
    ];
    for &(red_n, blue_n) in cases {
        let red_names: Vec<String> = red_n.iter().map(|&i| format!("avatar_{i:03}")).collect();
        let blue_names: Vec<String> = blue_n.iter().map(|&i| format!("avatar_{i:03}")).collect();
        let red: Vec<usize> = red_names.iter().map(|n| id(&model, n)).collect();
        let blue: Vec<usize> = blue_names.iter().map(|n| id(&model, n)).collect();
        let out = ok(&[
            "predict", "--model", s(&path), "--red", &red_names.join(","), "--blue", &blue_names.join(","),
            "--format", "csv",
        ]);
        let cli: f64 = csv_rows(&out)[0][0].parse().unwrap();
        let core = model
            .win_probability(&Roster::new(red.to_vec()).unwrap(), &Roster::new(blue.to_vec()).unwrap())
            .unwrap();
        let service = runtime.block_on(async {
            let request = Request::post("/v1/predict")
                .header("content-type", "application/json")
                .body(Body::from(json!({"red": red_names, "blue": blue_names}).to_string()))
                .unwrap();
            let response = app.clone().oneshot(request).await.unwrap();
            let bytes = response.into_body().collect().await.unwrap().to_bytes();
            serde_json::from_slice::<Value>(&bytes).unwrap()["p_red_win"].as_f64().unwrap()
        });
        assert_eq!(cli.to_bits(), core.to_bits());
        assert_eq!(cli.to_bits(), service.to_bits());
    }
}

#[test]
fn predict_scores_a_whole_log() {
    let ws = Workspace::new();
    let path = ws.trained();
    let model = load_gae(&path).unwrap();
    let log = ws.synth("log.csv", 50, 11);
    let out = ok(&["predict", "--model", s(&path), "--data", s(&log), "--format", "csv"]);
    let rows = csv_rows(&out);
    assert_eq!(rows.len(), 50);
    let data = gae_core::data::load_matches_with(&log, gae_core::data::MatchFormat::Csv, model.registry().clone())
        .unwrap()
        .dataset;
    for (row, m) in rows.iter().zip(data.matches()) {
        assert_eq!(row[1], if m.red_won { "red" } else { "blue" });
        let p: f64 = row[2].parse().unwrap();
        assert_eq!(p, model.win_probability(&m.red, &m.blue).unwrap());
    }
}

#[test]
fn recommend_lists_picks_and_familiar_best() {
    let ws = Workspace::new();
    let path = ws.trained();
    let m = s(&path);
    let plain = ok(&[
        "recommend", "--model", m, "--ally", "avatar_000,avatar_001", "--enemy", "avatar_002", "--top-k", "4",
        "--format", "csv",
    ]);
    let rows = csv_rows(&plain);
    assert_eq!(rows.len(), 4);
    let probs: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(probs.windows(2).all(|w| w[0] >= w[1]));

    let model = load_gae(&path).unwrap();
    let draft = gae_core::query::DraftState::new(
        vec![id(&model, "avatar_000"), id(&model, "avatar_001")],
        vec![id(&model, "avatar_002")],
    );
    let expected = gae_core::query::recommend_pick(&model, &draft, 4).unwrap();
    for (row, r) in rows.iter().zip(&expected) {
        assert_eq!(row[1], model.registry().name(r.avatar).unwrap());
        assert_eq!(row[2].parse::<f64>().unwrap(), r.win_probability);
    }

    let familiar = ok(&[
        "recommend", "--model", m, "--ally", "avatar_000", "--familiar", "avatar_007,avatar_008", "--sim-k", "2",
        "--format", "csv",
    ]);
    let rows = csv_rows(&familiar);
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[5][0], "familiar_best");
    assert!(["avatar_007", "avatar_008"].contains(&rows[5][1].as_str()));
    assert_eq!(rows[0][6].split(';').count(), 2);

    let table = ok(&["recommend", "--model", m, "--pool", "avatar_003,avatar_004", "--familiar", "avatar_004"]);
    assert!(table.contains("best familiar pick: avatar_004"));
    let table = ok(&["recommend", "--model", m, "--pool", "avatar_003", "--familiar", "avatar_004"]);
    assert!(table.contains("best familiar pick: none available"));
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn http_get(port: u16, path: &str) -> Option<String> {
    let mut stream = TcpStream::connect(("127.0.0.1", port)).ok()?;
    stream.set_read_timeout(Some(Duration::from_secs(5))).ok()?;
    write!(stream, "GET {path} HTTP/1.1\r\nHost: localhost\r\nConnection: close\r\n\r\n").ok()?;
    let mut response = String::new();
    stream.read_to_string(&mut response).ok()?;
    Some(response)
}

#[test]
fn serve_answers_http() {
    let ws = Workspace::new();
    let path = ws.trained();
    let port = free_port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_gae"))
        .args(["serve", "--model", s(&path), "--port", &port.to_string(), "--request-log"])
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let deadline = Instant::now() + Duration::from_secs(20);
    let response = loop {
        if let Some(r) = http_get(port, "/v1/pair?a=avatar_001&b=avatar_002") {
            break r;
        }
        assert!(Instant::now() < deadline, "server did not come up");
        std::thread::sleep(Duration::from_millis(50));
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    let body = &response[response.find("\r\n\r\n").unwrap() + 4..];
    let value: Value = serde_json::from_str(body).unwrap();
    let model = load_gae(&path).unwrap();
    assert_eq!(value["synergy"].as_f64().unwrap(), model.pair_synergy_level(id(&model, "avatar_001"), id(&model, "avatar_002")).unwrap());
}

#[test]
fn serve_fails_fast_on_a_bad_model() {
    let ws = Workspace::new();
    let bad = ws.path("bad.model");
    std::fs::write(&bad, "not a model\n").unwrap();
    let out = gae(&["serve", "--model", s(&bad), "--port", &free_port().to_string()]);
    assert_eq!(code(&out), 2);
}
