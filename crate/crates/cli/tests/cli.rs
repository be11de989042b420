use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn mmre(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmre"))
        .args(args)
        .env_remove("LLM_API_KEY")
        .env_remove("EMBED_API_KEY")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Fixture files plus the recorded cache, copied so runs never touch the repo.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in [
        "corpus.jsonl",
        "prompt_bank.jsonl",
        "schema.txt",
        "offline.toml",
        "scripted.toml",
        "transcript.jsonl",
    ] {
        std::fs::copy(fixture(f), dir.path().join(f)).unwrap();
    }
    std::fs::create_dir(dir.path().join("cache")).unwrap();
    for f in ["chat.jsonl", "embeddings.jsonl"] {
        std::fs::copy(fixture("cache").join(f), dir.path().join("cache").join(f)).unwrap();
    }
    dir
}

#[test]
fn sample_writes_splits_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("split");
    let corpus = fixture("corpus.jsonl");
    let args = [
        "sample",
        "--in",
        s(&corpus),
        "--seed",
        "67",
        "--train-size",
        "4",
        "--dev-size",
        "3",
        "--out-dir",
        s(&out),
    ];
    let o = mmre(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let train = std::fs::read_to_string(out.join("train.jsonl")).unwrap();
    assert_eq!(train.lines().count(), 4);
    assert_eq!(std::fs::read_to_string(out.join("dev.jsonl")).unwrap().lines().count(), 3);
    let report = std::fs::read_to_string(out.join("divergence.txt")).unwrap();
    assert!(report.contains("relation") && report.contains("L1"), "{report}");
    mmre(&args);
    assert_eq!(std::fs::read_to_string(out.join("train.jsonl")).unwrap(), train);
}

#[test]
fn oversized_split_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = mmre(&[
        "sample",
        "--in",
        s(&fixture("corpus.jsonl")),
        "--seed",
        "1",
        "--train-size",
        "8",
        "--dev-size",
        "8",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
}

#[test]
fn malformed_corpus_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\":\"a\",\"text\":\"x\"}\nnot json\n").unwrap();
    let o = mmre(&[
        "sample",
        "--in",
        s(&bad),
        "--seed",
        "1",
        "--train-size",
        "1",
        "--dev-size",
        "0",
        "--out-dir",
        s(dir.path()),
    ]);
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains(":2"), "{}", stderr(&o));
}

#[test]
fn offline_run_replays_cache_and_scores() {
    let ws = workspace();
    let out = ws.path().join("out");
    let o = mmre(&[
        "run",
        "--in",
        s(&ws.path().join("corpus.jsonl")),
        "--bank",
        s(&ws.path().join("prompt_bank.jsonl")),
        "--out-dir",
        s(&out),
        "--config",
        s(&ws.path().join("offline.toml")),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    for f in [
        "knowledge.jsonl",
        "stage2.jsonl",
        "predictions.jsonl",
        "score.txt",
        "score.json",
        "manifest.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.contains("F1 1.0000"), "{table}");

    let json = ws.path().join("s.json");
    let o = mmre(&[
        "score",
        "--pred",
        s(&out.join("predictions.jsonl")),
        "--gold",
        s(&ws.path().join("corpus.jsonl")),
        "--schema",
        s(&ws.path().join("schema.txt")),
        "--json",
        s(&json),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read(&json).unwrap(), std::fs::read(out.join("score.json")).unwrap());
}

#[test]
fn stages_chain_through_files() {
    let ws = workspace();
    let p = |f: &str| ws.path().join(f);
    let cfg = s(&p("offline.toml")).to_string();
    let o = mmre(&[
        "stage1",
        "--in",
        s(&p("corpus.jsonl")),
        "--bank",
        s(&p("prompt_bank.jsonl")),
        "--out",
        s(&p("o/k.jsonl")),
        "--config",
        &cfg,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = mmre(&[
        "prepare",
        "--in",
        s(&p("corpus.jsonl")),
        "--knowledge",
        s(&p("o/k.jsonl")),
        "--out",
        s(&p("o/s2.jsonl")),
        "--config",
        &cfg,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = mmre(&[
        "predict",
        "--in",
        s(&p("o/s2.jsonl")),
        "--out",
        s(&p("o/pred.jsonl")),
        "--config",
        &cfg,
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(std::fs::read_to_string(p("o/pred.jsonl")).unwrap().lines().count(), 10);
    let manifest = std::fs::read_to_string(p("o/manifest.json")).unwrap();
    for stage in ["\"stage1\"", "\"prepare\"", "\"predict\""] {
        assert!(manifest.contains(stage), "{manifest}");
    }
}

#[test]
fn cold_offline_run_is_a_config_error() {
    let ws = workspace();
    std::fs::remove_dir_all(ws.path().join("cache")).unwrap();
    let o = mmre(&[
        "stage1",
        "--in",
        s(&ws.path().join("corpus.jsonl")),
        "--bank",
        s(&ws.path().join("prompt_bank.jsonl")),
        "--out",
        s(&ws.path().join("k.jsonl")),
        "--config",
        s(&ws.path().join("offline.toml")),
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn unreachable_backend_exits_3_with_resume_hint() {
    let ws = workspace();
    let cfg = ws.path().join("http.toml");
    std::fs::write(
        &cfg,
        "k = 2\ncache_dir = \"fresh\"\n[llm]\nkind = \"http\"\nendpoint = \"http://127.0.0.1:9\"\n[embedding]\nkind = \"mock\"\ndim = 8\n[http]\nretries = 0\ntimeout_secs = 2\n",
    )
    .unwrap();
    let o = mmre(&[
        "stage1",
        "--in",
        s(&ws.path().join("corpus.jsonl")),
        "--bank",
        s(&ws.path().join("prompt_bank.jsonl")),
        "--out",
        s(&ws.path().join("k.jsonl")),
        "--config",
        s(&cfg),
    ]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    assert!(stderr(&o).contains("rerun"), "{}", stderr(&o));
}

#[test]
fn invalid_flags_are_config_errors() {
    let ws = workspace();
    let (corpus, bank, out, cfg) = (
        ws.path().join("corpus.jsonl"),
        ws.path().join("prompt_bank.jsonl"),
        ws.path().join("k.jsonl"),
        ws.path().join("offline.toml"),
    );
    let base = ["stage1", "--in", s(&corpus), "--bank", s(&bank), "--out", s(&out)];
    let mut args = base.to_vec();
    args.extend(["--config", s(&cfg), "-k", "0"]);
    assert_eq!(code(&mmre(&args)), 2);

    let mut args = base.to_vec();
    args.extend(["--config", "/nonexistent/run.toml"]);
    assert_eq!(code(&mmre(&args)), 2);

    let mut args = base.to_vec();
    args.extend(["--config", s(&cfg), "--schema", "/nonexistent/schema.txt"]);
    assert_eq!(code(&mmre(&args)), 2);
}

#[test]
fn k_larger_than_bank_is_rejected() {
    let ws = workspace();
    let o = mmre(&[
        "stage1",
        "--in",
        s(&ws.path().join("corpus.jsonl")),
        "--bank",
        s(&ws.path().join("prompt_bank.jsonl")),
        "--out",
        s(&ws.path().join("k.jsonl")),
        "--config",
        s(&ws.path().join("offline.toml")),
        "-k",
        "50",
    ]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}
