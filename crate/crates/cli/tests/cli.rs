use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn scenario() -> PathBuf {
    root().join("scenarios/monday_meeting/scenario.toml")
}

fn tasim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tasim")).args(args).current_dir(root()).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Copy the bundled scenario into `dir` so tests can break it.
fn scenario_copy(dir: &Path) -> PathBuf {
    let src = scenario().parent().unwrap().to_path_buf();
    fs::create_dir_all(dir.join("banks")).unwrap();
    for entry in fs::read_dir(src.join("banks")).unwrap() {
        let p = entry.unwrap().path();
        fs::copy(&p, dir.join("banks").join(p.file_name().unwrap())).unwrap();
    }
    let dst = dir.join("scenario.toml");
    fs::copy(src.join("scenario.toml"), &dst).unwrap();
    dst
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_bundled_scenario() {
    let o = tasim(&["validate", "--config", s(&scenario())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("ok"));
}

#[test]
fn validate_reports_unknown_opener() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_copy(dir.path());
    let text = fs::read_to_string(&path).unwrap().replacen("opener = \"Taylor\"", "opener = \"nobody\"", 1);
    fs::write(&path, text).unwrap();
    let o = tasim(&["validate", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("nobody"), "{}", stdout(&o));
}

#[test]
fn validate_lists_duplicate_ids_with_ordinals() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario_copy(dir.path());
    let bank = dir.path().join("banks/john_child.json");
    let mut text = fs::read_to_string(&bank).unwrap();
    // rename the second item's id to the first one's
    let second = text.match_indices("\"id\"").nth(1).expect("bank has two items").0;
    let end = second + text[second..].find(',').unwrap();
    text.replace_range(second..end, "\"id\": \"jc-01\"");
    fs::write(&bank, text).unwrap();
    let o = tasim(&["validate", "--config", s(&path)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("duplicate id \"jc-01\" at items 0 and 1"), "{out}");
}

#[test]
fn validate_unreadable_is_config_error() {
    let o = tasim(&["validate", "--config", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn run_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let a = tasim(&["run", "--config", s(&scenario()), "--seed", "7", "--out", s(dir.path()), "--run-id", "a"]);
    let b = tasim(&["run", "--config", s(&scenario()), "--seed", "7", "--out", s(dir.path()), "--run-id", "b"]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let ta = fs::read(dir.path().join("a/memory_on/dialogue-0.json")).unwrap();
    let tb = fs::read(dir.path().join("b/memory_on/dialogue-0.json")).unwrap();
    assert_eq!(ta, tb);
    assert_eq!(stdout(&a).lines().next(), stdout(&b).lines().next());
    let out = stdout(&a);
    assert_eq!(out.lines().filter(|l| l.starts_with('[')).count(), 8);
    assert!(out.contains("Taylor ("), "{out}");
}

#[test]
fn run_memory_off_makes_no_embedding_calls() {
    let dir = tempfile::tempdir().unwrap();
    let o = tasim(&["run", "--config", s(&scenario()), "--condition", "memory_off", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("embed calls: 0, retrievals: 0"), "{}", stdout(&o));
}

#[test]
fn run_without_config_is_usage_error() {
    assert_eq!(tasim(&["run"]).status.code(), Some(2));
}

#[test]
fn run_with_bad_backend_file_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let backend = dir.path().join("backend.toml");
    fs::write(&backend, "kind = \"http\"\nendpoint_url = \"not a url\"\n").unwrap();
    let o = tasim(&["run", "--config", s(&scenario()), "--backend", s(&backend), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn small_ablation_then_analyze_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let o = tasim(&["ablate", "--config", s(&scenario()), "--dialogues", "2", "--turns", "1", "--out", s(dir.path()), "--run-id", "r"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = dir.path().join("r");
    for cond in ["memory_on", "memory_off"] {
        for n in 0..2 {
            assert!(run.join(format!("{cond}/dialogue-{n}.json")).is_file());
        }
    }
    let out = stdout(&o);
    assert!(out.contains("memory_on: 2 dialogues, responses per agent: Taylor=2, John=2"), "{out}");

    let exported = fs::read(run.join("distributions.csv")).unwrap();
    let panel = fs::read(run.join("charts/panel.svg")).unwrap();
    let again = dir.path().join("again");
    let o = tasim(&["analyze", s(&run), "--out", s(&again)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(again.join("distributions.csv")).unwrap(), exported);
    assert_eq!(fs::read(again.join("charts/panel.svg")).unwrap(), panel);
}

#[test]
fn ablate_into_unwritable_out_is_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let o = tasim(&["ablate", "--config", s(&scenario()), "--dialogues", "1", "--turns", "1", "--out", s(&file)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn analyze_reference_counts_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let o = tasim(&["analyze", s(&root().join("fixtures/reference_counts")), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("distributions.csv")).unwrap();
    assert!(csv.contains("John,memory_on,5,68,15,88,0"), "{csv}");
    assert!(csv.contains("John,memory_off,3,75,10,88,0"), "{csv}");
    assert!(csv.contains("Taylor,memory_on,18,60,10,88,0"), "{csv}");
    assert!(csv.contains("Taylor,memory_off,8,72,8,88,0"), "{csv}");
}

#[test]
fn analyze_empty_dir_fails() {
    let dir = tempfile::tempdir().unwrap();
    let o = tasim(&["analyze", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("0 transcripts"), "{}", stderr(&o));
}

#[test]
fn analyze_reports_bad_files_by_name() {
    let dir = tempfile::tempdir().unwrap();
    let src = root().join("fixtures/reference_counts/memory_on/dialogue-0.json");
    fs::create_dir_all(dir.path().join("memory_on")).unwrap();
    fs::copy(&src, dir.path().join("memory_on/dialogue-0.json")).unwrap();
    fs::write(dir.path().join("memory_on/dialogue-1.json"), "{ not json").unwrap();
    let o = tasim(&["analyze", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("dialogue-1.json"), "{}", stderr(&o));
}

#[test]
fn replay_prints_turns_and_candidates() {
    let dir = tempfile::tempdir().unwrap();
    let o = tasim(&["run", "--config", s(&scenario()), "--out", s(dir.path()), "--run-id", "x"]);
    assert_eq!(o.status.code(), Some(0));
    let path = dir.path().join("x/memory_on/dialogue-0.json");
    let plain = tasim(&["replay", s(&path)]);
    assert_eq!(plain.status.code(), Some(0));
    let (ran, replayed) = (stdout(&o), stdout(&plain));
    for line in ran.lines().filter(|l| l.starts_with('[')) {
        assert!(replayed.contains(line), "missing {line}");
    }
    let full = tasim(&["replay", s(&path), "--candidates"]);
    assert!(stdout(&full).lines().filter(|l| l.starts_with("    ")).count() >= 24);
    assert!(stdout(&full).contains("[memory "));
}
