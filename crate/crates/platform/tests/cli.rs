//! The `gpa` binary end to end, offline.

mod common;

use std::path::Path;

use common::{gpa, jsonl_files};
use gpa_platform::archive::SessionArchive;

fn simulate(dir: &Path, out: &str, extra: &[&str]) -> common::Run {
    let mut args = vec!["simulate", "--out", out];
    args.extend_from_slice(extra);
    gpa(&args, dir)
}

#[test]
fn one_simulated_player_gives_one_archive() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "out", &["--players", "1", "--seed", "4", "--backend", "mock"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let files = jsonl_files(&dir.path().join("out"));
    assert_eq!(files.len(), 1);
    let a = SessionArchive::read(&files[0]).unwrap();
    assert!(a.is_complete());
    assert_eq!(a.assessments.len(), 2);
    assert!(dir.path().join("out/index.jsonl").exists());
    assert!(r.stdout.contains("target trait above midpoint"));
}

#[test]
fn replayed_simulation_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "rec", &["--players", "2", "--seed", "9", "--backend", "mock", "--record", "fix.jsonl"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    for out in ["a", "b"] {
        let r = simulate(dir.path(), out, &["--players", "2", "--seed", "9", "--backend", "replay", "--fixtures", "fix.jsonl"]);
        assert_eq!(r.code, 0, "{}", r.stderr);
    }
    let a = jsonl_files(&dir.path().join("a"));
    let b = jsonl_files(&dir.path().join("b"));
    assert_eq!(a.len(), 2);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{} differs", x.display());
    }
    let rec = SessionArchive::read(&jsonl_files(&dir.path().join("rec"))[0]).unwrap();
    let rep = SessionArchive::read(&a[0]).unwrap();
    assert_eq!(rec.assessments, rep.assessments);
    assert_eq!(rec.snapshot, rep.snapshot);
}

#[test]
fn live_backend_without_key_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "out", &["--players", "1", "--backend", "live"]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("OPENAI_API_KEY"), "{}", r.stderr);
}

#[test]
fn replay_without_fixtures_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "out", &["--players", "1", "--backend", "replay"]);
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn assess_adds_each_cell_once() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "out", &["--players", "1", "--seed", "2", "--backend", "mock", "--no-assess"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    let file = jsonl_files(&dir.path().join("out")).remove(0);
    let file_s = file.to_str().unwrap();
    let args = [
        "assess", "--archive", file_s, "--backend", "mock", "--methods", "da,qa", "--conditions", "all,o,c,e,a,n",
        "--bundles", "tbpe",
    ];
    let r = gpa(&args, dir.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    let after_first = std::fs::read(&file).unwrap();
    assert_eq!(SessionArchive::read(&file).unwrap().assessments.len(), 12);
    let r = gpa(&args, dir.path());
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert_eq!(std::fs::read(&file).unwrap(), after_first);
}

#[test]
fn unknown_bundle_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let r = gpa(&["assess", "--archive", "x.jsonl", "--backend", "mock", "--bundles", "tbx"], dir.path());
    assert_eq!(r.code, 2);
    let r = gpa(&["assess", "--archive", "x.jsonl", "--backend", "mock", "--bundles", "pe"], dir.path());
    assert_eq!(r.code, 2);
}

fn write_truth(dir: &Path, players: usize) {
    let mut csv = String::from("player_id,O,C,E,A,N\n");
    for i in 0..players {
        csv.push_str(&format!("sim-player-{i},{},3,{},2.5,{}\n", 1 + i, 5 - i, 2 + i));
    }
    std::fs::write(dir.join("truth.csv"), csv).unwrap();
}

#[test]
fn report_scores_every_cell_over_all_players() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "out", &["--players", "3", "--seed", "1", "--backend", "mock", "--jobs", "3"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    write_truth(dir.path(), 3);
    let report = |out: &str| gpa(&["report", "--archives", "out/*.jsonl", "--truth", "truth.csv", "--out", out], dir.path());
    let r = report("rep1");
    assert_eq!(r.code, 0, "{}", r.stderr);
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("rep1/report.json")).unwrap()).unwrap();
    let cells = json["cells"].as_array().unwrap();
    // 5 traits x 1 condition x 2 methods x 1 model x 1 bundle
    assert_eq!(cells.len(), 10);
    assert!(cells.iter().all(|c| c["n"] == 3));
    assert!(cells.iter().all(|c| c["mae"].as_f64().unwrap() <= c["rmse"].as_f64().unwrap() + 1e-12));

    assert_eq!(report("rep2").code, 0);
    for f in ["report.json", "report.csv", "report.txt"] {
        assert_eq!(
            std::fs::read(dir.path().join("rep1").join(f)).unwrap(),
            std::fs::read(dir.path().join("rep2").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn report_over_nothing_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_truth(dir.path(), 1);
    let r = gpa(&["report", "--archives", "none/*.jsonl", "--truth", "truth.csv", "--out", "rep"], dir.path());
    assert_eq!(r.code, 2, "{}", r.stderr);
}

#[test]
fn report_names_players_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let r = simulate(dir.path(), "out", &["--players", "2", "--seed", "3", "--backend", "mock"]);
    assert_eq!(r.code, 0, "{}", r.stderr);
    write_truth(dir.path(), 1);
    let r = gpa(&["report", "--archives", "out/*.jsonl", "--truth", "truth.csv", "--out", "rep"], dir.path());
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("sim-player-1"), "{}", r.stderr);
}
