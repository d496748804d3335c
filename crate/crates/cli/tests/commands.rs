use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fleet_cli::replay::{read_log, replay_frames};
use fleet_cli::report::{mode_means, read_rows};
use fleet_core::bridge::{decode, encode};
use fleet_core::sim::Mode;

fn fleet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fleet")).args(args).output().expect("binary runs")
}

fn repo(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn run_writes_one_metrics_row() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("m.csv");
    let out = fleet(&["run", "--duration", "20", "--seed", "3", "--mode", "shir", "--metrics-out", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_rows(std::fs::File::open(&csv).unwrap()).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].seed, "3");
    assert_eq!(rows[0].mode, Mode::Shir);
    assert!((rows[0].sim_seconds - 20.0).abs() < 1e-6);
    assert!(String::from_utf8_lossy(&out.stdout).contains("mode shir"));
}

#[test]
fn usage_errors_exit_2() {
    for args in [&["run", "--mode", "bogus"][..], &["frobnicate"], &["run", "--seed", "x"], &["replay"]] {
        let out = fleet(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("usage"), "{args:?}");
    }
    let out = fleet(&["run", "--scenario", "/no/such/file.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bench_rows_match_their_means() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("b.csv");
    let out = fleet(&["bench", "--seeds", "2", "--duration", "30", "--metrics-out", s(&csv)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("sign test"));
    let rows = read_rows(std::fs::File::open(&csv).unwrap()).unwrap();
    let (runs, means): (Vec<_>, Vec<_>) = rows.into_iter().partition(|r| !r.is_mean());
    assert_eq!(runs.len(), 6);
    assert_eq!(means.len(), 3);
    for mode in Mode::ALL {
        let mine: Vec<_> = runs.iter().filter(|r| r.mode == mode).collect();
        let seeds: Vec<&str> = mine.iter().map(|r| r.seed.as_str()).collect();
        assert_eq!(seeds, ["0", "1"]);
        let total = mine.iter().map(|r| r.total_deliveries).sum::<f64>() / 2.0;
        let enc = mine.iter().map(|r| r.encounters_per_min).sum::<f64>() / 2.0;
        let m = means.iter().find(|r| r.mode == mode).unwrap();
        assert!((m.total_deliveries - total).abs() < 1e-9);
        assert!((m.encounters_per_min - enc).abs() < 1e-9);
    }
    assert_eq!(mode_means(&runs), means);
}

#[test]
fn runs_are_deterministic_and_replay_matches() {
    let dir = tempfile::tempdir().unwrap();
    let logs: Vec<PathBuf> = (0..2).map(|i| dir.path().join(format!("{i}.jsonl"))).collect();
    for l in &logs {
        let out = fleet(&["run", "--duration", "40", "--seed", "11", "--mode", "phir", "--log-out", s(l)]);
        assert!(out.status.success());
    }
    let a = std::fs::read(&logs[0]).unwrap();
    assert!(!a.is_empty());
    assert_eq!(a, std::fs::read(&logs[1]).unwrap());

    let out = fleet(&["replay", s(&logs[0])]);
    assert!(out.status.success());
    let records = read_log(std::io::BufReader::new(std::fs::File::open(&logs[0]).unwrap())).unwrap();
    let expected: Vec<String> = replay_frames(&records).iter().map(encode).collect();
    let got: Vec<String> = String::from_utf8(out.stdout).unwrap().lines().map(str::to_owned).collect();
    assert_eq!(got, expected);
    assert!(got.iter().all(|l| decode(l).is_ok()));
}

#[test]
fn bundled_scenarios_load() {
    for name in ["demo", "single_human", "live"] {
        let p = repo(&format!("scenarios/{name}.json"));
        let out = fleet(&["run", "--scenario", s(&p), "--duration", "5"]);
        assert!(out.status.success(), "{name}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
