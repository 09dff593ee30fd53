use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn pemids(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pemids"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn smoke_scenario() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/flat_smoke.toml")
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn write_scenario(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("s.toml");
    std::fs::write(&p, format!("name = \"t\"\n{body}")).unwrap();
    p
}

#[test]
fn flat_prices_are_constant() {
    let dir = tempfile::tempdir().unwrap();
    let out = pemids(&["--out", path(dir.path()), "prices", "gen", "--pattern", "flat", "--mean", "50"]);
    assert!(out.status.success());
    let mut r = csv::Reader::from_path(dir.path().join("prices.csv")).unwrap();
    let mut n = 0;
    for rec in r.records() {
        assert_eq!(rec.unwrap()[1].parse::<f64>().unwrap(), 50.0);
        n += 1;
    }
    assert_eq!(n, 8760);
}

#[test]
fn same_seed_same_prices() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    for (d, seed) in [(&a, "9"), (&b, "9"), (&c, "10")] {
        let out = pemids(&["--out", path(d), "--seed", seed, "prices", "gen", "--pattern", "spiky", "--mean", "40", "--spread", "15"]);
        assert!(out.status.success());
    }
    let read = |d: &Path| std::fs::read(d.join("prices.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn unknown_pattern_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pemids(&["--out", path(dir.path()), "prices", "gen", "--pattern", "sawtooth"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_checksums_match_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = pemids(&["--out", path(dir.path()), "prices", "gen", "--pattern", "diurnal", "--mean", "30"]);
    assert!(out.status.success());
    let m = json(&dir.path().join("manifest.json"));
    let files = m["files"].as_array().unwrap();
    let mut listed: Vec<&str> = files.iter().map(|f| f["path"].as_str().unwrap()).collect();
    for f in files {
        let bytes = std::fs::read(dir.path().join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(f["sha256"].as_str().unwrap(), hex::encode(Sha256::digest(&bytes)));
        assert_eq!(f["bytes"].as_u64().unwrap() as usize, bytes.len());
    }
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != "manifest.json")
        .collect();
    on_disk.sort();
    listed.sort();
    assert_eq!(listed, on_disk);
}

#[test]
fn missing_price_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(dir.path(), "[prices]\ncsv = \"nowhere.csv\"\n");
    let out = pemids(&["--scenario", path(&s), "--out", path(&dir.path().join("o")), "optimize"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nowhere.csv"));
}

#[test]
fn undersized_box_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_scenario(
        dir.path(),
        "[prices]\nsynthetic = { pattern = \"flat\", mean = 40.0 }\n[operation]\ndt_hours = 1.0\n[search]\nn_cells = [1000.0, 2000.0]\n",
    );
    let out = pemids(&["--scenario", path(&s), "--out", path(&dir.path().join("o")), "optimize"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_schedule_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let sched = dir.path().join("empty.csv");
    std::fs::write(&sched, "").unwrap();
    let out = pemids(&[
        "--scenario",
        path(&smoke_scenario()),
        "--out",
        path(&dir.path().join("o")),
        "simulate",
        "--schedule",
        path(&sched),
        "--n-cells",
        "100000",
        "--storage-days",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn optimize_evaluate_simulate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (opt, ev, sim) = (dir.path().join("opt"), dir.path().join("ev"), dir.path().join("sim"));
    let scenario = smoke_scenario();
    let out = pemids(&["--scenario", path(&scenario), "--out", path(&opt), "--jobs", "2", "optimize"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["cost_report.json", "design.json", "gss_trace.csv", "trials.csv", "lcoh_breakdown.csv", "schedule_r1.csv"] {
        assert!(opt.join(f).is_file(), "{f} missing");
    }
    let best = json(&opt.join("cost_report.json"));

    let design = opt.join("design.json");
    let out = pemids(&["--scenario", path(&scenario), "--out", path(&ev), "evaluate", "--design", path(&design)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let again = json(&ev.join("cost_report.json"));
    assert_eq!(best["pv"], again["pv"]);
    assert_eq!(best["lcoh"], again["lcoh"]);

    let out = pemids(&[
        "--scenario",
        path(&scenario),
        "--out",
        path(&sim),
        "simulate",
        "--schedule",
        path(&ev.join("schedule_r1.csv")),
        "--design",
        path(&design),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rep = json(&sim.join("simulation.json"));
    assert_eq!(rep["violations"].as_array().unwrap().len(), 0);
}
