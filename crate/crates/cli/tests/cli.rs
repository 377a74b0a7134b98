use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use z2sim_core::{RecordKind, ResultRecord};

fn z2sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_z2sim"))
        .args(args)
        .env("Z2SIM_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn records(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| {
            p.extension().is_some_and(|e| e == "json")
                && p.file_stem().is_some_and(|s| s.len() == 16)
        })
        .collect();
    v.sort();
    v
}

fn load(path: &Path) -> ResultRecord {
    ResultRecord::from_json(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const POINT: [&str; 10] = [
    "--n", "2", "--epsilon2", "5e-3", "--zeta", "3e5", "--n-steps", "12", "--n-traj", "40",
];

#[test]
fn simulate_is_deterministic_up_to_wall_time() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for dir in [&a, &b] {
        let mut args = vec!["simulate", "--seed", "7", "--out", s(dir)];
        args.extend(POINT);
        let o = z2sim(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (ra, rb) = (records(&a), records(&b));
    assert_eq!(ra.len(), 1);
    assert_eq!(ra[0].file_name(), rb[0].file_name());
    let (x, y) = (load(&ra[0]), load(&rb[0]));
    assert!(x.same_payload(&y));
    assert!(ra[0].with_extension("csv").exists());
}

#[test]
fn noiseless_record_starts_at_one() {
    let tmp = tempfile::tempdir().unwrap();
    let o = z2sim(&["simulate", "--n", "3", "--n-steps", "50", "--n-traj", "1", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let r = load(&records(tmp.path())[0]);
    let c0 = r.series.source_values().unwrap()[0];
    assert!((c0.re - 1.0).abs() < 1e-12 && c0.im.abs() < 1e-12, "{c0}");
    assert_eq!(r.series.n_times(), 51);
    assert!(r.mass.is_some());
}

#[test]
fn config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.toml");
    std::fs::write(&cfg, "grid = [2]\nbeta = [1.0]\n").unwrap();
    let o = z2sim(&["sweep", "--config", s(&cfg), "--dry-run"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("beta"), "{}", stderr(&o));

    std::fs::write(&cfg, "zeta_crosstalk = []\n").unwrap();
    let o = z2sim(&["sweep", "--config", s(&cfg), "--dry-run"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("zeta_crosstalk"));

    assert_eq!(code(&z2sim(&["simulate", "--sites", "corner"])), 2);
    assert_eq!(code(&z2sim(&["simulate", "--beta-h", "-1"])), 2);
}

#[test]
fn default_grid_size_is_reported() {
    let o = z2sim(&["sweep", "--dry-run"]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("93 points (90 noisy, 3 noiseless baselines)"), "{}", stdout(&o));
}

#[test]
fn oversized_lattice_refused_with_required_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let o = z2sim(&["simulate", "--n", "6", "--mem-limit", "32000000000", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 3);
    let need = 2u64 * (1u64 << 36) * 16;
    assert!(stderr(&o).contains(&need.to_string()), "{}", stderr(&o));
    assert!(records(tmp.path()).is_empty());
}

#[test]
fn peak_memory_within_estimate() {
    let tmp = tempfile::tempdir().unwrap();
    let o = z2sim(&["simulate", "--n", "4", "--n-steps", "3", "--n-traj", "2", "--epsilon2", "1e-3", "--out", s(tmp.path())]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    let field = |name: &str| -> u64 {
        let tok = out.split_whitespace().find_map(|t| t.strip_prefix(name)).unwrap();
        tok.parse().unwrap()
    };
    let (estimate, peak) = (field("memory_estimate="), field("peak_rss="));
    assert!(peak as f64 <= 1.1 * estimate as f64, "peak {peak} vs estimate {estimate}");
}

#[test]
fn merge_pools_shards_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let whole = tmp.path().join("whole");
    let shards = tmp.path().join("shards");
    let merged = tmp.path().join("merged");
    let point = ["--n", "2", "--epsilon2", "5e-3", "--zeta", "3e5", "--n-steps", "10", "--n-traj", "1000"];
    let mut args = vec!["simulate", "--out", s(&whole)];
    args.extend(point);
    assert_eq!(code(&z2sim(&args)), 0);
    for i in 0..4 {
        let shard = format!("{i}/4");
        let mut args = vec!["simulate", "--out", s(&shards), "--shard", &shard];
        args.extend(point);
        assert_eq!(code(&z2sim(&args)), 0);
    }
    let parts = records(&shards);
    assert_eq!(parts.len(), 4);
    for p in &parts {
        assert_eq!(load(p).series.n_traj_effective, 250);
    }
    let mut args = vec!["merge", "--out", s(&merged)];
    args.extend(parts.iter().map(|p| s(p)));
    let o = z2sim(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let m = load(&records(&merged)[0]);
    let w = load(&records(&whole)[0]);
    assert_eq!(m.kind, RecordKind::Merged);
    assert_eq!(m.series.n_traj_effective, 1000);
    assert_eq!(m.accumulator, w.accumulator);
    assert_eq!(m.series, w.series);

    let o = z2sim(&["merge", "--out", s(&merged), s(&parts[0]), s(&parts[1])]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("missing shards"), "{}", stderr(&o));
}

#[test]
fn merge_rejects_mismatched_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for (zeta, shard) in [("3e5", "0/2"), ("4.5e5", "1/2")] {
        let o = z2sim(&[
            "simulate", "--n", "2", "--epsilon2", "1e-3", "--zeta", zeta, "--n-steps", "6", "--n-traj", "8",
            "--shard", shard, "--out", s(dir),
        ]);
        assert_eq!(code(&o), 0);
    }
    let parts = records(dir);
    let o = z2sim(&["merge", s(&parts[0]), s(&parts[1])]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("zeta"), "{}", stderr(&o));
}

#[test]
fn oracle_records_and_limits() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = z2sim(&["oracle", "--n", "2", "--n-steps", "10", "--out", s(dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = z2sim(&["oracle", "--n", "2", "--n-steps", "10", "--epsilon2", "5e-3", "--method", "circuit", "--out", s(dir)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let kinds: Vec<RecordKind> = records(dir).iter().map(|p| load(p).kind).collect();
    assert!(kinds.contains(&RecordKind::ExactOracle));
    assert!(kinds.contains(&RecordKind::DensityOracle));
    let o = z2sim(&["oracle", "--n", "5", "--out", s(dir)]);
    assert_eq!(code(&o), 3);
    assert!(stderr(&o).contains("limit"));
}

#[test]
fn analyze_without_signal_exits_four() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let o = z2sim(&["oracle", "--n", "2", "--n-steps", "10", "--out", s(dir)]);
    assert_eq!(code(&o), 0);
    let path = &records(dir)[0];
    let o = z2sim(&["analyze", s(path), "--window", "hann"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("mass"));

    let mut flat = load(path);
    for v in flat.series.values.iter_mut().flatten() {
        *v = z2sim_core::C64::new(0.5, 0.0);
    }
    let flat_path = dir.join("flat.json");
    std::fs::write(&flat_path, flat.to_json().unwrap()).unwrap();
    let o = z2sim(&["analyze", s(&flat_path), "--subtract-mean"]);
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("no signal"));
}

fn write_small_config(dir: &Path, grid: &str) -> PathBuf {
    let cfg = dir.join("sweep.toml");
    let out = dir.join("out");
    std::fs::write(
        &cfg,
        format!(
            "grid = {grid}\nbeta_h = [1.6]\nepsilon2 = [0.0, 2e-3]\nzeta_crosstalk = [0.0, 3e5]\n\
             n_steps = 12\nn_traj = 16\nout = {:?}\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    cfg
}

#[test]
fn sweep_resumes_and_fsck_tracks_records() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_config(tmp.path(), "[2]");
    let out = tmp.path().join("out");
    let o = z2sim(&["sweep", "--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("ran 4, skipped 0"), "{}", stdout(&o));
    let recs = records(&out);
    assert_eq!(recs.len(), 4);
    let noisy: Vec<ResultRecord> = recs.iter().map(|p| load(p)).filter(|r| r.key.epsilon2 > 0.0).collect();
    assert!(noisy.iter().all(|r| r.relative_error_pct.is_some()));

    assert_eq!(code(&z2sim(&["fsck", "--out", s(&out)])), 0);

    let o = z2sim(&["sweep", "--config", s(&cfg)]);
    assert!(stdout(&o).contains("ran 0, skipped 4"), "{}", stdout(&o));

    let gone = &recs[2];
    let before = load(gone);
    std::fs::remove_file(gone).unwrap();
    let o = z2sim(&["fsck", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("problem"));

    let o = z2sim(&["sweep", "--config", s(&cfg)]);
    assert!(stdout(&o).contains("ran 1, skipped 3"), "{}", stdout(&o));
    assert!(load(gone).same_payload(&before));
    assert_eq!(code(&z2sim(&["fsck", "--out", s(&out)])), 0);

    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 5);
}

#[test]
fn sweep_records_failures_and_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_config(tmp.path(), "[2, 6]");
    let out = tmp.path().join("out");
    let o = z2sim(&["sweep", "--config", s(&cfg), "--mem-limit", "1000000000"]);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("ran 4, skipped 0 already done, failed 4"), "{}", stdout(&o));
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.matches("\"failed\"").count(), 4);
    assert!(manifest.contains("exceeds limit"));
    let o = z2sim(&["fsck", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("4 failed entries"));
}

#[test]
fn sweep_slices_partition_the_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_small_config(tmp.path(), "[2]");
    let out = tmp.path().join("out");
    let children: Vec<_> = ["0/2", "1/2"]
        .iter()
        .map(|slice| {
            Command::new(env!("CARGO_BIN_EXE_z2sim"))
                .args(["sweep", "--config", s(&cfg), "--slice", slice])
                .env("Z2SIM_THREADS", "1")
                .stdout(std::process::Stdio::piped())
                .spawn()
                .unwrap()
        })
        .collect();
    for child in children {
        let o = child.wait_with_output().unwrap();
        assert!(stdout(&o).contains("ran 2"), "{}", stdout(&o));
    }
    let manifest = std::fs::read_to_string(out.join("manifest.jsonl")).unwrap();
    assert_eq!(manifest.lines().count(), 4);
    assert_eq!(records(&out).len(), 4);
    assert_eq!(code(&z2sim(&["fsck", "--out", s(&out)])), 0);
}

#[test]
fn gatecount_tables() {
    let o = z2sim(&["gatecount", "--n", "3"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row, ["3", "9", "17", "12"]);
    assert!(text.contains("18"));

    let o = z2sim(&["gatecount", "--noisy", "--n", "4"]);
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split_whitespace().collect();
    assert_eq!(row[3], "192");
}

#[test]
fn bench_reports_metadata() {
    let o = z2sim(&["bench", "--grid", "3", "--gate-qubits", "10,12"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("threads: 1"));
    assert!(text.contains("complex f64"));
    let row: Vec<&str> = text.lines().find(|l| l.trim_start().starts_with("3x3")).unwrap().split_whitespace().collect();
    assert!(row[2].parse::<f64>().unwrap() > 0.0);
}
