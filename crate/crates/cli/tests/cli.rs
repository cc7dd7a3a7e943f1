use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use avloc_core::io::{dataset, gseq};
use avloc_core::model::{checkpoint, ModelConfig, ModelParams};
use avloc_core::sim::suite::{benchmark_suite, BenchmarkOptions, Split};
use avloc_core::sim::{derive_seed, Frame, Scenario};
use avloc_core::{GridGeometry, ProbGrid};
use tempfile::TempDir;

fn avloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_avloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = avloc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    avloc(args).status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn files_under(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out.sort();
    out
}

fn small_suite(dir: &Path, seed: u64) {
    let cfg = dir.join("suite.toml");
    fs::write(&cfg, format!("[benchmark]\nmaster_seed = {seed}\nscenarios = 5\nframes = 24\n")).unwrap();
    ok(&["simulate", "--config", s(&cfg), "--out", s(&dir.join("data"))]);
}

#[test]
fn simulate_benchmark_suite_is_complete_and_reproducible() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("suite.toml");
    fs::write(&cfg, "[benchmark]\nmaster_seed = 3\nframes = 8\n").unwrap();
    let a = tmp.path().join("nested/missing/a");
    let b = tmp.path().join("b");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&a)]);
    ok(&["simulate", "--config", s(&cfg), "--out", s(&b)]);
    let fa = files_under(&a);
    assert_eq!(fa.len(), 20 * 3);
    let counts: Vec<usize> = ["train", "val", "test"]
        .iter()
        .map(|sp| fs::read_dir(a.join(sp)).unwrap().count())
        .collect();
    assert_eq!(counts, vec![15, 2, 3]);
    for f in &fa {
        let rel = f.strip_prefix(&a).unwrap();
        assert_eq!(fs::read(f).unwrap(), fs::read(b.join(rel)).unwrap(), "{rel:?}");
    }
    let c = tmp.path().join("c");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&c), "--seed", "4"]);
    let first = |root: &Path| fs::read(root.join("train/scenario_00/audio.gseq")).ok();
    assert_ne!(first(&a), first(&c));
}

#[test]
fn simulate_single_scenario_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("one.toml");
    fs::write(
        &cfg,
        "[scenario]\nseed = 2\nframes = 12\n[[scenario.speakers]]\nwaypoints = [[100.0, 100.0], [300.0, 200.0]]\nspeed = 50.0\n",
    )
    .unwrap();
    let out = tmp.path().join("sc");
    ok(&["simulate", "--config", s(&cfg), "--out", s(&out)]);
    let sc = dataset::read_scenario(&out).unwrap();
    assert_eq!(sc.frames.len(), 12);
    assert!(sc.frames.iter().all(|f| f.truth.speaker_count() == 1));
}

#[test]
fn invalid_config_exits_with_one() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.toml");
    fs::write(&cfg, "[scenario]\nframes = 10\nunknown = 1\n").unwrap();
    let out = avloc(&["simulate", "--config", s(&cfg), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn train_produces_checkpoint_and_history() {
    let tmp = TempDir::new().unwrap();
    small_suite(tmp.path(), 5);
    let data = tmp.path().join("data");
    let ckpt = tmp.path().join("spatial.dswm");
    let small = ["--hidden", "8", "--filters", "3", "--depth", "2", "--batch-size", "16"];
    let mut args = vec!["train", "--data", s(&data), "--strategy", "spatial", "--out", s(&ckpt), "--epochs", "2"];
    args.extend(small);
    ok(&args);
    let params = checkpoint::load(&ckpt).unwrap();
    assert_eq!(params.config().hidden, 8);
    let history = fs::read_to_string(tmp.path().join("spatial.history.csv")).unwrap();
    assert_eq!(history.lines().next(), Some("epoch,train_loss,val_loss"));
    assert!(history.lines().count() >= 2);

    let init = tmp.path().join("init.dswm");
    let mut args = vec!["train", "--data", s(&data), "--strategy", "invariant", "--out", s(&init), "--epochs", "0", "--seed", "6"];
    args.extend(small);
    ok(&args);
    let cfg = ModelConfig {
        geometry: GridGeometry::default(),
        hidden: 8,
        refiner_depth: 2,
        refiner_filters: 3,
    };
    let expect = ModelParams::init(cfg, derive_seed(6, 1000)).unwrap();
    assert_eq!(fs::read(&init).unwrap(), checkpoint::encode(&expect));
}

#[test]
fn train_rejects_flat_and_missing_splits() {
    let tmp = TempDir::new().unwrap();
    small_suite(tmp.path(), 5);
    let data = tmp.path().join("data");
    let out = avloc(&["train", "--data", s(&data), "--strategy", "flat", "--out", s(&tmp.path().join("f.dswm"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trainable stream weights"));
    let args = [
        "train", "--data", s(&data), "--strategy", "flat", "--refiner-only", "--epochs", "1", "--hidden", "4",
        "--filters", "2", "--depth", "1", "--out",
    ];
    let mut a = args.to_vec();
    let f = tmp.path().join("f.dswm");
    a.push(s(&f));
    ok(&a);
    fs::remove_dir_all(data.join("val")).unwrap();
    let out = avloc(&["train", "--data", s(&data), "--strategy", "spatial", "--out", s(&tmp.path().join("x.dswm"))]);
    assert_eq!(out.status.code(), Some(1));
}

fn metric_rows(csv: &str) -> Vec<Vec<f64>> {
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threshold,le_px,fr,fp"));
    lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn evaluate_and_sweep() {
    let tmp = TempDir::new().unwrap();
    small_suite(tmp.path(), 8);
    let data = tmp.path().join("data");
    let rows = metric_rows(&ok(&["evaluate", "--data", s(&data), "--strategy", "flat", "--sweep"]));
    assert_eq!(rows.len(), 10);
    for (k, r) in rows.iter().enumerate() {
        assert!((r[0] - (0.5 + 0.05 * k as f64)).abs() < 1e-12);
    }
    let sweep = ok(&["sweep-threshold", "--data", s(&data), "--strategy", "flat"]);
    assert_eq!(metric_rows(&sweep), rows);
    assert!(rows.windows(2).all(|w| w[1][3] <= w[0][3]));

    let out = tmp.path().join("m.csv");
    ok(&["evaluate", "--data", s(&data), "--strategy", "flat", "--thresholds", "0.3,0.9", "--split", "val", "--out", s(&out)]);
    assert_eq!(metric_rows(&fs::read_to_string(&out).unwrap()).len(), 2);

    assert_eq!(code(&["evaluate", "--data", s(&data), "--strategy", "spatial"]), 1);
    assert_eq!(code(&["evaluate", "--data", s(&data), "--strategy", "flat", "--thresholds", "0.9,0.3"]), 1);

    let ckpt = tmp.path().join("inv.dswm");
    ok(&[
        "train", "--data", s(&data), "--strategy", "invariant", "--out", s(&ckpt), "--epochs", "1", "--hidden", "4",
        "--filters", "2", "--depth", "1",
    ]);
    let a = ok(&["sweep-threshold", "--data", s(&data), "--strategy", "invariant", "--checkpoint", s(&ckpt)]);
    let b = ok(&["--threads", "3", "sweep-threshold", "--data", s(&data), "--strategy", "invariant", "--checkpoint", s(&ckpt)]);
    assert_eq!(a, b);
    assert!(metric_rows(&a).windows(2).all(|w| w[1][3] <= w[0][3]));
}

#[test]
fn oracle_dataset_scores_perfectly() {
    let tmp = TempDir::new().unwrap();
    let bundle = benchmark_suite(2, &BenchmarkOptions { scenarios: 3, frames: 20, ..Default::default() }).unwrap();
    let geom = bundle.test[0].geometry;
    let oracle = |sc: &Scenario| Scenario {
        frames: sc
            .frames
            .iter()
            .map(|f| {
                let occ = f.truth.occupancy(&geom).unwrap().to_prob_grid();
                Frame {
                    audio: occ.clone(),
                    video: occ,
                    truth: f.truth.clone(),
                }
            })
            .collect(),
        ..sc.clone()
    };
    let dir = tmp.path().join("oracle");
    for split in Split::ALL {
        for sc in bundle.split(split) {
            dataset::write_scenario(&dir.join(split.name()).join(&sc.name), &oracle(sc)).unwrap();
        }
    }
    let rows = metric_rows(&ok(&["evaluate", "--data", s(&dir), "--strategy", "flat", "--thresholds", "0.5"]));
    assert_eq!(rows, vec![vec![0.5, 0.0, 1.0, 0.0]]);
}

#[test]
fn export_heatmap_levels_and_range() {
    let tmp = TempDir::new().unwrap();
    let geom = GridGeometry::new(2, 3, 30, 20).unwrap();
    let frames = vec![
        ProbGrid::filled(geom, 1.0).unwrap(),
        ProbGrid::filled(geom, 0.0).unwrap(),
        ProbGrid::filled(geom, 0.5).unwrap(),
    ];
    let seq = tmp.path().join("g.gseq");
    gseq::write(&seq, &geom, &frames).unwrap();
    for (k, level) in [(0, 255u8), (1, 0), (2, 128)] {
        let pgm = tmp.path().join(format!("f{k}.pgm"));
        ok(&["export-heatmap", "--input", s(&seq), "--frame", &k.to_string(), "--out", s(&pgm)]);
        let bytes = fs::read(&pgm).unwrap();
        let header = b"P5\n3 2\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(&bytes[header.len()..], &[level; 6]);
    }
    let csv = tmp.path().join("f.csv");
    ok(&["export-heatmap", "--input", s(&seq), "--frame", "2", "--out", s(&tmp.path().join("x.pgm")), "--csv", s(&csv)]);
    assert_eq!(fs::read_to_string(&csv).unwrap(), "0.5,0.5,0.5\n0.5,0.5,0.5\n");
    assert_eq!(code(&["export-heatmap", "--input", s(&seq), "--frame", "3", "--out", s(&tmp.path().join("y.pgm"))]), 1);
}

#[test]
fn malformed_grid_files_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let geom = GridGeometry::new(2, 2, 20, 20).unwrap();
    let seq = tmp.path().join("bad.gseq");
    let mut bytes = gseq::encode(&geom, &[ProbGrid::filled(geom, 0.5).unwrap()]).unwrap();
    let at = gseq::HEADER_LEN + 4 * 3;
    bytes[at..at + 4].copy_from_slice(&1.5f32.to_le_bytes());
    fs::write(&seq, &bytes).unwrap();
    let out = avloc(&["export-heatmap", "--input", s(&seq), "--frame", "0", "--out", s(&tmp.path().join("o.pgm"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("offset"));
    fs::write(&seq, &bytes[..bytes.len() - 1]).unwrap();
    assert_eq!(code(&["export-heatmap", "--input", s(&seq), "--frame", "0", "--out", s(&tmp.path().join("o.pgm"))]), 2);

    let sc = tmp.path().join("sc");
    fs::create_dir_all(&sc).unwrap();
    fs::write(sc.join("audio.gseq"), &bytes).unwrap();
    fs::write(sc.join("video.gseq"), &bytes).unwrap();
    fs::write(sc.join("truth.jsonl"), "").unwrap();
    assert_eq!(code(&["evaluate", "--data", s(&sc), "--strategy", "flat"]), 2);
}
