//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use avloc_core::bench::{run_benchmark, BenchmarkConfig, BenchmarkReport, Subset, BENCH_SEEDS};
use avloc_core::fusion::{flat_fuse, invariant_fuse, spatial_fuse};
use avloc_core::metrics::aggregate;
use avloc_core::metrics::hungarian::{exhaustive_min_cost, hungarian};
use avloc_core::model::{ModelConfig, ModelParams};
use avloc_core::sim::suite::{benchmark_suite, BenchmarkOptions};
use avloc_core::train::{chain_gradient_check, Sample};
use avloc_core::{FusionStrategy, GridGeometry, ProbGrid, WeightGrid};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, o: &Outcome) {
    let verdict = if o.pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{verdict}] {name}: {}", o.detail);
}

fn gradient_oracle() -> Outcome {
    let t = Instant::now();
    let geom = GridGeometry::new(5, 6, 60, 50).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = 0.0f64;
    let mut checks = 0;
    let mut failures = Vec::new();
    for trial in 0..10u64 {
        let cfg = ModelConfig {
            geometry: geom,
            hidden: 4,
            refiner_depth: 2,
            refiner_filters: 2,
        };
        let mut params = ModelParams::init(cfg, trial).unwrap();
        let groups = params.groups().to_vec();
        for g in groups.iter().filter(|g| g.name.ends_with(".bias")) {
            for k in g.range() {
                params.values_mut()[k] = rng.random_range(-0.2..=0.2);
            }
        }
        let n = geom.cells();
        let z_a: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.9)).collect();
        let z_v: Vec<f64> = (0..n).map(|_| rng.random_range(0.02..0.9)).collect();
        let mut target = vec![false; n];
        for _ in 0..rng.random_range(1..=3) {
            target[rng.random_range(0..n)] = true;
        }
        let sample = [Sample {
            log_a: z_a.iter().map(|z| z.ln()).collect(),
            log_v: z_v.iter().map(|z| z.ln()).collect(),
            z_a,
            z_v,
            target,
        }];
        for strategy in [FusionStrategy::Spatial, FusionStrategy::Invariant] {
            let r = chain_gradient_check(strategy, true, &mut params, &sample, 1e-6, 1e-5, 1e-4).unwrap();
            worst = worst.max(r.max_rel_error());
            checks += r.groups.len();
            if let Some(f) = r.failure() {
                failures.push(format!(
                    "{strategy} trial {trial} {} (analytic {:.3e}, numeric {:.3e})",
                    f.group, f.analytic, f.numeric
                ));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: failures.is_empty() && secs < 30.0,
        detail: format!(
            "{checks} group checks, max relative error {worst:.2e} (< 1e-4), {secs:.1} s (< 30 s){}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    }
}

fn hungarian_oracle() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    let mut total = 0;
    for n in 2..=7 {
        for k in 0..1000 {
            let cost: Vec<f64> = if k % 4 == 3 {
                (0..n * n).map(|_| f64::from(rng.random_range(0..5u8))).collect()
            } else {
                (0..n * n).map(|_| rng.random_range(0.0..1000.0)).collect()
            };
            let got = hungarian(&cost, n, n).unwrap().total;
            if got != exhaustive_min_cost(&cost, n).unwrap() {
                mismatches += 1;
            }
            total += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome {
        pass: mismatches == 0 && secs < 60.0,
        detail: format!("{total} matrices 2x2..7x7, {mismatches} mismatches, {secs:.1} s (< 60 s)"),
    }
}

fn fusion_laws() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut bad_flat = 0;
    let mut bad_inv = 0;
    for _ in 0..1000 {
        let geom = GridGeometry::new(rng.random_range(1..=12), rng.random_range(1..=12), 640, 480).unwrap();
        let mut draw = || {
            let v: Vec<f64> = (0..geom.cells())
                .map(|_| match rng.random_range(0..10) {
                    0 => 0.0,
                    1 => 1.0,
                    _ => rng.random::<f64>(),
                })
                .collect();
            ProbGrid::new(geom, v).unwrap()
        };
        let (a, v) = (draw(), draw());
        let lambda: f64 = rng.random();
        let ones = WeightGrid::filled(geom, 1.0).unwrap();
        let same = |x: &[f64], y: &[f64]| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
        if !same(
            flat_fuse(&a, &v, 1e-6).unwrap().values(),
            spatial_fuse(&a, &v, &ones, &ones, 1e-6).unwrap().values(),
        ) {
            bad_flat += 1;
        }
        let wa = WeightGrid::filled(geom, lambda).unwrap();
        let wv = WeightGrid::filled(geom, 1.0 - lambda).unwrap();
        if !same(
            invariant_fuse(&a, &v, lambda, 1e-6).unwrap().values(),
            spatial_fuse(&a, &v, &wa, &wv, 1e-6).unwrap().values(),
        ) {
            bad_inv += 1;
        }
    }
    Outcome {
        pass: bad_flat == 0 && bad_inv == 0,
        detail: format!("1000 random grids; flat law violations {bad_flat}, invariant law violations {bad_inv}"),
    }
}

fn metrics_self_test() -> Outcome {
    let bundle = benchmark_suite(BENCH_SEEDS[0], &BenchmarkOptions::default().clean()).unwrap();
    let frames: Vec<_> = bundle.train.iter().chain(&bundle.val).chain(&bundle.test).flat_map(|s| &s.frames).collect();
    let geom = bundle.test[0].geometry;
    let oracle: Vec<ProbGrid> = frames.iter().map(|f| f.truth.occupancy(&geom).unwrap().to_prob_grid()).collect();
    let truths: Vec<_> = frames.iter().map(|f| f.truth.clone()).collect();
    let m = aggregate(&oracle, &truths, 0.5).unwrap();
    Outcome {
        pass: m.le_px == 0.0 && m.fr == 1.0 && m.fp == 0.0,
        detail: format!("{} frames: LE {} px, FR {}, FP {}", m.frames, m.le_px, m.fr, m.fp),
    }
}

fn fp_non_increasing(csv: &str) -> bool {
    let fp: Vec<f64> = csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    !fp.is_empty() && fp.windows(2).all(|w| w[1] <= w[0])
}

fn avloc(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_avloc")).args(args).output().expect("binary runs")
}

fn run_ok(args: &[&str]) -> Result<String, String> {
    let out = avloc(args);
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr).trim()))
    }
}

fn threshold_monotonicity(tmp: &Path, reports: &[BenchmarkReport]) -> Outcome {
    let run = || -> Result<(usize, usize), String> {
        let cfg = tmp.join("suite.toml");
        fs::write(&cfg, "[benchmark]\nmaster_seed = 7\nscenarios = 5\nframes = 40\n").unwrap();
        let data = tmp.join("sweep-data");
        let d = data.to_str().unwrap();
        run_ok(&["simulate", "--config", cfg.to_str().unwrap(), "--out", d])?;
        let mut outputs = vec![run_ok(&["sweep-threshold", "--data", d, "--strategy", "flat"])?];
        for strategy in ["invariant", "spatial"] {
            let ckpt = tmp.join(format!("{strategy}.dswm"));
            let c = ckpt.to_str().unwrap();
            run_ok(&[
                "train", "--data", d, "--strategy", strategy, "--out", c, "--epochs", "2", "--hidden", "16", "--filters",
                "4",
            ])?;
            outputs.push(run_ok(&["sweep-threshold", "--data", d, "--strategy", strategy, "--checkpoint", c])?);
            outputs.push(run_ok(&[
                "sweep-threshold", "--data", d, "--strategy", strategy, "--checkpoint", c, "--thresholds",
                "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1",
            ])?);
        }
        outputs.extend(
            reports
                .iter()
                .flat_map(|r| &r.results)
                .map(|r| avloc_core::metrics::metrics_csv(&r.sweep)),
        );
        let bad = outputs.iter().filter(|o| !fp_non_increasing(o)).count();
        Ok((bad, outputs.len() - bad))
    };
    match run() {
        Ok((bad, good)) => Outcome {
            pass: bad == 0,
            detail: format!("{} sweep outputs (CLI and benchmark), {bad} with an FP increase", good + bad),
        },
        Err(e) => Outcome {
            pass: false,
            detail: format!("command failed: {e}"),
        },
    }
}

fn determinism(tmp: &Path) -> Outcome {
    let run = |name: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let out = tmp.join(name);
        run_ok(&[
            "benchmark", "--seed", "3", "--out", out.to_str().unwrap(), "--scenarios", "4", "--frames", "40",
            "--epochs", "2", "--hidden", "16", "--filters", "4",
        ])?;
        let mut files: Vec<_> = fs::read_dir(&out)
            .unwrap()
            .map(|e| e.unwrap().path())
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
            .collect();
        files.sort();
        Ok(files)
    };
    match (run("bench-a"), run("bench-b")) {
        (Ok(a), Ok(b)) => {
            let metrics = a.iter().filter(|(n, _)| n.starts_with("metrics_") || n == "comparison.csv").count();
            Outcome {
                pass: a == b && metrics == 4,
                detail: format!(
                    "reduced benchmark (4 scenarios x 40 frames, 2 epochs) run twice: {} CSV files, {}",
                    a.len(),
                    if a == b { "byte-identical" } else { "DIFFERENT" }
                ),
            }
        }
        (Err(e), _) | (_, Err(e)) => Outcome {
            pass: false,
            detail: format!("command failed: {e}"),
        },
    }
}

struct SeedRow {
    seed: u64,
    ordering: bool,
    stress: bool,
    clean: bool,
    line: String,
}

fn seed_row(seed: u64, r: &BenchmarkReport) -> SeedRow {
    use FusionStrategy::{Flat, Invariant, Spatial};
    let at = |s: FusionStrategy, sub: Subset| *r.result(s).at(sub).expect("subset evaluated");
    let (f, i, s) = (at(Flat, Subset::All), at(Invariant, Subset::All), at(Spatial, Subset::All));
    let (i4, s4) = (at(Invariant, Subset::Speakers(4)), at(Spatial, Subset::Speakers(4)));
    let (ic, sc) = (at(Invariant, Subset::CleanSpeakers(1)), at(Spatial, Subset::CleanSpeakers(1)));
    SeedRow {
        seed,
        ordering: s.le_px < i.le_px && i.le_px < f.le_px && s.fr > i.fr.max(f.fr),
        stress: s4.fr > i4.fr && s4.le_px < i4.le_px,
        clean: (sc.fr - ic.fr).abs() < 0.02,
        line: format!(
            "seed {seed}: LE spatial/invariant/flat {:.2}/{:.2}/{:.2} px, FR {:.3}/{:.3}/{:.3}; \
             4-speaker FR {:.3}/{:.3} LE {:.2}/{:.2}; clean 1-speaker FR {:.3}/{:.3}",
            s.le_px, i.le_px, f.le_px, s.fr, i.fr, f.fr, s4.fr, i4.fr, s4.le_px, i4.le_px, sc.fr, ic.fr
        ),
    }
}

fn main() {
    let tmp = TempDir::new().unwrap();
    let mut outcomes: Vec<(usize, &str, Outcome)> = Vec::new();
    let mut record = |n, name, o: Outcome| {
        report(n, name, &o);
        outcomes.push((n, name, o));
    };
    record(1, "gradient oracle", gradient_oracle());
    record(2, "Hungarian oracle", hungarian_oracle());
    record(3, "fusion equivalence laws", fusion_laws());
    record(4, "metrics self-test", metrics_self_test());
    record(8, "determinism", determinism(tmp.path()));

    let t = Instant::now();
    let mut reports = Vec::new();
    let mut rows = Vec::new();
    for seed in BENCH_SEEDS {
        let r = run_benchmark(&BenchmarkConfig::new(seed)).expect("benchmark runs");
        let row = seed_row(seed, &r);
        println!("  {}", row.line);
        rows.push(row);
        reports.push(r);
    }
    let secs = t.elapsed().as_secs_f64();
    let ordering = rows.iter().filter(|r| r.ordering).count();
    let both = rows.iter().filter(|r| r.stress && r.clean).count();
    let list = |f: &dyn Fn(&SeedRow) -> bool| {
        rows.iter().filter(|r| f(r)).map(|r| r.seed.to_string()).collect::<Vec<_>>().join(",")
    };
    record(
        5,
        "ordering reproduction",
        Outcome {
            pass: ordering >= 4 && secs < 900.0,
            detail: format!(
                "ordering holds for {ordering}/5 seeds [{}] (need 4), 5 benchmark runs in {secs:.0} s (< 900 s)",
                list(&|r| r.ordering)
            ),
        },
    );
    record(
        6,
        "multi-speaker stress",
        Outcome {
            pass: both >= 4,
            detail: format!(
                "4-speaker advantage in {}/5 seeds [{}], clean 1-speaker FR gap < 0.02 in {}/5 [{}], both in {both}/5 (need 4)",
                rows.iter().filter(|r| r.stress).count(),
                list(&|r| r.stress),
                rows.iter().filter(|r| r.clean).count(),
                list(&|r| r.clean)
            ),
        },
    );
    record(7, "threshold monotonicity", threshold_monotonicity(tmp.path(), &reports));

    outcomes.sort_by_key(|(n, _, _)| *n);
    println!("summary:");
    for (n, name, o) in &outcomes {
        report(*n, name, o);
    }
    let failed: Vec<String> = outcomes.iter().filter(|(_, _, o)| !o.pass).map(|(n, _, _)| n.to_string()).collect();
    if failed.is_empty() {
        println!("all acceptance criteria passed");
    } else {
        println!("failed criteria: {}", failed.join(", "));
        std::process::exit(1);
    }
}
