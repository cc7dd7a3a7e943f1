//! Evaluation harness: predictions over scenario sets and the full
//! simulate / train / evaluate benchmark.

use std::fmt::Write as _;

use log::info;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::FusionStrategy;
use crate::grid::{GroundTruthFrame, ProbGrid};
use crate::metrics::{threshold_sweep, AggregateMetrics, DetectOptions};
use crate::model::{ModelConfig, ModelParams};
use crate::sim::derive_seed;
use crate::sim::suite::{benchmark_suite, BenchmarkOptions, DatasetBundle, Split};
use crate::sim::{Frame, Scenario};
use crate::train::{Pipeline, Sample, TrainConfig, TrainHistory};

/// Threshold used for the strategy comparison table.
pub const COMPARISON_THRESHOLD: f64 = 0.75;

/// Benchmark model and schedule, sized so one seed trains in a few minutes.
pub const BENCH_HIDDEN: usize = 32;
pub const BENCH_FILTERS: usize = 8;
pub const BENCH_EPOCHS: usize = 10;

/// Master seeds of the documented benchmark runs.
pub const BENCH_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

/// Which frames of a split a metric row covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Subset {
    All,
    /// Frames with exactly this many speakers.
    Speakers(usize),
    /// One-speaker frames of the test scenarios regenerated without
    /// corruption regions.
    CleanSpeakers(usize),
}

impl Subset {
    pub fn label(self) -> String {
        match self {
            Subset::All => "all".into(),
            Subset::Speakers(n) => format!("speakers_{n}"),
            Subset::CleanSpeakers(n) => format!("clean_speakers_{n}"),
        }
    }
}

/// Predicted grids and matching ground truth, in frame order.
pub fn predict_frames(pipeline: &Pipeline<'_>, frames: &[&Frame]) -> Result<(Vec<ProbGrid>, Vec<GroundTruthFrame>)> {
    let grids = frames
        .par_iter()
        .map(|f| pipeline.predict(&f.audio, &f.video))
        .collect::<Result<Vec<_>>>()?;
    let truths = frames.iter().map(|f| f.truth.clone()).collect();
    Ok((grids, truths))
}

pub fn all_frames(scenarios: &[Scenario]) -> Vec<&Frame> {
    scenarios.iter().flat_map(|s| &s.frames).collect()
}

pub fn frames_with_speakers(scenarios: &[Scenario], n: usize) -> Vec<&Frame> {
    scenarios
        .iter()
        .flat_map(|s| &s.frames)
        .filter(|f| f.truth.speaker_count() == n)
        .collect()
}

/// Threshold sweep of `pipeline` over every frame of `scenarios`.
pub fn evaluate(
    pipeline: &Pipeline<'_>,
    scenarios: &[Scenario],
    thresholds: &[f64],
    options: DetectOptions,
) -> Result<Vec<AggregateMetrics>> {
    evaluate_frames(pipeline, &all_frames(scenarios), thresholds, options)
}

pub fn evaluate_frames(
    pipeline: &Pipeline<'_>,
    frames: &[&Frame],
    thresholds: &[f64],
    options: DetectOptions,
) -> Result<Vec<AggregateMetrics>> {
    let (grids, truths) = predict_frames(pipeline, frames)?;
    threshold_sweep(&grids, &truths, thresholds, options)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkConfig {
    pub master_seed: u64,
    pub suite: BenchmarkOptions,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub thresholds: Vec<f64>,
}

impl BenchmarkConfig {
    pub fn new(master_seed: u64) -> Self {
        let suite = BenchmarkOptions::default();
        Self {
            master_seed,
            suite,
            model: ModelConfig {
                hidden: BENCH_HIDDEN,
                refiner_filters: BENCH_FILTERS,
                ..ModelConfig::new(suite.geometry)
            },
            train: TrainConfig {
                seed: derive_seed(master_seed, 1001),
                max_epochs: BENCH_EPOCHS,
                ..TrainConfig::default()
            },
            thresholds: crate::metrics::default_sweep(),
        }
    }

    fn model_seed(&self) -> u64 {
        derive_seed(self.master_seed, 1000)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: FusionStrategy,
    /// Sweep over the whole test split.
    pub sweep: Vec<AggregateMetrics>,
    /// Rows at [`COMPARISON_THRESHOLD`] per subset.
    pub comparison: Vec<(Subset, AggregateMetrics)>,
    pub history: Option<TrainHistory>,
    pub params: Option<ModelParams>,
}

impl StrategyResult {
    pub fn at(&self, subset: Subset) -> Option<&AggregateMetrics> {
        self.comparison.iter().find(|(s, _)| *s == subset).map(|(_, m)| m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkReport {
    pub results: Vec<StrategyResult>,
}

impl BenchmarkReport {
    pub fn result(&self, strategy: FusionStrategy) -> &StrategyResult {
        self.results
            .iter()
            .find(|r| r.strategy == strategy)
            .expect("every strategy is evaluated")
    }

    pub fn comparison_csv(&self) -> String {
        let mut out = String::from("strategy,subset,frames,threshold,le_px,fr,fp\n");
        for r in &self.results {
            for (subset, m) in &r.comparison {
                writeln!(
                    out,
                    "{},{},{},{:.4},{:.6},{:.6},{:.6}",
                    r.strategy,
                    subset.label(),
                    m.frames,
                    m.threshold,
                    m.le_px,
                    m.fr,
                    m.fp
                )
                .unwrap();
            }
        }
        out
    }
}

fn comparison_rows(
    pipeline: &Pipeline<'_>,
    test: &[Scenario],
    clean_test: &[Scenario],
) -> Result<Vec<(Subset, AggregateMetrics)>> {
    let th = [COMPARISON_THRESHOLD];
    let opts = DetectOptions::default();
    let mut rows = Vec::new();
    let mut push = |subset: Subset, frames: Vec<&Frame>| -> Result<()> {
        if !frames.is_empty() {
            rows.push((subset, evaluate_frames(pipeline, &frames, &th, opts)?[0]));
        }
        Ok(())
    };
    push(Subset::All, all_frames(test))?;
    for n in 1..=crate::sim::suite::MAX_SPEAKERS {
        push(Subset::Speakers(n), frames_with_speakers(test, n))?;
    }
    push(Subset::CleanSpeakers(1), frames_with_speakers(clean_test, 1))?;
    Ok(rows)
}

/// Simulates the suite, trains the invariant and spatial models, and
/// evaluates all three strategies on the test split.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let bundle = benchmark_suite(config.master_seed, &config.suite)?;
    let clean = BenchmarkOptions {
        corrupted: false,
        ..config.suite
    };
    let clean_bundle = benchmark_suite(config.master_seed, &clean)?;
    run_benchmark_on(&bundle, &clean_bundle.test, config)
}

pub fn run_benchmark_on(
    bundle: &DatasetBundle,
    clean_test: &[Scenario],
    config: &BenchmarkConfig,
) -> Result<BenchmarkReport> {
    if config.model.geometry != config.suite.geometry {
        return Err(Error::usage("model geometry differs from the benchmark grid"));
    }
    let floor = config.train.floor;
    let test = bundle.split(Split::Test);
    let mut results = Vec::new();

    let flat = Pipeline::flat(floor);
    results.push(StrategyResult {
        strategy: FusionStrategy::Flat,
        sweep: evaluate(&flat, test, &config.thresholds, DetectOptions::default())?,
        comparison: comparison_rows(&flat, test, clean_test)?,
        history: None,
        params: None,
    });

    let train_s = Sample::collect(bundle.split(Split::Train), floor)?;
    let val_s = Sample::collect(bundle.split(Split::Val), floor)?;
    for strategy in [FusionStrategy::Invariant, FusionStrategy::Spatial] {
        let init = ModelParams::init(config.model, config.model_seed())?;
        info!("training {strategy} on {} frames", train_s.len());
        let (params, history) = crate::train::fit::fit_samples(&train_s, &val_s, init, strategy, &config.train)?;
        let pipeline = Pipeline::new(strategy, Some(&params), true, floor)?;
        let sweep = evaluate(&pipeline, test, &config.thresholds, DetectOptions::default())?;
        let comparison = comparison_rows(&pipeline, test, clean_test)?;
        results.push(StrategyResult {
            strategy,
            sweep,
            comparison,
            history: Some(history),
            params: Some(params),
        });
    }
    Ok(BenchmarkReport { results })
}
