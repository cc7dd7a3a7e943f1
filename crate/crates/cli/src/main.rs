use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use avloc_core::bench::{self, BenchmarkConfig};
use avloc_core::io::dataset::{self, AUDIO_FILE};
use avloc_core::io::{gseq, heatmap, write_atomic};
use avloc_core::metrics::{default_sweep, metrics_csv, DetectOptions};
use avloc_core::model::{checkpoint, ModelConfig, ModelParams};
use avloc_core::sim::config::{load_config, SimulationConfig};
use avloc_core::sim::suite::{benchmark_suite, Split};
use avloc_core::sim::{derive_seed, generate_scenario, Scenario};
use avloc_core::train::{fit, write_history_csv, Pipeline, TrainConfig};
use avloc_core::{Error, FusionStrategy, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

/// Audiovisual speaker localization with spatial dynamic stream weights.
///
/// Log verbosity follows the RUST_LOG environment variable.
#[derive(Parser)]
#[command(name = "avloc", version)]
struct Cli {
    /// Worker threads for parallel sections; results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario or the benchmark suite from a TOML config.
    Simulate(SimulateArgs),
    /// Train the weight estimator and refiner for one strategy.
    Train(TrainArgs),
    /// Score a strategy on a dataset split.
    Evaluate(EvaluateArgs),
    /// Like `evaluate`, defaulting to the 0.50..0.95 threshold sweep.
    SweepThreshold(EvaluateArgs),
    /// Simulate, train and evaluate all three strategies.
    Benchmark(BenchmarkArgs),
    /// Write one frame of a grid sequence as a PGM image.
    ExportHeatmap(HeatmapArgs),
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Flat,
    Invariant,
    Spatial,
}

impl From<StrategyArg> for FusionStrategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Flat => FusionStrategy::Flat,
            StrategyArg::Invariant => FusionStrategy::Invariant,
            StrategyArg::Spatial => FusionStrategy::Spatial,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Val => Split::Val,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 16)]
    filters: usize,
    #[arg(long, default_value_t = 4)]
    depth: usize,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset root with `train` and `val` splits.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Checkpoint path.
    #[arg(long)]
    out: PathBuf,
    /// History CSV path; defaults to the checkpoint path with `.history.csv`.
    #[arg(long)]
    history: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 20)]
    epochs: usize,
    #[arg(long, default_value_t = 4)]
    patience: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Epochs at the start in which only the refiner learns.
    #[arg(long, default_value_t = 1)]
    warmup_epochs: usize,
    /// Train only the refiner; required for the flat strategy.
    #[arg(long)]
    refiner_only: bool,
    #[command(flatten)]
    model: ModelArgs,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Dataset root, or a single scenario directory.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    /// Required for invariant and spatial; optional for flat.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Comma-separated ascending thresholds.
    #[arg(long, value_delimiter = ',', conflicts_with = "sweep")]
    thresholds: Option<Vec<f64>>,
    /// Use the 0.50..0.95 step 0.05 sweep.
    #[arg(long)]
    sweep: bool,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    /// Skip the refiner even when a checkpoint is given.
    #[arg(long)]
    no_refine: bool,
    /// Collapse adjacent detections to local maxima.
    #[arg(long)]
    nms: bool,
    /// Output CSV; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchmarkArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory for metrics and comparison CSVs.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 20)]
    scenarios: usize,
    #[arg(long, default_value_t = 500)]
    frames: usize,
    #[arg(long, default_value_t = bench::BENCH_EPOCHS)]
    epochs: usize,
    #[arg(long, default_value_t = bench::BENCH_HIDDEN)]
    hidden: usize,
    #[arg(long, default_value_t = bench::BENCH_FILTERS)]
    filters: usize,
    /// Also write the generated dataset under this directory.
    #[arg(long)]
    dataset: Option<PathBuf>,
}

#[derive(Args)]
struct HeatmapArgs {
    /// GSEQ grid sequence.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    frame: usize,
    /// PGM output path.
    #[arg(long)]
    out: PathBuf,
    /// Optional CSV dump of the same frame.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut config = load_config(&a.config)?;
    if let Some(seed) = a.seed {
        config = config.with_seed(seed);
    }
    match config {
        SimulationConfig::Scenario(c) => {
            let sc = generate_scenario(&c)?;
            dataset::write_scenario(&a.out, &sc)?;
            info!("wrote scenario {} ({} frames) to {}", sc.name, sc.frames.len(), a.out.display());
        }
        SimulationConfig::Benchmark { master_seed, options } => {
            let bundle = benchmark_suite(master_seed, &options)?;
            dataset::write_bundle(&a.out, &bundle)?;
            info!("wrote benchmark suite for seed {master_seed} to {}", a.out.display());
        }
    }
    Ok(())
}

fn train(a: &TrainArgs) -> Result<()> {
    let strategy = FusionStrategy::from(a.strategy);
    if strategy == FusionStrategy::Flat && !a.refiner_only {
        return Err(Error::Usage(
            "flat fusion has no trainable stream weights; pass --refiner-only to train its refiner".into(),
        ));
    }
    let train_set = dataset::read_split(&a.data, Split::Train)?;
    let val_set = dataset::read_split(&a.data, Split::Val)?;
    let model = ModelConfig {
        geometry: train_set[0].geometry,
        hidden: a.model.hidden,
        refiner_depth: a.model.depth,
        refiner_filters: a.model.filters,
    };
    let params = ModelParams::init(model, derive_seed(a.seed, 1000))?;
    let cfg = TrainConfig {
        batch_size: a.batch_size,
        max_epochs: a.epochs,
        patience: a.patience,
        seed: derive_seed(a.seed, 1001),
        adam: avloc_core::train::AdamConfig {
            learning_rate: a.lr,
            ..Default::default()
        },
        refiner_only: a.refiner_only,
        warmup_epochs: a.warmup_epochs,
        ..TrainConfig::default()
    };
    let (params, history) = fit(&train_set, &val_set, params, strategy, &cfg)?;
    checkpoint::save(&params, &a.out)?;
    let history_path = a.history.clone().unwrap_or_else(|| a.out.with_extension("history.csv"));
    write_history_csv(&history_path, &history)?;
    info!(
        "best validation loss {:?} after {} epochs; checkpoint {}",
        history.best_val_loss(),
        history.stop_epoch(),
        a.out.display()
    );
    Ok(())
}

/// Scenarios of a split, or the lone scenario when `data` holds one directly.
fn load_scenarios(data: &Path, split: Split) -> Result<Vec<Scenario>> {
    if data.join(AUDIO_FILE).is_file() {
        Ok(vec![dataset::read_scenario(data)?])
    } else {
        dataset::read_split(data, split)
    }
}

fn evaluate(a: &EvaluateArgs, sweep_default: bool) -> Result<()> {
    let strategy = FusionStrategy::from(a.strategy);
    let thresholds = match (&a.thresholds, a.sweep || sweep_default) {
        (Some(t), _) => t.clone(),
        (None, true) => default_sweep(),
        (None, false) => vec![bench::COMPARISON_THRESHOLD],
    };
    let params = match &a.checkpoint {
        Some(p) => Some(checkpoint::load(p)?),
        None if strategy != FusionStrategy::Flat => {
            return Err(Error::Usage(format!("strategy {strategy} needs --checkpoint")));
        }
        None => None,
    };
    let scenarios = load_scenarios(&a.data, a.split.into())?;
    let floor = TrainConfig::default().floor;
    let refine = params.is_some() && !a.no_refine;
    let pipeline = Pipeline::new(strategy, params.as_ref(), refine, floor)?;
    let rows = bench::evaluate(&pipeline, &scenarios, &thresholds, DetectOptions { nms: a.nms })?;
    let csv = metrics_csv(&rows);
    match &a.out {
        Some(path) => write_atomic(path, csv.as_bytes()),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn benchmark(a: &BenchmarkArgs) -> Result<()> {
    let mut cfg = BenchmarkConfig::new(a.seed);
    cfg.suite.scenarios = a.scenarios;
    cfg.suite.frames = a.frames;
    cfg.model.hidden = a.hidden;
    cfg.model.refiner_filters = a.filters;
    cfg.train.max_epochs = a.epochs;
    if let Some(dir) = &a.dataset {
        dataset::write_bundle(dir, &benchmark_suite(a.seed, &cfg.suite)?)?;
    }
    let report = bench::run_benchmark(&cfg)?;
    fs::create_dir_all(&a.out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    for r in &report.results {
        write_atomic(
            &a.out.join(format!("metrics_{}.csv", r.strategy)),
            metrics_csv(&r.sweep).as_bytes(),
        )?;
        if let Some(h) = &r.history {
            write_history_csv(&a.out.join(format!("history_{}.csv", r.strategy)), h)?;
        }
        if let Some(p) = &r.params {
            checkpoint::save(p, &a.out.join(format!("model_{}.dswm", r.strategy)))?;
        }
    }
    let table = report.comparison_csv();
    write_atomic(&a.out.join("comparison.csv"), table.as_bytes())?;
    print!("{table}");
    Ok(())
}

fn export_heatmap(a: &HeatmapArgs) -> Result<()> {
    let (_, frames) = gseq::read(&a.input)?;
    let grid = frames.get(a.frame).ok_or_else(|| {
        Error::Usage(format!(
            "frame {} out of range; {} holds {} frames",
            a.frame,
            a.input.display(),
            frames.len()
        ))
    })?;
    heatmap::write_pgm(&a.out, grid)?;
    if let Some(csv) = &a.csv {
        heatmap::write_csv(csv, grid)?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Usage(format!("cannot configure {n} threads: {e}")))?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a, false),
        Command::SweepThreshold(a) => evaluate(a, true),
        Command::Benchmark(a) => benchmark(a),
        Command::ExportHeatmap(a) => export_heatmap(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
