//! TOML scenario configuration files.
//!
//! A file holds exactly one of two sections. A single scenario:
//!
//! ```toml
//! [scenario]
//! name = "two-speakers"
//! seed = 7
//! frames = 250
//! n_speakers = 2            # optional when speakers are listed
//! snap_to_cells = true
//!
//! [scenario.geometry]       # optional, defaults to 20x24 over 720x450
//! rows = 20
//! cols = 24
//! frame_width = 720
//! frame_height = 450
//!
//! [scenario.tracker.audio]  # any subset of the tracker fields
//! clutter_rate = 0.0
//!
//! [[scenario.speakers]]     # omit to draw random trajectories
//! waypoints = [[100.0, 200.0], [300.0, 220.0]]
//! speed = 40.0
//! active = [0, 250]         # optional, defaults to every frame
//!
//! [[scenario.regions]]
//! modality = "video"        # audio | video
//! kind = "dropout"          # dropout | noise | bias
//! severity = 0.9
//! rows = [0, 20]            # half-open cell ranges, default full grid
//! cols = [12, 24]
//! frames = [0, 250]         # optional
//! ```
//!
//! or the benchmark suite:
//!
//! ```toml
//! [benchmark]
//! master_seed = 1
//! scenarios = 20
//! frames = 500
//! corrupted = true
//! clutter = true
//! ```

use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::io::read_file;
use crate::sim::suite::BenchmarkOptions;
use crate::sim::{CorruptionKind, CorruptionRegion, Modality, ScenarioConfig, SpeakerTrajectory, TrackerModel};

#[derive(Debug, Clone, PartialEq)]
pub enum SimulationConfig {
    Scenario(ScenarioConfig),
    Benchmark { master_seed: u64, options: BenchmarkOptions },
}

impl SimulationConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        match self {
            SimulationConfig::Scenario(mut c) => {
                c.seed = seed;
                SimulationConfig::Scenario(c)
            }
            SimulationConfig::Benchmark { options, .. } => SimulationConfig::Benchmark {
                master_seed: seed,
                options,
            },
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    scenario: Option<RawScenario>,
    benchmark: Option<RawBenchmark>,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBenchmark {
    #[serde(default)]
    master_seed: u64,
    scenarios: Option<usize>,
    frames: Option<usize>,
    #[serde(default = "yes")]
    corrupted: bool,
    #[serde(default = "yes")]
    clutter: bool,
    geometry: Option<GridGeometry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    #[serde(default)]
    seed: u64,
    frames: usize,
    n_speakers: Option<usize>,
    #[serde(default = "yes")]
    snap_to_cells: bool,
    geometry: Option<GridGeometry>,
    #[serde(default)]
    tracker: TrackerModel,
    #[serde(default)]
    speakers: Vec<RawSpeaker>,
    #[serde(default)]
    regions: Vec<RawRegion>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpeaker {
    waypoints: Vec<[f64; 2]>,
    speed: f64,
    active: Option<[usize; 2]>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRegion {
    modality: Modality,
    kind: CorruptionKind,
    severity: f64,
    rows: Option<[usize; 2]>,
    cols: Option<[usize; 2]>,
    frames: Option<[usize; 2]>,
}

pub fn parse_config(text: &str) -> Result<SimulationConfig> {
    let raw: RawFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    match (raw.scenario, raw.benchmark) {
        (Some(s), None) => Ok(SimulationConfig::Scenario(scenario_from_raw(s)?)),
        (None, Some(b)) => {
            let defaults = BenchmarkOptions::default();
            let options = BenchmarkOptions {
                scenarios: b.scenarios.unwrap_or(defaults.scenarios),
                frames: b.frames.unwrap_or(defaults.frames),
                geometry: b.geometry.unwrap_or(defaults.geometry),
                corrupted: b.corrupted,
                clutter: b.clutter,
            };
            options.geometry.validate().map_err(|e| Error::Config(e.to_string()))?;
            Ok(SimulationConfig::Benchmark {
                master_seed: b.master_seed,
                options,
            })
        }
        (Some(_), Some(_)) => Err(Error::Config("config holds both [scenario] and [benchmark]".into())),
        (None, None) => Err(Error::Config("config needs a [scenario] or [benchmark] section".into())),
    }
}

fn scenario_from_raw(s: RawScenario) -> Result<ScenarioConfig> {
    let geometry = s.geometry.unwrap_or_default();
    geometry.validate().map_err(|e| Error::Config(e.to_string()))?;
    let n_speakers = match (s.n_speakers, s.speakers.len()) {
        (Some(n), 0) => n,
        (None, 0) => return Err(Error::Config("scenario needs n_speakers or [[scenario.speakers]]".into())),
        (None, k) => k,
        (Some(n), k) if n == k => n,
        (Some(n), k) => return Err(Error::Config(format!("n_speakers = {n} but {k} speakers listed"))),
    };
    let speakers = s
        .speakers
        .into_iter()
        .map(|r| SpeakerTrajectory {
            waypoints: r.waypoints.iter().map(|p| (p[0], p[1])).collect(),
            speed: r.speed,
            active: r.active.map_or((0, s.frames), |a| (a[0], a[1])),
        })
        .collect();
    let regions = s
        .regions
        .into_iter()
        .map(|r| {
            let rows = r.rows.map_or((0, geometry.rows), |a| (a[0], a[1]));
            let cols = r.cols.map_or((0, geometry.cols), |a| (a[0], a[1]));
            let mut region = CorruptionRegion::rect(&geometry, r.modality, r.kind, r.severity, rows, cols)
                .map_err(|e| Error::Config(e.to_string()))?;
            region.frames = r.frames.map(|f| (f[0], f[1]));
            Ok(region)
        })
        .collect::<Result<Vec<_>>>()?;
    let cfg = ScenarioConfig {
        name: s.name.unwrap_or_else(|| "scenario".into()),
        n_speakers,
        frames: s.frames,
        geometry,
        speakers,
        regions,
        tracker: s.tracker,
        snap_to_cells: s.snap_to_cells,
        seed: s.seed,
    };
    cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<SimulationConfig> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|_| Error::Config(format!("{} is not UTF-8", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
