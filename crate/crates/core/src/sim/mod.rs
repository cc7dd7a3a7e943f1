//! Synthetic multi-speaker scenarios with simulated tracker posteriors.
//!
//! Each frame renders two presence grids from the ground truth:
//!
//! * audio: wide Gaussian blobs with a little positional jitter plus
//!   spurious clutter cells,
//! * video: sharp blobs that are occasionally missed.
//!
//! Corruption regions then degrade one modality inside a cell mask. All
//! random draws come from separate ChaCha streams (render, corruption,
//! clutter), so switching regions on or off leaves every cell outside the
//! regions bit-identical.

pub mod config;
pub mod suite;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{cell_center_unchecked, pixel_to_cell, GridGeometry, GroundTruthFrame, ProbGrid};

pub const FRAMES_PER_SECOND: f64 = 25.0;

pub(crate) const STREAM_TRAJECTORY: u64 = 1;
const STREAM_RENDER: u64 = 2;
const STREAM_CORRUPTION: u64 = 3;
const STREAM_CLUTTER: u64 = 4;

/// Seeded generator for one of the independent random streams.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer; derives child seeds from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerTrajectory {
    /// Pixel positions visited in order; the speaker walks the polyline
    /// back and forth.
    pub waypoints: Vec<(f64, f64)>,
    /// Pixels per second.
    pub speed: f64,
    /// Active frames `[start, end)`.
    pub active: (usize, usize),
}

impl SpeakerTrajectory {
    fn validate(&self, geom: &GridGeometry) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(Error::usage("trajectory needs at least one waypoint"));
        }
        if let Some(&(x, y)) = self.waypoints.iter().find(|&&(x, y)| !geom.contains_pixel(x, y)) {
            return Err(Error::usage(format!("waypoint ({x}, {y}) lies outside the frame")));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::usage(format!("speed must be finite and >= 0, got {}", self.speed)));
        }
        if self.active.0 > self.active.1 {
            return Err(Error::usage(format!("active span {:?} is reversed", self.active)));
        }
        Ok(())
    }

    pub fn is_active(&self, t: usize) -> bool {
        t >= self.active.0 && t < self.active.1
    }

    /// Position at frame `t` (linear interpolation along the waypoints).
    pub fn position(&self, t: usize) -> (f64, f64) {
        let segs: Vec<f64> = self
            .waypoints
            .windows(2)
            .map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1))
            .collect();
        let total: f64 = segs.iter().sum();
        if total == 0.0 {
            return self.waypoints[0];
        }
        let elapsed = t.saturating_sub(self.active.0) as f64 / FRAMES_PER_SECOND;
        let mut s = (self.speed * elapsed) % (2.0 * total);
        if s > total {
            s = 2.0 * total - s;
        }
        for (w, &len) in self.waypoints.windows(2).zip(&segs) {
            if s <= len && len > 0.0 {
                let f = s / len;
                return (w[0].0 + f * (w[1].0 - w[0].0), w[0].1 + f * (w[1].1 - w[0].1));
            }
            s -= len;
        }
        *self.waypoints.last().unwrap()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Audio,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    /// With probability `severity` per frame the whole masked area is
    /// blanked to the modality's floor value.
    Dropout,
    /// With probability `severity` per frame, phantom sources shaped like
    /// the modality's speaker response appear at random masked cells, one
    /// per [`NOISE_CELLS_PER_PHANTOM`] masked cells.
    Noise,
    /// Every masked cell is offset by `+severity` (clipped to 1).
    Bias,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptionRegion {
    pub modality: Modality,
    pub kind: CorruptionKind,
    pub severity: f64,
    /// Row-major cell mask.
    pub mask: Vec<bool>,
    /// Active frames `[start, end)`; `None` means always.
    pub frames: Option<(usize, usize)>,
}

impl CorruptionRegion {
    /// Region covering the rectangle `rows.0..rows.1` x `cols.0..cols.1`.
    pub fn rect(
        geom: &GridGeometry,
        modality: Modality,
        kind: CorruptionKind,
        severity: f64,
        rows: (usize, usize),
        cols: (usize, usize),
    ) -> Result<Self> {
        if rows.0 >= rows.1 || cols.0 >= cols.1 || rows.1 > geom.rows || cols.1 > geom.cols {
            return Err(Error::usage(format!(
                "region rows {rows:?} cols {cols:?} is empty or outside the {}x{} grid",
                geom.rows, geom.cols
            )));
        }
        let mut mask = vec![false; geom.cells()];
        for i in rows.0..rows.1 {
            for j in cols.0..cols.1 {
                mask[geom.index(i, j)] = true;
            }
        }
        let r = Self {
            modality,
            kind,
            severity,
            mask,
            frames: None,
        };
        r.validate(geom)?;
        Ok(r)
    }

    fn validate(&self, geom: &GridGeometry) -> Result<()> {
        if !(0.0..=1.0).contains(&self.severity) {
            return Err(Error::usage(format!("severity must lie in [0, 1], got {}", self.severity)));
        }
        if self.mask.len() != geom.cells() {
            return Err(Error::usage("region mask does not match the grid"));
        }
        if !self.mask.iter().any(|&m| m) {
            return Err(Error::usage("region mask is empty"));
        }
        Ok(())
    }

    pub fn is_active(&self, t: usize) -> bool {
        self.frames.is_none_or(|(a, b)| t >= a && t < b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AudioTracker {
    /// Blob standard deviation in cells.
    pub blob_sigma: f64,
    pub peak: f64,
    /// Expected spurious cells per frame.
    pub clutter_rate: f64,
    pub clutter_amplitude: (f64, f64),
    /// Background level outside blobs.
    pub floor: f64,
    /// Standard deviation (cells) of the per-frame blob-center offset.
    pub position_jitter: f64,
}

impl Default for AudioTracker {
    fn default() -> Self {
        Self {
            blob_sigma: 1.5,
            peak: 0.9,
            clutter_rate: 0.5,
            clutter_amplitude: (0.3, 0.8),
            floor: 0.02,
            position_jitter: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VideoTracker {
    pub detection_prob: f64,
    pub blob_sigma: f64,
    pub peak: f64,
    pub floor: f64,
}

impl Default for VideoTracker {
    fn default() -> Self {
        Self {
            detection_prob: 0.97,
            blob_sigma: 0.5,
            peak: 0.99,
            floor: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrackerModel {
    pub audio: AudioTracker,
    pub video: VideoTracker,
}

impl TrackerModel {
    /// No clutter and no missed video detections.
    pub fn without_clutter(mut self) -> Self {
        self.audio.clutter_rate = 0.0;
        self.video.detection_prob = 1.0;
        self
    }

    fn validate(&self) -> Result<()> {
        let a = &self.audio;
        let v = &self.video;
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        let ok = unit(a.peak)
            && unit(a.floor)
            && unit(a.clutter_amplitude.0)
            && unit(a.clutter_amplitude.1)
            && a.clutter_amplitude.0 <= a.clutter_amplitude.1
            && a.clutter_rate >= 0.0
            && a.clutter_rate.is_finite()
            && a.blob_sigma > 0.0
            && a.position_jitter >= 0.0
            && unit(v.detection_prob)
            && unit(v.peak)
            && unit(v.floor)
            && v.blob_sigma > 0.0;
        if !ok {
            return Err(Error::usage(format!("invalid tracker model {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_speakers: usize,
    pub frames: usize,
    pub geometry: GridGeometry,
    /// Explicit trajectories; when empty, `n_speakers` random ones are drawn.
    pub speakers: Vec<SpeakerTrajectory>,
    pub regions: Vec<CorruptionRegion>,
    pub tracker: TrackerModel,
    /// Report ground-truth positions at the center of their cell.
    pub snap_to_cells: bool,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn new(n_speakers: usize, frames: usize, seed: u64) -> Self {
        Self {
            name: "scenario".into(),
            n_speakers,
            frames,
            geometry: GridGeometry::default(),
            speakers: Vec::new(),
            regions: Vec::new(),
            tracker: TrackerModel::default(),
            snap_to_cells: true,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(1..=4).contains(&self.n_speakers) {
            return Err(Error::usage(format!("n_speakers must be 1-4, got {}", self.n_speakers)));
        }
        if !self.speakers.is_empty() && self.speakers.len() != self.n_speakers {
            return Err(Error::usage(format!(
                "{} trajectories given for {} speakers",
                self.speakers.len(),
                self.n_speakers
            )));
        }
        for s in &self.speakers {
            s.validate(&self.geometry)?;
        }
        for r in &self.regions {
            r.validate(&self.geometry)?;
        }
        self.tracker.validate()
    }
}

/// One simulated frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub audio: ProbGrid,
    pub video: ProbGrid,
    pub truth: GroundTruthFrame,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub geometry: GridGeometry,
    pub frames: Vec<Frame>,
}

impl Scenario {
    pub fn max_speakers(&self) -> usize {
        self.frames.iter().map(|f| f.truth.speaker_count()).max().unwrap_or(0)
    }
}

/// Random waypoints confined to column band `band` of `bands`.
pub(crate) fn random_trajectory<R: Rng>(
    geom: &GridGeometry,
    band: usize,
    bands: usize,
    active: (usize, usize),
    rng: &mut R,
) -> SpeakerTrajectory {
    let band_cols = geom.cols / bands;
    let cw = geom.cell_width();
    let ch = geom.cell_height();
    let col0 = band * band_cols;
    let col1 = if band + 1 == bands { geom.cols } else { col0 + band_cols };
    // Keep a half cell of margin so snapped positions stay in the band.
    let x0 = col0 as f64 * cw + 0.5 * cw;
    let x1 = col1 as f64 * cw - 0.5 * cw;
    let margin_rows = if geom.rows > 4 { 2.0 } else { 0.5 };
    let y0 = margin_rows * ch;
    let y1 = f64::from(geom.frame_height) - margin_rows * ch;
    let n = rng.random_range(3..=5);
    let waypoints = (0..n)
        .map(|_| {
            (
                if x1 > x0 { rng.random_range(x0..x1) } else { x0 },
                if y1 > y0 { rng.random_range(y0..y1) } else { y0 },
            )
        })
        .collect();
    SpeakerTrajectory {
        waypoints,
        speed: rng.random_range(30.0..90.0),
        active,
    }
}

fn render_blob(grid: &mut [f64], geom: &GridGeometry, ci: f64, cj: f64, sigma: f64, peak: f64) {
    let inv = 1.0 / (2.0 * sigma * sigma);
    for i in 0..geom.rows {
        let di = i as f64 - ci;
        for j in 0..geom.cols {
            let dj = j as f64 - cj;
            let v = peak * (-(di * di + dj * dj) * inv).exp();
            let slot = &mut grid[geom.index(i, j)];
            if v > *slot {
                *slot = v;
            }
        }
    }
}

/// Masked cells per phantom source of a noise event.
pub const NOISE_CELLS_PER_PHANTOM: usize = 60;

/// Tracker response parameters of the modality a region corrupts.
struct Response {
    floor: f64,
    peak: f64,
    sigma: f64,
}

fn apply_region(grid: &mut [f64], geom: &GridGeometry, region: &CorruptionRegion, resp: &Response, rng: &mut ChaCha8Rng) {
    match region.kind {
        CorruptionKind::Dropout => {
            if rng.random::<f64>() < region.severity {
                for (v, _) in grid.iter_mut().zip(&region.mask).filter(|(_, m)| **m) {
                    *v = resp.floor;
                }
            }
        }
        CorruptionKind::Noise => {
            if rng.random::<f64>() < region.severity {
                let cells: Vec<usize> = (0..grid.len()).filter(|&k| region.mask[k]).collect();
                let n = (cells.len() / NOISE_CELLS_PER_PHANTOM).max(1);
                let mut phantom = vec![0.0; grid.len()];
                for _ in 0..n {
                    let (i, j) = geom.row_col(cells[rng.random_range(0..cells.len())]);
                    render_blob(&mut phantom, geom, i as f64, j as f64, resp.sigma, resp.peak);
                }
                for ((v, p), _) in grid.iter_mut().zip(&phantom).zip(&region.mask).filter(|(_, m)| **m) {
                    *v = v.max(*p);
                }
            }
        }
        CorruptionKind::Bias => {
            for (v, _) in grid.iter_mut().zip(&region.mask).filter(|(_, m)| **m) {
                *v = (*v + region.severity).min(1.0);
            }
        }
    }
}

/// Renders every frame of a scenario.
pub fn generate_scenario(config: &ScenarioConfig) -> Result<Scenario> {
    config.validate()?;
    let geom = config.geometry;
    let speakers = if config.speakers.is_empty() {
        let mut rng = stream_rng(config.seed, STREAM_TRAJECTORY);
        (0..config.n_speakers)
            .map(|k| random_trajectory(&geom, k, config.n_speakers, (0, config.frames), &mut rng))
            .collect()
    } else {
        config.speakers.clone()
    };
    let mut render = stream_rng(config.seed, STREAM_RENDER);
    let mut corrupt = stream_rng(config.seed, STREAM_CORRUPTION);
    let mut clutter = stream_rng(config.seed, STREAM_CLUTTER);
    let a = config.tracker.audio;
    let v = config.tracker.video;
    let jitter = Normal::new(0.0, a.position_jitter.max(f64::MIN_POSITIVE)).expect("valid normal");
    let audio_resp = Response {
        floor: a.floor,
        peak: a.peak,
        sigma: a.blob_sigma,
    };
    let video_resp = Response {
        floor: v.floor,
        peak: v.peak,
        sigma: v.blob_sigma,
    };
    let clutter_count = (a.clutter_rate > 0.0).then(|| Poisson::new(a.clutter_rate).expect("valid rate"));

    let mut frames = Vec::with_capacity(config.frames);
    for t in 0..config.frames {
        let mut positions = Vec::new();
        let mut audio = vec![a.floor; geom.cells()];
        let mut video = vec![v.floor; geom.cells()];
        for s in speakers.iter().filter(|s| s.is_active(t)) {
            let (x, y) = s.position(t);
            let (i, j) = pixel_to_cell(&geom, x, y)?;
            positions.push(if config.snap_to_cells {
                cell_center_unchecked(&geom, i, j)
            } else {
                (x, y)
            });
            let (ji, jj) = if a.position_jitter > 0.0 {
                (jitter.sample(&mut render), jitter.sample(&mut render))
            } else {
                (0.0, 0.0)
            };
            render_blob(&mut audio, &geom, i as f64 + ji, j as f64 + jj, a.blob_sigma, a.peak);
            let detected = render.random::<f64>() < v.detection_prob;
            if detected {
                render_blob(&mut video, &geom, i as f64, j as f64, v.blob_sigma, v.peak);
            }
        }
        for region in &config.regions {
            if !region.is_active(t) {
                continue;
            }
            match region.modality {
                Modality::Audio => apply_region(&mut audio, &geom, region, &audio_resp, &mut corrupt),
                Modality::Video => apply_region(&mut video, &geom, region, &video_resp, &mut corrupt),
            }
        }
        if let Some(dist) = &clutter_count {
            let n = dist.sample(&mut clutter) as usize;
            for _ in 0..n {
                let k = clutter.random_range(0..geom.cells());
                let amp = clutter.random_range(a.clutter_amplitude.0..=a.clutter_amplitude.1);
                audio[k] = audio[k].max(amp);
            }
        }
        for g in [&mut audio, &mut video] {
            for c in g.iter_mut() {
                *c = c.clamp(0.0, 1.0);
            }
        }
        frames.push(Frame {
            audio: ProbGrid::new(geom, audio)?,
            video: ProbGrid::new(geom, video)?,
            truth: GroundTruthFrame::new(&geom, positions)?,
        });
    }
    Ok(Scenario {
        name: config.name.clone(),
        geometry: geom,
        frames,
    })
}
