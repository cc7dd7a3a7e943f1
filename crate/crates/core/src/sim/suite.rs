//! The fixed benchmark suite.
//!
//! 20 scenarios of 500 frames, split 15/2/3 into train/val/test. Every
//! scenario walks through segments with 1, 2, 3 and 4 active speakers
//! (ascending for even scenario indices, descending for odd ones), so every
//! split contains frames of every speaker count. Each speaker keeps to its
//! own quarter of the image width, so two speakers never share a cell.
//!
//! The canonical corrupted condition adds audio noise (severity 0.8) over
//! the left half of the grid and video dropout (severity 0.9) over the right
//! half.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::io::gseq;
use crate::sim::{
    derive_seed, generate_scenario, random_trajectory, stream_rng, CorruptionKind, CorruptionRegion, Modality,
    Scenario, ScenarioConfig, TrackerModel, STREAM_TRAJECTORY,
};

pub const MAX_SPEAKERS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkOptions {
    pub scenarios: usize,
    pub frames: usize,
    pub geometry: GridGeometry,
    /// Apply the canonical left/right corruption regions.
    pub corrupted: bool,
    /// Keep audio clutter and missed video detections.
    pub clutter: bool,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            scenarios: 20,
            frames: 500,
            geometry: GridGeometry::default(),
            corrupted: true,
            clutter: true,
        }
    }
}

impl BenchmarkOptions {
    pub fn clean(self) -> Self {
        Self {
            corrupted: false,
            clutter: false,
            ..self
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: Vec<Scenario>,
    pub val: Vec<Scenario>,
    pub test: Vec<Scenario>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl DatasetBundle {
    pub fn split(&self, split: Split) -> &[Scenario] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    /// FNV-1a over the encoded grids and ground truth of every scenario.
    pub fn content_hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for split in Split::ALL {
            for sc in self.split(split) {
                feed(split.name().as_bytes());
                feed(sc.name.as_bytes());
                let audio: Vec<_> = sc.frames.iter().map(|f| f.audio.clone()).collect();
                let video: Vec<_> = sc.frames.iter().map(|f| f.video.clone()).collect();
                feed(&gseq::encode(&sc.geometry, &audio).expect("shared geometry"));
                feed(&gseq::encode(&sc.geometry, &video).expect("shared geometry"));
                let truth: Vec<_> = sc.frames.iter().map(|f| f.truth.clone()).collect();
                feed(crate::io::truth::encode(&truth).as_bytes());
            }
        }
        h
    }
}

/// Audio noise over the left half, video dropout over the right half.
pub fn canonical_regions(geom: &GridGeometry) -> Result<Vec<CorruptionRegion>> {
    let half = geom.cols / 2;
    if half == 0 {
        return Err(Error::usage("canonical regions need at least two columns"));
    }
    Ok(vec![
        CorruptionRegion::rect(geom, Modality::Audio, CorruptionKind::Noise, 0.8, (0, geom.rows), (0, half))?,
        CorruptionRegion::rect(geom, Modality::Video, CorruptionKind::Dropout, 0.9, (0, geom.rows), (half, geom.cols))?,
    ])
}

/// `(train, val, test)` scenario counts for a suite of `n` scenarios.
pub fn split_sizes(n: usize) -> Result<(usize, usize, usize)> {
    if n < 3 {
        return Err(Error::usage(format!("a suite needs at least 3 scenarios, got {n}")));
    }
    let val = ((n as f64 * 0.10).round() as usize).max(1);
    let test = ((n as f64 * 0.15).round() as usize).max(1);
    let train = n - val - test;
    if train == 0 {
        return Err(Error::usage(format!("{n} scenarios leave no training data")));
    }
    Ok((train, val, test))
}

/// Active span of the speaker with entry rank `rank`.
fn active_span(rank: usize, frames: usize, ascending: bool) -> (usize, usize) {
    let seg = |q: usize| q * frames / MAX_SPEAKERS;
    if ascending {
        (seg(rank), frames)
    } else {
        (0, seg(MAX_SPEAKERS - rank))
    }
}

/// Configuration of scenario `index` of the suite.
pub fn scenario_config(master_seed: u64, index: usize, options: &BenchmarkOptions) -> Result<ScenarioConfig> {
    let geom = options.geometry;
    if geom.cols < MAX_SPEAKERS {
        return Err(Error::usage(format!("suite needs at least {MAX_SPEAKERS} grid columns")));
    }
    let seed = derive_seed(master_seed, index as u64);
    let mut cfg = ScenarioConfig::new(MAX_SPEAKERS, options.frames, seed);
    cfg.name = format!("scenario_{index:02}");
    cfg.geometry = geom;
    cfg.tracker = if options.clutter {
        TrackerModel::default()
    } else {
        TrackerModel::default().without_clutter()
    };
    let mut rng = stream_rng(seed, STREAM_TRAJECTORY);
    let mut bands: Vec<usize> = (0..MAX_SPEAKERS).collect();
    bands.shuffle(&mut rng);
    let ascending = index % 2 == 0;
    cfg.speakers = bands
        .iter()
        .enumerate()
        .map(|(rank, &band)| {
            random_trajectory(&geom, band, MAX_SPEAKERS, active_span(rank, options.frames, ascending), &mut rng)
        })
        .collect();
    if options.corrupted {
        cfg.regions = canonical_regions(&geom)?;
    }
    Ok(cfg)
}

/// Scenario indices assigned to each split.
pub fn split_indices(master_seed: u64, scenarios: usize) -> Result<[Vec<usize>; 3]> {
    let (train, val, _) = split_sizes(scenarios)?;
    let mut order: Vec<usize> = (0..scenarios).collect();
    order.shuffle(&mut stream_rng(master_seed, 0));
    let mut test = order.split_off(train + val);
    let mut val_idx = order.split_off(train);
    let mut train_idx = order;
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test.sort_unstable();
    Ok([train_idx, val_idx, test])
}

pub fn benchmark_suite(master_seed: u64, options: &BenchmarkOptions) -> Result<DatasetBundle> {
    let [train, val, test] = split_indices(master_seed, options.scenarios)?;
    let build = |idx: &[usize]| -> Result<Vec<Scenario>> {
        idx.iter()
            .map(|&k| generate_scenario(&scenario_config(master_seed, k, options)?))
            .collect()
    };
    Ok(DatasetBundle {
        train: build(&train)?,
        val: build(&val)?,
        test: build(&test)?,
    })
}
