//! Log-domain fusion of the audio and video presence grids.
//!
//! Three strategies share one kernel, `y = w_a * ln z_a + w_v * ln z_v`:
//! flat fusion fixes both weights at one, the spatially invariant strategy
//! uses a per-frame scalar `λ` with complementary weights `(λ, 1 - λ)`, and
//! spatial fusion uses two independent per-cell weight grids.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    check_floor, clamp_probability, ensure_same_geometry, LogLikGrid, ProbGrid, WeightGrid,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionStrategy {
    Flat,
    Invariant,
    Spatial,
}

impl FusionStrategy {
    pub const ALL: [FusionStrategy; 3] = [Self::Flat, Self::Invariant, Self::Spatial];

    pub fn name(self) -> &'static str {
        match self {
            Self::Flat => "flat",
            Self::Invariant => "invariant",
            Self::Spatial => "spatial",
        }
    }
}

impl fmt::Display for FusionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Self::Flat),
            "invariant" => Ok(Self::Invariant),
            "spatial" => Ok(Self::Spatial),
            other => Err(Error::usage(format!(
                "unknown fusion strategy {other:?} (expected flat, invariant or spatial)"
            ))),
        }
    }
}

/// Stream weights for a single frame.
#[derive(Debug, Clone, PartialEq)]
pub enum StreamWeights {
    Flat,
    Invariant(f64),
    Spatial { audio: WeightGrid, video: WeightGrid },
}

/// `ln clamp(z)` for every cell.
pub fn log_clamped(z: &[f64], floor: f64) -> Vec<f64> {
    z.iter().map(|&v| clamp_probability(v, floor).ln()).collect()
}

/// `out = w_a * log_a + w_v * log_v`, cellwise.
#[inline]
pub(crate) fn weighted_sum_into(log_a: &[f64], log_v: &[f64], w_a: &[f64], w_v: &[f64], out: &mut [f64]) {
    for ((((o, la), lv), wa), wv) in out.iter_mut().zip(log_a).zip(log_v).zip(w_a).zip(w_v) {
        *o = wa * la + wv * lv;
    }
}

/// `out = λ * log_a + (1 - λ) * log_v`, cellwise.
#[inline]
pub(crate) fn invariant_sum_into(log_a: &[f64], log_v: &[f64], lambda: f64, out: &mut [f64]) {
    let complement = 1.0 - lambda;
    for ((o, la), lv) in out.iter_mut().zip(log_a).zip(log_v) {
        *o = lambda * la + complement * lv;
    }
}

/// Unweighted sum of log-probabilities.
pub fn flat_fuse(z_a: &ProbGrid, z_v: &ProbGrid, floor: f64) -> Result<LogLikGrid> {
    check_floor(floor)?;
    ensure_same_geometry(z_a.geometry(), z_v.geometry(), "flat fusion")?;
    let la = log_clamped(z_a.values(), floor);
    let lv = log_clamped(z_v.values(), floor);
    let y = la.iter().zip(&lv).map(|(a, v)| a + v).collect();
    Ok(LogLikGrid::from_raw(*z_a.geometry(), y))
}

/// Per-cell weighted sum of log-probabilities with independent audio and
/// video weight grids.
pub fn spatial_fuse(
    z_a: &ProbGrid,
    z_v: &ProbGrid,
    w_a: &WeightGrid,
    w_v: &WeightGrid,
    floor: f64,
) -> Result<LogLikGrid> {
    check_floor(floor)?;
    let geom = z_a.geometry();
    ensure_same_geometry(geom, z_v.geometry(), "spatial fusion (video grid)")?;
    ensure_same_geometry(geom, w_a.geometry(), "spatial fusion (audio weights)")?;
    ensure_same_geometry(geom, w_v.geometry(), "spatial fusion (video weights)")?;
    let la = log_clamped(z_a.values(), floor);
    let lv = log_clamped(z_v.values(), floor);
    let mut y = vec![0.0; geom.cells()];
    weighted_sum_into(&la, &lv, w_a.values(), w_v.values(), &mut y);
    Ok(LogLikGrid::from_raw(*geom, y))
}

/// Scalar-weighted fusion with complementary weights `(λ, 1 - λ)`.
pub fn invariant_fuse(z_a: &ProbGrid, z_v: &ProbGrid, lambda: f64, floor: f64) -> Result<LogLikGrid> {
    check_floor(floor)?;
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::usage(format!("stream weight must lie in [0, 1], got {lambda}")));
    }
    ensure_same_geometry(z_a.geometry(), z_v.geometry(), "invariant fusion")?;
    let la = log_clamped(z_a.values(), floor);
    let lv = log_clamped(z_v.values(), floor);
    let mut y = vec![0.0; la.len()];
    invariant_sum_into(&la, &lv, lambda, &mut y);
    Ok(LogLikGrid::from_raw(*z_a.geometry(), y))
}

/// Dispatches on the weight variant.
pub fn fuse(z_a: &ProbGrid, z_v: &ProbGrid, weights: &StreamWeights, floor: f64) -> Result<LogLikGrid> {
    match weights {
        StreamWeights::Flat => flat_fuse(z_a, z_v, floor),
        StreamWeights::Invariant(lambda) => invariant_fuse(z_a, z_v, *lambda, floor),
        StreamWeights::Spatial { audio, video } => spatial_fuse(z_a, z_v, audio, video, floor),
    }
}

/// `p = exp(y)`; the fused presence probability used for detection and
/// refinement.
pub fn to_probability(y: &LogLikGrid) -> ProbGrid {
    ProbGrid::from_raw(*y.geometry(), y.values().iter().map(|v| v.exp()).collect())
}
