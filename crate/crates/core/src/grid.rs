//! Localization grid geometry and the per-cell value types.
//!
//! Row index `i` spans the image height and column index `j` spans the image
//! width. Cells are half-open: a pixel exactly on a boundary belongs to the
//! cell with the higher index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default lower bound applied to probabilities before taking logs.
pub const DEFAULT_PROB_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridGeometry {
    pub rows: usize,
    pub cols: usize,
    pub frame_width: u32,
    pub frame_height: u32,
}

impl Default for GridGeometry {
    fn default() -> Self {
        Self {
            rows: 20,
            cols: 24,
            frame_width: 720,
            frame_height: 450,
        }
    }
}

impl GridGeometry {
    pub fn new(rows: usize, cols: usize, frame_width: u32, frame_height: u32) -> Result<Self> {
        let g = Self {
            rows,
            cols,
            frame_width,
            frame_height,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::usage(format!(
                "grid must have at least one row and column, got {}x{}",
                self.rows, self.cols
            )));
        }
        if self.frame_width == 0 || self.frame_height == 0 {
            return Err(Error::usage(format!(
                "frame size must be positive, got {}x{}",
                self.frame_width, self.frame_height
            )));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn cell_width(&self) -> f64 {
        f64::from(self.frame_width) / self.cols as f64
    }

    pub fn cell_height(&self) -> f64 {
        f64::from(self.frame_height) / self.rows as f64
    }

    /// Length of the frame diagonal in pixels; an upper bound on any
    /// in-frame distance.
    pub fn diagonal(&self) -> f64 {
        f64::from(self.frame_width).hypot(f64::from(self.frame_height))
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.cols + j
    }

    #[inline]
    pub fn row_col(&self, flat: usize) -> (usize, usize) {
        (flat / self.cols, flat % self.cols)
    }

    pub fn contains_pixel(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x < f64::from(self.frame_width) && y < f64::from(self.frame_height)
    }

    fn ensure_same(&self, other: &GridGeometry, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::usage(format!(
                "geometry mismatch for {what}: {}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(())
    }
}

/// Pixel coordinates of the center of cell `(i, j)`.
pub fn cell_center(geom: &GridGeometry, i: usize, j: usize) -> Result<(f64, f64)> {
    if i >= geom.rows || j >= geom.cols {
        return Err(Error::usage(format!(
            "cell ({i}, {j}) outside {}x{} grid",
            geom.rows, geom.cols
        )));
    }
    Ok(cell_center_unchecked(geom, i, j))
}

#[inline]
pub(crate) fn cell_center_unchecked(geom: &GridGeometry, i: usize, j: usize) -> (f64, f64) {
    let x = (j as f64 + 0.5) * f64::from(geom.frame_width) / geom.cols as f64;
    let y = (i as f64 + 0.5) * f64::from(geom.frame_height) / geom.rows as f64;
    (x, y)
}

/// Cell `(i, j)` containing pixel `(x, y)`.
pub fn pixel_to_cell(geom: &GridGeometry, x: f64, y: f64) -> Result<(usize, usize)> {
    if !geom.contains_pixel(x, y) {
        return Err(Error::usage(format!(
            "pixel ({x}, {y}) outside {}x{} frame",
            geom.frame_width, geom.frame_height
        )));
    }
    // Multiplying before dividing keeps exact boundaries exact (22.5 * 20 / 450 == 1).
    let i = (y * geom.rows as f64 / f64::from(geom.frame_height)).floor() as usize;
    let j = (x * geom.cols as f64 / f64::from(geom.frame_width)).floor() as usize;
    Ok((i.min(geom.rows - 1), j.min(geom.cols - 1)))
}

/// `min(max(v, floor), 1)`.
#[inline]
pub fn clamp_probability(v: f64, floor: f64) -> f64 {
    v.max(floor).min(1.0)
}

pub(crate) fn check_floor(floor: f64) -> Result<()> {
    if !(floor > 0.0 && floor < 1.0) {
        return Err(Error::usage(format!("probability floor must lie in (0, 1), got {floor}")));
    }
    Ok(())
}

macro_rules! grid_type {
    ($(#[$meta:meta])* $name:ident, $check:expr, $desc:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name {
            geometry: GridGeometry,
            values: Vec<f64>,
        }

        impl $name {
            /// Builds a grid from row-major values, rejecting out-of-range entries.
            pub fn new(geometry: GridGeometry, values: Vec<f64>) -> Result<Self> {
                geometry.validate()?;
                if values.len() != geometry.cells() {
                    return Err(Error::usage(format!(
                        "expected {} values for a {}x{} grid, got {}",
                        geometry.cells(),
                        geometry.rows,
                        geometry.cols,
                        values.len()
                    )));
                }
                let check: fn(f64) -> bool = $check;
                if let Some((k, v)) = values.iter().enumerate().find(|(_, v)| !check(**v)) {
                    let (i, j) = geometry.row_col(k);
                    return Err(Error::usage(format!(
                        concat!("cell ({}, {}) holds {}, ", $desc),
                        i, j, v
                    )));
                }
                Ok(Self { geometry, values })
            }

            pub fn filled(geometry: GridGeometry, value: f64) -> Result<Self> {
                Self::new(geometry, vec![value; geometry.cells()])
            }

            pub fn from_fn(
                geometry: GridGeometry,
                mut f: impl FnMut(usize, usize) -> f64,
            ) -> Result<Self> {
                let mut values = Vec::with_capacity(geometry.cells());
                for i in 0..geometry.rows {
                    for j in 0..geometry.cols {
                        values.push(f(i, j));
                    }
                }
                Self::new(geometry, values)
            }

            /// Caller guarantees the range invariant.
            pub(crate) fn from_raw(geometry: GridGeometry, values: Vec<f64>) -> Self {
                debug_assert_eq!(values.len(), geometry.cells());
                debug_assert!(values.iter().all(|v| ($check)(*v)));
                Self { geometry, values }
            }

            pub fn geometry(&self) -> &GridGeometry {
                &self.geometry
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn into_values(self) -> Vec<f64> {
                self.values
            }

            pub fn get(&self, i: usize, j: usize) -> f64 {
                self.values[self.geometry.index(i, j)]
            }
        }
    };
}

grid_type!(
    /// Per-cell speaker-presence probabilities in `[0, 1]`.
    ProbGrid,
    |v| (0.0..=1.0).contains(&v),
    "probabilities must lie in [0, 1]"
);

grid_type!(
    /// Per-cell stream weights in `[0, 1]`.
    WeightGrid,
    |v| (0.0..=1.0).contains(&v),
    "stream weights must lie in [0, 1]"
);

grid_type!(
    /// Fused per-cell log-likelihoods; never positive.
    LogLikGrid,
    |v| v <= 0.0,
    "log-likelihoods must be <= 0"
);

impl ProbGrid {
    /// Index of the largest activation (first one on ties).
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = k;
            }
        }
        self.geometry.row_col(best)
    }
}

pub(crate) fn ensure_same_geometry(a: &GridGeometry, b: &GridGeometry, what: &str) -> Result<()> {
    a.ensure_same(b, what)
}

/// Binary ground-truth occupancy: `true` where at least one speaker sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OccupancyGrid {
    geometry: GridGeometry,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.cells[self.geometry.index(i, j)]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|c| **c).count()
    }

    /// Occupied cells in row-major order.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, c)| **c)
            .map(|(k, _)| self.geometry.row_col(k))
    }

    /// 0/1 values as a probability grid (used for oracle detectors and BCE targets).
    pub fn to_prob_grid(&self) -> ProbGrid {
        ProbGrid::from_raw(
            self.geometry,
            self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect(),
        )
    }
}

/// Marks every cell that contains at least one of `positions`.
pub fn occupancy_from_positions(geom: &GridGeometry, positions: &[(f64, f64)]) -> Result<OccupancyGrid> {
    geom.validate()?;
    let mut cells = vec![false; geom.cells()];
    for &(x, y) in positions {
        let (i, j) = pixel_to_cell(geom, x, y)?;
        cells[geom.index(i, j)] = true;
    }
    Ok(OccupancyGrid {
        geometry: *geom,
        cells,
    })
}

/// True speaker positions (pixels) for one frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruthFrame {
    positions: Vec<(f64, f64)>,
}

impl GroundTruthFrame {
    pub fn new(geom: &GridGeometry, positions: Vec<(f64, f64)>) -> Result<Self> {
        if let Some(&(x, y)) = positions.iter().find(|&&(x, y)| !geom.contains_pixel(x, y)) {
            return Err(Error::usage(format!(
                "speaker position ({x}, {y}) outside {}x{} frame",
                geom.frame_width, geom.frame_height
            )));
        }
        Ok(Self { positions })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn speaker_count(&self) -> usize {
        self.positions.len()
    }

    pub fn occupancy(&self, geom: &GridGeometry) -> Result<OccupancyGrid> {
        occupancy_from_positions(geom, &self.positions)
    }
}
