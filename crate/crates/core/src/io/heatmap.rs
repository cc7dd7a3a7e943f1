//! Binary PGM (P5) rendering of a probability grid, one pixel per cell.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::grid::ProbGrid;
use crate::io::write_atomic;

/// `round(255·p)` with halves rounded up.
pub fn gray_level(p: f64) -> u8 {
    (255.0 * p + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_pgm(grid: &ProbGrid) -> Vec<u8> {
    let g = grid.geometry();
    let mut out = format!("P5\n{} {}\n255\n", g.cols, g.rows).into_bytes();
    out.extend(grid.values().iter().map(|&p| gray_level(p)));
    out
}

/// Comma-separated values, one grid row per line.
pub fn encode_csv(grid: &ProbGrid) -> String {
    let g = grid.geometry();
    let mut out = String::new();
    for i in 0..g.rows {
        for j in 0..g.cols {
            if j > 0 {
                out.push(',');
            }
            write!(out, "{}", grid.get(i, j)).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_pgm(path: &Path, grid: &ProbGrid) -> Result<()> {
    write_atomic(path, &encode_pgm(grid))
}

pub fn write_csv(path: &Path, grid: &ProbGrid) -> Result<()> {
    write_atomic(path, encode_csv(grid).as_bytes())
}
