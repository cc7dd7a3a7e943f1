//! `GSEQ1` grid-sequence files.
//!
//! Header: the five ASCII bytes `GSEQ1`, then little-endian u32 frame count
//! `T`, rows, cols, frame width and frame height (25 bytes in total). Body:
//! `T·rows·cols` little-endian f32 values, frame-major then row-major.

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, ProbGrid};
use crate::io::{read_file, write_atomic, Cursor};

pub const MAGIC: &[u8; 5] = b"GSEQ1";
pub const HEADER_LEN: usize = 25;

/// Encodes a sequence; every grid must share `geometry`.
pub fn encode(geometry: &GridGeometry, frames: &[ProbGrid]) -> Result<Vec<u8>> {
    geometry.validate()?;
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * frames.len() * geometry.cells());
    out.extend_from_slice(MAGIC);
    for v in [
        frames.len() as u32,
        geometry.rows as u32,
        geometry.cols as u32,
        geometry.frame_width,
        geometry.frame_height,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for (t, grid) in frames.iter().enumerate() {
        if grid.geometry() != geometry {
            return Err(Error::usage(format!("frame {t} geometry differs from the sequence header")));
        }
        for &v in grid.values() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<(GridGeometry, Vec<ProbGrid>)> {
    let mut cur = Cursor::new(bytes, path);
    cur.expect_magic(MAGIC)?;
    let frames = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let frame_width = cur.u32()?;
    let frame_height = cur.u32()?;
    let geometry = GridGeometry {
        rows,
        cols,
        frame_width,
        frame_height,
    };
    geometry
        .validate()
        .map_err(|e| Error::format(path, 9, format!("invalid geometry in header: {e}")))?;
    let cells = geometry.cells();
    let body = frames
        .checked_mul(cells)
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(path, 5, "frame count overflows"))?;
    if cur.remaining() != body {
        return Err(Error::format(
            path,
            HEADER_LEN as u64,
            format!(
                "body holds {} bytes, header implies {body} ({frames} frames of {rows}x{cols})",
                cur.remaining()
            ),
        ));
    }
    let mut out = Vec::with_capacity(frames);
    for t in 0..frames {
        let mut values = Vec::with_capacity(cells);
        for k in 0..cells {
            let at = cur.offset();
            let v = cur.f32()?;
            if !(0.0..=1.0).contains(&v) {
                let (i, j) = geometry.row_col(k);
                return Err(Error::format(
                    path,
                    at,
                    format!("frame {t} cell ({i}, {j}) holds {v}, outside [0, 1]"),
                ));
            }
            values.push(f64::from(v));
        }
        out.push(ProbGrid::from_raw(geometry, values));
    }
    cur.expect_end()?;
    Ok((geometry, out))
}

pub fn write(path: &Path, geometry: &GridGeometry, frames: &[ProbGrid]) -> Result<()> {
    write_atomic(path, &encode(geometry, frames)?)
}

pub fn read(path: &Path) -> Result<(GridGeometry, Vec<ProbGrid>)> {
    decode(&read_file(path)?, path)
}
