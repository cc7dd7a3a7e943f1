//! Ground-truth files: one JSON object per line,
//! `{"frame": t, "positions": [[x, y], ...]}`, frames numbered from 0.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridGeometry, GroundTruthFrame};
use crate::io::{read_file, write_atomic};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    frame: usize,
    positions: Vec<[f64; 2]>,
}

pub fn encode(frames: &[GroundTruthFrame]) -> String {
    let mut out = String::new();
    for (t, f) in frames.iter().enumerate() {
        let rec = Record {
            frame: t,
            positions: f.positions().iter().map(|&(x, y)| [x, y]).collect(),
        };
        out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn decode(text: &str, geometry: &GridGeometry, path: &Path) -> Result<Vec<GroundTruthFrame>> {
    let mut frames = Vec::new();
    let mut offset = 0u64;
    for (line_no, line) in text.split_inclusive('\n').enumerate() {
        let here = offset;
        offset += line.len() as u64;
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            return Err(Error::format(path, here, format!("line {}: empty record", line_no + 1)));
        }
        let rec: Record = serde_json::from_str(body)
            .map_err(|e| Error::format(path, here, format!("line {}: {e}", line_no + 1)))?;
        if rec.frame != frames.len() {
            return Err(Error::format(
                path,
                here,
                format!("line {}: frame index {} breaks the sequence (expected {})", line_no + 1, rec.frame, frames.len()),
            ));
        }
        let positions = rec.positions.iter().map(|p| (p[0], p[1])).collect();
        let f = GroundTruthFrame::new(geometry, positions)
            .map_err(|e| Error::format(path, here, format!("line {}: {e}", line_no + 1)))?;
        frames.push(f);
    }
    Ok(frames)
}

pub fn write(path: &Path, frames: &[GroundTruthFrame]) -> Result<()> {
    write_atomic(path, encode(frames).as_bytes())
}

pub fn read(path: &Path, geometry: &GridGeometry) -> Result<Vec<GroundTruthFrame>> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::format(path, e.utf8_error().valid_up_to() as u64, "not UTF-8"))?;
    decode(&text, geometry, path)
}
