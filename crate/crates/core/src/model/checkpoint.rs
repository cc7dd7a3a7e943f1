//! Binary model checkpoint.
//!
//! Layout (all integers and floats little-endian):
//!
//! | bytes | field |
//! |-------|-------|
//! | 5     | magic `DSWM1` |
//! | 4     | u32 grid rows |
//! | 4     | u32 grid cols |
//! | 4     | u32 frame width (px) |
//! | 4     | u32 frame height (px) |
//! | 4     | u32 estimator hidden width |
//! | 4     | u32 refiner depth |
//! | 4     | u32 refiner filters |
//! | 8     | u64 parameter count |
//! | 8·n   | f64 parameters in declaration order |

use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridGeometry;
use crate::io::{read_file, write_atomic, Cursor};
use crate::model::{ModelConfig, ModelParams};

pub const MAGIC: &[u8; 5] = b"DSWM1";
pub const HEADER_LEN: usize = 41;

pub fn encode(params: &ModelParams) -> Vec<u8> {
    let cfg = params.config();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(MAGIC);
    for v in [
        cfg.geometry.rows as u32,
        cfg.geometry.cols as u32,
        cfg.geometry.frame_width,
        cfg.geometry.frame_height,
        cfg.hidden as u32,
        cfg.refiner_depth as u32,
        cfg.refiner_filters as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8], path: &Path) -> Result<ModelParams> {
    let mut cur = Cursor::new(bytes, path);
    cur.expect_magic(MAGIC)?;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let frame_width = cur.u32()?;
    let frame_height = cur.u32()?;
    let hidden = cur.u32()? as usize;
    let refiner_depth = cur.u32()? as usize;
    let refiner_filters = cur.u32()? as usize;
    let geometry = GridGeometry {
        rows,
        cols,
        frame_width,
        frame_height,
    };
    let config = ModelConfig {
        geometry,
        hidden,
        refiner_depth,
        refiner_filters,
    };
    config
        .validate()
        .map_err(|e| Error::format(path, 5, format!("invalid model header: {e}")))?;
    let count_at = cur.offset();
    let count = cur.u64()?;
    let expected = crate::model::Architecture::new(config)
        .map_err(|e| Error::format(path, 5, e.to_string()))?
        .param_count;
    if count != expected as u64 {
        return Err(Error::format(
            path,
            count_at,
            format!("header declares {count} parameters, architecture needs {expected}"),
        ));
    }
    let mut values = Vec::with_capacity(expected);
    for _ in 0..expected {
        let at = cur.offset();
        let v = cur.f64()?;
        if !v.is_finite() {
            return Err(Error::format(path, at, "non-finite parameter"));
        }
        values.push(v);
    }
    cur.expect_end()?;
    ModelParams::from_values(config, values)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    write_atomic(path, &encode(params))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = read_file(path)?;
    decode(&bytes, path)
}
