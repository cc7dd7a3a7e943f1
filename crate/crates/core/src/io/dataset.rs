//! On-disk dataset layout.
//!
//! ```text
//! <root>/<split>/<scenario>/audio.gseq
//! <root>/<split>/<scenario>/video.gseq
//! <root>/<split>/<scenario>/truth.jsonl
//! ```
//!
//! with `<split>` one of `train`, `val`, `test`. Scenario directories are
//! read in lexicographic order.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::{gseq, truth};
use crate::sim::suite::{DatasetBundle, Split};
use crate::sim::{Frame, Scenario};

pub const AUDIO_FILE: &str = "audio.gseq";
pub const VIDEO_FILE: &str = "video.gseq";
pub const TRUTH_FILE: &str = "truth.jsonl";

pub fn write_scenario(dir: &Path, scenario: &Scenario) -> Result<()> {
    let audio: Vec<_> = scenario.frames.iter().map(|f| f.audio.clone()).collect();
    let video: Vec<_> = scenario.frames.iter().map(|f| f.video.clone()).collect();
    let truths: Vec<_> = scenario.frames.iter().map(|f| f.truth.clone()).collect();
    gseq::write(&dir.join(AUDIO_FILE), &scenario.geometry, &audio)?;
    gseq::write(&dir.join(VIDEO_FILE), &scenario.geometry, &video)?;
    truth::write(&dir.join(TRUTH_FILE), &truths)
}

pub fn read_scenario(dir: &Path) -> Result<Scenario> {
    let audio_path = dir.join(AUDIO_FILE);
    let video_path = dir.join(VIDEO_FILE);
    let (geometry, audio) = gseq::read(&audio_path)?;
    let (vgeom, video) = gseq::read(&video_path)?;
    if vgeom != geometry {
        return Err(Error::format(&video_path, 5, "video geometry differs from audio"));
    }
    if video.len() != audio.len() {
        return Err(Error::format(
            &video_path,
            5,
            format!("{} video frames but {} audio frames", video.len(), audio.len()),
        ));
    }
    let truth_path = dir.join(TRUTH_FILE);
    let truths = truth::read(&truth_path, &geometry)?;
    if truths.len() != audio.len() {
        return Err(Error::format(
            &truth_path,
            0,
            format!("{} truth records but {} grid frames", truths.len(), audio.len()),
        ));
    }
    let frames = audio
        .into_iter()
        .zip(video)
        .zip(truths)
        .map(|((audio, video), truth)| Frame { audio, video, truth })
        .collect();
    let name = dir
        .file_name()
        .map_or_else(|| "scenario".to_string(), |n| n.to_string_lossy().into_owned());
    Ok(Scenario { name, geometry, frames })
}

pub fn write_bundle(root: &Path, bundle: &DatasetBundle) -> Result<()> {
    for split in Split::ALL {
        let dir = root.join(split.name());
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for sc in bundle.split(split) {
            write_scenario(&dir.join(&sc.name), sc)?;
        }
    }
    Ok(())
}

fn scenario_dirs(split_dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(split_dir).map_err(|e| Error::io(split_dir, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(split_dir, e))?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

/// Reads every scenario of one split; a missing or empty split is a usage error.
pub fn read_split(root: &Path, split: Split) -> Result<Vec<Scenario>> {
    let dir = root.join(split.name());
    if !dir.is_dir() {
        return Err(Error::usage(format!("dataset {} has no {} split", root.display(), split.name())));
    }
    let scenarios = scenario_dirs(&dir)?
        .iter()
        .map(|d| read_scenario(d))
        .collect::<Result<Vec<_>>>()?;
    if scenarios.is_empty() {
        return Err(Error::usage(format!("split {} is empty", dir.display())));
    }
    if let Some(sc) = scenarios.iter().find(|s| s.geometry != scenarios[0].geometry) {
        return Err(Error::usage(format!("scenario {} uses a different grid geometry", sc.name)));
    }
    Ok(scenarios)
}

pub fn read_bundle(root: &Path) -> Result<DatasetBundle> {
    Ok(DatasetBundle {
        train: read_split(root, Split::Train)?,
        val: read_split(root, Split::Val)?,
        test: read_split(root, Split::Test)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::suite::{benchmark_suite, BenchmarkOptions};

    #[test]
    fn bundle_round_trip() {
        let opts = BenchmarkOptions {
            scenarios: 4,
            frames: 8,
            ..BenchmarkOptions::default()
        };
        let bundle = benchmark_suite(2, &opts).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_bundle(dir.path(), &bundle).unwrap();
        let back = read_bundle(dir.path()).unwrap();
        for split in Split::ALL {
            let (a, b) = (bundle.split(split), back.split(split));
            assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(b) {
                assert_eq!(x.name, y.name);
                assert_eq!(x.frames.len(), y.frames.len());
                for (fx, fy) in x.frames.iter().zip(&y.frames) {
                    assert_eq!(fx.truth, fy.truth);
                    for (p, q) in fx.audio.values().iter().zip(fy.audio.values()) {
                        assert_eq!(*p as f32, *q as f32);
                    }
                }
            }
        }
    }

    #[test]
    fn missing_split_is_usage_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(read_split(dir.path(), Split::Val), Err(Error::Usage(_))));
        fs::create_dir_all(dir.path().join("val")).unwrap();
        assert!(matches!(read_split(dir.path(), Split::Val), Err(Error::Usage(_))));
    }
}
