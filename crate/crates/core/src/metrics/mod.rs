//! Threshold detection and the evaluation metrics: localization error (LE)
//! under optimal assignment, frame recall (FR) and false positives (FP).

pub mod hungarian;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

pub use hungarian::{hungarian, Assignment};

use crate::error::{Error, Result};
use crate::grid::{cell_center_unchecked, GridGeometry, GroundTruthFrame, ProbGrid};
use crate::io::write_atomic;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub cell: (usize, usize),
    pub activation: f64,
    pub center: (f64, f64),
}

impl Detection {
    fn at(grid: &ProbGrid, k: usize) -> Self {
        let g = grid.geometry();
        let (i, j) = g.row_col(k);
        Self {
            cell: (i, j),
            activation: grid.values()[k],
            center: cell_center_unchecked(g, i, j),
        }
    }
}

/// Cell indices by activation, highest first; ties keep row-major order.
fn ranked(grid: &ProbGrid) -> Vec<usize> {
    let v = grid.values();
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx
}

/// Every cell whose activation strictly exceeds `threshold`.
pub fn detect(grid: &ProbGrid, threshold: f64) -> Vec<Detection> {
    ranked(grid)
        .into_iter()
        .take_while(|&k| grid.values()[k] > threshold)
        .map(|k| Detection::at(grid, k))
        .collect()
}

/// Like [`detect`], keeping only cells that are maxima of their 3x3
/// neighbourhood (equal neighbours: the earlier cell wins).
pub fn detect_nms(grid: &ProbGrid, threshold: f64) -> Vec<Detection> {
    let g = grid.geometry();
    let v = grid.values();
    detect(grid, threshold)
        .into_iter()
        .filter(|d| {
            let (i, j) = d.cell;
            let k = g.index(i, j);
            (i.saturating_sub(1)..(i + 2).min(g.rows)).all(|r| {
                (j.saturating_sub(1)..(j + 2).min(g.cols)).all(|c| {
                    let n = g.index(r, c);
                    n == k || v[n] < v[k] || (v[n] == v[k] && n > k)
                })
            })
        })
        .collect()
}

/// Extends `dets` with the highest remaining cells until it holds at least
/// `n_true` entries.
pub fn pad_predictions(dets: &[Detection], n_true: usize, grid: &ProbGrid) -> Result<Vec<Detection>> {
    let cells = grid.geometry().cells();
    if n_true > cells {
        return Err(Error::usage(format!("cannot pad to {n_true} detections on a {cells}-cell grid")));
    }
    let mut out = dets.to_vec();
    if out.len() >= n_true {
        return Ok(out);
    }
    let g = grid.geometry();
    let mut taken = vec![false; cells];
    for d in dets {
        taken[g.index(d.cell.0, d.cell.1)] = true;
    }
    for k in ranked(grid) {
        if out.len() == n_true {
            break;
        }
        if !taken[k] {
            out.push(Detection::at(grid, k));
        }
    }
    Ok(out)
}

/// Mean distance in pixels between each true speaker and its assigned
/// detection center. `None` for frames without speakers.
pub fn localization_error(dets: &[Detection], truth: &GroundTruthFrame, grid: &ProbGrid) -> Result<Option<f64>> {
    let n = truth.speaker_count();
    if n == 0 {
        return Ok(None);
    }
    let padded = pad_predictions(dets, n, grid)?;
    let m = padded.len();
    let mut cost = Vec::with_capacity(n * m);
    for &(x, y) in truth.positions() {
        for d in &padded {
            cost.push((x - d.center.0).hypot(y - d.center.1));
        }
    }
    Ok(Some(hungarian(&cost, n, m)?.total / n as f64))
}

/// 1 when the detection count equals the true speaker count.
pub fn frame_recall_indicator(dets: &[Detection], truth: &GroundTruthFrame) -> u8 {
    u8::from(dets.len() == truth.speaker_count())
}

pub fn false_positives(dets: &[Detection], truth: &GroundTruthFrame) -> usize {
    dets.len().saturating_sub(truth.speaker_count())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameMetrics {
    pub localization_error: Option<f64>,
    pub recall_indicator: u8,
    pub false_positives: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct DetectOptions {
    pub nms: bool,
}

pub fn frame_metrics(
    grid: &ProbGrid,
    truth: &GroundTruthFrame,
    threshold: f64,
    options: DetectOptions,
) -> Result<FrameMetrics> {
    let dets = if options.nms {
        detect_nms(grid, threshold)
    } else {
        detect(grid, threshold)
    };
    Ok(FrameMetrics {
        localization_error: localization_error(&dets, truth, grid)?,
        recall_indicator: frame_recall_indicator(&dets, truth),
        false_positives: false_positives(&dets, truth),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateMetrics {
    pub threshold: f64,
    /// Mean LE over frames with at least one speaker; NaN when there are none.
    pub le_px: f64,
    pub fr: f64,
    pub fp: f64,
    pub frames: usize,
    pub speaker_frames: usize,
}

fn check_inputs(grids: &[ProbGrid], truths: &[GroundTruthFrame]) -> Result<()> {
    if grids.is_empty() {
        return Err(Error::usage("cannot aggregate metrics over zero frames"));
    }
    if grids.len() != truths.len() {
        return Err(Error::usage(format!("{} grids but {} truth frames", grids.len(), truths.len())));
    }
    Ok(())
}

fn check_threshold(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::usage(format!("threshold must lie in [0, 1], got {t}")));
    }
    Ok(())
}

fn fold(threshold: f64, per_frame: &[FrameMetrics]) -> AggregateMetrics {
    let mut le_sum = 0.0;
    let mut le_n = 0usize;
    let mut fr = 0usize;
    let mut fp = 0usize;
    for m in per_frame {
        if let Some(le) = m.localization_error {
            le_sum += le;
            le_n += 1;
        }
        fr += usize::from(m.recall_indicator);
        fp += m.false_positives;
    }
    let n = per_frame.len() as f64;
    AggregateMetrics {
        threshold,
        le_px: if le_n == 0 { f64::NAN } else { le_sum / le_n as f64 },
        fr: fr as f64 / n,
        fp: fp as f64 / n,
        frames: per_frame.len(),
        speaker_frames: le_n,
    }
}

pub fn aggregate_with(
    grids: &[ProbGrid],
    truths: &[GroundTruthFrame],
    threshold: f64,
    options: DetectOptions,
) -> Result<AggregateMetrics> {
    check_inputs(grids, truths)?;
    check_threshold(threshold)?;
    let per_frame = grids
        .par_iter()
        .zip(truths)
        .map(|(g, t)| frame_metrics(g, t, threshold, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(fold(threshold, &per_frame))
}

/// Metrics averaged over a sequence of frames at one threshold.
pub fn aggregate(grids: &[ProbGrid], truths: &[GroundTruthFrame], threshold: f64) -> Result<AggregateMetrics> {
    aggregate_with(grids, truths, threshold, DetectOptions::default())
}

/// One [`aggregate`] row per threshold; thresholds must ascend.
pub fn threshold_sweep(
    grids: &[ProbGrid],
    truths: &[GroundTruthFrame],
    thresholds: &[f64],
    options: DetectOptions,
) -> Result<Vec<AggregateMetrics>> {
    check_inputs(grids, truths)?;
    for &t in thresholds {
        check_threshold(t)?;
    }
    if thresholds.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::usage("thresholds must be sorted ascending"));
    }
    let per_frame: Vec<Vec<FrameMetrics>> = grids
        .par_iter()
        .zip(truths)
        .map(|(g, t)| {
            thresholds
                .iter()
                .map(|&th| frame_metrics(g, t, th, options))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(thresholds
        .iter()
        .enumerate()
        .map(|(k, &th)| {
            let column: Vec<FrameMetrics> = per_frame.iter().map(|f| f[k]).collect();
            fold(th, &column)
        })
        .collect())
}

/// `0.50, 0.55, ..., 0.95`.
pub fn default_sweep() -> Vec<f64> {
    (0..10).map(|k| f64::from(50 + 5 * k) / 100.0).collect()
}

pub const METRICS_HEADER: &str = "threshold,le_px,fr,fp";

pub fn metrics_csv(rows: &[AggregateMetrics]) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for r in rows {
        writeln!(out, "{:.4},{:.6},{:.6},{:.6}", r.threshold, r.le_px, r.fr, r.fp).unwrap();
    }
    out
}

pub fn write_metrics_csv(path: &Path, rows: &[AggregateMetrics]) -> Result<()> {
    write_atomic(path, metrics_csv(rows).as_bytes())
}

/// Upper bound on any LE value for `geom`.
pub fn le_bound(geom: &GridGeometry) -> f64 {
    geom.diagonal()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::cell_center;

    fn g() -> GridGeometry {
        GridGeometry::default()
    }

    fn grid_with(cells: &[((usize, usize), f64)], rest: f64) -> ProbGrid {
        let mut v = vec![rest; g().cells()];
        for &((i, j), p) in cells {
            v[g().index(i, j)] = p;
        }
        ProbGrid::new(g(), v).unwrap()
    }

    fn truth(cells: &[(usize, usize)]) -> GroundTruthFrame {
        GroundTruthFrame::new(&g(), cells.iter().map(|&(i, j)| cell_center(&g(), i, j).unwrap()).collect()).unwrap()
    }

    #[test]
    fn detect_examples() {
        assert!(detect(&ProbGrid::filled(g(), 0.0).unwrap(), 0.5).is_empty());
        let p = grid_with(&[((3, 4), 0.9)], 0.1);
        let d = detect(&p, 0.75);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].cell, (3, 4));
        assert_eq!(d[0].center, cell_center(&g(), 3, 4).unwrap());
        assert!(detect(&grid_with(&[((3, 4), 0.75)], 0.1), 0.75).is_empty());
        let two = detect(&grid_with(&[((0, 0), 0.8), ((5, 5), 0.95)], 0.0), 0.5);
        assert_eq!(two.iter().map(|d| d.cell).collect::<Vec<_>>(), vec![(5, 5), (0, 0)]);
    }

    #[test]
    fn padding_examples() {
        let p = grid_with(&[((1, 1), 0.9), ((2, 2), 0.8), ((7, 7), 0.4)], 0.1);
        let d = detect(&p, 0.75);
        assert_eq!(pad_predictions(&d, 2, &p).unwrap(), d);
        let one = detect(&grid_with(&[((1, 1), 0.9), ((7, 7), 0.4)], 0.1), 0.75);
        let q = grid_with(&[((1, 1), 0.9), ((7, 7), 0.4)], 0.1);
        let padded = pad_predictions(&one, 2, &q).unwrap();
        assert_eq!(padded[1].cell, (7, 7));
        assert_eq!(padded[1].activation, 0.4);
        let none = pad_predictions(&[], 1, &q).unwrap();
        assert_eq!(none[0].cell, q.argmax());
        assert!(pad_predictions(&[], 481, &q).is_err());
    }

    #[test]
    fn localization_examples() {
        let p = grid_with(&[((0, 0), 0.9)], 0.0);
        let d = detect(&p, 0.5);
        assert_eq!(localization_error(&d, &truth(&[(0, 0)]), &p).unwrap(), Some(0.0));
        let p = grid_with(&[((0, 1), 0.9)], 0.0);
        let d = detect(&p, 0.5);
        assert_eq!(localization_error(&d, &truth(&[(0, 0)]), &p).unwrap(), Some(30.0));
        assert_eq!(localization_error(&d, &GroundTruthFrame::empty(), &p).unwrap(), None);
    }

    #[test]
    fn count_metrics() {
        let t2 = truth(&[(0, 0), (5, 5)]);
        let three = detect(&grid_with(&[((0, 0), 0.9), ((5, 5), 0.9), ((9, 9), 0.9)], 0.0), 0.5);
        assert_eq!(frame_recall_indicator(&three[..2], &t2), 1);
        assert_eq!(frame_recall_indicator(&three, &t2), 0);
        assert_eq!(frame_recall_indicator(&[], &GroundTruthFrame::empty()), 1);
        assert_eq!(false_positives(&three, &t2), 1);
        assert_eq!(false_positives(&three[..1], &t2), 0);
        assert_eq!(false_positives(&[], &GroundTruthFrame::empty()), 0);
    }

    #[test]
    fn aggregate_examples() {
        let p0 = grid_with(&[((0, 0), 0.9)], 0.0);
        let p1 = grid_with(&[((0, 1), 0.9)], 0.0);
        let t = truth(&[(0, 0)]);
        let a = aggregate(&[p0.clone(), p1], &[t.clone(), t.clone()], 0.5).unwrap();
        assert_eq!(a.le_px, 15.0);
        assert_eq!(a.fr, 1.0);
        assert_eq!(a.fp, 0.0);
        let blank = ProbGrid::filled(g(), 0.0).unwrap();
        let b = aggregate(&[blank], &[t.clone()], 0.5).unwrap();
        assert_eq!((b.fr, b.fp), (0.0, 0.0));
        assert!(aggregate(&[], &[], 0.5).is_err());
        let rows = threshold_sweep(&[p0.clone()], &[t.clone()], &[0.5], DetectOptions::default()).unwrap();
        assert_eq!(rows[0], aggregate(&[p0], &[t], 0.5).unwrap());
    }

    #[test]
    fn sweep_is_monotone_and_well_formed() {
        let p = grid_with(&[((0, 0), 0.9), ((3, 3), 0.6), ((4, 4), 0.8)], 0.0);
        let t = truth(&[(0, 0)]);
        let th = default_sweep();
        assert_eq!(th.len(), 10);
        assert_eq!(th[0], 0.5);
        assert_eq!(th[9], 0.95);
        let rows = threshold_sweep(&[p.clone()], &[t.clone()], &th, DetectOptions::default()).unwrap();
        assert!(rows.windows(2).all(|w| w[1].fp <= w[0].fp));
        assert_eq!(metrics_csv(&rows).lines().count(), 11);
        assert!(threshold_sweep(&[p], &[t], &[0.7, 0.6], DetectOptions::default()).is_err());
    }

    #[test]
    fn nms_keeps_local_maxima() {
        let p = grid_with(&[((2, 2), 0.9), ((2, 3), 0.8), ((6, 6), 0.85)], 0.0);
        let cells: Vec<_> = detect_nms(&p, 0.5).iter().map(|d| d.cell).collect();
        assert_eq!(cells, vec![(2, 2), (6, 6)]);
    }
}
