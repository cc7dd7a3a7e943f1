//! The per-frame chain: estimator, fusion, `exp`, refiner, loss.

use crate::error::{Error, Result};
use crate::fusion::{invariant_sum_into, log_clamped, weighted_sum_into, FusionStrategy};
use crate::grid::{ensure_same_geometry, GridGeometry, ProbGrid};
use crate::model::gradcheck::{compare, gradients, GradCheckReport};
use crate::model::{DswGrad, Heads, ModelParams};
use crate::sim::{Frame, Scenario};
use crate::train::loss::{bce_into, bce_value};

/// One training frame with its clamped log-probabilities precomputed.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub z_a: Vec<f64>,
    pub z_v: Vec<f64>,
    pub log_a: Vec<f64>,
    pub log_v: Vec<f64>,
    pub target: Vec<bool>,
}

impl Sample {
    pub fn from_frame(frame: &Frame, geometry: &GridGeometry, floor: f64) -> Result<Self> {
        ensure_same_geometry(geometry, frame.audio.geometry(), "audio grid")?;
        ensure_same_geometry(geometry, frame.video.geometry(), "video grid")?;
        Ok(Self {
            z_a: frame.audio.values().to_vec(),
            z_v: frame.video.values().to_vec(),
            log_a: log_clamped(frame.audio.values(), floor),
            log_v: log_clamped(frame.video.values(), floor),
            target: frame.truth.occupancy(geometry)?.cells().to_vec(),
        })
    }

    /// Every frame of every scenario, in order.
    pub fn collect(scenarios: &[Scenario], floor: f64) -> Result<Vec<Self>> {
        let mut out = Vec::with_capacity(scenarios.iter().map(|s| s.frames.len()).sum());
        for sc in scenarios {
            for f in &sc.frames {
                out.push(Self::from_frame(f, &sc.geometry, floor)?);
            }
        }
        Ok(out)
    }
}

/// How a probability grid is produced from a frame's two observations.
#[derive(Debug, Clone, Copy)]
pub struct Pipeline<'a> {
    pub strategy: FusionStrategy,
    pub params: Option<&'a ModelParams>,
    /// Pass the fused grid through the refiner.
    pub refine: bool,
    pub floor: f64,
}

impl<'a> Pipeline<'a> {
    pub fn new(strategy: FusionStrategy, params: Option<&'a ModelParams>, refine: bool, floor: f64) -> Result<Self> {
        crate::grid::check_floor(floor)?;
        if params.is_none() && (refine || strategy != FusionStrategy::Flat) {
            return Err(Error::usage(format!("strategy {strategy} needs a trained model")));
        }
        Ok(Self {
            strategy,
            params,
            refine,
            floor,
        })
    }

    /// Flat fusion with no learned stage.
    pub fn flat(floor: f64) -> Self {
        Self {
            strategy: FusionStrategy::Flat,
            params: None,
            refine: false,
            floor,
        }
    }

    fn model(&self) -> &'a ModelParams {
        self.params.expect("checked at construction")
    }

    fn heads(&self) -> Option<Heads> {
        match self.strategy {
            FusionStrategy::Flat => None,
            FusionStrategy::Invariant => Some(Heads::Scalar),
            FusionStrategy::Spatial => Some(Heads::Spatial),
        }
    }

    fn fused(&self, s: &Sample, cache: Option<&crate::model::DswCache>) -> Vec<f64> {
        let mut y = vec![0.0; s.log_a.len()];
        match (self.strategy, cache) {
            (FusionStrategy::Invariant, Some(c)) => invariant_sum_into(&s.log_a, &s.log_v, c.scalar, &mut y),
            (FusionStrategy::Spatial, Some(c)) => weighted_sum_into(&s.log_a, &s.log_v, &c.audio, &c.video, &mut y),
            _ => {
                for ((o, a), v) in y.iter_mut().zip(&s.log_a).zip(&s.log_v) {
                    *o = a + v;
                }
            }
        }
        for v in y.iter_mut() {
            *v = v.exp();
        }
        y
    }

    /// Presence probabilities for one sample.
    pub fn predict_sample(&self, s: &Sample) -> Vec<f64> {
        let cache = self.heads().map(|h| self.model().dsw_forward_raw(&s.z_a, &s.z_v, h));
        let p = self.fused(s, cache.as_ref());
        if self.refine {
            let mut acts = self.model().refine_forward_raw(p).acts;
            acts.pop().expect("refiner output")
        } else {
            p
        }
    }

    pub fn predict(&self, z_a: &ProbGrid, z_v: &ProbGrid) -> Result<ProbGrid> {
        let geom = *z_a.geometry();
        ensure_same_geometry(&geom, z_v.geometry(), "video grid")?;
        if let Some(m) = self.params {
            ensure_same_geometry(m.geometry(), &geom, "model input")?;
        }
        let s = Sample {
            z_a: z_a.values().to_vec(),
            z_v: z_v.values().to_vec(),
            log_a: log_clamped(z_a.values(), self.floor),
            log_v: log_clamped(z_v.values(), self.floor),
            target: Vec::new(),
        };
        ProbGrid::new(geom, self.predict_sample(&s))
    }

    pub fn loss(&self, s: &Sample) -> f64 {
        bce_value(&self.predict_sample(s), &s.target)
    }

    /// Loss of one sample; accumulates its parameter gradient into `grads`.
    /// With `estimator` false the estimator receives no gradient.
    pub fn loss_and_grad(&self, s: &Sample, grads: &mut [f64], estimator: bool) -> Result<f64> {
        let model = self.model();
        let cache = self.heads().map(|h| model.dsw_forward_raw(&s.z_a, &s.z_v, h));
        let p = self.fused(s, cache.as_ref());
        let n = p.len();
        let mut d_out = vec![0.0; n];
        let (loss, d_p) = if self.refine {
            let rc = model.refine_forward_raw(p.clone());
            let loss = bce_into(rc.output(), &s.target, &mut d_out);
            (loss, model.refine_backward(&rc, &d_out, grads)?)
        } else {
            let loss = bce_into(&p, &s.target, &mut d_out);
            (loss, d_out)
        };
        let Some(cache) = cache.filter(|_| estimator) else {
            return Ok(loss);
        };
        // dL/dy = dL/dp * p because p = exp(y)
        let d_y: Vec<f64> = d_p.iter().zip(&p).map(|(g, p)| g * p).collect();
        match self.strategy {
            FusionStrategy::Spatial => {
                let d_a: Vec<f64> = d_y.iter().zip(&s.log_a).map(|(g, l)| g * l).collect();
                let d_v: Vec<f64> = d_y.iter().zip(&s.log_v).map(|(g, l)| g * l).collect();
                let up = DswGrad {
                    audio: Some(&d_a),
                    video: Some(&d_v),
                    scalar: 0.0,
                };
                model.dsw_backward(&cache, up, grads)?;
            }
            FusionStrategy::Invariant => {
                let d_lambda: f64 = d_y.iter().zip(s.log_a.iter().zip(&s.log_v)).map(|(g, (a, v))| g * (a - v)).sum();
                let up = DswGrad {
                    audio: None,
                    video: None,
                    scalar: d_lambda,
                };
                model.dsw_backward(&cache, up, grads)?;
            }
            FusionStrategy::Flat => {}
        }
        Ok(loss)
    }
}

/// Analytic and central-difference gradients of the mean chain loss over
/// `batch`.
pub fn chain_gradients(
    strategy: FusionStrategy,
    refine: bool,
    params: &mut ModelParams,
    batch: &[Sample],
    floor: f64,
    epsilon: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    Pipeline::new(strategy, Some(params), refine, floor)?;
    if batch.is_empty() {
        return Err(Error::usage("gradient check needs at least one sample"));
    }
    let cells = params.arch().cells();
    if batch.iter().any(|s| s.target.len() != cells || s.log_a.len() != cells) {
        return Err(Error::usage("sample does not match the model grid"));
    }
    let scale = 1.0 / batch.len() as f64;
    Ok(gradients(
        params,
        |p, g| {
            let pl = Pipeline::new(strategy, Some(p), refine, floor).expect("validated above");
            let mut sum = vec![0.0; g.len()];
            let mut loss = 0.0;
            for s in batch {
                loss += pl.loss_and_grad(s, &mut sum, true).expect("validated above");
            }
            for (o, v) in g.iter_mut().zip(&sum) {
                *o += v * scale;
            }
            loss * scale
        },
        epsilon,
    ))
}

/// Finite-difference check of the full estimator, fusion, refiner and loss
/// chain.
pub fn chain_gradient_check(
    strategy: FusionStrategy,
    refine: bool,
    params: &mut ModelParams,
    batch: &[Sample],
    floor: f64,
    epsilon: f64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let (analytic, numeric) = chain_gradients(strategy, refine, params, batch, floor, epsilon)?;
    Ok(compare(params, &analytic, &numeric, tolerance))
}
