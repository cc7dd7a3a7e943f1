//! Mini-batch training loop with early stopping.

use std::fmt::Write as _;
use std::path::Path;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fusion::FusionStrategy;
use crate::grid::DEFAULT_PROB_FLOOR;
use crate::io::write_atomic;
use crate::model::ModelParams;
use crate::sim::Scenario;
use crate::train::adam::{adam_step, AdamConfig, AdamState};
use crate::train::pipeline::{Pipeline, Sample};

/// Frames per parallel work unit; fixed so reductions never depend on the
/// thread count.
const CHUNK: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam: AdamConfig,
    pub floor: f64,
    /// Train the refiner alone; the estimator stays at its initial values.
    pub refiner_only: bool,
    /// Leading epochs in which only the refiner is updated.
    pub warmup_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            max_epochs: 20,
            patience: 4,
            seed: 0,
            adam: AdamConfig::default(),
            floor: DEFAULT_PROB_FLOOR,
            refiner_only: false,
            warmup_epochs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::usage("batch size must be at least 1"));
        }
        crate::grid::check_floor(self.floor)?;
        self.adam.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    /// 1-based epoch number.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainHistory {
    /// Validation loss of the initial parameters.
    pub initial_val_loss: f64,
    pub epochs: Vec<EpochRecord>,
    /// Index into `epochs` of the lowest validation loss.
    pub best: Option<usize>,
    pub stopped_early: bool,
}

impl TrainHistory {
    pub fn best_val_loss(&self) -> Option<f64> {
        self.best.map(|k| self.epochs[k].val_loss)
    }

    pub fn stop_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss\n");
        for e in &self.epochs {
            writeln!(out, "{},{:.9},{:.9}", e.epoch, e.train_loss, e.val_loss).unwrap();
        }
        out
    }
}

pub fn write_history_csv(path: &Path, history: &TrainHistory) -> Result<()> {
    write_atomic(path, history.to_csv().as_bytes())
}

/// Mean loss over `samples`, summed chunk by chunk in order.
pub(crate) fn mean_loss(pipeline: &Pipeline<'_>, samples: &[Sample]) -> f64 {
    let partial: Vec<f64> = samples
        .par_chunks(CHUNK)
        .map(|c| c.iter().map(|s| pipeline.loss(s)).sum::<f64>())
        .collect();
    partial.iter().sum::<f64>() / samples.len() as f64
}

/// Summed loss and gradient of one batch.
fn batch_grad(pipeline: &Pipeline<'_>, batch: &[&Sample], n_params: usize, estimator: bool) -> Result<(f64, Vec<f64>)> {
    let partial: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut g = vec![0.0; n_params];
            let mut loss = 0.0;
            for s in chunk {
                loss += pipeline.loss_and_grad(s, &mut g, estimator)?;
            }
            Ok((loss, g))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = vec![0.0; n_params];
    for r in partial {
        let (l, g) = r?;
        total += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total, grad))
}

/// Trains `params` for `strategy` and returns the parameters of the epoch
/// with the lowest validation loss.
///
/// Flat fusion has no stream weights; it trains only with
/// `config.refiner_only`.
pub fn fit(
    train: &[Scenario],
    val: &[Scenario],
    params: ModelParams,
    strategy: FusionStrategy,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    config.validate()?;
    if strategy == FusionStrategy::Flat && !config.refiner_only {
        return Err(Error::usage(
            "flat fusion has no trainable stream weights; request refiner-only training explicitly",
        ));
    }
    let train_s = Sample::collect(train, config.floor)?;
    let val_s = Sample::collect(val, config.floor)?;
    if train_s.is_empty() || val_s.is_empty() {
        return Err(Error::usage("training and validation sets must both hold frames"));
    }
    if let Some(sc) = train.iter().chain(val).find(|s| s.geometry != *params.geometry()) {
        return Err(Error::usage(format!("scenario {} does not match the model grid", sc.name)));
    }
    fit_samples(&train_s, &val_s, params, strategy, config)
}

pub(crate) fn fit_samples(
    train: &[Sample],
    val: &[Sample],
    mut params: ModelParams,
    strategy: FusionStrategy,
    config: &TrainConfig,
) -> Result<(ModelParams, TrainHistory)> {
    let initial_val_loss = mean_loss(&Pipeline::new(strategy, Some(&params), true, config.floor)?, val);
    let mut history = TrainHistory {
        initial_val_loss,
        ..TrainHistory::default()
    };
    info!("{strategy}: initial validation loss {initial_val_loss:.6}");
    if config.max_epochs == 0 {
        return Ok((params, history));
    }
    let n = params.len();
    let mut adam = AdamState::new(n, config.adam);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best_values = params.values().to_vec();
    let mut wait = 0;
    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        let estimator = !config.refiner_only && epoch > config.warmup_epochs;
        let mut sum = 0.0;
        for idx in order.chunks(config.batch_size) {
            let batch: Vec<&Sample> = idx.iter().map(|&k| &train[k]).collect();
            let pipeline = Pipeline::new(strategy, Some(&params), true, config.floor)?;
            let (loss, mut grad) = batch_grad(&pipeline, &batch, n, estimator)?;
            sum += loss;
            let scale = 1.0 / batch.len() as f64;
            for g in grad.iter_mut() {
                *g *= scale;
            }
            params.grads_mut().copy_from_slice(&grad);
            let (values, grads) = params.values_and_grads_mut();
            adam_step(values, grads, &mut adam)?;
        }
        let train_loss = sum / train.len() as f64;
        let val_loss = mean_loss(&Pipeline::new(strategy, Some(&params), true, config.floor)?, val);
        debug!("{strategy}: epoch {epoch} train {train_loss:.6} val {val_loss:.6}");
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        let improved = history.best_val_loss().is_none_or(|b| val_loss < b);
        if improved {
            history.best = Some(history.epochs.len() - 1);
            best_values.copy_from_slice(params.values());
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience.max(1) {
                history.stopped_early = true;
                info!("{strategy}: early stop after epoch {epoch}");
                break;
            }
        }
    }
    params.values_mut().copy_from_slice(&best_values);
    params.zero_grad();
    Ok((params, history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;
    use crate::model::ModelConfig;
    use crate::sim::{generate_scenario, ScenarioConfig};

    fn geom() -> GridGeometry {
        GridGeometry::new(5, 6, 60, 50).unwrap()
    }

    fn data(seed: u64, frames: usize) -> Vec<Scenario> {
        let mut cfg = ScenarioConfig::new(1, frames, seed);
        cfg.geometry = geom();
        vec![generate_scenario(&cfg).unwrap()]
    }

    fn model() -> ModelParams {
        ModelParams::init(
            ModelConfig {
                geometry: geom(),
                hidden: 8,
                refiner_depth: 2,
                refiner_filters: 4,
            },
            3,
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_returns_initial_parameters() {
        let cfg = TrainConfig {
            max_epochs: 0,
            ..TrainConfig::default()
        };
        let m = model();
        let (out, h) = fit(&data(1, 20), &data(2, 10), m.clone(), FusionStrategy::Spatial, &cfg).unwrap();
        assert_eq!(out.values(), m.values());
        assert!(h.epochs.is_empty());
        assert!(h.best.is_none());
    }

    #[test]
    fn flat_needs_refiner_only_and_data_must_exist() {
        let cfg = TrainConfig::default();
        assert!(fit(&data(1, 5), &data(2, 5), model(), FusionStrategy::Flat, &cfg).is_err());
        assert!(fit(&[], &data(2, 5), model(), FusionStrategy::Spatial, &cfg).is_err());
    }

    #[test]
    fn patience_zero_stops_on_first_regression() {
        let cfg = TrainConfig {
            max_epochs: 50,
            patience: 0,
            batch_size: 4,
            adam: AdamConfig {
                learning_rate: 0.05,
                ..AdamConfig::default()
            },
            ..TrainConfig::default()
        };
        let (_, h) = fit(&data(1, 40), &data(2, 20), model(), FusionStrategy::Spatial, &cfg).unwrap();
        let v: Vec<f64> = h.epochs.iter().map(|e| e.val_loss).collect();
        if h.stopped_early {
            let last = v.len() - 1;
            assert!(v[last] >= v[..last].iter().cloned().fold(f64::INFINITY, f64::min));
            assert!(v[..last].windows(2).all(|w| w[1] < w[0]));
        } else {
            assert_eq!(v.len(), 50);
        }
    }

    #[test]
    fn returned_parameters_have_the_best_validation_loss() {
        let cfg = TrainConfig {
            max_epochs: 6,
            batch_size: 8,
            ..TrainConfig::default()
        };
        let train = data(1, 60);
        let val = data(2, 20);
        let (out, h) = fit(&train, &val, model(), FusionStrategy::Invariant, &cfg).unwrap();
        let best = h.best_val_loss().unwrap();
        let min = h.epochs.iter().map(|e| e.val_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(best, min);
        let vs = Sample::collect(&val, cfg.floor).unwrap();
        let again = mean_loss(&Pipeline::new(FusionStrategy::Invariant, Some(&out), true, cfg.floor).unwrap(), &vs);
        assert_eq!(again, best);
        assert!(best < h.initial_val_loss);
        assert_eq!(h.to_csv().lines().count(), h.epochs.len() + 1);
    }

    #[test]
    fn training_is_reproducible() {
        let cfg = TrainConfig {
            max_epochs: 2,
            batch_size: 16,
            seed: 9,
            ..TrainConfig::default()
        };
        let a = fit(&data(1, 40), &data(2, 10), model(), FusionStrategy::Spatial, &cfg).unwrap();
        let b = fit(&data(1, 40), &data(2, 10), model(), FusionStrategy::Spatial, &cfg).unwrap();
        assert_eq!(a.0.values(), b.0.values());
        assert_eq!(a.1, b.1);
    }
}
