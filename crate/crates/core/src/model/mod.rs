//! Trainable stream-weight estimator and convolutional refiner.
//!
//! The estimator reads the concatenated audio and video grids (`2·R·C`
//! inputs), passes them through one ReLU hidden layer and emits
//!
//! * one sigmoid head of `R·C` units per modality (spatial weights), and
//! * one scalar sigmoid head (the per-frame weight of the invariant strategy).
//!
//! The refiner is a stack of 3x3 same-padded convolutions (ReLU between
//! layers, single-channel sigmoid output) applied to the fused presence
//! probability grid.
//!
//! All parameters live in one flat `Vec<f64>`; [`ParamGroup`] records the
//! named slices in declaration order.

pub mod checkpoint;
pub mod gradcheck;
pub mod layers;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::{ensure_same_geometry, GridGeometry, ProbGrid, WeightGrid};
use layers::{Activation, ConvLayer, DenseLayer, KERNEL};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub geometry: GridGeometry,
    pub hidden: usize,
    pub refiner_depth: usize,
    pub refiner_filters: usize,
}

impl ModelConfig {
    pub fn new(geometry: GridGeometry) -> Self {
        Self {
            geometry,
            hidden: 256,
            refiner_depth: 4,
            refiner_filters: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.hidden == 0 || self.refiner_depth == 0 || self.refiner_filters == 0 {
            return Err(Error::usage(format!(
                "model sizes must be positive (hidden {}, depth {}, filters {})",
                self.hidden, self.refiner_depth, self.refiner_filters
            )));
        }
        Ok(())
    }
}

/// A named contiguous slice of the flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGroup {
    pub name: String,
    pub offset: usize,
    pub len: usize,
}

impl ParamGroup {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Layer shapes and their parameter offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    pub config: ModelConfig,
    pub hidden: DenseLayer,
    pub audio_head: DenseLayer,
    pub video_head: DenseLayer,
    pub scalar_head: DenseLayer,
    pub refiner: Vec<ConvLayer>,
    pub groups: Vec<ParamGroup>,
    pub param_count: usize,
}

struct LayoutBuilder {
    groups: Vec<ParamGroup>,
    next: usize,
}

impl LayoutBuilder {
    fn take(&mut self, name: String, len: usize) -> std::ops::Range<usize> {
        let r = self.next..self.next + len;
        self.groups.push(ParamGroup {
            name,
            offset: self.next,
            len,
        });
        self.next += len;
        r
    }

    fn dense(&mut self, name: &str, inputs: usize, outputs: usize, activation: Activation) -> DenseLayer {
        let weight = self.take(format!("{name}.weight"), inputs * outputs);
        let bias = self.take(format!("{name}.bias"), outputs);
        DenseLayer {
            inputs,
            outputs,
            activation,
            weight,
            bias,
        }
    }

    fn conv(&mut self, name: &str, ins: usize, outs: usize, activation: Activation) -> ConvLayer {
        let weight = self.take(format!("{name}.weight"), ins * outs * KERNEL * KERNEL);
        let bias = self.take(format!("{name}.bias"), outs);
        ConvLayer {
            in_channels: ins,
            out_channels: outs,
            activation,
            weight,
            bias,
        }
    }
}

impl Architecture {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let cells = config.geometry.cells();
        let mut b = LayoutBuilder {
            groups: Vec::new(),
            next: 0,
        };
        let hidden = b.dense("dsw.hidden", 2 * cells, config.hidden, Activation::Relu);
        let audio_head = b.dense("dsw.audio", config.hidden, cells, Activation::Sigmoid);
        let video_head = b.dense("dsw.video", config.hidden, cells, Activation::Sigmoid);
        let scalar_head = b.dense("dsw.scalar", config.hidden, 1, Activation::Sigmoid);
        let depth = config.refiner_depth;
        let f = config.refiner_filters;
        let refiner = (0..depth)
            .map(|k| {
                let ins = if k == 0 { 1 } else { f };
                let last = k + 1 == depth;
                let outs = if last { 1 } else { f };
                let act = if last { Activation::Sigmoid } else { Activation::Relu };
                b.conv(&format!("refine.{k}"), ins, outs, act)
            })
            .collect();
        Ok(Self {
            config,
            hidden,
            audio_head,
            video_head,
            scalar_head,
            refiner,
            param_count: b.next,
            groups: b.groups,
        })
    }

    pub fn cells(&self) -> usize {
        self.config.geometry.cells()
    }

    pub fn dsw_range(&self) -> std::ops::Range<usize> {
        0..self.refiner[0].weight.start
    }

    pub fn refiner_range(&self) -> std::ops::Range<usize> {
        self.refiner[0].weight.start..self.param_count
    }

    /// `(fan_in, fan_out, weight range, bias range)` for every layer.
    fn layer_fans(&self) -> Vec<(usize, usize, std::ops::Range<usize>, std::ops::Range<usize>)> {
        let mut v: Vec<_> = [&self.hidden, &self.audio_head, &self.video_head, &self.scalar_head]
            .into_iter()
            .map(|d| (d.inputs, d.outputs, d.weight.clone(), d.bias.clone()))
            .collect();
        let k2 = KERNEL * KERNEL;
        v.extend(
            self.refiner
                .iter()
                .map(|c| (c.in_channels * k2, c.out_channels * k2, c.weight.clone(), c.bias.clone())),
        );
        v
    }
}

/// Half-width of the Glorot uniform interval.
pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// `len` samples from `U[-L, L]` with `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, len: usize, rng: &mut R) -> Vec<f64> {
    let limit = glorot_limit(fan_in, fan_out);
    (0..len).map(|_| rng.random_range(-limit..=limit)).collect()
}

/// All trainable parameters with a shape-congruent gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    arch: Architecture,
    values: Vec<f64>,
    grads: Vec<f64>,
}

/// Which estimator heads a forward pass needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Heads {
    Spatial,
    Scalar,
    All,
}

/// Activations kept by the estimator forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct DswCache {
    pub(crate) input: Vec<f64>,
    pub(crate) hidden: Vec<f64>,
    pub(crate) audio: Vec<f64>,
    pub(crate) video: Vec<f64>,
    pub(crate) scalar: f64,
}

impl DswCache {
    pub fn audio_weights(&self) -> &[f64] {
        &self.audio
    }

    pub fn video_weights(&self) -> &[f64] {
        &self.video
    }

    /// Output of the scalar head.
    pub fn scalar_weight(&self) -> f64 {
        self.scalar
    }
}

/// Per-layer activations of the refiner: `acts[0]` is the input plane,
/// `acts[k + 1]` the output of layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefineCache {
    pub(crate) acts: Vec<Vec<f64>>,
}

impl RefineCache {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("refiner has at least one layer")
    }
}

/// Upstream gradients for the estimator outputs.
#[derive(Debug, Clone, Copy)]
pub struct DswGrad<'a> {
    pub audio: Option<&'a [f64]>,
    pub video: Option<&'a [f64]>,
    pub scalar: f64,
}

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        let arch = Architecture::new(config)?;
        let mut values = vec![0.0; arch.param_count];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (fan_in, fan_out, w, _) in arch.layer_fans() {
            let len = w.len();
            values[w].copy_from_slice(&glorot_uniform(fan_in, fan_out, len, &mut rng));
        }
        let grads = vec![0.0; arch.param_count];
        Ok(Self { arch, values, grads })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        let arch = Architecture::new(config)?;
        let n = arch.param_count;
        Ok(Self {
            arch,
            values: vec![0.0; n],
            grads: vec![0.0; n],
        })
    }

    pub fn from_values(config: ModelConfig, values: Vec<f64>) -> Result<Self> {
        let arch = Architecture::new(config)?;
        if values.len() != arch.param_count {
            return Err(Error::usage(format!(
                "model needs {} parameters, got {}",
                arch.param_count,
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(format!("parameter {k} is not finite")));
        }
        let grads = vec![0.0; values.len()];
        Ok(Self { arch, values, grads })
    }

    pub fn arch(&self) -> &Architecture {
        &self.arch
    }

    pub fn config(&self) -> &ModelConfig {
        &self.arch.config
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.arch.config.geometry
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.arch.groups
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn grads(&self) -> &[f64] {
        &self.grads
    }

    pub fn grads_mut(&mut self) -> &mut [f64] {
        &mut self.grads
    }

    /// Simultaneous access for optimizer updates.
    pub fn values_and_grads_mut(&mut self) -> (&mut [f64], &[f64]) {
        (&mut self.values, &self.grads)
    }

    pub fn zero_grad(&mut self) {
        self.grads.fill(0.0);
    }

    /// Zeroes one parameter group (e.g. a head's final layer).
    pub fn zero_group(&mut self, prefix: &str) {
        for g in self.arch.groups.iter().filter(|g| g.name.starts_with(prefix)) {
            self.values[g.range()].fill(0.0);
        }
    }

    fn check_geometry(&self, grid: &GridGeometry, what: &str) -> Result<()> {
        ensure_same_geometry(self.geometry(), grid, what)
    }

    /// Estimator forward pass; returns the audio and video weight grids.
    pub fn dsw_forward(&self, z_a: &ProbGrid, z_v: &ProbGrid) -> Result<(WeightGrid, WeightGrid, DswCache)> {
        self.check_geometry(z_a.geometry(), "estimator audio input")?;
        self.check_geometry(z_v.geometry(), "estimator video input")?;
        let cache = self.dsw_forward_raw(z_a.values(), z_v.values(), Heads::All);
        let geom = *self.geometry();
        Ok((
            WeightGrid::from_raw(geom, cache.audio.clone()),
            WeightGrid::from_raw(geom, cache.video.clone()),
            cache,
        ))
    }

    pub(crate) fn dsw_forward_raw(&self, z_a: &[f64], z_v: &[f64], heads: Heads) -> DswCache {
        let a = &self.arch;
        let mut input = Vec::with_capacity(z_a.len() + z_v.len());
        input.extend_from_slice(z_a);
        input.extend_from_slice(z_v);
        let mut hidden = vec![0.0; a.hidden.outputs];
        a.hidden.forward(&self.values, &input, &mut hidden);
        let mut audio = Vec::new();
        let mut video = Vec::new();
        let mut scalar = 0.5;
        if matches!(heads, Heads::Spatial | Heads::All) {
            audio = vec![0.0; a.audio_head.outputs];
            video = vec![0.0; a.video_head.outputs];
            a.audio_head.forward(&self.values, &hidden, &mut audio);
            a.video_head.forward(&self.values, &hidden, &mut video);
        }
        if matches!(heads, Heads::Scalar | Heads::All) {
            let mut s = [0.0];
            a.scalar_head.forward(&self.values, &hidden, &mut s);
            scalar = s[0];
        }
        DswCache {
            input,
            hidden,
            audio,
            video,
            scalar,
        }
    }

    /// Scalar weight for the invariant strategy.
    pub fn scalar_weight(&self, z_a: &ProbGrid, z_v: &ProbGrid) -> Result<f64> {
        self.check_geometry(z_a.geometry(), "estimator audio input")?;
        self.check_geometry(z_v.geometry(), "estimator video input")?;
        Ok(self.dsw_forward_raw(z_a.values(), z_v.values(), Heads::Scalar).scalar)
    }

    /// Estimator backward pass; accumulates into `grads`.
    pub fn dsw_backward(&self, cache: &DswCache, upstream: DswGrad<'_>, grads: &mut [f64]) -> Result<()> {
        check_grad_len(grads, self.len())?;
        let a = &self.arch;
        let mut d_hidden = vec![0.0; a.hidden.outputs];
        if let Some(d) = upstream.audio {
            if cache.audio.is_empty() {
                return Err(Error::usage("audio head was not evaluated in the forward pass"));
            }
            a.audio_head
                .backward(&self.values, &cache.hidden, &cache.audio, d, grads, Some(&mut d_hidden));
        }
        if let Some(d) = upstream.video {
            if cache.video.is_empty() {
                return Err(Error::usage("video head was not evaluated in the forward pass"));
            }
            a.video_head
                .backward(&self.values, &cache.hidden, &cache.video, d, grads, Some(&mut d_hidden));
        }
        if upstream.scalar != 0.0 {
            a.scalar_head.backward(
                &self.values,
                &cache.hidden,
                &[cache.scalar],
                &[upstream.scalar],
                grads,
                Some(&mut d_hidden),
            );
        }
        a.hidden
            .backward(&self.values, &cache.input, &cache.hidden, &d_hidden, grads, None);
        Ok(())
    }

    /// Refiner forward pass on a probability grid.
    pub fn refine_forward(&self, p: &ProbGrid) -> Result<(ProbGrid, RefineCache)> {
        self.check_geometry(p.geometry(), "refiner input")?;
        let cache = self.refine_forward_raw(p.values().to_vec());
        Ok((ProbGrid::from_raw(*self.geometry(), cache.output().to_vec()), cache))
    }

    pub(crate) fn refine_forward_raw(&self, input: Vec<f64>) -> RefineCache {
        let g = self.geometry();
        let n = g.cells();
        let mut acts = Vec::with_capacity(self.arch.refiner.len() + 1);
        acts.push(input);
        for layer in &self.arch.refiner {
            let mut out = vec![0.0; layer.out_channels * n];
            layer.forward(&self.values, acts.last().unwrap(), &mut out, g.rows, g.cols);
            acts.push(out);
        }
        RefineCache { acts }
    }

    /// Refiner backward pass. Accumulates parameter gradients into `grads`
    /// and returns the gradient with respect to the refiner input.
    pub fn refine_backward(&self, cache: &RefineCache, d_out: &[f64], grads: &mut [f64]) -> Result<Vec<f64>> {
        check_grad_len(grads, self.len())?;
        let layers = &self.arch.refiner;
        if cache.acts.len() != layers.len() + 1 {
            return Err(Error::usage("refiner cache does not match the model depth"));
        }
        let g = self.geometry();
        let n = g.cells();
        if d_out.len() != n {
            return Err(Error::usage(format!("refiner output gradient needs {n} values, got {}", d_out.len())));
        }
        let mut scratch = vec![0.0; n];
        let mut upstream = d_out.to_vec();
        for (k, layer) in layers.iter().enumerate().rev() {
            let mut d_in = vec![0.0; layer.in_channels * n];
            layer.backward(
                &self.values,
                &cache.acts[k],
                &cache.acts[k + 1],
                &upstream,
                grads,
                Some(&mut d_in),
                g.rows,
                g.cols,
                &mut scratch,
            );
            upstream = d_in;
        }
        Ok(upstream)
    }
}

fn check_grad_len(grads: &[f64], n: usize) -> Result<()> {
    if grads.len() != n {
        return Err(Error::usage(format!(
            "gradient buffer has {} entries, model has {n} parameters",
            grads.len()
        )));
    }
    Ok(())
}
