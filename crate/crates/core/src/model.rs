//! A small multi-layer perceptron: ReLU hidden layers, softmax output,
//! analytic backpropagation and a mini-batch SGD trainer with Nesterov
//! momentum, L2 weight decay and an optional cosine learning-rate schedule.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::rng::{seeded, stream};

/// Probabilities are clamped to at least this value before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// `ln(max(p, PROB_FLOOR))`.
#[inline]
pub fn clamped_ln(p: f64) -> f64 {
    p.max(PROB_FLOOR).ln()
}

/// Layer widths from input features to classes, e.g. `[20, 40, 2]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Architecture(Vec<usize>);

impl Architecture {
    pub fn new(layer_widths: Vec<usize>) -> Result<Self> {
        if layer_widths.len() < 2 {
            return Err(Error::Config("an architecture needs at least input and output widths".into()));
        }
        if layer_widths.contains(&0) {
            return Err(Error::Config(format!("layer widths must be positive: {layer_widths:?}")));
        }
        Ok(Self(layer_widths))
    }

    /// One hidden layer with twice as many units as there are input features.
    pub fn single_hidden(n_features: usize, n_classes: usize) -> Result<Self> {
        Self::new(vec![n_features, 2 * n_features, n_classes])
    }

    pub fn widths(&self) -> &[usize] {
        &self.0
    }

    pub fn n_inputs(&self) -> usize {
        self.0[0]
    }

    pub fn n_classes(&self) -> usize {
        *self.0.last().unwrap()
    }

    pub fn parameter_count(&self) -> usize {
        self.0.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

impl TryFrom<Vec<usize>> for Architecture {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Architecture> for Vec<usize> {
    fn from(a: Architecture) -> Self {
        a.0
    }
}

/// Affine layer `z = x·W + b` with `W` stored as `fan_in × fan_out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub biases: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRecord", into = "ModelRecord")]
pub struct Model {
    architecture: Architecture,
    layers: Vec<Layer>,
}

/// Serialized form: layer-major, each weight matrix flattened row-major.
#[derive(Serialize, Deserialize)]
struct ModelRecord {
    architecture: Architecture,
    layers: Vec<LayerRecord>,
}

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl From<Model> for ModelRecord {
    fn from(m: Model) -> Self {
        let layers = m
            .layers
            .into_iter()
            .map(|l| LayerRecord { weights: l.weights.iter().copied().collect(), biases: l.biases.to_vec() })
            .collect();
        ModelRecord { architecture: m.architecture, layers }
    }
}

impl TryFrom<ModelRecord> for Model {
    type Error = Error;
    fn try_from(r: ModelRecord) -> Result<Self> {
        let widths = r.architecture.widths();
        if r.layers.len() != widths.len() - 1 {
            return Err(Error::Format(format!(
                "model has {} layers but architecture implies {}",
                r.layers.len(),
                widths.len() - 1
            )));
        }
        let layers = r
            .layers
            .into_iter()
            .zip(widths.windows(2))
            .map(|(l, w)| {
                if l.biases.len() != w[1] {
                    return Err(Error::Format("bias length does not match architecture".into()));
                }
                let weights = Array2::from_shape_vec((w[0], w[1]), l.weights)
                    .map_err(|e| Error::Format(format!("weight shape: {e}")))?;
                Ok(Layer { weights, biases: Array1::from(l.biases) })
            })
            .collect::<Result<Vec<_>>>()?;
        let model = Model { architecture: r.architecture, layers };
        if !model.is_finite() {
            return Err(Error::Format("model parameters must be finite".into()));
        }
        Ok(model)
    }
}

/// Gradient of the loss with respect to every layer's weights and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn l2_norm(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.iter().chain(l.biases.iter()).map(|g| g * g).sum::<f64>())
            .sum::<f64>()
            .sqrt()
    }

    /// Parameters in the same order as [`Model::flat_parameters`].
    pub fn to_flat(&self) -> Vec<f64> {
        flatten(&self.layers)
    }
}

fn flatten(layers: &[Layer]) -> Vec<f64> {
    layers.iter().flat_map(|l| l.weights.iter().chain(l.biases.iter()).copied()).collect()
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp(arch: &Architecture, seed: u64) -> Model {
    let mut rng = seeded(seed, stream::INIT);
    let layers = arch
        .widths()
        .windows(2)
        .map(|w| {
            let bound = glorot_bound(w[0], w[1]);
            let dist = Uniform::new(-bound, bound).expect("bound is positive");
            Layer {
                weights: Array2::from_shape_simple_fn((w[0], w[1]), || dist.sample(&mut rng)),
                biases: Array1::zeros(w[1]),
            }
        })
        .collect();
    Model { architecture: arch.clone(), layers }
}

pub fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn softmax_rows(z: &mut Array2<f64>) {
    for mut row in z.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row /= sum;
    }
}

/// Index of the largest entry; ties go to the smallest index.
pub fn argmax(p: ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > p[best] {
            best = i;
        }
    }
    best
}

impl Model {
    /// All-zero parameters.
    pub fn zeros(arch: &Architecture) -> Self {
        let layers = arch
            .widths()
            .windows(2)
            .map(|w| Layer { weights: Array2::zeros((w[0], w[1])), biases: Array1::zeros(w[1]) })
            .collect();
        Model { architecture: arch.clone(), layers }
    }

    /// Builds a model from explicit layers, checking shapes against `arch`.
    pub fn from_layers(arch: &Architecture, layers: Vec<Layer>) -> Result<Self> {
        let widths = arch.widths();
        if layers.len() != widths.len() - 1 {
            return Err(Error::Shape { expected: widths.len() - 1, got: layers.len() });
        }
        for (l, w) in layers.iter().zip(widths.windows(2)) {
            if l.weights.dim() != (w[0], w[1]) {
                return Err(Error::Shape { expected: w[0] * w[1], got: l.weights.len() });
            }
            if l.biases.len() != w[1] {
                return Err(Error::Shape { expected: w[1], got: l.biases.len() });
            }
        }
        let model = Model { architecture: arch.clone(), layers };
        if !model.is_finite() {
            return Err(Error::Config("model parameters must be finite".into()));
        }
        Ok(model)
    }

    pub fn architecture(&self) -> &Architecture {
        &self.architecture
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn n_classes(&self) -> usize {
        self.architecture.n_classes()
    }

    pub fn parameter_count(&self) -> usize {
        self.architecture.parameter_count()
    }

    /// Weights (row-major) then biases, layer by layer.
    pub fn flat_parameters(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_parameters(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.parameter_count() {
            return Err(Error::Shape { expected: self.parameter_count(), got: params.len() });
        }
        let mut it = params.iter().copied();
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.biases.iter_mut()).for_each(|p| *p = it.next().unwrap());
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.iter().chain(l.biases.iter()).all(|v| v.is_finite()))
    }

    fn check_input(&self, x: ArrayView1<'_, f64>) -> Result<()> {
        let expected = self.architecture.n_inputs();
        if x.len() != expected {
            return Err(Error::Shape { expected, got: x.len() });
        }
        Ok(())
    }

    fn check_label(&self, y: usize) -> Result<()> {
        let n_classes = self.n_classes();
        if y >= n_classes {
            return Err(Error::LabelOutOfRange { label: y, n_classes });
        }
        Ok(())
    }

    /// Pre-softmax outputs for one input.
    pub fn logits(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        self.check_input(x)?;
        let mut a = x.to_owned();
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            a = a.dot(&l.weights) + &l.biases;
            if i < last {
                a.mapv_inplace(|v| v.max(0.0));
            }
        }
        Ok(a)
    }

    /// Softmax class probabilities for one input.
    pub fn forward(&self, x: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
        let z = self.logits(x)?;
        let mut z = z.insert_axis(Axis(0));
        softmax_rows(&mut z);
        Ok(z.remove_axis(Axis(0)))
    }

    pub fn predict(&self, x: ArrayView1<'_, f64>) -> Result<usize> {
        Ok(argmax(self.forward(x)?.view()))
    }

    /// Cross-entropy `-ln(max(p_y, 1e-12))`.
    pub fn per_example_loss(&self, x: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
        self.check_label(y)?;
        let p = self.forward(x)?;
        Ok(-clamped_ln(p[y]))
    }

    /// Activations of every layer for a batch; the last entry holds softmax
    /// probabilities.
    fn forward_batch(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let mut z = acts[i].dot(&l.weights) + &l.biases;
            if i < last {
                z.mapv_inplace(|v| v.max(0.0));
            } else {
                softmax_rows(&mut z);
            }
            acts.push(z);
        }
        acts
    }

    /// Backpropagates cross-entropy through a forward pass and returns the
    /// gradient of the summed (not averaged) batch loss.
    fn backward_batch(&self, acts: &[Array2<f64>], labels: &[usize]) -> Gradients {
        let mut delta = acts.last().unwrap().clone();
        for (mut row, &y) in delta.rows_mut().into_iter().zip(labels) {
            row[y] -= 1.0;
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            let input = &acts[i];
            grads.push(Layer { weights: input.t().dot(&delta), biases: delta.sum_axis(Axis(0)) });
            if i > 0 {
                let mut back = delta.dot(&self.layers[i].weights.t());
                // ReLU derivative taken as 0 at the kink.
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
                delta = back;
            }
        }
        grads.reverse();
        Gradients { layers: grads }
    }

    /// Gradient of the cross-entropy loss with respect to all parameters.
    pub fn gradients(&self, x: ArrayView1<'_, f64>, y: usize) -> Result<Gradients> {
        self.check_input(x)?;
        self.check_label(y)?;
        let acts = self.forward_batch(x.to_owned().insert_axis(Axis(0)));
        Ok(self.backward_batch(&acts, &[y]))
    }

    /// L2 norm of the full parameter gradient of the per-example loss.
    pub fn per_example_grad_norm(&self, x: ArrayView1<'_, f64>, y: usize) -> Result<f64> {
        Ok(self.gradients(x, y)?.l2_norm())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub nesterov_momentum: f64,
    pub weight_decay: f64,
    pub cosine_schedule: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 16,
            learning_rate: 0.1,
            nesterov_momentum: 0.9,
            weight_decay: 1e-4,
            cosine_schedule: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.nesterov_momentum) {
            return Err(Error::Config(format!(
                "nesterov_momentum must lie in [0, 1), got {}",
                self.nesterov_momentum
            )));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return Err(Error::Config(format!("weight_decay must be non-negative, got {}", self.weight_decay)));
        }
        Ok(())
    }

    /// Learning rate at optimizer step `step` out of `total_steps`.
    pub fn learning_rate_at(&self, step: usize, total_steps: usize) -> f64 {
        if !self.cosine_schedule || total_steps == 0 {
            return self.learning_rate;
        }
        let frac = step as f64 / total_steps as f64;
        self.learning_rate * 0.5 * (1.0 + (std::f64::consts::PI * frac).cos())
    }
}

fn gather(data: &Dataset, idx: &[usize]) -> (Array2<f64>, Vec<usize>) {
    let x = data.features().select(Axis(0), idx);
    let y = idx.iter().map(|&i| data.labels()[i]).collect();
    (x, y)
}

/// Mini-batch SGD with Nesterov momentum on the samples `idx` of `data`.
///
/// With velocity `v`, momentum `μ`, step size `η` and decayed gradient
/// `g + λθ`, each step performs `v ← μv − η(g + λθ)` then
/// `θ ← θ + μv − η(g + λθ)`. Batches are reshuffled every epoch from
/// `cfg.seed`; the input model is left untouched.
pub fn train(model: &Model, data: &Dataset, idx: &[usize], cfg: &TrainConfig) -> Result<Model> {
    cfg.validate()?;
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    if data.n_features() != model.architecture.n_inputs() {
        return Err(Error::Shape { expected: model.architecture.n_inputs(), got: data.n_features() });
    }
    if let Some(&i) = idx.iter().find(|&&i| i >= data.n_samples()) {
        return Err(Error::OutOfRange(format!("sample index {i} out of range")));
    }
    if data.n_classes() > model.n_classes() {
        return Err(Error::LabelOutOfRange { label: data.n_classes() - 1, n_classes: model.n_classes() });
    }

    let mut model = model.clone();
    let mut velocity: Vec<Layer> = model
        .layers
        .iter()
        .map(|l| Layer { weights: Array2::zeros(l.weights.raw_dim()), biases: Array1::zeros(l.biases.len()) })
        .collect();

    let steps_per_epoch = idx.len().div_ceil(cfg.batch_size);
    let total_steps = cfg.epochs * steps_per_epoch;
    let mu = cfg.nesterov_momentum;
    let wd = cfg.weight_decay;
    let mut order = idx.to_vec();
    let mut rng = seeded(cfg.seed, stream::SHUFFLE);
    let mut step = 0;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let (x, y) = gather(data, batch);
            let acts = model.forward_batch(x);
            let probs = acts.last().unwrap();
            let loss: f64 = y.iter().enumerate().map(|(r, &c)| -clamped_ln(probs[[r, c]])).sum();
            if !loss.is_finite() || probs.iter().any(|p| p.is_nan()) {
                return Err(Error::Diverged { epoch, step });
            }
            let grads = model.backward_batch(&acts, &y);
            let lr = cfg.learning_rate_at(step, total_steps);
            let scale = 1.0 / batch.len() as f64;

            for ((layer, vel), grad) in model.layers.iter_mut().zip(&mut velocity).zip(&grads.layers) {
                let params = layer.weights.iter_mut().chain(layer.biases.iter_mut());
                let vels = vel.weights.iter_mut().chain(vel.biases.iter_mut());
                let gs = grad.weights.iter().chain(grad.biases.iter());
                for ((p, v), g) in params.zip(vels).zip(gs) {
                    let g = g * scale + wd * *p;
                    *v = mu * *v - lr * g;
                    *p += mu * *v - lr * g;
                }
            }
            if !model.is_finite() {
                return Err(Error::Diverged { epoch, step });
            }
            step += 1;
        }
    }
    Ok(model)
}

/// Fraction of `idx` whose arg-max prediction equals the label.
pub fn accuracy(model: &Model, data: &Dataset, idx: &[usize]) -> Result<f64> {
    if idx.is_empty() {
        return Err(Error::EmptyIndex);
    }
    let correct = correct_mask(model, data, idx)?.into_iter().filter(|&c| c).count();
    Ok(correct as f64 / idx.len() as f64)
}

/// Per-sample "prediction equals label" flags.
pub fn correct_mask(model: &Model, data: &Dataset, idx: &[usize]) -> Result<Vec<bool>> {
    idx.iter()
        .map(|&i| {
            let (x, y) = data.sample(i);
            Ok(model.predict(x)? == y)
        })
        .collect()
}
