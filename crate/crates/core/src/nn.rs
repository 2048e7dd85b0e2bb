//! Small feed-forward networks with hand-written reverse-mode gradients,
//! weighted binary cross-entropy and Adam.
//!
//! Parameters live in one flat vector laid out layer by layer, each layer
//! holding its `out × in` weight matrix (row-major) followed by its biases.
//! Hidden layers use ReLU; the final layer is affine and its output is read
//! either as a real value or as a logit.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NurdError, Result};
use crate::linalg::Matrix;
use crate::rng::{self, streams};

/// Logits are clamped to this magnitude before exponentiation.
pub const LOGIT_CLAMP: f64 = 30.0;

pub fn sigmoid(logit: f64) -> f64 {
    let t = logit.clamp(-LOGIT_CLAMP, LOGIT_CLAMP);
    1.0 / (1.0 + (-t).exp())
}

/// `ln(1 + e^t)` without overflow.
pub fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// Binary cross-entropy of a logit against a 0/1 label.
pub fn bce_from_logit(logit: f64, label: f64) -> f64 {
    softplus(logit) - label * logit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Relu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Linear,
    Logit,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_sizes: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
    pub output: OutputKind,
}

#[derive(Debug, Clone, Copy)]
struct LayerShape {
    inputs: usize,
    outputs: usize,
    weights_at: usize,
    biases_at: usize,
}

impl MlpSpec {
    pub fn new(layer_sizes: &[usize], output: OutputKind) -> Result<Self> {
        let spec = MlpSpec {
            layer_sizes: layer_sizes.to_vec(),
            activation: Activation::Relu,
            output,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(NurdError::invalid("an MLP needs at least input and output layers"));
        }
        if self.layer_sizes.contains(&0) {
            return Err(NurdError::invalid("layer sizes must be positive"));
        }
        if *self.layer_sizes.last().unwrap() != 1 {
            return Err(NurdError::invalid("only scalar-output networks are supported"));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn n_params(&self) -> usize {
        self.layer_sizes
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn shapes(&self) -> Vec<LayerShape> {
        let mut at = 0;
        self.layer_sizes
            .windows(2)
            .map(|w| {
                let shape = LayerShape {
                    inputs: w[0],
                    outputs: w[1],
                    weights_at: at,
                    biases_at: at + w[0] * w[1],
                };
                at += w[0] * w[1] + w[1];
                shape
            })
            .collect()
    }

    fn widest(&self) -> usize {
        *self.layer_sizes.iter().max().unwrap()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

/// Per-sample activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    // acts[0] is the input, acts[l + 1] the post-activation output of layer l.
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_prev: Vec<f64>,
    shapes: Vec<LayerShape>,
}

impl Tape {
    pub fn new(spec: &MlpSpec) -> Self {
        Tape {
            acts: spec.layer_sizes.iter().map(|&n| vec![0.0; n]).collect(),
            delta: vec![0.0; spec.widest()],
            delta_prev: vec![0.0; spec.widest()],
            shapes: spec.shapes(),
        }
    }
}

impl MlpModel {
    /// Fan-in scaled uniform weights in `±1/√fan_in`, zero biases.
    pub fn init(spec: MlpSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, streams::INIT);
        let mut params = vec![0.0; spec.n_params()];
        for s in spec.shapes() {
            let bound = 1.0 / (s.inputs as f64).sqrt();
            for p in &mut params[s.weights_at..s.biases_at] {
                *p = rng.random_range(-bound..bound);
            }
        }
        Ok(MlpModel { spec, params })
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        let model = MlpModel { spec, params };
        model.validate()?;
        Ok(model)
    }

    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let params = vec![0.0; spec.n_params()];
        Ok(MlpModel { spec, params })
    }

    pub fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.params.len() != self.spec.n_params() {
            return Err(NurdError::DimensionMismatch {
                expected: self.spec.n_params(),
                got: self.params.len(),
            });
        }
        if let Some(i) = self.params.iter().position(|p| !p.is_finite()) {
            return Err(NurdError::NonFinite {
                step: 0,
                what: format!("parameter {i}"),
            });
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.spec.input_dim()
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(NurdError::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.forward_tape(x, &mut Tape::new(&self.spec)))
    }

    /// Output read as a logit, mapped to a probability.
    pub fn predict_proba(&self, x: &[f64]) -> Result<f64> {
        self.forward(x).map(sigmoid)
    }

    /// Outputs for every row of a row-major input block.
    pub fn forward_rows(&self, inputs: &[f64]) -> Vec<f64> {
        let d = self.input_dim();
        let mut tape = Tape::new(&self.spec);
        inputs
            .chunks_exact(d)
            .map(|x| self.forward_tape(x, &mut tape))
            .collect()
    }

    /// Forward pass recording activations. The input length is not checked.
    pub fn forward_tape(&self, x: &[f64], tape: &mut Tape) -> f64 {
        tape.acts[0].copy_from_slice(x);
        let last = tape.shapes.len() - 1;
        for (l, s) in tape.shapes.iter().enumerate() {
            let (head, tail) = tape.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            let w = &self.params[s.weights_at..s.biases_at];
            let b = &self.params[s.biases_at..s.biases_at + s.outputs];
            for o in 0..s.outputs {
                let row = &w[o * s.inputs..(o + 1) * s.inputs];
                let mut acc = b[o];
                for (wi, xi) in row.iter().zip(input.iter()) {
                    acc += wi * xi;
                }
                out[o] = if l < last { acc.max(0.0) } else { acc };
            }
        }
        tape.acts[last + 1][0]
    }

    /// Accumulate `d_out · ∂out/∂params` into `grad` for the sample last
    /// passed through `forward_tape`. When `d_input` is given it receives
    /// `d_out · ∂out/∂x`.
    pub fn backward_tape(
        &self,
        tape: &mut Tape,
        d_out: f64,
        grad: &mut [f64],
        d_input: Option<&mut [f64]>,
    ) {
        tape.delta[0] = d_out;
        for l in (0..tape.shapes.len()).rev() {
            let s = tape.shapes[l];
            let input = &tape.acts[l];
            let w = &self.params[s.weights_at..s.biases_at];
            for o in 0..s.outputs {
                let d = tape.delta[o];
                grad[s.biases_at + o] += d;
                if d != 0.0 {
                    let g = &mut grad[s.weights_at + o * s.inputs..s.weights_at + (o + 1) * s.inputs];
                    for (gi, xi) in g.iter_mut().zip(input.iter()) {
                        *gi += d * xi;
                    }
                }
            }
            if l == 0 && d_input.is_none() {
                break;
            }
            for i in 0..s.inputs {
                let mut acc = 0.0;
                for o in 0..s.outputs {
                    acc += w[o * s.inputs + i] * tape.delta[o];
                }
                // ReLU derivative: the post-activation is positive exactly
                // where the pre-activation is.
                tape.delta_prev[i] = if l > 0 && input[i] <= 0.0 { 0.0 } else { acc };
            }
            std::mem::swap(&mut tape.delta, &mut tape.delta_prev);
        }
        if let Some(d_input) = d_input {
            d_input.copy_from_slice(&tape.delta[..self.input_dim()]);
        }
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let model: MlpModel = serde_json::from_str(&fs::read_to_string(path)?)?;
        model.validate()?;
        Ok(model)
    }
}

/// Borrowed mini-batch: row-major inputs, 0/1 labels and per-sample weights.
#[derive(Debug, Clone, Copy)]
pub struct BinaryBatch<'a> {
    pub inputs: &'a [f64],
    pub labels: &'a [f64],
    pub weights: &'a [f64],
}

impl<'a> BinaryBatch<'a> {
    pub fn new(inputs: &'a [f64], labels: &'a [f64], weights: &'a [f64]) -> Self {
        BinaryBatch {
            inputs,
            labels,
            weights,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn check(&self, input_dim: usize) -> Result<()> {
        let n = self.labels.len();
        if self.weights.len() != n {
            return Err(NurdError::DimensionMismatch {
                expected: n,
                got: self.weights.len(),
            });
        }
        if self.inputs.len() != n * input_dim {
            return Err(NurdError::DimensionMismatch {
                expected: n * input_dim,
                got: self.inputs.len(),
            });
        }
        Ok(())
    }
}

/// Weighted mean cross-entropy `Σ wᵢ ℓᵢ / Σ wᵢ`. A batch of total weight
/// zero has zero loss.
pub fn weighted_bce(model: &MlpModel, batch: &BinaryBatch) -> Result<f64> {
    batch.check(model.input_dim())?;
    let total: f64 = batch.weights.iter().sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let logits = model.forward_rows(batch.inputs);
    Ok(logits
        .iter()
        .zip(batch.labels)
        .zip(batch.weights)
        .map(|((&f, &y), &w)| (w / total) * bce_from_logit(f, y))
        .sum())
}

/// Loss and its exact gradient with respect to the flat parameters.
pub fn loss_and_grad(model: &MlpModel, batch: &BinaryBatch) -> Result<(f64, Vec<f64>)> {
    batch.check(model.input_dim())?;
    let mut grad = vec![0.0; model.params.len()];
    let total: f64 = batch.weights.iter().sum();
    if total == 0.0 {
        return Ok((0.0, grad));
    }
    let d = model.input_dim();
    let mut tape = Tape::new(&model.spec);
    let mut loss = 0.0;
    for ((x, &y), &w) in batch
        .inputs
        .chunks_exact(d)
        .zip(batch.labels)
        .zip(batch.weights)
    {
        let c = w / total;
        let f = model.forward_tape(x, &mut tape);
        loss += c * bce_from_logit(f, y);
        let d_out = c * (logistic_exact(f) - y);
        model.backward_tape(&mut tape, d_out, &mut grad, None);
    }
    Ok((loss, grad))
}

// Unclamped sigmoid: the derivative of softplus must match it exactly for the
// finite-difference checks, even at large logits.
fn logistic_exact(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptConfig {
    pub algorithm: Algorithm,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for OptConfig {
    fn default() -> Self {
        OptConfig {
            algorithm: Algorithm::Adam,
            learning_rate: 1e-2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 100,
            batch_size: 1000,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl OptConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NurdError::invalid("learning_rate must be positive"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(b > 0.0 && b < 1.0) {
                return Err(NurdError::invalid(format!("{name} must lie in (0, 1)")));
            }
        }
        if !(self.eps > 0.0) {
            return Err(NurdError::invalid("eps must be positive"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(NurdError::invalid("weight_decay must be nonnegative"));
        }
        if self.batch_size == 0 {
            return Err(NurdError::invalid("batch_size must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        OptConfig {
            seed,
            ..self.clone()
        }
    }
}

/// Adam state for one parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(cfg: &OptConfig, n_params: usize) -> Self {
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            weight_decay: cfg.weight_decay,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            t: 0,
        }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            let g = g + self.weight_decay * *p;
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

fn check_training_inputs(
    model: &MlpModel,
    inputs: &Matrix,
    labels: &[f64],
    weights: &[f64],
) -> Result<()> {
    if inputs.cols() != model.input_dim() {
        return Err(NurdError::DimensionMismatch {
            expected: model.input_dim(),
            got: inputs.cols(),
        });
    }
    for len in [labels.len(), weights.len()] {
        if len != inputs.rows() {
            return Err(NurdError::DimensionMismatch {
                expected: inputs.rows(),
                got: len,
            });
        }
    }
    if inputs.rows() == 0 {
        return Err(NurdError::Empty("training set".into()));
    }
    if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(NurdError::invalid("training weights must be positive and finite"));
    }
    Ok(())
}

/// Per-epoch record from [`train_binary_selected`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
    pub best_epoch: usize,
}

fn run_epochs(
    model: &mut MlpModel,
    inputs: &Matrix,
    labels: &[f64],
    weights: &[f64],
    opt: &OptConfig,
    mut after_epoch: impl FnMut(usize, &MlpModel) -> Result<()>,
) -> Result<()> {
    opt.validate()?;
    let n = inputs.rows();
    let d = inputs.cols();
    let mut adam = Adam::new(opt, model.params.len());
    let mut rng = rng::stream(opt.seed, streams::SHUFFLE);
    let mut xb = Vec::with_capacity(opt.batch_size.min(n) * d);
    let mut yb = Vec::with_capacity(opt.batch_size.min(n));
    let mut wb = Vec::with_capacity(opt.batch_size.min(n));
    let mut step = 0;
    for epoch in 0..opt.epochs {
        let order = rng::permutation(n, &mut rng);
        for chunk in order.chunks(opt.batch_size) {
            xb.clear();
            yb.clear();
            wb.clear();
            for &i in chunk {
                xb.extend_from_slice(inputs.row(i));
                yb.push(labels[i]);
                wb.push(weights[i]);
            }
            let (loss, grad) = loss_and_grad(model, &BinaryBatch::new(&xb, &yb, &wb))?;
            if !loss.is_finite() {
                return Err(NurdError::NonFinite {
                    step,
                    what: format!("training loss {loss} in epoch {epoch}"),
                });
            }
            adam.step(&mut model.params, &grad);
            step += 1;
        }
        after_epoch(epoch, model)?;
    }
    Ok(())
}

/// Minimize weighted mean cross-entropy with Adam over shuffled mini-batches.
pub fn train_binary(
    model: &MlpModel,
    inputs: &Matrix,
    labels: &[f64],
    weights: &[f64],
    opt: &OptConfig,
) -> Result<MlpModel> {
    check_training_inputs(model, inputs, labels, weights)?;
    let mut model = model.clone();
    run_epochs(&mut model, inputs, labels, weights, opt, |_, _| Ok(()))?;
    Ok(model)
}

/// Training data plus a held-out slice used to pick the best epoch.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub inputs: &'a Matrix,
    pub labels: &'a [f64],
    pub weights: &'a [f64],
}

/// Like [`train_binary`], but returns the parameters from the epoch with the
/// lowest validation loss.
pub fn train_binary_selected(
    model: &MlpModel,
    train: Split,
    val: Split,
    opt: &OptConfig,
) -> Result<(MlpModel, TrainReport)> {
    check_training_inputs(model, train.inputs, train.labels, train.weights)?;
    check_training_inputs(model, val.inputs, val.labels, val.weights)?;
    let val_batch = BinaryBatch::new(val.inputs.as_slice(), val.labels, val.weights);
    let train_batch = BinaryBatch::new(train.inputs.as_slice(), train.labels, train.weights);
    let mut best = model.clone();
    let mut report = TrainReport {
        train_loss: Vec::with_capacity(opt.epochs),
        val_loss: Vec::with_capacity(opt.epochs),
        best_epoch: 0,
    };
    let mut best_val = weighted_bce(model, &val_batch)?;
    let mut model = model.clone();
    run_epochs(&mut model, train.inputs, train.labels, train.weights, opt, |epoch, m| {
        let v = weighted_bce(m, &val_batch)?;
        report.train_loss.push(weighted_bce(m, &train_batch)?);
        report.val_loss.push(v);
        if v < best_val {
            best_val = v;
            best = m.clone();
            report.best_epoch = epoch + 1;
        }
        Ok(())
    })?;
    Ok((best, report))
}

/// Outcome of a finite-difference gradient comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub passed: bool,
    pub worst_index: usize,
    pub worst_rel_error: f64,
}

pub const FD_STEP: f64 = 1e-5;
// Relative errors are taken against max(|analytic|, |numeric|, floor) so that
// coordinates with vanishing gradient are compared in absolute terms.
const REL_ERROR_FLOOR: f64 = 1e-6;

/// Central finite-difference gradient of `f` at `params`.
pub fn numeric_gradient(params: &[f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + step;
            let up = f(&p);
            p[i] = orig - step;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// Compare two gradients coordinate by coordinate.
pub fn compare_gradients(analytic: &[f64], numeric: &[f64], tolerance: f64) -> GradCheck {
    let mut worst = GradCheck {
        passed: true,
        worst_index: 0,
        worst_rel_error: 0.0,
    };
    for (i, (&a, &n)) in analytic.iter().zip(numeric).enumerate() {
        let rel = (a - n).abs() / a.abs().max(n.abs()).max(REL_ERROR_FLOOR);
        if rel > worst.worst_rel_error || !rel.is_finite() {
            worst.worst_rel_error = rel;
            worst.worst_index = i;
        }
    }
    worst.passed = worst.worst_rel_error <= tolerance;
    worst
}

/// Check a supplied gradient of the weighted loss against finite differences.
pub fn check_gradient(
    model: &MlpModel,
    batch: &BinaryBatch,
    analytic: &[f64],
    tolerance: f64,
) -> Result<GradCheck> {
    if analytic.len() != model.params.len() {
        return Err(NurdError::DimensionMismatch {
            expected: model.params.len(),
            got: analytic.len(),
        });
    }
    let mut probe = model.clone();
    let numeric = numeric_gradient(&model.params, FD_STEP, |p| {
        probe.params.copy_from_slice(p);
        weighted_bce(&probe, batch).expect("batch already validated")
    });
    Ok(compare_gradients(analytic, &numeric, tolerance))
}

/// Check the backpropagated gradient of the weighted loss.
pub fn grad_check(model: &MlpModel, batch: &BinaryBatch, tolerance: f64) -> Result<GradCheck> {
    let (_, grad) = loss_and_grad(model, batch)?;
    check_gradient(model, batch, &grad, tolerance)
}
