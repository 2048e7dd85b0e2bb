//! Second stage: learn a scalar representation `r(x)` and a Bernoulli head
//! on nuisance-randomized data, penalizing the dependence between `[y, r(x)]`
//! and `z`.
//!
//! The penalty is a density-ratio estimate of `I([y, r(x)]; z)`: a critic is
//! trained to tell real `(y, r, z)` tuples from ones whose `z` was shuffled,
//! and its logit on real tuples estimates the log density ratio. The
//! representation and head then take one gradient step on
//! `loglik − λ · penalty` with the critic frozen, and the two loops
//! alternate.

use std::io::Write;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NurdError, Result};
use crate::families::Dataset;
use crate::nn::{bce_from_logit, sigmoid, Adam, MlpModel, MlpSpec, OptConfig, OutputKind, Tape};
use crate::reweighting::holdout_split;
use crate::rng::{self, derive_seed, streams, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    /// `I([y, r(x)]; z)`.
    #[default]
    Joint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub lambda: f64,
    pub penalty: Penalty,
    /// Passes over each fresh critic batch before a predictive update.
    pub critic_epochs_per_step: usize,
    /// Predictive gradient steps taken between critic refreshes.
    pub predictive_steps: usize,
    /// Data rows per mini-batch, for both the predictive and the critic
    /// updates. A critic step sees each row twice: real and shuffled.
    pub batch_size: usize,
    pub critic_lr: f64,
    /// Learning rate of the Bernoulli head; the representation uses
    /// `opt.learning_rate`.
    pub head_lr: f64,
    pub reinit_critic: bool,
    pub val_fraction: f64,
    pub rep_spec: MlpSpec,
    pub pred_head_spec: MlpSpec,
    pub critic_spec: MlpSpec,
    pub z_embed_spec: MlpSpec,
    /// Learning rate, Adam moments, epoch count and seed of the predictive
    /// optimizer. Its `batch_size` is unused here.
    pub opt: OptConfig,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            lambda: 1.0,
            penalty: Penalty::Joint,
            critic_epochs_per_step: 2,
            predictive_steps: 1,
            batch_size: 1000,
            critic_lr: 1e-2,
            head_lr: 1e-2,
            reinit_critic: false,
            val_fraction: 0.2,
            rep_spec: MlpSpec {
                layer_sizes: vec![2, 16, 1],
                activation: Default::default(),
                output: OutputKind::Linear,
            },
            pred_head_spec: MlpSpec {
                layer_sizes: vec![1, 1],
                activation: Default::default(),
                output: OutputKind::Logit,
            },
            critic_spec: MlpSpec {
                layer_sizes: vec![3, 16, 16, 1],
                activation: Default::default(),
                output: OutputKind::Logit,
            },
            z_embed_spec: MlpSpec {
                layer_sizes: vec![1, 16, 1],
                activation: Default::default(),
                output: OutputKind::Linear,
            },
            opt: OptConfig {
                learning_rate: 1e-2,
                epochs: 150,
                ..OptConfig::default()
            },
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(NurdError::invalid("lambda must be nonnegative"));
        }
        if self.batch_size < 8 {
            return Err(NurdError::invalid("batch_size must be at least 8"));
        }
        if self.predictive_steps == 0 {
            return Err(NurdError::invalid("predictive_steps must be positive"));
        }
        if !(self.critic_lr > 0.0 && self.head_lr > 0.0) {
            return Err(NurdError::invalid("critic_lr and head_lr must be positive"));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(NurdError::invalid("val_fraction must lie in (0, 1)"));
        }
        self.opt.validate()?;
        for (name, spec, dim) in [
            ("rep_spec", &self.rep_spec, 2),
            ("pred_head_spec", &self.pred_head_spec, 1),
            ("critic_spec", &self.critic_spec, 3),
            ("z_embed_spec", &self.z_embed_spec, 1),
        ] {
            spec.validate()?;
            if spec.input_dim() != dim {
                return Err(NurdError::invalid(format!(
                    "{name} must take {dim} inputs, got {}",
                    spec.input_dim()
                )));
            }
        }
        Ok(())
    }

    pub fn critic_opt(&self) -> OptConfig {
        OptConfig {
            learning_rate: self.critic_lr,
            ..self.opt.clone()
        }
    }

    fn head_opt(&self) -> OptConfig {
        OptConfig {
            learning_rate: self.head_lr,
            ..self.opt.clone()
        }
    }
}

/// Real tuples `(y, z, r)` and the same tuples with the `z` column shuffled.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticBatch {
    pub y: Vec<f64>,
    pub r: Vec<f64>,
    pub z: Vec<f64>,
    pub z_shuffled: Vec<f64>,
    pub weights: Vec<f64>,
}

impl CriticBatch {
    pub fn from_columns(y: Vec<f64>, z: Vec<f64>, r: Vec<f64>, weights: Vec<f64>, seed: u64) -> Self {
        let perm = rng::permutation(z.len(), &mut rng::stream(seed, streams::PERMUTE));
        let z_shuffled = perm.iter().map(|&j| z[j]).collect();
        CriticBatch {
            y,
            r,
            z,
            z_shuffled,
            weights,
        }
    }

    /// Number of real tuples (equal to the number of shuffled ones).
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

}

/// Critic batch over all of `data` with `r = rep(x)`.
pub fn make_critic_batch(data: &Dataset, rep: &MlpModel, seed: u64) -> Result<CriticBatch> {
    if rep.input_dim() != 2 {
        return Err(NurdError::DimensionMismatch {
            expected: 2,
            got: rep.input_dim(),
        });
    }
    let r = rep.forward_rows(data.covariates().as_slice());
    Ok(CriticBatch::from_columns(
        data.labels(),
        data.nuisance_column(),
        r,
        data.weights(),
        seed,
    ))
}

/// Critic plus the learned nuisance embedding it reads `z` through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub net: MlpModel,
    pub z_embed: MlpModel,
}

struct CriticTapes {
    net: Tape,
    z: Tape,
}

impl Critic {
    pub fn init(critic_spec: &MlpSpec, z_embed_spec: &MlpSpec, seed: u64) -> Result<Self> {
        Ok(Critic {
            net: MlpModel::init(critic_spec.clone(), derive_seed(seed, 1))?,
            z_embed: MlpModel::init(z_embed_spec.clone(), derive_seed(seed, 2))?,
        })
    }

    fn tapes(&self) -> CriticTapes {
        CriticTapes {
            net: Tape::new(&self.net.spec),
            z: Tape::new(&self.z_embed.spec),
        }
    }

    fn logit_tape(&self, y: f64, z: f64, r: f64, t: &mut CriticTapes) -> f64 {
        let s = self.z_embed.forward_tape(&[z], &mut t.z);
        self.net.forward_tape(&[y, r, s], &mut t.net)
    }

    /// Log density-ratio estimate at one tuple.
    pub fn logit(&self, y: f64, z: f64, r: f64) -> f64 {
        self.logit_tape(y, z, r, &mut self.tapes())
    }
}

/// Weighted mean critic logit over the real tuples: the plug-in estimate of
/// `I([y, r]; z)`. A critic with all-zero parameters gives exactly 0.
pub fn mi_estimate(critic: &Critic, batch: &CriticBatch) -> f64 {
    let mut tapes = critic.tapes();
    let total: f64 = batch.weights.iter().sum();
    (0..batch.len())
        .map(|i| {
            let l = critic.logit_tape(batch.y[i], batch.z[i], batch.r[i], &mut tapes);
            batch.weights[i] * l
        })
        .sum::<f64>()
        / total
}

/// Optimizer state for a critic, kept across outer steps unless the critic
/// is re-initialized.
pub struct CriticTrainer {
    net_opt: Adam,
    z_opt: Adam,
    rng: StreamRng,
    grad_net: Vec<f64>,
    grad_z: Vec<f64>,
}

impl CriticTrainer {
    pub fn new(critic: &Critic, opt: &OptConfig, seed: u64) -> Self {
        CriticTrainer {
            net_opt: Adam::new(opt, critic.net.params.len()),
            z_opt: Adam::new(opt, critic.z_embed.params.len()),
            rng: rng::stream(seed, streams::CRITIC),
            grad_net: vec![0.0; critic.net.params.len()],
            grad_z: vec![0.0; critic.z_embed.params.len()],
        }
    }

    /// `epochs` passes of weighted cross-entropy descent. Rows are visited in
    /// shuffled mini-batches of `rows_per_step`; each row contributes its
    /// real tuple (label 1) and its shuffled tuple (label 0). Returns the mean
    /// loss of the last epoch.
    pub fn train(
        &mut self,
        critic: &mut Critic,
        batch: &CriticBatch,
        epochs: usize,
        rows_per_step: usize,
    ) -> Result<f64> {
        let mut tapes = critic.tapes();
        let mut last = 0.0;
        let mut order: Vec<usize> = (0..batch.len()).collect();
        for _ in 0..epochs {
            order.shuffle(&mut self.rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(rows_per_step) {
                let total: f64 = 2.0 * chunk.iter().map(|&i| batch.weights[i]).sum::<f64>();
                self.grad_net.iter_mut().for_each(|g| *g = 0.0);
                self.grad_z.iter_mut().for_each(|g| *g = 0.0);
                let mut loss = 0.0;
                for &i in chunk {
                    let c = batch.weights[i] / total;
                    for (label, z) in [(1.0, batch.z[i]), (0.0, batch.z_shuffled[i])] {
                        let f = critic.logit_tape(batch.y[i], z, batch.r[i], &mut tapes);
                        loss += c * bce_from_logit(f, label);
                        let mut d_in = [0.0; 3];
                        critic.net.backward_tape(
                            &mut tapes.net,
                            c * (sigmoid_exact(f) - label),
                            &mut self.grad_net,
                            Some(&mut d_in),
                        );
                        critic
                            .z_embed
                            .backward_tape(&mut tapes.z, d_in[2], &mut self.grad_z, None);
                    }
                }
                if !loss.is_finite() {
                    return Err(NurdError::NonFinite {
                        step: 0,
                        what: format!("critic loss {loss}"),
                    });
                }
                self.net_opt.step(&mut critic.net.params, &self.grad_net);
                self.z_opt.step(&mut critic.z_embed.params, &self.grad_z);
                epoch_loss += loss * chunk.len() as f64;
            }
            last = epoch_loss / batch.len() as f64;
        }
        Ok(last)
    }
}

fn sigmoid_exact(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

/// Rows fed to the predictive objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillBatch {
    /// Row-major `n × 2` covariates.
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
    pub w: Vec<f64>,
}

impl DistillBatch {
    pub fn from_dataset(data: &Dataset, idx: &[usize]) -> Self {
        let mut b = DistillBatch {
            x: Vec::with_capacity(2 * idx.len()),
            y: Vec::with_capacity(idx.len()),
            z: Vec::with_capacity(idx.len()),
            w: Vec::with_capacity(idx.len()),
        };
        for &i in idx {
            let s = &data.samples[i];
            b.x.extend_from_slice(&s.x);
            b.y.push(s.y);
            b.z.push(s.z[0]);
            b.w.push(s.w);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Terms of `loglik − λ · penalty`, each a weighted mean over the batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTerms {
    pub loglik: f64,
    pub penalty: f64,
    pub objective: f64,
}

/// The distillation objective and the gradient of its negation with respect
/// to the representation and head parameters, critic held fixed.
pub fn objective_and_grad(
    rep: &MlpModel,
    head: &MlpModel,
    critic: &Critic,
    batch: &DistillBatch,
    lambda: f64,
) -> (ObjectiveTerms, Vec<f64>, Vec<f64>) {
    let mut rep_grad = vec![0.0; rep.params.len()];
    let mut head_grad = vec![0.0; head.params.len()];
    let terms = objective_accumulate(rep, head, critic, batch, lambda, Some((&mut rep_grad, &mut head_grad)));
    (terms, rep_grad, head_grad)
}

/// The distillation objective without gradients.
pub fn objective(
    rep: &MlpModel,
    head: &MlpModel,
    critic: &Critic,
    batch: &DistillBatch,
    lambda: f64,
) -> ObjectiveTerms {
    objective_accumulate(rep, head, critic, batch, lambda, None)
}

fn objective_accumulate(
    rep: &MlpModel,
    head: &MlpModel,
    critic: &Critic,
    batch: &DistillBatch,
    lambda: f64,
    mut grads: Option<(&mut Vec<f64>, &mut Vec<f64>)>,
) -> ObjectiveTerms {
    let mut rep_tape = Tape::new(&rep.spec);
    let mut head_tape = Tape::new(&head.spec);
    let mut tapes = critic.tapes();
    // critic parameter gradients are computed along the way and discarded
    let mut scratch = vec![0.0; critic.net.params.len()];
    let total: f64 = batch.w.iter().sum();
    let (mut loglik, mut penalty) = (0.0, 0.0);
    for i in 0..batch.len() {
        let c = batch.w[i] / total;
        let y = batch.y[i];
        let r = rep.forward_tape(&batch.x[2 * i..2 * i + 2], &mut rep_tape);
        let f = head.forward_tape(&[r], &mut head_tape);
        loglik -= c * bce_from_logit(f, y);
        let pen = if lambda != 0.0 {
            critic.logit_tape(y, batch.z[i], r, &mut tapes)
        } else {
            0.0
        };
        penalty += c * pen;
        if let Some((rep_grad, head_grad)) = grads.as_mut() {
            let mut d_r = [0.0];
            head.backward_tape(&mut head_tape, c * (sigmoid_exact(f) - y), head_grad, Some(&mut d_r));
            let mut d_total = d_r[0];
            if lambda != 0.0 {
                let mut d_in = [0.0; 3];
                critic
                    .net
                    .backward_tape(&mut tapes.net, c * lambda, &mut scratch, Some(&mut d_in));
                d_total += d_in[1];
            }
            rep.backward_tape(&mut rep_tape, d_total, rep_grad, None);
        }
    }
    ObjectiveTerms {
        loglik,
        penalty,
        objective: loglik - lambda * penalty,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub loglik: f64,
    pub penalty: f64,
    pub objective: f64,
    /// Held-out objective, recorded at the last step of each epoch.
    pub val_objective: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct DistillOutput {
    pub rep: MlpModel,
    pub head: MlpModel,
    pub critic: Critic,
    pub history: Vec<HistoryRow>,
    /// Rows of the input held out for model selection.
    pub val_indices: Vec<usize>,
    /// Epoch whose parameters were kept (0 means the initialization).
    pub best_epoch: usize,
}

/// History as CSV with columns `step,loglik,penalty,objective,val_objective`;
/// `val_objective` is empty on steps without a held-out evaluation.
pub fn write_history_csv<W: Write>(history: &[HistoryRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["step", "loglik", "penalty", "objective", "val_objective"])?;
    for h in history {
        wtr.write_record([
            h.step.to_string(),
            h.loglik.to_string(),
            h.penalty.to_string(),
            h.objective.to_string(),
            h.val_objective.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Alternating optimization of critic and predictive model on `data`
/// weighted by `weights`.
pub fn distill(data: &Dataset, weights: &[f64], cfg: &DistillConfig, seed: u64) -> Result<DistillOutput> {
    cfg.validate()?;
    if weights.len() != data.len() {
        return Err(NurdError::DimensionMismatch {
            expected: data.len(),
            got: weights.len(),
        });
    }
    let data = data.with_weights(weights)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let (train_idx, val_idx) = holdout_split(&all, cfg.val_fraction, derive_seed(seed, 10));
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(NurdError::Empty("training or validation slice".into()));
    }
    let val = DistillBatch::from_dataset(&data, &val_idx);
    let train_all = DistillBatch::from_dataset(&data, &train_idx);

    let mut rep = MlpModel::init(cfg.rep_spec.clone(), derive_seed(seed, 11))?;
    let mut head = MlpModel::init(cfg.pred_head_spec.clone(), derive_seed(seed, 12))?;
    let mut critic = Critic::init(&cfg.critic_spec, &cfg.z_embed_spec, derive_seed(seed, 13))?;
    let critic_opt = cfg.critic_opt();
    let mut critic_trainer = CriticTrainer::new(&critic, &critic_opt, derive_seed(seed, 14));
    let mut rep_opt = Adam::new(&cfg.opt, rep.params.len());
    let mut head_opt = Adam::new(&cfg.head_opt(), head.params.len());
    let mut shuffle = rng::stream(derive_seed(seed, 15), streams::SHUFFLE);

    let val_objective = |rep: &MlpModel, head: &MlpModel, critic: &Critic| {
        objective(rep, head, critic, &val, cfg.lambda).objective
    };
    let mut best = (rep.clone(), head.clone());
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut history = Vec::new();
    let mut step = 0;
    let mut order = train_idx.clone();

    // Retrain (or reinitialize and train) the critic against the current
    // representation on fresh tuples over the whole training slice.
    let refresh = |critic: &mut Critic, trainer: &mut CriticTrainer, rep: &MlpModel, step: usize| {
        if cfg.reinit_critic {
            *critic = Critic::init(&cfg.critic_spec, &cfg.z_embed_spec, derive_seed(seed, 1000 + step as u64))?;
            *trainer = CriticTrainer::new(critic, &critic_opt, derive_seed(seed, 2000 + step as u64));
        }
        let cb = CriticBatch::from_columns(
            train_all.y.clone(),
            train_all.z.clone(),
            rep.forward_rows(&train_all.x),
            train_all.w.clone(),
            derive_seed(seed, 3000 + step as u64),
        );
        trainer
            .train(critic, &cb, cfg.critic_epochs_per_step, cfg.batch_size)
            .map_err(|_| NurdError::NonFinite {
                step,
                what: "critic loss".into(),
            })
    };
    let mut critic_fresh = false;

    for epoch in 0..cfg.opt.epochs {
        order.shuffle(&mut shuffle);
        for chunk in order.chunks(cfg.batch_size) {
            let batch = DistillBatch::from_dataset(&data, chunk);
            if cfg.lambda != 0.0 && step % cfg.predictive_steps == 0 && !critic_fresh {
                refresh(&mut critic, &mut critic_trainer, &rep, step)?;
            }
            let (terms, rep_grad, head_grad) = objective_and_grad(&rep, &head, &critic, &batch, cfg.lambda);
            if !terms.objective.is_finite() {
                return Err(NurdError::NonFinite {
                    step,
                    what: format!("distillation objective {}", terms.objective),
                });
            }
            rep_opt.step(&mut rep.params, &rep_grad);
            head_opt.step(&mut head.params, &head_grad);
            critic_fresh = false;
            history.push(HistoryRow {
                step,
                loglik: terms.loglik,
                penalty: terms.penalty,
                objective: terms.objective,
                val_objective: None,
            });
            step += 1;
        }
        // Score the epoch's end state against a critic fitted to it; the
        // critic from before the last step is stale once the step moves r.
        if cfg.lambda != 0.0 {
            refresh(&mut critic, &mut critic_trainer, &rep, step)?;
            critic_fresh = step % cfg.predictive_steps == 0;
        }
        let v = val_objective(&rep, &head, &critic);
        if !v.is_finite() {
            return Err(NurdError::NonFinite {
                step,
                what: format!("validation objective {v}"),
            });
        }
        if v > best_val {
            best_val = v;
            best = (rep.clone(), head.clone());
            best_epoch = epoch + 1;
        }
        if let Some(last) = history.last_mut() {
            last.val_objective = Some(v);
        }
    }

    Ok(DistillOutput {
        rep: best.0,
        head: best.1,
        critic,
        history,
        val_indices: val_idx,
        best_epoch,
    })
}

/// Critic tuples whose `r` and `z` columns are standard normals with
/// correlation `rho` (the `y` column is constant), so the joint-dependence
/// target is `−½ ln(1 − rho²)`.
pub fn correlated_gaussian_batch(rho: f64, n: usize, seed: u64) -> CriticBatch {
    let mut rng = rng::stream(seed, streams::SAMPLER);
    let mut z = Vec::with_capacity(n);
    let mut r = Vec::with_capacity(n);
    for _ in 0..n {
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        z.push(a);
        r.push(rho * a + (1.0 - rho * rho).sqrt() * b);
    }
    CriticBatch::from_columns(vec![0.0; n], z, r, vec![1.0; n], seed)
}

/// Train a default-architecture critic on `n` correlated Gaussian pairs and
/// return its estimate on a fresh sample of the same size. A coarse phase is
/// followed by a fine one that settles the logit offset.
pub fn gaussian_mi_probe(rho: f64, n: usize, seed: u64) -> Result<f64> {
    let train = correlated_gaussian_batch(rho, n, seed);
    let eval = correlated_gaussian_batch(rho, n, seed + 1);
    let cfg = DistillConfig::default();
    let mut critic = Critic::init(&cfg.critic_spec, &cfg.z_embed_spec, seed)?;
    for (lr, epochs, tag) in [(1e-3, 20, 0), (1e-4, 10, 1)] {
        let opt = OptConfig {
            learning_rate: lr,
            ..OptConfig::default()
        };
        let mut trainer = CriticTrainer::new(&critic, &opt, derive_seed(seed, tag));
        trainer.train(&mut critic, &train, epochs, 500)?;
    }
    Ok(mi_estimate(&critic, &eval))
}

/// `p(y = 1 | x)` under a distilled representation and head.
pub fn predict(rep: &MlpModel, head: &MlpModel, x: &[f64; 2]) -> f64 {
    let r = rep.forward_tape(x, &mut Tape::new(&rep.spec));
    sigmoid(head.forward_tape(&[r], &mut Tape::new(&head.spec)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{sample_binary_gaussian, FamilySpec, Sample};
    use crate::nn::{compare_gradients, numeric_gradient, FD_STEP};

    #[test]
    fn critic_recovers_gaussian_mi() {
        let want = -0.5 * (1.0f64 - 0.64).ln();
        let got = gaussian_mi_probe(0.8, 100_000, 1).unwrap();
        assert!((got - want).abs() < 0.05, "estimate {got}, truth {want}");
    }

    #[test]
    fn critic_sees_no_dependence_between_independent_columns() {
        let got = gaussian_mi_probe(0.0, 100_000, 2).unwrap();
        assert!(got.abs() < 0.02, "estimate {got}");
    }

    #[test]
    fn zero_critic_estimates_zero() {
        let cfg = DistillConfig::default();
        let critic = Critic {
            net: MlpModel::zeros(cfg.critic_spec.clone()).unwrap(),
            z_embed: MlpModel::zeros(cfg.z_embed_spec.clone()).unwrap(),
        };
        assert_eq!(mi_estimate(&critic, &correlated_gaussian_batch(0.8, 100, 3)), 0.0);
    }

    #[test]
    fn critic_batch_construction() {
        let data = sample_binary_gaussian(0.5, 1000, 4).unwrap();
        let rep = MlpModel::init(DistillConfig::default().rep_spec, 0).unwrap();
        let a = make_critic_batch(&data, &rep, 1).unwrap();
        let b = make_critic_batch(&data, &rep, 2).unwrap();
        assert_eq!(a.len(), 1000);
        assert_eq!(a.z_shuffled.len(), 1000);
        assert_ne!(a.z_shuffled, b.z_shuffled);
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v
        };
        assert_eq!(sorted(&a.z_shuffled), sorted(&b.z_shuffled));
        assert_eq!(sorted(&a.z_shuffled), sorted(&a.z));

        let flat: Vec<Sample> = data
            .samples
            .iter()
            .map(|s| Sample::new(s.y, 0.25, s.x))
            .collect();
        let flat = Dataset::new(flat, FamilySpec::BinaryGaussian { a: 0.0 }, 0).unwrap();
        let c = make_critic_batch(&flat, &rep, 3).unwrap();
        assert_eq!(c.z, c.z_shuffled);
    }

    #[test]
    fn outer_gradient_matches_finite_differences() {
        let cfg = DistillConfig::default();
        let data = sample_binary_gaussian(0.5, 24, 5).unwrap();
        let batch = DistillBatch::from_dataset(&data, &(0..24).collect::<Vec<_>>());
        let rep = MlpModel::init(cfg.rep_spec.clone(), 6).unwrap();
        let head = MlpModel::init(cfg.pred_head_spec.clone(), 7).unwrap();
        let critic = Critic::init(&cfg.critic_spec, &cfg.z_embed_spec, 8).unwrap();
        let (_, rep_grad, head_grad) = objective_and_grad(&rep, &head, &critic, &batch, 1.5);
        let mut probe = rep.clone();
        let numeric = numeric_gradient(&rep.params, FD_STEP, |p| {
            probe.params.copy_from_slice(p);
            -objective(&probe, &head, &critic, &batch, 1.5).objective
        });
        let check = compare_gradients(&rep_grad, &numeric, 1e-4);
        assert!(check.passed, "{check:?}");
        let mut probe = head.clone();
        let numeric = numeric_gradient(&head.params, FD_STEP, |p| {
            probe.params.copy_from_slice(p);
            -objective(&rep, &probe, &critic, &batch, 1.5).objective
        });
        assert!(compare_gradients(&head_grad, &numeric, 1e-4).passed);
    }

    #[test]
    fn penalty_gradient_flows_through_representation() {
        let cfg = DistillConfig::default();
        let data = sample_binary_gaussian(0.5, 16, 9).unwrap();
        let batch = DistillBatch::from_dataset(&data, &(0..16).collect::<Vec<_>>());
        let rep = MlpModel::init(cfg.rep_spec.clone(), 1).unwrap();
        let head = MlpModel::init(cfg.pred_head_spec.clone(), 2).unwrap();
        let critic = Critic::init(&cfg.critic_spec, &cfg.z_embed_spec, 3).unwrap();
        let (_, g0, _) = objective_and_grad(&rep, &head, &critic, &batch, 0.0);
        let (_, g1, _) = objective_and_grad(&rep, &head, &critic, &batch, 1.0);
        assert!(g0.iter().zip(&g1).any(|(a, b)| (a - b).abs() > 1e-8));
    }

    #[test]
    fn history_csv_has_fixed_columns() {
        let rows = vec![
            HistoryRow { step: 0, loglik: -0.7, penalty: 0.1, objective: -0.8, val_objective: None },
            HistoryRow { step: 1, loglik: -0.6, penalty: 0.1, objective: -0.7, val_objective: Some(-0.75) },
        ];
        let mut out = Vec::new();
        write_history_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,loglik,penalty,objective,val_objective");
        assert_eq!(lines[1], "0,-0.7,0.1,-0.8,");
        assert_eq!(lines[2], "1,-0.6,0.1,-0.7,-0.75");
    }

    #[test]
    fn config_validation() {
        assert!(DistillConfig::default().validate().is_ok());
        let bad = DistillConfig { lambda: -1.0, ..DistillConfig::default() };
        assert!(bad.validate().is_err());
        let bad = DistillConfig { batch_size: 4, ..DistillConfig::default() };
        assert!(bad.validate().is_err());
    }
}
