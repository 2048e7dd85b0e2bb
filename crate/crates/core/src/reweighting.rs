//! Importance weights that break the label–nuisance dependence.
//!
//! Each sample gets `w = p̂(y) / p̂(y | z)`, where `p̂(y | z)` comes from a
//! classifier that never saw the sample's fold. Weighting the training set
//! this way turns `p_tr(y, z)` into `p(y) p_tr(z)` while leaving
//! `p(x | y, z)` untouched.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::binary_posterior;
use crate::error::{NurdError, Result};
use crate::families::{weighted_label_marginal, Dataset};
use crate::nn::{train_binary_selected, MlpModel, MlpSpec, OptConfig, Split};
use crate::rng::{self, derive_seed, streams};

pub const WEIGHT_MIN: f64 = 1e-3;
pub const WEIGHT_MAX: f64 = 1e3;
/// Fraction of each fold's training rows held out for epoch selection.
pub const SELECTION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightEstimate {
    pub weights: Vec<f64>,
    pub fold_of: Vec<usize>,
    pub fold_models: Vec<MlpModel>,
    /// Weighted empirical `p̂(y = 1)` of the input data.
    pub label_marginal: f64,
    /// Number of weights pushed back into `[WEIGHT_MIN, WEIGHT_MAX]`.
    pub clamped: usize,
}

impl WeightEstimate {
    /// Attach the weights to a copy of `data`.
    pub fn apply(&self, data: &Dataset) -> Result<Dataset> {
        data.with_weights(&self.weights)
    }

    /// Dataset CSV with the weights appended as a `weight` column.
    pub fn write_csv<W: Write>(&self, data: &Dataset, out: W) -> Result<()> {
        data.write_csv_with_column(out, "weight", &self.weights)
    }
}

/// Seeded permutation cut into `k` contiguous blocks; the last fold takes
/// the remainder.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 || n < k {
        return Err(NurdError::invalid(format!(
            "cannot split {n} samples into {k} folds"
        )));
    }
    let size = n / k;
    let order = rng::permutation(n, &mut rng::stream(seed, streams::FOLDS));
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = (pos / size).min(k - 1);
    }
    Ok(fold_of)
}

/// Random `(train, held_out)` split of `idx` with `fraction` held out.
pub(crate) fn holdout_split(idx: &[usize], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let order = rng::permutation(idx.len(), &mut rng::stream(seed, streams::SPLIT));
    let n_out = ((idx.len() as f64) * fraction).round() as usize;
    let held: Vec<usize> = order[..n_out].iter().map(|&p| idx[p]).collect();
    let kept: Vec<usize> = order[n_out..].iter().map(|&p| idx[p]).collect();
    (kept, held)
}

fn weight_from_posterior(label: f64, p1: f64, marginal: f64) -> f64 {
    if label == 1.0 {
        marginal / p1
    } else {
        (1.0 - marginal) / (1.0 - p1)
    }
}

/// Cross-fitted weights `p̂(y) / p_α(y | z)`, multiplied into the data's own
/// sample weights.
pub fn crossfit_weights(
    data: &Dataset,
    k: usize,
    spec: &MlpSpec,
    opt: &OptConfig,
) -> Result<WeightEstimate> {
    if k < 2 {
        return Err(NurdError::invalid("cross-fitting needs at least 2 folds"));
    }
    if data.len() < 10 * k {
        return Err(NurdError::invalid(format!(
            "cross-fitting {k} folds needs at least {} samples, got {}",
            10 * k,
            data.len()
        )));
    }
    if spec.input_dim() != data.nuisances().cols() {
        return Err(NurdError::DimensionMismatch {
            expected: data.nuisances().cols(),
            got: spec.input_dim(),
        });
    }
    opt.validate()?;
    let labels = data.labels();
    let base = data.weights();
    let marginal = weighted_label_marginal(&labels, &base)?;
    let z = data.nuisances();
    let fold_of = fold_assignment(data.len(), k, opt.seed)?;

    let fold_models = (0..k)
        .into_par_iter()
        .map(|fold| {
            let others: Vec<usize> = (0..data.len()).filter(|&i| fold_of[i] != fold).collect();
            let fold_seed = derive_seed(opt.seed, fold as u64);
            let (train_idx, val_idx) = holdout_split(&others, SELECTION_FRACTION, fold_seed);
            let pick = |idx: &[usize]| {
                (
                    z.select_rows(idx),
                    idx.iter().map(|&i| labels[i]).collect::<Vec<_>>(),
                    idx.iter().map(|&i| base[i]).collect::<Vec<_>>(),
                )
            };
            let (zt, yt, wt) = pick(&train_idx);
            let (zv, yv, wv) = pick(&val_idx);
            let init = MlpModel::init(spec.clone(), fold_seed)?;
            let (model, _) = train_binary_selected(
                &init,
                Split { inputs: &zt, labels: &yt, weights: &wt },
                Split { inputs: &zv, labels: &yv, weights: &wv },
                &opt.with_seed(fold_seed),
            )?;
            Ok(model)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut clamped = 0;
    let weights = (0..data.len())
        .map(|i| {
            let p1 = fold_models[fold_of[i]].predict_proba(z.row(i))?;
            let raw = weight_from_posterior(labels[i], p1, marginal);
            let w = raw.clamp(WEIGHT_MIN, WEIGHT_MAX);
            if w != raw {
                clamped += 1;
            }
            Ok(w * base[i])
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(WeightEstimate {
        weights,
        fold_of,
        fold_models,
        label_marginal: marginal,
        clamped,
    })
}

fn class_masses(labels: &[f64], weights: &[f64]) -> (f64, f64) {
    labels
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(m0, m1), (&y, &w)| {
            if y == 1.0 {
                (m0, m1 + w)
            } else {
                (m0 + w, m1)
            }
        })
}

/// Rescale each label class by `target / current` so the weighted label
/// marginal equals `target`; total mass is unchanged.
fn rescale_classes(labels: &[f64], weights: &[f64], target: f64) -> Result<Vec<f64>> {
    let (m0, m1) = class_masses(labels, weights);
    if m0 <= 0.0 || m1 <= 0.0 {
        return Err(NurdError::Empty("a label class has zero total weight".into()));
    }
    let total = m0 + m1;
    let current = m1 / total;
    let (f0, f1) = ((1.0 - target) / (1.0 - current), target / current);
    Ok(labels
        .iter()
        .zip(weights)
        .map(|(&y, &w)| if y == 1.0 { w * f1 } else { w * f0 })
        .collect())
}

/// Re-weight per class so the weighted label marginal matches the estimate's
/// `label_marginal`.
pub fn renormalize_marginal(est: &WeightEstimate, labels: &[f64]) -> Result<WeightEstimate> {
    if labels.len() != est.weights.len() {
        return Err(NurdError::DimensionMismatch {
            expected: est.weights.len(),
            got: labels.len(),
        });
    }
    Ok(WeightEstimate {
        weights: rescale_classes(labels, &est.weights, est.label_marginal)?,
        ..est.clone()
    })
}

/// Multiply sample weights by `p_te(y) / p_tr(y)` so the weighted label
/// marginal becomes `target_marginal`.
pub fn label_shift_adjust(data: &Dataset, target_marginal: f64) -> Result<Dataset> {
    if !(target_marginal > 0.0 && target_marginal < 1.0) {
        return Err(NurdError::invalid("target marginal must lie in (0, 1)"));
    }
    let weights = rescale_classes(&data.labels(), &data.weights(), target_marginal)?;
    data.with_weights(&weights)
}

/// Weights from the true posterior of the binary Gaussian family at coupling
/// `a`, with label marginal `marginal`.
pub fn oracle_weights(data: &Dataset, a: f64, marginal: f64) -> Vec<f64> {
    data.samples
        .iter()
        .map(|s| weight_from_posterior(s.y, binary_posterior(a, s.z[0]), marginal))
        .collect()
}

/// Weighted Pearson correlation.
pub fn weighted_corr(x: &[f64], y: &[f64], w: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    let mean = |v: &[f64]| v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for ((&a, &b), &wi) in x.iter().zip(y).zip(w) {
        sxy += wi * (a - mx) * (b - my);
        sxx += wi * (a - mx) * (a - mx);
        syy += wi * (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::sample_binary_gaussian;
    use crate::nn::OutputKind;

    fn weight_spec() -> MlpSpec {
        MlpSpec::new(&[1, 16, 1], OutputKind::Logit).unwrap()
    }

    #[test]
    fn folds_partition_evenly() {
        let f = fold_assignment(10_000, 5, 3).unwrap();
        for k in 0..5 {
            assert_eq!(f.iter().filter(|&&x| x == k).count(), 2000);
        }
        let g = fold_assignment(103, 5, 3).unwrap();
        assert_eq!(g.iter().filter(|&&x| x == 4).count(), 23);
        assert_eq!(fold_assignment(10, 5, 1).unwrap(), fold_assignment(10, 5, 1).unwrap());
        assert!(fold_assignment(10, 1, 1).is_err());
    }

    #[test]
    fn randomized_data_gets_near_unit_weights() {
        let data = sample_binary_gaussian(0.0, 10_000, 21).unwrap();
        let est = crossfit_weights(&data, 5, &weight_spec(), &OptConfig::default()).unwrap();
        // Bulk within [0.8, 1.25]; the few rows outside sit in the |z| > 2.5
        // tails where the ReLU logit extrapolates linearly.
        let outside: Vec<(f64, f64)> = data
            .samples
            .iter()
            .zip(&est.weights)
            .filter(|(_, w)| !(0.8..=1.25).contains(*w))
            .map(|(s, &w)| (s.z[0], w))
            .collect();
        assert!(outside.len() <= 10, "{} weights outside [0.8, 1.25]", outside.len());
        for (z, w) in outside {
            assert!(z.abs() > 2.5 && (0.7..=1.5).contains(&w), "weight {w} at z {z}");
        }
        assert_eq!(est.clamped, 0);
    }

    #[test]
    fn estimated_weights_track_oracle() {
        let data = sample_binary_gaussian(0.5, 10_000, 22).unwrap();
        let est = crossfit_weights(&data, 5, &weight_spec(), &OptConfig::default()).unwrap();
        let oracle = oracle_weights(&data, 0.5, 0.5);
        let mae = est
            .weights
            .iter()
            .zip(&oracle)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / oracle.len() as f64;
        assert!(mae < 0.1, "mae {mae}");
        let corr_before = weighted_corr(&data.labels(), &data.nuisance_column(), &vec![1.0; 10_000]);
        let corr_after = weighted_corr(&data.labels(), &data.nuisance_column(), &est.weights);
        assert!(corr_before > 0.3);
        assert!(corr_after.abs() < 0.05, "corr {corr_after}");
    }

    #[test]
    fn crossfit_resists_memorization() {
        let data = sample_binary_gaussian(0.9, 2_000, 23).unwrap();
        let big = MlpSpec::new(&[1, 64, 64, 1], OutputKind::Logit).unwrap();
        let opt = OptConfig {
            epochs: 50,
            batch_size: 200,
            ..OptConfig::default()
        };
        let est = crossfit_weights(&data, 5, &big, &opt).unwrap();
        let m = est.weights.iter().sum::<f64>() / 2000.0;
        let var = est.weights.iter().map(|w| (w - m).powi(2)).sum::<f64>() / 2000.0;
        assert!(var > 0.01, "variance {var}");
    }

    fn toy_estimate(weights: Vec<f64>, marginal: f64) -> WeightEstimate {
        let n = weights.len();
        WeightEstimate {
            weights,
            fold_of: vec![0; n],
            fold_models: vec![],
            label_marginal: marginal,
            clamped: 0,
        }
    }

    #[test]
    fn renormalization_algebra() {
        let labels = [1.0, 0.0, 1.0, 0.0];
        let est = toy_estimate(vec![1.0, 2.0, 3.0, 2.0], 0.5);
        let same = renormalize_marginal(&est, &labels).unwrap();
        for (a, b) in same.weights.iter().zip(&est.weights) {
            assert!((a - b).abs() < 1e-12);
        }
        // class 1 carries twice the mass of class 0
        let doubled = toy_estimate(vec![2.0, 1.0, 2.0, 1.0], 0.5);
        let fixed = renormalize_marginal(&doubled, &labels).unwrap();
        assert!((fixed.weights[0] / fixed.weights[1] - 1.0).abs() < 1e-12);
        assert!((fixed.weights.iter().sum::<f64>() - 6.0).abs() < 1e-12);
        let m = weighted_label_marginal(&labels, &fixed.weights).unwrap();
        assert!((m - 0.5).abs() < 1e-12);
        // marginal 0.6 under the weights, 0.5 targeted
        let six = toy_estimate(vec![3.0, 2.0, 3.0, 2.0], 0.5);
        let out = renormalize_marginal(&six, &labels).unwrap();
        assert!((out.weights[0] - 3.0 * 0.5 / 0.6).abs() < 1e-12);
        assert!((out.weights[1] - 2.0 * 0.5 / 0.4).abs() < 1e-12);
        assert!(renormalize_marginal(&toy_estimate(vec![1.0; 2], 0.5), &[1.0, 1.0]).is_err());
    }

    #[test]
    fn label_shift_ratios() {
        let data = sample_binary_gaussian(0.5, 1000, 4).unwrap();
        let p = data.label_marginal().unwrap();
        let same = label_shift_adjust(&data, p).unwrap();
        for (a, b) in same.weights().iter().zip(data.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        let shifted = label_shift_adjust(&data, 0.75).unwrap();
        for (s, orig) in shifted.samples.iter().zip(&data.samples) {
            let want = if s.y == 1.0 { 0.75 / p } else { 0.25 / (1.0 - p) };
            assert!((s.w / orig.w - want).abs() < 1e-12);
        }
        assert!((shifted.label_marginal().unwrap() - 0.75).abs() < 1e-12);
        assert!(label_shift_adjust(&data, 1.0).is_err());
    }

    #[test]
    fn label_shift_composes_with_crossfit() {
        let data = sample_binary_gaussian(0.5, 1000, 5).unwrap();
        let shifted = label_shift_adjust(&data, 0.7).unwrap();
        let opt = OptConfig {
            epochs: 10,
            batch_size: 200,
            ..OptConfig::default()
        };
        let est = crossfit_weights(&shifted, 5, &weight_spec(), &opt).unwrap();
        let fixed = renormalize_marginal(&est, &shifted.labels()).unwrap();
        let m = weighted_label_marginal(&shifted.labels(), &fixed.weights).unwrap();
        assert!((m - 0.7).abs() < 1e-12);
    }

    #[test]
    fn oracle_weights_depend_on_z_only_through_posterior() {
        let data = sample_binary_gaussian(0.5, 500, 6).unwrap();
        let w = oracle_weights(&data, 0.5, 0.5);
        for (s, wi) in data.samples.iter().zip(&w) {
            let p = binary_posterior(0.5, s.z[0]);
            let py = if s.y == 1.0 { p } else { 1.0 - p };
            assert!((wi * py - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_small_or_degenerate_inputs() {
        let data = sample_binary_gaussian(0.5, 40, 1).unwrap();
        assert!(crossfit_weights(&data, 5, &weight_spec(), &OptConfig::default()).is_err());
        assert!(crossfit_weights(&data, 1, &weight_spec(), &OptConfig::default()).is_err());
    }
}
