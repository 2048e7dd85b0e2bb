//! Accuracy, log-likelihood and KL-based performance of predictors on
//! family samples.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    binary_rep_posterior, continuous_posterior_exact, gap_posterior, gaussian_kl, bernoulli_kl,
    prop3_posterior, GaussianPosterior, LinearRep,
};
use crate::distillation;
use crate::error::{NurdError, Result};
use crate::families::{normal_logpdf, sample, Dataset, FamilySpec};
use crate::nn::{sigmoid, MlpModel};

/// Predictive distribution of `y` at one covariate vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Prediction {
    /// `p(y = 1)`.
    Bernoulli(f64),
    Gaussian { mean: f64, var: f64 },
}

impl Prediction {
    pub fn log_likelihood(&self, y: f64) -> f64 {
        match *self {
            Prediction::Bernoulli(p) => {
                if y == 1.0 {
                    p.ln()
                } else {
                    (1.0 - p).ln()
                }
            }
            Prediction::Gaussian { mean, var } => normal_logpdf(y, mean, var),
        }
    }

    /// Bernoulli predictions threshold at 0.5 (ties predict 1); Gaussian
    /// predictions are scored by sign agreement with `y`.
    pub fn is_correct(&self, y: f64) -> bool {
        match *self {
            Prediction::Bernoulli(p) => (p >= 0.5) == (y == 1.0),
            Prediction::Gaussian { mean, .. } => (mean >= 0.0) == (y >= 0.0),
        }
    }
}

/// `KL(truth ‖ model)`, or `None` when the two are different kinds.
pub fn prediction_kl(truth: &Prediction, model: &Prediction) -> Option<f64> {
    match (*truth, *model) {
        (Prediction::Bernoulli(p), Prediction::Bernoulli(q)) => Some(bernoulli_kl(p, q)),
        (
            Prediction::Gaussian { mean: m1, var: v1 },
            Prediction::Gaussian { mean: m2, var: v2 },
        ) => Some(gaussian_kl(m1, v1, m2, v2)),
        _ => None,
    }
}

pub trait Predictor: Sync {
    fn predict(&self, x: &[f64; 2]) -> Prediction;
}

/// A distilled representation followed by its Bernoulli head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NurdModel {
    pub rep: MlpModel,
    pub head: MlpModel,
}

impl Predictor for NurdModel {
    fn predict(&self, x: &[f64; 2]) -> Prediction {
        Prediction::Bernoulli(distillation::predict(&self.rep, &self.head, x))
    }
}

/// A classifier reading `x` directly, its output a logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier(pub MlpModel);

impl Predictor for Classifier {
    fn predict(&self, x: &[f64; 2]) -> Prediction {
        Prediction::Bernoulli(sigmoid(self.0.forward(x).expect("classifier takes 2 inputs")))
    }
}

/// Ignores the covariates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub Prediction);

impl Predictor for Constant {
    fn predict(&self, _x: &[f64; 2]) -> Prediction {
        self.0
    }
}

/// `p(y = 1 | u x1 + v x2)` of the binary family at `a = 0`, where the
/// nuisance is independent of the label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomizedRepPredictor(pub LinearRep);

impl Predictor for RandomizedRepPredictor {
    fn predict(&self, x: &[f64; 2]) -> Prediction {
        Prediction::Bernoulli(binary_rep_posterior(self.0, self.0.apply(x)))
    }
}

/// The thresholded `r*(x) = x1 + x2` classifier of the binary family.
pub fn optimal_linear_predictor() -> RandomizedRepPredictor {
    RandomizedRepPredictor(LinearRep::new(1.0, 1.0))
}

/// Exact conditional `p(y | x)` of a family member.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticPredictor {
    Gaussian(GaussianPosterior),
    Table([[f64; 2]; 2]),
}

impl Predictor for AnalyticPredictor {
    fn predict(&self, x: &[f64; 2]) -> Prediction {
        match self {
            AnalyticPredictor::Gaussian(g) => Prediction::Gaussian {
                mean: g.mean(x),
                var: g.var,
            },
            AnalyticPredictor::Table(t) => {
                Prediction::Bernoulli(t[usize::from(x[0] != 0.0)][usize::from(x[1] != 0.0)])
            }
        }
    }
}

/// Ground-truth conditional for families that have one in closed form.
/// The binary Gaussian family returns `None`.
pub fn analytic_posterior(spec: &FamilySpec) -> Result<Option<AnalyticPredictor>> {
    Ok(match *spec {
        FamilySpec::ContinuousGaussian { a, sigma2, noise } => Some(AnalyticPredictor::Gaussian(
            continuous_posterior_exact(a, sigma2, noise)?,
        )),
        FamilySpec::PropGaussian { a } => Some(AnalyticPredictor::Gaussian(prop3_posterior(a))),
        FamilySpec::GapDiscrete { rho } => Some(AnalyticPredictor::Table(gap_posterior(&rho)?)),
        FamilySpec::BinaryGaussian { .. } => None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfReport {
    pub accuracy: f64,
    /// Weighted mean log-likelihood of the labels, in nats.
    pub mean_loglik: f64,
    /// `−E KL(truth ‖ model)` when the test family has a closed-form
    /// conditional.
    pub kl_perf: Option<f64>,
    pub n_eval: usize,
    /// Standard error of `accuracy`.
    pub stderr: f64,
    pub loglik_stderr: f64,
    pub kl_stderr: Option<f64>,
}

impl PerfReport {
    pub const CSV_HEADER: [&'static str; 7] = [
        "accuracy",
        "mean_loglik",
        "kl_perf",
        "n_eval",
        "stderr",
        "loglik_stderr",
        "kl_stderr",
    ];

    pub fn csv_fields(&self) -> [String; 7] {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        [
            self.accuracy.to_string(),
            self.mean_loglik.to_string(),
            opt(self.kl_perf),
            self.n_eval.to_string(),
            self.stderr.to_string(),
            self.loglik_stderr.to_string(),
            opt(self.kl_stderr),
        ]
    }
}

/// Weighted mean and its standard error `√(Σ w²(v − m)²) / Σ w`.
pub fn weighted_mean_se(values: &[f64], weights: &[f64]) -> (f64, f64) {
    let total: f64 = weights.iter().sum();
    let mean = values.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() / total;
    let ss: f64 = values
        .iter()
        .zip(weights)
        .map(|(v, w)| (w * (v - mean)).powi(2))
        .sum();
    (mean, ss.sqrt() / total)
}

pub fn evaluate(predictor: &dyn Predictor, test: &Dataset) -> Result<PerfReport> {
    if test.is_empty() {
        return Err(NurdError::Empty("test set".into()));
    }
    let truth = analytic_posterior(&test.spec)?;
    let n = test.len();
    let mut correct = Vec::with_capacity(n);
    let mut loglik = Vec::with_capacity(n);
    let mut neg_kl = Vec::with_capacity(n);
    for s in &test.samples {
        let p = predictor.predict(&s.x);
        correct.push(f64::from(u8::from(p.is_correct(s.y))));
        loglik.push(p.log_likelihood(s.y));
        if let Some(t) = &truth {
            if let Some(kl) = prediction_kl(&t.predict(&s.x), &p) {
                neg_kl.push(-kl);
            }
        }
    }
    let w = test.weights();
    let (accuracy, stderr) = weighted_mean_se(&correct, &w);
    let (mean_loglik, loglik_stderr) = weighted_mean_se(&loglik, &w);
    let (kl_perf, kl_stderr) = if neg_kl.len() == n {
        let (m, se) = weighted_mean_se(&neg_kl, &w);
        (Some(m), Some(se))
    } else {
        (None, None)
    };
    Ok(PerfReport {
        accuracy,
        mean_loglik,
        kl_perf,
        n_eval: n,
        stderr,
        loglik_stderr,
        kl_stderr,
    })
}

pub fn evaluate_nurd(rep: &MlpModel, head: &MlpModel, test: &Dataset) -> Result<PerfReport> {
    evaluate(
        &NurdModel {
            rep: rep.clone(),
            head: head.clone(),
        },
        test,
    )
}

/// Evaluate on a fresh sample of `family` at each coupling in `a_values`.
/// Every point draws with the same seed, so points differ only through `a`.
pub fn sweep(
    predictor: &dyn Predictor,
    family: &FamilySpec,
    a_values: &[f64],
    n_per_point: usize,
    seed: u64,
) -> Result<Vec<PerfReport>> {
    if a_values.is_empty() {
        return Err(NurdError::Empty("sweep grid".into()));
    }
    a_values
        .par_iter()
        .map(|&a| evaluate(predictor, &sample(&family.with_a(a), n_per_point, seed)?))
        .collect()
}

/// Plot-ready sweep rows `a,accuracy,mean_loglik,...`.
pub fn write_sweep_csv<W: Write>(a_values: &[f64], reports: &[PerfReport], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    let mut header = vec!["a"];
    header.extend(PerfReport::CSV_HEADER);
    wtr.write_record(&header)?;
    for (a, r) in a_values.iter().zip(reports) {
        let mut row = vec![a.to_string()];
        row.extend(r.csv_fields());
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Mean and standard error across independent runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

/// Seed-level summary; the standard error uses the `n − 1` sample variance
/// and is 0 for a single run.
pub fn seed_summary(values: &[f64]) -> SeedSummary {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    SeedSummary { mean, stderr, n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::{continuous_posterior, optimal_linear_accuracy, rel_perf};
    use crate::families::{sample_binary_gaussian, NoiseCoupling, GAP_EXAMPLE_RHO};

    #[test]
    fn constant_half_on_balanced_labels() {
        let data = sample_binary_gaussian(0.5, 20_000, 1).unwrap();
        let r = evaluate(&Constant(Prediction::Bernoulli(0.5)), &data).unwrap();
        // ties predict class 1, so accuracy is the class-1 frequency
        let ones = data.labels().iter().sum::<f64>() / 20_000.0;
        assert_eq!(r.accuracy, ones);
        assert!((r.accuracy - 0.5).abs() < 3.0 * r.stderr);
        assert!((r.mean_loglik + std::f64::consts::LN_2).abs() < 1e-12);
        assert!(r.kl_perf.is_none());
    }

    #[test]
    fn truth_has_zero_kl_against_itself() {
        for spec in [
            FamilySpec::ContinuousGaussian { a: 0.7, sigma2: 2.0, noise: NoiseCoupling::Shared },
            FamilySpec::ContinuousGaussian { a: -1.0, sigma2: 2.0, noise: NoiseCoupling::Independent },
            FamilySpec::PropGaussian { a: 1.5 },
            FamilySpec::GapDiscrete { rho: GAP_EXAMPLE_RHO },
        ] {
            let data = sample(&spec, 5000, 2).unwrap();
            let truth = analytic_posterior(&spec).unwrap().unwrap();
            let r = evaluate(&truth, &data).unwrap();
            assert!(r.kl_perf.unwrap().abs() <= 3.0 * r.kl_stderr.unwrap() + 1e-15);
        }
    }

    #[test]
    fn kl_perf_closes_loop_with_rel_perf() {
        // data from q_a, model q_b: kl_perf = −cross_kl(a, b) and
        // rel_perf = cross_kl − I, where I is the marginal predictor's KL.
        let (a, b) = (-1.0, 1.0);
        let spec = FamilySpec::ContinuousGaussian { a, sigma2: 2.0, noise: NoiseCoupling::Independent };
        let data = sample(&spec, 100_000, 3).unwrap();
        let model = AnalyticPredictor::Gaussian(continuous_posterior(b, 2.0).unwrap());
        let marginal = Constant(Prediction::Gaussian { mean: 0.0, var: 1.0 });
        let rm = evaluate(&model, &data).unwrap();
        let r0 = evaluate(&marginal, &data).unwrap();
        let estimate = r0.kl_perf.unwrap() - rm.kl_perf.unwrap();
        let se = (rm.kl_stderr.unwrap().powi(2) + r0.kl_stderr.unwrap().powi(2)).sqrt();
        let want = rel_perf(a, b, 2.0).unwrap();
        assert!((estimate - want).abs() < 3.0 * se, "{estimate} vs {want} (se {se})");
    }

    #[test]
    fn optimal_linear_accuracy_is_flat_in_a() {
        let reports = sweep(
            &optimal_linear_predictor(),
            &FamilySpec::BinaryGaussian { a: 0.0 },
            &[-0.9, 0.0, 0.9],
            50_000,
            4,
        )
        .unwrap();
        let want = optimal_linear_accuracy(0.0);
        for r in &reports {
            assert!((r.accuracy - want).abs() < 3.0 * r.stderr, "{}", r.accuracy);
        }
        for pair in reports.windows(2) {
            let se = (pair[0].stderr.powi(2) + pair[1].stderr.powi(2)).sqrt();
            assert!((pair[0].accuracy - pair[1].accuracy).abs() < 2.0 * se);
        }
    }

    #[test]
    fn constant_sweep_is_flat() {
        let reports = sweep(
            &Constant(Prediction::Bernoulli(0.4)),
            &FamilySpec::BinaryGaussian { a: 0.0 },
            &[-0.9, 0.0, 0.9],
            2000,
            5,
        )
        .unwrap();
        // same seed at every point: the labels, and so the scores, coincide
        assert!(reports.iter().all(|r| r.accuracy == reports[0].accuracy));
        assert!((reports[0].accuracy - 0.5).abs() < 3.0 * reports[0].stderr);
    }

    #[test]
    fn weighted_standard_error_matches_iid_formula() {
        let v = [1.0, 0.0, 1.0, 1.0];
        let (m, se) = weighted_mean_se(&v, &[1.0; 4]);
        assert_eq!(m, 0.75);
        assert!((se - (4.0 * 0.1875f64).sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn seed_summary_values() {
        let s = seed_summary(&[0.5, 0.7]);
        assert!((s.mean - 0.6).abs() < 1e-15);
        assert!((s.stderr - 0.1).abs() < 1e-12);
        assert_eq!(seed_summary(&[0.3]).stderr, 0.0);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        assert!(sweep(
            &Constant(Prediction::Bernoulli(0.5)),
            &FamilySpec::BinaryGaussian { a: 0.0 },
            &[],
            10,
            0
        )
        .is_err());
    }
}
