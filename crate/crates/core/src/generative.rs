//! Linear-Gaussian model of `x | y, z` and resampling with `y` and `z`
//! drawn independently.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NurdError, Result};
use crate::families::{Dataset, Sample};
use crate::linalg::{cholesky_psd, solve_spd};
use crate::rng::{self, streams};

pub const MIN_FIT_SAMPLES: usize = 10;

/// `x = mean_coef · [1, y, z] + ε`, `ε ~ N(0, resid_cov)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearGaussianGen {
    pub mean_coef: [[f64; 3]; 2],
    pub resid_cov: [[f64; 2]; 2],
}

impl LinearGaussianGen {
    pub fn mean(&self, y: f64, z: f64) -> [f64; 2] {
        let f = [1.0, y, z];
        let row = |r: &[f64; 3]| r.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>();
        [row(&self.mean_coef[0]), row(&self.mean_coef[1])]
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Weighted least squares of `x` on `[1, y, z]`; residual covariance uses the
/// total weight as denominator (the maximum-likelihood estimate). With unit
/// weights this is ordinary least squares with denominator `n`.
pub fn fit_generator(data: &Dataset) -> Result<LinearGaussianGen> {
    if data.len() < MIN_FIT_SAMPLES {
        return Err(NurdError::invalid(format!(
            "fitting needs at least {MIN_FIT_SAMPLES} samples, got {}",
            data.len()
        )));
    }
    let mut gram = [0.0; 9];
    let mut cross = [[0.0; 3]; 2];
    let mut total = 0.0;
    for s in &data.samples {
        let f = [1.0, s.y, s.z[0]];
        for i in 0..3 {
            for j in 0..3 {
                gram[i * 3 + j] += s.w * f[i] * f[j];
            }
            for (c, x) in cross.iter_mut().zip(s.x) {
                c[i] += s.w * f[i] * x;
            }
        }
        total += s.w;
    }
    let mut mean_coef = [[0.0; 3]; 2];
    for (coef, rhs) in mean_coef.iter_mut().zip(&cross) {
        let sol = solve_spd(&gram, rhs, 3)
            .map_err(|_| NurdError::Singular("design matrix [1, y, z] is singular".into()))?;
        coef.copy_from_slice(&sol);
    }
    let gen = LinearGaussianGen {
        mean_coef,
        resid_cov: [[0.0; 2]; 2],
    };
    let mut cov = [[0.0; 2]; 2];
    for s in &data.samples {
        let m = gen.mean(s.y, s.z[0]);
        let r = [s.x[0] - m[0], s.x[1] - m[1]];
        for i in 0..2 {
            for j in 0..2 {
                cov[i][j] += s.w * r[i] * r[j];
            }
        }
    }
    for row in &mut cov {
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(LinearGaussianGen {
        resid_cov: cov,
        ..gen
    })
}

/// Draw `n` samples: `y` and `z` resampled independently from the (weighted)
/// empirical marginals of `data`, then `x` from the fitted conditional.
/// Output weights are all 1.
pub fn sample_randomized(
    gen: &LinearGaussianGen,
    data: &Dataset,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 {
        return Err(NurdError::invalid("sample count must be at least 1"));
    }
    let pick = WeightedIndex::new(data.weights())
        .map_err(|e| NurdError::invalid(format!("resampling weights: {e}")))?;
    let flat = [
        gen.resid_cov[0][0],
        gen.resid_cov[0][1],
        gen.resid_cov[1][0],
        gen.resid_cov[1][1],
    ];
    let l = cholesky_psd(&flat, 2, 0.0);
    let mut rng = rng::stream(seed, streams::RANDOMIZE);
    let samples = (0..n)
        .map(|_| {
            let y = data.samples[pick.sample(&mut rng)].y;
            let z = data.samples[pick.sample(&mut rng)].z[0];
            let e: [f64; 2] = [StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)];
            let m = gen.mean(y, z);
            let x = [m[0] + l[0] * e[0], m[1] + l[2] * e[0] + l[3] * e[1]];
            Sample::new(y, z, x)
        })
        .collect();
    Dataset::new(samples, data.spec.with_a(0.0), seed)
}
