//! Seeded samplers for the four synthetic nuisance-varying families and the
//! [`Dataset`] container they produce.
//!
//! Every family keeps `p(y)` and `p(x | y, z)` fixed and varies only the
//! nuisance-label coupling `p_a(z | y)`:
//!
//! | family               | y            | z | x |
//! |----------------------|--------------|---|---|
//! | `BinaryGaussian`     | Bernoulli(½) | N(a(2y−1), 1) | [N(y−z, 9), N(y+z, 0.01)] |
//! | `ContinuousGaussian` | N(0, 1)      | N(ay, ½)      | [N(y−z, σ²−½), N(y+z, ½)] |
//! | `PropGaussian`       | N(0, 1)      | N(ay, ½)      | [y + N(0,1), z + N(0,½)] |
//! | `GapDiscrete`        | Bernoulli(½) | N(0, 1)       | [b, 1[z ≥ 0]], b ~ Bernoulli(ρ(y, 1[z ≥ 0])) |
//!
//! Normal parameters above are (mean, variance).

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{NurdError, Result};
use crate::linalg::Matrix;
use crate::rng::{self, streams, StreamRng};

pub const NUISANCE_DIM: usize = 1;
pub const COVARIATE_DIM: usize = 2;

pub const CSV_HEADER: [&str; 5] = ["y", "z", "x1", "x2", "w"];

fn default_sigma2() -> f64 {
    2.0
}

/// How the two covariates of the continuous family share noise.
///
/// `Shared` samples the generator literally: z's own noise enters both
/// `x1 = y − z + …` and `x2 = y + z + …`, so given `y` the covariates are
/// negatively correlated.
///
/// `Independent` samples `x = [(1−a)y + σ ε1, (1+a)y + ε2]` with independent
/// unit normals, which is the Gaussian joint whose posterior and performance
/// gaps have the closed forms in [`crate::analytic`]. It matches `Shared` in
/// every per-coordinate conditional given `y` but is not itself a
/// nuisance-varying family (`p(x | y, z)` moves with `a`), so it is only used
/// to check those closed forms by simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseCoupling {
    #[default]
    Shared,
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum FamilySpec {
    ContinuousGaussian {
        a: f64,
        #[serde(default = "default_sigma2")]
        sigma2: f64,
        #[serde(default)]
        noise: NoiseCoupling,
    },
    BinaryGaussian {
        a: f64,
    },
    PropGaussian {
        a: f64,
    },
    /// `rho[y][s]` is `p(b = 1 | y, 1[z ≥ 0] = s)`.
    GapDiscrete {
        rho: [[f64; 2]; 2],
    },
}

/// The `ρ` table of the discrete gap example: `ρ(·, 1) = 0.5`,
/// `ρ(0, 0) = 0.1`, `ρ(1, 0) = 0.9`.
pub const GAP_EXAMPLE_RHO: [[f64; 2]; 2] = [[0.1, 0.5], [0.9, 0.5]];

impl FamilySpec {
    pub fn continuous(a: f64, sigma2: f64) -> Self {
        FamilySpec::ContinuousGaussian {
            a,
            sigma2,
            noise: NoiseCoupling::Shared,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FamilySpec::ContinuousGaussian { a, sigma2, .. } => {
                check_finite("a", a)?;
                if !(sigma2 > 0.5) || !sigma2.is_finite() {
                    return Err(NurdError::invalid(format!(
                        "sigma2 must exceed 0.5 (x1 noise variance is sigma2 - 0.5), got {sigma2}"
                    )));
                }
                Ok(())
            }
            FamilySpec::BinaryGaussian { a } | FamilySpec::PropGaussian { a } => {
                check_finite("a", a)
            }
            FamilySpec::GapDiscrete { rho } => check_rho(&rho),
        }
    }

    /// Nuisance-label coupling parameter, if the family has one.
    pub fn a(&self) -> Option<f64> {
        match *self {
            FamilySpec::ContinuousGaussian { a, .. }
            | FamilySpec::BinaryGaussian { a }
            | FamilySpec::PropGaussian { a } => Some(a),
            FamilySpec::GapDiscrete { .. } => None,
        }
    }

    /// Same family at a different coupling. The gap family has no coupling
    /// parameter and is returned unchanged.
    pub fn with_a(&self, new_a: f64) -> FamilySpec {
        let mut out = self.clone();
        match &mut out {
            FamilySpec::ContinuousGaussian { a, .. }
            | FamilySpec::BinaryGaussian { a }
            | FamilySpec::PropGaussian { a } => *a = new_a,
            FamilySpec::GapDiscrete { .. } => {}
        }
        out
    }

    pub fn has_binary_labels(&self) -> bool {
        matches!(
            self,
            FamilySpec::BinaryGaussian { .. } | FamilySpec::GapDiscrete { .. }
        )
    }

    pub fn name(&self) -> &'static str {
        match self {
            FamilySpec::ContinuousGaussian { .. } => "continuous_gaussian",
            FamilySpec::BinaryGaussian { .. } => "binary_gaussian",
            FamilySpec::PropGaussian { .. } => "prop_gaussian",
            FamilySpec::GapDiscrete { .. } => "gap_discrete",
        }
    }

    /// Joint log-density `log p_a(y, z, x)` of one sample (mass for discrete
    /// coordinates, density for continuous ones). `-inf` off the support.
    pub fn log_density(&self, s: &Sample) -> f64 {
        let (y, z, x) = (s.y, s.z[0], s.x);
        match *self {
            FamilySpec::BinaryGaussian { a } => {
                if y != 0.0 && y != 1.0 {
                    return f64::NEG_INFINITY;
                }
                0.5f64.ln()
                    + normal_logpdf(z, a * (2.0 * y - 1.0), 1.0)
                    + normal_logpdf(x[0], y - z, 9.0)
                    + normal_logpdf(x[1], y + z, 0.01)
            }
            FamilySpec::ContinuousGaussian { a, sigma2, noise } => {
                let head = normal_logpdf(y, 0.0, 1.0) + normal_logpdf(z, a * y, 0.5);
                match noise {
                    NoiseCoupling::Shared => {
                        head + normal_logpdf(x[0], y - z, sigma2 - 0.5)
                            + normal_logpdf(x[1], y + z, 0.5)
                    }
                    NoiseCoupling::Independent => {
                        head + normal_logpdf(x[0], (1.0 - a) * y, sigma2)
                            + normal_logpdf(x[1], (1.0 + a) * y, 1.0)
                    }
                }
            }
            FamilySpec::PropGaussian { a } => {
                normal_logpdf(y, 0.0, 1.0)
                    + normal_logpdf(z, a * y, 0.5)
                    + normal_logpdf(x[0], y, 1.0)
                    + normal_logpdf(x[1], z, 0.5)
            }
            FamilySpec::GapDiscrete { rho } => {
                if (y != 0.0 && y != 1.0) || (x[0] != 0.0 && x[0] != 1.0) {
                    return f64::NEG_INFINITY;
                }
                let side = if z >= 0.0 { 1.0 } else { 0.0 };
                if x[1] != side {
                    return f64::NEG_INFINITY;
                }
                let p = rho[y as usize][side as usize];
                let pb = if x[0] == 1.0 { p } else { 1.0 - p };
                0.5f64.ln() + normal_logpdf(z, 0.0, 1.0) + pb.ln()
            }
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(NurdError::invalid(format!("{name} must be finite, got {v}")))
    }
}

pub(crate) fn check_rho(rho: &[[f64; 2]; 2]) -> Result<()> {
    for (y, row) in rho.iter().enumerate() {
        for (s, &p) in row.iter().enumerate() {
            if !(p > 0.0 && p < 1.0) {
                return Err(NurdError::invalid(format!(
                    "rho[{y}][{s}] must lie strictly inside (0, 1), got {p}"
                )));
            }
        }
    }
    Ok(())
}

pub fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * (2.0 * PI * var).ln() - d * d / (2.0 * var)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub y: f64,
    pub z: [f64; NUISANCE_DIM],
    pub x: [f64; COVARIATE_DIM],
    pub w: f64,
}

impl Sample {
    pub fn new(y: f64, z: f64, x: [f64; COVARIATE_DIM]) -> Self {
        Sample {
            y,
            z: [z],
            x,
            w: 1.0,
        }
    }
}

/// Samples plus the family and seed they were drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub spec: FamilySpec,
    pub seed: u64,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>, spec: FamilySpec, seed: u64) -> Result<Self> {
        if samples.is_empty() {
            return Err(NurdError::Empty("dataset has no samples".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(s.w > 0.0) || !s.w.is_finite())
        {
            return Err(NurdError::invalid(format!(
                "sample {i} has non-positive or non-finite weight {}",
                s.w
            )));
        }
        Ok(Dataset {
            samples,
            spec,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.y).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.w).collect()
    }

    pub fn nuisance_column(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.z[0]).collect()
    }

    /// `n × 2` covariate matrix.
    pub fn covariates(&self) -> Matrix {
        let data = self.samples.iter().flat_map(|s| s.x).collect();
        Matrix::from_vec(self.len(), COVARIATE_DIM, data).expect("shape is consistent")
    }

    /// `n × 1` nuisance matrix.
    pub fn nuisances(&self) -> Matrix {
        let data = self.samples.iter().flat_map(|s| s.z).collect();
        Matrix::from_vec(self.len(), NUISANCE_DIM, data).expect("shape is consistent")
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Dataset> {
        let samples = idx.iter().map(|&i| self.samples[i]).collect();
        Dataset::new(samples, self.spec.clone(), self.seed)
    }

    /// Copy with the weight column replaced.
    pub fn with_weights(&self, weights: &[f64]) -> Result<Dataset> {
        if weights.len() != self.len() {
            return Err(NurdError::DimensionMismatch {
                expected: self.len(),
                got: weights.len(),
            });
        }
        let samples = self
            .samples
            .iter()
            .zip(weights)
            .map(|(s, &w)| Sample { w, ..*s })
            .collect();
        Dataset::new(samples, self.spec.clone(), self.seed)
    }

    /// Weighted empirical `p(y = 1)`; labels must be binary.
    pub fn label_marginal(&self) -> Result<f64> {
        weighted_label_marginal(&self.labels(), &self.weights())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        self.write_csv_inner(out, None)
    }

    /// Dataset rows with one extra column appended (e.g. estimated weights).
    pub fn write_csv_with_column<W: Write>(
        &self,
        out: W,
        name: &str,
        values: &[f64],
    ) -> Result<()> {
        if values.len() != self.len() {
            return Err(NurdError::DimensionMismatch {
                expected: self.len(),
                got: values.len(),
            });
        }
        self.write_csv_inner(out, Some((name, values)))
    }

    fn write_csv_inner<W: Write>(&self, out: W, extra: Option<(&str, &[f64])>) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = CSV_HEADER.to_vec();
        if let Some((name, _)) = extra {
            header.push(name);
        }
        wtr.write_record(&header)?;
        for (i, s) in self.samples.iter().enumerate() {
            let mut row = vec![
                fmt_f64(s.y),
                fmt_f64(s.z[0]),
                fmt_f64(s.x[0]),
                fmt_f64(s.x[1]),
                fmt_f64(s.w),
            ];
            if let Some((_, values)) = extra {
                row.push(fmt_f64(values[i]));
            }
            wtr.write_record(&row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Read the `y,z,x1,x2,w` format. The CSV carries no provenance, so the
    /// family and seed are supplied by the caller.
    pub fn read_csv<R: Read>(input: R, spec: FamilySpec, seed: u64) -> Result<Dataset> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().take(CSV_HEADER.len()).collect();
        if cols != CSV_HEADER {
            return Err(NurdError::Parse(format!(
                "expected header starting with {}, got {}",
                CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut samples = Vec::new();
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let mut v = [0.0; 5];
            for (j, slot) in v.iter_mut().enumerate() {
                let field = rec.get(j).ok_or_else(|| {
                    NurdError::Parse(format!("row {}: missing column {}", line + 1, j))
                })?;
                *slot = field.trim().parse().map_err(|e| {
                    NurdError::Parse(format!("row {}: bad number {field:?}: {e}", line + 1))
                })?;
            }
            samples.push(Sample {
                y: v[0],
                z: [v[1]],
                x: [v[2], v[3]],
                w: v[4],
            });
        }
        Dataset::new(samples, spec, seed)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(BufWriter::new(File::create(path)?))
    }

    pub fn load_csv(path: impl AsRef<Path>, spec: FamilySpec, seed: u64) -> Result<Dataset> {
        Dataset::read_csv(BufReader::new(File::open(path)?), spec, seed)
    }
}

/// 17 significant digits: enough for an exact f64 round trip.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub(crate) fn weighted_label_marginal(labels: &[f64], weights: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    let mut ones = 0.0;
    for (&y, &w) in labels.iter().zip(weights) {
        if y != 0.0 && y != 1.0 {
            return Err(NurdError::invalid(format!("label {y} is not binary")));
        }
        total += w;
        if y == 1.0 {
            ones += w;
        }
    }
    if total <= 0.0 {
        return Err(NurdError::Empty("no label mass".into()));
    }
    Ok(ones / total)
}

fn std_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn check_count(n: usize) -> Result<()> {
    if n == 0 {
        Err(NurdError::invalid("sample count must be at least 1"))
    } else {
        Ok(())
    }
}

pub fn sample_binary_gaussian(a: f64, n: usize, seed: u64) -> Result<Dataset> {
    let spec = FamilySpec::BinaryGaussian { a };
    spec.validate()?;
    check_count(n)?;
    let mut rng = rng::stream(seed, streams::SAMPLER);
    let samples = (0..n)
        .map(|_| {
            let y = if rng.random_bool(0.5) { 1.0 } else { 0.0 };
            let z = a * (2.0 * y - 1.0) + std_normal(&mut rng);
            let x1 = y - z + 3.0 * std_normal(&mut rng);
            let x2 = y + z + 0.1 * std_normal(&mut rng);
            Sample::new(y, z, [x1, x2])
        })
        .collect();
    Dataset::new(samples, spec, seed)
}

pub fn sample_continuous_gaussian(a: f64, sigma2: f64, n: usize, seed: u64) -> Result<Dataset> {
    sample_continuous_gaussian_with(a, sigma2, NoiseCoupling::Shared, n, seed)
}

pub fn sample_continuous_gaussian_with(
    a: f64,
    sigma2: f64,
    noise: NoiseCoupling,
    n: usize,
    seed: u64,
) -> Result<Dataset> {
    let spec = FamilySpec::ContinuousGaussian { a, sigma2, noise };
    spec.validate()?;
    check_count(n)?;
    let half = 0.5f64.sqrt();
    let x1_sd = (sigma2 - 0.5).sqrt();
    let sigma = sigma2.sqrt();
    let mut rng = rng::stream(seed, streams::SAMPLER);
    let samples = (0..n)
        .map(|_| {
            let y = std_normal(&mut rng);
            let z = a * y + half * std_normal(&mut rng);
            let (e1, e2) = (std_normal(&mut rng), std_normal(&mut rng));
            let x = match noise {
                NoiseCoupling::Shared => [y - z + x1_sd * e1, y + z + half * e2],
                NoiseCoupling::Independent => [(1.0 - a) * y + sigma * e1, (1.0 + a) * y + e2],
            };
            Sample::new(y, z, x)
        })
        .collect();
    Dataset::new(samples, spec, seed)
}

pub fn sample_prop_family(a: f64, n: usize, seed: u64) -> Result<Dataset> {
    let spec = FamilySpec::PropGaussian { a };
    spec.validate()?;
    check_count(n)?;
    let half = 0.5f64.sqrt();
    let mut rng = rng::stream(seed, streams::SAMPLER);
    let samples = (0..n)
        .map(|_| {
            let y = std_normal(&mut rng);
            let z = a * y + half * std_normal(&mut rng);
            let x1 = y + std_normal(&mut rng);
            let x2 = z + half * std_normal(&mut rng);
            Sample::new(y, z, [x1, x2])
        })
        .collect();
    Dataset::new(samples, spec, seed)
}

pub fn sample_gap_family(rho: [[f64; 2]; 2], n: usize, seed: u64) -> Result<Dataset> {
    let spec = FamilySpec::GapDiscrete { rho };
    spec.validate()?;
    check_count(n)?;
    let mut rng = rng::stream(seed, streams::SAMPLER);
    let samples = (0..n)
        .map(|_| {
            let y = if rng.random_bool(0.5) { 1 } else { 0 };
            let z = std_normal(&mut rng);
            let side = usize::from(z >= 0.0);
            let b = rng.random_bool(rho[y][side]);
            Sample::new(y as f64, z, [f64::from(u8::from(b)), side as f64])
        })
        .collect();
    Dataset::new(samples, spec, seed)
}

/// Dispatch on the family descriptor.
pub fn sample(spec: &FamilySpec, n: usize, seed: u64) -> Result<Dataset> {
    match *spec {
        FamilySpec::ContinuousGaussian { a, sigma2, noise } => {
            sample_continuous_gaussian_with(a, sigma2, noise, n, seed)
        }
        FamilySpec::BinaryGaussian { a } => sample_binary_gaussian(a, n, seed),
        FamilySpec::PropGaussian { a } => sample_prop_family(a, n, seed),
        FamilySpec::GapDiscrete { rho } => sample_gap_family(rho, n, seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn cov(a: &[f64], b: &[f64]) -> f64 {
        let (ma, mb) = (mean(a), mean(b));
        a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        cov(a, b) / (cov(a, a) * cov(b, b)).sqrt()
    }

    fn column(d: &Dataset, j: usize) -> Vec<f64> {
        d.samples.iter().map(|s| s.x[j]).collect()
    }

    #[test]
    fn binary_training_set_shape() {
        let d = sample_binary_gaussian(0.5, 10_000, 0).unwrap();
        assert_eq!(d.len(), 10_000);
        assert!(d.samples.iter().all(|s| s.w == 1.0));
        assert!(d.samples.iter().all(|s| s.y == 0.0 || s.y == 1.0));
    }

    #[test]
    fn binary_uncoupled_has_no_label_nuisance_correlation() {
        let d = sample_binary_gaussian(0.0, 100_000, 1).unwrap();
        assert!(corr(&d.labels(), &d.nuisance_column()).abs() < 0.02);
    }

    #[test]
    fn binary_conditional_nuisance_mean() {
        let d = sample_binary_gaussian(0.5, 1_000_000, 2).unwrap();
        let z1: Vec<f64> = d
            .samples
            .iter()
            .filter(|s| s.y == 1.0)
            .map(|s| s.z[0])
            .collect();
        assert!((mean(&z1) - 0.5).abs() < 0.01);
    }

    #[test]
    fn continuous_rejects_small_sigma2() {
        assert!(sample_continuous_gaussian(1.0, 0.5, 10, 0).is_err());
        assert!(sample_continuous_gaussian(1.0, 0.3, 10, 0).is_err());
    }

    #[test]
    fn continuous_uncoupled_covariance() {
        let d = sample_continuous_gaussian(0.0, 2.0, 1_000_000, 3).unwrap();
        assert!(cov(&d.labels(), &d.nuisance_column()).abs() < 0.005);
    }

    #[test]
    fn continuous_first_covariate_variance() {
        // x1 = (1-a) y - sqrt(.5) delta + sqrt(1.5) e1; at a=1 Var = 0.5 + 1.5 = 2
        let d = sample_continuous_gaussian(1.0, 2.0, 1_000_000, 4).unwrap();
        let x1 = column(&d, 0);
        assert!((cov(&x1, &x1) / 2.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn prop_family_uncoupled_second_covariate() {
        let d = sample_prop_family(0.0, 1_000_000, 5).unwrap();
        assert!(cov(&column(&d, 1), &d.labels()).abs() < 0.005);
    }

    #[test]
    fn prop_family_covariance_matrix() {
        let a = 1.0;
        let d = sample_prop_family(a, 1_000_000, 6).unwrap();
        let cols = [d.labels(), column(&d, 0), column(&d, 1)];
        let want = [[1.0, 1.0, a], [1.0, 2.0, a], [a, a, a * a + 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                let got = cov(&cols[i], &cols[j]);
                assert!(
                    (got - want[i][j]).abs() <= 0.01 * want[i][j].abs(),
                    "Σ[{i}][{j}] = {got}, want {}",
                    want[i][j]
                );
            }
        }
    }

    #[test]
    fn prop_family_second_covariate_variance() {
        let d = sample_prop_family(2.0, 1_000_000, 7).unwrap();
        let x2 = column(&d, 1);
        assert!((cov(&x2, &x2) / 5.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn gap_family_rejects_boundary_rho() {
        assert!(sample_gap_family([[0.0, 0.5], [0.5, 0.5]], 10, 0).is_err());
        assert!(sample_gap_family([[0.5, 0.5], [0.5, 1.0]], 10, 0).is_err());
    }

    #[test]
    fn gap_family_uniform_rho_cells() {
        let d = sample_gap_family([[0.5; 2]; 2], 100_000, 8).unwrap();
        for y in [0.0, 1.0] {
            for side in [0.0, 1.0] {
                let cell: Vec<f64> = d
                    .samples
                    .iter()
                    .filter(|s| s.y == y && s.x[1] == side)
                    .map(|s| s.x[0])
                    .collect();
                assert!((mean(&cell) - 0.5).abs() < 0.01, "cell ({y}, {side})");
            }
        }
    }

    #[test]
    fn gap_family_posterior_on_negative_side() {
        let d = sample_gap_family(GAP_EXAMPLE_RHO, 1_000_000, 9).unwrap();
        let ys: Vec<f64> = d
            .samples
            .iter()
            .filter(|s| s.x == [1.0, 0.0])
            .map(|s| s.y)
            .collect();
        assert!((mean(&ys) - 0.9).abs() < 0.01);
    }

    #[test]
    fn sampling_is_deterministic() {
        for spec in [
            FamilySpec::BinaryGaussian { a: 0.3 },
            FamilySpec::continuous(-1.0, 2.0),
            FamilySpec::PropGaussian { a: 2.0 },
            FamilySpec::GapDiscrete {
                rho: GAP_EXAMPLE_RHO,
            },
        ] {
            let a = sample(&spec, 500, 42).unwrap();
            let b = sample(&spec, 500, 42).unwrap();
            assert_eq!(a, b);
            let c = sample(&spec, 500, 43).unwrap();
            assert_ne!(a.samples, c.samples);
        }
    }

    #[test]
    fn every_gaussian_sample_has_positive_density_under_other_couplings() {
        for spec in [
            FamilySpec::BinaryGaussian { a: 0.9 },
            FamilySpec::continuous(1.0, 2.0),
            FamilySpec::PropGaussian { a: 1.5 },
        ] {
            let d = sample(&spec, 2_000, 11).unwrap();
            for other in [-3.0, -0.5, 0.0, 2.0] {
                let alt = spec.with_a(other);
                for s in &d.samples {
                    assert!(spec.log_density(s).is_finite());
                    assert!(alt.log_density(s).is_finite());
                }
            }
        }
    }

    #[test]
    fn uncoupled_families_factorize() {
        let n = 20_000;
        for spec in [
            FamilySpec::BinaryGaussian { a: 0.0 },
            FamilySpec::continuous(0.0, 2.0),
            FamilySpec::PropGaussian { a: 0.0 },
        ] {
            let d = sample(&spec, n, 12).unwrap();
            let c = corr(&d.labels(), &d.nuisance_column()).abs();
            assert!(c < 3.0 / (n as f64).sqrt(), "{}: |corr| = {c}", spec.name());
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let d = sample_continuous_gaussian(0.7, 2.0, 200, 13).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("y,z,x1,x2,w\n"));
        let back = Dataset::read_csv(&buf[..], d.spec.clone(), d.seed).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn csv_rejects_wrong_header() {
        let text = "y,x1,z,x2,w\n0,0,0,0,1\n";
        assert!(Dataset::read_csv(text.as_bytes(), FamilySpec::BinaryGaussian { a: 0.0 }, 0).is_err());
    }

    #[test]
    fn spec_serde_defaults() {
        let spec: FamilySpec =
            serde_json::from_str(r#"{"kind":"ContinuousGaussian","a":1.0}"#).unwrap();
        assert_eq!(spec, FamilySpec::continuous(1.0, 2.0));
    }
}
