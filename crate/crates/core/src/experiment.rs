//! Config-driven experiment runner and the check suites behind `nurd check`.
//!
//! A run draws, for every seed, a training set at `train_a` and a test set at
//! `test_a`, fits the selected method and evaluates it on three splits:
//!
//! - `test`: the test set.
//! - `heldout_ptr`: the 20% of the training rows held out for model
//!   selection, unweighted.
//! - `heldout_pind`: the held-out slice of the nuisance-randomized data the
//!   distillation step selects on (the held-out training rows under the
//!   estimated weights for reweighting, held-out generated rows for the
//!   generative method). Absent for `erm` and `oracle_linear`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{
    self, cross_kl, gap_posterior, grid, minimax, optimal_linear_accuracy, prop3_criterion,
    prop3_cross_kl, rel_perf, LandscapeGrid, LinearRep,
};
use crate::distillation::{self, distill, gaussian_mi_probe, write_history_csv, DistillConfig};
use crate::error::{NurdError, Result};
use crate::eval::{
    evaluate, optimal_linear_predictor, seed_summary, Classifier, NurdModel, PerfReport,
    SeedSummary,
};
use crate::families::{
    sample, sample_binary_gaussian, sample_gap_family, Dataset, FamilySpec, GAP_EXAMPLE_RHO,
};
use crate::generative::{fit_generator, sample_randomized};
use crate::nn::{grad_check, train_binary_selected, BinaryBatch, MlpModel, MlpSpec, OptConfig, OutputKind, Split};
use crate::reweighting::{
    crossfit_weights, holdout_split, renormalize_marginal, weighted_corr, SELECTION_FRACTION,
};
use crate::rng::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Erm,
    ReweightNurd,
    GenerativeNurd,
    OracleLinear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Erm => "erm",
            Method::ReweightNurd => "reweight_nurd",
            Method::GenerativeNurd => "generative_nurd",
            Method::OracleLinear => "oracle_linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSplit {
    Test,
    HeldoutPtr,
    HeldoutPind,
}

impl EvalSplit {
    pub fn name(self) -> &'static str {
        match self {
            EvalSplit::Test => "test",
            EvalSplit::HeldoutPtr => "heldout_ptr",
            EvalSplit::HeldoutPind => "heldout_pind",
        }
    }
}

/// A network and its optimizer settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub spec: MlpSpec,
    #[serde(default)]
    pub opt: OptConfig,
}

impl ModelConfig {
    fn logit(layer_sizes: &[usize]) -> Self {
        ModelConfig {
            spec: MlpSpec {
                layer_sizes: layer_sizes.to_vec(),
                activation: Default::default(),
                output: OutputKind::Logit,
            },
            opt: OptConfig::default(),
        }
    }

    fn validate(&self, input_dim: usize, what: &str) -> Result<()> {
        self.spec.validate()?;
        self.opt.validate()?;
        if self.spec.input_dim() != input_dim || self.spec.output != OutputKind::Logit {
            return Err(NurdError::invalid(format!(
                "{what} must be a logit network on {input_dim} inputs"
            )));
        }
        Ok(())
    }
}

fn default_weight_model() -> ModelConfig {
    ModelConfig::logit(&[1, 16, 1])
}

fn default_erm_model() -> ModelConfig {
    ModelConfig::logit(&[2, 16, 1])
}

fn default_k_folds() -> usize {
    5
}

/// One experiment. The `a` inside `family` is ignored; `train_a` and
/// `test_a` set the coupling of the training and test draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilySpec,
    pub train_a: f64,
    pub test_a: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub method: Method,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default = "default_k_folds")]
    pub k_folds: usize,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    /// Model of `p_tr(y | z)` for reweighting.
    #[serde(default = "default_weight_model")]
    pub weight_model: ModelConfig,
    /// Classifier on `x` for the ERM baseline.
    #[serde(default = "default_erm_model")]
    pub erm_model: ModelConfig,
    /// Size of the generated nuisance-randomized set; defaults to the
    /// number of training rows the generator is fitted on.
    #[serde(default)]
    pub n_generated: Option<usize>,
    /// Seeds run concurrently; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
}

impl ExperimentConfig {
    /// Parse JSON, or TOML when the path ends in `.toml`.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = if path.extension().is_some_and(|e| e == "toml") {
            toml::from_str(text).map_err(|e| NurdError::Parse(format!("{}: {e}", path.display())))?
        } else {
            serde_json::from_str(text)
                .map_err(|e| NurdError::Parse(format!("{}: {e}", path.display())))?
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.family.validate()?;
        for (name, a) in [("train_a", self.train_a), ("test_a", self.test_a)] {
            if !a.is_finite() {
                return Err(NurdError::invalid(format!("{name} must be finite")));
            }
        }
        if self.seeds.is_empty() {
            return Err(NurdError::invalid("seeds must be nonempty"));
        }
        if self.n_test == 0 {
            return Err(NurdError::invalid("n_test must be positive"));
        }
        if self.n_train < 50 {
            return Err(NurdError::invalid("n_train must be at least 50"));
        }
        if self.n_generated == Some(0) {
            return Err(NurdError::invalid("n_generated must be positive"));
        }
        match self.method {
            Method::OracleLinear => {
                if !matches!(self.family, FamilySpec::BinaryGaussian { .. }) {
                    return Err(NurdError::invalid(
                        "oracle_linear needs the BinaryGaussian family",
                    ));
                }
            }
            method => {
                if !self.family.has_binary_labels() {
                    return Err(NurdError::invalid(format!(
                        "{} needs a family with binary labels, not {}",
                        method.name(),
                        self.family.name()
                    )));
                }
            }
        }
        match self.method {
            Method::Erm => self.erm_model.validate(2, "erm_model")?,
            Method::ReweightNurd => {
                if self.k_folds < 2 {
                    return Err(NurdError::invalid("k_folds must be at least 2"));
                }
                self.weight_model.validate(1, "weight_model")?;
                self.distill.validate()?;
            }
            Method::GenerativeNurd => {
                if !matches!(self.family, FamilySpec::BinaryGaussian { .. }) {
                    return Err(NurdError::invalid(
                        "generative_nurd models x | y, z as linear-Gaussian; use BinaryGaussian",
                    ));
                }
                self.distill.validate()?;
            }
            Method::OracleLinear => {}
        }
        Ok(())
    }
}

/// One `results.csv` row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub seed: u64,
    pub method: Method,
    pub split: EvalSplit,
    pub report: PerfReport,
}

/// Columns of `results.csv`; `kl_perf` is empty where the family has no
/// closed-form conditional.
pub const RESULTS_HEADER: [&str; 6] = ["seed", "method", "split", "accuracy", "mean_loglik", "kl_perf"];

pub fn write_results_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(RESULTS_HEADER)?;
    for r in rows {
        wtr.write_record([
            r.seed.to_string(),
            r.method.name().to_string(),
            r.split.name().to_string(),
            r.report.accuracy.to_string(),
            r.report.mean_loglik.to_string(),
            r.report.kl_perf.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitSummary {
    pub accuracy: SeedSummary,
    pub mean_loglik: SeedSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kl_perf: Option<SeedSummary>,
}

/// Contents of `summary.json`: seed-level mean and standard error per split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub method: Method,
    pub seeds: Vec<u64>,
    pub splits: BTreeMap<EvalSplit, SplitSummary>,
}

impl Summary {
    pub fn from_rows(method: Method, seeds: &[u64], rows: &[ResultRow]) -> Summary {
        let mut by_split: BTreeMap<EvalSplit, Vec<&PerfReport>> = BTreeMap::new();
        for r in rows {
            by_split.entry(r.split).or_default().push(&r.report);
        }
        let splits = by_split
            .into_iter()
            .map(|(split, reports)| {
                let col = |f: fn(&PerfReport) -> f64| reports.iter().map(|r| f(r)).collect::<Vec<_>>();
                let kl: Option<Vec<f64>> = reports.iter().map(|r| r.kl_perf).collect();
                let summary = SplitSummary {
                    accuracy: seed_summary(&col(|r| r.accuracy)),
                    mean_loglik: seed_summary(&col(|r| r.mean_loglik)),
                    kl_perf: kl.map(|v| seed_summary(&v)),
                };
                (split, summary)
            })
            .collect();
        Summary {
            method,
            seeds: seeds.to_vec(),
            splits,
        }
    }

    pub fn accuracy(&self, split: EvalSplit) -> Option<SeedSummary> {
        self.splits.get(&split).map(|s| s.accuracy)
    }
}

/// Everything one seed produces besides its result rows.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub history: Option<Vec<distillation::HistoryRow>>,
}

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    pub artifacts: SeedArtifacts,
}

fn with_row_weights(data: &Dataset, idx: &[usize], weights: &[f64]) -> Result<Dataset> {
    let sub = data.subset(idx)?;
    let w: Vec<f64> = idx.iter().map(|&i| weights[i]).collect();
    sub.with_weights(&w)
}

fn unweighted(data: &Dataset) -> Result<Dataset> {
    data.with_weights(&vec![1.0; data.len()])
}

/// Train a classifier on `train` with epoch selection on `val`.
fn fit_classifier(model: &ModelConfig, train: &Dataset, val: &Dataset, seed: u64) -> Result<MlpModel> {
    let opt = model.opt.clone().with_seed(derive_seed(seed, 1));
    let init = MlpModel::init(model.spec.clone(), derive_seed(seed, 2))?;
    let (tx, ty, tw) = (train.covariates(), train.labels(), train.weights());
    let (vx, vy, vw) = (val.covariates(), val.labels(), val.weights());
    let (best, _) = train_binary_selected(
        &init,
        Split {
            inputs: &tx,
            labels: &ty,
            weights: &tw,
        },
        Split {
            inputs: &vx,
            labels: &vy,
            weights: &vw,
        },
        &opt,
    )?;
    Ok(best)
}

/// Run the configured method for one seed.
pub fn run_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedOutcome> {
    let train = sample(&cfg.family.with_a(cfg.train_a), cfg.n_train, derive_seed(seed, 100))?;
    let test = sample(&cfg.family.with_a(cfg.test_a), cfg.n_test, derive_seed(seed, 101))?;
    let all: Vec<usize> = (0..train.len()).collect();
    let mut rows = Vec::new();
    let mut push = |split, report| {
        rows.push(ResultRow {
            seed,
            method: cfg.method,
            split,
            report,
        })
    };
    let mut history = None;
    match cfg.method {
        Method::OracleLinear => {
            let (_, held) = holdout_split(&all, SELECTION_FRACTION, derive_seed(seed, 102));
            let predictor = optimal_linear_predictor();
            push(EvalSplit::Test, evaluate(&predictor, &test)?);
            push(EvalSplit::HeldoutPtr, evaluate(&predictor, &train.subset(&held)?)?);
        }
        Method::Erm => {
            let (kept, held) = holdout_split(&all, SELECTION_FRACTION, derive_seed(seed, 102));
            let held = train.subset(&held)?;
            let model = fit_classifier(&cfg.erm_model, &train.subset(&kept)?, &held, derive_seed(seed, 103))?;
            let predictor = Classifier(model);
            push(EvalSplit::Test, evaluate(&predictor, &test)?);
            push(EvalSplit::HeldoutPtr, evaluate(&predictor, &held)?);
        }
        Method::ReweightNurd => {
            let opt = cfg.weight_model.opt.clone().with_seed(derive_seed(seed, 104));
            let est = crossfit_weights(&train, cfg.k_folds, &cfg.weight_model.spec, &opt)?;
            let est = renormalize_marginal(&est, &train.labels())?;
            let out = distill(&train, &est.weights, &cfg.distill, derive_seed(seed, 105))?;
            let predictor = NurdModel {
                rep: out.rep,
                head: out.head,
            };
            push(EvalSplit::Test, evaluate(&predictor, &test)?);
            let held_ptr = unweighted(&train.subset(&out.val_indices)?)?;
            push(EvalSplit::HeldoutPtr, evaluate(&predictor, &held_ptr)?);
            let held_pind = with_row_weights(&train, &out.val_indices, &est.weights)?;
            push(EvalSplit::HeldoutPind, evaluate(&predictor, &held_pind)?);
            history = Some(out.history);
        }
        Method::GenerativeNurd => {
            let (kept, held) = holdout_split(&all, SELECTION_FRACTION, derive_seed(seed, 102));
            let fit_on = train.subset(&kept)?;
            let gen = fit_generator(&fit_on)?;
            let n_gen = cfg.n_generated.unwrap_or(fit_on.len());
            let randomized = sample_randomized(&gen, &fit_on, n_gen, derive_seed(seed, 106))?;
            let w = randomized.weights();
            let out = distill(&randomized, &w, &cfg.distill, derive_seed(seed, 105))?;
            let predictor = NurdModel {
                rep: out.rep,
                head: out.head,
            };
            push(EvalSplit::Test, evaluate(&predictor, &test)?);
            push(EvalSplit::HeldoutPtr, evaluate(&predictor, &train.subset(&held)?)?);
            push(EvalSplit::HeldoutPind, evaluate(&predictor, &randomized.subset(&out.val_indices)?)?);
            history = Some(out.history);
        }
    }
    Ok(SeedOutcome {
        seed,
        rows,
        artifacts: SeedArtifacts { history },
    })
}

/// Run every seed on a pool of `cfg.workers` threads. Outcomes come back in
/// the order of `cfg.seeds` whatever order they finish in.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<SeedOutcome>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| NurdError::invalid(format!("worker pool: {e}")))?;
    pool.install(|| cfg.seeds.par_iter().map(|&s| run_seed(cfg, s)).collect())
}

/// Files written by [`run_experiment`].
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub output_dir: PathBuf,
    pub rows: Vec<ResultRow>,
    pub summary: Summary,
}

/// Run `cfg` and write `results.csv`, `summary.json`, per-seed distillation
/// histories and a verbatim copy of the config text into `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, config_text: &str, config_name: &str) -> Result<RunOutput> {
    let outcomes = run_all(cfg)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join(config_name), config_text)?;
    let rows: Vec<ResultRow> = outcomes.iter().flat_map(|o| o.rows.iter().cloned()).collect();
    write_results_csv(&rows, fs::File::create(dir.join("results.csv"))?)?;
    for o in &outcomes {
        if let Some(h) = &o.artifacts.history {
            let f = fs::File::create(dir.join(format!("history_seed{}.csv", o.seed)))?;
            write_history_csv(h, f)?;
        }
    }
    let summary = Summary::from_rows(cfg.method, &cfg.seeds, &rows);
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(RunOutput {
        output_dir: dir.clone(),
        rows,
        summary,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Analytic,
    Nn,
    E2e,
}

/// One line of a check suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckItem {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckItem {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckItem {
            name: name.into(),
            passed,
            detail,
        }
    }

    fn close(name: &str, got: f64, want: f64, tol: f64) -> Self {
        let passed = (got - want).abs() <= tol;
        CheckItem::new(name, passed, format!("got {got:.12}, want {want:.12} (tol {tol:e})"))
    }

    fn from_result(name: &str, r: Result<CheckItem>) -> Self {
        r.unwrap_or_else(|e| CheckItem::new(name, false, format!("error: {e}")))
    }
}

pub const EXACT_TOL: f64 = 1e-9;

/// The gap-family posterior table at the example `ρ`, against
/// `f(1, ·) = (0.9, 0.5)` and `f(0, ·) = (0.1, 0.5)`. Takes the posterior as
/// a parameter so a perturbed version can be checked to fail.
pub fn gap_table_check(posterior: impl Fn(&[[f64; 2]; 2]) -> Result<[[f64; 2]; 2]>) -> CheckItem {
    let name = "gap posterior table at the example rho";
    CheckItem::from_result(
        name,
        posterior(&GAP_EXAMPLE_RHO).map(|f| {
            // f[b][s]: b the binary covariate, s = 1[z >= 0]
            let want = [[0.1, 0.5], [0.9, 0.5]];
            let worst = f
                .iter()
                .flatten()
                .zip(want.iter().flatten())
                .map(|(g, w)| (g - w).abs())
                .fold(0.0, f64::max);
            CheckItem::new(name, worst <= EXACT_TOL, format!("table {f:?}, max error {worst:e}"))
        }),
    )
}

fn d_b(b: f64, sigma2: f64) -> f64 {
    sigma2 * (1.0 + b).powi(2) + (1.0 - b).powi(2) + sigma2
}

pub fn analytic_suite() -> Vec<CheckItem> {
    let mut items = vec![gap_table_check(gap_posterior)];
    let half_ln = |v: f64| 0.5 * v.ln();
    items.push(CheckItem::from_result(
        "rel_perf(-1, 1, 2) = 12/5 - ln(5)/2",
        rel_perf(-1.0, 1.0, 2.0).map(|v| CheckItem::close("rel_perf(-1, 1, 2) = 12/5 - ln(5)/2", v, 2.4 - half_ln(5.0), EXACT_TOL)),
    ));
    for a in [-1.0, 0.0, 1.0] {
        let name = format!("rel_perf({a}, {a}, 2) = -ln(D_a/2)/2");
        items.push(CheckItem::from_result(
            &name,
            rel_perf(a, a, 2.0).map(|v| CheckItem::close(&name, v, -half_ln(d_b(a, 2.0) / 2.0), EXACT_TOL)),
        ));
    }
    let name = "rel_perf(6, 0, 2) = 12/20 - ln(5/2)/2 > 0";
    items.push(CheckItem::from_result(
        name,
        rel_perf(6.0, 0.0, 2.0).map(|v| {
            let want = 12.0 / 20.0 - half_ln(2.5);
            CheckItem::new(name, (v - want).abs() <= EXACT_TOL && v > 0.0, format!("got {v:.12}, want {want:.12}"))
        }),
    ));
    let name = "cross_kl(a, a, 2) = 0 on a in [-3, 3]";
    items.push(CheckItem::from_result(
        name,
        grid(-3.0, 3.0, 61)
            .into_iter()
            .map(|a| cross_kl(a, a, 2.0).map(f64::abs))
            .collect::<Result<Vec<_>>>()
            .map(|v| {
                let worst = v.into_iter().fold(0.0, f64::max);
                CheckItem::new(name, worst <= EXACT_TOL, format!("max |cross_kl| {worst:e}"))
            }),
    ));
    items.push(CheckItem::close(
        "prop3_criterion(7, 1) = 4 - ln(3)/2",
        prop3_criterion(7.0, 1.0),
        4.0 - half_ln(3.0),
        EXACT_TOL,
    ));
    let v = prop3_criterion(7.0, 1.0);
    let same = prop3_criterion(1.0, 1.0);
    items.push(CheckItem::new(
        "prop3 criterion positive at (7, 1), negative at a = b",
        v > 0.0 && same < 0.0,
        format!("(7, 1) -> {v:.6}, (1, 1) -> {same:.6}"),
    ));
    let b_grid = grid(-2.0, 2.0, 81);
    let a_grid = grid(-3.0, 3.0, 61);
    let mm = minimax(&b_grid, &a_grid, prop3_cross_kl);
    items.push(CheckItem::new(
        "minimax over b of max over a of cross KL (prop3 family) at b = 0",
        mm.argmin_b.abs() <= 0.05 + 1e-12,
        format!("argmin b {}, worst case {:.6}", mm.argmin_b, mm.worst_case),
    ));
    let lambda = 20.0;
    let land = LandscapeGrid::compute(-2.0, 2.0, 41, lambda);
    let (i, j) = (land.index_of(-1.0), land.index_of(1.0));
    items.push(CheckItem::new(
        "landscape: (-1, 1) is a local maximum up to rescaling (lambda 20)",
        land.is_local_max_modulo_scaling(i, j, 1e-12),
        format!("value {:.9}", land.value(i, j)),
    ));
    let good = analytic::eq5_landscape(LinearRep::new(1.0, 1.0), lambda);
    let bad = analytic::eq5_landscape(LinearRep::new(-1.0, 1.0), lambda);
    items.push(CheckItem::new(
        "landscape: value(1, 1) > value(-1, 1) (lambda 20)",
        good > bad,
        format!("{good:.9} vs {bad:.9}"),
    ));
    let (gi, gj) = land.argmax();
    let (gu, gv) = (land.axis[gi], land.axis[gj]);
    let angle = (gu * gv).signum() * ((gu + gv).abs() / (2.0f64.sqrt() * gu.hypot(gv))).acos();
    items.push(CheckItem::new(
        "landscape: grid maximum lies near the (1, 1) ray",
        gu * gv > 0.0 && angle.to_degrees().abs() < 5.0,
        format!("argmax ({gu}, {gv}), {:.3} degrees off", angle.to_degrees().abs()),
    ));
    let acc = optimal_linear_accuracy(0.0);
    items.push(CheckItem::close(
        "optimal linear accuracy = Phi(1/sqrt(9.01))",
        acc,
        // scipy.stats.norm.cdf(1 / sqrt(9.01))
        0.630_488_830_066_586_5,
        1e-12,
    ));
    items
}

fn grad_batch(input_dim: usize, n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, crate::rng::streams::SAMPLER);
    let inputs = (0..n * input_dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let labels = (0..n).map(|_| f64::from(u8::from(rng.random_bool(0.5)))).collect();
    let weights = (0..n).map(|_| rng.random_range(0.2..2.0)).collect();
    (inputs, labels, weights)
}

pub const GRAD_TOL: f64 = 1e-4;

pub fn nn_suite() -> Vec<CheckItem> {
    let mut items = Vec::new();
    for (k, sizes) in [&[2, 16, 1][..], &[1, 16, 1], &[3, 16, 16, 1], &[1, 1], &[2, 16, 16, 1]]
        .into_iter()
        .enumerate()
    {
        let name = format!("gradient check {sizes:?}");
        let r = MlpSpec::new(sizes, OutputKind::Logit)
            .and_then(|spec| MlpModel::init(spec, k as u64 + 1))
            .and_then(|m| {
                let (x, y, w) = grad_batch(sizes[0], 32, k as u64 + 100);
                grad_check(&m, &BinaryBatch::new(&x, &y, &w), GRAD_TOL)
            })
            .map(|g| {
                CheckItem::new(
                    &name,
                    g.passed,
                    format!("worst relative error {:e} at {}", g.worst_rel_error, g.worst_index),
                )
            });
        items.push(CheckItem::from_result(&name, r));
    }
    let weight_spec = default_weight_model();
    let name = "cross-fitted weights on a = 0 data lie in [0.8, 1.25]";
    let r = sample_binary_gaussian(0.0, 10_000, 1)
        .and_then(|d| crossfit_weights(&d, 5, &weight_spec.spec, &weight_spec.opt.clone().with_seed(2)))
        .map(|est| {
            let lo = est.weights.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = est.weights.iter().copied().fold(0.0, f64::max);
            CheckItem::new(name, lo >= 0.8 && hi <= 1.25, format!("range [{lo:.4}, {hi:.4}]"))
        });
    items.push(CheckItem::from_result(name, r));
    let name = "reweighted a = 0.5 data has |corr(y, z)| < 0.05";
    let r = sample_binary_gaussian(0.5, 10_000, 3).and_then(|d| {
        let est = crossfit_weights(&d, 5, &weight_spec.spec, &weight_spec.opt.clone().with_seed(4))?;
        let raw = weighted_corr(&d.labels(), &d.nuisance_column(), &vec![1.0; d.len()]);
        let c = weighted_corr(&d.labels(), &d.nuisance_column(), &est.weights);
        Ok(CheckItem::new(name, c.abs() < 0.05, format!("corr {c:.4} (unweighted {raw:.4})")))
    });
    items.push(CheckItem::from_result(name, r));
    let name = "critic recovers Gaussian MI at rho = 0.8 within 0.05";
    let want = -0.5 * (1.0f64 - 0.64).ln();
    let r = gaussian_mi_probe(0.8, 100_000, 1).map(|got| CheckItem::close(name, got, want, 0.05));
    items.push(CheckItem::from_result(name, r));
    items
}

/// A small reweighting run: checks that the pipeline completes with finite
/// outputs, reruns bit-identically, and beats chance on the training family.
fn small_reweight_check() -> Result<CheckItem> {
    let name = "reduced reweight_nurd run is finite, deterministic and above chance on p_tr";
    let mut distill_cfg = DistillConfig::default();
    distill_cfg.opt.epochs = 10;
    let cfg = ExperimentConfig {
        family: FamilySpec::BinaryGaussian { a: 0.5 },
        train_a: 0.5,
        test_a: 0.5,
        n_train: 2000,
        n_test: 2000,
        method: Method::ReweightNurd,
        distill: distill_cfg,
        k_folds: 5,
        seeds: vec![7],
        output_dir: PathBuf::new(),
        weight_model: default_weight_model(),
        erm_model: default_erm_model(),
        n_generated: None,
        workers: 1,
    };
    let a = run_seed(&cfg, 7)?;
    let b = run_seed(&cfg, 7)?;
    let test = &a.rows[0].report;
    let finite = a.rows.iter().all(|r| r.report.accuracy.is_finite() && r.report.mean_loglik.is_finite());
    let same = a.rows == b.rows;
    Ok(CheckItem::new(
        name,
        finite && same && test.accuracy > 0.55,
        format!("test accuracy {:.4}, identical rerun {same}", test.accuracy),
    ))
}

pub fn e2e_suite() -> Vec<CheckItem> {
    let mut items = Vec::new();
    let name = "thresholded r* = x1 + x2 matches Phi(1/sqrt(9.01)) at a = -0.9";
    let r = sample_binary_gaussian(-0.9, 200_000, 11).and_then(|d| {
        let rep = evaluate(&optimal_linear_predictor(), &d)?;
        let want = optimal_linear_accuracy(-0.9);
        Ok(CheckItem::new(
            name,
            (rep.accuracy - want).abs() <= 3.0 * rep.stderr,
            format!("accuracy {:.4} +- {:.4}, want {want:.4}", rep.accuracy, rep.stderr),
        ))
    });
    items.push(CheckItem::from_result(name, r));
    let name = "generator recovers x | y, z coefficients";
    let r = sample_binary_gaussian(0.5, 100_000, 12).and_then(|d| {
        let g = fit_generator(&d)?;
        let want = [[0.0, 1.0, -1.0], [0.0, 1.0, 1.0]];
        let worst = g
            .mean_coef
            .iter()
            .flatten()
            .zip(want.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(CheckItem::new(name, worst < 0.05, format!("coefficients {:?}", g.mean_coef)))
    });
    items.push(CheckItem::from_result(name, r));
    let name = "gap family empirical posterior matches the table within 0.01";
    let r = sample_gap_family(GAP_EXAMPLE_RHO, 1_000_000, 13).and_then(|d| {
        let table = gap_posterior(&GAP_EXAMPLE_RHO)?;
        let mut counts = [[[0.0f64; 2]; 2]; 2];
        for s in &d.samples {
            let (b, k) = (s.x[0] as usize, s.x[1] as usize);
            counts[b][k][s.y as usize] += 1.0;
        }
        let mut worst: f64 = 0.0;
        for b in 0..2 {
            for k in 0..2 {
                let [n0, n1] = counts[b][k];
                worst = worst.max((n1 / (n0 + n1) - table[b][k]).abs());
            }
        }
        Ok(CheckItem::new(name, worst < 0.01, format!("max deviation {worst:.4}")))
    });
    items.push(CheckItem::from_result(name, r));
    items.push(CheckItem::from_result(
        "reduced reweight_nurd run",
        small_reweight_check(),
    ));
    items
}

pub fn run_suite(suite: Suite) -> Vec<CheckItem> {
    match suite {
        Suite::Analytic => analytic_suite(),
        Suite::Nn => nn_suite(),
        Suite::E2e => e2e_suite(),
    }
}
