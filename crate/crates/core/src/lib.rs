//! Nuisance-randomized distillation (NuRD) on synthetic nuisance-varying
//! families.
//!
//! The crate pairs the two learning pipelines (reweighting and generative
//! nuisance randomization, followed by critic-regularized distillation) with
//! closed-form oracles for the Gaussian and discrete families they are tested
//! on.
//!
//! Module map:
//!
//! - [`families`]: seeded samplers and the [`Dataset`] container.
//! - [`analytic`]: closed-form posteriors, performance gaps, landscapes.
//! - [`nn`]: a small feed-forward network with hand-written backprop and Adam.
//! - [`reweighting`]: cross-fitted importance weights `p(y) / p(y | z)`.
//! - [`generative`]: linear-Gaussian `p(x | y, z)` and randomized resampling.
//! - [`distillation`]: representation learning with a joint-dependence critic.
//! - [`eval`]: accuracy, log-likelihood and KL-based performance reports.
//! - [`experiment`]: config-driven runner and the analytic check suites.

pub mod analytic;
pub mod distillation;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod families;
pub mod generative;
pub mod linalg;
pub mod nn;
pub mod reweighting;
pub mod rng;

pub use error::{NurdError, Result};
pub use families::{Dataset, FamilySpec, NoiseCoupling, Sample};
