//! Detection of publication bias under the Copas selection model.
//!
//! The central piece is a sup-score test of ρ = 0: the standardized score in
//! ρ is computed at a set of fixed selection parameters (γ0, γ1), maximized
//! in square over that grid, and calibrated with a parametric bootstrap
//! from the fitted random-effects null. Egger's regression, Trim-and-Fill
//! and a weighted small-study regression are provided as comparators, along
//! with a Copas sensitivity fit and a Monte-Carlo harness for rejection rates.

// `!(x > 0.0)` is used on purpose so that NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod comparators;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod model;
pub mod normal;
mod optim;
pub mod rng;
pub mod scoretest;
pub mod sim;

pub use comparators::{
    copas_naive_test, egger_test, trim_and_fill, ComparatorResult, Estimator, Method, Side,
};
pub use error::{Error, Result};
pub use estimation::{fit_null, fit_sensitivity, NullFit, SensitivityFit};
pub use model::{
    copas_loglik, efficient_information, score_rho_at_null, selection_prob, CopasParams, Dataset,
    EfficientScoreParts, InformationKind, Study,
};
pub use scoretest::{
    bootstrap_pvalue, default_grid, t_statistic, z_at, GridPoint, GridSpec, ScoreTestResult,
    TStatistic,
};
pub use sim::{run_power_study, PowerReport, PowerStudy, SelectionModel, SimConfig, TestKind};
