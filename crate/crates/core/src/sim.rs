//! Data generators for the selection model and two misspecified
//! alternatives, and a Monte-Carlo harness for rejection rates.

use std::fmt;
use std::time::Instant;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::comparators::{copas_naive_test, egger_test, trim_and_fill, Estimator, Side};
use crate::error::{Error, Result};
use crate::model::{Dataset, InformationKind, Study, MIN_STUDIES};
use crate::rng;
use crate::scoretest::{bootstrap_pvalue, GridSpec};

/// Draws allowed per generated dataset before giving up.
const MAX_DRAWS: usize = 1_000_000;
/// Standard errors below this are redrawn.
const MIN_S: f64 = 1e-3;
/// Largest tolerated per-test failure fraction in a power study.
const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionModel {
    /// Z = γ0 + γ1/s + δ with corr(ε, δ) = ρ.
    Copas,
    /// Z = γ0 + γ1/s² + δ with corr(ε, δ) = ρ.
    AltInvS2,
    /// Z = γ0 + γ1/s + cρ·y/s, no noise term unless `zscore_noise` is set.
    AltZscore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n: usize,
    pub mu: f64,
    pub tau2: f64,
    pub rho: f64,
    pub gamma0: f64,
    pub gamma1: f64,
    pub model: SelectionModel,
    /// Scaling constant of the z-score model.
    pub c: f64,
    /// Adds an independent N(0, 1) term to the z-score selection equation.
    pub zscore_noise: bool,
    /// Standard errors are |N(s_loc, s_scale²)|.
    pub s_loc: f64,
    pub s_scale: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n: 40,
            mu: 0.4,
            tau2: 0.01,
            rho: 0.0,
            gamma0: -1.0,
            gamma1: 0.65,
            model: SelectionModel::Copas,
            c: 0.5,
            zscore_noise: false,
            s_loc: 0.25,
            s_scale: 2.0,
            seed: 20_200_601,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < MIN_STUDIES {
            return Err(Error::Domain(format!(
                "n must be >= {MIN_STUDIES}, got {}",
                self.n
            )));
        }
        if !(self.tau2 >= 0.0 && self.tau2.is_finite()) {
            return Err(Error::Domain(format!(
                "tau2 must be >= 0, got {}",
                self.tau2
            )));
        }
        match self.model {
            SelectionModel::Copas | SelectionModel::AltInvS2 if !(self.rho.abs() < 1.0) => {
                return Err(Error::Domain(format!(
                    "|rho| must be < 1, got {}",
                    self.rho
                )))
            }
            SelectionModel::AltZscore if !(self.c > 0.0) => {
                return Err(Error::Domain(format!("c must be > 0, got {}", self.c)))
            }
            _ => {}
        }
        if !(self.s_scale > 0.0 && self.s_loc.is_finite()) {
            return Err(Error::Domain("invalid standard-error distribution".into()));
        }
        let finite = [self.mu, self.rho, self.gamma0, self.gamma1, self.c];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite simulation parameter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub data: Dataset,
    /// Accepted studies over total draws.
    pub acceptance_rate: f64,
}

fn draw_s<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> f64 {
    loop {
        let s = (cfg.s_loc + cfg.s_scale * rng.sample::<f64, _>(StandardNormal)).abs();
        if s >= MIN_S {
            return s;
        }
    }
}

/// Draws studies from the configured model until `n` are published.
pub fn generate<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Generated> {
    cfg.validate()?;
    let tau = cfg.tau2.sqrt();
    let corr = (1.0 - cfg.rho * cfg.rho).max(0.0).sqrt();
    let mut studies = Vec::with_capacity(cfg.n);
    let mut draws = 0usize;
    while studies.len() < cfg.n {
        if draws == MAX_DRAWS {
            return Err(Error::Generation(format!(
                "only {} of {} studies accepted after {MAX_DRAWS} draws",
                studies.len(),
                cfg.n
            )));
        }
        draws += 1;
        let s = draw_s(cfg, rng);
        let u: f64 = rng.sample(StandardNormal);
        let eps: f64 = rng.sample(StandardNormal);
        let extra: f64 = rng.sample(StandardNormal);
        let y = cfg.mu + tau * u + s * eps;
        let z = match cfg.model {
            SelectionModel::Copas => cfg.gamma0 + cfg.gamma1 / s + cfg.rho * eps + corr * extra,
            SelectionModel::AltInvS2 => {
                cfg.gamma0 + cfg.gamma1 / (s * s) + cfg.rho * eps + corr * extra
            }
            SelectionModel::AltZscore => {
                let noise = if cfg.zscore_noise { extra } else { 0.0 };
                cfg.gamma0 + cfg.gamma1 / s + cfg.c * cfg.rho * y / s + noise
            }
        };
        if z > 0.0 {
            studies.push(Study { y, s });
        }
    }
    Ok(Generated {
        data: Dataset::new(studies)?,
        acceptance_rate: cfg.n as f64 / draws as f64,
    })
}

pub fn generate_copas<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Generated> {
    generate(
        &SimConfig {
            model: SelectionModel::Copas,
            ..cfg.clone()
        },
        rng,
    )
}

pub fn generate_alt_inv_s2<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Generated> {
    generate(
        &SimConfig {
            model: SelectionModel::AltInvS2,
            ..cfg.clone()
        },
        rng,
    )
}

pub fn generate_alt_zscore<R: Rng + ?Sized>(cfg: &SimConfig, rng: &mut R) -> Result<Generated> {
    generate(
        &SimConfig {
            model: SelectionModel::AltZscore,
            ..cfg.clone()
        },
        rng,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    ScoreTest,
    Egger,
    TrimFill,
    CopasNaive,
}

impl TestKind {
    pub const ALL: [TestKind; 4] = [
        TestKind::ScoreTest,
        TestKind::Egger,
        TestKind::TrimFill,
        TestKind::CopasNaive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestKind::ScoreTest => "score_test",
            TestKind::Egger => "egger",
            TestKind::TrimFill => "trim_fill",
            TestKind::CopasNaive => "copas_naive",
        }
    }
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A complete power-study specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerStudy {
    pub config: SimConfig,
    pub n_replicates: usize,
    pub tests: Vec<TestKind>,
    pub alpha_levels: Vec<f64>,
    pub b_boot: usize,
    /// Points drawn per replicate from the standard 50 × 50 lattice.
    pub grid_points: usize,
    pub information: InformationKind,
}

impl Default for PowerStudy {
    fn default() -> Self {
        PowerStudy {
            config: SimConfig::default(),
            n_replicates: 500,
            tests: TestKind::ALL.to_vec(),
            alpha_levels: vec![0.05, 0.10],
            b_boot: 200,
            grid_points: 9,
            information: InformationKind::Expected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestRates {
    pub test: TestKind,
    /// Rejection fraction per entry of `alpha_levels`, over successful replicates.
    pub rejection_rates: Vec<f64>,
    pub n_success: usize,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerReport {
    pub study: PowerStudy,
    pub n_replicates: usize,
    pub alpha_levels: Vec<f64>,
    pub results: Vec<TestRates>,
    pub mean_acceptance_rate: f64,
    /// Wall-clock seconds per replicate. Not reproducible, so callers that
    /// need byte-stable output leave it out.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub mean_runtime: Option<f64>,
}

impl PowerReport {
    pub fn rate(&self, test: TestKind, alpha: f64) -> Option<f64> {
        let k = self.alpha_levels.iter().position(|&a| a == alpha)?;
        let r = self.results.iter().find(|r| r.test == test)?;
        Some(r.rejection_rates[k])
    }

    /// Flat CSV, one row per test and level.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,alpha,rejection_rate,n_success,n_failed\n");
        for r in &self.results {
            for (a, rate) in self.alpha_levels.iter().zip(&r.rejection_rates) {
                out.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.test, a, rate, r.n_success, r.n_failed
                ));
            }
        }
        out
    }
}

fn run_test(test: TestKind, data: &Dataset, study: &PowerStudy, seed: u64) -> Result<f64> {
    match test {
        TestKind::ScoreTest => {
            let grid = GridSpec::standard()
                .with_points(study.grid_points)?
                .with_seed(rng::child_seed(seed, 0))
                .with_information(study.information);
            Ok(bootstrap_pvalue(data, &grid, study.b_boot, rng::child_seed(seed, 1))?.p_value)
        }
        TestKind::Egger => Ok(egger_test(data)?.p_value),
        TestKind::TrimFill => Ok(trim_and_fill(data, Estimator::L0, Side::Auto)?.p_value),
        TestKind::CopasNaive => Ok(copas_naive_test(data)?.p_value),
    }
}

/// Per-replicate p-values (None for a failed test), in replicate order.
pub fn simulate_pvalues(study: &PowerStudy) -> Result<(Vec<Vec<Option<f64>>>, f64)> {
    study.config.validate()?;
    let seed = study.config.seed;
    let per_rep: Vec<Result<(Vec<Option<f64>>, f64)>> = (0..study.n_replicates as u64)
        .into_par_iter()
        .map(|r| {
            let mut stream = rng::stream(seed, r);
            let generated = generate(&study.config, &mut stream)?;
            let rep_seed = rng::child_seed(seed, r);
            let pvals = study
                .tests
                .iter()
                .map(|&t| run_test(t, &generated.data, study, rep_seed).ok())
                .collect();
            Ok((pvals, generated.acceptance_rate))
        })
        .collect();
    let mut pvalues = Vec::with_capacity(per_rep.len());
    let mut acceptance = 0.0;
    for rep in per_rep {
        let (p, a) = rep?;
        pvalues.push(p);
        acceptance += a;
    }
    let mean_acceptance = if pvalues.is_empty() {
        0.0
    } else {
        acceptance / pvalues.len() as f64
    };
    Ok((pvalues, mean_acceptance))
}

/// Rejection rates of each requested test over simulated datasets.
///
/// Replicate `r` uses stream `r` of the configured seed for its data and
/// seeds derived from it for the grid draw and the bootstrap, so reports are
/// identical whatever the thread count. A test failing on more than 5% of
/// replicates is an error.
pub fn run_power_study(study: &PowerStudy) -> Result<PowerReport> {
    if study.tests.is_empty() {
        return Ok(PowerReport {
            study: study.clone(),
            n_replicates: 0,
            alpha_levels: study.alpha_levels.clone(),
            results: Vec::new(),
            mean_acceptance_rate: 0.0,
            mean_runtime: None,
        });
    }
    if let Some(a) = study
        .alpha_levels
        .iter()
        .find(|a| !(**a > 0.0 && **a < 1.0))
    {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {a}")));
    }
    let start = Instant::now();
    let (pvalues, mean_acceptance_rate) = simulate_pvalues(study)?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut results = Vec::with_capacity(study.tests.len());
    for (k, &test) in study.tests.iter().enumerate() {
        let ok: Vec<f64> = pvalues.iter().filter_map(|row| row[k]).collect();
        let n_failed = pvalues.len() - ok.len();
        if n_failed as f64 > MAX_FAILURE_FRACTION * pvalues.len() as f64 {
            return Err(Error::Test(format!(
                "{test} failed on {n_failed} of {} replicates",
                pvalues.len()
            )));
        }
        let rejection_rates = study
            .alpha_levels
            .iter()
            .map(|&a| {
                if ok.is_empty() {
                    0.0
                } else {
                    ok.iter().filter(|&&p| p <= a).count() as f64 / ok.len() as f64
                }
            })
            .collect();
        results.push(TestRates {
            test,
            rejection_rates,
            n_success: ok.len(),
            n_failed,
        });
    }
    Ok(PowerReport {
        study: study.clone(),
        n_replicates: pvalues.len(),
        alpha_levels: study.alpha_levels.clone(),
        results,
        mean_acceptance_rate,
        mean_runtime: (!pvalues.is_empty()).then(|| elapsed / pvalues.len() as f64),
    })
}
