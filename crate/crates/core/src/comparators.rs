//! Comparator tests for small-study effects: Egger's regression,
//! Duval–Tweedie Trim-and-Fill and a weighted regression of effects on
//! standard errors.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::estimation::fit_null;
use crate::model::Dataset;
use crate::normal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Egger,
    TrimFill,
    CopasNaive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparatorResult {
    pub method: Method,
    pub statistic: f64,
    pub p_value: f64,
    pub extras: BTreeMap<String, f64>,
}

/// Relative size below which a residual sum of squares counts as an exact fit.
const EXACT_FIT_RSS: f64 = 1e-26;
/// Relative size below which a coefficient of an exact fit counts as zero.
const EXACT_FIT_COEF: f64 = 1e-10;

struct LineFit {
    intercept: f64,
    slope: f64,
    se_intercept: f64,
    se_slope: f64,
    exact: bool,
}

/// Weighted least squares of `z` on `x` with intercept; residual variance
/// estimated with n − 2 degrees of freedom.
fn fit_line(x: &[f64], z: &[f64], w: &[f64]) -> Result<LineFit> {
    let sw: f64 = w.iter().sum();
    let xbar = x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let zbar = z.iter().zip(w).map(|(z, w)| w * z).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - xbar).powi(2)).sum();
    let spread = x.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>();
    if !(sxx > 1e-12 * spread) {
        return Err(Error::SingularDesign(
            "regressor is constant across studies".into(),
        ));
    }
    let sxz: f64 = x
        .iter()
        .zip(z)
        .zip(w)
        .map(|((x, z), w)| w * (x - xbar) * (z - zbar))
        .sum();
    let slope = sxz / sxx;
    let intercept = zbar - slope * xbar;
    let rss: f64 = x
        .iter()
        .zip(z)
        .zip(w)
        .map(|((x, z), w)| w * (z - intercept - slope * x).powi(2))
        .sum();
    let scale: f64 = z.iter().zip(w).map(|(z, w)| w * z * z).sum();
    let n = x.len() as f64;
    let sigma2 = rss / (n - 2.0);
    Ok(LineFit {
        intercept,
        slope,
        se_intercept: (sigma2 * (1.0 / sw + xbar * xbar / sxx)).sqrt(),
        se_slope: (sigma2 / sxx).sqrt(),
        exact: rss <= EXACT_FIT_RSS * scale.max(f64::MIN_POSITIVE),
    })
}

/// t statistic, resolving exact fits to 0 or ±∞.
fn t_value(coef: f64, se: f64, exact: bool, scale: f64) -> f64 {
    if exact {
        if coef.abs() <= EXACT_FIT_COEF * scale.max(f64::MIN_POSITIVE) {
            0.0
        } else {
            f64::INFINITY.copysign(coef)
        }
    } else {
        coef / se
    }
}

fn two_sided_t(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("df > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Egger's test: OLS of yᵢ/sᵢ on 1/sᵢ; t test of the intercept on n − 2 df.
pub fn egger_test(data: &Dataset) -> Result<ComparatorResult> {
    let data = data.canonical();
    let x: Vec<f64> = data.ses().map(|s| 1.0 / s).collect();
    let z: Vec<f64> = data.studies().iter().map(|st| st.y / st.s).collect();
    let fit = fit_line(&x, &z, &vec![1.0; x.len()])?;
    let scale = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let t = t_value(fit.intercept, fit.se_intercept, fit.exact, scale);
    let df = data.n() as f64 - 2.0;
    Ok(ComparatorResult {
        method: Method::Egger,
        statistic: t,
        p_value: two_sided_t(t, df),
        extras: BTreeMap::from([
            ("intercept".to_string(), fit.intercept),
            ("slope".to_string(), fit.slope),
            ("se_intercept".to_string(), fit.se_intercept),
        ]),
    })
}

/// Regression of yᵢ on sᵢ with weights 1/(τ̂² + sᵢ²) from the null fit;
/// t test of the slope on n − 2 df.
pub fn copas_naive_test(data: &Dataset) -> Result<ComparatorResult> {
    let data = data.canonical();
    let null = fit_null(&data)?;
    let x: Vec<f64> = data.ses().collect();
    let z: Vec<f64> = data.ys().collect();
    let w: Vec<f64> = x.iter().map(|s| 1.0 / (null.tau2_hat + s * s)).collect();
    let fit = fit_line(&x, &z, &w)?;
    let scale = z.iter().fold(0.0f64, |m, v| m.max(v.abs()))
        / x.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let t = t_value(fit.slope, fit.se_slope, fit.exact, scale);
    let df = data.n() as f64 - 2.0;
    Ok(ComparatorResult {
        method: Method::CopasNaive,
        statistic: t,
        p_value: two_sided_t(t, df),
        extras: BTreeMap::from([
            ("intercept".to_string(), fit.intercept),
            ("slope".to_string(), fit.slope),
            ("se_slope".to_string(), fit.se_slope),
            ("tau2_hat".to_string(), null.tau2_hat),
        ]),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    L0,
    R0,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    /// Studies presumed missing below the pooled estimate.
    Left,
    Right,
    #[default]
    Auto,
}

const TF_MAX_ITER: usize = 50;

/// Ranks of |dev| (1-based), averaging ties within a small relative tolerance.
/// Returns the sum of ranks of positive deviations and the signs ordered by |dev|.
fn signed_ranks(dev: &[f64]) -> (f64, Vec<bool>) {
    let scale = dev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let zero = 1e-12 * scale;
    let mut order: Vec<usize> = (0..dev.len()).collect();
    order.sort_by(|&a, &b| dev[a].abs().total_cmp(&dev[b].abs()));
    let mut ranks = vec![0.0; dev.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        let head = dev[order[i]].abs();
        while j < order.len() && dev[order[j]].abs() - head <= 1e-9 * head.max(zero) {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    let positive = |k: usize| dev[k] > zero;
    let t_pos = (0..dev.len())
        .filter(|&k| positive(k))
        .map(|k| ranks[k])
        .sum();
    let signs = order.iter().map(|&k| positive(k)).collect();
    (t_pos, signs)
}

/// Estimated number of studies missing on the left given deviations from
/// the current centre.
fn missing_estimate(dev: &[f64], estimator: Estimator) -> f64 {
    let n = dev.len() as f64;
    let (t_pos, signs) = signed_ranks(dev);
    match estimator {
        Estimator::L0 => (4.0 * t_pos - n * (n + 1.0)) / (2.0 * n - 1.0),
        Estimator::R0 => signs.iter().rev().take_while(|&&p| p).count() as f64 - 1.0,
    }
}

fn fixed_effect_mean(ys: &[f64], ss: &[f64]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (y, s) in ys.iter().zip(ss) {
        let w = 1.0 / (s * s);
        num += w * y;
        den += w;
    }
    num / den
}

struct SideOutcome {
    k0: usize,
    center: f64,
    filled_estimate: f64,
    initial: f64,
    iterations: usize,
}

/// Trim-and-fill for studies missing on the left; `ys` sorted ascending.
fn trim_fill_left(ys: &[f64], ss: &[f64], estimator: Estimator) -> Result<SideOutcome> {
    let n = ys.len();
    let mut k0 = 0usize;
    let mut trajectory = vec![0usize];
    let mut initial = None;
    for iter in 1..=TF_MAX_ITER {
        let keep = n - k0;
        let center = fixed_effect_mean(&ys[..keep], &ss[..keep]);
        let dev: Vec<f64> = ys.iter().map(|y| y - center).collect();
        let est = missing_estimate(&dev, estimator);
        initial.get_or_insert(est);
        let k_new = (est.round().max(0.0) as usize).min(n - 2);
        if k_new == k0 {
            let mut fy: Vec<f64> = ys.to_vec();
            let mut fs: Vec<f64> = ss.to_vec();
            for i in (n - k0)..n {
                fy.push(2.0 * center - ys[i]);
                fs.push(ss[i]);
            }
            return Ok(SideOutcome {
                k0,
                center,
                filled_estimate: fixed_effect_mean(&fy, &fs),
                initial: initial.unwrap_or(0.0),
                iterations: iter,
            });
        }
        k0 = k_new;
        trajectory.push(k0);
    }
    Err(Error::NonConvergence { trajectory })
}

/// Duval–Tweedie Trim-and-Fill with fixed-effect centring.
///
/// The p-value tests k0 = 0 through the untrimmed estimator: the L0 form is
/// affine in the Wilcoxon signed-rank sum, referred to its normal
/// approximation; for R0 the p-value is 2^−R0. The L0 form is two-sided.
/// `extras` carries `k0`, `side` (−1 left, +1 right), the
/// centre and the pooled fixed-effect estimate after filling.
pub fn trim_and_fill(data: &Dataset, estimator: Estimator, side: Side) -> Result<ComparatorResult> {
    let mut studies = data.studies().to_vec();
    studies.sort_by(|a, b| a.y.total_cmp(&b.y).then(a.s.total_cmp(&b.s)));
    let ys: Vec<f64> = studies.iter().map(|st| st.y).collect();
    let ss: Vec<f64> = studies.iter().map(|st| st.s).collect();
    let left = || trim_fill_left(&ys, &ss, estimator);
    let right = || {
        let neg: Vec<f64> = ys.iter().rev().map(|y| -y).collect();
        let ss_rev: Vec<f64> = ss.iter().rev().copied().collect();
        trim_fill_left(&neg, &ss_rev, estimator).map(|o| SideOutcome {
            center: -o.center,
            filled_estimate: -o.filled_estimate,
            ..o
        })
    };
    let (outcome, sign) = match side {
        Side::Left => (left()?, -1.0),
        Side::Right => (right()?, 1.0),
        Side::Auto => {
            let (l, r) = (left()?, right()?);
            if r.k0 > l.k0 {
                (r, 1.0)
            } else {
                (l, -1.0)
            }
        }
    };

    let n = data.n() as f64;
    let p_value = match estimator {
        Estimator::L0 => {
            let sd = 4.0 * (n * (n + 1.0) * (2.0 * n + 1.0) / 24.0).sqrt() / (2.0 * n - 1.0);
            (2.0 * normal::cdf(-(outcome.initial / sd).abs())).min(1.0)
        }
        Estimator::R0 => 0.5f64.powf(outcome.initial.max(0.0)).min(1.0),
    };
    Ok(ComparatorResult {
        method: Method::TrimFill,
        statistic: outcome.initial,
        p_value,
        extras: BTreeMap::from([
            ("k0".to_string(), outcome.k0 as f64),
            ("side".to_string(), sign),
            ("center".to_string(), outcome.center),
            ("filled_estimate".to_string(), outcome.filled_estimate),
            ("iterations".to_string(), outcome.iterations as f64),
        ]),
    })
}
