//! Maximum-likelihood fits: the random-effects null (ρ = 0) and the full
//! selection model at fixed (γ0, γ1) for sensitivity analysis.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, random_effects_loglik, CopasParams, Dataset};
use crate::optim;

const MAX_ITERATIONS: usize = 500;
const GRID_SIZE: usize = 80;
/// ρ is searched on (−RHO_BOUND, RHO_BOUND).
pub const RHO_BOUND: f64 = 0.9999;

/// Constrained ML estimates under ρ = 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullFit {
    pub mu_hat: f64,
    pub tau2_hat: f64,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// DerSimonian–Laird moment estimates (μ, τ²).
pub fn dersimonian_laird(data: &Dataset) -> (f64, f64) {
    let data = data.canonical();
    let w: Vec<f64> = data.ses().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let fixed = weighted_mean(&data, 0.0);
    let q: f64 = data
        .ys()
        .zip(&w)
        .map(|(y, wi)| wi * (y - fixed).powi(2))
        .sum();
    let denom = sw - sw2 / sw;
    let tau2 = if denom > 0.0 {
        ((q - (data.n() as f64 - 1.0)) / denom).max(0.0)
    } else {
        0.0
    };
    (weighted_mean(&data, tau2), tau2)
}

/// Σ wᵢyᵢ / Σ wᵢ with wᵢ = 1/(τ²+sᵢ²), centred on the first study so that
/// identical effects reproduce that effect exactly.
fn weighted_mean(data: &Dataset, tau2: f64) -> f64 {
    let y0 = data.studies()[0].y;
    let (mut num, mut den) = (0.0, 0.0);
    for st in data.studies() {
        let w = 1.0 / (tau2 + st.s * st.s);
        num += w * (st.y - y0);
        den += w;
    }
    y0 + num / den
}

/// Derivative of the μ-profiled log-likelihood in τ².
fn profile_score(data: &Dataset, tau2: f64) -> f64 {
    let mu = weighted_mean(data, tau2);
    0.5 * data
        .studies()
        .iter()
        .map(|st| {
            let w = 1.0 / (tau2 + st.s * st.s);
            w * w * (st.y - mu).powi(2) - w
        })
        .sum::<f64>()
}

fn profile_loglik(data: &Dataset, tau2: f64) -> f64 {
    random_effects_loglik(weighted_mean(data, tau2), tau2, data)
}

/// ML fit of the random-effects model, i.e. the selection model under ρ = 0.
///
/// μ is profiled out, and τ² is located on [0, τ²_max] by a scan that
/// includes the DerSimonian–Laird estimate followed by Brent's method on the
/// profile score. Computations use the canonical study order, so the
/// estimates do not depend on the order of the input.
pub fn fit_null(data: &Dataset) -> Result<NullFit> {
    let canon = data.canonical();
    let n = canon.n() as f64;
    let mean = canon.ys().sum::<f64>() / n;
    let var = canon.ys().map(|y| (y - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let tau2_max = (10.0 * var).max(1.0);
    let (_, tau2_dl) = dersimonian_laird(&canon);

    let mut candidates: Vec<f64> = (0..=GRID_SIZE)
        .map(|k| tau2_max * 10f64.powf(-10.0 + 10.0 * k as f64 / GRID_SIZE as f64))
        .collect();
    candidates.push(0.0);
    candidates.push(tau2_dl.min(tau2_max));
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let values: Vec<f64> = candidates
        .iter()
        .map(|&t| profile_loglik(&canon, t))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical {
            study: None,
            msg: "non-finite profile log-likelihood".into(),
        });
    }
    let mut iterations = candidates.len();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > values[b] { i } else { b });

    let score_at = |t: f64| profile_score(&canon, t);
    let mut tau2_hat = candidates[best];
    let mut converged = true;
    let bracket = if score_at(tau2_hat) > 0.0 {
        candidates.get(best + 1).map(|&hi| (tau2_hat, hi))
    } else if best > 0 && score_at(tau2_hat) < 0.0 {
        Some((candidates[best - 1], tau2_hat))
    } else {
        None
    };
    match bracket {
        Some((lo, hi)) => {
            let budget = MAX_ITERATIONS - iterations;
            match optim::brent_root(score_at, lo, hi, budget) {
                Some((root, used)) => {
                    iterations += used;
                    if profile_loglik(&canon, root) >= values[best] - 1e-10 {
                        tau2_hat = root;
                    }
                }
                None => {
                    // No sign change: fall back to a golden-section search.
                    let (x, used) = golden_max(|t| profile_loglik(&canon, t), lo, hi, budget);
                    iterations += used;
                    if profile_loglik(&canon, x) > values[best] {
                        tau2_hat = x;
                    }
                    converged = used < budget;
                }
            }
        }
        // Score is non-positive at zero: boundary solution. Positive score at
        // τ²_max means the maximizer lies beyond the search interval.
        None => converged = score_at(tau2_hat) <= 0.0 || best + 1 < candidates.len(),
    }
    if iterations > MAX_ITERATIONS {
        return Err(Error::Fit(format!(
            "null fit did not converge in {MAX_ITERATIONS} iterations (best tau2 {tau2_hat})"
        )));
    }

    let mu_hat = weighted_mean(&canon, tau2_hat);
    Ok(NullFit {
        mu_hat,
        tau2_hat,
        loglik: random_effects_loglik(mu_hat, tau2_hat, data),
        converged,
        iterations,
    })
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, max_iter: usize) -> (f64, usize) {
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let mut iter = 0;
    while iter < max_iter && (b - a).abs() > 1e-14 * (1.0 + a.abs() + b.abs()) {
        iter += 1;
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    (0.5 * (a + b), iter)
}

/// Full selection-model fit at fixed (γ0, γ1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityFit {
    pub gamma0: f64,
    pub gamma1: f64,
    pub mu_adj: f64,
    pub tau2_adj: f64,
    pub rho_hat: f64,
    pub loglik: f64,
    /// Wald standard error of `mu_adj` from the inverse observed information.
    pub se_mu: f64,
    pub mu_ci: (f64, f64),
    pub converged: bool,
    /// ρ̂ sits at the edge of the search interval.
    pub rho_at_boundary: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y + (-(-y).exp_m1()).ln()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maximizes the selection-model likelihood over (μ, τ², ρ) with (γ0, γ1)
/// held fixed, from the null fit with ρ ∈ {−0.5, 0, 0.5}.
pub fn fit_sensitivity(data: &Dataset, gamma0: f64, gamma1: f64) -> Result<SensitivityFit> {
    if !(gamma0.is_finite() && gamma1.is_finite()) {
        return Err(Error::Domain(format!(
            "selection parameters must be finite, got ({gamma0}, {gamma1})"
        )));
    }
    let null = fit_null(data)?;
    let unpack = |x: &[f64]| CopasParams {
        mu: x[0],
        tau2: softplus(x[1]),
        rho: RHO_BOUND * x[2].tanh(),
        gamma0,
        gamma1,
    };
    let objective = |x: &[f64]| -> Option<(f64, Vec<f64>)> {
        let p = unpack(x);
        let ll = model::copas_loglik(&p, data).ok()?;
        let g = model::copas_gradient(&p, data).ok()?;
        let th = x[2].tanh();
        Some((
            -ll,
            vec![
                -g[0],
                -g[1] * sigmoid(x[1]),
                -g[2] * RHO_BOUND * (1.0 - th * th),
            ],
        ))
    };

    let theta0 = softplus_inv(null.tau2_hat.max(1e-12));
    let mut best: Option<optim::Minimum> = None;
    for rho0 in [-0.5f64, 0.0, 0.5] {
        let x0 = [null.mu_hat, theta0, (rho0 / RHO_BOUND).atanh()];
        let Some(m) = optim::bfgs(objective, &x0, 1e-9, MAX_ITERATIONS) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| m.value < b.value) {
            best = Some(m);
        }
    }
    let best =
        best.ok_or_else(|| Error::Fit("every start of the sensitivity fit failed".into()))?;
    let p = unpack(&best.x);
    let rho_at_boundary = p.rho.abs() >= RHO_BOUND - 1e-4;
    let se_mu = wald_se_mu(&p, data)?;
    Ok(SensitivityFit {
        gamma0,
        gamma1,
        mu_adj: p.mu,
        tau2_adj: p.tau2,
        rho_hat: p.rho,
        loglik: -best.value,
        se_mu,
        mu_ci: (p.mu - 1.96 * se_mu, p.mu + 1.96 * se_mu),
        converged: best.converged,
        rho_at_boundary,
    })
}

/// Standard error of μ from the inverse observed information over the
/// parameters that are not on a boundary; μ alone as a last resort.
fn wald_se_mu(p: &CopasParams, data: &Dataset) -> Result<f64> {
    let step = |x: f64| f64::max(1e-5, 1e-5 * x.abs());
    let tau_free = p.tau2 > 1e-8;
    let rho_free = p.rho.abs() < RHO_BOUND - 1e-4;
    let steps = [
        step(p.mu),
        if tau_free {
            step(p.tau2).min(0.5 * p.tau2)
        } else {
            0.0
        },
        if rho_free {
            1e-5f64.min(0.5 * (1.0 - p.rho.abs()))
        } else {
            0.0
        },
    ];
    let info = model::information_at(p, data, steps)?;
    let free: Vec<usize> = (0..3).filter(|&k| steps[k] != 0.0).collect();
    let m = DMatrix::from_fn(free.len(), free.len(), |i, j| info[free[i]][free[j]]);
    if let Some(chol) = m.clone().cholesky() {
        let inv = chol.inverse();
        if inv[(0, 0)] > 0.0 {
            return Ok(inv[(0, 0)].sqrt());
        }
    }
    if info[0][0] > 0.0 {
        return Ok(1.0 / info[0][0].sqrt());
    }
    Err(Error::Fit(
        "observed information for mu is not positive".into(),
    ))
}
