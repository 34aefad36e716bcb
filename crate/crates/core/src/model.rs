//! Observed-data likelihood of the Copas selection model with σᵢ² ≡ sᵢ², its
//! score in ρ at ρ = 0 and the efficient information for ρ.
//!
//! Additive constants (−½ log 2π per study) are dropped everywhere.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::normal;

/// One published study: effect estimate and its within-study standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub y: f64,
    pub s: f64,
}

impl Study {
    pub fn new(y: f64, s: f64) -> Result<Self> {
        if !y.is_finite() {
            return Err(Error::Domain(format!(
                "effect size must be finite, got {y}"
            )));
        }
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::Domain(format!(
                "standard error must be finite and positive, got {s}"
            )));
        }
        Ok(Study { y, s })
    }
}

/// Minimum number of studies accepted by [`Dataset::new`].
pub const MIN_STUDIES: usize = 3;

/// The observed studies entering a meta-analysis, in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    studies: Vec<Study>,
}

impl Dataset {
    pub fn new(studies: Vec<Study>) -> Result<Self> {
        if studies.len() < MIN_STUDIES {
            return Err(Error::Domain(format!(
                "need at least {MIN_STUDIES} studies, got {}",
                studies.len()
            )));
        }
        for (i, st) in studies.iter().enumerate() {
            Study::new(st.y, st.s).map_err(|e| Error::Domain(format!("study {i}: {e}")))?;
        }
        Ok(Dataset { studies })
    }

    /// Builds a dataset from parallel effect and standard-error slices.
    pub fn from_slices(y: &[f64], s: &[f64]) -> Result<Self> {
        if y.len() != s.len() {
            return Err(Error::Domain(format!(
                "length mismatch: {} effects, {} standard errors",
                y.len(),
                s.len()
            )));
        }
        Self::new(y.iter().zip(s).map(|(&y, &s)| Study { y, s }).collect())
    }

    pub fn studies(&self) -> &[Study] {
        &self.studies
    }

    pub fn n(&self) -> usize {
        self.studies.len()
    }

    pub fn ys(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|st| st.y)
    }

    pub fn ses(&self) -> impl Iterator<Item = f64> + '_ {
        self.studies.iter().map(|st| st.s)
    }

    pub fn min_s(&self) -> f64 {
        self.ses().fold(f64::INFINITY, f64::min)
    }

    pub fn max_s(&self) -> f64 {
        self.ses().fold(0.0, f64::max)
    }

    /// Copy sorted by (s, y). Order-free statistics are summed in this order
    /// so that they are bit-for-bit invariant to permutations of the input.
    pub fn canonical(&self) -> Dataset {
        let mut studies = self.studies.clone();
        studies.sort_by(|a, b| a.s.total_cmp(&b.s).then(a.y.total_cmp(&b.y)));
        Dataset { studies }
    }

    /// Every study shifted by `c` on the effect scale.
    pub fn shifted(&self, c: f64) -> Dataset {
        Dataset {
            studies: self
                .studies
                .iter()
                .map(|st| Study {
                    y: st.y + c,
                    s: st.s,
                })
                .collect(),
        }
    }
}

/// Full parameter vector of the selection model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CopasParams {
    pub mu: f64,
    pub tau2: f64,
    pub rho: f64,
    pub gamma0: f64,
    pub gamma1: f64,
}

impl CopasParams {
    pub fn null(mu: f64, tau2: f64, gamma0: f64, gamma1: f64) -> Self {
        CopasParams {
            mu,
            tau2,
            rho: 0.0,
            gamma0,
            gamma1,
        }
    }

    fn validate(&self, data: &Dataset) -> Result<()> {
        let finite = [self.mu, self.tau2, self.rho, self.gamma0, self.gamma1]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::Domain(format!("non-finite parameter in {self:?}")));
        }
        if self.tau2 < 0.0 {
            return Err(Error::Domain(format!(
                "tau2 must be >= 0, got {}",
                self.tau2
            )));
        }
        if self.rho.abs() >= 1.0 {
            return Err(Error::Domain(format!(
                "|rho| must be < 1, got {}",
                self.rho
            )));
        }
        for (i, st) in data.studies().iter().enumerate() {
            let s2 = st.s * st.s;
            if self.rho * self.rho * s2 / (self.tau2 + s2) >= 1.0 {
                return Err(Error::Domain(format!(
                    "rho^2 s^2/(tau2+s^2) >= 1 at study {i}"
                )));
            }
        }
        Ok(())
    }
}

/// Marginal publication probability Φ(γ0 + γ1/s).
pub fn selection_prob(gamma0: f64, gamma1: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::Domain(format!(
            "standard error must be positive, got {s}"
        )));
    }
    Ok(normal::cdf(gamma0 + gamma1 / s))
}

/// Random-effects log-likelihood Σ −½ log(τ²+sᵢ²) − (yᵢ−μ)²/(2(τ²+sᵢ²)).
pub fn random_effects_loglik(mu: f64, tau2: f64, data: &Dataset) -> f64 {
    data.studies()
        .iter()
        .map(|st| {
            let d = tau2 + st.s * st.s;
            let r = st.y - mu;
            -0.5 * d.ln() - r * r / (2.0 * d)
        })
        .sum()
}

/// Log-likelihood contribution of one study and its gradient in (μ, τ², ρ).
///
/// τ² may be slightly negative here (as long as τ² + s² > 0) so that central
/// differences can straddle the τ² = 0 boundary.
fn study_terms(p: &CopasParams, st: &Study, idx: usize) -> Result<(f64, [f64; 3])> {
    let s = st.s;
    let d = p.tau2 + s * s;
    if !(d > 0.0) {
        return Err(Error::numerical(idx, "tau2 + s^2 is not positive"));
    }
    let r = st.y - p.mu;
    let u = p.gamma0 + p.gamma1 / s;
    let a = s * r / d;
    let b = s * s / d;
    let q2 = 1.0 - p.rho * p.rho * b;
    if !(q2 > 0.0) {
        return Err(Error::numerical(
            idx,
            "1 - rho^2 s^2/(tau2+s^2) is not positive",
        ));
    }
    let q = q2.sqrt();
    let num = u + p.rho * a;
    let v = num / q;

    let ll = (-0.5 * d.ln() - r * r / (2.0 * d)) + (normal::log_cdf(v) - normal::log_cdf(u));
    let lam = normal::inverse_mills(v);

    let dv_dmu = -p.rho * s / (d * q);
    let da_dt = -s * r / (d * d);
    let db_dt = -s * s / (d * d);
    let dq_dt = -p.rho * p.rho * db_dt / (2.0 * q);
    let dv_dt = p.rho * da_dt / q - num * dq_dt / q2;
    let dv_drho = a / q + num * p.rho * b / (q * q2);

    let grad = [
        r / d + lam * dv_dmu,
        -0.5 / d + r * r / (2.0 * d * d) + lam * dv_dt,
        lam * dv_drho,
    ];
    if !ll.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::numerical(idx, "non-finite likelihood term"));
    }
    Ok((ll, grad))
}

/// Observed-data log-likelihood of the selection model.
pub fn copas_loglik(params: &CopasParams, data: &Dataset) -> Result<f64> {
    params.validate(data)?;
    let mut total = 0.0;
    for (i, st) in data.studies().iter().enumerate() {
        total += study_terms(params, st, i)?.0;
    }
    Ok(total)
}

/// Analytic gradient of [`copas_loglik`] in (μ, τ², ρ).
pub fn copas_gradient(params: &CopasParams, data: &Dataset) -> Result<[f64; 3]> {
    params.validate(data)?;
    gradient_unchecked(params, data)
}

fn gradient_unchecked(params: &CopasParams, data: &Dataset) -> Result<[f64; 3]> {
    let mut g = [0.0; 3];
    for (i, st) in data.studies().iter().enumerate() {
        let (_, gi) = study_terms(params, st, i)?;
        for k in 0..3 {
            g[k] += gi[k];
        }
    }
    Ok(g)
}

/// Per-study scores Sᵢ = ∂lᵢ/∂ρ at ρ = 0, i.e. λ(uᵢ)·sᵢ(yᵢ−μ)/(τ²+sᵢ²).
pub fn score_rho_at_null(
    gamma0: f64,
    gamma1: f64,
    mu: f64,
    tau2: f64,
    data: &Dataset,
) -> Result<Vec<f64>> {
    CopasParams::null(mu, tau2, gamma0, gamma1).validate(data)?;
    data.studies()
        .iter()
        .enumerate()
        .map(|(i, st)| {
            let u = gamma0 + gamma1 / st.s;
            let score = normal::inverse_mills(u) * st.s * (st.y - mu) / (tau2 + st.s * st.s);
            if score.is_finite() {
                Ok(score)
            } else {
                Err(Error::numerical(i, "non-finite score"))
            }
        })
        .collect()
}

/// Observed information −∇²l in (μ, τ², ρ) at ρ = 0, by central differences
/// of the analytic gradient.
///
/// When τ² = 0 the τ² row and column are left at zero, since the τ²
/// direction is not perturbed at the boundary.
pub fn observed_information(
    gamma0: f64,
    gamma1: f64,
    mu: f64,
    tau2: f64,
    data: &Dataset,
) -> Result<[[f64; 3]; 3]> {
    let base = CopasParams::null(mu, tau2, gamma0, gamma1);
    base.validate(data)?;
    let step = |x: f64| f64::max(1e-5, 1e-5 * x.abs());
    let steps = [
        step(mu),
        if tau2 > 0.0 {
            step(tau2).min(0.5 * data.min_s().powi(2))
        } else {
            0.0
        },
        step(0.0),
    ];
    information_at(&base, data, steps)
}

/// −∇²l in (μ, τ², ρ) from central differences of the analytic gradient.
/// Directions with a zero step are skipped and their rows left at zero.
pub(crate) fn information_at(
    base: &CopasParams,
    data: &Dataset,
    steps: [f64; 3],
) -> Result<[[f64; 3]; 3]> {
    let mut hess = [[0.0; 3]; 3];
    for (j, &h) in steps.iter().enumerate() {
        if h == 0.0 {
            continue;
        }
        let mut plus = *base;
        let mut minus = *base;
        match j {
            0 => {
                plus.mu += h;
                minus.mu -= h;
            }
            1 => {
                plus.tau2 += h;
                minus.tau2 -= h;
            }
            _ => {
                plus.rho += h;
                minus.rho -= h;
            }
        }
        let gp = gradient_unchecked(&plus, data)?;
        let gm = gradient_unchecked(&minus, data)?;
        for k in 0..3 {
            hess[j][k] = (gp[k] - gm[k]) / (2.0 * h);
        }
    }

    let mut info = [[0.0; 3]; 3];
    for j in 0..3 {
        for k in 0..3 {
            if steps[j] == 0.0 || steps[k] == 0.0 {
                continue;
            }
            info[j][k] = -0.5 * (hess[j][k] + hess[k][j]);
        }
    }
    Ok(info)
}

/// Score total, efficient information and per-study scores at one (γ0, γ1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfficientScoreParts {
    pub score_total: f64,
    pub info_efficient: f64,
    pub per_study_scores: Vec<f64>,
}

impl EfficientScoreParts {
    /// Standardized score; zero when the information is zero.
    pub fn z(&self) -> f64 {
        if self.info_efficient > 0.0 {
            self.score_total / self.info_efficient.sqrt()
        } else {
            0.0
        }
    }
}

/// Which information matrix standardizes the score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InformationKind {
    /// Fisher information of the selected-data model at ρ = 0, evaluated at
    /// the supplied (μ, τ²).
    #[default]
    Expected,
    /// Negative Hessian of the log-likelihood at the data.
    Observed,
}

/// Efficient information for ρ at ρ = 0, Fisher form.
///
/// Under ρ = 0 the selected yᵢ are N(μ, dᵢ) with dᵢ = τ²+sᵢ², which gives
/// I_ρρ = Σ cᵢ²/dᵢ, I_ρμ = Σ cᵢ/dᵢ, I_ρτ² = 0 and I_μμ = Σ 1/dᵢ with
/// cᵢ = λ(uᵢ)sᵢ. The Schur complement is then the 1/d-weighted spread of
/// the cᵢ, which is never negative and vanishes when all sᵢ are equal.
pub fn efficient_information(
    gamma0: f64,
    gamma1: f64,
    mu: f64,
    tau2: f64,
    data: &Dataset,
) -> Result<f64> {
    CopasParams::null(mu, tau2, gamma0, gamma1).validate(data)?;
    let terms: Vec<(f64, f64)> = data
        .studies()
        .iter()
        .map(|st| {
            let c = normal::inverse_mills(gamma0 + gamma1 / st.s) * st.s;
            (c, 1.0 / (tau2 + st.s * st.s))
        })
        .collect();
    let c0 = terms[0].0;
    let (num, den) = terms
        .iter()
        .fold((0.0, 0.0), |(n, d), &(c, w)| (n + w * (c - c0), d + w));
    let centre = c0 + num / den;
    let eff: f64 = terms.iter().map(|&(c, w)| w * (c - centre).powi(2)).sum();
    if !eff.is_finite() {
        return Err(Error::Numerical {
            study: None,
            msg: "non-finite efficient information".into(),
        });
    }
    Ok(eff)
}

/// Efficient information for ρ at ρ = 0 from the observed information:
/// the Schur complement of the nuisance block of [`observed_information`].
///
/// The nuisance block is (μ, τ²) for τ² > 0 and μ alone when τ² = 0.
/// Magnitudes below 1e−8 (relative to Î_ρρ when that exceeds one) are
/// clamped to zero; more negative values are a numerical error.
pub fn observed_efficient_information(
    gamma0: f64,
    gamma1: f64,
    mu: f64,
    tau2: f64,
    data: &Dataset,
) -> Result<f64> {
    let info = observed_information(gamma0, gamma1, mu, tau2, data)?;
    let i_rr = info[2][2];
    let projected = if tau2 > 0.0 {
        let block = Matrix2::new(info[0][0], info[0][1], info[1][0], info[1][1]);
        let cross = Vector2::new(info[0][2], info[1][2]);
        let chol = block.cholesky().ok_or_else(|| {
            Error::DegenerateInformation("(mu, tau2) block is not positive definite".into())
        })?;
        cross.dot(&chol.solve(&cross))
    } else {
        if !(info[0][0] > 0.0) {
            return Err(Error::DegenerateInformation(
                "mu information is not positive".into(),
            ));
        }
        info[0][2] * info[0][2] / info[0][0]
    };
    let eff = i_rr - projected;
    if !eff.is_finite() {
        return Err(Error::Numerical {
            study: None,
            msg: "non-finite efficient information".into(),
        });
    }
    let tol = 1e-8 * i_rr.abs().max(1.0);
    if eff < -tol {
        return Err(Error::Numerical {
            study: None,
            msg: format!("negative efficient information {eff:.3e}"),
        });
    }
    Ok(if eff <= tol { 0.0 } else { eff })
}

/// Scores and efficient information together, as needed for Z.
pub fn efficient_score(
    kind: InformationKind,
    gamma0: f64,
    gamma1: f64,
    mu: f64,
    tau2: f64,
    data: &Dataset,
) -> Result<EfficientScoreParts> {
    let per_study_scores = score_rho_at_null(gamma0, gamma1, mu, tau2, data)?;
    let info_efficient = match kind {
        InformationKind::Expected => efficient_information(gamma0, gamma1, mu, tau2, data)?,
        InformationKind::Observed => {
            observed_efficient_information(gamma0, gamma1, mu, tau2, data)?
        }
    };
    Ok(EfficientScoreParts {
        score_total: per_study_scores.iter().sum(),
        info_efficient,
        per_study_scores,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fixture() -> Dataset {
        Dataset::from_slices(
            &[0.52, 0.31, 0.95, 0.12, 0.68],
            &[0.21, 0.35, 0.62, 0.15, 0.44],
        )
        .unwrap()
    }

    #[test]
    fn selection_prob_examples() {
        assert_eq!(selection_prob(0.0, 0.0, 1.0).unwrap(), 0.5);
        assert_relative_eq!(
            selection_prob(-1.0, 0.65, 0.65).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_relative_eq!(
            selection_prob(-1.0, 0.65, 0.2).unwrap(),
            0.987_775_527_344_955_3,
            max_relative = 1e-12
        );
        assert!(matches!(
            selection_prob(0.0, 1.0, 0.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            selection_prob(0.0, 1.0, -1.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn loglik_reduces_to_random_effects_at_rho_zero() {
        let data = fixture();
        for &(g0, g1) in &[(-1.0, 0.65), (2.0, 0.0), (-2.0, 1.9), (0.3, -0.4)] {
            let p = CopasParams::null(0.4, 0.02, g0, g1);
            assert_eq!(
                copas_loglik(&p, &data).unwrap(),
                random_effects_loglik(0.4, 0.02, &data)
            );
        }
    }

    #[test]
    fn single_study_at_its_mean_has_zero_loglik() {
        let st = [Study { y: 0.3, s: 1.0 }];
        let total: f64 = st
            .iter()
            .enumerate()
            .map(|(i, st)| {
                study_terms(&CopasParams::null(0.3, 0.0, -0.7, 0.2), st, i)
                    .unwrap()
                    .0
            })
            .sum();
        assert_eq!(total, 0.0);
    }

    #[test]
    fn loglik_matches_reference_value() {
        // Term-by-term evaluation with mpmath at 50 digits.
        let p = CopasParams {
            mu: 0.4,
            tau2: 0.01,
            rho: 0.4,
            gamma0: -1.0,
            gamma1: 0.65,
        };
        assert_relative_eq!(
            copas_loglik(&p, &fixture()).unwrap(),
            REFERENCE_LOGLIK,
            max_relative = 1e-12
        );
    }
    const REFERENCE_LOGLIK: f64 = 3.880_945_184_031_957_2;

    #[test]
    fn invalid_params_are_domain_errors() {
        let data = fixture();
        let mut p = CopasParams::null(0.0, -0.1, 0.0, 0.0);
        assert!(matches!(copas_loglik(&p, &data), Err(Error::Domain(_))));
        p.tau2 = 0.1;
        p.rho = 1.0;
        assert!(matches!(copas_loglik(&p, &data), Err(Error::Domain(_))));
        p.rho = f64::NAN;
        assert!(matches!(copas_loglik(&p, &data), Err(Error::Domain(_))));
    }

    #[test]
    fn score_vanishes_when_effects_equal_mu() {
        let data = Dataset::from_slices(&[0.2; 4], &[0.1, 0.3, 0.5, 0.9]).unwrap();
        let scores = score_rho_at_null(-1.0, 0.65, 0.2, 0.05, &data).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn score_vanishes_without_selection() {
        let scores = score_rho_at_null(40.0, 0.0, 0.1, 0.02, &fixture()).unwrap();
        assert!(scores.iter().all(|s| s.abs() < 1e-300));
    }

    #[test]
    fn score_matches_finite_difference() {
        let data = fixture();
        let (g0, g1, mu, tau2) = (-1.0, 0.65, 0.45, 0.03);
        let scores = score_rho_at_null(g0, g1, mu, tau2, &data).unwrap();
        let h = 1e-6;
        for (i, st) in data.studies().iter().enumerate() {
            let mut p = CopasParams::null(mu, tau2, g0, g1);
            p.rho = h;
            let up = study_terms(&p, st, i).unwrap().0;
            p.rho = -h;
            let down = study_terms(&p, st, i).unwrap().0;
            assert_relative_eq!(scores[i], (up - down) / (2.0 * h), max_relative = 1e-5);
        }
    }

    #[test]
    fn gradient_matches_finite_difference_away_from_null() {
        let data = fixture();
        let p = CopasParams {
            mu: 0.35,
            tau2: 0.04,
            rho: 0.55,
            gamma0: -0.8,
            gamma1: 0.3,
        };
        let g = copas_gradient(&p, &data).unwrap();
        let h = 1e-6;
        let fd = |f: &dyn Fn(&mut CopasParams, f64)| {
            let mut up = p;
            f(&mut up, h);
            let mut dn = p;
            f(&mut dn, -h);
            (copas_loglik(&up, &data).unwrap() - copas_loglik(&dn, &data).unwrap()) / (2.0 * h)
        };
        assert_relative_eq!(g[0], fd(&|q, h| q.mu += h), max_relative = 1e-5);
        assert_relative_eq!(g[1], fd(&|q, h| q.tau2 += h), max_relative = 1e-5);
        assert_relative_eq!(g[2], fd(&|q, h| q.rho += h), max_relative = 1e-5);
    }

    /// Residuals of ±1.5 standard deviations around μ = 0.6 with τ² = 0.05.
    fn info_fixture() -> Dataset {
        let ss = [
            0.4, 0.12, 0.2, 0.9, 0.1, 0.5, 0.25, 0.7, 0.15, 0.33, 1.6, 1.1,
        ];
        let ys: Vec<f64> = ss
            .iter()
            .enumerate()
            .map(|(i, s)| 0.6 + if i % 2 == 0 { 1.5 } else { -1.5 } * (0.05f64 + s * s).sqrt())
            .collect();
        Dataset::from_slices(&ys, &ss).unwrap()
    }

    #[test]
    fn information_doubles_on_duplicated_data() {
        let data = info_fixture();
        let mut twice = data.studies().to_vec();
        twice.extend_from_slice(data.studies());
        let twice = Dataset::new(twice).unwrap();
        for kind in [InformationKind::Expected, InformationKind::Observed] {
            let one = efficient_score(kind, -1.0, 0.65, 0.6, 0.05, &data).unwrap();
            let two = efficient_score(kind, -1.0, 0.65, 0.6, 0.05, &twice).unwrap();
            assert!(one.info_efficient > 0.0, "{kind:?}");
            assert_relative_eq!(
                two.info_efficient,
                2.0 * one.info_efficient,
                max_relative = 1e-6
            );
        }
    }

    #[test]
    fn efficient_information_bounded_by_diagonal() {
        let data = info_fixture();
        for &(g0, g1) in &[(-1.0, 0.65), (-2.0, 0.1), (-1.5, 1.2)] {
            let full = observed_information(g0, g1, 0.6, 0.05, &data).unwrap();
            let eff = observed_efficient_information(g0, g1, 0.6, 0.05, &data).unwrap();
            assert!(eff >= 0.0);
            assert!(full[2][2] >= eff);
            // Fisher form: I_ρρ = Σ λ² s²/d.
            let i_rr: f64 = data
                .studies()
                .iter()
                .map(|st| {
                    let lam = normal::inverse_mills(g0 + g1 / st.s);
                    lam * lam * st.s * st.s / (0.05 + st.s * st.s)
                })
                .sum();
            let eff = efficient_information(g0, g1, 0.6, 0.05, &data).unwrap();
            assert!(eff > 0.0 && eff <= i_rr);
        }
    }

    #[test]
    fn observed_information_can_be_negative_at_small_n() {
        // Few precise studies with small residuals: the ρρ curvature of the
        // data is negative and the observed route reports a numerical error.
        let err = observed_efficient_information(-1.0, 0.65, 0.45, 0.03, &fixture()).unwrap_err();
        assert!(matches!(err, Error::Numerical { .. }));
        assert!(efficient_information(-1.0, 0.65, 0.45, 0.03, &fixture()).unwrap() > 0.0);
    }

    #[test]
    fn expected_information_is_mean_of_observed() {
        // Gauss–Hermite quadrature of the observed information over
        // yᵢ ~ N(μ, τ²+sᵢ²), study by study, reproduces the Fisher form.
        let (g0, g1, mu, tau2): (f64, f64, f64, f64) = (-0.7, 0.4, 0.3, 0.02);
        let ss: [f64; 5] = [0.15, 0.3, 0.55, 0.9, 1.4];
        let (nodes, weights) = gauss_hermite_20();
        let mut expected = [[0.0; 3]; 3];
        for &s in &ss {
            let sd = (tau2 + s * s).sqrt();
            for (x, w) in nodes.iter().zip(&weights) {
                let y = mu + std::f64::consts::SQRT_2 * sd * x;
                // Three copies keep the dataset valid; divide back out.
                let d = Dataset::from_slices(&[y; 3], &[s; 3]).unwrap();
                let info = observed_information(g0, g1, mu, tau2, &d).unwrap();
                for j in 0..3 {
                    for k in 0..3 {
                        expected[j][k] += w / std::f64::consts::PI.sqrt() * info[j][k] / 3.0;
                    }
                }
            }
        }
        let data = Dataset::from_slices(&[0.0; 5], &ss).unwrap();
        let schur = expected[2][2] - {
            let m = Matrix2::new(
                expected[0][0],
                expected[0][1],
                expected[1][0],
                expected[1][1],
            );
            let c = Vector2::new(expected[0][2], expected[1][2]);
            c.dot(&m.cholesky().unwrap().solve(&c))
        };
        let closed = efficient_information(g0, g1, mu, tau2, &data).unwrap();
        assert_relative_eq!(schur, closed, max_relative = 1e-6);
        assert!(expected[1][2].abs() < 1e-6 * expected[2][2]);
    }

    /// 20-point Gauss–Hermite rule (physicists' weight e^{−x²}), by Newton
    /// iteration on the Hermite recurrence.
    fn gauss_hermite_20() -> (Vec<f64>, Vec<f64>) {
        let n = 20usize;
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let pi4 = std::f64::consts::PI.powf(-0.25);
        let mut z = 0.0f64;
        for i in 0..n / 2 {
            z = match i {
                0 => {
                    (2.0 * n as f64 + 1.0).sqrt()
                        - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0)
                }
                1 => z - 1.14 * (n as f64).powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p1 = pi4;
                let mut p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    p1 = z * (2.0 / (j as f64 + 1.0)).sqrt() * p2
                        - (j as f64 / (j as f64 + 1.0)).sqrt() * p3;
                }
                pp = (2.0 * n as f64).sqrt() * p2;
                let dz = p1 / pp;
                z -= dz;
                if dz.abs() < 1e-15 {
                    break;
                }
            }
            nodes.push(z);
            weights.push(2.0 / (pp * pp));
        }
        let mut all_nodes: Vec<f64> = nodes.iter().map(|x| -x).collect();
        let mut all_weights = weights.clone();
        all_nodes.extend(nodes.iter());
        all_weights.extend(weights.iter());
        (all_nodes, all_weights)
    }

    #[test]
    fn equal_standard_errors_give_zero_information() {
        let data = Dataset::from_slices(&[0.1, 0.5, 0.3, 0.9], &[0.4; 4]).unwrap();
        let mu = data.ys().sum::<f64>() / 4.0;
        let parts = efficient_score(InformationKind::Expected, -1.0, 0.65, mu, 0.0, &data).unwrap();
        assert_eq!(parts.info_efficient, 0.0);
        assert_eq!(parts.z(), 0.0);
    }

    #[test]
    fn boundary_tau2_projects_out_mu_only() {
        let data = info_fixture();
        let info = observed_information(-1.0, 0.65, 0.6, 0.0, &data).unwrap();
        assert_eq!(info[1], [0.0; 3]);
        let eff = observed_efficient_information(-1.0, 0.65, 0.6, 0.0, &data).unwrap();
        assert_relative_eq!(
            eff,
            info[2][2] - info[0][2] * info[0][2] / info[0][0],
            max_relative = 1e-12
        );
    }

    #[test]
    fn dataset_rejects_bad_input() {
        assert!(Dataset::from_slices(&[0.1, 0.2], &[0.1, 0.2]).is_err());
        assert!(Dataset::from_slices(&[0.1, 0.2, 0.3], &[0.1, 0.0, 0.2]).is_err());
        assert!(Dataset::from_slices(&[0.1, f64::NAN, 0.3], &[0.1, 0.1, 0.2]).is_err());
    }
}
