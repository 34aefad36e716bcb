//! The sup-score test: grid of selection parameters, the statistic
//! T = max Z(γ0, γ1)² over the grid, and its parametric-bootstrap p-value.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_null, NullFit};
use crate::model::{efficient_score, Dataset, InformationKind, Study};
use crate::normal;
use crate::rng;

/// Stream index reserved for grid subsampling.
const GRID_STREAM: u64 = u64::MAX;
/// Largest fraction of bootstrap replicates that may fail.
const MAX_DROP_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub gamma0: f64,
    pub gamma1: f64,
}

/// Lattice over (γ0, γ1) and the seeded subsample of it that enters T.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub gamma0_range: (f64, f64),
    pub gamma1_range: (f64, f64),
    pub n_gamma0: usize,
    pub n_gamma1: usize,
    pub n_points_used: usize,
    pub seed: u64,
    /// The γ1 range could not be derived from the data and fell back to [0, 2].
    #[serde(default)]
    pub range_fallback: bool,
    /// Information used to standardize the score at each point.
    #[serde(default)]
    pub information: InformationKind,
}

pub const DEFAULT_LATTICE: usize = 50;
pub const DEFAULT_POINTS: usize = 9;
pub const DEFAULT_B_BOOT: usize = 200;
const GAMMA0_RANGE: (f64, f64) = (-2.0, 2.0);
const GAMMA1_RANGE: (f64, f64) = (0.0, 2.0);

impl GridSpec {
    pub fn new(
        gamma0_range: (f64, f64),
        gamma1_range: (f64, f64),
        n_gamma0: usize,
        n_gamma1: usize,
    ) -> Result<Self> {
        for (name, (lo, hi)) in [("gamma0", gamma0_range), ("gamma1", gamma1_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Domain(format!("invalid {name} range [{lo}, {hi}]")));
            }
        }
        if n_gamma0 == 0 || n_gamma1 == 0 {
            return Err(Error::Domain(
                "lattice needs at least one point per axis".into(),
            ));
        }
        Ok(GridSpec {
            gamma0_range,
            gamma1_range,
            n_gamma0,
            n_gamma1,
            n_points_used: DEFAULT_POINTS.min(n_gamma0 * n_gamma1),
            seed: 0,
            range_fallback: false,
            information: InformationKind::Expected,
        })
    }

    /// The [−2, 2] × [0, 2] rectangle as a 50 × 50 lattice (steps 0.08 and 0.04).
    pub fn standard() -> Self {
        GridSpec::new(GAMMA0_RANGE, GAMMA1_RANGE, DEFAULT_LATTICE, DEFAULT_LATTICE)
            .expect("static grid is valid")
    }

    pub fn with_points(mut self, p: usize) -> Result<Self> {
        if p == 0 || p > self.lattice_size() {
            return Err(Error::Domain(format!(
                "grid points must be in 1..={}, got {p}",
                self.lattice_size()
            )));
        }
        self.n_points_used = p;
        Ok(self)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_information(mut self, kind: InformationKind) -> Self {
        self.information = kind;
        self
    }

    pub fn lattice_size(&self) -> usize {
        self.n_gamma0 * self.n_gamma1
    }

    /// Cell centres of the lattice, γ0 varying slowest.
    pub fn lattice(&self) -> Vec<GridPoint> {
        let axis = |(lo, hi): (f64, f64), n: usize| -> Vec<f64> {
            let step = (hi - lo) / n as f64;
            (0..n).map(|k| lo + (k as f64 + 0.5) * step).collect()
        };
        let g0 = axis(self.gamma0_range, self.n_gamma0);
        let g1 = axis(self.gamma1_range, self.n_gamma1);
        g0.iter()
            .flat_map(|&a| {
                g1.iter().map(move |&b| GridPoint {
                    gamma0: a,
                    gamma1: b,
                })
            })
            .collect()
    }

    /// The `n_points_used` lattice points drawn without replacement. The
    /// draw is a prefix of a seeded shuffle, so a larger `n_points_used` with
    /// the same seed extends a smaller one.
    pub fn points(&self) -> Vec<GridPoint> {
        let mut lattice = self.lattice();
        let p = self.n_points_used.clamp(1, lattice.len());
        let mut rng = rng::stream(self.seed, GRID_STREAM);
        for i in 0..p {
            let j = rng.random_range(i..lattice.len());
            lattice.swap(i, j);
        }
        lattice.truncate(p);
        lattice
    }
}

/// Default grid for a dataset: γ0 ∈ [−2, 2] and a γ1 range such that at
/// γ0 = −2 the most precise study is published with probability `p_max`
/// at the top of the range, and at γ0 = 2 the least precise study with
/// probability `p_min` at the bottom, both clamped to [0, 2].
pub fn default_grid(data: &Dataset, p_min: f64, p_max: f64) -> Result<GridSpec> {
    for p in [p_min, p_max] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!(
                "probability threshold must be in (0,1), got {p}"
            )));
        }
    }
    let (s_min, s_max) = (data.min_s(), data.max_s());
    let clamp = |g: f64| g.clamp(GAMMA1_RANGE.0, GAMMA1_RANGE.1);
    let hi = clamp(s_min * (normal::quantile(p_max) - GAMMA0_RANGE.0));
    let lo = clamp(s_max * (normal::quantile(p_min) - GAMMA0_RANGE.1));
    let mut grid = GridSpec::standard();
    if s_min == s_max || hi <= lo {
        grid.range_fallback = true;
    } else {
        grid.gamma1_range = (lo, hi);
    }
    Ok(grid)
}

/// Standardized score Z(γ0, γ1) at the null estimates.
pub fn z_at(data: &Dataset, gamma0: f64, gamma1: f64, null_fit: &NullFit) -> Result<f64> {
    Ok(efficient_score(
        InformationKind::Expected,
        gamma0,
        gamma1,
        null_fit.mu_hat,
        null_fit.tau2_hat,
        data,
    )?
    .z())
}

/// Z and the efficient information at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridZ {
    pub gamma0: f64,
    pub gamma1: f64,
    pub z: f64,
    pub info_efficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPoint {
    pub point: GridPoint,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TStatistic {
    pub t_stat: f64,
    pub z_values: Vec<GridZ>,
    pub argmax_point: GridPoint,
    pub null_fit: NullFit,
    pub skipped: Vec<SkippedPoint>,
}

/// T = max Z² over the grid's subsampled points.
pub fn t_statistic(data: &Dataset, grid: &GridSpec) -> Result<TStatistic> {
    t_statistic_at(data, &grid.points(), grid.information)
}

/// T over an explicit list of points. Points whose evaluation fails are
/// skipped and reported; ties go to the earliest point.
pub fn t_statistic_at(
    data: &Dataset,
    points: &[GridPoint],
    information: InformationKind,
) -> Result<TStatistic> {
    if points.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    let data = data.canonical();
    let null_fit = fit_null(&data)?;
    let mut z_values = Vec::with_capacity(points.len());
    let mut skipped = Vec::new();
    for &pt in points {
        match efficient_score(
            information,
            pt.gamma0,
            pt.gamma1,
            null_fit.mu_hat,
            null_fit.tau2_hat,
            &data,
        ) {
            Ok(parts) => z_values.push(GridZ {
                gamma0: pt.gamma0,
                gamma1: pt.gamma1,
                z: parts.z(),
                info_efficient: parts.info_efficient,
            }),
            Err(e) => skipped.push(SkippedPoint {
                point: pt,
                reason: e.to_string(),
            }),
        }
    }
    let Some(best) = z_values
        .iter()
        .fold(None::<&GridZ>, |b, gz| match b {
            Some(b) if b.z * b.z >= gz.z * gz.z => Some(b),
            _ => Some(gz),
        })
        .copied()
    else {
        return Err(Error::Test(format!(
            "every grid point failed; first: {}",
            skipped[0].reason
        )));
    };
    Ok(TStatistic {
        t_stat: best.z * best.z,
        argmax_point: GridPoint {
            gamma0: best.gamma0,
            gamma1: best.gamma1,
        },
        z_values,
        null_fit,
        skipped,
    })
}

/// Outcome of the sup-score test with its bootstrap calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTestResult {
    pub t_stat: f64,
    pub z_values: Vec<GridZ>,
    pub argmax_point: GridPoint,
    pub p_value: f64,
    pub b_boot: usize,
    /// T* of the successful replicates, in replicate order.
    pub boot_t: Vec<f64>,
    pub n_dropped: usize,
    pub null_fit: NullFit,
    pub skipped: Vec<SkippedPoint>,
}

/// One parametric-bootstrap sample from the fitted null: sᵢ resampled with
/// replacement, μᵢ ~ N(μ̂₀, τ̂₀²), yᵢ = μᵢ + sᵢεᵢ.
pub fn bootstrap_sample<R: Rng + ?Sized>(
    data: &Dataset,
    null_fit: &NullFit,
    rng: &mut R,
) -> Result<Dataset> {
    let observed = data.studies();
    let tau = null_fit.tau2_hat.sqrt();
    let studies = (0..observed.len())
        .map(|_| {
            let eps: f64 = rng.sample(StandardNormal);
            let s = observed[rng.random_range(0..observed.len())].s;
            let mu_i = null_fit.mu_hat + tau * rng.sample::<f64, _>(StandardNormal);
            Study {
                y: mu_i + s * eps,
                s,
            }
        })
        .collect();
    Dataset::new(studies)
}

/// Sup-score test with a parametric-bootstrap p-value #{T* > T} / B.
///
/// Every replicate reuses the grid points of the observed statistic and
/// refits the null. Replicate `b` draws from stream `b` of `seed`, so the
/// result does not depend on thread scheduling. Failed replicates are
/// dropped from the denominator; more than 10% failures is an error.
pub fn bootstrap_pvalue(
    data: &Dataset,
    grid: &GridSpec,
    b_boot: usize,
    seed: u64,
) -> Result<ScoreTestResult> {
    if b_boot == 0 {
        return Err(Error::Domain("b_boot must be at least 1".into()));
    }
    let points = grid.points();
    let observed = t_statistic_at(data, &points, grid.information)?;
    let null_fit = observed.null_fit;

    let replicates: Vec<Option<f64>> = (0..b_boot as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b);
            let sample = bootstrap_sample(data, &null_fit, &mut rng).ok()?;
            t_statistic_at(&sample, &points, grid.information)
                .ok()
                .map(|t| t.t_stat)
        })
        .collect();
    let boot_t: Vec<f64> = replicates.into_iter().flatten().collect();
    let n_dropped = b_boot - boot_t.len();
    if n_dropped as f64 > MAX_DROP_FRACTION * b_boot as f64 {
        return Err(Error::Test(format!(
            "{n_dropped} of {b_boot} bootstrap replicates failed"
        )));
    }
    let exceed = boot_t.iter().filter(|&&t| t > observed.t_stat).count();
    Ok(ScoreTestResult {
        t_stat: observed.t_stat,
        z_values: observed.z_values,
        argmax_point: observed.argmax_point,
        p_value: exceed as f64 / boot_t.len() as f64,
        b_boot,
        boot_t,
        n_dropped,
        null_fit,
        skipped: observed.skipped,
    })
}
