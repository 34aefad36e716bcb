//! Standard normal helpers that stay finite far into the lower tail.

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Below this argument log Φ and the inverse Mills ratio switch to the
/// continued-fraction route.
const TAIL_SWITCH: f64 = -8.0;

#[inline]
pub fn pdf(x: f64) -> f64 {
    log_pdf(x).exp()
}

#[inline]
pub fn log_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Φ(x).
#[inline]
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// log Φ(x), accurate for very negative x where Φ underflows.
pub fn log_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if x > 5.0 {
        (-0.5 * erfc(x * FRAC_1_SQRT_2)).ln_1p()
    } else if x >= TAIL_SWITCH {
        cdf(x).ln()
    } else if x == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        log_pdf(x) + mills_ratio(-x).ln()
    }
}

/// Inverse Mills ratio λ(u) = φ(u) / Φ(u).
pub fn inverse_mills(u: f64) -> f64 {
    if u >= TAIL_SWITCH {
        (log_pdf(u) - log_cdf(u)).exp()
    } else {
        1.0 / mills_ratio(-u)
    }
}

/// Mills ratio R(t) = Φ(-t) / φ(t) for t ≥ 8 via Laplace's continued fraction.
fn mills_ratio(t: f64) -> f64 {
    debug_assert!(t >= -TAIL_SWITCH);
    if t.is_infinite() {
        return 0.0;
    }
    let mut f = t;
    for k in (1..=120).rev() {
        f = t + k as f64 / f;
    }
    1.0 / f
}

/// Φ⁻¹(p) for p in (0, 1).
pub fn quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}
