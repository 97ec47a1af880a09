//! Standard normal distribution helpers.
//!
//! All tail quantities are computed through `erfc` so that both tails keep
//! full relative precision; `1 - Phi(x)` is never formed by subtraction.

use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::{FRAC_1_SQRT_2, PI, SQRT_2};

/// Density of N(0, 1).
pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Distribution function Phi(x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail 1 - Phi(x).
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// ln Phi(x), accurate in both tails.
pub fn ln_cdf(x: f64) -> f64 {
    if x > 0.0 {
        (-sf(x)).ln_1p()
    } else {
        let p = cdf(x);
        if p > 0.0 {
            p.ln()
        } else {
            // Mills ratio asymptotics below the underflow threshold.
            -0.5 * x * x - (-x).ln() - 0.5 * (2.0 * PI).ln()
        }
    }
}

/// Lower quantile Phi^{-1}(p) for p in (0, 1).
///
/// Starts from `erfc_inv` and applies one Halley step on whichever tail is
/// numerically smaller.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Value u with 1 - Phi(u) = q, for q in (0, 1).
pub fn upper_quantile(q: f64) -> f64 {
    if q > 0.5 {
        return lower_quantile(1.0 - q);
    }
    -lower_quantile(q)
}

// Solves Phi(x) = p for p <= 0.5 (x <= 0).
fn lower_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let mut x = -SQRT_2 * erfc_inv(2.0 * p);
    if !x.is_finite() {
        return x;
    }
    // Halley refinement on f(x) = Phi(x) - p, with f'' = -x f'.
    for _ in 0..2 {
        let d = pdf(x);
        if d == 0.0 {
            break;
        }
        let f = cdf(x) - p;
        let t = f / d;
        x -= t / (1.0 + 0.5 * x * t);
    }
    x
}
