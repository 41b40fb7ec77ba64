//! Standard normal distribution function and quantiles.
//!
//! `Φ(x) = ½ erfc(−x/√2)` with `erfc` from libm (the musl/FreeBSD
//! implementation, accurate to about one ulp). Upper tails are evaluated directly as `½ erfc(x/√2)` so p-values
//! keep full relative precision. Quantiles are found by bisection on `Φ`.

use std::f64::consts::FRAC_1_SQRT_2;

use libm::erfc;

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// `1 − Φ(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `z` with `Φ(z) = p`, to absolute accuracy 1e-12 in `z`.
///
/// Returns ±∞ at `p = 0` or `1` and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    // Work in the lower tail where Φ is resolved best, then reflect.
    let (target, flip) = if p > 0.5 { (1.0 - p, true) } else { (p, false) };
    let (mut lo, mut hi) = (-40.0f64, 0.0f64);
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if mid == lo || mid == hi {
            break;
        }
        if normal_cdf(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let z = 0.5 * (lo + hi);
    if flip {
        -z
    } else {
        z
    }
}
