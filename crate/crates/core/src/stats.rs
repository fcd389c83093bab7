//! Small statistical helpers: Wilson intervals, normal tails, and the exact
//! two-sided exit probability of Brownian motion.

use core::f64::consts::{FRAC_1_SQRT_2, PI};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959963984540054;

/// Wilson score interval for `hits` successes out of `trials`.
pub fn wilson_interval(hits: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = hits as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * libm::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
    let lo = if hits == 0 {
        0.0
    } else {
        (center - half).max(0.0)
    };
    let hi = if hits >= trials {
        1.0
    } else {
        (center + half).min(1.0)
    };
    (lo, hi)
}

/// `P(N(0,1) > x)`
pub fn normal_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `P(sup_{[0,t]} |W| ≥ a)` for one-dimensional Brownian motion, by reflection:
/// `4 Σ_k (−1)^k P(N > (2k+1) a/√t)`.
pub fn brownian_two_sided_exit(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let x = a / libm::sqrt(t);
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 0..200 {
        let term = normal_tail((2 * k + 1) as f64 * x);
        sum += sign * term;
        if term < 1e-300 {
            break;
        }
        sign = -sign;
    }
    (4.0 * sum).min(1.0)
}

/// Same probability from the eigenfunction series
/// `1 − (4/π) Σ_k (−1)^k/(2k+1) exp(−(2k+1)²π² t/(8a²))`, which converges fast
/// for small `a`.
pub fn brownian_two_sided_exit_theta(a: f64, t: f64) -> f64 {
    if a <= 0.0 {
        return 1.0;
    }
    let c = PI * PI * t / (8.0 * a * a);
    let mut stay = 0.0;
    let mut sign = 1.0;
    for k in 0..10_000 {
        let m = (2 * k + 1) as f64;
        let term = libm::exp(-m * m * c) / m;
        stay += sign * term;
        if term < 1e-18 {
            break;
        }
        sign = -sign;
    }
    1.0 - 4.0 / PI * stay
}

/// Probability that a Brownian bridge of variance rate `v2` over time `dt`
/// from `x` to `y` leaves the band `(center − delta, center + delta)`,
/// counting either barrier once (the double-crossing term is `O(e^{−4δ²/(v2·dt)})`
/// and negligible at the step sizes used here).
pub fn bridge_exit_probability(x: f64, y: f64, center: f64, delta: f64, v2: f64, dt: f64) -> f64 {
    let (a, b) = (x - center, y - center);
    if libm::fabs(a) >= delta || libm::fabs(b) >= delta {
        return 1.0;
    }
    if v2 <= 0.0 {
        return 0.0;
    }
    let upper = libm::exp(-2.0 * (delta - a) * (delta - b) / (v2 * dt));
    let lower = libm::exp(-2.0 * (delta + a) * (delta + b) / (v2 * dt));
    (upper + lower).min(1.0)
}

/// Mean and standard error of a sample, summed in index order.
pub fn mean_and_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, libm::sqrt(var / n))
}
