//! Slow, assumption-light routes to quantities the closed forms also give.
//! Used only to cross-check those closed forms.

use crate::math;
use crate::oracle::quadrature::composite;
use crate::oracle::Gauss1D;

/// `E[x₁ − x₀ | x_t = x]` for `flow_linear` with `x₀ ~ N(μ, 1)`,
/// `x₁ ~ N(0, 1)`, by direct quadrature over the posterior of one endpoint.
///
/// The other endpoint is pinned by `x_t = (1−t)x₀ + t·x₁`, so the integral runs
/// over `x₁` for `t < 1/2` and over `x₀` otherwise; either way the integrand is
/// at least unit-width. The window is centred on the posterior mode.
pub fn posterior_target_mean(mu: f64, t: f64, x: f64) -> f64 {
    let prior0 = Gauss1D::unit(mu);
    let prior1 = Gauss1D::unit(0.0);
    // (log weight, target) as a function of the integration variable
    let eval = |u: f64| -> (f64, f64) {
        if t < 0.5 {
            let x0 = (x - t * u) / (1.0 - t);
            (prior1.log_pdf(u) + prior0.log_pdf(x0), u - x0)
        } else {
            let x1 = (x - (1.0 - t) * u) / t;
            (prior0.log_pdf(u) + prior1.log_pdf(x1), x1 - u)
        }
    };
    // the log-weight is a concave quadratic in u, so its peak is found from
    // values alone; the posterior sd lies in [1/√2, 1]
    let centre = argmax_concave(|u| eval(u).0, -1.0, 1.0);
    let best = eval(centre).0;
    let (nodes, weights) = composite(centre - 12.0, centre + 12.0, 32, 2);
    let mut num = 0.0;
    let mut den = 0.0;
    for (&u, &w) in nodes.iter().zip(&weights) {
        let (lw, target) = eval(u);
        let p = w * math::exp(lw - best);
        num += p * target;
        den += p;
    }
    num / den
}

/// Maximizer of a concave quadratic `f` on `[lo, hi]` using only values of `f`.
///
/// For a quadratic, `f(m+1) − f(m−1)` has the sign of `f'(m)`, so bisecting on
/// that sign converges to the maximizer; the comparison stays well conditioned
/// down to the last bits because the two evaluations are far apart. The
/// bracket is widened until it contains the maximizer.
pub fn argmax_concave(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let rising = |m: f64| f(m + 1.0) - f(m - 1.0) > 0.0;
    while rising(hi) {
        let w = hi - lo;
        lo = hi;
        hi += 2.0 * w;
    }
    while !rising(lo) {
        let w = hi - lo;
        hi = lo;
        lo -= 2.0 * w;
        if !lo.is_finite() {
            return f64::NAN;
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if rising(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::uncond_field;

    #[test]
    fn bisection_finds_quadratic_peak() {
        let m = argmax_concave(
            |d| -3.0 * (d - 1.234_567_891) * (d - 1.234_567_891) + 5.0,
            -1.0,
            1.0,
        );
        assert!((m - 1.234_567_891).abs() < 1e-14);
        let m = argmax_concave(|d| -(d + 40.0) * (d + 40.0), -1.0, 1.0);
        assert!((m + 40.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_route_matches_field() {
        for &(mu, t, x) in &[
            (2.0, 0.25, 1.0),
            (0.0, 0.7, -1.5),
            (-1.0, 0.01, 0.3),
            (2.0, 0.98, 2.5),
        ] {
            let a = posterior_target_mean(mu, t, x);
            let b = uncond_field(mu, t, x);
            assert!((a - b).abs() < 1e-10, "{mu} {t} {x}: {a} vs {b}");
        }
    }
}
