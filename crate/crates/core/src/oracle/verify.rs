//! The oracle's self-check suite: every closed form against an independent
//! brute-force route, reported as named checks with their worst error.

use alloc::vec::Vec;

use rand::Rng;

use crate::losses::Coeffs;
use crate::oracle::{
    argmax_concave, flow_marginal, loss_by_quadrature, optimal_fake, pointwise_distance,
    posterior_target_mean, uncond_field, DistanceKind, PointMix, QuadratureRule,
};
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub max_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push_error(&mut self, name: &'static str, max_error: f64, tolerance: f64) {
        self.checks.push(Check {
            name,
            max_error,
            tolerance,
            passed: max_error <= tolerance,
        });
    }

    fn push_flag(&mut self, name: &'static str, ok: bool, worst: f64) {
        self.checks.push(Check {
            name,
            max_error: worst,
            tolerance: 0.0,
            passed: ok,
        });
    }
}

/// A random pointwise setting in the range the checks exercise.
#[derive(Debug, Clone, Copy)]
pub struct Tuple {
    pub mu_star: f64,
    pub mu_theta: f64,
    pub t: f64,
    pub x: f64,
    pub coeffs: Coeffs,
}

pub fn random_tuple<R: Rng + ?Sized>(rng: &mut R) -> Tuple {
    let u = |r: &mut R, lo: f64, hi: f64| lo + (hi - lo) * r.random::<f64>();
    let mu_star = u(rng, -2.0, 2.0);
    let mu_theta = u(rng, -2.0, 2.0);
    let t = u(rng, 0.05, 0.95);
    let x = u(rng, -4.0, 4.0);
    let alpha = u(rng, 0.5, 1.0);
    let beta = u(rng, 0.5, 1.0);
    Tuple {
        mu_star,
        mu_theta,
        t,
        x,
        coeffs: Coeffs::new(alpha, beta),
    }
}

/// Maximizer of the explicit δ-objective found by bisection on objective
/// values alone, returned as a fake-model value `f* − δ`.
pub fn brute_force_fake(tp: &Tuple) -> f64 {
    let m = PointMix::flow(tp.mu_star, tp.mu_theta, tp.t, tp.x);
    let d = argmax_concave(|d| m.delta_objective(&tp.coeffs, d), -1.0, 1.0);
    m.f_star - d
}

/// `x` at which `p^θ_t(x) / p*_t(x)` equals `ratio` (equal variances make the
/// log-ratio affine in `x`).
pub fn x_at_density_ratio(mu_star: f64, mu_theta: f64, t: f64, ratio: f64) -> f64 {
    let (ps, pt) = (flow_marginal(mu_star, t), flow_marginal(mu_theta, t));
    // ln(pθ/p*) = [2x(mθ − m*) − (mθ² − m*²)] / (2σ²)
    let (ms, mt) = (ps.mean, pt.mean);
    (2.0 * ps.var * crate::math::ln(ratio) + (mt * mt - ms * ms)) / (2.0 * (mt - ms))
}

/// The UID distance by maximizing its objective at every node, with the
/// student field taken from a posterior quadrature.
pub fn uid_by_pointwise_max(mu_star: f64, mu_theta: f64, rule: &QuadratureRule) -> f64 {
    rule.integrate(|t, x| {
        let pt = flow_marginal(mu_theta, t).pdf(x);
        if pt == 0.0 {
            return 0.0;
        }
        let fs = uncond_field(mu_star, t, x);
        let ft = posterior_target_mean(mu_theta, t, x);
        let obj = |d: f64| pt * (-d * d + 2.0 * d * (fs - ft));
        let d = argmax_concave(obj, -1.0, 1.0);
        obj(d)
    })
}

/// Runs every oracle self-check.
pub fn verify(seed: u64) -> VerifyReport {
    let mut report = VerifyReport::default();
    let mut r = rng::stream(seed, rng::purpose::EVAL);
    let rule = QuadratureRule::default();

    // linearization: max_d −‖d‖² + 2⟨d, a−b⟩ = ‖a−b‖², attained at d = a−b
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = 1 + (r.random::<u32>() % 8) as usize;
        let a = rng::normal_vec(&mut r, n);
        let b = rng::normal_vec(&mut r, n);
        let mut value = 0.0;
        let mut target = 0.0;
        for j in 0..n {
            let g = a[j] - b[j];
            let d = argmax_concave(|d| -d * d + 2.0 * d * g, -1.0, 1.0);
            worst = worst.max((d - g).abs());
            value += -d * d + 2.0 * d * g;
            target += g * g;
        }
        worst = worst.max((value - target).abs() / target.max(1e-300));
    }
    report.push_error("linearization_identity", worst, 1e-10);

    // analytic field against E[x₁ − x₀ | x_t] by quadrature
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let tp = random_tuple(&mut r);
        let a = uncond_field(tp.mu_theta, tp.t, tp.x);
        let b = posterior_target_mean(tp.mu_theta, tp.t, tp.x);
        worst = worst.max((a - b).abs());
    }
    report.push_error("field_vs_posterior_mean", worst, 1e-9);

    // optimal fake against bisection on the explicit δ-form
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let tp = random_tuple(&mut r);
        let a = optimal_fake(tp.mu_star, tp.mu_theta, tp.t, tp.x, &tp.coeffs);
        let b = brute_force_fake(&tp);
        worst = worst.max((a - b).abs() / (1.0 + a.abs()));
    }
    report.push_error("optimal_fake_argmax", worst, 1e-9);

    // general γ
    let mut worst = 0.0f64;
    for &gamma in &[0.9, 0.96, 1.0] {
        let mut done = 0;
        while done < 34 {
            let mut tp = random_tuple(&mut r);
            if tp.coeffs.alpha == gamma {
                continue;
            }
            tp.coeffs.gamma = gamma;
            let a = optimal_fake(tp.mu_star, tp.mu_theta, tp.t, tp.x, &tp.coeffs);
            let b = brute_force_fake(&tp);
            worst = worst.max((a - b).abs() / (1.0 + a.abs()));
            done += 1;
        }
    }
    report.push_error("general_gamma_argmax", worst, 1e-6);

    // perturbing the optimal fake by ±1e-3 strictly lowers the objective
    let mut ok = true;
    let mut worst_gap = f64::INFINITY;
    for _ in 0..100 {
        let tp = random_tuple(&mut r);
        let m = PointMix::flow(tp.mu_star, tp.mu_theta, tp.t, tp.x);
        let f = optimal_fake(tp.mu_star, tp.mu_theta, tp.t, tp.x, &tp.coeffs);
        let at = |fake: f64| m.delta_objective(&tp.coeffs, m.f_star - fake);
        let base = at(f);
        for h in [-1e-3, 1e-3] {
            let gap = base - at(f + h);
            worst_gap = worst_gap.min(gap);
            ok &= gap > 0.0;
        }
    }
    report.push_flag("optimal_fake_strict_max", ok, worst_gap);

    // pointwise maximization integrates to the squared distance
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let ms = -2.0 + 4.0 * r.random::<f64>();
        let mt = -2.0 + 4.0 * r.random::<f64>();
        let a = uid_by_pointwise_max(ms, mt, &rule);
        let b = loss_by_quadrature(DistanceKind::Uid, ms, mt, &Coeffs::default(), &rule)
            .unwrap_or(f64::NAN);
        worst = worst.max((a - b).abs() / b.abs().max(1e-12));
    }
    report.push_error("uid_distance_pointwise_max", worst, 1e-6);

    // reduction and zero-at-match
    let mut worst_red = 0.0f64;
    let mut worst_zero = 0.0f64;
    let mut nonneg = true;
    for _ in 0..5 {
        let ms = -2.0 + 4.0 * r.random::<f64>();
        let mt = -2.0 + 4.0 * r.random::<f64>();
        let one = Coeffs::new(1.0, 1.0);
        let a = loss_by_quadrature(DistanceKind::Uid, ms, mt, &one, &rule).unwrap_or(f64::NAN);
        let b = loss_by_quadrature(DistanceKind::RealUid, ms, mt, &one, &rule).unwrap_or(f64::NAN);
        worst_red = worst_red.max((a - b).abs() / a.abs().max(1e-300));
        let c = random_tuple(&mut r).coeffs;
        for kind in [
            DistanceKind::Uid,
            DistanceKind::RealUid,
            DistanceKind::General,
            DistanceKind::Normalized,
        ] {
            let d = loss_by_quadrature(kind, ms, mt, &c, &rule).unwrap_or(f64::NAN);
            nonneg &= d >= 0.0;
            let z = loss_by_quadrature(kind, ms, ms, &c, &rule).unwrap_or(f64::NAN);
            worst_zero = worst_zero.max(z.abs());
        }
    }
    report.push_error("real_uid_reduces_to_uid", worst_red, 1e-10);
    report.push_flag("distances_nonnegative", nonneg, 0.0);
    report.push_error("distances_zero_at_match", worst_zero, 1e-10);

    // monotone in |μ^θ − μ*| for α ≠ β
    let c = Coeffs::new(0.94, 0.96);
    let mut prev = 0.0;
    let mut mono = true;
    let mut smallest_step = f64::INFINITY;
    for k in 1..=10 {
        let d = loss_by_quadrature(DistanceKind::RealUid, 0.0, 0.25 * k as f64, &c, &rule)
            .unwrap_or(f64::NAN);
        smallest_step = smallest_step.min(d - prev);
        mono &= d > prev;
        prev = d;
    }
    report.push_flag("real_uid_distance_monotone", mono, smallest_step);

    // coefficient regimes at a point the generator does not cover
    let (ms, mt, t) = (0.0, 2.0, 0.3);
    let x = x_at_density_ratio(ms, mt, t, 1e-7);
    let m = PointMix::flow(ms, mt, t, x);
    let p_star = flow_marginal(ms, t).pdf(x);
    let scale = p_star * (m.f_star * m.f_star + m.f_theta * m.f_theta);
    let eq = pointwise_distance(ms, mt, t, x, &Coeffs::new(0.96, 0.96));
    report.push_error("equal_coeffs_ignore_uncovered_real", eq / scale, 1e-10);

    let c = Coeffs::new(0.94, 0.96);
    let ne = pointwise_distance(ms, mt, t, x, &c);
    let ratio = 1e-7;
    let floor = 0.5 * (c.beta - c.alpha) * (c.beta - c.alpha) * p_star * m.f_star * m.f_star
        / ((1.0 - c.alpha) + c.alpha * ratio);
    report.push_flag(
        "unequal_coeffs_signal_uncovered_real",
        ne >= floor,
        ne / floor,
    );

    let c = Coeffs::new(1.0, 0.96);
    let x6 = x_at_density_ratio(ms, mt, t, 1e-6);
    let x9 = x_at_density_ratio(ms, mt, t, 1e-9);
    let g6 = pointwise_distance(ms, mt, t, x6, &c) / flow_marginal(ms, t).pdf(x6);
    let g9 = pointwise_distance(ms, mt, t, x9, &c) / flow_marginal(ms, t).pdf(x9);
    report.push_flag("alpha_one_blows_up_uncovered", g9 >= 10.0 * g6, g9 / g6);

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_ratio_inversion() {
        let x = x_at_density_ratio(0.0, 2.0, 0.3, 1e-6);
        let r = flow_marginal(2.0, 0.3).pdf(x) / flow_marginal(0.0, 0.3).pdf(x);
        assert!((r / 1e-6 - 1.0).abs() < 1e-9);
    }
}
