//! Closed-form ground truth for one-dimensional Gaussians.
//!
//! Real data is `N(μ*, 1)`, generated data is `N(μ^θ, 1)`, the noise endpoint
//! is `N(0, 1)` and the path is `flow_linear` unless a function says
//! otherwise. Under those assumptions every field, optimal fake model and
//! distance minimized by the distillation losses has a closed form, which
//! this module evaluates pointwise and integrates by quadrature.
//!
//! Densities are compared through their ratio, so each pointwise routine
//! rescales both marginals by the larger of the two before combining them.
//! That keeps the formulas finite far out in either tail.

mod brute;
mod distance;
mod fields;
mod quadrature;
mod verify;

pub use brute::{argmax_concave, posterior_target_mean};
pub use distance::{dmd_gradient, loss_by_quadrature, mixed_score, mixture_kl, DistanceKind};
pub use fields::AnalyticField;
pub use quadrature::{composite, gauss_legendre, QuadratureRule};
pub use verify::{
    brute_force_fake, random_tuple, uid_by_pointwise_max, verify, x_at_density_ratio, Check, Tuple,
    VerifyReport,
};

use crate::error::{Error, Result};
use crate::losses::Coeffs;
use crate::math;

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gauss1D {
    pub mean: f64,
    pub var: f64,
}

impl Gauss1D {
    pub fn new(mean: f64, var: f64) -> Result<Self> {
        if !(var > 0.0 && var.is_finite() && mean.is_finite()) {
            return Err(Error::InvalidConfig(alloc::format!(
                "Gaussian needs finite mean and positive variance, got N({mean}, {var})"
            )));
        }
        Ok(Self { mean, var })
    }

    pub fn unit(mean: f64) -> Self {
        Self { mean, var: 1.0 }
    }

    pub fn sd(&self) -> f64 {
        math::sqrt(self.var)
    }

    pub fn log_pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        -0.5 * d * d / self.var - 0.5 * math::ln(self.var) - LN_SQRT_2PI
    }

    pub fn pdf(&self, x: f64) -> f64 {
        math::exp(self.log_pdf(x))
    }

    pub fn score(&self, x: f64) -> f64 {
        -(x - self.mean) / self.var
    }

    pub fn cdf(&self, x: f64) -> f64 {
        math::normal_cdf((x - self.mean) / self.sd())
    }
}

/// `flow_linear` marginal of `N(μ, 1)`: `N(μ(1−t), (1−t)² + t²)`.
pub fn flow_marginal(mu: f64, t: f64) -> Gauss1D {
    Gauss1D {
        mean: mu * (1.0 - t),
        var: (1.0 - t) * (1.0 - t) + t * t,
    }
}

/// Unconditional `flow_linear` field for `N(μ, 1)` data:
/// `u = ṁ + (σ̇/σ)(x − m)` with `m = μ(1−t)`, `σ² = (1−t)² + t²`.
pub fn uncond_field(mu: f64, t: f64, x: f64) -> f64 {
    let s2 = (1.0 - t) * (1.0 - t) + t * t;
    -mu + (2.0 * t - 1.0) * (x - mu * (1.0 - t)) / s2
}

/// `∂u/∂x` of [`uncond_field`] (the field is affine in `x`).
pub fn uncond_field_slope(t: f64) -> f64 {
    (2.0 * t - 1.0) / ((1.0 - t) * (1.0 - t) + t * t)
}

/// Real and generated marginals at one point, rescaled so the larger is 1.
#[derive(Debug, Clone, Copy)]
pub struct PointMix {
    /// `p*_t(x) / s`
    pub p_star: f64,
    /// `p^θ_t(x) / s`
    pub p_theta: f64,
    /// `ln s`
    pub log_scale: f64,
    pub f_star: f64,
    pub f_theta: f64,
}

impl PointMix {
    pub fn flow(mu_star: f64, mu_theta: f64, t: f64, x: f64) -> Self {
        let ls = flow_marginal(mu_star, t).log_pdf(x);
        let lt = flow_marginal(mu_theta, t).log_pdf(x);
        let m = ls.max(lt);
        Self {
            p_star: math::exp(ls - m),
            p_theta: math::exp(lt - m),
            log_scale: m,
            f_star: uncond_field(mu_star, t, x),
            f_theta: uncond_field(mu_theta, t, x),
        }
    }

    /// `(1−γ)p* + γp^θ`: curvature of the δ-objective.
    pub fn curvature(&self, c: &Coeffs) -> f64 {
        (1.0 - c.gamma) * self.p_star + c.gamma * self.p_theta
    }

    /// `((β−α)p* + αp^θ)f* − βp^θ f^θ`: linear coefficient of the δ-objective.
    pub fn linear(&self, c: &Coeffs) -> f64 {
        ((c.beta - c.alpha) * self.p_star + c.alpha * self.p_theta) * self.f_star
            - c.beta * self.p_theta * self.f_theta
    }

    /// The explicit δ-form of the (general) RealUID objective at this point,
    /// in rescaled density units: the generated-data terms weighted by `p^θ`
    /// plus the real-data terms weighted by `p*`.
    pub fn delta_objective(&self, c: &Coeffs, delta: f64) -> f64 {
        let (ps, pt, fs, ft) = (self.p_star, self.p_theta, self.f_star, self.f_theta);
        let gen = -c.gamma * delta * delta + 2.0 * c.alpha * delta * fs - 2.0 * c.beta * delta * ft;
        let real = -(1.0 - c.gamma) * delta * delta + 2.0 * (1.0 - c.alpha) * delta * fs
            - 2.0 * (1.0 - c.beta) * delta * fs;
        pt * gen + ps * real
    }
}

/// Maximizer `δ = f* − f` of the δ-objective at `(t, x)`.
pub fn optimal_delta(mu_star: f64, mu_theta: f64, t: f64, x: f64, c: &Coeffs) -> f64 {
    let m = PointMix::flow(mu_star, mu_theta, t, x);
    m.linear(c) / m.curvature(c)
}

/// Optimal fake model: `((1−β)p*f* + βp^θf^θ) / ((1−α)p* + αp^θ)` when
/// `γ = α`, and `f* − δ_opt` for general `γ`.
pub fn optimal_fake(mu_star: f64, mu_theta: f64, t: f64, x: f64, c: &Coeffs) -> f64 {
    let m = PointMix::flow(mu_star, mu_theta, t, x);
    if c.gamma == c.alpha {
        ((1.0 - c.beta) * m.p_star * m.f_star + c.beta * m.p_theta * m.f_theta)
            / ((1.0 - c.alpha) * m.p_star + c.alpha * m.p_theta)
    } else {
        m.f_star - m.linear(c) / m.curvature(c)
    }
}

/// Integrand `l_t(x)` of the maximized loss:
/// `‖((β−α)p* + αp^θ)f* − βp^θf^θ‖² / ((1−γ)p* + γp^θ)`.
pub fn pointwise_distance(mu_star: f64, mu_theta: f64, t: f64, x: f64, c: &Coeffs) -> f64 {
    let m = PointMix::flow(mu_star, mu_theta, t, x);
    let b = m.linear(c);
    let a = m.curvature(c);
    if b == 0.0 {
        return 0.0;
    }
    b * b / a * math::exp(m.log_scale)
}

/// Integrand of the non-squared distance maximized by the normalized loss:
/// `|((β−α)p* + αp^θ)f* − βp^θf^θ|`.
pub fn pointwise_normalized(mu_star: f64, mu_theta: f64, t: f64, x: f64, c: &Coeffs) -> f64 {
    let m = PointMix::flow(mu_star, mu_theta, t, x);
    m.linear(c).abs() * math::exp(m.log_scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_consistency() {
        let g = Gauss1D::new(1.5, 2.0).unwrap();
        let h = 1e-5;
        let fd = (g.log_pdf(0.3 + h) - g.log_pdf(0.3 - h)) / (2.0 * h);
        assert!((fd - g.score(0.3)).abs() < 1e-9);
        assert!((g.pdf(1.5) - 1.0 / math::sqrt(2.0 * core::f64::consts::PI * 2.0)).abs() < 1e-15);
        assert!(Gauss1D::new(0.0, 0.0).is_err());
    }

    #[test]
    fn field_examples() {
        for &x in &[-3.0, 0.0, 0.7, 5.0] {
            assert_eq!(uncond_field(0.0, 0.5, x), 0.0);
        }
        for &t in &[0.0, 0.2, 0.5, 0.9, 1.0] {
            assert_eq!(uncond_field(0.0, t, 0.0), 0.0);
        }
        assert!((uncond_field(2.0, 0.25, 1.0) - -1.6).abs() < 1e-15);
    }

    #[test]
    fn optimal_fake_limits() {
        let same = Coeffs::new(0.94, 0.96);
        let f = optimal_fake(1.0, 1.0, 0.3, 0.4, &same);
        assert!((f - uncond_field(1.0, 0.3, 0.4)).abs() < 1e-14);
        let one = Coeffs::new(1.0, 1.0);
        let f = optimal_fake(0.0, 2.0, 0.3, 0.4, &one);
        assert!((f - uncond_field(2.0, 0.3, 0.4)).abs() < 1e-14);
    }

    #[test]
    fn distance_zero_at_match() {
        let c = Coeffs::new(0.9, 0.96);
        for &(t, x) in &[(0.1, -2.0), (0.5, 0.0), (0.9, 3.0)] {
            assert_eq!(
                pointwise_distance(1.0, 1.0, t, x, &Coeffs::new(1.0, 1.0)),
                0.0
            );
            assert!(pointwise_distance(1.0, 1.0, t, x, &c) < 1e-30);
        }
    }

    #[test]
    fn tails_do_not_overflow() {
        let c = Coeffs::new(0.94, 0.96);
        let v = optimal_fake(0.0, 2.0, 0.02, -60.0, &c);
        assert!(v.is_finite());
        assert!(pointwise_distance(0.0, 2.0, 0.02, -60.0, &c).is_finite());
    }
}
