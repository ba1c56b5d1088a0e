//! Distances minimized by the distillation losses, integrated over `(t, x)`.

use crate::error::{Error, Result};
use crate::losses::Coeffs;
use crate::math;
use crate::oracle::{pointwise_distance, pointwise_normalized, Gauss1D, QuadratureRule};
use crate::paths::{PathKind, PathSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistanceKind {
    /// `∫∫ p^θ (f* − f^θ)²`, maximized UID loss.
    Uid,
    /// Weighted squared distance maximized by RealUID (`γ = α`).
    RealUid,
    /// Same with the coefficient set's own `γ`.
    General,
    /// Non-squared distance maximized by the normalized loss.
    Normalized,
}

impl DistanceKind {
    pub fn name(self) -> &'static str {
        match self {
            DistanceKind::Uid => "uid_distance",
            DistanceKind::RealUid => "real_uid_distance",
            DistanceKind::General => "general_distance",
            DistanceKind::Normalized => "normalized_distance",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "uid_distance" | "uid" => DistanceKind::Uid,
            "real_uid_distance" | "real_uid" => DistanceKind::RealUid,
            "general_distance" | "general" => DistanceKind::General,
            "normalized_distance" | "normalized" => DistanceKind::Normalized,
            _ => return None,
        })
    }
}

/// `∫_{t_lo}^{t_hi} ∫ l_t(x) dx dt` for the chosen distance on the 1D
/// Gaussian `flow_linear` problem.
pub fn loss_by_quadrature(
    kind: DistanceKind,
    mu_star: f64,
    mu_theta: f64,
    c: &Coeffs,
    rule: &QuadratureRule,
) -> Result<f64> {
    rule.check_window(&[Gauss1D::unit(mu_star), Gauss1D::unit(mu_theta)])?;
    let c = match kind {
        DistanceKind::Uid => Coeffs::new(1.0, 1.0),
        DistanceKind::RealUid => Coeffs {
            gamma: c.alpha,
            ..*c
        },
        DistanceKind::General | DistanceKind::Normalized => *c,
    };
    Ok(match kind {
        DistanceKind::Normalized => {
            rule.integrate(|t, x| pointwise_normalized(mu_star, mu_theta, t, x, &c))
        }
        _ => rule.integrate(|t, x| pointwise_distance(mu_star, mu_theta, t, x, &c)),
    })
}

fn diffusion_marginals(
    spec: &PathSpec,
    mu_star: f64,
    mu_theta: f64,
    t: f64,
) -> Result<(Gauss1D, Gauss1D)> {
    if spec.kind != PathKind::DiffusionVp {
        return Err(Error::UnsupportedPath {
            kind: spec.kind.name(),
            what: "distribution matching with real data",
        });
    }
    Ok((
        spec.marginal_gaussian(Gauss1D::unit(mu_star), t)?,
        spec.marginal_gaussian(Gauss1D::unit(mu_theta), t)?,
    ))
}

/// Score of the mixture `α p^θ_t + (1−α) p*_t`; the minimizer of the
/// equal-coefficient modified DSM loss.
pub fn mixed_score(
    spec: &PathSpec,
    mu_star: f64,
    mu_theta: f64,
    alpha: f64,
    t: f64,
    x: f64,
) -> Result<f64> {
    let (ps, pt) = diffusion_marginals(spec, mu_star, mu_theta, t)?;
    let (ls, lt) = (ps.log_pdf(x), pt.log_pdf(x));
    let m = ls.max(lt);
    let ws = (1.0 - alpha) * math::exp(ls - m);
    let wt = alpha * math::exp(lt - m);
    Ok((ws * ps.score(x) + wt * pt.score(x)) / (ws + wt))
}

/// `∫ KL(α p^θ_t + (1−α) p*_t ‖ p*_t) dt` over the rule's time window.
pub fn mixture_kl(
    spec: &PathSpec,
    mu_star: f64,
    mu_theta: f64,
    alpha: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    rule.check_window(&[Gauss1D::unit(mu_star), Gauss1D::unit(mu_theta)])?;
    let mut total = 0.0;
    for (&t, &wt) in rule.t_nodes.iter().zip(&rule.t_weights) {
        let (ps, pt) = diffusion_marginals(spec, mu_star, mu_theta, t)?;
        total += wt
            * rule.integrate_x(|x| {
                let q = alpha * pt.pdf(x) + (1.0 - alpha) * ps.pdf(x);
                if q == 0.0 {
                    0.0
                } else {
                    let log_ratio =
                        math::ln(alpha * math::exp(pt.log_pdf(x) - ps.log_pdf(x)) + (1.0 - alpha));
                    q * log_ratio
                }
            });
    }
    Ok(total)
}

/// Gradient of [`mixture_kl`] with respect to `μ^θ` for a mean-shift
/// generator, written as the expectation `E[α(s^{θ,α} − s*)(x^θ_t)]`.
pub fn dmd_gradient(
    spec: &PathSpec,
    mu_star: f64,
    mu_theta: f64,
    alpha: f64,
    rule: &QuadratureRule,
) -> Result<f64> {
    rule.check_window(&[Gauss1D::unit(mu_star), Gauss1D::unit(mu_theta)])?;
    let mut total = 0.0;
    for (&t, &wt) in rule.t_nodes.iter().zip(&rule.t_weights) {
        let (ps, pt) = diffusion_marginals(spec, mu_star, mu_theta, t)?;
        let mut inner = 0.0;
        for (&x, &wx) in rule.x_nodes.iter().zip(&rule.x_weights) {
            let s = mixed_score(spec, mu_star, mu_theta, alpha, t, x)?;
            inner += wx * pt.pdf(x) * alpha * (s - ps.score(x));
        }
        total += wt * inner;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uid_distance_vanishes_at_match() {
        let rule = QuadratureRule::default();
        let d = loss_by_quadrature(DistanceKind::Uid, 1.3, 1.3, &Coeffs::default(), &rule).unwrap();
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn real_uid_reduces_at_unit_coeffs() {
        let rule = QuadratureRule::default();
        let one = Coeffs::new(1.0, 1.0);
        let a = loss_by_quadrature(DistanceKind::Uid, 0.0, 2.0, &one, &rule).unwrap();
        let b = loss_by_quadrature(DistanceKind::RealUid, 0.0, 2.0, &one, &rule).unwrap();
        assert!((a - b).abs() <= 1e-10 * a.abs());
    }

    #[test]
    fn distances_vanish_at_match_for_any_coeffs() {
        let rule = QuadratureRule::default();
        let c = Coeffs::new(0.94, 0.96);
        for kind in [DistanceKind::RealUid, DistanceKind::Normalized] {
            let d = loss_by_quadrature(kind, 0.0, 0.0, &c, &rule).unwrap();
            assert!(d.abs() < 1e-12, "{kind:?}: {d}");
        }
    }

    #[test]
    fn kl_is_zero_at_match_and_rejects_flow() {
        let rule = QuadratureRule::default();
        let spec = PathSpec::new(PathKind::DiffusionVp);
        assert!(mixture_kl(&spec, 0.5, 0.5, 0.7, &rule).unwrap().abs() < 1e-14);
        assert!(mixture_kl(&PathSpec::flow(), 0.0, 1.0, 0.5, &rule).is_err());
    }
}
