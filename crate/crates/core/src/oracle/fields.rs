//! Closed-form fields usable wherever a trained network is, so the loss code
//! itself can be checked against the oracle.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::Coeffs;
use crate::nn::Field;
use crate::paths::PathSpec;
use crate::tape::{Tape, Var};

use super::{mixed_score, optimal_fake, uncond_field, uncond_field_slope, Gauss1D};

const FD_STEP: f64 = 1e-5;

/// A one-dimensional analytic field. Inputs must be `[B, 1]` with no
/// conditioning; derivatives in `x` are exact where the field is affine and
/// central differences otherwise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AnalyticField {
    /// `flow_linear` field of `N(μ, 1)` data.
    Flow { mu: f64 },
    /// Optimal fake model for the given coefficients on `flow_linear`.
    OptimalFake {
        mu_star: f64,
        mu_theta: f64,
        coeffs: Coeffs,
    },
    /// Score of the `diffusion_vp` marginal of `N(μ, 1)`.
    DiffusionScore { path: PathSpec, mu: f64 },
    /// Score of `α p^θ_t + (1−α) p*_t` on `diffusion_vp`.
    MixedScore {
        path: PathSpec,
        mu_star: f64,
        mu_theta: f64,
        alpha: f64,
    },
}

impl AnalyticField {
    /// Value and `∂/∂x` at one point.
    pub fn value_and_slope(&self, t: f64, x: f64) -> Result<(f64, f64)> {
        match *self {
            AnalyticField::Flow { mu } => Ok((uncond_field(mu, t, x), uncond_field_slope(t))),
            AnalyticField::DiffusionScore { path, mu } => {
                let g = path.marginal_gaussian(Gauss1D::unit(mu), t)?;
                Ok((g.score(x), -1.0 / g.var))
            }
            AnalyticField::OptimalFake { .. } | AnalyticField::MixedScore { .. } => {
                let v = self.value(t, x)?;
                let d =
                    (self.value(t, x + FD_STEP)? - self.value(t, x - FD_STEP)?) / (2.0 * FD_STEP);
                Ok((v, d))
            }
        }
    }

    pub fn value(&self, t: f64, x: f64) -> Result<f64> {
        match *self {
            AnalyticField::OptimalFake {
                mu_star,
                mu_theta,
                coeffs,
            } => Ok(optimal_fake(mu_star, mu_theta, t, x, &coeffs)),
            AnalyticField::MixedScore {
                path,
                mu_star,
                mu_theta,
                alpha,
            } => mixed_score(&path, mu_star, mu_theta, alpha, t, x),
            _ => self.value_and_slope(t, x).map(|(v, _)| v),
        }
    }
}

impl Field for AnalyticField {
    fn eval(&self, tape: &mut Tape, t: &[f64], x: Var, cond: Option<Var>) -> Result<Var> {
        if cond.is_some() {
            return Err(Error::InvalidConfig(
                "analytic fields take no conditioning input".into(),
            ));
        }
        let xv = tape.value(x);
        if xv.cols() != 1 || xv.rows() != t.len() {
            return Err(Error::DimMismatch(xv.cols(), 1));
        }
        let xs: Vec<f64> = xv.data().to_vec();
        let mut vals = Vec::with_capacity(xs.len());
        let mut slopes = Vec::with_capacity(xs.len());
        for (&ti, &xi) in t.iter().zip(&xs) {
            let (v, d) = self.value_and_slope(ti, xi)?;
            vals.push(v);
            slopes.push(d);
        }
        tape.pointwise(x, vals, slopes)
    }
}
