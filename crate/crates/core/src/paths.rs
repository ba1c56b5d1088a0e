//! Conditional probability paths and their regression targets.
//!
//! Every supported path is affine in its endpoints and applies the same
//! scalar coefficients to each coordinate:
//!
//! ```text
//! x_t    = a₀(t)·x₀ + a₁(t)·e + a₂(t)·ε
//! target = b₀(t)·x₀ + b₁(t)·e + b₂(t)·ε
//! ```
//!
//! where `e` is the second endpoint (noise sample `x₁`, the diffusion noise,
//! or the bridge endpoint `x_T`) and `ε` is extra Gaussian noise for the
//! bridge and interpolant kinds. [`PathSpec::coefficients`] returns those six
//! numbers; everything else is built on top.

use alloc::vec::Vec;

use rand::Rng;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::oracle::Gauss1D;
use crate::rng;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    /// `x_t = (1−t)x₀ + t·x₁`, target `x₁ − x₀`.
    FlowLinear,
    /// `x_t = x₀ + σ_t ε`, target is the conditional score.
    DiffusionVp,
    /// Brownian bridge between `x₀` and `x_T`, target is the score of the
    /// driftless forward kernel.
    BridgeBrownian,
    /// Linear interpolant with `γ_t = a·t(1−t)`, target `∂_t x_t`.
    Interpolant,
}

impl PathKind {
    pub fn name(self) -> &'static str {
        match self {
            PathKind::FlowLinear => "flow_linear",
            PathKind::DiffusionVp => "diffusion_vp",
            PathKind::BridgeBrownian => "bridge_brownian",
            PathKind::Interpolant => "interpolant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "flow_linear" => PathKind::FlowLinear,
            "diffusion_vp" => PathKind::DiffusionVp,
            "bridge_brownian" => PathKind::BridgeBrownian,
            "interpolant" => PathKind::Interpolant,
            _ => return None,
        })
    }

    /// Targets that blow up like `1/t` at an endpoint.
    pub fn is_score(self) -> bool {
        matches!(self, PathKind::DiffusionVp | PathKind::BridgeBrownian)
    }

    /// Targets that are velocities and can drive an ODE sampler.
    pub fn is_velocity(self) -> bool {
        matches!(self, PathKind::FlowLinear | PathKind::Interpolant)
    }

    pub fn uses_extra_noise(self) -> bool {
        matches!(self, PathKind::BridgeBrownian | PathKind::Interpolant)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSpec {
    pub kind: PathKind,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub bridge_eps: f64,
    pub interp_amp: f64,
    pub t_lo: f64,
    pub t_hi: f64,
}

impl Default for PathSpec {
    fn default() -> Self {
        Self::flow()
    }
}

/// Affine coefficients of a path at one time; see the module docs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coefficients {
    pub xt: [f64; 3],
    pub target: [f64; 3],
}

impl PathSpec {
    pub fn new(kind: PathKind) -> Self {
        Self {
            kind,
            sigma_min: 0.01,
            sigma_max: 1.0,
            bridge_eps: 1.0,
            interp_amp: 0.5,
            t_lo: 1e-3,
            t_hi: 1.0 - 1e-3,
        }
    }

    pub fn flow() -> Self {
        Self::new(PathKind::FlowLinear)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if !(0.0 < self.t_lo && self.t_lo < self.t_hi && self.t_hi < 1.0) {
            return bad("time clamp must satisfy 0 < t_lo < t_hi < 1");
        }
        match self.kind {
            PathKind::DiffusionVp
                if !(self.sigma_min >= 0.0 && self.sigma_max > self.sigma_min) =>
            {
                bad("diffusion schedule needs 0 <= sigma_min < sigma_max")
            }
            PathKind::BridgeBrownian if !(self.bridge_eps > 0.0) => {
                bad("bridge_eps must be positive")
            }
            PathKind::Interpolant if !(self.interp_amp >= 0.0) => {
                bad("interp_amp must be nonnegative")
            }
            _ => Ok(()),
        }
    }

    pub fn sigma(&self, t: f64) -> f64 {
        self.sigma_min + t * (self.sigma_max - self.sigma_min)
    }

    pub fn gamma(&self, t: f64) -> f64 {
        self.interp_amp * t * (1.0 - t)
    }

    pub fn gamma_dot(&self, t: f64) -> f64 {
        self.interp_amp * (1.0 - 2.0 * t)
    }

    /// Moves `t` into `[t_lo, t_hi]` for score kinds; identity otherwise.
    pub fn clamp_t(&self, t: f64) -> f64 {
        if self.kind.is_score() {
            t.clamp(self.t_lo, self.t_hi)
        } else {
            t
        }
    }

    /// Training times: uniform on `[0, 1]`, or on `[t_lo, t_hi]` for score kinds.
    pub fn sample_t<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        if self.kind.is_score() {
            rng::uniform_vec(rng, n, self.t_lo, self.t_hi)
        } else {
            rng::uniform_vec(rng, n, 0.0, 1.0)
        }
    }

    pub fn coefficients(&self, t: f64) -> Coefficients {
        match self.kind {
            PathKind::FlowLinear => Coefficients {
                xt: [1.0 - t, t, 0.0],
                target: [-1.0, 1.0, 0.0],
            },
            PathKind::DiffusionVp => {
                // x_t = x₀ + σε ⇒ −(x_t − x₀)/σ² = −ε/σ
                let s = self.sigma(t);
                Coefficients {
                    xt: [1.0, s, 0.0],
                    target: [0.0, -1.0 / s, 0.0],
                }
            }
            PathKind::BridgeBrownian => {
                // −(x_t − x₀)/(ε_b² t) expanded in the endpoints
                let e = self.bridge_eps;
                let sd = e * math::sqrt(t * (1.0 - t));
                let k = 1.0 / (e * e * t);
                Coefficients {
                    xt: [1.0 - t, t, sd],
                    target: [k * t, -k * t, -k * sd],
                }
            }
            PathKind::Interpolant => Coefficients {
                xt: [1.0 - t, t, self.gamma(t)],
                target: [-1.0, 1.0, self.gamma_dot(t)],
            },
        }
    }

    /// `(x_t, target)` for one coordinate.
    pub fn point(&self, t: f64, x0: f64, end: f64, eps: f64) -> (f64, f64) {
        let c = self.coefficients(t);
        let xt = c.xt[0] * x0 + c.xt[1] * end + c.xt[2] * eps;
        let tg = c.target[0] * x0 + c.target[1] * end + c.target[2] * eps;
        (xt, tg)
    }

    /// Marginal at time `t` when `x₀ ~ p0` and the endpoint is standard normal
    /// and independent of `x₀`.
    pub fn marginal_gaussian(&self, p0: Gauss1D, t: f64) -> Result<Gauss1D> {
        let c = self.coefficients(t);
        match self.kind {
            PathKind::BridgeBrownian => Err(Error::UnsupportedPath {
                kind: self.kind.name(),
                what: "closed-form marginal",
            }),
            _ => Gauss1D::new(
                c.xt[0] * p0.mean,
                c.xt[0] * c.xt[0] * p0.var + c.xt[1] * c.xt[1] + c.xt[2] * c.xt[2],
            ),
        }
    }
}

/// One training example of a matching loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Triple {
    pub t: f64,
    pub x0: Vec<f64>,
    pub endpoint: Vec<f64>,
    pub eps: Vec<f64>,
    pub x_t: Vec<f64>,
    pub target: Vec<f64>,
}

/// Builds the triple for given `t`, endpoints and noise.
pub fn triple_at(
    spec: &PathSpec,
    t: f64,
    x0: &[f64],
    endpoint: &[f64],
    eps: &[f64],
) -> Result<Triple> {
    if x0.len() != endpoint.len() || x0.len() != eps.len() {
        return Err(Error::DimMismatch(x0.len(), endpoint.len().min(eps.len())));
    }
    let t = spec.clamp_t(t);
    let (x_t, target) = x0
        .iter()
        .zip(endpoint)
        .zip(eps)
        .map(|((&a, &e), &n)| spec.point(t, a, e, n))
        .unzip();
    Ok(Triple {
        t,
        x0: x0.to_vec(),
        endpoint: endpoint.to_vec(),
        eps: eps.to_vec(),
        x_t,
        target,
    })
}

/// Draws `t` (and `ε` for kinds that use it) and builds the triple.
pub fn sample_triple<R: Rng + ?Sized>(
    spec: &PathSpec,
    x0: &[f64],
    endpoint: &[f64],
    rng: &mut R,
) -> Result<Triple> {
    let t = spec.sample_t(rng, 1)[0];
    let eps = if spec.kind.uses_extra_noise() {
        rng::normal_vec(rng, x0.len())
    } else {
        alloc::vec![0.0; x0.len()]
    };
    triple_at(spec, t, x0, endpoint, &eps)
}

/// A batch of triples recorded on a tape.
///
/// `x_t` and `target` stay differentiable in `x₀` so generator losses can
/// backpropagate through both. `weights` (default all ones) turns the batch
/// mean into `(1/B)·Σ wᵢ ℓᵢ`, which lets quadrature nodes stand in for samples.
#[derive(Debug, Clone)]
pub struct Triples {
    pub t: Vec<f64>,
    pub x_t: Var,
    pub target: Var,
    pub cond: Option<Var>,
    pub weights: Option<Vec<f64>>,
}

impl Triples {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn with_cond(mut self, cond: Var) -> Self {
        self.cond = Some(cond);
        self
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.weights = Some(w);
        self
    }

    /// Same triples with `x_t` and `target` cut off from upstream gradients.
    pub fn detached(&self, tape: &mut Tape) -> Self {
        Self {
            t: self.t.clone(),
            x_t: tape.stop_grad(self.x_t),
            target: tape.stop_grad(self.target),
            cond: self.cond.map(|c| tape.stop_grad(c)),
            weights: self.weights.clone(),
        }
    }
}

/// Records `x_t` and `target` for a batch on the tape.
///
/// `x0` is `[B, D]` (possibly generator output), `endpoint` and `eps` are
/// plain `[B, D]` values; `t` has `B` entries and is clamped to the path's
/// time window.
pub fn build_triples(
    tape: &mut Tape,
    spec: &PathSpec,
    t: &[f64],
    x0: Var,
    endpoint: &Tensor,
    eps: Option<&Tensor>,
) -> Result<Triples> {
    let x0v = tape.value(x0);
    if x0v.shape() != endpoint.shape() {
        return Err(Error::ShapeMismatch {
            op: "build_triples",
            lhs: x0v.shape().to_vec(),
            rhs: endpoint.shape().to_vec(),
        });
    }
    if let Some(e) = eps {
        if e.shape() != endpoint.shape() {
            return Err(Error::ShapeMismatch {
                op: "build_triples",
                lhs: e.shape().to_vec(),
                rhs: endpoint.shape().to_vec(),
            });
        }
    }
    let (b, d) = (x0v.rows(), x0v.cols());
    if t.len() != b {
        return Err(Error::LengthMismatch {
            expected: b,
            got: t.len(),
        });
    }
    let t: Vec<f64> = t.iter().map(|&s| spec.clamp_t(s)).collect();
    let coefs: Vec<Coefficients> = t.iter().map(|&s| spec.coefficients(s)).collect();

    let mut xt_const = Vec::with_capacity(b * d);
    let mut tg_const = Vec::with_capacity(b * d);
    for (i, c) in coefs.iter().enumerate() {
        for j in 0..d {
            let e = endpoint.data()[i * d + j];
            let n = eps.map_or(0.0, |n| n.data()[i * d + j]);
            xt_const.push(c.xt[1] * e + c.xt[2] * n);
            tg_const.push(c.target[1] * e + c.target[2] * n);
        }
    }
    let a0 = tape.constant(Tensor::vector(coefs.iter().map(|c| c.xt[0]).collect()));
    let b0 = tape.constant(Tensor::vector(coefs.iter().map(|c| c.target[0]).collect()));
    let xt_c = tape.constant(Tensor::matrix(b, d, xt_const)?);
    let tg_c = tape.constant(Tensor::matrix(b, d, tg_const)?);
    let xt_lin = tape.mul_col(x0, a0)?;
    let x_t = tape.add(xt_lin, xt_c)?;
    let tg_lin = tape.mul_col(x0, b0)?;
    let target = tape.add(tg_lin, tg_c)?;
    Ok(Triples {
        t,
        x_t,
        target,
        cond: None,
        weights: None,
    })
}
