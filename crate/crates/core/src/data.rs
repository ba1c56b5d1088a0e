//! Built-in synthetic datasets and data couplings.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// A named synthetic data distribution `p₀*`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dataset {
    /// `N(mu, sd²)` in one dimension.
    Gauss1d {
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        sd: f64,
    },
    /// Equal-weight mixture of 1D Gaussians with a shared spread.
    GaussMix { means: Vec<f64>, sd: f64 },
    /// The two interleaved half circles, scaled to roughly unit spread.
    TwoMoons {
        #[serde(default = "default_moons_noise")]
        noise: f64,
    },
    /// Eight Gaussians evenly spaced on a circle.
    EightGaussians {
        #[serde(default = "default_radius")]
        radius: f64,
        #[serde(default = "default_mode_sd")]
        sd: f64,
    },
    /// Uniform on the dark squares of a 4×4 board spanning `[-2, 2]²`.
    Checkerboard,
}

fn one() -> f64 {
    1.0
}
fn default_moons_noise() -> f64 {
    0.1
}
fn default_radius() -> f64 {
    2.0
}
fn default_mode_sd() -> f64 {
    0.2
}

impl Dataset {
    pub fn gauss1d(mu: f64) -> Self {
        Dataset::Gauss1d { mu, sd: 1.0 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Dataset::Gauss1d { .. } => "gauss1d",
            Dataset::GaussMix { .. } => "gauss_mix",
            Dataset::TwoMoons { .. } => "two_moons",
            Dataset::EightGaussians { .. } => "eight_gaussians",
            Dataset::Checkerboard => "checkerboard",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Dataset::Gauss1d { .. } | Dataset::GaussMix { .. } => 1,
            _ => 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| {
            Err(Error::InvalidConfig(format!(
                "dataset {}: {m}",
                self.name()
            )))
        };
        match self {
            Dataset::Gauss1d { mu, sd } if !(mu.is_finite() && *sd > 0.0) => {
                bad("sd must be positive")
            }
            Dataset::GaussMix { means, sd } if means.is_empty() || !(*sd > 0.0) => {
                bad("needs at least one mean and a positive sd")
            }
            Dataset::TwoMoons { noise } if !(*noise >= 0.0) => bad("noise must be nonnegative"),
            Dataset::EightGaussians { radius, sd } if !(*radius > 0.0 && *sd > 0.0) => {
                bad("radius and sd must be positive")
            }
            _ => Ok(()),
        }
    }

    /// `n` samples as an `[n, dim]` tensor.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Tensor {
        let d = self.dim();
        let mut out = Vec::with_capacity(n * d);
        for _ in 0..n {
            match self {
                Dataset::Gauss1d { mu, sd } => out.push(mu + sd * normal(rng)),
                Dataset::GaussMix { means, sd } => {
                    let k = rng.random_range(0..means.len());
                    out.push(means[k] + sd * normal(rng));
                }
                Dataset::TwoMoons { noise } => {
                    let a = PI * rng.random::<f64>();
                    let (x, y) = if rng.random::<bool>() {
                        (math::cos(a), math::sin(a))
                    } else {
                        (1.0 - math::cos(a), 0.5 - math::sin(a))
                    };
                    out.push(2.0 * (x - 0.5) + noise * normal(rng));
                    out.push(2.0 * (y - 0.25) + noise * normal(rng));
                }
                Dataset::EightGaussians { radius, sd } => {
                    let k = rng.random_range(0..8) as f64;
                    let a = 2.0 * PI * k / 8.0;
                    out.push(radius * math::cos(a) + sd * normal(rng));
                    out.push(radius * math::sin(a) + sd * normal(rng));
                }
                Dataset::Checkerboard => {
                    let x = 4.0 * rng.random::<f64>() - 2.0;
                    let y0 = 4.0 * rng.random::<f64>() - 2.0;
                    // shift y by one cell on odd columns so only dark squares are hit
                    let col = math::floor(x + 2.0) as i64;
                    let row = math::floor(y0 + 2.0) as i64;
                    let y = if (col + row) % 2 == 0 {
                        y0
                    } else if y0 < 1.0 {
                        y0 + 1.0
                    } else {
                        y0 - 3.0
                    };
                    out.push(x);
                    out.push(y);
                }
            }
        }
        Tensor::matrix(n, d, out).expect("n * dim entries")
    }
}

/// A joint distribution `π*(x₀, x_T)` of clean and corrupted endpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum Coupling {
    /// `x₀ ~ N(mu, sd²)`, `x_T = x₀ + shift + noise·ε` in one dimension.
    Translation {
        #[serde(default)]
        mu: f64,
        #[serde(default = "one")]
        sd: f64,
        #[serde(default = "one")]
        shift: f64,
        #[serde(default = "default_translation_noise")]
        noise: f64,
    },
    /// `x₀ ~ data` and `x_T ~ N(0, I)` drawn independently.
    Independent { data: Dataset },
}

fn default_translation_noise() -> f64 {
    0.1
}

/// A batch of coupled endpoints, each `[n, dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PairBatch {
    pub x0: Tensor,
    pub x_end: Tensor,
}

impl Coupling {
    pub fn name(&self) -> &'static str {
        match self {
            Coupling::Translation { .. } => "translation",
            Coupling::Independent { .. } => "independent",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Coupling::Translation { .. } => 1,
            Coupling::Independent { data } => data.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Coupling::Translation { sd, noise, .. } if !(*sd > 0.0 && *noise >= 0.0) => Err(
                Error::InvalidConfig("translation coupling needs sd > 0 and noise >= 0".into()),
            ),
            Coupling::Independent { data } => data.validate(),
            _ => Ok(()),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> PairBatch {
        match self {
            Coupling::Translation {
                mu,
                sd,
                shift,
                noise,
            } => {
                let mut x0 = vec![0.0; n];
                let mut xe = vec![0.0; n];
                for i in 0..n {
                    x0[i] = mu + sd * normal(rng);
                    xe[i] = x0[i] + shift + noise * normal(rng);
                }
                PairBatch {
                    x0: Tensor::matrix(n, 1, x0).expect("n entries"),
                    x_end: Tensor::matrix(n, 1, xe).expect("n entries"),
                }
            }
            Coupling::Independent { data } => {
                let x0 = data.sample(rng, n);
                let d = data.dim();
                let xe = (0..n * d).map(|_| normal(rng)).collect();
                PairBatch {
                    x0,
                    x_end: Tensor::matrix(n, d, xe).expect("n * dim entries"),
                }
            }
        }
    }

    /// Draws only the corrupted endpoints `x_T ~ p_T`.
    pub fn sample_end<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Tensor {
        self.sample(rng, n).x_end
    }

    /// `E[x₀ | x_T]` where it has a closed form.
    pub fn posterior_mean(&self, x_end: f64) -> Option<f64> {
        match self {
            Coupling::Translation {
                mu,
                sd,
                shift,
                noise,
            } => {
                let (v, n2) = (sd * sd, noise * noise);
                Some(mu + v / (v + n2) * (x_end - shift - mu))
            }
            Coupling::Independent {
                data: Dataset::Gauss1d { mu, .. },
            } => Some(*mu),
            Coupling::Independent { .. } => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn moments(t: &Tensor, col: usize) -> (f64, f64) {
        let d = t.cols();
        let v: Vec<f64> = t.data().iter().skip(col).step_by(d).copied().collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n)
    }

    #[test]
    fn shapes() {
        let mut r = rng::stream(0, 0);
        for d in [
            Dataset::gauss1d(2.0),
            Dataset::GaussMix {
                means: vec![-1.0, 1.0],
                sd: 0.3,
            },
            Dataset::TwoMoons { noise: 0.1 },
            Dataset::EightGaussians {
                radius: 2.0,
                sd: 0.2,
            },
            Dataset::Checkerboard,
        ] {
            d.validate().unwrap();
            let s = d.sample(&mut r, 7);
            assert_eq!(s.shape(), &[7, d.dim()]);
            assert!(s.all_finite());
        }
    }

    #[test]
    fn gauss1d_moments() {
        let mut r = rng::stream(1, 0);
        let (m, v) = moments(&Dataset::gauss1d(2.0).sample(&mut r, 200_000), 0);
        assert!((m - 2.0).abs() < 0.01 && (v - 1.0).abs() < 0.02);
    }

    #[test]
    fn checkerboard_hits_dark_squares_only() {
        let mut r = rng::stream(2, 0);
        let s = Dataset::Checkerboard.sample(&mut r, 5000);
        for row in s.data().chunks(2) {
            let (c, k) = (
                libm::floor(row[0] + 2.0) as i64,
                libm::floor(row[1] + 2.0) as i64,
            );
            assert_eq!((c + k) % 2, 0, "{row:?}");
            assert!(row[1] >= -2.0 && row[1] < 2.0);
        }
    }

    #[test]
    fn translation_posterior_matches_regression() {
        let c = Coupling::Translation {
            mu: 0.5,
            sd: 1.0,
            shift: 1.0,
            noise: 0.5,
        };
        let mut r = rng::stream(3, 0);
        let b = c.sample(&mut r, 200_000);
        // least-squares slope of x0 on x_T equals the posterior-mean slope
        let (mx, vx) = moments(&b.x_end, 0);
        let (m0, _) = moments(&b.x0, 0);
        let cov =
            b.x0.data()
                .iter()
                .zip(b.x_end.data())
                .map(|(a, e)| (a - m0) * (e - mx))
                .sum::<f64>()
                / 200_000.0;
        let slope = cov / vx;
        let p0 = c.posterior_mean(0.0).unwrap();
        let p1 = c.posterior_mean(1.0).unwrap();
        assert!((slope - (p1 - p0)).abs() < 0.01);
        assert!((c.posterior_mean(mx).unwrap() - m0).abs() < 0.01);
    }

    #[test]
    fn json_round_trip_rejects_unknown_keys() {
        let d: Dataset = serde_json::from_str(r#"{"name":"gauss1d","mu":2.0}"#).unwrap();
        assert_eq!(d, Dataset::gauss1d(2.0));
        assert!(serde_json::from_str::<Dataset>(r#"{"name":"gauss1d","mean":2.0}"#).is_err());
        assert!(serde_json::from_str::<Dataset>(r#"{"name":"mnist"}"#).is_err());
    }
}
