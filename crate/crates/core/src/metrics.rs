//! Distribution distances used to score generators at desk scale.
//!
//! Sample sets are `[n, D]` tensors (rank 1 is read as `D = 1`).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::oracle::Gauss1D;
use crate::rng;
use crate::tensor::Tensor;

/// Default number of random directions for [`sliced_w2`].
pub const DEFAULT_PROJECTIONS: usize = 128;

/// One evaluation snapshot, one line of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub step: u64,
    pub losses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w2_gauss: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sliced_w2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_dist: Option<f64>,
    /// Steps skipped since the previous record because a gradient was not finite.
    #[serde(default)]
    pub skipped_steps: u64,
    pub wall_ms: f64,
}

impl MetricsRecord {
    pub fn new(step: u64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    /// Stores `value` under `name` unless it is NaN or infinite.
    pub fn set_loss(&mut self, name: &str, value: f64) {
        if value.is_finite() {
            self.losses.insert(name.into(), value);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.losses.values().all(|v| v.is_finite())
            && [self.w2_gauss, self.sliced_w2, self.energy_dist]
                .iter()
                .flatten()
                .all(|v| v.is_finite())
            && self.wall_ms.is_finite()
    }
}

/// Closed-form 2-Wasserstein distance between 1D Gaussians.
pub fn w2_gaussian(a: Gauss1D, b: Gauss1D) -> f64 {
    let dm = a.mean - b.mean;
    let ds = a.sd() - b.sd();
    math::sqrt(dm * dm + ds * ds)
}

/// Sample mean and (population) variance of a 1D sample set.
pub fn fit_gaussian(samples: &[f64]) -> Result<Gauss1D> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    Gauss1D::new(mean, var.max(f64::MIN_POSITIVE))
}

fn shape_of(t: &Tensor) -> Result<(usize, usize)> {
    let (n, d) = match t.shape().len() {
        1 => (t.len(), 1),
        2 => (t.shape()[0], t.shape()[1]),
        _ => {
            return Err(Error::InvalidConfig(
                "sample sets must be rank 1 or 2".into(),
            ))
        }
    };
    if n == 0 || d == 0 {
        return Err(Error::EmptySamples);
    }
    Ok((n, d))
}

fn check_pair(a: &Tensor, b: &Tensor) -> Result<usize> {
    let (_, da) = shape_of(a)?;
    let (_, db) = shape_of(b)?;
    if da != db {
        return Err(Error::DimMismatch(da, db));
    }
    Ok(da)
}

fn sort(v: &mut [f64]) {
    v.sort_unstable_by(f64::total_cmp);
}

/// Exact 2-Wasserstein distance between two 1D empirical distributions,
/// integrating the squared difference of their quantile functions.
pub fn w2_empirical_1d(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySamples);
    }
    let (mut a, mut b) = (a.to_vec(), b.to_vec());
    sort(&mut a);
    sort(&mut b);
    Ok(math::sqrt(w2_sq_sorted(&a, &b)))
}

fn w2_sq_sorted(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == b.len() {
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        return s / a.len() as f64;
    }
    // walk the merged breakpoints i/na and j/nb of both step quantile functions
    let (na, nb) = (a.len(), b.len());
    let (mut i, mut j) = (0, 0);
    let mut u = 0.0;
    let mut total = 0.0;
    while i < na && j < nb {
        let ua = (i + 1) as f64 / na as f64;
        let ub = (j + 1) as f64 / nb as f64;
        let next = ua.min(ub);
        let d = a[i] - b[j];
        total += (next - u) * d * d;
        u = next;
        // advance every index whose step ends here; exact integer comparison
        // avoids drifting on ties
        let adv_a = (i + 1) * nb <= (j + 1) * na;
        let adv_b = (j + 1) * na <= (i + 1) * nb;
        if adv_a {
            i += 1;
        }
        if adv_b {
            j += 1;
        }
    }
    total
}

/// Mean over `n_projections` random unit directions of the 1D empirical W2
/// between the projected sample sets. In one dimension the single direction
/// `+1` is used and the result is the exact empirical W2.
pub fn sliced_w2<R: Rng + ?Sized>(
    a: &Tensor,
    b: &Tensor,
    n_projections: usize,
    rng: &mut R,
) -> Result<f64> {
    let d = check_pair(a, b)?;
    if n_projections == 0 {
        return Err(Error::InvalidConfig(
            "n_projections must be at least 1".into(),
        ));
    }
    if d == 1 {
        return w2_empirical_1d(a.data(), b.data());
    }
    let mut total = 0.0;
    for _ in 0..n_projections {
        let mut dir = rng::normal_vec(rng, d);
        let norm = math::sqrt(dir.iter().map(|v| v * v).sum());
        dir.iter_mut().for_each(|v| *v /= norm);
        let mut pa = project(a, &dir);
        let mut pb = project(b, &dir);
        sort(&mut pa);
        sort(&mut pb);
        total += math::sqrt(w2_sq_sorted(&pa, &pb));
    }
    Ok(total / n_projections as f64)
}

fn project(s: &Tensor, dir: &[f64]) -> Vec<f64> {
    s.data()
        .chunks(dir.len())
        .map(|row| row.iter().zip(dir).map(|(x, w)| x * w).sum())
        .collect()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    math::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
}

fn mean_within(s: &Tensor, d: usize) -> f64 {
    let rows: Vec<&[f64]> = s.data().chunks(d).collect();
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            total += dist(rows[i], rows[j]);
        }
    }
    2.0 * total / (n * (n - 1)) as f64
}

/// `2E‖A−B‖ − E‖A−A′‖ − E‖B−B′‖`, with the within-set terms as U-statistics
/// (pairs of distinct indices).
pub fn energy_distance(a: &Tensor, b: &Tensor) -> Result<f64> {
    let d = check_pair(a, b)?;
    let (ra, rb): (Vec<&[f64]>, Vec<&[f64]>) =
        (a.data().chunks(d).collect(), b.data().chunks(d).collect());
    let mut cross = 0.0;
    for x in &ra {
        for y in &rb {
            cross += dist(x, y);
        }
    }
    cross /= (ra.len() * rb.len()) as f64;
    Ok(2.0 * cross - mean_within(a, d) - mean_within(b, d))
}
