//! Training orchestration: teacher fitting, the alternating distillation
//! loop, fine-tuning, the coupling variant and samplers.
//!
//! Time runs from data (`t = 0`) to noise (`t = 1`); samplers integrate
//! backwards. All randomness comes from streams derived from the config seed,
//! so a config fully determines a run.

mod config;
mod distill;
mod sample;
mod teacher;

pub use config::{DistillConfig, FakeInit, GenInit, Mode, NetConfig, TeacherConfig};
pub use distill::{
    distill, distill_coupling, distill_from, finetune, DistillOutcome, RunState, StepKind,
};
pub use sample::{generate, integrate_ode, sample_generator, sample_teacher_ode, SAMPLE_CHUNK};
pub use teacher::{train_teacher, TeacherOutcome};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Coupling, Dataset};
use crate::error::Result;
use crate::metrics::{self, MetricsRecord};
use crate::nn::Mlp;
use crate::oracle::Gauss1D;
use crate::paths::PathSpec;
use crate::rng::{self, purpose};
use crate::tensor::Tensor;

/// Consecutive non-finite steps tolerated before a run is aborted.
pub const MAX_BAD_STEPS: u32 = 3;

/// Hooks called at every evaluation point. Implementations may fill in the
/// metric fields of the record and persist whatever they need; an error
/// aborts the run.
pub trait Observer {
    fn on_teacher_eval(&mut self, _rec: &mut MetricsRecord, _teacher: &Mlp) -> Result<()> {
        Ok(())
    }

    fn on_distill_eval(&mut self, _rec: &mut MetricsRecord, _state: &RunState) -> Result<()> {
        Ok(())
    }
}

impl Observer for () {}

/// Where real data comes from: a plain dataset paired with Gaussian noise
/// endpoints, or a coupling whose `x_T` also conditions the networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Unconditional(Dataset),
    Coupled(Coupling),
}

/// One draw of shared batch randomness.
#[derive(Debug, Clone)]
pub struct DrawnBatch {
    pub t: alloc::vec::Vec<f64>,
    /// Real data `x₀*`.
    pub x0: Tensor,
    /// Noise endpoint, or `x_T` for a coupling.
    pub endpoint: Tensor,
    pub eps: Option<Tensor>,
    pub cond: Option<Tensor>,
}

impl DataSource {
    pub fn dim(&self) -> usize {
        match self {
            DataSource::Unconditional(d) => d.dim(),
            DataSource::Coupled(c) => c.dim(),
        }
    }

    pub fn cond_dim(&self) -> usize {
        match self {
            DataSource::Unconditional(_) => 0,
            DataSource::Coupled(c) => c.dim(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            DataSource::Unconditional(d) => d.validate(),
            DataSource::Coupled(c) => c.validate(),
        }
    }

    /// Draws times, real data, endpoints and (when the path uses it) extra
    /// noise, in that order.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, path: &PathSpec, n: usize) -> DrawnBatch {
        let t = path.sample_t(rng, n);
        let d = self.dim();
        let (x0, endpoint, cond) = match self {
            DataSource::Unconditional(data) => {
                let x0 = data.sample(rng, n);
                let e = Tensor::matrix(n, d, rng::normal_vec(rng, n * d)).expect("n * d entries");
                (x0, e, None)
            }
            DataSource::Coupled(c) => {
                let b = c.sample(rng, n);
                let cond = b.x_end.clone();
                (b.x0, b.x_end, Some(cond))
            }
        };
        let eps = path
            .kind
            .uses_extra_noise()
            .then(|| Tensor::matrix(n, d, rng::normal_vec(rng, n * d)).expect("n * d entries"));
        DrawnBatch {
            t,
            x0,
            endpoint,
            eps,
            cond,
        }
    }
}

/// Scores the EMA generator against a fixed reference sample.
///
/// The latents are redrawn from the same seeded stream at every evaluation,
/// so successive records differ only through the generator.
#[derive(Debug, Clone)]
pub struct SampleEvaluator {
    pub reference: Tensor,
    /// Conditioning rows for a conditional generator, one per sample.
    pub cond: Option<Tensor>,
    pub n_samples: usize,
    pub n_projections: usize,
    /// Sample count for the quadratic-cost energy distance; 0 skips it.
    pub n_energy: usize,
    /// Closed-form target for `w2_gauss` in one dimension.
    pub gauss_ref: Option<Gauss1D>,
    pub seed: u64,
}

impl SampleEvaluator {
    pub fn new(reference: Tensor, n_samples: usize, seed: u64) -> Self {
        Self {
            reference,
            cond: None,
            n_samples,
            n_projections: metrics::DEFAULT_PROJECTIONS,
            n_energy: 0,
            gauss_ref: None,
            seed,
        }
    }

    pub fn fill(&self, rec: &mut MetricsRecord, gen: &crate::nn::Generator) -> Result<()> {
        let mut r = rng::stream(self.seed, purpose::EVAL);
        let s = sample_generator(gen, self.n_samples, &mut r, self.cond.as_ref())?;
        rec.sliced_w2 = Some(metrics::sliced_w2(
            &s,
            &self.reference,
            self.n_projections,
            &mut r,
        )?);
        if let Some(g) = self.gauss_ref {
            rec.w2_gauss = Some(metrics::w2_gaussian(metrics::fit_gaussian(s.data())?, g));
        }
        if self.n_energy > 0 {
            let d = s.cols();
            let take = |t: &Tensor| {
                let k = self.n_energy.min(t.rows());
                Tensor::matrix(k, d, t.data()[..k * d].to_vec())
            };
            rec.energy_dist = Some(metrics::energy_distance(
                &take(&s)?,
                &take(&self.reference)?,
            )?);
        }
        Ok(())
    }
}

impl Observer for SampleEvaluator {
    fn on_distill_eval(&mut self, rec: &mut MetricsRecord, state: &RunState) -> Result<()> {
        self.fill(rec, &state.ema_generator())
    }
}
