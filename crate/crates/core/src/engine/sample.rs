use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Field, Generator};
use crate::paths::PathSpec;
use crate::rng;
use crate::tape::Tape;
use crate::tensor::Tensor;

/// Rows per forward pass when sampling large batches.
pub const SAMPLE_CHUNK: usize = 4096;

fn rows_of(t: &Tensor, r0: usize, r1: usize) -> Result<Tensor> {
    let d = t.cols();
    Tensor::matrix(r1 - r0, d, t.data()[r0 * d..r1 * d].to_vec())
}

/// Euler integration of `dx/dt = u(t, x)` from `t = 1` to `t = 0`, starting at
/// `start` (`[n, D]`). Velocity paths only.
pub fn integrate_ode(
    teacher: &dyn Field,
    path: &PathSpec,
    n_steps: usize,
    start: &Tensor,
    cond: Option<&Tensor>,
) -> Result<Tensor> {
    if !path.kind.is_velocity() {
        return Err(Error::UnsupportedPath {
            kind: path.kind.name(),
            what: "the ODE sampler",
        });
    }
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be at least 1".into()));
    }
    let n = start.rows();
    let d = start.cols();
    let mut out = Vec::with_capacity(n * d);
    let dt = 1.0 / n_steps as f64;
    for r0 in (0..n).step_by(SAMPLE_CHUNK) {
        let r1 = (r0 + SAMPLE_CHUNK).min(n);
        let mut x = rows_of(start, r0, r1)?;
        let c = cond.map(|c| rows_of(c, r0, r1)).transpose()?;
        for k in 0..n_steps {
            let t = 1.0 - k as f64 * dt;
            let mut tape = Tape::new();
            let xv = tape.constant(x.clone());
            let cv = c.as_ref().map(|c| tape.constant(c.clone()));
            let u = teacher.eval(&mut tape, &vec![t; r1 - r0], xv, cv)?;
            for (xi, ui) in x.data_mut().iter_mut().zip(tape.value(u).data()) {
                *xi -= dt * ui;
            }
        }
        out.extend_from_slice(x.data());
    }
    Tensor::matrix(n, d, out)
}

/// Teacher samples: standard normal starting points integrated to `t = 0`.
pub fn sample_teacher_ode<R: Rng + ?Sized>(
    teacher: &dyn Field,
    path: &PathSpec,
    n_steps: usize,
    n_samples: usize,
    dim: usize,
    rng: &mut R,
) -> Result<Tensor> {
    let start = Tensor::matrix(n_samples, dim, rng::normal_vec(rng, n_samples * dim))?;
    integrate_ode(teacher, path, n_steps, &start, None)
}

/// One-step samples `G(z)` with `z ~ N(0, I)`; `cond` supplies `x_T` per row
/// for a conditional generator.
pub fn sample_generator<R: Rng + ?Sized>(
    gen: &Generator,
    n_samples: usize,
    rng: &mut R,
    cond: Option<&Tensor>,
) -> Result<Tensor> {
    let d = gen.net.spec.dim;
    let z = Tensor::matrix(n_samples, d, rng::normal_vec(rng, n_samples * d))?;
    generate(gen, &z, cond)
}

/// `G(z)` for given latents, in chunks.
pub fn generate(gen: &Generator, z: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
    let n = z.rows();
    let d = gen.net.spec.dim;
    if let Some(c) = cond {
        if c.rows() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: c.rows(),
            });
        }
    }
    let mut out = Vec::with_capacity(n * d);
    for r0 in (0..n).step_by(SAMPLE_CHUNK) {
        let r1 = (r0 + SAMPLE_CHUNK).min(n);
        let zc = rows_of(z, r0, r1)?;
        let cc = cond.map(|c| rows_of(c, r0, r1)).transpose()?;
        out.extend_from_slice(gen.sample(&zc, cc.as_ref())?.data());
    }
    Tensor::matrix(n, d, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, MlpSpec};
    use crate::oracle::AnalyticField;
    use crate::paths::PathKind;

    #[test]
    fn zero_residual_generator_returns_latents() {
        let mut r = rng::stream(0, 0);
        let g = Generator::init(MlpSpec::new(2, vec![8], Activation::Silu), &mut r).unwrap();
        let z = Tensor::matrix(5000, 2, rng::normal_vec(&mut r, 10_000)).unwrap();
        assert_eq!(generate(&g, &z, None).unwrap(), z);
    }

    #[test]
    fn exact_field_transports_noise_to_data() {
        let mut r = rng::stream(1, 0);
        let f = AnalyticField::Flow { mu: 2.0 };
        let s = sample_teacher_ode(&f, &PathSpec::flow(), 200, 20_000, 1, &mut r).unwrap();
        let m = s.data().iter().sum::<f64>() / 20_000.0;
        assert!(
            (m - 2.0).abs() < 3.0 / (20_000f64).sqrt() + 0.01,
            "mean {m}"
        );
    }

    #[test]
    fn score_paths_rejected() {
        let f = AnalyticField::Flow { mu: 0.0 };
        let start = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let p = PathSpec::new(PathKind::DiffusionVp);
        assert!(matches!(
            integrate_ode(&f, &p, 10, &start, None),
            Err(Error::UnsupportedPath { .. })
        ));
    }
}
