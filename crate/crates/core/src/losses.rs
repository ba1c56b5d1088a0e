//! Training objectives.
//!
//! Every function records its computation on the caller's tape and returns
//! handles, so the caller decides which parameters receive gradients: bind a
//! network with `trainable = false` to freeze it, and pass
//! [`Triples::detached`] to cut the generator out of a fake-model step.
//! Frozen networks still propagate gradients through their inputs, which is
//! how generator losses reach `x_t^θ`.
//!
//! Batch means are weighted means `(1/B)·Σ wᵢ ℓᵢ` with `wᵢ = 1` unless the
//! triples carry weights.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BoundDisc, BoundMlp, Field};
use crate::paths::Triples;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Guard below which the normalized loss treats a direction as degenerate.
pub const EPS_NORM: f64 = 1e-8;

/// Loss coefficients.
///
/// `alpha`, `beta` split the linearized terms between generated and real
/// data, `gamma` splits the quadratic term in the general form, `alpha_sid`
/// scales the quadratic term of the SiD generator loss and the `lambda_*`
/// weights combine distillation and adversarial terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Coeffs {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub alpha_sid: f64,
    pub lambda_dist: f64,
    pub lambda_adv_g: f64,
    pub lambda_adv_d: f64,
}

impl Default for Coeffs {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            beta: 1.0,
            gamma: 1.0,
            alpha_sid: 0.5,
            lambda_dist: 1.0,
            lambda_adv_g: 0.3,
            lambda_adv_d: 1.0,
        }
    }
}

impl Coeffs {
    /// `(α, β)` with `γ = α` and default everything else.
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma: alpha,
            ..Self::default()
        }
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
        ] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::CoeffOutOfRange { name, value: v });
            }
        }
        for (name, v) in [
            ("alpha_sid", self.alpha_sid),
            ("lambda_dist", self.lambda_dist),
            ("lambda_adv_g", self.lambda_adv_g),
            ("lambda_adv_d", self.lambda_adv_d),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::InvalidConfig(alloc::format!(
                    "{name} must be a nonnegative number, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Whether any term puts weight on real data.
    pub fn uses_real(&self) -> bool {
        self.alpha < 1.0 || self.beta < 1.0 || self.gamma < 1.0
    }
}

/// A loss split into its generated-data and real-data parts.
#[derive(Debug, Clone, Copy)]
pub struct LossTerms {
    pub total: Var,
    pub gen_term: Var,
    pub real_term: Option<Var>,
}

fn weighted_mean(tape: &mut Tape, rows: Var, weights: Option<&[f64]>) -> Result<Var> {
    let rows = match weights {
        Some(w) => {
            let wv = tape.constant(Tensor::vector(w.to_vec()));
            tape.mul(rows, wv)?
        }
        None => rows,
    };
    Ok(tape.mean(rows))
}

/// Per-row `‖pred − target‖²`.
fn sq_err_rows(tape: &mut Tape, pred: Var, target: Var) -> Result<Var> {
    let d = tape.sub(pred, target)?;
    let sq = tape.square(d);
    Ok(tape.row_sum(sq))
}

/// `weight · mean‖f(x_t) − scale·target‖²`.
fn scaled_um(tape: &mut Tape, f: &dyn Field, tr: &Triples, scale: f64, weight: f64) -> Result<Var> {
    let pred = f.eval(tape, &tr.t, tr.x_t, tr.cond)?;
    let target = tape.scale(tr.target, scale);
    let rows = sq_err_rows(tape, pred, target)?;
    let m = weighted_mean(tape, rows, tr.weights.as_deref())?;
    Ok(tape.scale(m, weight))
}

fn need_real(real: Option<&Triples>) -> Result<&Triples> {
    match real {
        Some(r) if !r.is_empty() => Ok(r),
        _ => Err(Error::MissingRealBatch),
    }
}

/// Universal matching loss: `mean‖f(t, x_t) − target‖²`.
pub fn um_loss(tape: &mut Tape, f: &dyn Field, tr: &Triples) -> Result<Var> {
    scaled_um(tape, f, tr, 1.0, 1.0)
}

/// Universal matching loss with real data:
/// `α·mean‖f(x^θ_t) − (β/α)y^θ‖² + (1−α)·mean‖f(x*_t) − ((1−β)/(1−α))y*‖²`.
///
/// At `α = 1, β < 1` the real term is `−2(1−β)·mean⟨f(x*_t), y*⟩`, the part of
/// the expanded square that survives once its `1/(1−α)` pieces are dropped.
/// At `α = β = 1` there is no real term.
pub fn real_um_loss(
    tape: &mut Tape,
    f: &dyn Field,
    gen: &Triples,
    real: Option<&Triples>,
    c: &Coeffs,
) -> Result<LossTerms> {
    let gen_term = scaled_um(tape, f, gen, c.beta / c.alpha, c.alpha)?;
    let real_term = if c.alpha < 1.0 {
        let r = need_real(real)?;
        Some(scaled_um(
            tape,
            f,
            r,
            (1.0 - c.beta) / (1.0 - c.alpha),
            1.0 - c.alpha,
        )?)
    } else if c.beta < 1.0 {
        let r = need_real(real)?;
        let pred = f.eval(tape, &r.t, r.x_t, r.cond)?;
        let rows = tape.row_dot(pred, r.target)?;
        let m = weighted_mean(tape, rows, r.weights.as_deref())?;
        Some(tape.scale(m, -2.0 * (1.0 - c.beta)))
    } else {
        None
    };
    let total = match real_term {
        Some(rt) => tape.add(gen_term, rt)?,
        None => gen_term,
    };
    Ok(LossTerms {
        total,
        gen_term,
        real_term,
    })
}

/// Fake-model step of the alternating loop: [`real_um_loss`] with every
/// triple detached, so no gradient reaches the generator.
pub fn real_uid_fake_step_loss(
    tape: &mut Tape,
    fake: &BoundMlp,
    gen: &Triples,
    real: Option<&Triples>,
    c: &Coeffs,
) -> Result<LossTerms> {
    let gen = gen.detached(tape);
    let real = real.map(|r| r.detached(tape));
    real_um_loss(tape, fake, &gen, real.as_ref(), c)
}

/// Generator step: `α·mean[‖T(x^θ_t) − (β/α)y^θ‖² − ‖F(x^θ_t) − (β/α)y^θ‖²]`.
///
/// Only generated triples appear; real data reaches the generator through the
/// fake model alone.
pub fn real_uid_generator_loss(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
    c: &Coeffs,
) -> Result<Var> {
    let s = c.beta / c.alpha;
    let target = tape.scale(gen.target, s);
    let tv = teacher.eval(tape, &gen.t, gen.x_t, gen.cond)?;
    let fv = fake.eval(tape, &gen.t, gen.x_t, gen.cond)?;
    let rt = sq_err_rows(tape, tv, target)?;
    let rf = sq_err_rows(tape, fv, target)?;
    let rows = tape.sub(rt, rf)?;
    let m = weighted_mean(tape, rows, gen.weights.as_deref())?;
    Ok(tape.scale(m, c.alpha))
}

/// Data-free generator loss `mean[‖T − y‖² − ‖F − y‖²]`.
pub fn uid_generator_loss(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
) -> Result<Var> {
    real_uid_generator_loss(tape, teacher, fake, gen, &Coeffs::new(1.0, 1.0))
}

/// `δ = T − F` at the triples' points, plus the teacher values.
fn delta(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    tr: &Triples,
) -> Result<(Var, Var)> {
    let tv = teacher.eval(tape, &tr.t, tr.x_t, tr.cond)?;
    let fv = fake.eval(tape, &tr.t, tr.x_t, tr.cond)?;
    Ok((tape.sub(tv, fv)?, tv))
}

/// Per-row `−q‖δ‖² + 2a⟨δ, T⟩ − 2b⟨δ, y⟩`.
fn delta_rows(tape: &mut Tape, d: Var, tv: Var, y: Var, q: f64, a: f64, b: f64) -> Result<Var> {
    let dd = tape.row_dot(d, d)?;
    let dt = tape.row_dot(d, tv)?;
    let dy = tape.row_dot(d, y)?;
    let t1 = tape.scale(dd, -q);
    let t2 = tape.scale(dt, 2.0 * a);
    let t3 = tape.scale(dy, -2.0 * b);
    let s = tape.add(t1, t2)?;
    tape.add(s, t3)
}

/// General RealUID objective with `δ = T − F`, maximized over the fake model:
/// generated rows `−γ‖δ‖² + 2α⟨δ,T⟩ − 2β⟨δ,y^θ⟩`, real rows
/// `−(1−γ)‖δ‖² + 2(1−α)⟨δ,T⟩ − 2(1−β)⟨δ,y*⟩`.
pub fn general_real_uid_loss(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
    real: Option<&Triples>,
    c: &Coeffs,
) -> Result<LossTerms> {
    let (d, tv) = delta(tape, teacher, fake, gen)?;
    let rows = delta_rows(tape, d, tv, gen.target, c.gamma, c.alpha, c.beta)?;
    let gen_term = weighted_mean(tape, rows, gen.weights.as_deref())?;
    let real_term = if c.uses_real() {
        let r = need_real(real)?;
        let (d, tv) = delta(tape, teacher, fake, r)?;
        let rows = delta_rows(
            tape,
            d,
            tv,
            r.target,
            1.0 - c.gamma,
            1.0 - c.alpha,
            1.0 - c.beta,
        )?;
        Some(weighted_mean(tape, rows, r.weights.as_deref())?)
    } else {
        None
    };
    let total = match real_term {
        Some(rt) => tape.add(gen_term, rt)?,
        None => gen_term,
    };
    Ok(LossTerms {
        total,
        gen_term,
        real_term,
    })
}

/// SiD-style generator loss with `δ = T − F`:
/// `mean[−2α_SiD·α‖δ‖² + 2α⟨δ,T⟩ − 2β⟨δ,y^θ⟩]`.
pub fn sid_generator_loss(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
    c: &Coeffs,
) -> Result<Var> {
    let (d, tv) = delta(tape, teacher, fake, gen)?;
    let rows = delta_rows(
        tape,
        d,
        tv,
        gen.target,
        2.0 * c.alpha_sid * c.alpha,
        c.alpha,
        c.beta,
    )?;
    weighted_mean(tape, rows, gen.weights.as_deref())
}

/// Per-row `⟨δ/‖δ‖, a·T − b·y⟩`, zero for rows with `‖δ‖ < EPS_NORM`.
fn normalized_rows(tape: &mut Tape, d: Var, tv: Var, y: Var, a: f64, b: f64) -> Result<Var> {
    let sq = tape.row_dot(d, d)?;
    let mask: Vec<f64> = tape
        .value(sq)
        .data()
        .iter()
        .map(|&s| if libm::sqrt(s) >= EPS_NORM { 1.0 } else { 0.0 })
        .collect();
    // degenerate rows get a harmless unit denominator and are masked out
    let pad = tape.constant(Tensor::vector(mask.iter().map(|m| 1.0 - m).collect()));
    let norm = tape.sqrt(sq);
    let den = tape.add(norm, pad)?;
    let at = tape.scale(tv, a);
    let by = tape.scale(y, b);
    let dir = tape.sub(at, by)?;
    let num = tape.row_dot(d, dir)?;
    let ratio = tape.div(num, den)?;
    let m = tape.constant(Tensor::vector(mask));
    tape.mul(ratio, m)
}

/// Normalized RealUID objective, maximized over the fake model:
/// `⟨δ/‖δ‖, αT − βy^θ⟩` on generated rows plus
/// `⟨δ/‖δ‖, (1−α)T − (1−β)y*⟩` on real rows.
pub fn normalized_real_uid_loss(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
    real: Option<&Triples>,
    c: &Coeffs,
) -> Result<LossTerms> {
    let (d, tv) = delta(tape, teacher, fake, gen)?;
    let rows = normalized_rows(tape, d, tv, gen.target, c.alpha, c.beta)?;
    let gen_term = weighted_mean(tape, rows, gen.weights.as_deref())?;
    let real_term = if c.alpha < 1.0 || c.beta < 1.0 {
        let r = need_real(real)?;
        let (d, tv) = delta(tape, teacher, fake, r)?;
        let rows = normalized_rows(tape, d, tv, r.target, 1.0 - c.alpha, 1.0 - c.beta)?;
        Some(weighted_mean(tape, rows, r.weights.as_deref())?)
    } else {
        None
    };
    let total = match real_term {
        Some(rt) => tape.add(gen_term, rt)?,
        None => gen_term,
    };
    Ok(LossTerms {
        total,
        gen_term,
        real_term,
    })
}

/// Rejects coefficient sets the DMD-with-real-data estimator cannot use:
/// a fake score trained with `α ≠ β` drives the generator to collapse.
pub fn check_dmd_coeffs(c: &Coeffs) -> Result<()> {
    if c.alpha != c.beta {
        return Err(Error::DmdUnequalCoeffs {
            mode: "dmd_real",
            alpha: c.alpha,
            beta: c.beta,
        });
    }
    Ok(())
}

/// Per-sample DMD direction `α·(F(x^θ_t) − T(x^θ_t))`, `[B, D]`.
///
/// `fake` is the score minimizing the modified DSM loss with equal
/// coefficients, `teacher` the data score.
pub fn dmd_real_generator_grad(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
    c: &Coeffs,
) -> Result<Tensor> {
    check_dmd_coeffs(c)?;
    let x = tape.stop_grad(gen.x_t);
    let cond = gen.cond.map(|v| tape.stop_grad(v));
    let fv = fake.eval(tape, &gen.t, x, cond)?;
    let tv = teacher.eval(tape, &gen.t, x, cond)?;
    let d = tape.sub(fv, tv)?;
    let g = tape.scale(d, c.alpha);
    Ok(tape.value(g).clone())
}

/// Surrogate whose gradient injects [`dmd_real_generator_grad`] as the
/// vector-Jacobian seed of `x^θ_t`: `mean⟨sg[α(F − T)], x^θ_t⟩`.
pub fn dmd_real_generator_loss(
    tape: &mut Tape,
    teacher: &dyn Field,
    fake: &dyn Field,
    gen: &Triples,
    c: &Coeffs,
) -> Result<Var> {
    let g = dmd_real_generator_grad(tape, teacher, fake, gen, c)?;
    let gv = tape.constant(g);
    let rows = tape.row_dot(gv, gen.x_t)?;
    weighted_mean(tape, rows, gen.weights.as_deref())
}

/// Adversarial terms from a discriminator head on the fake model's last
/// hidden features.
#[derive(Debug, Clone, Copy)]
pub struct AdvTerms {
    /// `mean ln(1 − D(x^θ_t))`, minimized by the generator.
    pub gen_term: Var,
    /// `mean ln D(x*_t) + mean ln(1 − D(x^θ_t))`, maximized by the discriminator.
    pub disc_term: Var,
}

pub fn adversarial_losses(
    tape: &mut Tape,
    disc: &BoundDisc,
    fake: &BoundMlp,
    gen: &Triples,
    real: &Triples,
) -> Result<AdvTerms> {
    let (_, hg) = fake.forward_with_features(tape, &gen.t, gen.x_t, gen.cond)?;
    let (_, hr) = fake.forward_with_features(tape, &real.t, real.x_t, real.cond)?;
    let lg = disc.logits(tape, hg)?;
    let lr = disc.logits(tape, hr)?;
    adversarial_from_logits(
        tape,
        lg,
        lr,
        gen.weights.as_deref(),
        real.weights.as_deref(),
    )
}

/// Generator side of the adversarial baseline alone: `mean ln(1 − D(x^θ_t))`.
pub fn adversarial_gen_term(
    tape: &mut Tape,
    disc: &BoundDisc,
    fake: &BoundMlp,
    gen: &Triples,
) -> Result<Var> {
    let (_, h) = fake.forward_with_features(tape, &gen.t, gen.x_t, gen.cond)?;
    let l = disc.logits(tape, h)?;
    let sp = tape.softplus(l);
    let rows = tape.neg(sp);
    weighted_mean(tape, rows, gen.weights.as_deref())
}

/// Same as [`adversarial_losses`] from precomputed logits, using
/// `ln D = −softplus(−l)` and `ln(1 − D) = −softplus(l)`.
pub fn adversarial_from_logits(
    tape: &mut Tape,
    gen_logits: Var,
    real_logits: Var,
    gen_weights: Option<&[f64]>,
    real_weights: Option<&[f64]>,
) -> Result<AdvTerms> {
    let sp = tape.softplus(gen_logits);
    let log_not_d_gen = tape.neg(sp);
    let neg = tape.neg(real_logits);
    let sp = tape.softplus(neg);
    let log_d_real = tape.neg(sp);
    let gen_term = weighted_mean(tape, log_not_d_gen, gen_weights)?;
    let real_part = weighted_mean(tape, log_d_real, real_weights)?;
    let disc_term = tape.add(real_part, gen_term)?;
    Ok(AdvTerms {
        gen_term,
        disc_term,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp, MlpSpec};
    use crate::paths::{build_triples, PathSpec};
    use crate::rng;

    struct Batch {
        tape: Tape,
        gen: Triples,
        real: Triples,
        teacher: BoundMlp,
        fake: BoundMlp,
    }

    fn batch(seed: u64) -> Batch {
        let mut r = rng::stream(seed, 0);
        let spec = MlpSpec::new(2, vec![8, 8], Activation::Silu);
        let teacher = Mlp::init(spec.clone(), &mut r).unwrap();
        let fake = Mlp::init(spec, &mut r).unwrap();
        let mut tape = Tape::new();
        let b = 6;
        let t = PathSpec::flow().sample_t(&mut r, b);
        let x1 = Tensor::matrix(b, 2, rng::normal_vec(&mut r, 2 * b)).unwrap();
        let g0 = tape.leaf(Tensor::matrix(b, 2, rng::normal_vec(&mut r, 2 * b)).unwrap());
        let r0 = tape.constant(Tensor::matrix(b, 2, rng::normal_vec(&mut r, 2 * b)).unwrap());
        let gen = build_triples(&mut tape, &PathSpec::flow(), &t, g0, &x1, None).unwrap();
        let real = build_triples(&mut tape, &PathSpec::flow(), &t, r0, &x1, None).unwrap();
        let teacher = teacher.bind(&mut tape, false);
        let fake = fake.bind(&mut tape, true);
        Batch {
            tape,
            gen,
            real,
            teacher,
            fake,
        }
    }

    #[test]
    fn real_um_at_unit_coeffs_is_um_bitwise() {
        let mut b = batch(1);
        let um = um_loss(&mut b.tape, &b.fake, &b.gen).unwrap();
        let r = real_um_loss(
            &mut b.tape,
            &b.fake,
            &b.gen,
            Some(&b.real),
            &Coeffs::new(1.0, 1.0),
        )
        .unwrap();
        assert!(r.real_term.is_none());
        assert_eq!(b.tape.item(um).to_bits(), b.tape.item(r.total).to_bits());
    }

    #[test]
    fn real_um_requires_real_batch_below_one() {
        let mut b = batch(2);
        let err =
            real_um_loss(&mut b.tape, &b.fake, &b.gen, None, &Coeffs::new(0.9, 0.9)).unwrap_err();
        assert_eq!(err, Error::MissingRealBatch);
        let err =
            real_um_loss(&mut b.tape, &b.fake, &b.gen, None, &Coeffs::new(1.0, 0.9)).unwrap_err();
        assert_eq!(err, Error::MissingRealBatch);
    }

    struct Zero;
    impl Field for Zero {
        fn eval(&self, tape: &mut Tape, _t: &[f64], x: Var, _c: Option<Var>) -> Result<Var> {
            let shape = tape.value(x).shape().to_vec();
            Ok(tape.constant(Tensor::zeros(shape)))
        }
    }

    #[test]
    fn real_um_with_zero_field() {
        let mut b = batch(3);
        let c = Coeffs::new(0.94, 0.96);
        let r = real_um_loss(&mut b.tape, &Zero, &b.gen, Some(&b.real), &c).unwrap();
        let norm2 = |tape: &Tape, v: Var| {
            let t = tape.value(v);
            t.data().iter().map(|x| x * x).sum::<f64>() / t.rows() as f64
        };
        let want = 0.94 * (0.96f64 / 0.94).powi(2) * norm2(&b.tape, b.gen.target)
            + 0.06 * (0.04f64 / 0.06).powi(2) * norm2(&b.tape, b.real.target);
        assert!((b.tape.item(r.total) - want).abs() < 1e-12 * want);
    }

    #[test]
    fn identical_batches_with_equal_coeffs_collapse_to_um() {
        let mut b = batch(4);
        let c = Coeffs::new(0.7, 0.7);
        let um = um_loss(&mut b.tape, &b.fake, &b.gen).unwrap();
        let gen2 = b.gen.clone();
        let r = real_uid_fake_step_loss(&mut b.tape, &b.fake, &b.gen, Some(&gen2), &c).unwrap();
        let (a, e) = (b.tape.item(um), b.tape.item(r.total));
        assert!((a - e).abs() < 1e-12 * a.abs());
    }

    #[test]
    fn generator_losses_vanish_when_fake_is_teacher() {
        let mut b = batch(5);
        let teacher2 = b.teacher.clone();
        let u = uid_generator_loss(&mut b.tape, &b.teacher, &teacher2, &b.gen).unwrap();
        let r = real_uid_generator_loss(
            &mut b.tape,
            &b.teacher,
            &teacher2,
            &b.gen,
            &Coeffs::new(0.94, 0.96),
        )
        .unwrap();
        let s = sid_generator_loss(
            &mut b.tape,
            &b.teacher,
            &teacher2,
            &b.gen,
            &Coeffs::new(0.94, 0.96),
        )
        .unwrap();
        assert_eq!(b.tape.item(u), 0.0);
        assert_eq!(b.tape.item(r), 0.0);
        assert_eq!(b.tape.item(s), 0.0);
    }

    #[test]
    fn generator_loss_reduction_is_bitwise() {
        let mut b = batch(6);
        let u = uid_generator_loss(&mut b.tape, &b.teacher, &b.fake, &b.gen).unwrap();
        let r = real_uid_generator_loss(
            &mut b.tape,
            &b.teacher,
            &b.fake,
            &b.gen,
            &Coeffs::new(1.0, 1.0),
        )
        .unwrap();
        assert_eq!(b.tape.item(u).to_bits(), b.tape.item(r).to_bits());
    }

    #[test]
    fn sid_at_half_matches_uid() {
        let mut b = batch(7);
        let u = uid_generator_loss(&mut b.tape, &b.teacher, &b.fake, &b.gen).unwrap();
        let s = sid_generator_loss(
            &mut b.tape,
            &b.teacher,
            &b.fake,
            &b.gen,
            &Coeffs::new(1.0, 1.0),
        )
        .unwrap();
        assert!((b.tape.item(u) - b.tape.item(s)).abs() < 1e-12);
    }

    #[test]
    fn general_with_gamma_alpha_is_difference_of_real_um() {
        let mut b = batch(8);
        for c in [
            Coeffs::new(0.94, 0.96),
            Coeffs::new(1.0, 0.9),
            Coeffs::new(0.8, 1.0),
        ] {
            let g =
                general_real_uid_loss(&mut b.tape, &b.teacher, &b.fake, &b.gen, Some(&b.real), &c)
                    .unwrap();
            let ut = real_um_loss(&mut b.tape, &b.teacher, &b.gen, Some(&b.real), &c).unwrap();
            let uf = real_um_loss(&mut b.tape, &b.fake, &b.gen, Some(&b.real), &c).unwrap();
            let want = b.tape.item(ut.total) - b.tape.item(uf.total);
            let got = b.tape.item(g.total);
            assert!(
                (got - want).abs() < 1e-10 * (1.0 + want.abs()),
                "{c:?}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn zero_delta_gives_zero() {
        let mut b = batch(9);
        let t2 = b.teacher.clone();
        let c = Coeffs::new(0.9, 0.95).with_gamma(0.96);
        let g =
            general_real_uid_loss(&mut b.tape, &b.teacher, &t2, &b.gen, Some(&b.real), &c).unwrap();
        assert_eq!(b.tape.item(g.total), 0.0);
        let n = normalized_real_uid_loss(&mut b.tape, &b.teacher, &t2, &b.gen, Some(&b.real), &c)
            .unwrap();
        assert_eq!(b.tape.item(n.total), 0.0);
        let gr = b.tape.backward(n.total).unwrap();
        assert!(b.fake.grads(&gr).iter().all(|g| *g == 0.0));
    }

    #[test]
    fn normalized_unit_coeffs_has_no_real_term() {
        let mut b = batch(10);
        let n = normalized_real_uid_loss(
            &mut b.tape,
            &b.teacher,
            &b.fake,
            &b.gen,
            None,
            &Coeffs::new(1.0, 1.0),
        )
        .unwrap();
        assert!(n.real_term.is_none());
        assert!(b.tape.item(n.total).is_finite());
    }

    #[test]
    fn stop_gradient_discipline() {
        let mut b = batch(11);
        let c = Coeffs::new(0.94, 0.96);
        let gen_leaf = Var::clone(&b.gen.x_t);
        let f = real_uid_fake_step_loss(&mut b.tape, &b.fake, &b.gen, Some(&b.real), &c).unwrap();
        let g = b.tape.backward(f.total).unwrap();
        assert!(g.get(gen_leaf).is_none());
        assert!(b.fake.grads(&g).iter().any(|v| *v != 0.0));

        // generator side with a frozen fake
        let mut r = rng::stream(11, 1);
        let fake_frozen = Mlp::init(MlpSpec::new(2, vec![8, 8], Activation::Silu), &mut r)
            .unwrap()
            .bind(&mut b.tape, false);
        let l = real_uid_generator_loss(&mut b.tape, &b.teacher, &fake_frozen, &b.gen, &c).unwrap();
        let g = b.tape.backward(l).unwrap();
        assert!(fake_frozen.vars().iter().all(|&v| g.get(v).is_none()));
        assert!(g.get(gen_leaf).is_some());
    }

    #[test]
    fn dmd_rejects_unequal_and_vanishes_at_match() {
        let mut b = batch(12);
        let err = dmd_real_generator_grad(
            &mut b.tape,
            &b.teacher,
            &b.fake,
            &b.gen,
            &Coeffs::new(0.9, 0.8),
        )
        .unwrap_err();
        assert!(matches!(err, Error::DmdUnequalCoeffs { .. }));
        let t2 = b.teacher.clone();
        let g =
            dmd_real_generator_grad(&mut b.tape, &b.teacher, &t2, &b.gen, &Coeffs::new(0.9, 0.9))
                .unwrap();
        assert!(g.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn discriminator_at_half() {
        let mut tape = Tape::new();
        let l = tape.constant(Tensor::vector(vec![0.0; 4]));
        let l2 = tape.constant(Tensor::vector(vec![0.0; 3]));
        let a = adversarial_from_logits(&mut tape, l, l2, None, None).unwrap();
        assert!((tape.item(a.disc_term) - 2.0 * 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn coeff_validation() {
        assert!(Coeffs::new(0.94, 0.96).validate().is_ok());
        assert!(matches!(
            Coeffs::new(0.0, 0.5).validate(),
            Err(Error::CoeffOutOfRange { name: "alpha", .. })
        ));
        assert!(Coeffs::new(1.0, 1.2).validate().is_err());
    }
}
