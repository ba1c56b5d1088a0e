use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::{
    adversarial_gen_term, adversarial_losses, dmd_real_generator_loss, general_real_uid_loss,
    normalized_real_uid_loss, real_uid_fake_step_loss, real_uid_generator_loss, sid_generator_loss,
    LossTerms,
};
use crate::metrics::MetricsRecord;
use crate::nn::{DiscHead, EmaState, Generator, Mlp};
use crate::optim::AdamW;
use crate::paths::{build_triples, Triples};
use crate::rng::{self, purpose, Stream};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

use super::sample::generate;
use super::{
    DataSource, DistillConfig, DrawnBatch, FakeInit, GenInit, Mode, Observer, MAX_BAD_STEPS,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Fake,
    Generator,
}

/// Everything that changes during distillation. The teacher is borrowed
/// immutably for the whole run and is not part of the state.
#[derive(Debug, Clone)]
pub struct RunState {
    /// Number of completed loop iterations.
    pub step: u64,
    pub generator: Generator,
    pub ema: EmaState,
    pub fake: Mlp,
    pub disc: Option<DiscHead>,
    /// Kind of the most recent iteration and whether it changed parameters.
    pub last: Option<(StepKind, bool)>,
    pub skipped_total: u64,
    opt_gen: AdamW,
    opt_fake: AdamW,
    opt_disc: Option<AdamW>,
    rng: Stream,
    streak: u32,
}

impl RunState {
    /// The generator with EMA weights, used for evaluation.
    pub fn ema_generator(&self) -> Generator {
        Generator {
            net: Mlp {
                spec: self.generator.net.spec.clone(),
                params: self.ema.shadow.clone(),
            },
            residual: self.generator.residual,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DistillOutcome {
    pub state: RunState,
    pub records: Vec<MetricsRecord>,
}

/// Running means of the logged loss values between two records.
#[derive(Default)]
struct Accum {
    sums: BTreeMap<String, (f64, u64)>,
    skipped: u64,
}

impl Accum {
    fn add(&mut self, name: &str, v: f64) {
        if v.is_finite() {
            let e = self.sums.entry(name.into()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }

    fn drain_into(&mut self, rec: &mut MetricsRecord) {
        for (k, (s, n)) in core::mem::take(&mut self.sums) {
            rec.set_loss(&k, s / n as f64);
        }
        rec.skipped_steps = core::mem::take(&mut self.skipped);
    }
}

/// Unconditional distillation from the default starting point.
pub fn distill(
    teacher: &Mlp,
    source: &DataSource,
    cfg: &DistillConfig,
    observer: &mut dyn Observer,
) -> Result<DistillOutcome> {
    if cfg.mode == Mode::Coupling || matches!(source, DataSource::Coupled(_)) {
        return Err(Error::ModeMismatch {
            mode: cfg.mode.name(),
            reason: "coupled data and the coupling mode go through distill_coupling".into(),
        });
    }
    distill_from(teacher, source, cfg, None, None, observer)
}

/// Distillation of a teacher conditioned on `x_T` into a generator
/// `G(z, x_T)`.
pub fn distill_coupling(
    teacher: &Mlp,
    source: &DataSource,
    cfg: &DistillConfig,
    generator: Option<Generator>,
    observer: &mut dyn Observer,
) -> Result<DistillOutcome> {
    if cfg.mode != Mode::Coupling || !matches!(source, DataSource::Coupled(_)) {
        return Err(Error::ModeMismatch {
            mode: cfg.mode.name(),
            reason: "coupling distillation needs mode coupling and a coupled data source".into(),
        });
    }
    if let Some(g) = &generator {
        if !g.conditional() {
            return Err(Error::ModeMismatch {
                mode: cfg.mode.name(),
                reason: "the generator must be conditional on x_T".into(),
            });
        }
    }
    distill_from(teacher, source, cfg, generator, None, observer)
}

/// Fine-tuning: the generator continues from `generator`, the fake model
/// restarts from the teacher and there is no warm-up. Learning rates and
/// `(α, β)` come from `cfg`.
pub fn finetune(
    teacher: &Mlp,
    source: &DataSource,
    cfg: &DistillConfig,
    generator: Generator,
    observer: &mut dyn Observer,
) -> Result<DistillOutcome> {
    let cfg = DistillConfig {
        warmup_steps: 0,
        fake_init: FakeInit::Teacher,
        ..cfg.clone()
    };
    distill_from(
        teacher,
        source,
        &cfg,
        Some(generator),
        Some(teacher.clone()),
        observer,
    )
}

/// The alternating loop with explicit starting networks; `None` falls back to
/// the config's initialization policy.
pub fn distill_from(
    teacher: &Mlp,
    source: &DataSource,
    cfg: &DistillConfig,
    generator: Option<Generator>,
    fake: Option<Mlp>,
    observer: &mut dyn Observer,
) -> Result<DistillOutcome> {
    let cfg = cfg.resolved();
    cfg.validate()?;
    source.validate()?;
    let (dim, cond_dim) = (source.dim(), source.cond_dim());
    if teacher.spec.dim != dim || teacher.spec.cond_dim != cond_dim {
        return Err(Error::InvalidConfig(format!(
            "teacher maps dim {} with cond {}, data has dim {dim} with cond {cond_dim}",
            teacher.spec.dim, teacher.spec.cond_dim
        )));
    }
    let mut state = init_state(teacher, &cfg, dim, cond_dim, generator, fake)?;
    let runner = Runner {
        teacher,
        cfg: &cfg,
        source,
    };
    let mut acc = Accum::default();
    let mut records = Vec::new();
    while state.step < cfg.n_iters {
        let n = state.step;
        let kind = if cfg.is_generator_step(n) {
            StepKind::Generator
        } else {
            StepKind::Fake
        };
        let applied = match kind {
            StepKind::Fake => runner.fake_step(&mut state, &mut acc)?,
            StepKind::Generator => runner.gen_step(&mut state, &mut acc)?,
        };
        state.step += 1;
        state.last = Some((kind, applied));
        if applied {
            state.streak = 0;
        } else {
            state.streak += 1;
            state.skipped_total += 1;
            acc.skipped += 1;
            if state.streak >= MAX_BAD_STEPS {
                return Err(Error::Diverged {
                    step: n,
                    reason: format!("{} consecutive non-finite steps", state.streak),
                });
            }
        }
        let done = state.step;
        if done % cfg.eval_interval == 0 || done == cfg.n_iters {
            let mut rec = MetricsRecord::new(done);
            acc.drain_into(&mut rec);
            observer.on_distill_eval(&mut rec, &state)?;
            records.push(rec);
        }
    }
    Ok(DistillOutcome { state, records })
}

fn init_state(
    teacher: &Mlp,
    cfg: &DistillConfig,
    dim: usize,
    cond_dim: usize,
    generator: Option<Generator>,
    fake: Option<Mlp>,
) -> Result<RunState> {
    let fake = match fake {
        Some(f) => f,
        None => match cfg.fake_init {
            FakeInit::Random => Mlp::init(
                teacher.spec.clone(),
                &mut rng::stream(cfg.seed, purpose::INIT_FAKE),
            )?,
            FakeInit::Teacher => teacher.clone(),
        },
    };
    if fake.spec != teacher.spec {
        return Err(Error::InvalidConfig(
            "the fake model must share the teacher's architecture".into(),
        ));
    }
    let generator = match generator {
        Some(g) => g,
        None => {
            let spec = cfg.net.spec(dim, cond_dim);
            match cfg.gen_init {
                GenInit::Fresh => {
                    let mut g =
                        Generator::init(spec, &mut rng::stream(cfg.seed, purpose::INIT_GEN))?;
                    g.residual = cfg.residual;
                    g
                }
                GenInit::Teacher if spec == teacher.spec => Generator {
                    net: teacher.clone(),
                    residual: cfg.residual,
                },
                GenInit::Teacher => {
                    return Err(Error::InvalidConfig(
                        "gen_init = teacher needs the generator net to match the teacher".into(),
                    ))
                }
            }
        }
    };
    if generator.net.spec.dim != dim || generator.net.spec.cond_dim != cond_dim {
        return Err(Error::DimMismatch(generator.net.spec.dim, dim));
    }
    let disc = if cfg.mode == Mode::GanBaseline {
        let features = *teacher.spec.hidden.last().expect("validated nonempty");
        Some(DiscHead::init(
            features,
            cfg.disc_hidden,
            &mut rng::stream(cfg.seed, purpose::INIT_DISC),
        )?)
    } else {
        None
    };
    Ok(RunState {
        step: 0,
        ema: EmaState::new(cfg.ema_decay, &generator.net.params),
        opt_gen: AdamW::new(cfg.adam_gen(), generator.net.params.len()),
        opt_fake: AdamW::new(cfg.adam_fake(), fake.params.len()),
        opt_disc: disc
            .as_ref()
            .map(|d| AdamW::new(cfg.adam_fake(), d.params.len())),
        generator,
        fake,
        disc,
        last: None,
        skipped_total: 0,
        rng: rng::stream(cfg.seed, purpose::TRAIN),
        streak: 0,
    })
}

struct Runner<'a> {
    teacher: &'a Mlp,
    cfg: &'a DistillConfig,
    source: &'a DataSource,
}

struct Prepared {
    batch: DrawnBatch,
    z: Tensor,
}

impl Runner<'_> {
    fn draw(&self, state: &mut RunState) -> Prepared {
        let b = self.cfg.batch_size;
        let batch = self.source.draw(&mut state.rng, &self.cfg.path, b);
        let d = self.source.dim();
        let z =
            Tensor::matrix(b, d, rng::normal_vec(&mut state.rng, b * d)).expect("b * d entries");
        Prepared { batch, z }
    }

    fn triples(&self, tape: &mut Tape, p: &Prepared, x0: Var) -> Result<Triples> {
        let b = &p.batch;
        let tr = build_triples(tape, &self.cfg.path, &b.t, x0, &b.endpoint, b.eps.as_ref())?;
        Ok(match &b.cond {
            Some(c) => {
                let c = tape.constant(c.clone());
                tr.with_cond(c)
            }
            None => tr,
        })
    }

    fn real_triples(&self, tape: &mut Tape, p: &Prepared) -> Result<Option<Triples>> {
        if !self.cfg.needs_real() {
            return Ok(None);
        }
        let x0 = tape.constant(p.batch.x0.clone());
        self.triples(tape, p, x0).map(Some)
    }

    fn log_terms(acc: &mut Accum, tape: &Tape, terms: &LossTerms) {
        acc.add("loss.gen_term", tape.item(terms.gen_term));
        if let Some(r) = terms.real_term {
            acc.add("loss.real_term", tape.item(r));
        }
    }

    fn fake_step(&self, state: &mut RunState, acc: &mut Accum) -> Result<bool> {
        let p = self.draw(state);
        let x0g = generate(&state.generator, &p.z, p.batch.cond.as_ref())?;
        let mut tape = Tape::new();
        let x0g = tape.constant(x0g);
        let gen = self.triples(&mut tape, &p, x0g)?;
        let real = self.real_triples(&mut tape, &p)?;
        let fake = state.fake.bind(&mut tape, true);
        let c = &self.cfg.coeffs;
        let mut disc = None;
        let loss = match self.cfg.mode {
            Mode::General | Mode::Normalized => {
                let teacher = self.teacher.bind(&mut tape, false);
                let terms = if self.cfg.mode == Mode::General {
                    general_real_uid_loss(&mut tape, &teacher, &fake, &gen, real.as_ref(), c)?
                } else {
                    normalized_real_uid_loss(&mut tape, &teacher, &fake, &gen, real.as_ref(), c)?
                };
                Self::log_terms(acc, &tape, &terms);
                tape.neg(terms.total)
            }
            mode => {
                let terms = real_uid_fake_step_loss(&mut tape, &fake, &gen, real.as_ref(), c)?;
                Self::log_terms(acc, &tape, &terms);
                if mode == Mode::GanBaseline {
                    let head = state
                        .disc
                        .as_ref()
                        .expect("adversarial mode has a head")
                        .bind(&mut tape, true);
                    let real = real.as_ref().ok_or(Error::MissingRealBatch)?;
                    let adv = adversarial_losses(&mut tape, &head, &fake, &gen, real)?;
                    acc.add("adv.disc", tape.item(adv.disc_term));
                    let a = tape.scale(terms.total, c.lambda_dist);
                    let b = tape.scale(adv.disc_term, -c.lambda_adv_d);
                    disc = Some(head);
                    tape.add(a, b)?
                } else {
                    terms.total
                }
            }
        };
        let value = tape.item(loss);
        if !value.is_finite() {
            return Ok(false);
        }
        acc.add("fake", value);
        let g = tape.backward(loss)?;
        let grads = fake.grads(&g);
        let disc_grads = disc.map(|h| h.grads(&g));
        // check every gradient before touching any parameters
        if !grads.iter().all(|v| v.is_finite())
            || !disc_grads.iter().flatten().all(|v| v.is_finite())
        {
            return Ok(false);
        }
        let applied = state.opt_fake.step(&mut state.fake.params, &grads)?.applied;
        if let (Some(dg), Some(opt), Some(head)) =
            (disc_grads, state.opt_disc.as_mut(), state.disc.as_mut())
        {
            opt.step(&mut head.params, &dg)?;
        }
        Ok(applied)
    }

    fn gen_step(&self, state: &mut RunState, acc: &mut Accum) -> Result<bool> {
        let p = self.draw(state);
        let mut tape = Tape::new();
        let g = state.generator.bind(&mut tape, true);
        let z = tape.constant(p.z.clone());
        let cond = p.batch.cond.as_ref().map(|c| tape.constant(c.clone()));
        let x0 = g.forward(&mut tape, z, cond)?;
        let gen = self.triples(&mut tape, &p, x0)?;
        let teacher = self.teacher.bind(&mut tape, false);
        let fake = state.fake.bind(&mut tape, false);
        let c = &self.cfg.coeffs;
        let loss = match self.cfg.mode {
            Mode::Uid | Mode::RealUid | Mode::Coupling => {
                real_uid_generator_loss(&mut tape, &teacher, &fake, &gen, c)?
            }
            Mode::Sid => sid_generator_loss(&mut tape, &teacher, &fake, &gen, c)?,
            Mode::General | Mode::Normalized => {
                let real = self.real_triples(&mut tape, &p)?;
                let terms = if self.cfg.mode == Mode::General {
                    general_real_uid_loss(&mut tape, &teacher, &fake, &gen, real.as_ref(), c)?
                } else {
                    normalized_real_uid_loss(&mut tape, &teacher, &fake, &gen, real.as_ref(), c)?
                };
                terms.gen_term
            }
            Mode::DmdReal => dmd_real_generator_loss(&mut tape, &teacher, &fake, &gen, c)?,
            Mode::GanBaseline => {
                let dist = real_uid_generator_loss(&mut tape, &teacher, &fake, &gen, c)?;
                let head = state
                    .disc
                    .as_ref()
                    .expect("adversarial mode has a head")
                    .bind(&mut tape, false);
                let adv = adversarial_gen_term(&mut tape, &head, &fake, &gen)?;
                acc.add("adv.gen", tape.item(adv));
                let a = tape.scale(dist, c.lambda_dist);
                let b = tape.scale(adv, c.lambda_adv_g);
                tape.add(a, b)?
            }
        };
        let value = tape.item(loss);
        if !value.is_finite() {
            return Ok(false);
        }
        acc.add("gen", value);
        let grads = g.net.grads(&tape.backward(loss)?);
        let report = state
            .opt_gen
            .step(&mut state.generator.net.params, &grads)?;
        if report.applied {
            state.ema.update(&state.generator.net.params)?;
        }
        Ok(report.applied)
    }
}
