use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::losses::um_loss;
use crate::metrics::MetricsRecord;
use crate::nn::Mlp;
use crate::optim::AdamW;
use crate::paths::build_triples;
use crate::rng::{self, purpose};
use crate::tape::Tape;

use super::{DataSource, Observer, TeacherConfig, MAX_BAD_STEPS};

#[derive(Debug, Clone)]
pub struct TeacherOutcome {
    pub teacher: Mlp,
    pub records: Vec<MetricsRecord>,
}

/// Fits a matching network to real data by minimizing the UM loss on the
/// configured path. For a coupled source the network is conditioned on `x_T`.
pub fn train_teacher(
    cfg: &TeacherConfig,
    source: &DataSource,
    observer: &mut dyn Observer,
) -> Result<TeacherOutcome> {
    cfg.validate()?;
    source.validate()?;
    let spec = cfg.net.spec(source.dim(), source.cond_dim());
    let mut teacher = Mlp::init(spec, &mut rng::stream(cfg.seed, purpose::INIT_TEACHER))?;
    let mut opt = AdamW::new(cfg.adam(), teacher.params.len());
    let mut rng = rng::stream(cfg.seed, purpose::TRAIN);
    let mut records = Vec::new();
    let (mut sum, mut count, mut skipped, mut streak) = (0.0, 0u64, 0u64, 0u32);

    for step in 0..cfg.steps {
        let b = source.draw(&mut rng, &cfg.path, cfg.batch_size);
        let mut tape = Tape::new();
        let x0 = tape.constant(b.x0);
        let mut tr = build_triples(&mut tape, &cfg.path, &b.t, x0, &b.endpoint, b.eps.as_ref())?;
        if let Some(c) = b.cond {
            let c = tape.constant(c);
            tr = tr.with_cond(c);
        }
        let net = teacher.bind(&mut tape, true);
        let loss = um_loss(&mut tape, &net, &tr)?;
        let value = tape.item(loss);
        let applied = if value.is_finite() {
            let g = tape.backward(loss)?;
            opt.step(&mut teacher.params, &net.grads(&g))?.applied
        } else {
            false
        };
        if applied {
            streak = 0;
            sum += value;
            count += 1;
        } else {
            streak += 1;
            skipped += 1;
            if streak >= MAX_BAD_STEPS {
                return Err(Error::Diverged {
                    step,
                    reason: format!("{streak} consecutive non-finite teacher steps"),
                });
            }
        }
        let done = step + 1;
        if done % cfg.eval_interval == 0 || done == cfg.steps {
            let mut rec = MetricsRecord::new(done);
            if count > 0 {
                rec.set_loss("um", sum / count as f64);
            }
            rec.skipped_steps = skipped;
            observer.on_teacher_eval(&mut rec, &teacher)?;
            records.push(rec);
            (sum, count, skipped) = (0.0, 0, 0);
        }
    }
    Ok(TeacherOutcome { teacher, records })
}
