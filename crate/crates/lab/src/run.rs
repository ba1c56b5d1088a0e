//! Run directories and the observers that fill them during training.
//!
//! ```text
//! <run>/config.json      resolved configuration
//! <run>/metrics.jsonl    one MetricsRecord per line
//! <run>/checkpoints/     manifest + params pairs
//! <run>/samples/*.csv    one row per sample
//! ```

use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use realuid_core::data::Dataset;
use realuid_core::engine::{
    integrate_ode, sample_teacher_ode, DataSource, Observer, RunState, SampleEvaluator,
};
use realuid_core::metrics::{self, MetricsRecord};
use realuid_core::nn::{Field, Mlp};
use realuid_core::oracle::Gauss1D;
use realuid_core::paths::PathSpec;
use realuid_core::rng::{self, purpose};
use realuid_core::tensor::Tensor;
use realuid_core::Error as CoreError;

use crate::checkpoint::{self, Kind};
use crate::config::{EvalSection, RunConfigFile};
use crate::error::{LabError, Result};

#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: &Path) -> Result<Self> {
        let r = Self {
            root: root.to_path_buf(),
        };
        for d in [r.root.clone(), r.checkpoints(), r.samples()] {
            fs::create_dir_all(&d).map_err(|e| LabError::io(&d, e))?;
        }
        Ok(r)
    }

    /// An existing run; it must hold a `config.json`.
    pub fn open(root: &Path) -> Result<Self> {
        let r = Self {
            root: root.to_path_buf(),
        };
        if !r.config_path().is_file() {
            return Err(LabError::Input(format!(
                "{} is not a run directory (no config.json)",
                root.display()
            )));
        }
        Ok(r)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn checkpoints(&self) -> PathBuf {
        self.root.join("checkpoints")
    }

    pub fn samples(&self) -> PathBuf {
        self.root.join("samples")
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn metrics_path(&self) -> PathBuf {
        self.root.join("metrics.jsonl")
    }

    pub fn load_config(&self) -> Result<RunConfigFile> {
        RunConfigFile::load(&self.config_path())
    }

    pub fn write_config(&self, cfg: &RunConfigFile) -> Result<()> {
        cfg.resolved().save(&self.config_path())
    }
}

/// Appends JSON lines, flushing after each record.
pub struct MetricsLog {
    w: BufWriter<File>,
    path: PathBuf,
}

impl MetricsLog {
    /// Starts a fresh file.
    pub fn create(path: &Path) -> Result<Self> {
        let f = File::create(path).map_err(|e| LabError::io(path, e))?;
        Ok(Self {
            w: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }

    pub fn append(path: &Path) -> Result<Self> {
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LabError::io(path, e))?;
        Ok(Self {
            w: BufWriter::new(f),
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, rec: &MetricsRecord) -> Result<()> {
        let line = serde_json::to_string(rec).map_err(|e| LabError::json(&self.path, e))?;
        writeln!(self.w, "{line}")
            .and_then(|_| self.w.flush())
            .map_err(|e| LabError::io(&self.path, e))
    }
}

/// Held-out data drawn from the reference stream of the run seed.
#[derive(Debug, Clone)]
pub struct Reference {
    pub x0: Tensor,
    /// `x_T` rows for coupled data.
    pub cond: Option<Tensor>,
    pub gauss: Option<Gauss1D>,
}

impl Reference {
    pub fn draw(source: &DataSource, n: usize, seed: u64) -> Result<Self> {
        let mut r = rng::stream(seed, purpose::REFERENCE);
        Ok(match source {
            DataSource::Unconditional(d) => Self {
                x0: d.sample(&mut r, n),
                cond: None,
                gauss: match d {
                    Dataset::Gauss1d { mu, sd } => Some(Gauss1D::new(*mu, sd * sd)?),
                    _ => None,
                },
            },
            DataSource::Coupled(c) => {
                let b = c.sample(&mut r, n);
                Self {
                    x0: b.x0,
                    cond: Some(b.x_end),
                    gauss: None,
                }
            }
        })
    }

    pub fn evaluator(&self, eval: &EvalSection, seed: u64) -> SampleEvaluator {
        let mut e = SampleEvaluator::new(self.x0.clone(), eval.n_samples, seed);
        e.n_projections = eval.n_projections;
        e.n_energy = eval.n_energy;
        e.gauss_ref = self.gauss;
        if let Some(c) = &self.cond {
            // one conditional sample per held-out x_T
            e.cond = Some(c.clone());
            e.n_samples = c.rows();
        }
        e
    }

    /// Scores arbitrary samples against this reference.
    pub fn score(
        &self,
        rec: &mut MetricsRecord,
        samples: &Tensor,
        eval: &EvalSection,
        seed: u64,
    ) -> Result<()> {
        let mut r = rng::stream(seed, purpose::EVAL);
        rec.sliced_w2 = Some(metrics::sliced_w2(
            samples,
            &self.x0,
            eval.n_projections,
            &mut r,
        )?);
        if let Some(g) = self.gauss {
            rec.w2_gauss = Some(metrics::w2_gaussian(
                metrics::fit_gaussian(samples.data())?,
                g,
            ));
        }
        if eval.n_energy > 0 {
            let d = samples.cols();
            let take = |t: &Tensor| {
                let k = eval.n_energy.min(t.rows());
                Tensor::matrix(k, d, t.data()[..k * d].to_vec())
            };
            rec.energy_dist = Some(metrics::energy_distance(&take(samples)?, &take(&self.x0)?)?);
        }
        Ok(())
    }
}

/// Multi-step teacher samples. With `cond`, integration starts from the
/// given `x_T` rows and the network is conditioned on them.
pub fn teacher_samples(
    teacher: &dyn Field,
    path: &PathSpec,
    nfe: usize,
    n: usize,
    dim: usize,
    cond: Option<&Tensor>,
    seed: u64,
) -> Result<Tensor> {
    Ok(match cond {
        Some(c) => integrate_ode(teacher, path, nfe, c, Some(c))?,
        None => sample_teacher_ode(
            teacher,
            path,
            nfe,
            n,
            dim,
            &mut rng::stream(seed, purpose::SAMPLE),
        )?,
    })
}

fn stop(failure: &mut Option<LabError>, r: Result<()>) -> realuid_core::Result<()> {
    r.map_err(|e| {
        let msg = e.to_string();
        *failure = Some(e);
        CoreError::Stopped(msg)
    })
}

/// Turns a core error from a training loop into the error to report,
/// preferring an observer failure and attaching the last checkpoint to aborts.
pub fn explain(
    failure: &mut Option<LabError>,
    last_checkpoint: Option<&PathBuf>,
    e: CoreError,
) -> LabError {
    if let Some(f) = failure.take() {
        return f;
    }
    match e {
        CoreError::Diverged { .. } => LabError::Aborted {
            source: e,
            last_checkpoint: last_checkpoint.cloned(),
        },
        e => e.into(),
    }
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}

/// Logs teacher records, checkpoints the teacher at each of them and scores
/// multi-step samples at the last one.
pub struct TeacherObserver<'a> {
    pub run: &'a RunDir,
    pub log: MetricsLog,
    pub path: PathSpec,
    pub total_steps: u64,
    pub reference: Reference,
    pub eval: EvalSection,
    pub seed: u64,
    pub start: Instant,
    pub quiet: bool,
    pub last_checkpoint: Option<PathBuf>,
    pub failure: Option<LabError>,
}

impl TeacherObserver<'_> {
    fn handle(&mut self, rec: &mut MetricsRecord, teacher: &Mlp) -> Result<()> {
        let ck = self.run.checkpoints();
        self.last_checkpoint = Some(checkpoint::save_teacher(
            &ck, "teacher", teacher, &self.path, rec.step,
        )?);
        if rec.step == self.total_steps && self.path.kind.is_velocity() {
            let r = &self.reference;
            let s = teacher_samples(
                teacher,
                &self.path,
                self.eval.teacher_nfe,
                self.eval.n_samples,
                r.x0.cols(),
                r.cond.as_ref(),
                self.seed,
            )?;
            r.score(rec, &s, &self.eval, self.seed)?;
        }
        rec.wall_ms = elapsed_ms(self.start);
        self.log.write(rec)?;
        if !self.quiet {
            eprintln!("{}", progress_line(rec));
        }
        Ok(())
    }
}

impl Observer for TeacherObserver<'_> {
    fn on_teacher_eval(
        &mut self,
        rec: &mut MetricsRecord,
        teacher: &Mlp,
    ) -> realuid_core::Result<()> {
        let r = self.handle(rec, teacher);
        stop(&mut self.failure, r)
    }
}

/// Scores the EMA generator, logs the record and refreshes the `generator`,
/// `generator_ema`, `fake` and (on improvement) `generator_best` checkpoints.
pub struct DistillObserver<'a> {
    pub run: &'a RunDir,
    pub log: MetricsLog,
    pub eval: SampleEvaluator,
    pub start: Instant,
    pub best: Option<f64>,
    pub quiet: bool,
    pub last_checkpoint: Option<PathBuf>,
    pub failure: Option<LabError>,
    pub records: Vec<MetricsRecord>,
}

impl<'a> DistillObserver<'a> {
    pub fn new(run: &'a RunDir, eval: SampleEvaluator, quiet: bool) -> Result<Self> {
        Ok(Self {
            run,
            log: MetricsLog::create(&run.metrics_path())?,
            eval,
            start: Instant::now(),
            best: None,
            quiet,
            last_checkpoint: None,
            failure: None,
            records: Vec::new(),
        })
    }

    fn handle(&mut self, rec: &mut MetricsRecord, state: &RunState) -> Result<()> {
        let ema = state.ema_generator();
        self.eval.fill(rec, &ema)?;
        let ck = self.run.checkpoints();
        checkpoint::save_generator(&ck, "generator", &state.generator, rec.step)?;
        checkpoint::save(&ck, "fake", Kind::Fake, &state.fake, rec.step, |_| {})?;
        self.last_checkpoint = Some(checkpoint::save_generator(
            &ck,
            "generator_ema",
            &ema,
            rec.step,
        )?);
        if let Some(m) = rec.sliced_w2.filter(|m| m.is_finite()) {
            if self.best.is_none_or(|b| m < b) {
                self.best = Some(m);
                checkpoint::save_generator(&ck, "generator_best", &ema, rec.step)?;
            }
        }
        rec.wall_ms = elapsed_ms(self.start);
        self.log.write(rec)?;
        if !self.quiet {
            eprintln!("{}", progress_line(rec));
        }
        self.records.push(rec.clone());
        Ok(())
    }

    pub fn explain(&mut self, e: CoreError) -> LabError {
        explain(&mut self.failure, self.last_checkpoint.as_ref(), e)
    }
}

impl Observer for DistillObserver<'_> {
    fn on_distill_eval(
        &mut self,
        rec: &mut MetricsRecord,
        state: &RunState,
    ) -> realuid_core::Result<()> {
        let r = self.handle(rec, state);
        stop(&mut self.failure, r)
    }
}

pub fn progress_line(rec: &MetricsRecord) -> String {
    let mut s = format!("step {}", rec.step);
    for (k, v) in &rec.losses {
        s += &format!(" {k}={v:.5}");
    }
    for (k, v) in [
        ("sliced_w2", rec.sliced_w2),
        ("w2_gauss", rec.w2_gauss),
        ("energy", rec.energy_dist),
    ] {
        if let Some(v) = v {
            s += &format!(" {k}={v:.4}");
        }
    }
    if rec.skipped_steps > 0 {
        s += &format!(" skipped={}", rec.skipped_steps);
    }
    s
}
