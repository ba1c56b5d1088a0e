//! The JSON run configuration.
//!
//! Every section and every key has a default, so `{}` plus a `data` section
//! is a complete file. Unknown keys anywhere are rejected.

use std::fs;
use std::path::Path;

use realuid_core::data::{Coupling, Dataset};
use realuid_core::engine::{
    DataSource, DistillConfig, FakeInit, GenInit, Mode, NetConfig, TeacherConfig,
};
use realuid_core::losses::Coeffs;
use realuid_core::metrics::DEFAULT_PROJECTIONS;
use realuid_core::paths::PathSpec;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub path: PathSpec,
    pub coeffs: Coeffs,
    /// Teacher and fake architecture; also the generator's unless
    /// `train.gen_net` is set.
    pub net: NetConfig,
    pub train: TrainSection,
    pub data: DataSection,
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub mode: Mode,
    pub k_fake_steps: u32,
    pub n_iters: u64,
    pub batch_size: usize,
    pub lr_fake: f64,
    pub lr_gen: f64,
    pub warmup_steps: u64,
    pub ema_decay: f64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub seed: u64,
    pub residual: bool,
    pub fake_init: FakeInit,
    pub gen_init: GenInit,
    pub disc_hidden: usize,
    pub eval_interval: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gen_net: Option<NetConfig>,
    pub teacher: TeacherSection,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = DistillConfig::default();
        Self {
            mode: d.mode,
            k_fake_steps: d.k_fake_steps,
            n_iters: d.n_iters,
            batch_size: d.batch_size,
            lr_fake: d.lr_fake,
            lr_gen: d.lr_gen,
            warmup_steps: d.warmup_steps,
            ema_decay: d.ema_decay,
            clip_norm: d.clip_norm,
            beta1: d.beta1,
            seed: d.seed,
            residual: d.residual,
            fake_init: d.fake_init,
            gen_init: d.gen_init,
            disc_hidden: d.disc_hidden,
            eval_interval: d.eval_interval,
            gen_net: None,
            teacher: TeacherSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherSection {
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub eval_interval: u64,
}

impl Default for TeacherSection {
    fn default() -> Self {
        let d = TeacherConfig::default();
        Self {
            steps: d.steps,
            batch_size: d.batch_size,
            lr: d.lr,
            warmup_steps: d.warmup_steps,
            clip_norm: d.clip_norm,
            beta1: d.beta1,
            eval_interval: d.eval_interval,
        }
    }
}

/// Exactly one of `dataset` and `coupling`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<Dataset>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coupling: Option<Coupling>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Generator samples per evaluation and in `samples/`.
    pub n_samples: usize,
    /// Held-out reference draws.
    pub n_reference: usize,
    pub n_projections: usize,
    /// Subset size for the quadratic-cost energy distance; 0 disables it.
    pub n_energy: usize,
    /// Euler steps for teacher samples.
    pub teacher_nfe: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            n_samples: 10_000,
            n_reference: 10_000,
            n_projections: DEFAULT_PROJECTIONS,
            n_energy: 2_000,
            teacher_nfe: 100,
        }
    }
}

/// Command-line settings that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub n_iters: Option<u64>,
    pub lr: Option<f64>,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| LabError::json(path, e))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| LabError::json(path, e))?;
        fs::write(path, text + "\n").map_err(|e| LabError::io(path, e))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(m) = o.mode {
            self.train.mode = m;
        }
        if let Some(a) = o.alpha {
            self.coeffs.alpha = a;
        }
        if let Some(b) = o.beta {
            self.coeffs.beta = b;
        }
        if let Some(g) = o.gamma {
            self.coeffs.gamma = g;
        }
        if let Some(s) = o.seed {
            self.train.seed = s;
        }
        if let Some(n) = o.n_iters {
            self.train.n_iters = n;
        }
        if let Some(lr) = o.lr {
            self.train.lr_fake = lr;
            self.train.lr_gen = lr;
        }
    }

    /// Copy with mode-implied values filled in, as persisted in a run
    /// directory.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.coeffs = self.distill_config().coeffs;
        c
    }

    pub fn source(&self) -> Result<DataSource> {
        let s = match (&self.data.dataset, &self.data.coupling) {
            (Some(d), None) => DataSource::Unconditional(d.clone()),
            (None, Some(c)) => DataSource::Coupled(c.clone()),
            (None, None) => {
                return Err(LabError::Config(
                    "data section needs a dataset or a coupling".into(),
                ))
            }
            (Some(_), Some(_)) => {
                return Err(LabError::Config(
                    "data section takes a dataset or a coupling, not both".into(),
                ))
            }
        };
        s.validate()?;
        Ok(s)
    }

    pub fn teacher_config(&self) -> TeacherConfig {
        let t = &self.train.teacher;
        TeacherConfig {
            path: self.path,
            net: self.net.clone(),
            steps: t.steps,
            batch_size: t.batch_size,
            lr: t.lr,
            warmup_steps: t.warmup_steps,
            clip_norm: t.clip_norm,
            beta1: t.beta1,
            seed: self.train.seed,
            eval_interval: t.eval_interval,
        }
    }

    pub fn distill_config(&self) -> DistillConfig {
        let t = &self.train;
        DistillConfig {
            mode: t.mode,
            coeffs: self.coeffs,
            k_fake_steps: t.k_fake_steps,
            n_iters: t.n_iters,
            batch_size: t.batch_size,
            lr_fake: t.lr_fake,
            lr_gen: t.lr_gen,
            warmup_steps: t.warmup_steps,
            ema_decay: t.ema_decay,
            clip_norm: t.clip_norm,
            beta1: t.beta1,
            seed: t.seed,
            path: self.path,
            net: t.gen_net.clone().unwrap_or_else(|| self.net.clone()),
            residual: t.residual,
            fake_init: t.fake_init,
            gen_init: t.gen_init,
            disc_hidden: t.disc_hidden,
            eval_interval: t.eval_interval,
        }
        .resolved()
    }

    pub fn check_eval(&self) -> Result<()> {
        let e = &self.eval;
        if e.n_samples == 0 || e.n_reference == 0 || e.n_projections == 0 || e.teacher_nfe == 0 {
            return Err(LabError::Config(
                "eval sizes (n_samples, n_reference, n_projections, teacher_nfe) must be positive"
                    .into(),
            ));
        }
        Ok(())
    }

    /// Everything `train-teacher` needs.
    pub fn validate_teacher(&self) -> Result<DataSource> {
        let s = self.source()?;
        self.check_eval()?;
        self.teacher_config().validate()?;
        Ok(s)
    }

    /// Everything `distill` needs; mode/coefficient conflicts surface as
    /// core errors.
    pub fn validate_distill(&self) -> Result<DataSource> {
        let s = self.source()?;
        self.check_eval()?;
        self.distill_config().validate()?;
        let coupled = matches!(s, DataSource::Coupled(_));
        if coupled != (self.train.mode == Mode::Coupling) {
            return Err(realuid_core::Error::ModeMismatch {
                mode: self.train.mode.name(),
                reason: "coupled data goes with the coupling mode and only with it".into(),
            }
            .into());
        }
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_takes_defaults() {
        let c: RunConfigFile = serde_json::from_str("{}").unwrap();
        assert_eq!(c, RunConfigFile::default());
        assert_eq!(c.train.k_fake_steps, 5);
        assert_eq!(c.eval.n_projections, 128);
    }

    #[test]
    fn unknown_keys_rejected_at_every_level() {
        for text in [
            r#"{"bogus": 1}"#,
            r#"{"train": {"n_iter": 5}}"#,
            r#"{"train": {"teacher": {"step": 5}}}"#,
            r#"{"coeffs": {"alpah": 0.9}}"#,
            r#"{"net": {"width": 3}}"#,
            r#"{"path": {"kind": "flow_linear", "sigma": 1}}"#,
            r#"{"data": {"dataset": {"name": "two_moons", "noize": 0.1}}}"#,
            r#"{"eval": {"samples": 3}}"#,
        ] {
            assert!(
                serde_json::from_str::<RunConfigFile>(text).is_err(),
                "{text}"
            );
        }
    }

    #[test]
    fn round_trips() {
        let mut c = RunConfigFile::default();
        c.data.dataset = Some(Dataset::TwoMoons { noise: 0.05 });
        c.train.gen_net = Some(NetConfig {
            hidden: vec![8],
            ..NetConfig::default()
        });
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<RunConfigFile>(&j).unwrap(), c);
    }

    #[test]
    fn data_needs_exactly_one_source() {
        let mut c = RunConfigFile::default();
        assert!(c.source().is_err());
        c.data.dataset = Some(Dataset::gauss1d(0.0));
        assert!(c.source().is_ok());
        c.data.coupling = Some(Coupling::Translation {
            mu: 0.0,
            sd: 1.0,
            shift: 1.0,
            noise: 0.1,
        });
        assert!(c.source().is_err());
    }

    #[test]
    fn resolved_ties_gamma_outside_general() {
        let mut c = RunConfigFile::default();
        c.apply(&Overrides {
            mode: Some(Mode::RealUid),
            alpha: Some(0.94),
            beta: Some(0.96),
            ..Overrides::default()
        });
        assert_eq!(c.resolved().coeffs.gamma, 0.94);
        c.train.mode = Mode::General;
        c.coeffs.gamma = 0.9;
        assert_eq!(c.resolved().coeffs.gamma, 0.9);
    }

    #[test]
    fn gen_net_overrides_generator_only() {
        let mut c = RunConfigFile::default();
        c.net.hidden = vec![4, 4];
        c.train.gen_net = Some(NetConfig {
            hidden: vec![16],
            ..NetConfig::default()
        });
        assert_eq!(c.distill_config().net.hidden, vec![16]);
        assert_eq!(c.teacher_config().net.hidden, vec![4, 4]);
    }
}
