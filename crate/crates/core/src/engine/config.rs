use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{check_dmd_coeffs, Coeffs};
use crate::nn::{Activation, MlpSpec, DEFAULT_TIME_PAIRS};
use crate::optim::AdamConfig;
use crate::paths::{PathKind, PathSpec};

/// Which generator objective the distillation loop minimizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Uid,
    RealUid,
    Sid,
    General,
    Normalized,
    DmdReal,
    GanBaseline,
    Coupling,
}

impl Mode {
    pub const ALL: [Mode; 8] = [
        Mode::Uid,
        Mode::RealUid,
        Mode::Sid,
        Mode::General,
        Mode::Normalized,
        Mode::DmdReal,
        Mode::GanBaseline,
        Mode::Coupling,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Uid => "uid",
            Mode::RealUid => "real_uid",
            Mode::Sid => "sid",
            Mode::General => "general",
            Mode::Normalized => "normalized",
            Mode::DmdReal => "dmd_real",
            Mode::GanBaseline => "gan_baseline",
            Mode::Coupling => "coupling",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Mode::ALL.into_iter().find(|m| m.name() == s)
    }

    /// Modes whose fake model maximizes the loss the generator minimizes,
    /// rather than minimizing a matching loss.
    pub fn fake_maximizes(self) -> bool {
        matches!(self, Mode::General | Mode::Normalized)
    }
}

/// Hidden layout shared by the teacher, fake model and generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_pairs: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128, 128],
            activation: Activation::Silu,
            time_pairs: DEFAULT_TIME_PAIRS,
        }
    }
}

impl NetConfig {
    pub fn spec(&self, dim: usize, cond_dim: usize) -> MlpSpec {
        MlpSpec::new(dim, self.hidden.clone(), self.activation)
            .with_time_pairs(self.time_pairs)
            .with_cond(cond_dim)
    }
}

/// Starting point of the fake model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FakeInit {
    Random,
    Teacher,
}

/// Starting point of the generator network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenInit {
    /// Random hidden layers with a zero output layer, so a residual generator
    /// starts as the identity.
    Fresh,
    /// Copy of the teacher's parameters; needs identical architectures.
    Teacher,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherConfig {
    pub path: PathSpec,
    pub net: NetConfig,
    pub steps: u64,
    pub batch_size: usize,
    pub lr: f64,
    pub warmup_steps: u64,
    pub clip_norm: f64,
    pub beta1: f64,
    pub seed: u64,
    pub eval_interval: u64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        Self {
            path: PathSpec::flow(),
            net: NetConfig::default(),
            steps: 20_000,
            batch_size: 256,
            lr: 1e-3,
            warmup_steps: 0,
            clip_norm: 1.0,
            beta1: 0.9,
            seed: 0,
            eval_interval: 500,
        }
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        self.path.validate()?;
        self.net.spec(1, 0).validate()?;
        check_positive("steps", self.steps as f64)?;
        check_positive("batch_size", self.batch_size as f64)?;
        check_positive("lr", self.lr)?;
        check_positive("clip_norm", self.clip_norm)?;
        check_positive("eval_interval", self.eval_interval as f64)?;
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::InvalidConfig("beta1 must lie in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            clip_norm: Some(self.clip_norm),
            warmup_steps: self.warmup_steps,
            ..AdamConfig::default()
        }
    }
}

/// Everything the alternating distillation loop needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistillConfig {
    pub mode: Mode,
    pub coeffs: Coeffs,
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
    pub path: PathSpec,
    /// Generator architecture; the fake model always copies the teacher's.
    pub net: NetConfig,
    pub residual: bool,
    pub fake_init: FakeInit,
    pub gen_init: GenInit,
    /// Hidden width of the discriminator head (adversarial baseline only).
    pub disc_hidden: usize,
    pub eval_interval: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Uid,
            coeffs: Coeffs::default(),
            k_fake_steps: 5,
            n_iters: 20_000,
            batch_size: 256,
            lr_fake: 3e-5,
            lr_gen: 3e-5,
            warmup_steps: 0,
            ema_decay: 0.999,
            clip_norm: 1.0,
            beta1: 0.0,
            seed: 0,
            path: PathSpec::flow(),
            net: NetConfig::default(),
            residual: true,
            fake_init: FakeInit::Random,
            gen_init: GenInit::Fresh,
            disc_hidden: 64,
            eval_interval: 500,
        }
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "{name} must be positive, got {v}"
        )))
    }
}

fn mismatch(mode: Mode, reason: &str) -> Error {
    Error::ModeMismatch {
        mode: mode.name(),
        reason: reason.into(),
    }
}

impl DistillConfig {
    /// Copy with mode-implied settings filled in: every mode except
    /// `general` ties `γ` to `α`.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        if c.mode != Mode::General {
            c.coeffs.gamma = c.coeffs.alpha;
        }
        c
    }

    /// Checks ranges and mode/coefficient consistency. Call on the
    /// [`resolved`](Self::resolved) config.
    pub fn validate(&self) -> Result<()> {
        self.path.validate()?;
        self.net.spec(1, 0).validate()?;
        self.coeffs.validate()?;
        if self.k_fake_steps == 0 {
            return Err(Error::InvalidConfig(
                "k_fake_steps must be at least 1".into(),
            ));
        }
        check_positive("n_iters", self.n_iters as f64)?;
        check_positive("batch_size", self.batch_size as f64)?;
        check_positive("lr_fake", self.lr_fake)?;
        check_positive("lr_gen", self.lr_gen)?;
        check_positive("clip_norm", self.clip_norm)?;
        check_positive("eval_interval", self.eval_interval as f64)?;
        check_positive("disc_hidden", self.disc_hidden as f64)?;
        if !(self.ema_decay >= 0.0 && self.ema_decay <= 1.0) {
            return Err(Error::InvalidConfig("ema_decay must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) {
            return Err(Error::InvalidConfig("beta1 must lie in [0, 1)".into()));
        }
        let c = &self.coeffs;
        match self.mode {
            Mode::Uid if c.alpha != 1.0 || c.beta != 1.0 => Err(mismatch(
                self.mode,
                "the data-free loss needs alpha = beta = 1",
            )),
            Mode::DmdReal => {
                check_dmd_coeffs(c)?;
                if self.path.kind != PathKind::DiffusionVp {
                    return Err(mismatch(self.mode, "needs the diffusion_vp path"));
                }
                Ok(())
            }
            Mode::Coupling
                if !matches!(
                    self.path.kind,
                    PathKind::BridgeBrownian | PathKind::Interpolant
                ) =>
            {
                Err(mismatch(
                    self.mode,
                    "needs a bridge_brownian or interpolant path",
                ))
            }
            Mode::General
            | Mode::Normalized
            | Mode::Sid
            | Mode::RealUid
            | Mode::GanBaseline
            | Mode::Coupling
                if c.gamma != c.alpha && self.mode != Mode::General =>
            {
                Err(mismatch(
                    self.mode,
                    "gamma differs from alpha; only the general mode uses gamma",
                ))
            }
            _ => Ok(()),
        }
    }

    /// Whether batches need real-data triples.
    pub fn needs_real(&self) -> bool {
        self.coeffs.uses_real() || self.mode == Mode::GanBaseline
    }

    pub fn is_generator_step(&self, n: u64) -> bool {
        n.is_multiple_of(self.k_fake_steps as u64 + 1)
    }

    fn adam(&self, lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            beta1: self.beta1,
            clip_norm: Some(self.clip_norm),
            warmup_steps: self.warmup_steps,
            ..AdamConfig::default()
        }
    }

    pub fn adam_fake(&self) -> AdamConfig {
        self.adam(self.lr_fake)
    }

    pub fn adam_gen(&self) -> AdamConfig {
        self.adam(self.lr_gen)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn modes_round_trip() {
        for m in Mode::ALL {
            assert_eq!(Mode::parse(m.name()), Some(m));
            let j = serde_json::to_string(&m).unwrap();
            assert_eq!(j, format!("\"{}\"", m.name()));
        }
        assert_eq!(Mode::parse("fgm"), None);
    }

    #[test]
    fn dmd_rejects_unequal_coeffs() {
        let c = DistillConfig {
            mode: Mode::DmdReal,
            coeffs: Coeffs::new(0.9, 0.8),
            path: PathSpec::new(PathKind::DiffusionVp),
            ..DistillConfig::default()
        };
        assert!(matches!(
            c.resolved().validate(),
            Err(Error::DmdUnequalCoeffs { .. })
        ));
    }

    #[test]
    fn uid_needs_unit_coeffs() {
        let c = DistillConfig {
            coeffs: Coeffs::new(0.94, 0.96),
            ..DistillConfig::default()
        };
        assert!(matches!(
            c.resolved().validate(),
            Err(Error::ModeMismatch { .. })
        ));
        let c = DistillConfig {
            mode: Mode::RealUid,
            ..c
        };
        c.resolved().validate().unwrap();
    }

    #[test]
    fn resolution_ties_gamma() {
        let mut c = DistillConfig {
            mode: Mode::RealUid,
            coeffs: Coeffs::new(0.94, 0.96).with_gamma(1.0),
            ..DistillConfig::default()
        };
        assert!(c.validate().is_err());
        assert_eq!(c.resolved().coeffs.gamma, 0.94);
        c.mode = Mode::General;
        assert_eq!(c.resolved().coeffs.gamma, 1.0);
        c.resolved().validate().unwrap();
    }

    #[test]
    fn schedule_has_one_generator_step_per_window() {
        let c = DistillConfig::default();
        for start in [0u64, 3, 17, 1000] {
            let gens = (start..start + 6)
                .filter(|&n| c.is_generator_step(n))
                .count();
            assert_eq!(gens, 1);
        }
    }

    #[test]
    fn zero_width_rejected() {
        let c = TeacherConfig {
            net: NetConfig {
                hidden: vec![16, 0],
                ..NetConfig::default()
            },
            ..TeacherConfig::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(serde_json::from_str::<DistillConfig>(r#"{"mode":"uid","alpah":0.9}"#).is_err());
        let c: DistillConfig =
            serde_json::from_str(r#"{"mode":"real_uid","coeffs":{"alpha":0.94,"beta":0.96}}"#)
                .unwrap();
        assert_eq!(c.k_fake_steps, 5);
        assert_eq!(c.coeffs.lambda_adv_g, 0.3);
    }
}
