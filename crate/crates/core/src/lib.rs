//! Numerical core for distilling matching models (flow matching, diffusion,
//! bridge matching, stochastic interpolants) into one-step generators with
//! the UID and RealUID min-max objectives.
//!
//! The crate is `no_std` and needs only an allocator. Everything here is a
//! pure function of its inputs and an explicit RNG stream; file formats, the
//! command line and wall-clock timing live in the `realuid` companion crate.
//!
//! Module map:
//!
//! - [`tape`], [`tensor`], [`nn`], [`optim`]: reverse-mode autodiff over dense
//!   `f64` tensors, small MLPs, AdamW with global-norm clipping, EMA.
//! - [`paths`]: conditional probability paths and their regression targets.
//! - [`losses`]: UM/DSM/CFM, UID, RealUID (fake and generator sides), the
//!   general-γ, SiD, normalized and DMD-with-real-data variants, and the
//!   adversarial baseline.
//! - [`oracle`]: closed-form 1D Gaussian ground truth and quadrature.
//! - [`metrics`]: distribution distances used in place of FID.
//! - [`data`]: built-in synthetic datasets and couplings.
//! - [`engine`]: teacher training, the alternating distillation loop,
//!   fine-tuning, the coupling variant and samplers.
#![cfg_attr(not(test), no_std)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod data;
pub mod engine;
pub mod error;
pub mod losses;
pub mod math;
pub mod metrics;
pub mod nn;
pub mod optim;
pub mod oracle;
pub mod paths;
pub mod rng;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
