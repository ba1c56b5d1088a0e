//! Small multilayer perceptrons, the residual one-step generator and the
//! discriminator head, all evaluated on a [`Tape`].

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math;
use crate::tape::{Gradients, Tape, Var};
use crate::tensor::Tensor;

/// Number of sine/cosine pairs in the default time embedding.
pub const DEFAULT_TIME_PAIRS: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Silu,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Silu => "silu",
        }
    }

    fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Silu => tape.silu(x),
        }
    }
}

/// Architecture of an MLP mapping `(t, x, cond)` to a `dim`-vector.
///
/// The input layer sees `x` (width `dim`), then the optional conditioning
/// vector (width `cond_dim`), then `2 * time_pairs` sinusoidal features of `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlpSpec {
    pub dim: usize,
    pub cond_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub time_pairs: usize,
}

impl MlpSpec {
    pub fn new(dim: usize, hidden: Vec<usize>, activation: Activation) -> Self {
        Self {
            dim,
            cond_dim: 0,
            hidden,
            activation,
            time_pairs: DEFAULT_TIME_PAIRS,
        }
    }

    pub fn with_cond(mut self, cond_dim: usize) -> Self {
        self.cond_dim = cond_dim;
        self
    }

    pub fn with_time_pairs(mut self, pairs: usize) -> Self {
        self.time_pairs = pairs;
        self
    }

    pub fn input_width(&self) -> usize {
        self.dim + self.cond_dim + 2 * self.time_pairs
    }

    /// `[input, hidden..., dim]`.
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = Vec::with_capacity(self.hidden.len() + 2);
        w.push(self.input_width());
        w.extend_from_slice(&self.hidden);
        w.push(self.dim);
        w
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidConfig(
                "data dimension must be positive".into(),
            ));
        }
        if self.hidden.contains(&0) {
            return Err(Error::InvalidConfig(
                "hidden layer widths must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Shapes of the parameter tensors in storage order `W0, b0, W1, b1, ...`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let w = self.layer_widths();
        let mut shapes = Vec::new();
        for pair in w.windows(2) {
            shapes.push(vec![pair[0], pair[1]]);
            shapes.push(vec![pair[1]]);
        }
        shapes
    }

    pub fn n_params(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }
}

/// Sinusoidal features of `t`: `sin(ω_k t), cos(ω_k t)` with `ω_k` spaced
/// geometrically between 1 and 32.
pub fn time_features(t: f64, pairs: usize) -> impl Iterator<Item = f64> {
    (0..pairs).flat_map(move |k| {
        let w = if pairs > 1 {
            math::exp(math::ln(32.0) * k as f64 / (pairs - 1) as f64)
        } else {
            1.0
        };
        let a = w * t;
        [math::sin(a), math::cos(a)]
    })
}

/// An MLP's architecture together with its flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub spec: MlpSpec,
    pub params: Vec<f64>,
}

impl Mlp {
    pub fn zeros(spec: MlpSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.n_params();
        Ok(Self {
            spec,
            params: vec![0.0; n],
        })
    }

    /// Weights uniform on `±1/√fan_in`, biases zero.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut m = Self::zeros(spec)?;
        let mut offset = 0;
        for shape in m.spec.param_shapes() {
            let n: usize = shape.iter().product();
            if shape.len() == 2 {
                let bound = 1.0 / math::sqrt(shape[0] as f64);
                for p in &mut m.params[offset..offset + n] {
                    *p = bound * (2.0 * rng.random::<f64>() - 1.0);
                }
            }
            offset += n;
        }
        Ok(m)
    }

    pub fn from_params(spec: MlpSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.n_params();
        if params.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    /// Zeroes the output layer so the network computes exactly 0.
    pub fn zero_output_layer(&mut self) {
        let shapes = self.spec.param_shapes();
        let tail: usize = shapes[shapes.len() - 2..]
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum();
        let n = self.params.len();
        self.params[n - tail..].iter_mut().for_each(|p| *p = 0.0);
    }

    /// Records the parameters on `tape`; `trainable = false` freezes them.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundMlp {
        let mut vars = Vec::new();
        let mut offset = 0;
        for shape in self.spec.param_shapes() {
            let n: usize = shape.iter().product();
            let t = Tensor::new(shape, self.params[offset..offset + n].to_vec())
                .expect("shape product matches slice");
            vars.push(if trainable {
                tape.leaf(t)
            } else {
                tape.constant(t)
            });
            offset += n;
        }
        BoundMlp {
            spec: self.spec.clone(),
            vars,
        }
    }

    /// Plain forward evaluation without keeping a tape around.
    pub fn eval(&self, t: &[f64], x: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let cv = cond.map(|c| tape.constant(c.clone()));
        let out = bound.forward(&mut tape, t, xv, cv)?;
        Ok(tape.value(out).clone())
    }
}

/// A function of `(t, x, cond)` evaluated on a tape: trained networks and the
/// analytic fields used by the oracle checks both implement it.
pub trait Field {
    fn eval(&self, tape: &mut Tape, t: &[f64], x: Var, cond: Option<Var>) -> Result<Var>;
}

/// Frozen parameters, recorded on the tape at each call.
impl Field for Mlp {
    fn eval(&self, tape: &mut Tape, t: &[f64], x: Var, cond: Option<Var>) -> Result<Var> {
        self.bind(tape, false).forward(tape, t, x, cond)
    }
}

/// An [`Mlp`] whose parameters live on a tape.
#[derive(Debug, Clone)]
pub struct BoundMlp {
    spec: MlpSpec,
    vars: Vec<Var>,
}

impl BoundMlp {
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    /// Flat gradient in parameter storage order.
    pub fn grads(&self, g: &Gradients) -> Vec<f64> {
        self.vars.iter().flat_map(|&v| g.wrt(v)).collect()
    }

    fn input(&self, tape: &mut Tape, t: &[f64], x: Var, cond: Option<Var>) -> Result<Var> {
        let rows = tape.value(x).rows();
        if t.len() != rows {
            return Err(Error::LengthMismatch {
                expected: rows,
                got: t.len(),
            });
        }
        let mut parts = vec![x];
        match (cond, self.spec.cond_dim) {
            (Some(c), d) if d > 0 => parts.push(c),
            (None, 0) => {}
            (Some(_), _) | (None, _) => {
                return Err(Error::InvalidConfig(
                    "conditioning input does not match the network's cond_dim".into(),
                ))
            }
        }
        if self.spec.time_pairs > 0 {
            let pairs = self.spec.time_pairs;
            let data = t.iter().flat_map(|&ti| time_features(ti, pairs)).collect();
            parts.push(tape.constant(Tensor::matrix(rows, 2 * pairs, data)?));
        }
        if parts.len() == 1 {
            Ok(x)
        } else {
            tape.concat(&parts)
        }
    }

    /// Output together with the last hidden activations.
    pub fn forward_with_features(
        &self,
        tape: &mut Tape,
        t: &[f64],
        x: Var,
        cond: Option<Var>,
    ) -> Result<(Var, Var)> {
        let mut h = self.input(tape, t, x, cond)?;
        let n_layers = self.vars.len() / 2;
        for l in 0..n_layers - 1 {
            let z = tape.matmul(h, self.vars[2 * l])?;
            let z = tape.add_row(z, self.vars[2 * l + 1])?;
            h = self.spec.activation.apply(tape, z);
        }
        let out = tape.matmul(h, self.vars[2 * n_layers - 2])?;
        let out = tape.add_row(out, self.vars[2 * n_layers - 1])?;
        Ok((out, h))
    }

    pub fn forward(&self, tape: &mut Tape, t: &[f64], x: Var, cond: Option<Var>) -> Result<Var> {
        self.forward_with_features(tape, t, x, cond).map(|(o, _)| o)
    }
}

impl Field for BoundMlp {
    fn eval(&self, tape: &mut Tape, t: &[f64], x: Var, cond: Option<Var>) -> Result<Var> {
        self.forward(tape, t, x, cond)
    }
}

/// One-step generator `G(z) = z + net(0, z)` (residual) or `net(0, z)`.
///
/// In coupling mode the network also receives the endpoint `x_T`.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub net: Mlp,
    pub residual: bool,
}

impl Generator {
    /// Residual generator whose output layer starts at zero, so it begins as
    /// the identity map on latents.
    pub fn init<R: Rng + ?Sized>(spec: MlpSpec, rng: &mut R) -> Result<Self> {
        let mut net = Mlp::init(spec, rng)?;
        net.zero_output_layer();
        Ok(Self {
            net,
            residual: true,
        })
    }

    pub fn conditional(&self) -> bool {
        self.net.spec.cond_dim > 0
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundGenerator {
        BoundGenerator {
            net: self.net.bind(tape, trainable),
            residual: self.residual,
        }
    }

    pub fn sample(&self, z: &Tensor, cond: Option<&Tensor>) -> Result<Tensor> {
        let mut tape = Tape::new();
        let g = self.bind(&mut tape, false);
        let zv = tape.constant(z.clone());
        let cv = cond.map(|c| tape.constant(c.clone()));
        let out = g.forward(&mut tape, zv, cv)?;
        Ok(tape.value(out).clone())
    }
}

#[derive(Debug, Clone)]
pub struct BoundGenerator {
    pub net: BoundMlp,
    residual: bool,
}

impl BoundGenerator {
    pub fn forward(&self, tape: &mut Tape, z: Var, cond: Option<Var>) -> Result<Var> {
        let rows = tape.value(z).rows();
        let t = vec![0.0; rows];
        let out = self.net.forward(tape, &t, z, cond)?;
        if self.residual {
            tape.add(z, out)
        } else {
            Ok(out)
        }
    }
}

/// Exponential moving average of a parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmaState {
    pub decay: f64,
    pub shadow: Vec<f64>,
}

impl EmaState {
    pub fn new(decay: f64, params: &[f64]) -> Self {
        Self {
            decay,
            shadow: params.to_vec(),
        }
    }

    pub fn update(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.shadow.len() {
            return Err(Error::LengthMismatch {
                expected: self.shadow.len(),
                got: params.len(),
            });
        }
        let d = self.decay;
        for (s, &p) in self.shadow.iter_mut().zip(params) {
            *s = d * *s + (1.0 - d) * p;
        }
        Ok(())
    }
}

/// Two-layer logistic head on a fake model's last hidden features.
///
/// Produces logits; `D = sigmoid(logit)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscHead {
    pub features: usize,
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl DiscHead {
    fn shapes(features: usize, hidden: usize) -> [Vec<usize>; 4] {
        [
            vec![features, hidden],
            vec![hidden],
            vec![hidden, 1],
            vec![1],
        ]
    }

    pub fn n_params(features: usize, hidden: usize) -> usize {
        features * hidden + 2 * hidden + 1
    }

    pub fn init<R: Rng + ?Sized>(features: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        if features == 0 || hidden == 0 {
            return Err(Error::InvalidConfig(
                "discriminator widths must be positive".into(),
            ));
        }
        let mut params = Vec::with_capacity(Self::n_params(features, hidden));
        for s in Self::shapes(features, hidden) {
            let n: usize = s.iter().product();
            if s.len() == 2 {
                let bound = 1.0 / math::sqrt(s[0] as f64);
                params.extend((0..n).map(|_| bound * (2.0 * rng.random::<f64>() - 1.0)));
            } else {
                params.extend(core::iter::repeat_n(0.0, n));
            }
        }
        Ok(Self {
            features,
            hidden,
            params,
        })
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> BoundDisc {
        let mut vars = Vec::new();
        let mut offset = 0;
        for s in Self::shapes(self.features, self.hidden) {
            let n: usize = s.iter().product();
            let t = Tensor::new(s, self.params[offset..offset + n].to_vec())
                .expect("shape product matches slice");
            vars.push(if trainable {
                tape.leaf(t)
            } else {
                tape.constant(t)
            });
            offset += n;
        }
        BoundDisc { vars }
    }
}

#[derive(Debug, Clone)]
pub struct BoundDisc {
    vars: Vec<Var>,
}

impl BoundDisc {
    pub fn grads(&self, g: &Gradients) -> Vec<f64> {
        self.vars.iter().flat_map(|&v| g.wrt(v)).collect()
    }

    /// Per-row logits `[B]` from features `[B, F]`.
    pub fn logits(&self, tape: &mut Tape, features: Var) -> Result<Var> {
        let h = tape.matmul(features, self.vars[0])?;
        let h = tape.add_row(h, self.vars[1])?;
        let h = tape.silu(h);
        let o = tape.matmul(h, self.vars[2])?;
        let o = tape.add_row(o, self.vars[3])?;
        Ok(tape.row_sum(o))
    }
}

/// Deterministic 64-bit fingerprint of a parameter vector (FNV-1a over the
/// IEEE bit patterns); used to detect which network an optimizer step touched.
pub fn param_hash(params: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for p in params {
        for b in p.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn spec(dim: usize) -> MlpSpec {
        MlpSpec::new(dim, vec![7, 5], Activation::Silu)
    }

    #[test]
    fn widths_chain() {
        let s = MlpSpec::new(2, vec![128, 128, 128], Activation::Silu);
        assert_eq!(s.layer_widths(), vec![18, 128, 128, 128, 2]);
        let shapes = s.param_shapes();
        for l in 0..shapes.len() / 2 - 1 {
            assert_eq!(shapes[2 * l][1], shapes[2 * l + 2][0]);
        }
    }

    #[test]
    fn zero_width_rejected() {
        let s = MlpSpec::new(1, vec![16, 0], Activation::Tanh);
        assert!(matches!(Mlp::zeros(s), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn output_width_is_data_dim() {
        let mut r = rng::stream(1, 0);
        let m = Mlp::init(spec(3).with_cond(2), &mut r).unwrap();
        let x = Tensor::matrix(4, 3, vec![0.1; 12]).unwrap();
        let c = Tensor::matrix(4, 2, vec![0.5; 8]).unwrap();
        let out = m.eval(&[0.1, 0.2, 0.3, 0.4], &x, Some(&c)).unwrap();
        assert_eq!(out.shape(), &[4, 3]);
        assert!(m.eval(&[0.1; 4], &x, None).is_err());
    }

    #[test]
    fn residual_generator_with_zero_net_is_identity() {
        let g = Generator {
            net: Mlp::zeros(spec(2)).unwrap(),
            residual: true,
        };
        let z = Tensor::matrix(3, 2, vec![0.3, -1.0, 2.5, 0.0, -0.25, 7.0]).unwrap();
        assert_eq!(g.sample(&z, None).unwrap(), z);
    }

    #[test]
    fn fresh_generator_is_identity() {
        let mut r = rng::stream(9, 0);
        let g = Generator::init(spec(2), &mut r).unwrap();
        let z = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(g.sample(&z, None).unwrap(), z);
    }

    #[test]
    fn ema_arithmetic() {
        let mut e = EmaState::new(0.0, &[5.0, 6.0]);
        e.update(&[1.0, 2.0]).unwrap();
        assert_eq!(e.shadow, vec![1.0, 2.0]);

        let mut e = EmaState::new(1.0, &[5.0, 6.0]);
        e.update(&[1.0, 2.0]).unwrap();
        assert_eq!(e.shadow, vec![5.0, 6.0]);

        let mut e = EmaState::new(0.999, &[0.0]);
        e.update(&[1.0]).unwrap();
        assert!((e.shadow[0] - 0.001).abs() < 1e-15);

        assert!(e.update(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn disc_head_shapes() {
        let mut r = rng::stream(3, 0);
        let d = DiscHead::init(5, 4, &mut r).unwrap();
        assert_eq!(d.params.len(), 5 * 4 + 4 + 4 + 1);
        let mut tape = Tape::new();
        let b = d.bind(&mut tape, true);
        let f = tape.constant(Tensor::matrix(3, 5, vec![0.2; 15]).unwrap());
        let l = b.logits(&mut tape, f).unwrap();
        assert_eq!(tape.value(l).shape(), &[3]);
    }

    #[test]
    fn time_features_at_zero() {
        let f: Vec<f64> = time_features(0.0, 3).collect();
        assert_eq!(f, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }
}
