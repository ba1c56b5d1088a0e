//! Autodiff against central differences for every loss and network shape.

use realuid_core::losses::{
    adversarial_losses, general_real_uid_loss, normalized_real_uid_loss, real_uid_fake_step_loss,
    real_uid_generator_loss, sid_generator_loss, uid_generator_loss, um_loss, Coeffs,
};
use realuid_core::nn::{Activation, DiscHead, Generator, Mlp, MlpSpec};
use realuid_core::paths::{build_triples, PathKind, PathSpec, Triples};
use realuid_core::rng;
use realuid_core::tape::{Tape, Var};
use realuid_core::tensor::Tensor;

/// Step of the fourth-order stencil; its truncation error is `O(H⁴)` and its
/// rounding error `O(ε·|f| / H)`.
const H: f64 = 1e-3;
const TOL: f64 = 1e-5;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-6)
}

/// Compares `grad` with five-point central differences of `value` at `params`.
fn check(label: &str, params: &[f64], value: impl Fn(&[f64]) -> f64, grad: &[f64]) {
    assert_eq!(grad.len(), params.len(), "{label}");
    let mut p = params.to_vec();
    let mut worst = (0.0, 0, 0.0, 0.0);
    for i in 0..p.len() {
        let x = p[i];
        let mut at = |d: f64| {
            p[i] = x + d;
            value(&p)
        };
        let n = (8.0 * (at(H) - at(-H)) - (at(2.0 * H) - at(-2.0 * H))) / (12.0 * H);
        p[i] = x;
        let e = rel_err(grad[i], n);
        if e > worst.0 {
            worst = (e, i, grad[i], n);
        }
    }
    assert!(
        worst.0 <= TOL,
        "{label}: relative error {:e} at parameter {} (autodiff {:e}, differences {:e})",
        worst.0,
        worst.1,
        worst.2,
        worst.3
    );
}

struct Shape {
    dim: usize,
    hidden: Vec<usize>,
    act: Activation,
    cond: usize,
    pairs: usize,
}

fn shapes() -> Vec<Shape> {
    vec![
        Shape {
            dim: 1,
            hidden: vec![3],
            act: Activation::Tanh,
            cond: 0,
            pairs: 2,
        },
        Shape {
            dim: 2,
            hidden: vec![4, 3],
            act: Activation::Silu,
            cond: 0,
            pairs: 1,
        },
        Shape {
            dim: 2,
            hidden: vec![3, 4, 3],
            act: Activation::Tanh,
            cond: 0,
            pairs: 0,
        },
        Shape {
            dim: 1,
            hidden: vec![4],
            act: Activation::Silu,
            cond: 1,
            pairs: 2,
        },
        Shape {
            dim: 3,
            hidden: vec![5, 2],
            act: Activation::Silu,
            cond: 3,
            pairs: 3,
        },
    ]
}

fn spec(s: &Shape) -> MlpSpec {
    MlpSpec::new(s.dim, s.hidden.clone(), s.act)
        .with_cond(s.cond)
        .with_time_pairs(s.pairs)
}

/// Shared randomness for one check: times, latents, endpoints, extra noise
/// and conditioning.
struct Batch {
    t: Vec<f64>,
    z: Tensor,
    x_real: Tensor,
    end: Tensor,
    eps: Tensor,
    cond: Option<Tensor>,
}

fn batch(s: &Shape, seed: u64) -> Batch {
    let b = 4;
    let mut r = rng::stream(seed, 77);
    let m = |r: &mut rng::Stream, cols: usize| {
        Tensor::matrix(b, cols, rng::normal_vec(r, b * cols)).unwrap()
    };
    Batch {
        t: rng::uniform_vec(&mut r, b, 0.1, 0.9),
        z: m(&mut r, s.dim),
        x_real: m(&mut r, s.dim),
        end: m(&mut r, s.dim),
        eps: m(&mut r, s.dim),
        cond: (s.cond > 0).then(|| m(&mut r, s.cond)),
    }
}

fn triples(tape: &mut Tape, path: &PathSpec, b: &Batch, x0: Var) -> Triples {
    let eps = path.kind.uses_extra_noise().then_some(&b.eps);
    let tr = build_triples(tape, path, &b.t, x0, &b.end, eps).unwrap();
    match &b.cond {
        Some(c) => {
            let c = tape.constant(c.clone());
            tr.with_cond(c)
        }
        None => tr,
    }
}

struct Nets {
    teacher: Mlp,
    fake: Mlp,
    gen: Generator,
}

fn nets(s: &Shape, seed: u64) -> Nets {
    let sp = spec(s);
    let mut gen = Generator::init(sp.clone(), &mut rng::stream(seed, 3)).unwrap();
    // a zero output layer would hide most of the generator's gradient paths
    gen.net = Mlp::init(sp.clone(), &mut rng::stream(seed, 4)).unwrap();
    Nets {
        teacher: Mlp::init(sp.clone(), &mut rng::stream(seed, 1)).unwrap(),
        fake: Mlp::init(sp, &mut rng::stream(seed, 2)).unwrap(),
        gen,
    }
}

type GenLoss = fn(&mut Tape, &Mlp, &Mlp, &Triples, Option<&Triples>, &Coeffs) -> Var;

fn generator_losses() -> Vec<(&'static str, GenLoss)> {
    vec![
        ("uid", |tp, t, f, g, _, _| {
            uid_generator_loss(tp, t, f, g).unwrap()
        }),
        ("real_uid", |tp, t, f, g, _, c| {
            real_uid_generator_loss(tp, t, f, g, c).unwrap()
        }),
        ("sid", |tp, t, f, g, _, c| {
            sid_generator_loss(tp, t, f, g, c).unwrap()
        }),
        ("general", |tp, t, f, g, r, c| {
            general_real_uid_loss(tp, t, f, g, r, c).unwrap().total
        }),
        ("normalized", |tp, t, f, g, r, c| {
            normalized_real_uid_loss(tp, t, f, g, r, c).unwrap().total
        }),
    ]
}

/// Every path kind. The score targets scale like `1/σ`, and with the default
/// `σ_min = 0.01` the generator losses become differences of squares of size
/// `~10⁴` whose rounding swamps central differences; `σ_min = 0.1` keeps
/// them resolvable.
fn paths() -> Vec<PathSpec> {
    [
        PathKind::FlowLinear,
        PathKind::DiffusionVp,
        PathKind::BridgeBrownian,
        PathKind::Interpolant,
    ]
    .into_iter()
    .map(|k| PathSpec {
        sigma_min: 0.1,
        ..PathSpec::new(k)
    })
    .collect()
}

#[test]
fn generator_gradients_through_every_loss() {
    let c = Coeffs::new(0.9, 0.95).with_gamma(0.93);
    for (k, s) in shapes().iter().enumerate() {
        let n = nets(s, k as u64);
        for path in paths() {
            let b = batch(s, k as u64 + 100);
            for (name, loss) in generator_losses() {
                let run = |params: &[f64], want_grad: bool| {
                    let mut tape = Tape::new();
                    let g = Generator {
                        net: Mlp::from_params(n.gen.net.spec.clone(), params.to_vec()).unwrap(),
                        residual: true,
                    };
                    let bg = g.bind(&mut tape, true);
                    let z = tape.constant(b.z.clone());
                    let cond = b.cond.as_ref().map(|c| tape.constant(c.clone()));
                    let x0 = bg.forward(&mut tape, z, cond).unwrap();
                    let gen = triples(&mut tape, &path, &b, x0);
                    let xr = tape.constant(b.x_real.clone());
                    let real = triples(&mut tape, &path, &b, xr);
                    let l = loss(&mut tape, &n.teacher, &n.fake, &gen, Some(&real), &c);
                    let grad = want_grad.then(|| bg.net.grads(&tape.backward(l).unwrap()));
                    (tape.item(l), grad)
                };
                let p = &n.gen.net.params;
                let grad = run(p, true).1.unwrap();
                check(
                    &format!("{name} / shape {k} / {}", path.kind.name()),
                    p,
                    |q| run(q, false).0,
                    &grad,
                );
            }
        }
    }
}

#[test]
fn fake_and_teacher_gradients() {
    let c = Coeffs::new(0.94, 0.96);
    for (k, s) in shapes().iter().enumerate() {
        let n = nets(s, k as u64 + 10);
        let b = batch(s, k as u64 + 200);
        let path = PathSpec::flow();
        let run = |params: &[f64], which: &str, want_grad: bool| {
            let mut tape = Tape::new();
            let net = Mlp::from_params(n.fake.spec.clone(), params.to_vec()).unwrap();
            let bound = net.bind(&mut tape, true);
            let xg = tape.constant(b.z.clone());
            let gen = triples(&mut tape, &path, &b, xg);
            let xr = tape.constant(b.x_real.clone());
            let real = triples(&mut tape, &path, &b, xr);
            let l = match which {
                "um" => um_loss(&mut tape, &bound, &real).unwrap(),
                "fake_step" => {
                    real_uid_fake_step_loss(&mut tape, &bound, &gen, Some(&real), &c)
                        .unwrap()
                        .total
                }
                _ => {
                    general_real_uid_loss(
                        &mut tape,
                        &n.teacher,
                        &bound,
                        &gen,
                        Some(&real),
                        &c.with_gamma(0.9),
                    )
                    .unwrap()
                    .total
                }
            };
            let grad = want_grad.then(|| bound.grads(&tape.backward(l).unwrap()));
            (tape.item(l), grad)
        };
        for which in ["um", "fake_step", "general"] {
            let p = &n.fake.params;
            let grad = run(p, which, true).1.unwrap();
            check(
                &format!("{which} / shape {k}"),
                p,
                |q| run(q, which, false).0,
                &grad,
            );
        }
    }
}

#[test]
fn discriminator_head_gradients() {
    let s = &shapes()[1];
    let n = nets(s, 5);
    let b = batch(s, 300);
    let features = *s.hidden.last().unwrap();
    let disc = DiscHead::init(features, 6, &mut rng::stream(5, 9)).unwrap();
    let path = PathSpec::flow();
    let run = |params: &[f64], want_grad: bool| {
        let mut tape = Tape::new();
        let d = DiscHead {
            params: params.to_vec(),
            ..disc.clone()
        };
        let bd = d.bind(&mut tape, true);
        let fake = n.fake.bind(&mut tape, false);
        let xg = tape.constant(b.z.clone());
        let gen = triples(&mut tape, &path, &b, xg);
        let xr = tape.constant(b.x_real.clone());
        let real = triples(&mut tape, &path, &b, xr);
        let l = adversarial_losses(&mut tape, &bd, &fake, &gen, &real)
            .unwrap()
            .disc_term;
        let grad = want_grad.then(|| bd.grads(&tape.backward(l).unwrap()));
        (tape.item(l), grad)
    };
    let grad = run(&disc.params, true).1.unwrap();
    check("discriminator", &disc.params, |q| run(q, false).0, &grad);
}
