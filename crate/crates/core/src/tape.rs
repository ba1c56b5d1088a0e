//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! Every operation appends one node holding its forward value and the
//! handles of its inputs. Because a node can only reference nodes that
//! already exist, append order is a topological order, and [`Tape::backward`]
//! simply walks the nodes in reverse.
//!
//! Nodes created by [`Tape::constant`] and [`Tape::stop_grad`] are untracked:
//! gradients never flow into them or through them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Scale(usize, f64),
    AddScalar(usize),
    MatMul(usize, usize),
    AddRow(usize, usize),
    MulCol(usize, usize),
    Sum(usize),
    Mean(usize),
    RowSum(usize),
    Dot(usize, usize),
    RowDot(usize, usize),
    Square(usize),
    Sqrt(usize),
    Tanh(usize),
    Silu(usize),
    Softplus(usize),
    Sigmoid(usize),
    Exp(usize),
    Ln(usize),
    Concat(Vec<usize>),
    /// Elementwise map with a caller-supplied derivative.
    Pointwise(usize, Vec<f64>),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    tracked: bool,
}

#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to every tracked node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    lens: Vec<usize>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when no tracked path reaches the loss.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Gradient for `v`, materializing zeros when nothing flowed into it.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        match self.get(v) {
            Some(g) => g.to_vec(),
            None => vec![0.0; self.lens[v.0]],
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            op,
            lhs: a.shape().to_vec(),
            rhs: b.shape().to_vec(),
        });
    }
    Ok(())
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape().to_vec(),
        rhs: b.shape().to_vec(),
    }
}

fn silu(x: f64) -> f64 {
    x * math::sigmoid(x)
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, tracked: bool) -> Var {
        self.nodes.push(Node { value, op, tracked });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn tracked(&self, v: Var) -> bool {
        self.nodes[v.0].tracked
    }

    /// A differentiable input (network parameter or generator latent path).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.node(v).value
    }

    /// Value of a one-element node.
    pub fn item(&self, v: Var) -> f64 {
        self.node(v).value.item()
    }

    pub fn is_tracked(&self, v: Var) -> bool {
        self.tracked(v)
    }

    /// Same forward value as `x`; contributes nothing to the gradients of
    /// `x`'s ancestors.
    pub fn stop_grad(&mut self, x: Var) -> Var {
        if !self.tracked(x) {
            return x;
        }
        let value = self.node(x).value.clone();
        self.push(value, Op::Constant, false)
    }

    fn unary(&mut self, x: Var, op: Op, f: impl Fn(f64) -> f64) -> Var {
        let a = &self.node(x).value;
        let data = a.data().iter().map(|&v| f(v)).collect();
        let value = Tensor::new(a.shape().to_vec(), data).expect("unary preserves shape");
        let tracked = self.tracked(x);
        self.push(value, op, tracked)
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        op: Op,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Var> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        same_shape(name, ta, tb)?;
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, op, tracked))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, Op::Add(a.0, b.0), |x, y| x + y)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, Op::Sub(a.0, b.0), |x, y| x - y)
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, Op::Mul(a.0, b.0), |x, y| x * y)
    }

    /// Elementwise quotient.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("div", a, b, Op::Div(a.0, b.0), |x, y| x / y)
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.unary(x, Op::Neg(x.0), |v| -v)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::Scale(x.0, c), |v| c * v)
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        self.unary(x, Op::AddScalar(x.0), |v| v + c)
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, Op::Square(x.0), |v| v * v)
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sqrt(x.0), math::sqrt)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, Op::Tanh(x.0), math::tanh)
    }

    pub fn silu(&mut self, x: Var) -> Var {
        self.unary(x, Op::Silu(x.0), silu)
    }

    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, Op::Softplus(x.0), math::softplus)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Op::Sigmoid(x.0), math::sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Op::Exp(x.0), math::exp)
    }

    pub fn ln(&mut self, x: Var) -> Var {
        self.unary(x, Op::Ln(x.0), math::ln)
    }

    /// `[m, k] × [k, n] → [m, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(mismatch("matmul", ta, tb));
        }
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let (ad, bd) = (ta.data(), tb.data());
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let aip = ad[i * k + p];
                if aip == 0.0 {
                    continue;
                }
                let brow = &bd[p * n..(p + 1) * n];
                for (o, &bv) in row.iter_mut().zip(brow) {
                    *o += aip * bv;
                }
            }
        }
        let value = Tensor::matrix(m, n, out)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::MatMul(a.0, b.0), tracked))
    }

    /// Adds the row vector `b` (`[n]` or `[1, n]`) to every row of `a` (`[m, n]`).
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        let n = ta.cols();
        if ta.shape().len() != 2 || tb.len() != n {
            return Err(mismatch("add_row", ta, tb));
        }
        let bd = tb.data();
        let data = ta
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(bd).map(|(x, y)| x + y))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(value, Op::AddRow(a.0, b.0), tracked))
    }

    /// Scales row `i` of `a` (`[m, n]`) by `s[i]` (`s` has `m` entries).
    pub fn mul_col(&mut self, a: Var, s: Var) -> Result<Var> {
        let (ta, ts) = (&self.node(a).value, &self.node(s).value);
        if ta.shape().len() != 2 || ts.len() != ta.rows() {
            return Err(mismatch("mul_col", ta, ts));
        }
        let n = ta.cols();
        let sd = ts.data();
        let data = ta
            .data()
            .chunks(n)
            .zip(sd)
            .flat_map(|(row, &c)| row.iter().map(move |x| x * c))
            .collect();
        let value = Tensor::new(ta.shape().to_vec(), data)?;
        let tracked = self.tracked(a) || self.tracked(s);
        Ok(self.push(value, Op::MulCol(a.0, s.0), tracked))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.node(x).value.data().iter().sum();
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(s), Op::Sum(x.0), tracked)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = &self.node(x).value;
        let m = t.data().iter().sum::<f64>() / t.len() as f64;
        let tracked = self.tracked(x);
        self.push(Tensor::scalar(m), Op::Mean(x.0), tracked)
    }

    /// Sums the trailing axis: `[m, n] → [m]`.
    pub fn row_sum(&mut self, x: Var) -> Var {
        let t = &self.node(x).value;
        let n = t.cols();
        let data: Vec<f64> = t.data().chunks(n).map(|r| r.iter().sum()).collect();
        let tracked = self.tracked(x);
        self.push(Tensor::vector(data), Op::RowSum(x.0), tracked)
    }

    /// Full inner product of two equally shaped tensors.
    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        same_shape("dot", ta, tb)?;
        let s = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).sum();
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::scalar(s), Op::Dot(a.0, b.0), tracked))
    }

    /// Per-row inner product: `[m, n] · [m, n] → [m]`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.node(a).value, &self.node(b).value);
        same_shape("row_dot", ta, tb)?;
        let n = ta.cols();
        let data: Vec<f64> = ta
            .data()
            .chunks(n)
            .zip(tb.data().chunks(n))
            .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p * q).sum())
            .collect();
        let tracked = self.tracked(a) || self.tracked(b);
        Ok(self.push(Tensor::vector(data), Op::RowDot(a.0, b.0), tracked))
    }

    /// Elementwise function of `x` whose values and derivatives were computed
    /// by the caller (analytic fields, tabulated functions).
    pub fn pointwise(&mut self, x: Var, values: Vec<f64>, derivatives: Vec<f64>) -> Result<Var> {
        let tx = &self.node(x).value;
        if values.len() != tx.len() || derivatives.len() != tx.len() {
            return Err(Error::LengthMismatch {
                expected: tx.len(),
                got: values.len().min(derivatives.len()),
            });
        }
        let value = Tensor::new(tx.shape().to_vec(), values)?;
        let tracked = self.tracked(x);
        Ok(self.push(value, Op::Pointwise(x.0, derivatives), tracked))
    }

    /// Concatenates rank-2 tensors with equal row counts along the column axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = &self.node(parts[0]).value;
        let m = first.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let t = &self.node(p).value;
            if t.shape().len() != 2 || t.rows() != m {
                return Err(mismatch("concat", first, t));
            }
            widths.push(t.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.node(p).value.row(i));
            }
        }
        let value = Tensor::matrix(m, total, data)?;
        let tracked = parts.iter().any(|&p| self.tracked(p));
        Ok(self.push(
            value,
            Op::Concat(parts.iter().map(|p| p.0).collect()),
            tracked,
        ))
    }

    /// Reverse pass from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = &self.node(loss).value;
        if lt.len() != 1 {
            return Err(Error::NonScalarLoss(lt.shape().to_vec()));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let lens = self.nodes.iter().map(|nd| nd.value.len()).collect();
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..n).rev() {
            let node = &self.nodes[i];
            if !node.tracked {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backprop(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads, lens })
    }

    fn backprop(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let val = |j: usize| nodes[j].value.data();
        let mut acc = |j: usize, f: &dyn Fn(usize) -> f64| accumulate(nodes, grads, j, f);
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(*a, &|k| g[k]);
                acc(*b, &|k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &|k| g[k] * vb[k]);
                acc(*b, &|k| g[k] * va[k]);
            }
            Op::Div(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &|k| g[k] / vb[k]);
                acc(*b, &|k| {
                    if g[k] == 0.0 {
                        0.0
                    } else {
                        -g[k] * va[k] / (vb[k] * vb[k])
                    }
                });
            }
            Op::Neg(a) => acc(*a, &|k| -g[k]),
            Op::Scale(a, c) => acc(*a, &|k| c * g[k]),
            Op::AddScalar(a) => acc(*a, &|k| g[k]),
            Op::MatMul(a, b) => self.backprop_matmul(*a, *b, g, grads),
            Op::AddRow(a, b) => {
                acc(*a, &|k| g[k]);
                let n = nodes[*b].value.len();
                let rows = g.len() / n;
                acc(*b, &|k| (0..rows).map(|i| g[i * n + k]).sum());
            }
            Op::MulCol(a, s) => {
                let (va, vs) = (val(*a), val(*s));
                let n = nodes[*a].value.cols();
                acc(*a, &|k| g[k] * vs[k / n]);
                acc(*s, &|i| (0..n).map(|j| g[i * n + j] * va[i * n + j]).sum());
            }
            Op::Sum(a) => acc(*a, &|_| g[0]),
            Op::Mean(a) => {
                let len = nodes[*a].value.len() as f64;
                acc(*a, &|_| g[0] / len);
            }
            Op::RowSum(a) => {
                let n = nodes[*a].value.cols();
                acc(*a, &|k| g[k / n]);
            }
            Op::Dot(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                acc(*a, &|k| g[0] * vb[k]);
                acc(*b, &|k| g[0] * va[k]);
            }
            Op::RowDot(a, b) => {
                let (va, vb) = (val(*a), val(*b));
                let n = nodes[*a].value.cols();
                acc(*a, &|k| g[k / n] * vb[k]);
                acc(*b, &|k| g[k / n] * va[k]);
            }
            Op::Square(a) => {
                let va = val(*a);
                acc(*a, &|k| 2.0 * va[k] * g[k]);
            }
            Op::Sqrt(a) => {
                let out = node.value.data();
                // d sqrt(x) is unbounded at 0; a zero upstream gradient stays zero.
                acc(*a, &|k| {
                    if g[k] == 0.0 {
                        0.0
                    } else {
                        g[k] / (2.0 * out[k])
                    }
                });
            }
            Op::Tanh(a) => {
                let out = node.value.data();
                acc(*a, &|k| g[k] * (1.0 - out[k] * out[k]));
            }
            Op::Silu(a) => {
                let va = val(*a);
                acc(*a, &|k| {
                    let s = math::sigmoid(va[k]);
                    g[k] * (s + va[k] * s * (1.0 - s))
                });
            }
            Op::Softplus(a) => {
                let va = val(*a);
                acc(*a, &|k| g[k] * math::sigmoid(va[k]));
            }
            Op::Sigmoid(a) => {
                let out = node.value.data();
                acc(*a, &|k| g[k] * out[k] * (1.0 - out[k]));
            }
            Op::Exp(a) => {
                let out = node.value.data();
                acc(*a, &|k| g[k] * out[k]);
            }
            Op::Ln(a) => {
                let va = val(*a);
                acc(*a, &|k| g[k] / va[k]);
            }
            Op::Pointwise(a, d) => acc(*a, &|k| g[k] * d[k]),
            Op::Concat(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p].value.cols();
                    let off = offset;
                    acc(p, &|k| {
                        let (i, j) = (k / w, k % w);
                        g[i * total + off + j]
                    });
                    offset += w;
                }
            }
        }
    }

    fn backprop_matmul(&self, a: usize, b: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (ta, tb) = (&self.nodes[a].value, &self.nodes[b].value);
        let (m, k, n) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let (ad, bd) = (ta.data(), tb.data());
        if self.nodes[a].tracked {
            // dA = dC · Bᵀ
            // with Bᵀ materialized the inner loop is an axpy, which vectorizes
            let mut bt = vec![0.0; n * k];
            for p in 0..k {
                for j in 0..n {
                    bt[j * k + p] = bd[p * n + j];
                }
            }
            let slot = grads[a].get_or_insert_with(|| vec![0.0; m * k]);
            for i in 0..m {
                let srow = &mut slot[i * k..(i + 1) * k];
                for j in 0..n {
                    let gij = g[i * n + j];
                    if gij == 0.0 {
                        continue;
                    }
                    for (s, &bv) in srow.iter_mut().zip(&bt[j * k..(j + 1) * k]) {
                        *s += gij * bv;
                    }
                }
            }
        }
        if self.nodes[b].tracked {
            // dB = Aᵀ · dC
            let slot = grads[b].get_or_insert_with(|| vec![0.0; k * n]);
            for i in 0..m {
                let grow = &g[i * n..(i + 1) * n];
                for p in 0..k {
                    let aip = ad[i * k + p];
                    if aip == 0.0 {
                        continue;
                    }
                    for (s, &gv) in slot[p * n..(p + 1) * n].iter_mut().zip(grow) {
                        *s += aip * gv;
                    }
                }
            }
        }
    }
}

/// Adds `f(k)` into parent `j`'s gradient, skipping untracked parents.
#[inline(always)]
fn accumulate<F: Fn(usize) -> f64 + ?Sized>(
    nodes: &[Node],
    grads: &mut [Option<Vec<f64>>],
    j: usize,
    f: &F,
) {
    if !nodes[j].tracked {
        return;
    }
    let len = nodes[j].value.len();
    let slot = grads[j].get_or_insert_with(|| vec![0.0; len]);
    for (k, s) in slot.iter_mut().enumerate() {
        *s += f(k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn dot_by_hand() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let b = tape.constant(Tensor::vector(vec![3.0, 4.0]));
        let d = tape.dot(a, b).unwrap();
        assert_eq!(tape.item(d), 11.0);
    }

    #[test]
    fn sum_of_zeros() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::zeros(vec![5]));
        let s = tape.sum(z);
        assert_eq!(tape.item(s), 0.0);
    }

    #[test]
    fn identity_matmul() {
        let mut tape = Tape::new();
        let x = Tensor::matrix(3, 3, vec![0.3, -1.2, 4.0, 2.5, 0.0, -0.7, 1.1, 9.0, -3.3]).unwrap();
        let i = tape.constant(Tensor::eye(3));
        let xv = tape.constant(x.clone());
        let y = tape.matmul(i, xv).unwrap();
        assert_eq!(tape.value(y), &x);
    }

    #[test]
    fn shape_mismatch_names_both_shapes() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(vec![2, 3]));
        let b = tape.constant(Tensor::zeros(vec![3, 2]));
        let err = tape.add(a, b).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
        assert!(tape.matmul(a, a).is_err());
    }

    #[test]
    fn square_power_rule() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(3.0));
        let y = tape.square(x);
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x), vec![6.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        assert!(matches!(tape.backward(x), Err(Error::NonScalarLoss(_))));
    }

    #[test]
    fn stop_grad_blocks_the_stopped_branch() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.5, -2.0, 0.5]));
        let y = tape.leaf(Tensor::vector(vec![0.25, 4.0, -1.0]));
        let sy = tape.stop_grad(y);
        let prod = tape.mul(sy, x).unwrap();
        let loss = tape.sum(prod);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(y).is_none());
        assert_eq!(g.wrt(y), vec![0.0; 3]);
        assert_eq!(g.wrt(x), vec![0.25, 4.0, -1.0]);
    }

    #[test]
    fn stop_grad_inner_product_with_itself() {
        // d/dx <sg(x), x> = sg(x), not 2x
        let mut tape = Tape::new();
        let xv = vec![0.7, -1.3, 2.2];
        let x = tape.leaf(Tensor::vector(xv.clone()));
        let sx = tape.stop_grad(x);
        assert_eq!(tape.value(sx), tape.value(x));
        let d = tape.dot(sx, x).unwrap();
        let g = tape.backward(d).unwrap();
        assert_eq!(g.wrt(x), xv);
    }

    #[test]
    fn nested_stop_grad_is_idempotent() {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
        let s1 = tape.stop_grad(x);
        let s2 = tape.stop_grad(s1);
        assert_eq!(s1, s2);
        assert_eq!(tape.value(s2), tape.value(x));
    }

    fn finite_diff_check(build: impl Fn(&mut Tape, Var) -> Var, x0: Vec<f64>) {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(x0.clone()));
        let loss = build(&mut tape, x);
        let g = tape.backward(loss).unwrap().wrt(x);
        let h = 1e-6;
        for k in 0..x0.len() {
            let eval = |delta: f64| {
                let mut xs = x0.clone();
                xs[k] += delta;
                let mut t = Tape::new();
                let v = t.leaf(Tensor::vector(xs));
                let l = build(&mut t, v);
                t.item(l)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert!(close(g[k], fd, 1e-6), "k={k}: {} vs {}", g[k], fd);
        }
    }

    #[test]
    fn unary_ops_match_finite_differences() {
        let x0 = vec![0.3, -0.8, 1.7, 0.05];
        finite_diff_check(
            |t, x| {
                let a = t.tanh(x);
                let b = t.silu(x);
                let c = t.softplus(x);
                let d = t.sigmoid(x);
                let e = t.exp(x);
                let sq = t.square(x);
                let p = t.add_scalar(sq, 1.0);
                let s = t.sqrt(p);
                let l = t.ln(p);
                let mut acc = t.add(a, b).unwrap();
                for v in [c, d, e, s, l] {
                    acc = t.add(acc, v).unwrap();
                }
                let q = t.div(acc, p).unwrap();
                let m = t.mul(q, x).unwrap();
                let n = t.neg(m);
                let sc = t.scale(n, 0.5);
                t.mean(sc)
            },
            x0,
        );
    }

    #[test]
    fn structural_ops_match_finite_differences() {
        // exercises matmul, add_row, mul_col, row_sum, row_dot and concat in one graph
        let x0 = vec![0.4, -1.1, 0.9, 2.0, 0.3, -0.6];
        finite_diff_check(
            |t, x| {
                // x as [6] -> [6,1] via mul_col with ones
                let ones = t.constant(Tensor::matrix(6, 1, vec![1.0; 6]).unwrap());
                let xcol = t.mul_col(ones, x).unwrap();
                let w = t.constant(Tensor::matrix(1, 3, vec![0.5, -0.25, 1.5]).unwrap());
                let wide = t.matmul(xcol, w).unwrap(); // [6,3]
                let bias = t.constant(Tensor::vector(vec![0.1, 0.2, 0.3]));
                let biased = t.add_row(wide, bias).unwrap();
                let act = t.tanh(biased);
                let cat = t.concat(&[act, xcol]).unwrap(); // [6,4]
                let sq = t.square(cat);
                let rs = t.row_sum(sq);
                let rd = t.row_dot(cat, cat).unwrap();
                let scaled = t.mul_col(cat, rs).unwrap();
                let tot = t.sum(scaled);
                let d = t.dot(rs, rd).unwrap();
                let sm = t.scale(d, 0.01);
                t.add(tot, sm).unwrap()
            },
            x0,
        );
    }

    #[test]
    fn backward_visits_nodes_once_in_reverse_order() {
        // A diamond: y = x*x + x*x uses x's node four times; gradient must be 4x.
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::scalar(1.5));
        let a = tape.mul(x, x).unwrap();
        let b = tape.mul(x, x).unwrap();
        let y = tape.add(a, b).unwrap();
        let g = tape.backward(y).unwrap();
        assert_eq!(g.wrt(x), vec![6.0]);
    }
}
