//! Arena tape for reverse-mode differentiation.
//!
//! Every value on the tape is a rank-2 tensor (vectors are `1 x n` rows,
//! scalars `1 x 1`). Backward rules are written in terms of tape ops, so a
//! backward pass appends nodes to the same tape and its results can be
//! differentiated again. `grad_values` runs a pass, reads the numbers and
//! truncates the tape back to where it started.

use std::fmt;
use std::sync::Arc;

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A primitive with a hand-written vector-Jacobian product.
///
/// Gradients flowing through a custom op are detached: the returned cotangents
/// enter the tape as constants, so custom ops only support first-order use.
pub trait CustomOp: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;
    fn vjp(&self, inputs: &[&Tensor], output: &Tensor, grad: &Tensor) -> Vec<Tensor>;
}

#[derive(Clone, Debug)]
pub enum Op {
    Leaf,
    MatMul,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    /// `scale * a + shift`
    Affine { scale: f64, shift: f64 },
    Tanh,
    Relu,
    Exp,
    Log,
    Sqrt,
    Sum,
    SumRows,
    SumCols,
    BroadcastRows { rows: usize },
    BroadcastCols { cols: usize },
    Softmax,
    LogSoftmax,
    SliceCols { start: usize, end: usize },
    PadCols { start: usize, total: usize },
    ConcatCols,
    Custom(Arc<dyn CustomOp>),
}

impl Op {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::Affine { .. } => "affine",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::Sqrt => "sqrt",
            Op::Sum => "sum",
            Op::SumRows => "sum_rows",
            Op::SumCols => "sum_cols",
            Op::BroadcastRows { .. } => "broadcast_rows",
            Op::BroadcastCols { .. } => "broadcast_cols",
            Op::Softmax => "softmax",
            Op::LogSoftmax => "log_softmax",
            Op::SliceCols { .. } => "slice_cols",
            Op::PadCols { .. } => "pad_cols",
            Op::ConcatCols => "concat_cols",
            Op::Custom(c) => c.name(),
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    inputs: Vec<Var>,
    value: Tensor,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
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

    /// Drops every node at index `len` and beyond. Vars pointing there become
    /// invalid.
    pub fn truncate(&mut self, len: usize) {
        self.nodes.truncate(len);
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn op(&self, v: Var) -> &Op {
        &self.nodes[v.0].op
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    /// First node at or after `from` holding a non-finite entry.
    pub fn check_finite(&self, from: usize) -> Result<()> {
        for (i, n) in self.nodes.iter().enumerate().skip(from) {
            if !n.value.is_finite() {
                return Err(Error::NonFinite {
                    op: n.op.name(),
                    node: i,
                });
            }
        }
        Ok(())
    }

    fn push(&mut self, op: Op, inputs: Vec<Var>, value: Tensor) -> Var {
        self.nodes.push(Node { op, inputs, value });
        Var(self.nodes.len() - 1)
    }

    fn mismatch(&self, op: &'static str, detail: String) -> Error {
        Error::Dimension {
            op,
            node: Some(self.nodes.len()),
            detail,
        }
    }

    /// Input, parameter or constant. Rank-1 tensors become `1 x n` rows.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let (r, c) = t.dims2();
        let t = if t.shape().len() == 2 {
            t
        } else {
            t.reshape(vec![r, c]).expect("same element count")
        };
        self.push(Op::Leaf, Vec::new(), t)
    }

    pub fn constant_like(&mut self, v: Var, value: f64) -> Var {
        let (r, c) = self.shape(v);
        self.leaf(Tensor::full(&[r, c], value))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let (n2, p) = self.shape(b);
        if n != n2 {
            return Err(self.mismatch("matmul", format!("[{m},{n}] x [{n2},{p}]")));
        }
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul, vec![a, b], v))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a).transpose();
        Ok(self.push(Op::Transpose, vec![a], v))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch(
                op,
                format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            ));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let v = self.value(a).add(self.value(b));
        Ok(self.push(Op::Add, vec![a, b], v))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let v = self.value(a).sub(self.value(b));
        Ok(self.push(Op::Sub, vec![a, b], v))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        Ok(self.push(Op::Mul, vec![a, b], v))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("div", a, b)?;
        let v = self.value(a).zip(self.value(b), |x, y| x / y);
        Ok(self.push(Op::Div, vec![a, b], v))
    }

    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let v = self.value(a).map(|x| scale * x + shift);
        Ok(self.push(Op::Affine { scale, shift }, vec![a], v))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -1.0, 0.0)
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Result<Var> {
        let v = self.value(a).map(f);
        Ok(self.push(op, vec![a], v))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Relu, a, |x| if x > 0.0 { x } else { 0.0 })
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Exp, a, f64::exp)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Log, a, f64::ln)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        self.unary(Op::Sqrt, a, f64::sqrt)
    }

    /// Sum of all entries, as a `1 x 1` scalar.
    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let v = Tensor::scalar(self.value(a).sum());
        Ok(self.push(Op::Sum, vec![a], v))
    }

    /// `[m, n] -> [1, n]`
    pub fn sum_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let src = self.value(a).data();
        let mut out = vec![0.0; n];
        for i in 0..m {
            for (o, &x) in out.iter_mut().zip(&src[i * n..(i + 1) * n]) {
                *o += x;
            }
        }
        let v = Tensor::row(out);
        Ok(self.push(Op::SumRows, vec![a], v))
    }

    /// `[m, n] -> [m, 1]`
    pub fn sum_cols(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.shape(a);
        let src = self.value(a).data();
        let out = (0..m).map(|i| src[i * n..(i + 1) * n].iter().sum()).collect();
        let v = Tensor::matrix(m, 1, out)?;
        Ok(self.push(Op::SumCols, vec![a], v))
    }

    /// `[1, n] -> [rows, n]`
    pub fn broadcast_rows(&mut self, a: Var, rows: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if m != 1 {
            return Err(self.mismatch("broadcast_rows", format!("expected one row, got {m}")));
        }
        let src = self.value(a).data();
        let data = (0..rows).flat_map(|_| src.iter().copied()).collect();
        let v = Tensor::matrix(rows, n, data)?;
        Ok(self.push(Op::BroadcastRows { rows }, vec![a], v))
    }

    /// `[m, 1] -> [m, cols]`
    pub fn broadcast_cols(&mut self, a: Var, cols: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if n != 1 {
            return Err(self.mismatch("broadcast_cols", format!("expected one column, got {n}")));
        }
        let src = self.value(a).data();
        let data = src
            .iter()
            .flat_map(|&x| std::iter::repeat_n(x, cols))
            .collect();
        let v = Tensor::matrix(m, cols, data)?;
        Ok(self.push(Op::BroadcastCols { cols }, vec![a], v))
    }

    /// `a + b` where `b` is a `1 x n` row added to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, _) = self.shape(a);
        let bb = if m == 1 { b } else { self.broadcast_rows(b, m)? };
        self.add(a, bb)
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = row_log_softmax(self.value(a)).map(f64::exp);
        Ok(self.push(Op::Softmax, vec![a], v))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        let v = row_log_softmax(self.value(a));
        Ok(self.push(Op::LogSoftmax, vec![a], v))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.shape(a);
        if start >= end || end > n {
            return Err(self.mismatch("slice_cols", format!("[{start}, {end}) of {n} columns")));
        }
        let src = self.value(a).data();
        let w = end - start;
        let data = (0..m)
            .flat_map(|i| src[i * n + start..i * n + end].iter().copied())
            .collect();
        let v = Tensor::matrix(m, w, data)?;
        Ok(self.push(Op::SliceCols { start, end }, vec![a], v))
    }

    /// Places `a` at column offset `start` of a zero matrix with `total` columns.
    pub fn pad_cols(&mut self, a: Var, start: usize, total: usize) -> Result<Var> {
        let (m, w) = self.shape(a);
        if start + w > total {
            return Err(self.mismatch("pad_cols", format!("{w} columns at {start} exceed {total}")));
        }
        let src = self.value(a).data();
        let mut data = vec![0.0; m * total];
        for i in 0..m {
            data[i * total + start..i * total + start + w].copy_from_slice(&src[i * w..(i + 1) * w]);
        }
        let v = Tensor::matrix(m, total, data)?;
        Ok(self.push(Op::PadCols { start, total }, vec![a], v))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(self.mismatch("concat_cols", "no operands".into()));
        };
        let m = self.shape(first).0;
        if parts.iter().any(|&p| self.shape(p).0 != m) {
            return Err(self.mismatch("concat_cols", "row counts differ".into()));
        }
        let total: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(m * total);
        for i in 0..m {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(i));
            }
        }
        let v = Tensor::matrix(m, total, data)?;
        Ok(self.push(Op::ConcatCols, parts.to_vec(), v))
    }

    pub fn custom(&mut self, op: Arc<dyn CustomOp>, inputs: &[Var]) -> Result<Var> {
        let vals: Vec<&Tensor> = inputs.iter().map(|&v| self.value(v)).collect();
        let v = op.forward(&vals)?;
        let (r, c) = v.dims2();
        let v = v.reshape(vec![r, c])?;
        Ok(self.push(Op::Custom(op), inputs.to_vec(), v))
    }

    /// Records the backward pass of `out` (seeded with `seed`, or ones) and
    /// returns one gradient node per entry of `wrt`. The gradient nodes are
    /// themselves differentiable.
    pub fn grad(&mut self, out: Var, seed: Option<Var>, wrt: &[Var]) -> Result<Vec<Var>> {
        let seed = match seed {
            Some(s) => {
                if self.shape(s) != self.shape(out) {
                    return Err(self.mismatch(
                        "grad",
                        format!("seed {:?} vs output {:?}", self.shape(s), self.shape(out)),
                    ));
                }
                s
            }
            None => self.constant_like(out, 1.0),
        };

        let end = out.0 + 1;
        let mut needs = vec![false; end];
        for w in wrt {
            if w.0 < end {
                needs[w.0] = true;
            }
        }
        for i in 0..end {
            if !needs[i] && self.nodes[i].inputs.iter().any(|p| p.0 < end && needs[p.0]) {
                needs[i] = true;
            }
        }

        let mut grads: Vec<Option<Var>> = vec![None; end];
        grads[out.0] = Some(seed);
        for i in (0..end).rev() {
            let Some(g) = grads[i] else { continue };
            if !needs[i] || self.nodes[i].inputs.is_empty() {
                continue;
            }
            let inputs = self.nodes[i].inputs.clone();
            let contribs = self.vjp(Var(i), g, &inputs, &needs)?;
            for (p, c) in inputs.iter().zip(contribs) {
                let Some(c) = c else { continue };
                grads[p.0] = Some(match grads[p.0] {
                    Some(prev) => self.add(prev, c)?,
                    None => c,
                });
            }
        }

        wrt.iter()
            .map(|&w| match grads.get(w.0).copied().flatten() {
                Some(g) => Ok(g),
                None => Ok(self.constant_like(w, 0.0)),
            })
            .collect()
    }

    /// Numeric gradients of `out` w.r.t. `wrt`; leaves the tape as it was.
    pub fn grad_values(&mut self, out: Var, seed: &Tensor, wrt: &[Var]) -> Result<Vec<Tensor>> {
        let mark = self.len();
        let res = (|| {
            let s = self.leaf(seed.clone());
            let gs = self.grad(out, Some(s), wrt)?;
            self.check_finite(mark)?;
            Ok(gs.iter().map(|&g| self.value(g).clone()).collect())
        })();
        self.truncate(mark);
        res
    }

    fn vjp(&mut self, y: Var, g: Var, inputs: &[Var], needs: &[bool]) -> Result<Vec<Option<Var>>> {
        let want = |k: usize| needs[inputs[k].0];
        let op = self.nodes[y.0].op.clone();
        let out = match op {
            Op::Leaf => Vec::new(),
            Op::MatMul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = if want(0) {
                    let bt = self.transpose(b)?;
                    Some(self.matmul(g, bt)?)
                } else {
                    None
                };
                let gb = if want(1) {
                    let at = self.transpose(a)?;
                    Some(self.matmul(at, g)?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            Op::Transpose => vec![Some(self.transpose(g)?)],
            Op::Add => vec![Some(g), Some(g)],
            Op::Sub => {
                let gb = if want(1) { Some(self.neg(g)?) } else { None };
                vec![Some(g), gb]
            }
            Op::Mul => {
                let (a, b) = (inputs[0], inputs[1]);
                let ga = if want(0) { Some(self.mul(g, b)?) } else { None };
                let gb = if want(1) { Some(self.mul(g, a)?) } else { None };
                vec![ga, gb]
            }
            Op::Div => {
                let b = inputs[1];
                let ga = if want(0) { Some(self.div(g, b)?) } else { None };
                let gb = if want(1) {
                    // d(a/b)/db = -y/b
                    let yb = self.div(y, b)?;
                    let t = self.mul(g, yb)?;
                    Some(self.neg(t)?)
                } else {
                    None
                };
                vec![ga, gb]
            }
            Op::Affine { scale, .. } => vec![Some(self.scale(g, scale)?)],
            Op::Tanh => {
                let yy = self.mul(y, y)?;
                let d = self.affine(yy, -1.0, 1.0)?;
                vec![Some(self.mul(g, d)?)]
            }
            Op::Relu => {
                let mask = self.value(inputs[0]).map(|x| if x > 0.0 { 1.0 } else { 0.0 });
                let m = self.leaf(mask);
                vec![Some(self.mul(g, m)?)]
            }
            Op::Exp => vec![Some(self.mul(g, y)?)],
            Op::Log => vec![Some(self.div(g, inputs[0])?)],
            Op::Sqrt => {
                let half = self.scale(g, 0.5)?;
                vec![Some(self.div(half, y)?)]
            }
            Op::Sum => {
                let (m, n) = self.shape(inputs[0]);
                let col = self.broadcast_rows(g, m)?;
                vec![Some(self.broadcast_cols(col, n)?)]
            }
            Op::SumRows => {
                let m = self.shape(inputs[0]).0;
                vec![Some(self.broadcast_rows(g, m)?)]
            }
            Op::SumCols => {
                let n = self.shape(inputs[0]).1;
                vec![Some(self.broadcast_cols(g, n)?)]
            }
            Op::BroadcastRows { .. } => vec![Some(self.sum_rows(g)?)],
            Op::BroadcastCols { .. } => vec![Some(self.sum_cols(g)?)],
            Op::Softmax => {
                // y ⊙ (g − rowsum(g ⊙ y))
                let n = self.shape(y).1;
                let gy = self.mul(g, y)?;
                let s = self.sum_cols(gy)?;
                let sb = self.broadcast_cols(s, n)?;
                let d = self.sub(g, sb)?;
                vec![Some(self.mul(y, d)?)]
            }
            Op::LogSoftmax => {
                // g − softmax ⊙ rowsum(g)
                let n = self.shape(y).1;
                let p = self.exp(y)?;
                let s = self.sum_cols(g)?;
                let sb = self.broadcast_cols(s, n)?;
                let t = self.mul(p, sb)?;
                vec![Some(self.sub(g, t)?)]
            }
            Op::SliceCols { start, .. } => {
                let n = self.shape(inputs[0]).1;
                vec![Some(self.pad_cols(g, start, n)?)]
            }
            Op::PadCols { start, .. } => {
                let w = self.shape(inputs[0]).1;
                vec![Some(self.slice_cols(g, start, start + w)?)]
            }
            Op::ConcatCols => {
                let mut off = 0;
                let mut v = Vec::with_capacity(inputs.len());
                for (k, &p) in inputs.iter().enumerate() {
                    let w = self.shape(p).1;
                    v.push(if want(k) {
                        Some(self.slice_cols(g, off, off + w)?)
                    } else {
                        None
                    });
                    off += w;
                }
                v
            }
            Op::Custom(c) => {
                let cts = {
                    let vals: Vec<&Tensor> = inputs.iter().map(|&p| self.value(p)).collect();
                    c.vjp(&vals, self.value(y), self.value(g))
                };
                cts.into_iter()
                    .zip(inputs)
                    .map(|(t, &p)| {
                        let (r, cc) = self.shape(p);
                        let t = t.reshape(vec![r, cc])?;
                        Ok(Some(self.leaf(t)))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Ok(out)
    }
}

fn row_log_softmax(t: &Tensor) -> Tensor {
    let (m, n) = t.dims2();
    let src = t.data();
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &src[i * n..(i + 1) * n];
        let mx = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<f64>().ln();
        for (o, &x) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
            *o = x - lse;
        }
    }
    Tensor::matrix(m, n, out).expect("shape preserved")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let s = t.sum(x).unwrap();
        let g = t.grad_values(s, &Tensor::scalar(1.0), &[x]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 1.0, 1.0]);
        // tape restored
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn half_squared_norm_gradient_is_input() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![0.5, -1.5, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq).unwrap();
        let h = t.scale(s, 0.5).unwrap();
        let g = t.grad_values(h, &Tensor::scalar(1.0), &[x]).unwrap();
        assert_eq!(g[0].data(), &[0.5, -1.5, 2.0]);
    }

    #[test]
    fn second_order_through_tanh() {
        // f(x) = tanh(x); f'' = -2 tanh(x) (1 - tanh²x)
        let mut t = Tape::new();
        let x0 = 0.7_f64;
        let x = t.leaf(Tensor::scalar(x0));
        let y = t.tanh(x).unwrap();
        let g = t.grad(y, None, &[x]).unwrap()[0];
        let h = t.grad_values(g, &Tensor::scalar(1.0), &[x]).unwrap();
        let th = x0.tanh();
        assert!((h[0].data()[0] - (-2.0 * th * (1.0 - th * th))).abs() < 1e-14);
    }

    #[test]
    fn shape_errors_name_the_node() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::zeros(&[2, 3]));
        let b = t.leaf(Tensor::zeros(&[2, 3]));
        match t.matmul(a, b) {
            Err(Error::Dimension { op, node, .. }) => {
                assert_eq!(op, "matmul");
                assert_eq!(node, Some(2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn log_softmax_is_shift_invariant() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(vec![1.0, 2.0, 3.0]));
        let b = t.leaf(Tensor::row(vec![1001.0, 1002.0, 1003.0]));
        let la = t.log_softmax(a).unwrap();
        let lb = t.log_softmax(b).unwrap();
        assert!(close(t.value(la).data(), t.value(lb).data(), 1e-12));
    }

    #[test]
    fn slice_concat_roundtrip_gradient() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(vec![1.0, 2.0, 3.0, 4.0]));
        let l = t.slice_cols(a, 0, 1).unwrap();
        let r = t.slice_cols(a, 1, 4).unwrap();
        let r2 = t.scale(r, 2.0).unwrap();
        let c = t.concat_cols(&[r2, l]).unwrap();
        assert_eq!(t.value(c).data(), &[4.0, 6.0, 8.0, 1.0]);
        let s = t.sum(c).unwrap();
        let g = t.grad_values(s, &Tensor::scalar(1.0), &[a]).unwrap();
        assert_eq!(g[0].data(), &[1.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn non_finite_reported_with_node() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::scalar(-1.0));
        let _ = t.log(a).unwrap();
        match t.check_finite(0) {
            Err(Error::NonFinite { op, node }) => {
                assert_eq!(op, "log");
                assert_eq!(node, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
