//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! value and a backward rule. Nodes are appended after their parents, so the
//! node index order is already a topological order and [`Tape::backward`] only
//! has to sweep it in reverse. Gradients accumulate additively across fan-out.

#![allow(clippy::needless_range_loop)]

use std::rc::Rc;

use super::matrix::Matrix;
use crate::error::{contract_err, shape_err, Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Elementwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Relu,
    LeakyRelu(f64),
    Elu,
    Sigmoid,
    Exp,
}

impl Unary {
    fn forward(self, x: f64) -> f64 {
        match self {
            Unary::Relu => x.max(0.0),
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    x
                } else {
                    slope * x
                }
            }
            Unary::Elu => {
                if x > 0.0 {
                    x
                } else {
                    x.exp_m1()
                }
            }
            Unary::Sigmoid => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
            Unary::Exp => x.exp(),
        }
    }

    /// Derivative given input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::LeakyRelu(slope) => {
                if x > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Unary::Elu => {
                if x > 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Unary::Sigmoid => y * (1.0 - y),
            Unary::Exp => y,
        }
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Affine { x: Var, scale: f64 },
    ScaleBy { s: Var, x: Var },
    AddRow { x: Var, row: Var },
    OuterAdd { left: Var, right: Var },
    Unary(Var, Unary),
    Softmax(Var),
    LogSoftmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Matrix, inv_std: Vec<f64> },
    L2Normalize { x: Var, norms: Vec<f64> },
    XLogX(Var),
    Sum(Var),
    SumSquares(Var),
    GatherRows { table: Var, idx: Rc<[usize]> },
    ConcatCols(Vec<Var>),
    SliceRows { x: Var, start: usize },
    Pick { x: Var, at: Vec<(usize, usize)> },
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Hadamard(a, b) => vec![*a, *b],
            Op::Transpose(x)
            | Op::Affine { x, .. }
            | Op::Unary(x, _)
            | Op::Softmax(x)
            | Op::LogSoftmax(x)
            | Op::L2Normalize { x, .. }
            | Op::XLogX(x)
            | Op::Sum(x)
            | Op::SumSquares(x)
            | Op::SliceRows { x, .. }
            | Op::Pick { x, .. } => vec![*x],
            Op::ScaleBy { s, x } => vec![*s, *x],
            Op::AddRow { x, row } => vec![*x, *row],
            Op::OuterAdd { left, right } => vec![*left, *right],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::GatherRows { table, .. } => vec![*table],
            Op::ConcatCols(parts) => parts.clone(),
        }
    }
}

struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
}

/// Gradients produced by one backward sweep, indexed by [`Var`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Matrix> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn accumulate(slot: &mut Option<Matrix>, delta: Matrix) {
    match slot {
        Some(g) => {
            for (a, b) in g.as_mut_slice().iter_mut().zip(delta.as_slice()) {
                *a += b;
            }
        }
        None => *slot = Some(delta),
    }
}

fn softmax_row(src: &[f64], dst: &mut [f64], mask: Option<&[bool]>) {
    let allowed = |j: usize| mask.is_none_or(|m| m[j]);
    let mut max = f64::NEG_INFINITY;
    for (j, &v) in src.iter().enumerate() {
        if allowed(j) && v > max {
            max = v;
        }
    }
    let mut total = 0.0;
    for (j, (d, &v)) in dst.iter_mut().zip(src).enumerate() {
        *d = if allowed(j) { (v - max).exp() } else { 0.0 };
        total += *d;
    }
    for d in dst.iter_mut() {
        *d /= total;
    }
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

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    /// A value that never receives gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: false });
        Var(self.nodes.len() - 1)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.nodes.push(Node { value, op: Op::Leaf, requires_grad: true });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Var {
        let value = self.value(x).transpose();
        self.push(value, Op::Transpose(x))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).sub(self.value(b))?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        self.push(value, Op::Affine { x, scale })
    }

    pub fn scale(&mut self, x: Var, scale: f64) -> Var {
        self.affine(x, scale, 0.0)
    }

    /// Multiplies `x` by the 1x1 node `s`.
    pub fn scale_by(&mut self, s: Var, x: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            let (r, c) = self.value(s).shape();
            return Err(shape_err("scale_by", format!("scale must be 1x1, got {r}x{c}")));
        }
        let k = self.value(s).item();
        let value = self.value(x).scale(k);
        Ok(self.push(value, Op::ScaleBy { s, x }))
    }

    /// Adds the 1xc row to every row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xm, rm) = (self.value(x), self.value(row));
        if rm.rows() != 1 || rm.cols() != xm.cols() {
            return Err(shape_err(
                "add_row",
                format!("cannot broadcast {}x{} over {}x{}", rm.rows(), rm.cols(), xm.rows(), xm.cols()),
            ));
        }
        let mut value = xm.clone();
        for r in 0..value.rows() {
            for (v, b) in value.row_mut(r).iter_mut().zip(rm.as_slice()) {
                *v += b;
            }
        }
        Ok(self.push(value, Op::AddRow { x, row }))
    }

    /// `out[i,j] = left[i] + right[j]` for column vectors `left` (n) and `right` (m).
    pub fn outer_add(&mut self, left: Var, right: Var) -> Result<Var> {
        let (l, r) = (self.value(left), self.value(right));
        if l.cols() != 1 || r.cols() != 1 {
            return Err(shape_err(
                "outer_add",
                format!("operands must be columns, got {}x{} and {}x{}", l.rows(), l.cols(), r.rows(), r.cols()),
            ));
        }
        let value = Matrix::from_fn(l.rows(), r.rows(), |i, j| l.get(i, 0) + r.get(j, 0));
        Ok(self.push(value, Op::OuterAdd { left, right }))
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> Var {
        let value = self.value(x).map(|v| f.forward(v));
        self.push(value, Op::Unary(x, f))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Relu)
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, Unary::LeakyRelu(slope))
    }

    pub fn elu(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Elu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Sigmoid)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, Unary::Exp)
    }

    /// Row-wise softmax with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = Matrix::zeros(src.rows(), src.cols());
        for r in 0..src.rows() {
            softmax_row(src.row(r), value.row_mut(r), None);
        }
        self.push(value, Op::Softmax(x))
    }

    /// Row-wise softmax restricted to entries where `mask` (row-major, same
    /// shape as `x`) is true. Masked-out entries are exactly zero.
    pub fn masked_softmax_rows(&mut self, x: Var, mask: &[bool]) -> Result<Var> {
        let src = self.value(x);
        if mask.len() != src.len() {
            return Err(shape_err(
                "masked_softmax_rows",
                format!("mask has {} entries for a {}x{} input", mask.len(), src.rows(), src.cols()),
            ));
        }
        let cols = src.cols();
        let mut value = Matrix::zeros(src.rows(), cols);
        for r in 0..src.rows() {
            let row_mask = &mask[r * cols..(r + 1) * cols];
            if !row_mask.iter().any(|&m| m) {
                return Err(contract_err("masked_softmax_rows", format!("row {r} has an empty support")));
            }
            softmax_row(src.row(r), value.row_mut(r), Some(row_mask));
        }
        // The backward rule of a plain softmax is exact here: masked entries
        // have zero output and therefore zero gradient.
        Ok(self.push(value, Op::Softmax(x)))
    }

    pub fn log_softmax_rows(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let mut value = src.clone();
        for r in 0..src.rows() {
            let row = value.row_mut(r);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push(value, Op::LogSoftmax(x))
    }

    /// Per-row standardisation (population variance, `eps` under the root)
    /// followed by `gain` and `bias`, both 1xd.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (src, g, b) = (self.value(x), self.value(gain), self.value(bias));
        let d = src.cols();
        if g.shape() != (1, d) || b.shape() != (1, d) {
            return Err(shape_err(
                "layer_norm",
                format!("gain {}x{} / bias {}x{} do not match width {d}", g.rows(), g.cols(), b.rows(), b.cols()),
            ));
        }
        let mut xhat = Matrix::zeros(src.rows(), d);
        let mut inv_std = Vec::with_capacity(src.rows());
        let mut value = Matrix::zeros(src.rows(), d);
        for r in 0..src.rows() {
            let row = src.row(r);
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std.push(inv);
            for c in 0..d {
                let h = (row[c] - mean) * inv;
                xhat.set(r, c, h);
                value.set(r, c, h * g.get(0, c) + b.get(0, c));
            }
        }
        Ok(self.push(value, Op::LayerNorm { x, gain, bias, xhat, inv_std }))
    }

    /// Divides each row by `sqrt(‖row‖² + eps²)`; zero rows stay zero.
    pub fn l2_normalize_rows(&mut self, x: Var, eps: f64) -> Var {
        let src = self.value(x);
        let mut value = src.clone();
        let mut norms = Vec::with_capacity(src.rows());
        for r in 0..src.rows() {
            let row = value.row_mut(r);
            let s = (row.iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt();
            norms.push(s);
            row.iter_mut().for_each(|v| *v /= s);
        }
        self.push(value, Op::L2Normalize { x, norms })
    }

    /// Elementwise `x·ln x` with `0·ln 0 = 0`.
    pub fn xlogx(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v * v.ln() } else { 0.0 });
        self.push(value, Op::XLogX(x))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1) as f64;
        let s = self.sum(x);
        self.scale(s, 1.0 / n)
    }

    /// Squared Frobenius norm as a 1x1 node.
    pub fn sum_squares(&mut self, x: Var) -> Var {
        let value = Matrix::scalar(self.value(x).frobenius_sq());
        self.push(value, Op::SumSquares(x))
    }

    /// Embedding lookup: output row `r` is `table[idx[r]]`.
    pub fn gather_rows(&mut self, table: Var, idx: impl Into<Rc<[usize]>>) -> Result<Var> {
        let idx: Rc<[usize]> = idx.into();
        let t = self.value(table);
        if let Some(&bad) = idx.iter().find(|&&i| i >= t.rows()) {
            return Err(shape_err("gather_rows", format!("row {bad} out of range for {} rows", t.rows())));
        }
        let value = t.select_rows(&idx);
        Ok(self.push(value, Op::GatherRows { table, idx }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(first) = parts.first() else {
            return Err(shape_err("concat_cols", "no operands"));
        };
        let rows = self.value(*first).rows();
        if let Some(p) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(shape_err(
                "concat_cols",
                format!("operand has {} rows, expected {rows}", self.value(*p).rows()),
            ));
        }
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut value = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut offset = 0;
            for p in parts {
                let src = self.value(*p).row(r);
                value.row_mut(r)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec())))
    }

    /// Rows `start..start + len` of `x`.
    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let src = self.value(x);
        if start + len > src.rows() {
            return Err(shape_err(
                "slice_rows",
                format!("rows {start}..{} out of range for {} rows", start + len, src.rows()),
            ));
        }
        let idx: Vec<usize> = (start..start + len).collect();
        let value = src.select_rows(&idx);
        Ok(self.push(value, Op::SliceRows { x, start }))
    }

    /// Column vector of the entries `x[r, c]` for each `(r, c)` in `at`.
    pub fn pick(&mut self, x: Var, at: Vec<(usize, usize)>) -> Result<Var> {
        let src = self.value(x);
        if let Some(&(r, c)) = at.iter().find(|&&(r, c)| r >= src.rows() || c >= src.cols()) {
            return Err(shape_err("pick", format!("entry ({r},{c}) out of range for {}x{}", src.rows(), src.cols())));
        }
        let values: Vec<f64> = at.iter().map(|&(r, c)| src.get(r, c)).collect();
        let value = Matrix::column(&values);
        Ok(self.push(value, Op::Pick { x, at }))
    }

    /// Reverse sweep from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(contract_err(
                "backward",
                format!("loss must be a 1x1 scalar, got {}x{}", lv.rows(), lv.cols()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                grads[idx] = Some(g);
                continue;
            }
            if !g.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient at tape node {idx}")));
            }
            self.propagate(node, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, node: &Node, g: &Matrix, grads: &mut [Option<Matrix>]) -> Result<()> {
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.matmul_t(self.value(*b))?);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], self.value(*a).t_matmul(g)?);
                }
            }
            Op::Transpose(x) => accumulate(&mut grads[x.0], g.transpose()),
            Op::Add(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.clone());
                }
            }
            Op::Sub(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.clone());
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.scale(-1.0));
                }
            }
            Op::Hadamard(a, b) => {
                if self.wants(*a) {
                    accumulate(&mut grads[a.0], g.hadamard(self.value(*b))?);
                }
                if self.wants(*b) {
                    accumulate(&mut grads[b.0], g.hadamard(self.value(*a))?);
                }
            }
            Op::Affine { x, scale } => accumulate(&mut grads[x.0], g.scale(*scale)),
            Op::ScaleBy { s, x } => {
                if self.wants(*s) {
                    let ds = g.hadamard(self.value(*x))?.sum();
                    accumulate(&mut grads[s.0], Matrix::scalar(ds));
                }
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.scale(self.value(*s).item()));
                }
            }
            Op::AddRow { x, row } => {
                if self.wants(*x) {
                    accumulate(&mut grads[x.0], g.clone());
                }
                if self.wants(*row) {
                    let mut col_sums = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[row.0], col_sums);
                }
            }
            Op::OuterAdd { left, right } => {
                if self.wants(*left) {
                    accumulate(&mut grads[left.0], Matrix::column(&g.row_sums()));
                }
                if self.wants(*right) {
                    let mut col_sums = vec![0.0; g.cols()];
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[right.0], Matrix::column(&col_sums));
                }
            }
            Op::Unary(x, f) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for ((d, &xi), &yi) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()).zip(node.value.as_slice()) {
                    *d *= f.derivative(xi, yi);
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::Softmax(x) => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = yr[c] * (gr[c] - dot);
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::LogSoftmax(x) => {
                let y = &node.value;
                let mut dx = g.clone();
                for r in 0..y.rows() {
                    let total: f64 = g.row(r).iter().sum();
                    for (d, &lp) in dx.row_mut(r).iter_mut().zip(y.row(r)) {
                        *d -= lp.exp() * total;
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::LayerNorm { x, gain, bias, xhat, inv_std } => {
                let d = xhat.cols();
                let gv = self.value(*gain);
                if self.wants(*gain) {
                    let mut dg = Matrix::zeros(1, d);
                    for r in 0..g.rows() {
                        for c in 0..d {
                            dg.as_mut_slice()[c] += g.get(r, c) * xhat.get(r, c);
                        }
                    }
                    accumulate(&mut grads[gain.0], dg);
                }
                if self.wants(*bias) {
                    let mut db = Matrix::zeros(1, d);
                    for r in 0..g.rows() {
                        for (s, v) in db.as_mut_slice().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    accumulate(&mut grads[bias.0], db);
                }
                if self.wants(*x) {
                    let mut dx = Matrix::zeros(g.rows(), d);
                    for r in 0..g.rows() {
                        let dxhat: Vec<f64> = (0..d).map(|c| g.get(r, c) * gv.get(0, c)).collect();
                        let sum_d: f64 = dxhat.iter().sum();
                        let sum_dx: f64 = dxhat.iter().zip(xhat.row(r)).map(|(a, b)| a * b).sum();
                        let inv = inv_std[r];
                        for c in 0..d {
                            let v = inv / d as f64 * (d as f64 * dxhat[c] - sum_d - xhat.get(r, c) * sum_dx);
                            dx.set(r, c, v);
                        }
                    }
                    accumulate(&mut grads[x.0], dx);
                }
            }
            Op::L2Normalize { x, norms } => {
                let y = &node.value;
                let mut dx = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), g.row(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for (c, d) in dx.row_mut(r).iter_mut().enumerate() {
                        *d = (gr[c] - yr[c] * dot) / norms[r];
                    }
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::XLogX(x) => {
                let xv = self.value(*x);
                let mut dx = g.clone();
                for (d, &v) in dx.as_mut_slice().iter_mut().zip(xv.as_slice()) {
                    *d *= if v > 0.0 { v.ln() + 1.0 } else { 0.0 };
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::Sum(x) => {
                let (r, c) = self.value(*x).shape();
                accumulate(&mut grads[x.0], Matrix::filled(r, c, g.item()));
            }
            Op::SumSquares(x) => {
                accumulate(&mut grads[x.0], self.value(*x).scale(2.0 * g.item()));
            }
            Op::GatherRows { table, idx } => {
                let (rows, cols) = self.value(*table).shape();
                let mut dt = Matrix::zeros(rows, cols);
                for (r, &i) in idx.iter().enumerate() {
                    for (d, v) in dt.row_mut(i).iter_mut().zip(g.row(r)) {
                        *d += v;
                    }
                }
                accumulate(&mut grads[table.0], dt);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = self.value(*p).shape();
                    if self.wants(*p) {
                        let dp = Matrix::from_fn(rows, cols, |r, c| g.get(r, offset + c));
                        accumulate(&mut grads[p.0], dp);
                    }
                    offset += cols;
                }
            }
            Op::SliceRows { x, start } => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..g.rows() {
                    dx.row_mut(start + r).copy_from_slice(g.row(r));
                }
                accumulate(&mut grads[x.0], dx);
            }
            Op::Pick { x, at } => {
                let (rows, cols) = self.value(*x).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for (k, &(r, c)) in at.iter().enumerate() {
                    let cur = dx.get(r, c);
                    dx.set(r, c, cur + g.get(k, 0));
                }
                accumulate(&mut grads[x.0], dx);
            }
        }
        Ok(())
    }
}
