//! Reverse-mode differentiation over a recorded log of matrix operations.
//!
//! A [`Tape`] is built fresh for every forward pass. Leaves are either
//! constants (adjacency matrices, masks, targets) or trainable parameters.
//! Every primitive appends one node holding its value and operand ids, so the
//! log is acyclic and topologically ordered by construction. [`Tape::backward`]
//! walks it once in reverse, accumulating adjoints.

use std::sync::Arc;

use crate::error::{shape_err, Error, Result};
use crate::matrix::DenseMatrix;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Constant,
    Param,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Transpose(Var),
    ConcatCols(Var, Var),
    Relu(Var),
    Elu(Var),
    Sigmoid(Var),
    MaskedSoftmaxRow(Var, Arc<Vec<bool>>),
    GatherRows(Var, Arc<Vec<usize>>),
    OverwriteRows { base: Var, rows: Var, idx: Arc<Vec<usize>> },
    RmsDiff(Var, Var),
    Sum(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: DenseMatrix,
    op: Op,
}

/// Operation log for one forward pass.
#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn elu(x: f64) -> f64 {
    if x < 0.0 {
        x.exp_m1()
    } else {
        x
    }
}

pub fn relu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        0.0
    }
}

/// Row-wise softmax restricted to entries where `mask` is true; masked
/// entries come out as exactly zero.
pub fn masked_softmax_rows(x: &DenseMatrix, mask: &[bool]) -> Result<DenseMatrix> {
    if mask.len() != x.len() {
        return shape_err("masked_softmax_row", format!("mask {} vs {}", mask.len(), x.len()));
    }
    let cols = x.cols();
    let mut out = DenseMatrix::zeros(x.rows(), cols);
    for r in 0..x.rows() {
        let row = x.row(r);
        let m = &mask[r * cols..(r + 1) * cols];
        let mut max = f64::NEG_INFINITY;
        for (&v, &on) in row.iter().zip(m) {
            if on && v > max {
                max = v;
            }
        }
        if max == f64::NEG_INFINITY {
            return Err(Error::DegenerateSoftmax { row: r });
        }
        let o = out.row_mut(r);
        let mut total = 0.0;
        for j in 0..cols {
            if m[j] {
                let e = (row[j] - max).exp();
                o[j] = e;
                total += e;
            }
        }
        for (j, v) in o.iter_mut().enumerate() {
            if m[j] {
                *v /= total;
            }
        }
    }
    Ok(out)
}

fn rms_diff(a: &DenseMatrix, t: &DenseMatrix) -> f64 {
    let n = a.len() as f64;
    let ss: f64 = a.as_slice().iter().zip(t.as_slice()).map(|(x, y)| (x - y) * (x - y)).sum();
    (ss / n).sqrt()
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

    fn push(&mut self, value: DenseMatrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(value, Op::Param)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[v.0].value
    }

    pub fn is_param(&self, v: Var) -> bool {
        matches!(self.nodes[v.0].op, Op::Param)
    }

    /// All trainable leaves in recording order.
    pub fn params(&self) -> Vec<Var> {
        (0..self.nodes.len()).filter(|&i| matches!(self.nodes[i].op, Op::Param)).map(Var).collect()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(v, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(v, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).sub(self.value(b))?;
        Ok(self.push(v, Op::Sub(a, b)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(v, Op::Hadamard(a, b)))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a).scale(s);
        self.push(v, Op::Scale(a, s))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(v, Op::Transpose(a))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.value(a).concat_cols(self.value(b))?;
        Ok(self.push(v, Op::ConcatCols(a, b)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(relu);
        self.push(v, Op::Relu(a))
    }

    pub fn elu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(elu);
        self.push(v, Op::Elu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn masked_softmax_row(&mut self, a: Var, mask: Arc<Vec<bool>>) -> Result<Var> {
        let v = masked_softmax_rows(self.value(a), &mask)?;
        Ok(self.push(v, Op::MaskedSoftmaxRow(a, mask)))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let v = self.value(a).gather_rows(&idx)?;
        Ok(self.push(v, Op::GatherRows(a, idx)))
    }

    /// Copy of `base` with row `idx[i]` replaced by row `i` of `rows`.
    pub fn overwrite_rows(&mut self, base: Var, rows: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let (b, r) = (self.value(base), self.value(rows));
        if b.cols() != r.cols() || r.rows() != idx.len() {
            return shape_err(
                "overwrite_rows",
                format!("base {:?}, rows {:?}, {} indices", b.shape(), r.shape(), idx.len()),
            );
        }
        let mut out = b.clone();
        for (i, &target) in idx.iter().enumerate() {
            if target >= out.rows() {
                return shape_err("overwrite_rows", format!("row {target} of {}", out.rows()));
            }
            out.row_mut(target).copy_from_slice(r.row(i));
        }
        Ok(self.push(out, Op::OverwriteRows { base, rows, idx }))
    }

    /// `sqrt(mean((a - target)^2))` as a 1x1 value.
    pub fn rms_diff(&mut self, a: Var, target: Var) -> Result<Var> {
        self.value(a).same_shape("rms_diff", self.value(target))?;
        let v = rms_diff(self.value(a), self.value(target));
        Ok(self.push(DenseMatrix::scalar(v), Op::RmsDiff(a, target)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = self.value(a).sum();
        self.push(DenseMatrix::scalar(v), Op::Sum(a))
    }

    /// Adjoints of `loss` with respect to every recorded node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).shape() != (1, 1) {
            return Err(Error::Contract(format!(
                "backward needs a scalar terminal, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<DenseMatrix>> = vec![None; self.nodes.len()];
        adj[loss.0] = Some(DenseMatrix::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant | Op::Param => {
                    adj[i] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul(&self.value(*b).transpose())?;
                    let gb = self.value(*a).transpose().matmul(&g)?;
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, g.clone())?;
                    accumulate(&mut adj, *b, g)?;
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *b, g.scale(-1.0))?;
                    accumulate(&mut adj, *a, g)?;
                }
                Op::Hadamard(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::Scale(a, s) => accumulate(&mut adj, *a, g.scale(*s))?,
                Op::Transpose(a) => accumulate(&mut adj, *a, g.transpose())?,
                Op::ConcatCols(a, b) => {
                    let ca = self.value(*a).cols();
                    let cb = self.value(*b).cols();
                    let mut ga = DenseMatrix::zeros(g.rows(), ca);
                    let mut gb = DenseMatrix::zeros(g.rows(), cb);
                    for r in 0..g.rows() {
                        ga.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                        gb.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
                    }
                    accumulate(&mut adj, *a, ga)?;
                    accumulate(&mut adj, *b, gb)?;
                }
                Op::Relu(a) => {
                    let d = g.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 })?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Elu(a) => {
                    let d = g.zip_map(self.value(*a), |g, x| if x < 0.0 { g * x.exp() } else { g })?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Sigmoid(a) => {
                    let d = g.zip_map(&node.value, |g, y| g * y * (1.0 - y))?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::MaskedSoftmaxRow(a, mask) => {
                    let y = &node.value;
                    let cols = y.cols();
                    let mut d = DenseMatrix::zeros(y.rows(), cols);
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = g.row(r);
                        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        let m = &mask[r * cols..(r + 1) * cols];
                        let dr = d.row_mut(r);
                        for j in 0..cols {
                            if m[j] {
                                dr[j] = yr[j] * (gr[j] - dot);
                            }
                        }
                    }
                    accumulate(&mut adj, *a, d)?;
                }
                Op::GatherRows(a, idx) => {
                    let src = self.value(*a);
                    let mut d = DenseMatrix::zeros(src.rows(), src.cols());
                    for (o, &r) in idx.iter().enumerate() {
                        for (dv, gv) in d.row_mut(r).iter_mut().zip(g.row(o)) {
                            *dv += gv;
                        }
                    }
                    accumulate(&mut adj, *a, d)?;
                }
                Op::OverwriteRows { base, rows, idx } => {
                    let mut gbase = g.clone();
                    let mut grows = DenseMatrix::zeros(idx.len(), g.cols());
                    for (i, &target) in idx.iter().enumerate() {
                        grows.row_mut(i).copy_from_slice(g.row(target));
                        gbase.row_mut(target).iter_mut().for_each(|v| *v = 0.0);
                    }
                    accumulate(&mut adj, *base, gbase)?;
                    accumulate(&mut adj, *rows, grows)?;
                }
                Op::RmsDiff(a, t) => {
                    let l = node.value.item();
                    let gs = g.item();
                    let n = self.value(*a).len() as f64;
                    let coeff = if l > 0.0 { gs / (n * l) } else { 0.0 };
                    let d = self.value(*a).zip_map(self.value(*t), |x, y| coeff * (x - y))?;
                    accumulate(&mut adj, *t, d.scale(-1.0))?;
                    accumulate(&mut adj, *a, d)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(*a).shape();
                    accumulate(&mut adj, *a, DenseMatrix::filled(r, c, g.item()))?;
                }
            }
        }

        Ok(Gradients { adj })
    }
}

fn accumulate(adj: &mut [Option<DenseMatrix>], v: Var, g: DenseMatrix) -> Result<()> {
    match &mut adj[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

/// Result of [`Tape::backward`]. Leaves that the loss does not depend on
/// have no entry; [`Gradients::get_or_zeros`] fills those in.
#[derive(Debug)]
pub struct Gradients {
    adj: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        self.adj.get(v.0).and_then(Option::as_ref)
    }

    pub fn get_or_zeros(&self, tape: &Tape, v: Var) -> DenseMatrix {
        self.get(v).cloned().unwrap_or_else(|| {
            let (r, c) = tape.value(v).shape();
            DenseMatrix::zeros(r, c)
        })
    }
}
