//! Reverse-mode differentiation over 2-D tensors.
//!
//! A [`Tape`] records every operation of one forward pass. Parameters are
//! borrowed from a [`ParamStore`] rather than copied; `backward` walks the
//! record in reverse and accumulates parameter gradients into a
//! [`Gradients`] buffer. Every tensor is a matrix; vectors are `1 x n`
//! rows and scalars are `1 x 1`.

use std::sync::Arc;

use ndarray::{s, Array2, Axis};

use super::params::{Gradients, ParamId, ParamStore};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op<F> {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a * b^T`
    MatMulNt(Var, Var),
    Add(Var, Var),
    /// Row vector broadcast over every row.
    AddRow(Var, Var),
    Scale(Var, F),
    Mix {
        a: Var,
        wa: F,
        b: Var,
        wb: F,
    },
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Array2<F>,
        inv_std: Vec<F>,
    },
    Gelu(Var),
    MaskedSoftmax {
        x: Var,
        mask: Arc<[bool]>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    /// Rows of `x` laid side by side into one `1 x (rows * cols)` vector.
    RowsConcat {
        x: Var,
        rows: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    SoftmaxCrossEntropy {
        logits: Var,
        target: Vec<F>,
        probs: Vec<F>,
    },
}

#[derive(Debug)]
struct Node<F> {
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Array2<F>>,
    op: Op<F>,
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_K: f64 = 0.044_715;

/// tanh-approximated GELU.
#[inline]
pub fn gelu<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    let u = F::of(GELU_C) * (x + F::of(GELU_K) * x * x * x);
    half * x * (F::one() + u.tanh())
}

#[inline]
pub fn gelu_grad<F: Scalar>(x: F) -> F {
    let half = F::of(0.5);
    let c = F::of(GELU_C);
    let k = F::of(GELU_K);
    let u = c * (x + k * x * x * x);
    let t = u.tanh();
    half * (F::one() + t) + half * x * (F::one() - t * t) * c * (F::one() + F::of(3.0) * k * x * x)
}

/// Numerically stable softmax of a slice.
pub fn softmax<F: Scalar>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
    let exps: Vec<F> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: F = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub struct Tape<'p, F: Scalar> {
    store: &'p ParamStore<F>,
    nodes: Vec<Node<F>>,
    param_nodes: Vec<Option<Var>>,
}

impl<'p, F: Scalar> Tape<'p, F> {
    pub fn new(store: &'p ParamStore<F>) -> Self {
        Self {
            store,
            nodes: Vec::new(),
            param_nodes: vec![None; store.len()],
        }
    }

    pub fn store(&self) -> &'p ParamStore<F> {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Array2<F> {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(value), _) => value,
            (None, Op::Param(id)) => self.store.value(*id),
            (None, _) => unreachable!("non-parameter node without a value"),
        }
    }

    /// Single element of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> F {
        self.value(v)[[0, 0]]
    }

    fn push(&mut self, value: Array2<F>, op: Op<F>) -> Var {
        self.nodes.push(Node {
            value: Some(value),
            op,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, value: Array2<F>) -> Var {
        self.push(value, Op::Constant)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_nodes[id.0] {
            return v;
        }
        self.nodes.push(Node {
            value: None,
            op: Op::Param(id),
        });
        let v = Var(self.nodes.len() - 1);
        self.param_nodes[id.0] = Some(v);
        v
    }

    fn check(&self, ok: bool, what: &str, a: Var, b: Var) -> Result<()> {
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{what}: {:?} vs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )))
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.value(a).ncols() == self.value(b).nrows(), "matmul", a, b)?;
        let out = self.value(a).dot(self.value(b));
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(
            self.value(a).ncols() == self.value(b).ncols(),
            "matmul_nt",
            a,
            b,
        )?;
        let out = self.value(a).dot(&self.value(b).t());
        Ok(self.push(out, Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(self.value(a).shape() == self.value(b).shape(), "add", a, b)?;
        let out = self.value(a) + self.value(b);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (xv, rv) = (self.value(x), self.value(row));
        self.check(
            rv.nrows() == 1 && rv.ncols() == xv.ncols(),
            "add_row",
            x,
            row,
        )?;
        let out = xv + rv;
        Ok(self.push(out, Op::AddRow(x, row)))
    }

    pub fn scale(&mut self, x: Var, factor: F) -> Var {
        let out = self.value(x).mapv(|v| v * factor);
        self.push(out, Op::Scale(x, factor))
    }

    /// `wa * a + wb * b`, elementwise.
    pub fn mix(&mut self, a: Var, wa: F, b: Var, wb: F) -> Result<Var> {
        self.check(self.value(a).shape() == self.value(b).shape(), "mix", a, b)?;
        let mut out = self.value(a).clone();
        out.zip_mut_with(self.value(b), |x, &y| *x = wa * *x + wb * y);
        Ok(self.push(out, Op::Mix { a, wa, b, wb }))
    }

    /// Row-wise layer normalization with learned gain and bias rows.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: F) -> Result<Var> {
        let xv = self.value(x);
        let cols = xv.ncols();
        self.check(
            self.value(gain).shape() == [1, cols] && self.value(bias).shape() == [1, cols],
            "layer_norm",
            x,
            gain,
        )?;
        let n = F::of(cols as f64);
        let mut normed = Array2::zeros(xv.raw_dim());
        let mut inv_std = Vec::with_capacity(xv.nrows());
        for (row, mut out) in xv.outer_iter().zip(normed.outer_iter_mut()) {
            let mean = row.iter().copied().sum::<F>() / n;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<F>() / n;
            let r = F::one() / (var + eps).sqrt();
            for (o, &v) in out.iter_mut().zip(row.iter()) {
                *o = (v - mean) * r;
            }
            inv_std.push(r);
        }
        let out = &normed * self.value(gain) + self.value(bias);
        Ok(self.push(
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        ))
    }

    pub fn gelu(&mut self, x: Var) -> Var {
        let out = self.value(x).mapv(gelu);
        self.push(out, Op::Gelu(x))
    }

    /// Softmax over each row, restricted to columns whose mask entry is true.
    /// Masked columns get probability exactly zero.
    pub fn masked_softmax(&mut self, x: Var, mask: Arc<[bool]>) -> Result<Var> {
        let xv = self.value(x);
        if mask.len() != xv.ncols() || !mask.iter().any(|&m| m) {
            return Err(Error::Shape(format!(
                "attention mask of {} entries for {} keys",
                mask.len(),
                xv.ncols()
            )));
        }
        let mut out = Array2::zeros(xv.raw_dim());
        for (row, mut o) in xv.outer_iter().zip(out.outer_iter_mut()) {
            let mut max = F::neg_infinity();
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    max = max.max(v);
                }
            }
            let mut sum = F::zero();
            for (j, &v) in row.iter().enumerate() {
                if mask[j] {
                    let e = (v - max).exp();
                    o[j] = e;
                    sum = sum + e;
                }
            }
            o.mapv_inplace(|e| e / sum);
        }
        Ok(self.push(out, Op::MaskedSoftmax { x, mask }))
    }

    /// Embedding lookup: row `ids[i]` of `table` becomes row `i` of the output.
    pub fn gather(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= tv.nrows()) {
            return Err(Error::Shape(format!(
                "row {bad} out of range for a {}-row table",
                tv.nrows()
            )));
        }
        let out = tv.select(Axis(0), ids);
        Ok(self.push(
            out,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn rows_concat(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let xv = self.value(x);
        if let Some(&bad) = rows.iter().find(|&&r| r >= xv.nrows()) {
            return Err(Error::Shape(format!(
                "row {bad} out of range for {} rows",
                xv.nrows()
            )));
        }
        let cols = xv.ncols();
        let mut out = Array2::zeros((1, cols * rows.len()));
        for (k, &r) in rows.iter().enumerate() {
            out.slice_mut(s![0, k * cols..(k + 1) * cols])
                .assign(&xv.row(r));
        }
        Ok(self.push(
            out,
            Op::RowsConcat {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let xv = self.value(x);
        if start + len > xv.ncols() {
            return Err(Error::Shape(format!(
                "columns {start}..{} of {}",
                start + len,
                xv.ncols()
            )));
        }
        let out = xv.slice(s![.., start..start + len]).to_owned();
        Ok(self.push(out, Op::SliceCols { x, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let views: Vec<_> = parts.iter().map(|&p| self.value(p).view()).collect();
        let out = ndarray::concatenate(Axis(1), &views)
            .map_err(|e| Error::Shape(format!("concat_cols: {e}")))?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Cross-entropy `-sum_i target_i * log softmax(logits)_i` for a `1 x C` logit row.
    /// The target need not be one-hot.
    pub fn softmax_cross_entropy(&mut self, logits: Var, target: &[F]) -> Result<Var> {
        let lv = self.value(logits);
        if lv.nrows() != 1 || lv.ncols() != target.len() {
            return Err(Error::Shape(format!(
                "logits {:?} vs target of {}",
                lv.shape(),
                target.len()
            )));
        }
        let row: Vec<F> = lv.row(0).to_vec();
        let max = row.iter().fold(F::neg_infinity(), |m, &v| m.max(v));
        let log_sum = row.iter().map(|&v| (v - max).exp()).sum::<F>().ln() + max;
        let mut loss = F::zero();
        for (&t, &z) in target.iter().zip(&row) {
            if t != F::zero() {
                loss = loss - t * (z - log_sum);
            }
        }
        let probs = row.iter().map(|&z| (z - log_sum).exp()).collect();
        Ok(self.push(
            Array2::from_elem((1, 1), loss),
            Op::SoftmaxCrossEntropy {
                logits,
                target: target.to_vec(),
                probs,
            },
        ))
    }

    /// Accumulates `scale * d(loss)/d(param)` into `grads` for every parameter on the tape.
    pub fn backward(&self, loss: Var, scale: F, grads: &mut Gradients<F>) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::NoRecordedForward);
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::NoRecordedForward);
        }
        if self.value(loss).shape() != [1, 1] {
            return Err(Error::Shape(format!(
                "loss must be 1 x 1, got {:?}",
                self.value(loss).shape()
            )));
        }
        let mut adj: Vec<Option<Array2<F>>> = Vec::with_capacity(loss.0 + 1);
        adj.resize_with(loss.0 + 1, || None);
        adj[loss.0] = Some(Array2::from_elem((1, 1), scale));

        fn acc<F: Scalar>(adj: &mut [Option<Array2<F>>], v: Var, delta: Array2<F>) {
            match &mut adj[v.0] {
                Some(g) => *g += &delta,
                slot @ None => *slot = Some(delta),
            }
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => *grads.get_mut(*id) += &g,
                Op::MatMul(a, b) => {
                    let da = g.dot(&self.value(*b).t());
                    let db = self.value(*a).t().dot(&g);
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::MatMulNt(a, b) => {
                    let da = g.dot(self.value(*b));
                    let db = g.t().dot(self.value(*a));
                    acc(&mut adj, *a, da);
                    acc(&mut adj, *b, db);
                }
                Op::Add(a, b) => {
                    acc(&mut adj, *b, g.clone());
                    acc(&mut adj, *a, g);
                }
                Op::AddRow(x, row) => {
                    let dr = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    acc(&mut adj, *row, dr);
                    acc(&mut adj, *x, g);
                }
                Op::Scale(x, factor) => {
                    let f = *factor;
                    acc(&mut adj, *x, g.mapv(|v| v * f));
                }
                Op::Mix { a, wa, b, wb } => {
                    let (wa, wb) = (*wa, *wb);
                    acc(&mut adj, *b, g.mapv(|v| v * wb));
                    acc(&mut adj, *a, g.mapv(|v| v * wa));
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    normed,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    let dgain = (&g * normed).sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dbias = g.sum_axis(Axis(0)).insert_axis(Axis(0));
                    let dnormed = &g * gv;
                    let cols = normed.ncols();
                    let n = F::of(cols as f64);
                    let mut dx = Array2::zeros(normed.raw_dim());
                    for r in 0..normed.nrows() {
                        let dn = dnormed.row(r);
                        let xh = normed.row(r);
                        let sum_dn: F = dn.iter().copied().sum();
                        let sum_dn_xh: F = dn.iter().zip(xh.iter()).map(|(&a, &b)| a * b).sum();
                        let k = inv_std[r] / n;
                        for c in 0..cols {
                            dx[[r, c]] = k * (n * dn[c] - sum_dn - xh[c] * sum_dn_xh);
                        }
                    }
                    acc(&mut adj, *gain, dgain);
                    acc(&mut adj, *bias, dbias);
                    acc(&mut adj, *x, dx);
                }
                Op::Gelu(x) => {
                    let mut dx = self.value(*x).mapv(gelu_grad);
                    dx *= &g;
                    acc(&mut adj, *x, dx);
                }
                Op::MaskedSoftmax { x, mask } => {
                    let p = node.value.as_ref().expect("softmax value");
                    let mut dx = Array2::zeros(p.raw_dim());
                    for r in 0..p.nrows() {
                        let dot: F = (0..p.ncols()).map(|c| g[[r, c]] * p[[r, c]]).sum();
                        for c in 0..p.ncols() {
                            if mask[c] {
                                dx[[r, c]] = p[[r, c]] * (g[[r, c]] - dot);
                            }
                        }
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::Gather { table, ids } => {
                    let mut dt = Array2::zeros(self.value(*table).raw_dim());
                    for (row, &id) in ids.iter().enumerate() {
                        let mut target = dt.row_mut(id);
                        target += &g.row(row);
                    }
                    acc(&mut adj, *table, dt);
                }
                Op::RowsConcat { x, rows } => {
                    let xv = self.value(*x);
                    let cols = xv.ncols();
                    let mut dx = Array2::zeros(xv.raw_dim());
                    for (k, &r) in rows.iter().enumerate() {
                        let mut target = dx.row_mut(r);
                        target += &g.slice(s![0, k * cols..(k + 1) * cols]);
                    }
                    acc(&mut adj, *x, dx);
                }
                Op::SliceCols { x, start } => {
                    let mut dx = Array2::zeros(self.value(*x).raw_dim());
                    dx.slice_mut(s![.., *start..*start + g.ncols()]).assign(&g);
                    acc(&mut adj, *x, dx);
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let w = self.value(p).ncols();
                        acc(&mut adj, p, g.slice(s![.., offset..offset + w]).to_owned());
                        offset += w;
                    }
                }
                Op::SoftmaxCrossEntropy {
                    logits,
                    target,
                    probs,
                } => {
                    let upstream = g[[0, 0]];
                    let mass: F = target.iter().copied().sum();
                    let dl = Array2::from_shape_fn((1, probs.len()), |(_, c)| {
                        upstream * (probs[c] * mass - target[c])
                    });
                    acc(&mut adj, *logits, dl);
                }
            }
        }
        Ok(())
    }
}
