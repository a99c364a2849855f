//! Reverse-mode differentiation over a per-forward-pass tape.
//!
//! Every op appends a node holding its forward value. `backward` walks the
//! nodes once in reverse insertion order, which is a valid reverse
//! topological order because inputs always precede their consumers.

use std::sync::Arc;

use crate::error::{mismatch, TensorError};
use crate::tensor::{gemm, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Shared index list (edge endpoints, segment ids) reused across tapes.
pub type Indices = Arc<[usize]>;

#[derive(Debug)]
enum Op {
    Leaf,
    Matmul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat(Vec<Var>),
    RowGather(Var, Indices),
    SegmentSum(Var, Indices),
    LeakyRelu(Var, f64),
    Elu(Var),
    Exp(Var),
    Log(Var),
    SoftmaxBySegment(Var, Indices),
    Sum(Var),
    MseLoss {
        pred: Var,
        target: Tensor,
        mask: Option<Tensor>,
    },
    BceWithLogits {
        logits: Var,
        target: Tensor,
        mask: Option<Tensor>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    /// Moves a gradient out, returning zeros shaped like `like` when the
    /// variable did not influence the loss.
    pub fn take_or_zeros(&mut self, var: Var, like: &Tensor) -> Tensor {
        self.grads
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(like.rows(), like.cols()))
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

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// A trainable input: gradients flow into it.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A fixed input: no gradient is accumulated for it.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.value(a).require_matrix("matmul")?;
        let (k2, n) = self.value(b).require_matrix("matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", format!("[{m}x{k}] · [{k2}x{n}]")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            self.value(a).data(),
            false,
            self.value(b).data(),
            false,
            &mut out,
            0.0,
        );
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::Matmul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(mismatch("add", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    /// Adds a `1xC` row to every row of an `NxC` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, TensorError> {
        let (n, c) = self.value(x).require_matrix("add_row")?;
        let (r, c2) = self.value(row).require_matrix("add_row")?;
        if r != 1 || c != c2 {
            return Err(mismatch("add_row", format!("[{n}x{c}] + [{r}x{c2}]")));
        }
        let b = self.value(row).data().to_vec();
        let mut data = self.value(x).data().to_vec();
        for chunk in data.chunks_mut(c.max(1)) {
            for (v, bias) in chunk.iter_mut().zip(&b) {
                *v += bias;
            }
        }
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(Tensor::matrix(n, c, data)?, Op::AddRow(x, row), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (va, vb) = (self.value(a), self.value(b));
        if !va.same_shape(vb) {
            return Err(mismatch("mul", format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.rg(x);
        self.push(value, Op::Scale(x, factor), rg)
    }

    /// Column-wise concatenation of matrices with equal row counts.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| mismatch("concat", "no inputs"))?;
        let rows = self.value(*first).require_matrix("concat")?.0;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.value(p).require_matrix("concat")?;
            if r != rows {
                return Err(mismatch("concat", format!("row counts {rows} and {r}")));
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(Tensor::matrix(rows, total, data)?, Op::Concat(parts.to_vec()), rg))
    }

    /// Selects rows of `x` by index (repeats allowed).
    pub fn row_gather(&mut self, x: Var, index: &Indices) -> Result<Var, TensorError> {
        let (n, c) = self.value(x).require_matrix("row_gather")?;
        let mut data = Vec::with_capacity(index.len() * c);
        let src = self.value(x);
        for &i in index.iter() {
            if i >= n {
                return Err(TensorError::IndexOutOfRange {
                    op: "row_gather",
                    index: i,
                    len: n,
                });
            }
            data.extend_from_slice(src.row(i));
        }
        let rg = self.rg(x);
        let value = Tensor::matrix(index.len(), c, data)?;
        Ok(self.push(value, Op::RowGather(x, index.clone()), rg))
    }

    /// Sums rows of `x` into `segments` output rows; row `e` goes to `segment_ids[e]`.
    pub fn segment_sum(
        &mut self,
        x: Var,
        segment_ids: &Indices,
        segments: usize,
    ) -> Result<Var, TensorError> {
        let (n, c) = self.value(x).require_matrix("segment_sum")?;
        if segment_ids.len() != n {
            return Err(mismatch(
                "segment_sum",
                format!("{} segment ids for {n} rows", segment_ids.len()),
            ));
        }
        let mut out = vec![0.0; segments * c];
        let src = self.value(x);
        for (e, &s) in segment_ids.iter().enumerate() {
            if s >= segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "segment_sum",
                    index: s,
                    len: segments,
                });
            }
            for (o, v) in out[s * c..(s + 1) * c].iter_mut().zip(src.row(e)) {
                *o += v;
            }
        }
        let rg = self.rg(x);
        let value = Tensor::matrix(segments, c, out)?;
        Ok(self.push(value, Op::SegmentSum(x, segment_ids.clone()), rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { slope * v });
        let rg = self.rg(x);
        self.push(value, Op::LeakyRelu(x, slope), rg)
    }

    pub fn elu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > 0.0 { v } else { v.exp_m1() });
        let rg = self.rg(x);
        self.push(value, Op::Elu(x), rg)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(f64::exp);
        let rg = self.rg(x);
        self.push(value, Op::Exp(x), rg)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        if let Some(&bad) = self.value(x).data().iter().find(|&&v| v <= 0.0 || v.is_nan()) {
            return Err(TensorError::Domain { op: "log", value: bad });
        }
        let value = self.value(x).map(f64::ln);
        let rg = self.rg(x);
        Ok(self.push(value, Op::Log(x), rg))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    ///
    /// Every segment in `0..segments` must own at least one row.
    pub fn softmax_by_segment(
        &mut self,
        x: Var,
        segment_ids: &Indices,
        segments: usize,
    ) -> Result<Var, TensorError> {
        let (n, c) = self.value(x).require_matrix("softmax_by_segment")?;
        if segment_ids.len() != n {
            return Err(mismatch(
                "softmax_by_segment",
                format!("{} segment ids for {n} rows", segment_ids.len()),
            ));
        }
        let mut count = vec![0usize; segments];
        for &s in segment_ids.iter() {
            if s >= segments {
                return Err(TensorError::IndexOutOfRange {
                    op: "softmax_by_segment",
                    index: s,
                    len: segments,
                });
            }
            count[s] += 1;
        }
        if let Some(empty) = count.iter().position(|&k| k == 0) {
            return Err(TensorError::EmptySegment {
                op: "softmax_by_segment",
                segment: empty,
            });
        }
        let src = self.value(x);
        let mut max = vec![f64::NEG_INFINITY; segments * c];
        for (e, &s) in segment_ids.iter().enumerate() {
            for (m, &v) in max[s * c..(s + 1) * c].iter_mut().zip(src.row(e)) {
                *m = m.max(v);
            }
        }
        let mut out = vec![0.0; n * c];
        let mut denom = vec![0.0; segments * c];
        for (e, &s) in segment_ids.iter().enumerate() {
            for j in 0..c {
                let v = (src.row(e)[j] - max[s * c + j]).exp();
                out[e * c + j] = v;
                denom[s * c + j] += v;
            }
        }
        for (e, &s) in segment_ids.iter().enumerate() {
            for j in 0..c {
                out[e * c + j] /= denom[s * c + j];
            }
        }
        let rg = self.rg(x);
        let value = Tensor::matrix(n, c, out)?;
        Ok(self.push(value, Op::SoftmaxBySegment(x, segment_ids.clone()), rg))
    }

    /// Sum of all entries as a `1x1` tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum(x), rg)
    }

    /// Mean squared error over the entries where `mask` is non-zero (all entries without a mask).
    pub fn mse_loss(
        &mut self,
        pred: Var,
        target: Tensor,
        mask: Option<Tensor>,
    ) -> Result<Var, TensorError> {
        let p = self.value(pred);
        check_loss_shapes("mse_loss", p, &target, mask.as_ref())?;
        let (mut total, mut count) = (0.0, 0.0);
        for (i, (&y, &t)) in p.data().iter().zip(target.data()).enumerate() {
            let w = mask.as_ref().map_or(1.0, |m| m.data()[i]);
            total += w * (y - t) * (y - t);
            count += w;
        }
        let loss = if count > 0.0 { total / count } else { 0.0 };
        let rg = self.rg(pred);
        Ok(self.push(Tensor::scalar(loss), Op::MseLoss { pred, target, mask }, rg))
    }

    /// Numerically stable binary cross-entropy on logits, averaged over unmasked entries.
    pub fn bce_with_logits_loss(
        &mut self,
        logits: Var,
        target: Tensor,
        mask: Option<Tensor>,
    ) -> Result<Var, TensorError> {
        let x = self.value(logits);
        check_loss_shapes("bce_with_logits_loss", x, &target, mask.as_ref())?;
        let (mut total, mut count) = (0.0, 0.0);
        for (i, (&z, &t)) in x.data().iter().zip(target.data()).enumerate() {
            let w = mask.as_ref().map_or(1.0, |m| m.data()[i]);
            total += w * (z.max(0.0) - z * t + (-z.abs()).exp().ln_1p());
            count += w;
        }
        let loss = if count > 0.0 { total / count } else { 0.0 };
        let rg = self.rg(logits);
        Ok(self.push(
            Tensor::scalar(loss),
            Op::BceWithLogits {
                logits,
                target,
                mask,
            },
            rg,
        ))
    }

    /// Back-propagates from a `1x1` output.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let out = self.value(loss);
        if out.len() != 1 {
            return Err(TensorError::NotScalar(out.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], var: Var, delta: Tensor) -> Result<(), TensorError> {
        if !self.rg(var) {
            return Ok(());
        }
        match &mut grads[var.0] {
            Some(existing) => existing.add_assign(&delta)?,
            slot @ None => *slot = Some(delta),
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<(), TensorError> {
        let node = &self.nodes[id];
        match &node.op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                let (m, k, n) = (va.rows(), va.cols(), vb.cols());
                if self.rg(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, vb.data(), true, &mut da, 0.0);
                    self.accumulate(grads, *a, Tensor::matrix(m, k, da)?)?;
                }
                if self.rg(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, va.data(), true, g.data(), false, &mut db, 0.0);
                    self.accumulate(grads, *b, Tensor::matrix(k, n, db)?)?;
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone())?;
                self.accumulate(grads, *b, g.clone())?;
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g.clone())?;
                if self.rg(*row) {
                    let c = g.cols();
                    let mut db = vec![0.0; c];
                    for r in 0..g.rows() {
                        for (d, v) in db.iter_mut().zip(g.row(r)) {
                            *d += v;
                        }
                    }
                    self.accumulate(grads, *row, Tensor::matrix(1, c, db)?)?;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let d = g.data().iter().zip(vb.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, Tensor::new(g.shape().to_vec(), d)?)?;
                }
                if self.rg(*b) {
                    let d = g.data().iter().zip(va.data()).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, Tensor::new(g.shape().to_vec(), d)?)?;
                }
            }
            Op::Scale(x, f) => self.accumulate(grads, *x, g.map(|v| v * f))?,
            Op::Concat(parts) => {
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.rg(p) {
                        let mut d = Vec::with_capacity(rows * w);
                        for r in 0..rows {
                            d.extend_from_slice(&g.row(r)[offset..offset + w]);
                        }
                        self.accumulate(grads, p, Tensor::matrix(rows, w, d)?)?;
                    }
                    offset += w;
                }
            }
            Op::RowGather(x, index) => {
                if self.rg(*x) {
                    let (n, c) = (self.value(*x).rows(), g.cols());
                    let mut d = vec![0.0; n * c];
                    for (e, &i) in index.iter().enumerate() {
                        for (o, v) in d[i * c..(i + 1) * c].iter_mut().zip(g.row(e)) {
                            *o += v;
                        }
                    }
                    self.accumulate(grads, *x, Tensor::matrix(n, c, d)?)?;
                }
            }
            Op::SegmentSum(x, seg) => {
                if self.rg(*x) {
                    let c = g.cols();
                    let mut d = Vec::with_capacity(seg.len() * c);
                    for &s in seg.iter() {
                        d.extend_from_slice(g.row(s));
                    }
                    self.accumulate(grads, *x, Tensor::matrix(seg.len(), c, d)?)?;
                }
            }
            Op::LeakyRelu(x, slope) => {
                let vx = self.value(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(vx.data())
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { slope * gv })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d)?)?;
            }
            Op::Elu(x) => {
                let vx = self.value(*x);
                let d = g
                    .data()
                    .iter()
                    .zip(vx.data())
                    .map(|(gv, &xv)| if xv > 0.0 { *gv } else { gv * xv.exp() })
                    .collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d)?)?;
            }
            Op::Exp(x) => {
                let d = g.data().iter().zip(node.value.data()).map(|(a, b)| a * b).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d)?)?;
            }
            Op::Log(x) => {
                let vx = self.value(*x);
                let d = g.data().iter().zip(vx.data()).map(|(a, b)| a / b).collect();
                self.accumulate(grads, *x, Tensor::new(g.shape().to_vec(), d)?)?;
            }
            Op::SoftmaxBySegment(x, seg) => {
                if self.rg(*x) {
                    let y = &node.value;
                    let c = y.cols();
                    let segments = seg.iter().copied().max().map_or(0, |m| m + 1);
                    let mut dot = vec![0.0; segments * c];
                    for (e, &s) in seg.iter().enumerate() {
                        for j in 0..c {
                            dot[s * c + j] += y.row(e)[j] * g.row(e)[j];
                        }
                    }
                    let mut d = vec![0.0; seg.len() * c];
                    for (e, &s) in seg.iter().enumerate() {
                        for j in 0..c {
                            d[e * c + j] = y.row(e)[j] * (g.row(e)[j] - dot[s * c + j]);
                        }
                    }
                    self.accumulate(grads, *x, Tensor::matrix(seg.len(), c, d)?)?;
                }
            }
            Op::Sum(x) => {
                let v = self.value(*x);
                let gv = g.item();
                self.accumulate(grads, *x, Tensor::new(v.shape().to_vec(), vec![gv; v.len()])?)?;
            }
            Op::MseLoss { pred, target, mask } => {
                let p = self.value(*pred);
                let count = mask.as_ref().map_or(p.len() as f64, |m| m.data().iter().sum());
                let scale = if count > 0.0 { 2.0 * g.item() / count } else { 0.0 };
                let d = p
                    .data()
                    .iter()
                    .zip(target.data())
                    .enumerate()
                    .map(|(i, (&y, &t))| scale * mask.as_ref().map_or(1.0, |m| m.data()[i]) * (y - t))
                    .collect();
                self.accumulate(grads, *pred, Tensor::new(p.shape().to_vec(), d)?)?;
            }
            Op::BceWithLogits {
                logits,
                target,
                mask,
            } => {
                let x = self.value(*logits);
                let count = mask.as_ref().map_or(x.len() as f64, |m| m.data().iter().sum());
                let scale = if count > 0.0 { g.item() / count } else { 0.0 };
                let d = x
                    .data()
                    .iter()
                    .zip(target.data())
                    .enumerate()
                    .map(|(i, (&z, &t))| {
                        scale * mask.as_ref().map_or(1.0, |m| m.data()[i]) * (sigmoid(z) - t)
                    })
                    .collect();
                self.accumulate(grads, *logits, Tensor::new(x.shape().to_vec(), d)?)?;
            }
        }
        Ok(())
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_loss_shapes(
    op: &'static str,
    pred: &Tensor,
    target: &Tensor,
    mask: Option<&Tensor>,
) -> Result<(), TensorError> {
    if !pred.same_shape(target) {
        return Err(mismatch(op, format!("prediction {:?} vs target {:?}", pred.shape(), target.shape())));
    }
    if let Some(m) = mask {
        if !m.same_shape(target) {
            return Err(mismatch(op, format!("mask {:?} vs target {:?}", m.shape(), target.shape())));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx(v: &[usize]) -> Indices {
        Arc::from(v)
    }

    #[test]
    fn singleton_segment_softmax_is_one() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::scalar(-3.7));
        let y = tape.softmax_by_segment(x, &idx(&[0]), 1).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0]);
    }

    #[test]
    fn empty_segment_is_an_error() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(2, 1, vec![1.0, 2.0]).unwrap());
        let err = tape.softmax_by_segment(x, &idx(&[0, 2]), 3).unwrap_err();
        assert_eq!(
            err,
            TensorError::EmptySegment {
                op: "softmax_by_segment",
                segment: 1
            }
        );
    }

    #[test]
    fn leaky_relu_scales_negatives() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![-1.0, 2.0]).unwrap());
        let y = tape.leaky_relu(x, 0.2);
        assert_eq!(tape.value(y).data(), &[-0.2, 2.0]);
    }

    #[test]
    fn log_of_zero_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap());
        assert!(matches!(tape.log(x), Err(TensorError::Domain { .. })));
    }

    #[test]
    fn matmul_shape_mismatch() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::zeros(2, 3));
        let b = tape.constant(Tensor::zeros(2, 3));
        assert!(matches!(tape.matmul(a, b), Err(TensorError::ShapeMismatch { .. })));
    }

    #[test]
    fn masked_mse_ignores_masked_entries() {
        let mut tape = Tape::new();
        let p = tape.param(Tensor::matrix(1, 2, vec![1.0, 100.0]).unwrap());
        let t = Tensor::matrix(1, 2, vec![0.0, 0.0]).unwrap();
        let m = Tensor::matrix(1, 2, vec![1.0, 0.0]).unwrap();
        let loss = tape.mse_loss(p, t, Some(m)).unwrap();
        assert_eq!(tape.value(loss).item(), 1.0);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(p).unwrap().data(), &[2.0, 0.0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::filled(2, 2, 1.0));
        let w = tape.param(Tensor::filled(2, 1, 0.5));
        let y = tape.matmul(a, w).unwrap();
        let s = tape.sum(y);
        let g = tape.backward(s).unwrap();
        assert!(g.get(a).is_none());
        assert_eq!(g.get(w).unwrap().data(), &[2.0, 2.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::zeros(2, 2));
        assert!(matches!(tape.backward(a), Err(TensorError::NotScalar(_))));
    }

    #[test]
    fn reused_variable_accumulates() {
        // d/dx sum(x*x) = 2x
        let mut tape = Tape::new();
        let x = tape.param(Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap());
        let sq = tape.mul(x, x).unwrap();
        let s = tape.sum(sq);
        let g = tape.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0, 1.0]);
    }
}
