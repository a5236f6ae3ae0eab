//! Tape-based reverse-mode differentiation over [`Tensor`]s.
//!
//! Every kernel evaluates eagerly and appends a node holding its value and
//! the inputs needed by its backward rule. [`Tape::backward`] walks the nodes
//! in reverse, only visiting branches that lead to a leaf which requires a
//! gradient, so a decoder with frozen weights costs roughly one extra pass
//! when differentiating with respect to its latent input.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use super::params::{ParamGrads, ParamId, ParamStore};
use super::tensor::{matmul, matmul_nt, matmul_tn, Tensor};
use crate::error::{Error, Result};
use crate::math::{exp, expm1, ln, sqrt};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

/// How the right operand of an elementwise kernel is broadcast.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Broadcast {
    Same,
    /// `1 x c` against `r x c`.
    Row,
    /// `r x 1` against `r x c`.
    Col,
    /// `1 x 1`.
    Scalar,
}

impl Broadcast {
    fn resolve(kernel: &'static str, a: [usize; 2], b: [usize; 2]) -> Result<Self> {
        if a == b {
            Ok(Self::Same)
        } else if b == [1, 1] {
            Ok(Self::Scalar)
        } else if b[0] == 1 && b[1] == a[1] {
            Ok(Self::Row)
        } else if b[1] == 1 && b[0] == a[0] {
            Ok(Self::Col)
        } else {
            Err(Error::ShapeMismatch { kernel, lhs: a, rhs: b })
        }
    }

    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            Self::Same => r * cols + c,
            Self::Row => c,
            Self::Col => r,
            Self::Scalar => 0,
        }
    }

    /// Sums a full-shape gradient down to the broadcast operand's shape.
    fn reduce(self, g: &Tensor, b_shape: [usize; 2]) -> Tensor {
        if self == Self::Same {
            return g.clone();
        }
        let mut out = Tensor::zeros(b_shape[0], b_shape[1]);
        let cols = g.cols();
        for r in 0..g.rows() {
            for c in 0..cols {
                out.data_mut()[self.index(r, c, cols)] += g.get(r, c);
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var, Broadcast),
    Sub(Var, Var, Broadcast),
    Mul(Var, Var, Broadcast),
    Scale(Var, f64),
    Softmax(Var, usize),
    Exp(Var),
    Log(Var),
    Sum(Var, Option<usize>),
    Mean(Var, Option<usize>),
    GatherRows(Var, Arc<[usize]>),
    ScatterAddRows(Var, Arc<[usize]>),
    L2Norm(Var),
    Elu(Var, f64),
    BlockWeightedSum(Var, Var),
    EdgeAggregate(Var, Var, Arc<EdgeIndex>),
    Reshape(Var),
}

/// Weighted directed edges `source → center` over `rows` output rows, the
/// sparsity pattern of [`Tape::edge_aggregate`].
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeIndex {
    rows: usize,
    centers: Arc<[usize]>,
    sources: Arc<[usize]>,
    weights: Arc<[f64]>,
}

impl EdgeIndex {
    pub fn new(rows: usize, centers: Vec<usize>, sources: Vec<usize>, weights: Vec<f64>) -> Result<Self> {
        if centers.len() != sources.len() || centers.len() != weights.len() {
            return Err(Error::ShapeMismatch {
                kernel: "edge_index",
                lhs: [centers.len(), sources.len()],
                rhs: [weights.len(), 1],
            });
        }
        if let Some(&bad) = centers.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange { index: bad, len: rows });
        }
        Ok(Self {
            rows,
            centers: centers.into(),
            sources: sources.into(),
            weights: weights.into(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &Arc<[usize]> {
        &self.centers
    }

    pub fn sources(&self) -> &Arc<[usize]> {
        &self.sources
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Op {
    fn inputs(&self) -> [Option<Var>; 2] {
        match *self {
            Op::Leaf | Op::Param(_) => [None, None],
            Op::MatMul(a, b)
            | Op::Add(a, b, _)
            | Op::Sub(a, b, _)
            | Op::Mul(a, b, _)
            | Op::BlockWeightedSum(a, b)
            | Op::EdgeAggregate(a, b, _) => [Some(a), Some(b)],
            Op::Scale(a, _)
            | Op::Softmax(a, _)
            | Op::Exp(a)
            | Op::Log(a)
            | Op::Sum(a, _)
            | Op::Mean(a, _)
            | Op::GatherRows(a, _)
            | Op::ScatterAddRows(a, _)
            | Op::L2Norm(a)
            | Op::Elu(a, _)
            | Op::Reshape(a) => [Some(a), None],
        }
    }
}

#[derive(Debug)]
struct Node {
    op: Op,
    /// `None` for parameter leaves, whose value lives in the store.
    value: Option<Tensor>,
    requires_grad: bool,
}

/// A recorded computation. Confined to one thread; parameters are borrowed
/// read-only, so several tapes may share one [`ParamStore`].
pub struct Tape<'p> {
    nodes: Vec<Node>,
    store: Option<&'p ParamStore>,
    params_require_grad: bool,
    check_finite: bool,
    consumed: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            store: None,
            params_require_grad: false,
            check_finite: true,
            consumed: false,
        }
    }

    /// Tape whose parameter leaves receive gradients.
    pub fn with_params(store: &'p ParamStore) -> Self {
        Self {
            store: Some(store),
            params_require_grad: true,
            ..Self::new()
        }
    }

    /// Tape that reads parameters as constants.
    pub fn frozen(store: &'p ParamStore) -> Self {
        Self {
            store: Some(store),
            params_require_grad: false,
            ..Self::new()
        }
    }

    /// Disables the per-kernel non-finite check.
    pub fn unchecked(mut self) -> Self {
        self.check_finite = false;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match (&node.value, &node.op) {
            (Some(t), _) => t,
            (None, Op::Param(id)) => self.store.expect("parameter node without a store").value(*id),
            (None, _) => unreachable!("non-parameter node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.value(v).shape()
    }

    fn push(&mut self, kernel: &'static str, op: Op, value: Tensor) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite { kernel });
        }
        let requires_grad = op.inputs().iter().flatten().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    fn push_leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        if self.check_finite && !value.is_finite() {
            return Err(Error::NonFinite { kernel: "leaf" });
        }
        self.nodes.push(Node {
            op: Op::Leaf,
            value: Some(value),
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Differentiable input; its gradient is readable from [`Gradients::wrt`].
    pub fn input(&mut self, value: Tensor) -> Result<Var> {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.push_leaf(value, false)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        assert!(self.store.is_some(), "tape has no parameter store");
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            requires_grad: self.params_require_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.cols() != tb.rows() {
            return Err(Error::ShapeMismatch {
                kernel: "matmul",
                lhs: ta.shape(),
                rhs: tb.shape(),
            });
        }
        let out = matmul(ta, tb);
        self.push("matmul", Op::MatMul(a, b), out)
    }

    fn binary(
        &mut self,
        kernel: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: impl FnOnce(Broadcast) -> Op,
    ) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let bc = Broadcast::resolve(kernel, ta.shape(), tb.shape())?;
        let cols = ta.cols();
        let mut out = ta.clone();
        for r in 0..ta.rows() {
            for c in 0..cols {
                let x = &mut out.data_mut()[r * cols + c];
                *x = f(*x, tb.data()[bc.index(r, c, cols)]);
            }
        }
        self.push(kernel, op(bc), out)
    }

    /// `a + b`; `b` may broadcast as a row, a column or a scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, |bc| Op::Add(a, b, bc))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, |bc| Op::Sub(a, b, bc))
    }

    /// Elementwise product with the same broadcasting as [`Tape::add`].
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, |bc| Op::Mul(a, b, bc))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.scale_in_place(s);
        self.push("scale", Op::Scale(a, s), out)
    }

    /// Softmax along `axis` (1: within each row, 0: within each column),
    /// with max subtraction.
    pub fn softmax(&mut self, a: Var, axis: usize) -> Result<Var> {
        let t = self.value(a);
        let [rows, cols] = t.shape();
        let mut out = t.clone();
        let (outer, inner, stride_outer, stride_inner) = match axis {
            1 => (rows, cols, cols, 1),
            0 => (cols, rows, 1, cols),
            _ => return Err(Error::InvalidConfig("softmax axis must be 0 or 1".into())),
        };
        let d = out.data_mut();
        for o in 0..outer {
            let at = |k: usize| o * stride_outer + k * stride_inner;
            let max = (0..inner).map(|k| d[at(k)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in 0..inner {
                let e = exp(d[at(k)] - max);
                d[at(k)] = e;
                total += e;
            }
            for k in 0..inner {
                d[at(k)] /= total;
            }
        }
        self.push("softmax", Op::Softmax(a, axis), out)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = exp(*x));
        self.push("exp", Op::Exp(a), out)
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.data_mut().iter_mut().for_each(|x| *x = ln(*x));
        self.push("log", Op::Log(a), out)
    }

    fn reduce_value(t: &Tensor, axis: Option<usize>) -> Result<Tensor> {
        let [rows, cols] = t.shape();
        Ok(match axis {
            None => Tensor::scalar(t.sum()),
            Some(0) => {
                let mut out = Tensor::zeros(1, cols);
                for r in 0..rows {
                    for (o, x) in out.data_mut().iter_mut().zip(t.row_slice(r)) {
                        *o += x;
                    }
                }
                out
            }
            Some(1) => Tensor::column((0..rows).map(|r| t.row_slice(r).iter().sum()).collect()),
            Some(_) => return Err(Error::InvalidConfig("reduction axis must be 0 or 1".into())),
        })
    }

    fn reduced_count(shape: [usize; 2], axis: Option<usize>) -> usize {
        match axis {
            None => shape[0] * shape[1],
            Some(0) => shape[0],
            _ => shape[1],
        }
    }

    /// Sum over everything (`None`) or along one axis.
    pub fn sum(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let out = Self::reduce_value(self.value(a), axis)?;
        self.push("sum", Op::Sum(a, axis), out)
    }

    pub fn mean(&mut self, a: Var, axis: Option<usize>) -> Result<Var> {
        let t = self.value(a);
        let count = Self::reduced_count(t.shape(), axis);
        if count == 0 {
            return Err(Error::EmptyInput("mean of empty tensor"));
        }
        let mut out = Self::reduce_value(t, axis)?;
        out.scale_in_place(1.0 / count as f64);
        self.push("mean", Op::Mean(a, axis), out)
    }

    /// Row `k` of the result is row `indices[k]` of `a`.
    pub fn gather_rows(&mut self, a: Var, indices: Arc<[usize]>) -> Result<Var> {
        let t = self.value(a);
        let cols = t.cols();
        if let Some(&bad) = indices.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: t.rows(),
            });
        }
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices.iter() {
            data.extend_from_slice(t.row_slice(i));
        }
        let out = Tensor::from_vec(indices.len(), cols, data)?;
        self.push("gather_rows", Op::GatherRows(a, indices), out)
    }

    /// Adds row `k` of `a` into row `indices[k]` of a zero `rows x cols` result.
    pub fn scatter_add_rows(&mut self, a: Var, indices: Arc<[usize]>, rows: usize) -> Result<Var> {
        let t = self.value(a);
        if indices.len() != t.rows() {
            return Err(Error::ShapeMismatch {
                kernel: "scatter_add_rows",
                lhs: t.shape(),
                rhs: [indices.len(), 1],
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange { index: bad, len: rows });
        }
        let cols = t.cols();
        let mut out = Tensor::zeros(rows, cols);
        for (k, &i) in indices.iter().enumerate() {
            let src = t.row_slice(k);
            for (o, x) in out.data_mut()[i * cols..(i + 1) * cols].iter_mut().zip(src) {
                *o += x;
            }
        }
        self.push("scatter_add_rows", Op::ScatterAddRows(a, indices), out)
    }

    /// Frobenius norm as a `1 x 1` tensor.
    pub fn l2_norm(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let n = sqrt(t.data().iter().map(|x| x * x).sum());
        self.push("l2_norm", Op::L2Norm(a), Tensor::scalar(n))
    }

    pub fn elu(&mut self, a: Var, alpha: f64) -> Result<Var> {
        let mut out = self.value(a).clone();
        out.data_mut()
            .iter_mut()
            .for_each(|x| *x = if *x > 0.0 { *x } else { alpha * expm1(*x) });
        self.push("elu", Op::Elu(a, alpha), out)
    }

    /// For `q: E x M` and `p: E x (M·k)`, row `e` of the `E x k` result is
    /// `Σ_m q[e, m] · p[e, m·k .. (m+1)·k]`.
    pub fn block_weighted_sum(&mut self, q: Var, p: Var) -> Result<Var> {
        let (tq, tp) = (self.value(q), self.value(p));
        let [e, m] = tq.shape();
        if tp.rows() != e || m == 0 || tp.cols() % m != 0 {
            return Err(Error::ShapeMismatch {
                kernel: "block_weighted_sum",
                lhs: tq.shape(),
                rhs: tp.shape(),
            });
        }
        let k = tp.cols() / m;
        let mut out = Tensor::zeros(e, k);
        for row in 0..e {
            let prow = tp.row_slice(row);
            let qrow = tq.row_slice(row);
            let orow = &mut out.data_mut()[row * k..(row + 1) * k];
            for (f, &w) in qrow.iter().enumerate() {
                for (o, &x) in orow.iter_mut().zip(&prow[f * k..(f + 1) * k]) {
                    *o += w * x;
                }
            }
        }
        self.push("block_weighted_sum", Op::BlockWeightedSum(q, p), out)
    }

    /// For `q: E x M` over the edges of `edges` and `p: n x (M·k)` with `n`
    /// greater than every source index, row `i` of the `rows x k` result is
    /// `Σ_{e: center(e) = i} w_e Σ_m q[e, m] · p[source(e), m·k .. (m+1)·k]`.
    pub fn edge_aggregate(&mut self, q: Var, p: Var, edges: Arc<EdgeIndex>) -> Result<Var> {
        let (tq, tp) = (self.value(q), self.value(p));
        let [e, m] = tq.shape();
        if e != edges.len() || m == 0 || tp.cols() % m != 0 {
            return Err(Error::ShapeMismatch {
                kernel: "edge_aggregate",
                lhs: tq.shape(),
                rhs: tp.shape(),
            });
        }
        if let Some(&bad) = edges.sources.iter().find(|&&j| j >= tp.rows()) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                len: tp.rows(),
            });
        }
        let k = tp.cols() / m;
        let mut out = Tensor::zeros(edges.rows, k);
        for (row, ((&i, &j), &w)) in edges
            .centers
            .iter()
            .zip(edges.sources.iter())
            .zip(edges.weights.iter())
            .enumerate()
        {
            let prow = tp.row_slice(j);
            let qrow = tq.row_slice(row);
            let orow = &mut out.data_mut()[i * k..(i + 1) * k];
            for (f, &qv) in qrow.iter().enumerate() {
                let s = w * qv;
                for (o, &x) in orow.iter_mut().zip(&prow[f * k..(f + 1) * k]) {
                    *o += s * x;
                }
            }
        }
        self.push("edge_aggregate", Op::EdgeAggregate(q, p, edges), out)
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let out = self.value(a).clone().reshaped(rows, cols)?;
        self.push("reshape", Op::Reshape(a), out)
    }

    /// Reverse pass from a scalar. A tape can be differentiated once.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients> {
        if self.consumed {
            return Err(Error::BackwardTwice);
        }
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::NonScalarLoss(shape));
        }
        self.consumed = true;

        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                grads[i] = None;
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            match node.op {
                Op::Leaf | Op::Param(_) => {
                    grads[i] = Some(g);
                    continue;
                }
                _ => self.propagate(i, &g, &mut grads),
            }
        }

        let mut params = Vec::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads[i]) {
                params.push((*id, g.clone()));
            }
        }
        Ok(Gradients { nodes: grads, params })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let acc = |grads: &mut [Option<Tensor>], v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot => *slot = Some(t),
        };
        let node = &self.nodes[i];
        let y = node.value.as_ref().expect("interior node has a value");
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            &Op::MatMul(a, b) => {
                if self.wants(a) {
                    acc(grads, a, matmul_nt(g, self.value(b)));
                }
                if self.wants(b) {
                    acc(grads, b, matmul_tn(self.value(a), g));
                }
            }
            &Op::Add(a, b, bc) | &Op::Sub(a, b, bc) => {
                if self.wants(a) {
                    acc(grads, a, g.clone());
                }
                if self.wants(b) {
                    let mut gb = bc.reduce(g, self.shape(b));
                    if matches!(node.op, Op::Sub(..)) {
                        gb.scale_in_place(-1.0);
                    }
                    acc(grads, b, gb);
                }
            }
            &Op::Mul(a, b, bc) => {
                let (ta, tb) = (self.value(a), self.value(b));
                let cols = ta.cols();
                if self.wants(a) {
                    let mut ga = g.clone();
                    for r in 0..ta.rows() {
                        for c in 0..cols {
                            ga.data_mut()[r * cols + c] *= tb.data()[bc.index(r, c, cols)];
                        }
                    }
                    acc(grads, a, ga);
                }
                if self.wants(b) {
                    let mut prod = g.clone();
                    for (p, x) in prod.data_mut().iter_mut().zip(ta.data()) {
                        *p *= x;
                    }
                    acc(grads, b, bc.reduce(&prod, tb.shape()));
                }
            }
            &Op::Scale(a, s) => {
                let mut ga = g.clone();
                ga.scale_in_place(s);
                acc(grads, a, ga);
            }
            &Op::Softmax(a, axis) => {
                let [rows, cols] = y.shape();
                let (outer, inner, so, si) = if axis == 1 {
                    (rows, cols, cols, 1)
                } else {
                    (cols, rows, 1, cols)
                };
                let mut ga = Tensor::zeros(rows, cols);
                for o in 0..outer {
                    let at = |k: usize| o * so + k * si;
                    let dot: f64 = (0..inner).map(|k| g.data()[at(k)] * y.data()[at(k)]).sum();
                    for k in 0..inner {
                        ga.data_mut()[at(k)] = y.data()[at(k)] * (g.data()[at(k)] - dot);
                    }
                }
                acc(grads, a, ga);
            }
            &Op::Exp(a) => {
                let mut ga = g.clone();
                for (x, e) in ga.data_mut().iter_mut().zip(y.data()) {
                    *x *= e;
                }
                acc(grads, a, ga);
            }
            &Op::Log(a) => {
                let mut ga = g.clone();
                for (x, v) in ga.data_mut().iter_mut().zip(self.value(a).data()) {
                    *x /= v;
                }
                acc(grads, a, ga);
            }
            &Op::Sum(a, axis) | &Op::Mean(a, axis) => {
                let shape = self.shape(a);
                let factor = if matches!(node.op, Op::Mean(..)) {
                    1.0 / Self::reduced_count(shape, axis) as f64
                } else {
                    1.0
                };
                let mut ga = Tensor::zeros(shape[0], shape[1]);
                for r in 0..shape[0] {
                    for c in 0..shape[1] {
                        let gv = match axis {
                            None => g.item(),
                            Some(0) => g.data()[c],
                            _ => g.data()[r],
                        };
                        ga.data_mut()[r * shape[1] + c] = gv * factor;
                    }
                }
                acc(grads, a, ga);
            }
            Op::GatherRows(a, indices) => {
                let shape = self.shape(*a);
                let cols = shape[1];
                let mut ga = Tensor::zeros(shape[0], cols);
                for (k, &r) in indices.iter().enumerate() {
                    let src = g.row_slice(k);
                    for (o, x) in ga.data_mut()[r * cols..(r + 1) * cols].iter_mut().zip(src) {
                        *o += x;
                    }
                }
                acc(grads, *a, ga);
            }
            Op::ScatterAddRows(a, indices) => {
                let cols = g.cols();
                let mut data = Vec::with_capacity(indices.len() * cols);
                for &r in indices.iter() {
                    data.extend_from_slice(g.row_slice(r));
                }
                let ga = Tensor::from_vec(indices.len(), cols, data).expect("gather shape");
                acc(grads, *a, ga);
            }
            &Op::L2Norm(a) => {
                let n = y.item();
                let mut ga = self.value(a).clone();
                let s = if n > 0.0 { g.item() / n } else { 0.0 };
                ga.scale_in_place(s);
                acc(grads, a, ga);
            }
            &Op::Elu(a, alpha) => {
                let mut ga = g.clone();
                for ((d, &x), &out) in ga.data_mut().iter_mut().zip(self.value(a).data()).zip(y.data()) {
                    if x <= 0.0 {
                        *d *= out + alpha;
                    }
                }
                acc(grads, a, ga);
            }
            &Op::BlockWeightedSum(q, p) => {
                let (tq, tp) = (self.value(q), self.value(p));
                let [e, m] = tq.shape();
                let k = tp.cols() / m;
                if self.wants(q) {
                    let mut gq = Tensor::zeros(e, m);
                    for row in 0..e {
                        let grow = g.row_slice(row);
                        let prow = tp.row_slice(row);
                        for f in 0..m {
                            let dot: f64 = grow.iter().zip(&prow[f * k..(f + 1) * k]).map(|(a, b)| a * b).sum();
                            gq.data_mut()[row * m + f] = dot;
                        }
                    }
                    acc(grads, q, gq);
                }
                if self.wants(p) {
                    let mut gp = Tensor::zeros(e, m * k);
                    for row in 0..e {
                        let grow = g.row_slice(row);
                        let qrow = tq.row_slice(row);
                        let out = &mut gp.data_mut()[row * m * k..(row + 1) * m * k];
                        for (f, &w) in qrow.iter().enumerate() {
                            for (o, &gv) in out[f * k..(f + 1) * k].iter_mut().zip(grow) {
                                *o = w * gv;
                            }
                        }
                    }
                    acc(grads, p, gp);
                }
            }
            Op::EdgeAggregate(q, p, edges) => {
                let (q, p) = (*q, *p);
                let (tq, tp) = (self.value(q), self.value(p));
                let [e, m] = tq.shape();
                let k = tp.cols() / m;
                let rows = edges
                    .centers
                    .iter()
                    .zip(edges.sources.iter())
                    .zip(edges.weights.iter())
                    .enumerate();
                if self.wants(q) {
                    let mut gq = Tensor::zeros(e, m);
                    for (row, ((&i, &j), &w)) in rows.clone() {
                        let grow = g.row_slice(i);
                        let prow = tp.row_slice(j);
                        for f in 0..m {
                            let dot: f64 = grow.iter().zip(&prow[f * k..(f + 1) * k]).map(|(a, b)| a * b).sum();
                            gq.data_mut()[row * m + f] = w * dot;
                        }
                    }
                    acc(grads, q, gq);
                }
                if self.wants(p) {
                    let mut gp = Tensor::zeros(tp.rows(), m * k);
                    for (row, ((&i, &j), &w)) in rows {
                        let grow = g.row_slice(i);
                        let qrow = tq.row_slice(row);
                        let out = &mut gp.data_mut()[j * m * k..(j + 1) * m * k];
                        for (f, &qv) in qrow.iter().enumerate() {
                            let s = w * qv;
                            for (o, &gv) in out[f * k..(f + 1) * k].iter_mut().zip(grow) {
                                *o += s * gv;
                            }
                        }
                    }
                    acc(grads, p, gp);
                }
            }
            &Op::Reshape(a) => {
                let shape = self.shape(a);
                acc(grads, a, g.clone().reshaped(shape[0], shape[1]).expect("same size"));
            }
        }
    }
}

/// Result of a reverse pass: gradients of leaves and parameters.
#[derive(Debug)]
pub struct Gradients {
    nodes: Vec<Option<Tensor>>,
    params: Vec<(ParamId, Tensor)>,
}

impl Gradients {
    /// Gradient of an input leaf; `None` if the loss does not depend on it.
    pub fn wrt(&self, v: Var) -> Option<&Tensor> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    /// Parameter gradients, summed over every use of each parameter.
    pub fn param_grads(&self, param_count: usize) -> ParamGrads {
        let mut out = ParamGrads::empty(param_count);
        for (id, g) in &self.params {
            out.add(*id, g);
        }
        out
    }
}
