//! Reverse-mode automatic differentiation over a small, closed primitive set.
//!
//! A [`Graph`] is an append-only list of nodes, so insertion order is a
//! topological order. Every primitive has a local derivative rule, and the
//! derivatives of the smooth activations (`sigmoid` for softplus, `tanh_deriv`
//! for tanh) are primitives themselves. An input-gradient assembled from those
//! primitives is therefore an ordinary differentiable sub-graph, and a single
//! reverse sweep yields its derivative with respect to model parameters.

mod check;
pub mod mlp;
mod tensor;

use std::collections::BTreeMap;

pub use check::gradient_check;
pub use tensor::{Shape, Tensor};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LeafKind {
    Param,
    Input,
    Constant,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf(LeafKind),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    /// Elementwise product of equal shapes.
    Mul(NodeId, NodeId),
    /// Multiplication by a fixed constant.
    Scale(NodeId, f64),
    /// Scalar node times tensor node.
    ScalarMul(NodeId, NodeId),
    /// Tensor node divided by scalar node.
    Div(NodeId, NodeId),
    /// Tensor plus scalar node broadcast to every component.
    Shift(NodeId, NodeId),
    Neg(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softplus(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    TanhDeriv(NodeId),
    /// Matrix (out×in) times vector (in).
    MatVec(NodeId, NodeId),
    /// Transposed matrix (out×in)ᵀ times vector (out).
    MatTVec(NodeId, NodeId),
    Sum(NodeId),
    Dot(NodeId, NodeId),
    Norm2(NodeId),
    LogSumExp(NodeId),
    Select(NodeId, usize),
    Gather(NodeId, Vec<usize>),
    StackRows(Vec<NodeId>),
    /// `det(A Aᵀ)` of a matrix node.
    GramDet(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    value: Tensor,
}

/// Append-only computation graph with eagerly evaluated node values.
#[derive(Debug, Clone, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    last_visits: usize,
}

/// Adjoints of every leaf of a graph, keyed by leaf node.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: BTreeMap<NodeId, Tensor>,
}

impl GradientMap {
    pub fn get(&self, leaf: NodeId) -> Option<&Tensor> {
        self.grads.get(&leaf)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, &Tensor)> {
        self.grads.iter().map(|(k, v)| (*k, v))
    }
}

fn shape_err(op: &str, detail: String) -> Error {
    Error::usage(format!("{op}: {detail}"))
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn scalar_value(&self, id: NodeId) -> f64 {
        self.nodes[id.0].value.item()
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    /// Number of nodes whose adjoint was propagated by the most recent
    /// [`Graph::backward`] call.
    pub fn last_backward_visits(&self) -> usize {
        self.last_visits
    }

    pub fn leaf_kind(&self, id: NodeId) -> Option<LeafKind> {
        match self.nodes[id.0].op {
            Op::Leaf(kind) => Some(kind),
            _ => None,
        }
    }

    pub fn leaves(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .map(NodeId)
            .filter(|&id| self.leaf_kind(id).is_some())
            .collect()
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, kind: LeafKind, value: Tensor) -> NodeId {
        self.push(Op::Leaf(kind), value)
    }

    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.leaf(LeafKind::Param, value)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.leaf(LeafKind::Input, value)
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.leaf(LeafKind::Constant, value)
    }

    pub fn scalar_constant(&mut self, v: f64) -> NodeId {
        self.constant(Tensor::scalar(v))
    }

    /// Replaces a leaf value and re-evaluates every node after it.
    pub fn set_leaf(&mut self, leaf: NodeId, value: Tensor) -> Result<()> {
        if self.leaf_kind(leaf).is_none() {
            return Err(Error::usage("set_leaf on a non-leaf node"));
        }
        if value.shape() != self.shape(leaf) {
            return Err(shape_err(
                "set_leaf",
                format!("expected {}, got {}", self.shape(leaf), value.shape()),
            ));
        }
        self.nodes[leaf.0].value = value;
        self.recompute_from(leaf.0 + 1);
        Ok(())
    }

    /// Re-evaluates all non-leaf nodes from `start` on.
    fn recompute_from(&mut self, start: usize) {
        for i in start..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf(_)) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let value = self.eval(&op).expect("shapes were validated at construction");
            self.nodes[i].value = value;
        }
    }

    fn eval(&self, op: &Op) -> Result<Tensor> {
        let v = |id: &NodeId| &self.nodes[id.0].value;
        let same = |name: &str, a: &NodeId, b: &NodeId| -> Result<()> {
            if v(a).shape() != v(b).shape() {
                return Err(shape_err(
                    name,
                    format!("{} vs {}", v(a).shape(), v(b).shape()),
                ));
            }
            Ok(())
        };
        let scalar = |name: &str, a: &NodeId| -> Result<f64> {
            match v(a).shape() {
                Shape::Scalar => Ok(v(a).item()),
                s => Err(shape_err(name, format!("expected scalar, got {s}"))),
            }
        };
        let vector = |name: &str, a: &NodeId| -> Result<usize> {
            match v(a).shape() {
                Shape::Vector(n) => Ok(n),
                s => Err(shape_err(name, format!("expected vector, got {s}"))),
            }
        };
        Ok(match op {
            Op::Leaf(_) => unreachable!("leaves are not evaluated"),
            Op::Add(a, b) => {
                same("add", a, b)?;
                v(a).zip(v(b), |x, y| x + y)
            }
            Op::Sub(a, b) => {
                same("sub", a, b)?;
                v(a).zip(v(b), |x, y| x - y)
            }
            Op::Mul(a, b) => {
                same("mul", a, b)?;
                v(a).zip(v(b), |x, y| x * y)
            }
            Op::Scale(a, c) => v(a).map(|x| c * x),
            Op::ScalarMul(s, a) => {
                let s = scalar("scalar_mul", s)?;
                v(a).map(|x| s * x)
            }
            Op::Div(a, s) => {
                let s = scalar("div", s)?;
                v(a).map(|x| x / s)
            }
            Op::Shift(a, s) => {
                let s = scalar("shift", s)?;
                v(a).map(|x| x + s)
            }
            Op::Neg(a) => v(a).map(|x| -x),
            Op::Exp(a) => v(a).map(f64::exp),
            Op::Log(a) => v(a).map(f64::ln),
            Op::Softplus(a) => v(a).map(softplus),
            Op::Sigmoid(a) => v(a).map(sigmoid),
            Op::Tanh(a) => v(a).map(f64::tanh),
            Op::TanhDeriv(a) => v(a).map(|x| {
                let t = x.tanh();
                1.0 - t * t
            }),
            Op::MatVec(w, x) => {
                let (rows, cols) = match v(w).shape() {
                    Shape::Matrix(r, c) => (r, c),
                    s => return Err(shape_err("matvec", format!("expected matrix, got {s}"))),
                };
                let n = vector("matvec", x)?;
                if n != cols {
                    return Err(shape_err("matvec", format!("{rows}x{cols} times {n}")));
                }
                Tensor::vector(matvec(v(w).data(), rows, cols, v(x).data()))
            }
            Op::MatTVec(w, x) => {
                let (rows, cols) = match v(w).shape() {
                    Shape::Matrix(r, c) => (r, c),
                    s => return Err(shape_err("mattvec", format!("expected matrix, got {s}"))),
                };
                let n = vector("mattvec", x)?;
                if n != rows {
                    return Err(shape_err("mattvec", format!("({rows}x{cols})^T times {n}")));
                }
                Tensor::vector(mattvec(v(w).data(), rows, cols, v(x).data()))
            }
            Op::Sum(a) => Tensor::scalar(v(a).data().iter().sum()),
            Op::Dot(a, b) => {
                same("dot", a, b)?;
                Tensor::scalar(v(a).data().iter().zip(v(b).data()).map(|(x, y)| x * y).sum())
            }
            Op::Norm2(a) => Tensor::scalar(v(a).data().iter().map(|x| x * x).sum::<f64>().sqrt()),
            Op::LogSumExp(a) => {
                vector("logsumexp", a)?;
                Tensor::scalar(log_sum_exp(v(a).data()))
            }
            Op::Select(a, i) => {
                let n = v(a).shape().len();
                if *i >= n {
                    return Err(shape_err("select", format!("index {i} out of {n}")));
                }
                Tensor::scalar(v(a).data()[*i])
            }
            Op::Gather(a, idx) => {
                let n = vector("gather", a)?;
                if let Some(bad) = idx.iter().find(|&&i| i >= n) {
                    return Err(shape_err("gather", format!("index {bad} out of {n}")));
                }
                Tensor::vector(idx.iter().map(|&i| v(a).data()[i]).collect())
            }
            Op::StackRows(rows) => {
                let first = rows
                    .first()
                    .ok_or_else(|| shape_err("stack_rows", "no rows".into()))?;
                let k = vector("stack_rows", first)?;
                let mut data = Vec::with_capacity(rows.len() * k);
                for r in rows {
                    if vector("stack_rows", r)? != k {
                        return Err(shape_err("stack_rows", "ragged rows".into()));
                    }
                    data.extend_from_slice(v(r).data());
                }
                Tensor::matrix(rows.len(), k, data)
            }
            Op::GramDet(a) => {
                let (r, c) = match v(a).shape() {
                    Shape::Matrix(r, c) => (r, c),
                    s => return Err(shape_err("gram_det", format!("expected matrix, got {s}"))),
                };
                let g = gram(v(a).data(), r, c);
                Tensor::scalar(determinant(&g, r))
            }
        })
    }

    fn add_op(&mut self, op: Op) -> Result<NodeId> {
        let value = self.eval(&op)?;
        Ok(self.push(op, value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.add_op(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.add_op(Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.add_op(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        let value = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), value)
    }

    pub fn scalar_mul(&mut self, s: NodeId, a: NodeId) -> Result<NodeId> {
        self.add_op(Op::ScalarMul(s, a))
    }

    pub fn div(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        self.add_op(Op::Div(a, s))
    }

    pub fn shift(&mut self, a: NodeId, s: NodeId) -> Result<NodeId> {
        self.add_op(Op::Shift(a, s))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), value)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::exp);
        self.push(Op::Exp(a), value)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::ln);
        self.push(Op::Log(a), value)
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(softplus);
        self.push(Op::Softplus(a), value)
    }

    /// Logistic sigmoid, the derivative of softplus.
    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), value)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), value)
    }

    /// `1 - tanh²`, the derivative of tanh.
    pub fn tanh_deriv(&mut self, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| {
            let t = x.tanh();
            1.0 - t * t
        });
        self.push(Op::TanhDeriv(a), value)
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        self.add_op(Op::MatVec(w, x))
    }

    pub fn mattvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        self.add_op(Op::MatTVec(w, x))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), value)
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.add_op(Op::Dot(a, b))
    }

    pub fn norm2(&mut self, a: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(a).data().iter().map(|x| x * x).sum::<f64>().sqrt());
        self.push(Op::Norm2(a), value)
    }

    pub fn log_sum_exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.add_op(Op::LogSumExp(a))
    }

    pub fn select(&mut self, a: NodeId, index: usize) -> Result<NodeId> {
        self.add_op(Op::Select(a, index))
    }

    pub fn gather(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.add_op(Op::Gather(a, indices))
    }

    pub fn stack_rows(&mut self, rows: Vec<NodeId>) -> Result<NodeId> {
        self.add_op(Op::StackRows(rows))
    }

    pub fn gram_det(&mut self, a: NodeId) -> Result<NodeId> {
        self.add_op(Op::GramDet(a))
    }

    /// Sum of scalar nodes; a constant zero for an empty list.
    pub fn sum_scalars(&mut self, terms: &[NodeId]) -> Result<NodeId> {
        let mut iter = terms.iter();
        let Some(&first) = iter.next() else {
            return Ok(self.scalar_constant(0.0));
        };
        let mut acc = first;
        for &t in iter {
            acc = self.add(acc, t)?;
        }
        Ok(acc)
    }

    /// Adjoints of every leaf with respect to the scalar node `output`, in one
    /// reverse sweep over the nodes preceding it.
    pub fn backward(&mut self, output: NodeId) -> Result<GradientMap> {
        if self.shape(output) != Shape::Scalar {
            return Err(Error::usage(format!(
                "backward requires a scalar output, got {}",
                self.shape(output)
            )));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        adj[output.0] = Some(Tensor::scalar(1.0));
        let mut visits = 0;
        for i in (0..=output.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            visits += 1;
            let op = &self.nodes[i].op;
            if let Op::Leaf(_) = op {
                adj[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut adj);
        }
        self.last_visits = visits;

        let mut grads = BTreeMap::new();
        for id in self.leaves() {
            let g = if id.0 <= output.0 {
                adj[id.0].take()
            } else {
                None
            };
            grads.insert(id, g.unwrap_or_else(|| Tensor::zeros(self.shape(id))));
        }
        Ok(GradientMap { grads })
    }

    fn propagate(&self, i: usize, g: &Tensor, adj: &mut [Option<Tensor>]) {
        let val = |id: &NodeId| &self.nodes[id.0].value;
        let out = &self.nodes[i].value;
        let mut acc = |id: NodeId, t: Tensor| match &mut adj[id.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &self.nodes[i].op {
            Op::Leaf(_) => {}
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                acc(*a, g.zip(val(b), |x, y| x * y));
                acc(*b, g.zip(val(a), |x, y| x * y));
            }
            Op::Scale(a, c) => acc(*a, g.map(|x| c * x)),
            Op::ScalarMul(s, a) => {
                let sv = val(s).item();
                let ds: f64 = g.data().iter().zip(val(a).data()).map(|(x, y)| x * y).sum();
                acc(*s, Tensor::scalar(ds));
                acc(*a, g.map(|x| sv * x));
            }
            Op::Div(a, s) => {
                let sv = val(s).item();
                let ds: f64 = -g.data().iter().zip(val(a).data()).map(|(x, y)| x * y).sum::<f64>()
                    / (sv * sv);
                acc(*a, g.map(|x| x / sv));
                acc(*s, Tensor::scalar(ds));
            }
            Op::Shift(a, s) => {
                acc(*a, g.clone());
                acc(*s, Tensor::scalar(g.data().iter().sum()));
            }
            Op::Neg(a) => acc(*a, g.map(|x| -x)),
            Op::Exp(a) => acc(*a, g.zip(out, |x, y| x * y)),
            Op::Log(a) => acc(*a, g.zip(val(a), |x, y| x / y)),
            Op::Softplus(a) => acc(*a, g.zip(val(a), |x, y| x * sigmoid(y))),
            Op::Sigmoid(a) => acc(*a, g.zip(out, |x, s| x * s * (1.0 - s))),
            Op::Tanh(a) => acc(*a, g.zip(out, |x, t| x * (1.0 - t * t))),
            Op::TanhDeriv(a) => acc(
                *a,
                g.zip(val(a), |x, z| {
                    let t = z.tanh();
                    x * (-2.0 * t * (1.0 - t * t))
                }),
            ),
            Op::MatVec(w, x) => {
                let Shape::Matrix(rows, cols) = val(w).shape() else { unreachable!() };
                let mut dw = vec![0.0; rows * cols];
                outer_add(&mut dw, g.data(), val(x).data());
                acc(*w, Tensor::matrix(rows, cols, dw));
                acc(*x, Tensor::vector(mattvec(val(w).data(), rows, cols, g.data())));
            }
            Op::MatTVec(w, x) => {
                let Shape::Matrix(rows, cols) = val(w).shape() else { unreachable!() };
                let mut dw = vec![0.0; rows * cols];
                outer_add(&mut dw, val(x).data(), g.data());
                acc(*w, Tensor::matrix(rows, cols, dw));
                acc(*x, Tensor::vector(matvec(val(w).data(), rows, cols, g.data())));
            }
            Op::Sum(a) => {
                let gv = g.item();
                acc(*a, val(a).map(|_| gv));
            }
            Op::Dot(a, b) => {
                let gv = g.item();
                acc(*a, val(b).map(|y| gv * y));
                acc(*b, val(a).map(|y| gv * y));
            }
            Op::Norm2(a) => {
                let norm = out.item();
                let gv = g.item();
                if norm > 0.0 {
                    acc(*a, val(a).map(|y| gv * y / norm));
                }
            }
            Op::LogSumExp(a) => {
                let lse = out.item();
                let gv = g.item();
                acc(*a, val(a).map(|z| gv * (z - lse).exp()));
            }
            Op::Select(a, idx) => {
                let mut t = Tensor::zeros(val(a).shape());
                t.data_mut()[*idx] = g.item();
                acc(*a, t);
            }
            Op::Gather(a, idx) => {
                let mut t = Tensor::zeros(val(a).shape());
                for (k, &j) in idx.iter().enumerate() {
                    t.data_mut()[j] += g.data()[k];
                }
                acc(*a, t);
            }
            Op::StackRows(rows) => {
                let Shape::Matrix(_, k) = out.shape() else { unreachable!() };
                for (r, id) in rows.iter().enumerate() {
                    acc(*id, Tensor::vector(g.data()[r * k..(r + 1) * k].to_vec()));
                }
            }
            Op::GramDet(a) => {
                // d det(AAᵀ)/dA = 2 adj(AAᵀ) A; the adjugate stays defined when singular.
                let Shape::Matrix(r, c) = val(a).shape() else { unreachable!() };
                let gmat = gram(val(a).data(), r, c);
                let adjg = adjugate(&gmat, r);
                let a_data = val(a).data();
                let gv = g.item();
                let mut da = vec![0.0; r * c];
                for i in 0..r {
                    for k in 0..r {
                        let coeff = 2.0 * gv * adjg[i * r + k];
                        if coeff == 0.0 {
                            continue;
                        }
                        for j in 0..c {
                            da[i * c + j] += coeff * a_data[k * c + j];
                        }
                    }
                }
                acc(*a, Tensor::matrix(r, c, da));
            }
        }
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows)
        .map(|r| w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}

fn mattvec(w: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; cols];
    for r in 0..rows {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        for (o, a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += a * xr;
        }
    }
    out
}

// dw[r][c] += u[r] * v[c]
fn outer_add(dw: &mut [f64], u: &[f64], v: &[f64]) {
    let cols = v.len();
    for (r, &ur) in u.iter().enumerate() {
        if ur == 0.0 {
            continue;
        }
        for (d, &vc) in dw[r * cols..(r + 1) * cols].iter_mut().zip(v) {
            *d += ur * vc;
        }
    }
}

fn gram(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut g = vec![0.0; r * r];
    for i in 0..r {
        for j in 0..=i {
            let v: f64 = (0..c).map(|k| a[i * c + k] * a[j * c + k]).sum();
            g[i * r + j] = v;
            g[j * r + i] = v;
        }
    }
    g
}

/// Determinant by Gaussian elimination with partial pivoting.
pub(crate) fn determinant(m: &[f64], n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut a = m.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x * n + col].abs().total_cmp(&a[y * n + col].abs()))
            .expect("non-empty range");
        if a[pivot * n + col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            det = -det;
        }
        let p = a[col * n + col];
        det *= p;
        for row in col + 1..n {
            let f = a[row * n + col] / p;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= f * a[col * n + k];
            }
        }
    }
    det
}

fn adjugate(m: &[f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    let mut adj = vec![0.0; n * n];
    let mut minor = vec![0.0; (n - 1) * (n - 1)];
    for i in 0..n {
        for j in 0..n {
            // cofactor C_ij; adj = Cᵀ
            let mut idx = 0;
            for r in (0..n).filter(|&r| r != i) {
                for c in (0..n).filter(|&c| c != j) {
                    minor[idx] = m[r * n + c];
                    idx += 1;
                }
            }
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[j * n + i] = sign * determinant(&minor, n - 1);
        }
    }
    adj
}
