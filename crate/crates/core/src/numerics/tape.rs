//! Recording tape for reverse-mode differentiation.
//!
//! Every primitive evaluates eagerly and appends a node, so node ids are a
//! topological order by construction. Parameter leaves borrow from a
//! [`ParamStore`] instead of copying it.

use serde::{Deserialize, Serialize};

use super::tensor::{log_softmax, softmax, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor) -> ParamId {
        self.names.push(name.into());
        self.tensors.push(t);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn num_values(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Gradients aligned with a [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn zeros_like(params: &ParamStore) -> Self {
        Gradients {
            grads: params.tensors.iter().map(|t| Tensor::zeros(t.shape())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = &Tensor> {
        self.grads.iter()
    }

    pub fn reset(&mut self) {
        self.grads.iter_mut().for_each(|g| g.fill(0.0));
    }

    pub fn scale(&mut self, s: f64) {
        for g in &mut self.grads {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn global_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.data())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescales so the global L2 norm is at most `max_norm`; returns the norm before clipping.
    pub fn clip_global_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.global_norm();
        if norm > max_norm && norm > 0.0 {
            self.scale(max_norm / norm);
        }
        norm
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    MatMulBt(NodeId, NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    RowSoftmax(NodeId),
    Embedding(NodeId, Vec<usize>),
    Concat(Vec<NodeId>, usize),
    CrossEntropy(NodeId, usize),
    Sum(NodeId),
    Reshape(NodeId),
}

#[derive(Debug)]
struct Node {
    op: Op,
    // `None` for parameter leaves, read through the store.
    value: Option<Tensor>,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_nodes: Vec<Option<NodeId>>,
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
            param_nodes: vec![None; params.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.value, &node.op) {
            (Some(v), _) => v,
            (None, Op::Param(p)) => self.params.get(*p),
            _ => unreachable!("node without value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node {
            op,
            value: Some(value),
        });
        NodeId(self.nodes.len() - 1)
    }

    /// A constant leaf; receives no gradient.
    pub fn input(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Input, t)
    }

    /// The leaf for parameter `p`, created on first use.
    pub fn param(&mut self, p: ParamId) -> NodeId {
        if let Some(id) = self.param_nodes[p.0] {
            return id;
        }
        self.nodes.push(Node {
            op: Op::Param(p),
            value: None,
        });
        let id = NodeId(self.nodes.len() - 1);
        self.param_nodes[p.0] = Some(id);
        id
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    /// `a @ bᵀ`.
    pub fn matmul_bt(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul_bt(self.value(b))?;
        Ok(self.push(Op::MatMulBt(a, b), v))
    }

    /// Elementwise sum; `b` may be a row broadcast over the rows of `a`.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add(a, b), v))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).mul(self.value(b))?;
        Ok(self.push(Op::Mul(a, b), v))
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).tanh();
        self.push(Op::Tanh(a), v)
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).sigmoid();
        self.push(Op::Sigmoid(a), v)
    }

    pub fn row_softmax(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).row_softmax();
        self.push(Op::RowSoftmax(a), v)
    }

    pub fn embedding_lookup(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let v = self.value(table).gather_rows(ids)?;
        Ok(self.push(Op::Embedding(table, ids.to_vec()), v))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let v = {
            let vals: Vec<&Tensor> = parts.iter().map(|&p| self.value(p)).collect();
            Tensor::concat(&vals, axis)?
        };
        Ok(self.push(Op::Concat(parts.to_vec(), axis), v))
    }

    /// `-log softmax(logits)[target]` for a single row of logits.
    pub fn cross_entropy(&mut self, logits: NodeId, target: usize) -> Result<NodeId> {
        let l = self.value(logits);
        if l.rows() != 1 || target >= l.cols() {
            return Err(Error::ShapeMismatch {
                op: "cross_entropy",
                lhs: l.shape().to_vec(),
                rhs: vec![target],
            });
        }
        let lp = log_softmax(l.data());
        Ok(self.push(Op::CrossEntropy(logits, target), Tensor::scalar(-lp[target])))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(a).reshape(shape)?;
        Ok(self.push(Op::Reshape(a), v))
    }

    /// Gradients of scalar `loss` w.r.t. every parameter leaf.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let mut grads = Gradients::zeros_like(self.params);
        self.backward_into(loss, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Accumulates `scale * d loss / d param` into `out`.
    pub fn backward_into(&self, loss: NodeId, scale: f64, out: &mut Gradients) -> Result<()> {
        let lv = self.value(loss);
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss(lv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::new(lv.shape().to_vec(), vec![scale])?);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            match &self.nodes[i].op {
                Op::Input => {}
                Op::Param(p) => out.grads[p.0].add_scaled(&g, 1.0),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(*b))?;
                    let gb = self.value(*a).matmul_at(&g)?;
                    accumulate(&mut adj, *a, ga, self.value(*a).shape());
                    accumulate(&mut adj, *b, gb, self.value(*b).shape());
                }
                Op::MatMulBt(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.matmul_at(self.value(*a))?;
                    accumulate(&mut adj, *a, ga, self.value(*a).shape());
                    accumulate(&mut adj, *b, gb, self.value(*b).shape());
                }
                Op::Add(a, b) => {
                    let bv = self.value(*b);
                    let gb = if bv.len() == g.len() {
                        g.clone()
                    } else {
                        let c = g.cols();
                        let mut s = vec![0.0; c];
                        for row in g.data().chunks(c) {
                            for (acc, v) in s.iter_mut().zip(row) {
                                *acc += v;
                            }
                        }
                        Tensor::row(s)
                    };
                    accumulate(&mut adj, *b, gb, bv.shape());
                    let ashape = self.value(*a).shape().to_vec();
                    accumulate(&mut adj, *a, g, &ashape);
                }
                Op::Mul(a, b) => {
                    let ga = g.mul(self.value(*b))?;
                    let gb = g.mul(self.value(*a))?;
                    accumulate(&mut adj, *a, ga, self.value(*a).shape());
                    accumulate(&mut adj, *b, gb, self.value(*b).shape());
                }
                Op::Tanh(a) => {
                    let y = self.nodes[i].value.as_ref().expect("computed");
                    let ga = Tensor::new(
                        y.shape().to_vec(),
                        y.data().iter().zip(g.data()).map(|(y, g)| g * (1.0 - y * y)).collect(),
                    )?;
                    accumulate(&mut adj, *a, ga, y.shape());
                }
                Op::Sigmoid(a) => {
                    let y = self.nodes[i].value.as_ref().expect("computed");
                    let ga = Tensor::new(
                        y.shape().to_vec(),
                        y.data().iter().zip(g.data()).map(|(y, g)| g * y * (1.0 - y)).collect(),
                    )?;
                    accumulate(&mut adj, *a, ga, y.shape());
                }
                Op::RowSoftmax(a) => {
                    let y = self.nodes[i].value.as_ref().expect("computed");
                    let c = y.cols();
                    let mut data = Vec::with_capacity(y.len());
                    for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                        let inner: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                        data.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - inner)));
                    }
                    accumulate(&mut adj, *a, Tensor::new(y.shape().to_vec(), data)?, y.shape());
                }
                Op::Embedding(table, ids) => {
                    let tv = self.value(*table);
                    let d = tv.cols();
                    let mut gt = Tensor::zeros(tv.shape());
                    for (r, &id) in ids.iter().enumerate() {
                        let src = &g.data()[r * d..(r + 1) * d];
                        for (dst, s) in gt.data_mut()[id * d..(id + 1) * d].iter_mut().zip(src) {
                            *dst += s;
                        }
                    }
                    let shape = tv.shape().to_vec();
                    accumulate(&mut adj, *table, gt, &shape);
                }
                Op::Concat(parts, axis) => {
                    let mut offset = 0;
                    for &p in parts {
                        let pv = self.value(p);
                        let gp = if *axis == 0 {
                            let n = pv.len();
                            let t = Tensor::new(pv.shape().to_vec(), g.data()[offset..offset + n].to_vec())?;
                            offset += n;
                            t
                        } else {
                            let (r, c) = (pv.rows(), pv.cols());
                            let mut data = Vec::with_capacity(r * c);
                            for row in 0..r {
                                data.extend_from_slice(&g.row_slice(row)[offset..offset + c]);
                            }
                            offset += c;
                            Tensor::new(pv.shape().to_vec(), data)?
                        };
                        let shape = pv.shape().to_vec();
                        accumulate(&mut adj, p, gp, &shape);
                    }
                }
                Op::CrossEntropy(logits, target) => {
                    let lv = self.value(*logits);
                    let mut p = softmax(lv.data());
                    p[*target] -= 1.0;
                    let s = g.item();
                    p.iter_mut().for_each(|v| *v *= s);
                    let shape = lv.shape().to_vec();
                    accumulate(&mut adj, *logits, Tensor::new(shape.clone(), p)?, &shape);
                }
                Op::Sum(a) => {
                    let av = self.value(*a);
                    let ga = Tensor::new(av.shape().to_vec(), vec![g.item(); av.len()])?;
                    let shape = av.shape().to_vec();
                    accumulate(&mut adj, *a, ga, &shape);
                }
                Op::Reshape(a) => {
                    let shape = self.value(*a).shape().to_vec();
                    let ga = g.reshape(&shape)?;
                    accumulate(&mut adj, *a, ga, &shape);
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<Tensor>], id: NodeId, g: Tensor, shape: &[usize]) {
    debug_assert_eq!(g.len(), shape.iter().product::<usize>());
    match &mut adj[id.0] {
        Some(existing) => existing.add_scaled(&g, 1.0),
        slot @ None => *slot = Some(g),
    }
}
