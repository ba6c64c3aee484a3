//! One forward definition, two evaluators.
//!
//! The model's forward pass is written against [`Graph`]. The [`Tape`]
//! implementation records for backpropagation; [`Eager`] just computes.
//! Both call the same tensor kernels in the same order, so scores from
//! inference and losses from training agree bit for bit.

use crate::error::Result;
use crate::numerics::{NodeId, ParamId, ParamStore, Tape, Tensor};

pub(crate) trait Graph {
    type V;
    fn param(&mut self, p: ParamId) -> Self::V;
    fn embed(&mut self, table: &Self::V, ids: &[usize]) -> Result<Self::V>;
    fn matmul(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn matmul_bt(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Result<Self::V>;
    fn tanh(&mut self, a: &Self::V) -> Self::V;
    fn row_softmax(&mut self, a: &Self::V) -> Self::V;
    fn concat(&mut self, parts: &[&Self::V], axis: usize) -> Result<Self::V>;
    fn reshape(&mut self, a: &Self::V, shape: &[usize]) -> Result<Self::V>;
    fn rows(&self, a: &Self::V) -> usize;
}

impl Graph for Tape<'_> {
    type V = NodeId;

    fn param(&mut self, p: ParamId) -> NodeId {
        Tape::param(self, p)
    }

    fn embed(&mut self, table: &NodeId, ids: &[usize]) -> Result<NodeId> {
        self.embedding_lookup(*table, ids)
    }

    fn matmul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul(self, *a, *b)
    }

    fn matmul_bt(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::matmul_bt(self, *a, *b)
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        Tape::add(self, *a, *b)
    }

    fn tanh(&mut self, a: &NodeId) -> NodeId {
        Tape::tanh(self, *a)
    }

    fn row_softmax(&mut self, a: &NodeId) -> NodeId {
        Tape::row_softmax(self, *a)
    }

    fn concat(&mut self, parts: &[&NodeId], axis: usize) -> Result<NodeId> {
        let ids: Vec<NodeId> = parts.iter().map(|p| **p).collect();
        Tape::concat(self, &ids, axis)
    }

    fn reshape(&mut self, a: &NodeId, shape: &[usize]) -> Result<NodeId> {
        Tape::reshape(self, *a, shape)
    }

    fn rows(&self, a: &NodeId) -> usize {
        self.value(*a).rows()
    }
}

/// A value in eager evaluation: either borrowed (parameters, cached
/// states) or freshly computed.
pub(crate) enum Val<'a> {
    Ref(&'a Tensor),
    Own(Tensor),
}

impl Val<'_> {
    pub fn get(&self) -> &Tensor {
        match self {
            Val::Ref(t) => t,
            Val::Own(t) => t,
        }
    }

    pub fn into_tensor(self) -> Tensor {
        match self {
            Val::Ref(t) => t.clone(),
            Val::Own(t) => t,
        }
    }
}

pub(crate) struct Eager<'a> {
    pub params: &'a ParamStore,
}

impl<'a> Graph for Eager<'a> {
    type V = Val<'a>;

    fn param(&mut self, p: ParamId) -> Val<'a> {
        Val::Ref(self.params.get(p))
    }

    fn embed(&mut self, table: &Val<'a>, ids: &[usize]) -> Result<Val<'a>> {
        Ok(Val::Own(table.get().gather_rows(ids)?))
    }

    fn matmul(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(Val::Own(a.get().matmul(b.get())?))
    }

    fn matmul_bt(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(Val::Own(a.get().matmul_bt(b.get())?))
    }

    fn add(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(Val::Own(a.get().add(b.get())?))
    }

    fn tanh(&mut self, a: &Val<'a>) -> Val<'a> {
        Val::Own(a.get().tanh())
    }

    fn row_softmax(&mut self, a: &Val<'a>) -> Val<'a> {
        Val::Own(a.get().row_softmax())
    }

    fn concat(&mut self, parts: &[&Val<'a>], axis: usize) -> Result<Val<'a>> {
        let ts: Vec<&Tensor> = parts.iter().map(|p| p.get()).collect();
        Ok(Val::Own(Tensor::concat(&ts, axis)?))
    }

    fn reshape(&mut self, a: &Val<'a>, shape: &[usize]) -> Result<Val<'a>> {
        Ok(Val::Own(a.get().reshape(shape)?))
    }

    fn rows(&self, a: &Val<'a>) -> usize {
        a.get().rows()
    }
}
