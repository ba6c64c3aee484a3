use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major `f64` tensor. Kernels treat rank-1 tensors as a single row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> Error {
    Error::ShapeMismatch {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    }
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || n == 0 || n != data.len() {
            return Err(Error::ShapeMismatch {
                op: "new",
                lhs: shape,
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        assert!(n > 0, "zero-extent tensor {shape:?}");
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![v],
        }
    }

    pub fn row(values: Vec<f64>) -> Self {
        let n = values.len();
        assert!(n > 0, "empty row");
        Tensor {
            shape: vec![1, n],
            data: values,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        self.data[0]
    }

    /// Rows of the 2-D view; rank-1 tensors are one row.
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => 1,
            _ => self.shape[..self.shape.len() - 1].iter().product(),
        }
    }

    pub fn cols(&self) -> usize {
        *self.shape.last().expect("rank >= 1")
    }

    pub fn row_slice(&self, i: usize) -> &[f64] {
        let c = self.cols();
        &self.data[i * c..(i + 1) * c]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        Tensor::new(shape.to_vec(), self.data.clone())
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (k2, n) = (rhs.rows(), rhs.cols());
        if k != k2 {
            return Err(mismatch("matmul", self, rhs));
        }
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            let o = &mut out[i * n..(i + 1) * n];
            for (p, &av) in a.iter().enumerate() {
                let b = &rhs.data[p * n..(p + 1) * n];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `self @ rhsᵀ`.
    pub fn matmul_bt(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (n, k2) = (rhs.rows(), rhs.cols());
        if k != k2 {
            return Err(mismatch("matmul_bt", self, rhs));
        }
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            for j in 0..n {
                let b = &rhs.data[j * k..(j + 1) * k];
                out.push(dot(a, b));
            }
        }
        Tensor::matrix(m, n, out)
    }

    /// `selfᵀ @ rhs`.
    pub fn matmul_at(&self, rhs: &Tensor) -> Result<Tensor> {
        let (m, k) = (self.rows(), self.cols());
        let (m2, n) = (rhs.rows(), rhs.cols());
        if m != m2 {
            return Err(mismatch("matmul_at", self, rhs));
        }
        let mut out = vec![0.0; k * n];
        for i in 0..m {
            let a = &self.data[i * k..(i + 1) * k];
            let b = &rhs.data[i * n..(i + 1) * n];
            for (p, &av) in a.iter().enumerate() {
                let o = &mut out[p * n..(p + 1) * n];
                for (ov, &bv) in o.iter_mut().zip(b) {
                    *ov += av * bv;
                }
            }
        }
        Tensor::matrix(k, n, out)
    }

    /// Elementwise sum; `rhs` may also be a single row broadcast over `self`.
    pub fn add(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.data.len() == rhs.data.len() && self.cols() == rhs.cols() {
            let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        if rhs.rows() == 1 && rhs.cols() == self.cols() {
            let c = self.cols();
            let data = self
                .data
                .iter()
                .enumerate()
                .map(|(i, a)| a + rhs.data[i % c])
                .collect();
            return Ok(Tensor {
                shape: self.shape.clone(),
                data,
            });
        }
        Err(mismatch("add", self, rhs))
    }

    pub fn mul(&self, rhs: &Tensor) -> Result<Tensor> {
        if self.shape != rhs.shape {
            return Err(mismatch("mul", self, rhs));
        }
        let data = self.data.iter().zip(&rhs.data).map(|(a, b)| a * b).collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn tanh(&self) -> Tensor {
        self.map(f64::tanh)
    }

    pub fn sigmoid(&self) -> Tensor {
        self.map(sigmoid)
    }

    /// Softmax of each row, stabilized by subtracting the row max.
    pub fn row_softmax(&self) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(c) {
            data.extend(softmax(row));
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Row-wise log-softmax.
    pub fn row_log_softmax(&self) -> Tensor {
        let c = self.cols();
        let mut data = Vec::with_capacity(self.data.len());
        for row in self.data.chunks(c) {
            data.extend(log_softmax(row));
        }
        Tensor {
            shape: self.shape.clone(),
            data,
        }
    }

    /// Gathers rows of a `[V, d]` table.
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor> {
        let d = self.cols();
        let v = self.rows();
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= v {
                return Err(Error::ShapeMismatch {
                    op: "embedding_lookup",
                    lhs: self.shape.clone(),
                    rhs: vec![id],
                });
            }
            data.extend_from_slice(self.row_slice(id));
        }
        Tensor::matrix(ids.len(), d, data)
    }

    /// Stacks 2-D tensors vertically (`axis == 0`) or side by side (`axis == 1`).
    pub fn concat(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
        let first = parts.first().ok_or(Error::ShapeMismatch {
            op: "concat",
            lhs: vec![],
            rhs: vec![],
        })?;
        match axis {
            0 => {
                let c = first.cols();
                let mut rows = 0;
                let mut data = Vec::new();
                for p in parts {
                    if p.cols() != c {
                        return Err(mismatch("concat", first, p));
                    }
                    rows += p.rows();
                    data.extend_from_slice(&p.data);
                }
                Tensor::matrix(rows, c, data)
            }
            _ => {
                let r = first.rows();
                let mut cols = 0;
                for p in parts {
                    if p.rows() != r {
                        return Err(mismatch("concat", first, p));
                    }
                    cols += p.cols();
                }
                let mut data = Vec::with_capacity(r * cols);
                for i in 0..r {
                    for p in parts {
                        data.extend_from_slice(p.row_slice(i));
                    }
                }
                Tensor::matrix(r, cols, data)
            }
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// In-place `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Tensor, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn fill(&mut self, v: f64) {
        self.data.iter_mut().for_each(|x| *x = v);
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn log_softmax(row: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(row);
    row.iter().map(|v| v - lse).collect()
}

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
