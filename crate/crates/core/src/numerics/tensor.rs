//! Dense rank-1/rank-2 float64 tensors and the arithmetic kernels shared by
//! the eager evaluator and the gradient tape.

use crate::error::{Error, Result};

/// Row-major dense tensor of rank 1 or 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn ensure_finite(op: &'static str, data: &[f64]) -> Result<()> {
    if data.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { op })
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

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 2 {
            return Err(Error::contract(format!(
                "tensor rank must be 1 or 2, got shape {shape:?}"
            )));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dims("Tensor::new", &shape, &[data.len()]));
        }
        ensure_finite("Tensor::new", &data)?;
        Ok(Tensor { shape, data })
    }

    /// Rank-1 tensor. Panics on non-finite input.
    pub fn vector(data: Vec<f64>) -> Self {
        assert!(data.iter().all(|x| x.is_finite()), "non-finite vector entry");
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        assert!(!shape.is_empty() && shape.len() <= 2);
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; shape.iter().product()],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Tensor::zeros(&[n, n]);
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

    /// Mutable element access. Callers are responsible for keeping entries finite.
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

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_vector(&self) -> bool {
        self.shape.len() == 1
    }

    fn expect_vector(&self, op: &'static str) -> Result<()> {
        if self.is_vector() {
            Ok(())
        } else {
            Err(Error::dims(op, &self.shape, &[self.len()]))
        }
    }

    fn expect_same(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.shape == other.shape {
            Ok(())
        } else {
            Err(Error::dims(op, &self.shape, &other.shape))
        }
    }

    /// The single element of a length-1 vector.
    pub fn scalar(&self) -> Result<f64> {
        if self.shape == [1] {
            Ok(self.data[0])
        } else {
            Err(Error::contract(format!(
                "expected a scalar, got shape {:?}",
                self.shape
            )))
        }
    }

    pub fn matvec(&self, x: &Tensor) -> Result<Tensor> {
        if self.rank() != 2 || !x.is_vector() || self.shape[1] != x.shape[0] {
            return Err(Error::dims("matvec", &self.shape, &x.shape));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        let out: Vec<f64> = (0..rows)
            .map(|r| {
                self.data[r * cols..(r + 1) * cols]
                    .iter()
                    .zip(&x.data)
                    .fold(0.0, |acc, (a, b)| acc + a * b)
            })
            .collect();
        ensure_finite("matvec", &out)?;
        Ok(Tensor {
            shape: vec![rows],
            data: out,
        })
    }

    fn zip_with(&self, other: &Tensor, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        self.expect_same(op, other)?;
        let data: Vec<f64> = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        ensure_finite(op, &data)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    fn map(&self, op: &'static str, f: impl Fn(f64) -> f64) -> Result<Tensor> {
        let data: Vec<f64> = self.data.iter().map(|&a| f(a)).collect();
        ensure_finite(op, &data)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn sigmoid(&self) -> Result<Tensor> {
        self.map("sigmoid", sigmoid)
    }

    pub fn tanh(&self) -> Result<Tensor> {
        self.map("tanh", f64::tanh)
    }

    pub fn exp(&self) -> Result<Tensor> {
        self.map("exp", f64::exp)
    }

    pub fn scale(&self, c: f64) -> Result<Tensor> {
        self.map("scale", |a| a * c)
    }

    pub fn concat(&self, other: &Tensor) -> Result<Tensor> {
        self.expect_vector("concat")?;
        other.expect_vector("concat")?;
        let mut data = Vec::with_capacity(self.len() + other.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Tensor::vector(data))
    }

    pub fn slice(&self, start: usize, len: usize) -> Result<Tensor> {
        self.expect_vector("slice")?;
        if start + len > self.len() {
            return Err(Error::dims("slice", &self.shape, &[start, len]));
        }
        Ok(Tensor::vector(self.data[start..start + len].to_vec()))
    }

    /// Column `j` of a matrix (a one-hot product realized as a lookup).
    pub fn column(&self, j: usize) -> Result<Tensor> {
        if self.rank() != 2 {
            return Err(Error::dims("column", &self.shape, &[j]));
        }
        let (rows, cols) = (self.shape[0], self.shape[1]);
        if j >= cols {
            return Err(Error::Vocabulary { index: j, size: cols });
        }
        Ok(Tensor::vector((0..rows).map(|r| self.data[r * cols + j]).collect()))
    }

    pub fn sum(&self) -> Result<Tensor> {
        let s: f64 = self.data.iter().sum();
        ensure_finite("sum", &[s])?;
        Ok(Tensor::vector(vec![s]))
    }

    pub fn softmax(&self) -> Result<Tensor> {
        self.expect_vector("softmax")?;
        if self.is_empty() {
            return Err(Error::dims("softmax", &self.shape, &[1]));
        }
        let max = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = self.data.iter().map(|&x| (x - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Ok(Tensor::vector(exps.into_iter().map(|e| e / total).collect()))
    }

    /// `log(sum(exp(x))) - x[target]`, i.e. the negative log-softmax at `target`.
    pub fn softmax_cross_entropy(&self, target: usize) -> Result<f64> {
        self.expect_vector("softmax_cross_entropy")?;
        if target >= self.len() {
            return Err(Error::Vocabulary {
                index: target,
                size: self.len(),
            });
        }
        let max = self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = self.data.iter().map(|&x| (x - max).exp()).sum();
        Ok(total.ln() + max - self.data[target])
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Closed-form KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)) summed over dimensions.
pub fn gaussian_kl(mu_q: &Tensor, sigma_q: &Tensor, mu_p: &Tensor, sigma_p: &Tensor) -> Result<f64> {
    for t in [sigma_q, mu_p, sigma_p] {
        mu_q.expect_same("gaussian_kl", t)?;
    }
    if sigma_q.data.iter().chain(&sigma_p.data).any(|&s| s <= 0.0) {
        return Err(Error::Domain("gaussian_kl requires strictly positive sigma".into()));
    }
    let mut kl = 0.0;
    for i in 0..mu_q.len() {
        let (mq, sq, mp, sp) = (mu_q.data[i], sigma_q.data[i], mu_p.data[i], sigma_p.data[i]);
        let d = mq - mp;
        kl += (sp / sq).ln() + (sq * sq + d * d) / (2.0 * sp * sp) - 0.5;
    }
    ensure_finite("gaussian_kl", &[kl])?;
    Ok(kl)
}
