//! The primitive op set that layer code is written against.
//!
//! Layers are generic over [`Graph`], so the same forward definition runs
//! eagerly ([`Eval`]) for inference or is recorded on a [`Tape`](super::Tape)
//! for reverse-mode differentiation.

use std::ops::Deref;
use std::rc::Rc;

use super::tensor::{gaussian_kl, Tensor};
use crate::error::Result;

pub trait Graph {
    type Var: Clone;

    /// A non-differentiable input.
    fn input(&mut self, t: Tensor) -> Self::Var;
    fn value<'s>(&'s self, v: &'s Self::Var) -> &'s Tensor;

    fn matvec(&mut self, m: &Self::Var, x: &Self::Var) -> Result<Self::Var>;
    fn add(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn sub(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn mul(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn sigmoid(&mut self, a: &Self::Var) -> Result<Self::Var>;
    fn tanh(&mut self, a: &Self::Var) -> Result<Self::Var>;
    fn exp(&mut self, a: &Self::Var) -> Result<Self::Var>;
    fn scale(&mut self, a: &Self::Var, c: f64) -> Result<Self::Var>;
    fn concat(&mut self, a: &Self::Var, b: &Self::Var) -> Result<Self::Var>;
    fn slice(&mut self, a: &Self::Var, start: usize, len: usize) -> Result<Self::Var>;
    fn column(&mut self, m: &Self::Var, j: usize) -> Result<Self::Var>;
    fn sum(&mut self, a: &Self::Var) -> Result<Self::Var>;
    /// Scalar `-log softmax(logits)[target]`.
    fn softmax_cross_entropy(&mut self, logits: &Self::Var, target: usize) -> Result<Self::Var>;
    /// Scalar Gaussian KL(q || p) summed over dimensions.
    fn gaussian_kl(
        &mut self,
        mu_q: &Self::Var,
        sigma_q: &Self::Var,
        mu_p: &Self::Var,
        sigma_p: &Self::Var,
    ) -> Result<Self::Var>;
}

/// Value handle for [`Eval`]: parameters are borrowed, intermediates are shared.
#[derive(Debug, Clone)]
pub enum Val<'a> {
    Ref(&'a Tensor),
    Own(Rc<Tensor>),
}

impl Deref for Val<'_> {
    type Target = Tensor;
    fn deref(&self) -> &Tensor {
        match self {
            Val::Ref(t) => t,
            Val::Own(t) => t,
        }
    }
}

impl From<Tensor> for Val<'_> {
    fn from(t: Tensor) -> Self {
        Val::Own(Rc::new(t))
    }
}

/// Eager evaluator: computes values, records nothing.
#[derive(Debug, Default)]
pub struct Eval<'a> {
    _params: std::marker::PhantomData<&'a Tensor>,
}

impl Eval<'_> {
    pub fn new() -> Self {
        Eval::default()
    }
}

impl<'a> Graph for Eval<'a> {
    type Var = Val<'a>;

    fn input(&mut self, t: Tensor) -> Val<'a> {
        t.into()
    }

    fn value<'s>(&'s self, v: &'s Val<'a>) -> &'s Tensor {
        v
    }

    fn matvec(&mut self, m: &Val<'a>, x: &Val<'a>) -> Result<Val<'a>> {
        Ok(m.matvec(x)?.into())
    }

    fn add(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.add(b)?.into())
    }

    fn sub(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.sub(b)?.into())
    }

    fn mul(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.mul(b)?.into())
    }

    fn sigmoid(&mut self, a: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.sigmoid()?.into())
    }

    fn tanh(&mut self, a: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.tanh()?.into())
    }

    fn exp(&mut self, a: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.exp()?.into())
    }

    fn scale(&mut self, a: &Val<'a>, c: f64) -> Result<Val<'a>> {
        Ok(a.scale(c)?.into())
    }

    fn concat(&mut self, a: &Val<'a>, b: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.concat(b)?.into())
    }

    fn slice(&mut self, a: &Val<'a>, start: usize, len: usize) -> Result<Val<'a>> {
        Ok(a.slice(start, len)?.into())
    }

    fn column(&mut self, m: &Val<'a>, j: usize) -> Result<Val<'a>> {
        Ok(m.column(j)?.into())
    }

    fn sum(&mut self, a: &Val<'a>) -> Result<Val<'a>> {
        Ok(a.sum()?.into())
    }

    fn softmax_cross_entropy(&mut self, logits: &Val<'a>, target: usize) -> Result<Val<'a>> {
        Ok(Tensor::vector(vec![logits.softmax_cross_entropy(target)?]).into())
    }

    fn gaussian_kl(
        &mut self,
        mu_q: &Val<'a>,
        sigma_q: &Val<'a>,
        mu_p: &Val<'a>,
        sigma_p: &Val<'a>,
    ) -> Result<Val<'a>> {
        Ok(Tensor::vector(vec![gaussian_kl(mu_q, sigma_q, mu_p, sigma_p)?]).into())
    }
}
