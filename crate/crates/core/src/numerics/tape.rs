//! Reverse-mode gradient tape over a fixed primitive set.
//!
//! Nodes are appended in evaluation order, so every op's inputs precede it and
//! the backward sweep is a single pass over the nodes in reverse.

use super::graph::Graph;
use super::tensor::{gaussian_kl, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Input,
    MatVec(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    Exp(NodeId),
    Scale(NodeId, f64),
    Concat(NodeId, NodeId),
    Slice(NodeId, usize),
    Column(NodeId, usize),
    Sum(NodeId),
    SoftmaxXent { logits: NodeId, target: usize, probs: Vec<f64> },
    GaussianKl([NodeId; 4]),
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

/// Gradients of one scalar with respect to every node on the tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient for `id`; zeros when the node does not influence the loss.
    pub fn get(&self, id: NodeId) -> Tensor {
        let shape = self.shapes[id.0].clone();
        match &self.grads[id.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient has node shape"),
            None => Tensor::zeros(&shape),
        }
    }
}

fn axpy(dst: &mut [f64], alpha: f64, src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += alpha * s;
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// A differentiable leaf (a parameter).
    pub fn leaf(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Leaf, true)
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, ids: &[NodeId]) -> bool {
        ids.iter().any(|id| self.nodes[id.0].requires_grad)
    }

    fn val(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    fn unary(&mut self, a: NodeId, value: Tensor, op: Op) -> NodeId {
        let rg = self.rg(&[a]);
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: NodeId, b: NodeId, value: Tensor, op: Op) -> NodeId {
        let rg = self.rg(&[a, b]);
        self.push(value, op, rg)
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        if self.val(loss).shape() != [1] {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.val(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let (lower, upper) = grads.split_at_mut(i);
            let Some(g) = upper[0].as_ref() else { continue };
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let mut acc = |id: NodeId, f: &mut dyn FnMut(&mut [f64])| {
                if self.nodes[id.0].requires_grad {
                    let slot = lower[id.0].get_or_insert_with(|| vec![0.0; self.nodes[id.0].value.len()]);
                    f(slot);
                }
            };
            match &node.op {
                Op::Leaf | Op::Input => {}
                Op::MatVec(m, x) => {
                    let (mv, xv) = (self.val(*m), self.val(*x));
                    let cols = mv.shape()[1];
                    acc(*m, &mut |dm| {
                        for (r, &gr) in g.iter().enumerate() {
                            axpy(&mut dm[r * cols..(r + 1) * cols], gr, xv.data());
                        }
                    });
                    acc(*x, &mut |dx| {
                        for (r, &gr) in g.iter().enumerate() {
                            axpy(dx, gr, &mv.data()[r * cols..(r + 1) * cols]);
                        }
                    });
                }
                Op::Add(a, b) => {
                    acc(*a, &mut |d| axpy(d, 1.0, g));
                    acc(*b, &mut |d| axpy(d, 1.0, g));
                }
                Op::Sub(a, b) => {
                    acc(*a, &mut |d| axpy(d, 1.0, g));
                    acc(*b, &mut |d| axpy(d, -1.0, g));
                }
                Op::Mul(a, b) => {
                    let (av, bv) = (self.val(*a).data(), self.val(*b).data());
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * bv[k];
                        }
                    });
                    acc(*b, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * av[k];
                        }
                    });
                }
                Op::Sigmoid(a) => {
                    let y = node.value.data();
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * y[k] * (1.0 - y[k]);
                        }
                    });
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * (1.0 - y[k] * y[k]);
                        }
                    });
                }
                Op::Exp(a) => {
                    let y = node.value.data();
                    acc(*a, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g[k] * y[k];
                        }
                    });
                }
                Op::Scale(a, c) => acc(*a, &mut |d| axpy(d, *c, g)),
                Op::Concat(a, b) => {
                    let n = self.val(*a).len();
                    acc(*a, &mut |d| axpy(d, 1.0, &g[..n]));
                    acc(*b, &mut |d| axpy(d, 1.0, &g[n..]));
                }
                Op::Slice(a, start) => {
                    let start = *start;
                    acc(*a, &mut |d| axpy(&mut d[start..start + g.len()], 1.0, g));
                }
                Op::Column(m, j) => {
                    let cols = self.val(*m).shape()[1];
                    acc(*m, &mut |d| {
                        for (r, &gr) in g.iter().enumerate() {
                            d[r * cols + j] += gr;
                        }
                    });
                }
                Op::Sum(a) => acc(*a, &mut |d| d.iter_mut().for_each(|x| *x += g[0])),
                Op::SoftmaxXent { logits, target, probs } => {
                    acc(*logits, &mut |d| {
                        axpy(d, g[0], probs);
                        d[*target] -= g[0];
                    });
                }
                Op::GaussianKl([mq, sq, mp, sp]) => {
                    let (mqv, sqv, mpv, spv) = (
                        self.val(*mq).data(),
                        self.val(*sq).data(),
                        self.val(*mp).data(),
                        self.val(*sp).data(),
                    );
                    let g0 = g[0];
                    acc(*mq, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g0 * (mqv[k] - mpv[k]) / (spv[k] * spv[k]);
                        }
                    });
                    acc(*mp, &mut |d| {
                        for k in 0..d.len() {
                            d[k] -= g0 * (mqv[k] - mpv[k]) / (spv[k] * spv[k]);
                        }
                    });
                    acc(*sq, &mut |d| {
                        for k in 0..d.len() {
                            d[k] += g0 * (sqv[k] / (spv[k] * spv[k]) - 1.0 / sqv[k]);
                        }
                    });
                    acc(*sp, &mut |d| {
                        for k in 0..d.len() {
                            let diff = mqv[k] - mpv[k];
                            let s3 = spv[k] * spv[k] * spv[k];
                            d[k] += g0 * (1.0 / spv[k] - (sqv[k] * sqv[k] + diff * diff) / s3);
                        }
                    });
                }
            }
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }
}

impl Graph for Tape {
    type Var = NodeId;

    fn input(&mut self, t: Tensor) -> NodeId {
        self.push(t, Op::Input, false)
    }

    fn value<'s>(&'s self, v: &'s NodeId) -> &'s Tensor {
        self.val(*v)
    }

    fn matvec(&mut self, m: &NodeId, x: &NodeId) -> Result<NodeId> {
        let v = self.val(*m).matvec(self.val(*x))?;
        Ok(self.binary(*m, *x, v, Op::MatVec(*m, *x)))
    }

    fn add(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).add(self.val(*b))?;
        Ok(self.binary(*a, *b, v, Op::Add(*a, *b)))
    }

    fn sub(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).sub(self.val(*b))?;
        Ok(self.binary(*a, *b, v, Op::Sub(*a, *b)))
    }

    fn mul(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).mul(self.val(*b))?;
        Ok(self.binary(*a, *b, v, Op::Mul(*a, *b)))
    }

    fn sigmoid(&mut self, a: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).sigmoid()?;
        Ok(self.unary(*a, v, Op::Sigmoid(*a)))
    }

    fn tanh(&mut self, a: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).tanh()?;
        Ok(self.unary(*a, v, Op::Tanh(*a)))
    }

    fn exp(&mut self, a: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).exp()?;
        Ok(self.unary(*a, v, Op::Exp(*a)))
    }

    fn scale(&mut self, a: &NodeId, c: f64) -> Result<NodeId> {
        let v = self.val(*a).scale(c)?;
        Ok(self.unary(*a, v, Op::Scale(*a, c)))
    }

    fn concat(&mut self, a: &NodeId, b: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).concat(self.val(*b))?;
        Ok(self.binary(*a, *b, v, Op::Concat(*a, *b)))
    }

    fn slice(&mut self, a: &NodeId, start: usize, len: usize) -> Result<NodeId> {
        let v = self.val(*a).slice(start, len)?;
        Ok(self.unary(*a, v, Op::Slice(*a, start)))
    }

    fn column(&mut self, m: &NodeId, j: usize) -> Result<NodeId> {
        let v = self.val(*m).column(j)?;
        Ok(self.unary(*m, v, Op::Column(*m, j)))
    }

    fn sum(&mut self, a: &NodeId) -> Result<NodeId> {
        let v = self.val(*a).sum()?;
        Ok(self.unary(*a, v, Op::Sum(*a)))
    }

    fn softmax_cross_entropy(&mut self, logits: &NodeId, target: usize) -> Result<NodeId> {
        let lv = self.val(*logits);
        let loss = lv.softmax_cross_entropy(target)?;
        let probs = lv.softmax()?.into_data();
        Ok(self.unary(
            *logits,
            Tensor::vector(vec![loss]),
            Op::SoftmaxXent {
                logits: *logits,
                target,
                probs,
            },
        ))
    }

    fn gaussian_kl(
        &mut self,
        mu_q: &NodeId,
        sigma_q: &NodeId,
        mu_p: &NodeId,
        sigma_p: &NodeId,
    ) -> Result<NodeId> {
        let kl = gaussian_kl(self.val(*mu_q), self.val(*sigma_q), self.val(*mu_p), self.val(*sigma_p))?;
        let ids = [*mu_q, *sigma_q, *mu_p, *sigma_p];
        let rg = self.rg(&ids);
        Ok(self.push(Tensor::vector(vec![kl]), Op::GaussianKl(ids), rg))
    }
}
