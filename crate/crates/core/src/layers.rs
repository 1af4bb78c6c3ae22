//! Parameterized building blocks of the decoder.
//!
//! Parameter structs are generic over their element type: `T = Tensor` for
//! stored weights, `T = G::Var` once lifted into a [`Graph`]. Every step
//! function is written once against [`Graph`].

use crate::error::{Error, Result};
use crate::numerics::{Graph, RandomSource, Tensor};

macro_rules! param_struct {
    ($(#[$meta:meta])* $name:ident { $($field:ident),* $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name<T = Tensor> {
            $(pub $field: T,)*
        }

        impl<T> $name<T> {
            pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> $name<U> {
                $name { $($field: f(stringify!($field), &self.$field),)* }
            }

            pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a T)) {
                $(f(stringify!($field), &self.$field);)*
            }

            pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
                $(f(stringify!($field), &mut self.$field);)*
            }
        }
    };
}

param_struct! {
    /// Word embedding matrix `D_s x D_a`.
    EmbeddingParams { u_s }
}

param_struct! {
    /// Standard LSTM: per-gate input, recurrent and bias terms.
    LstmParams {
        w_xf, w_xi, w_xo, w_xg,
        w_hf, w_hi, w_ho, w_hg,
        b_f, b_i, b_o, b_g,
    }
}

param_struct! {
    /// Multimodal LSTM: an LSTM whose gates also read the pooled video feature.
    MLstmParams {
        w_xf, w_xi, w_xo, w_xg,
        w_hf, w_hi, w_ho, w_hg,
        w_yf, w_yi, w_yo, w_yg,
        b_f, b_i, b_o, b_g,
    }
}

param_struct! {
    /// Two fully connected layers: `w2 * tanh(w1 * x + b1) + b2`.
    FcNet { w1, b1, w2, b2 }
}

param_struct! {
    /// Output projection onto the vocabulary.
    OutputParams { u_p, b }
}

/// Prior (`fc_p*`) and posterior (`fc_q*`) networks of the stochastic cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticParams<T = Tensor> {
    pub fc_p1: FcNet<T>,
    pub fc_p2: FcNet<T>,
    pub fc_q1: FcNet<T>,
    pub fc_q2: FcNet<T>,
}

impl<T> StochasticParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> StochasticParams<U> {
        StochasticParams {
            fc_p1: self.fc_p1.map(&mut |n, t| f(&format!("fc_p1.{n}"), t)),
            fc_p2: self.fc_p2.map(&mut |n, t| f(&format!("fc_p2.{n}"), t)),
            fc_q1: self.fc_q1.map(&mut |n, t| f(&format!("fc_q1.{n}"), t)),
            fc_q2: self.fc_q2.map(&mut |n, t| f(&format!("fc_q2.{n}"), t)),
        }
    }

    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a T)) {
        self.fc_p1.visit(&mut |n, t| f(&format!("fc_p1.{n}"), t));
        self.fc_p2.visit(&mut |n, t| f(&format!("fc_p2.{n}"), t));
        self.fc_q1.visit(&mut |n, t| f(&format!("fc_q1.{n}"), t));
        self.fc_q2.visit(&mut |n, t| f(&format!("fc_q2.{n}"), t));
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        self.fc_p1.visit_mut(&mut |n, t| f(&format!("fc_p1.{n}"), t));
        self.fc_p2.visit_mut(&mut |n, t| f(&format!("fc_p2.{n}"), t));
        self.fc_q1.visit_mut(&mut |n, t| f(&format!("fc_q1.{n}"), t));
        self.fc_q2.visit_mut(&mut |n, t| f(&format!("fc_q2.{n}"), t));
    }
}

/// Weight initializer: uniform(-scale, scale) for matrices, zeros for biases.
pub struct Init<'a> {
    pub rs: &'a mut RandomSource,
    pub scale: f64,
}

impl Init<'_> {
    pub fn weight(&mut self, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| self.rs.uniform_range(-self.scale, self.scale))
            .collect();
        Tensor::matrix(rows, cols, data).expect("sized by construction")
    }

    pub fn bias(&mut self, n: usize) -> Tensor {
        Tensor::zeros(&[n])
    }
}

impl EmbeddingParams {
    pub fn init(init: &mut Init, d_s: usize, d_a: usize) -> Self {
        EmbeddingParams { u_s: init.weight(d_s, d_a) }
    }

    pub fn vocab_size(&self) -> usize {
        self.u_s.shape()[1]
    }
}

impl LstmParams {
    pub fn init(init: &mut Init, input: usize, hidden: usize) -> Self {
        LstmParams {
            w_xf: init.weight(hidden, input),
            w_xi: init.weight(hidden, input),
            w_xo: init.weight(hidden, input),
            w_xg: init.weight(hidden, input),
            w_hf: init.weight(hidden, hidden),
            w_hi: init.weight(hidden, hidden),
            w_ho: init.weight(hidden, hidden),
            w_hg: init.weight(hidden, hidden),
            b_f: init.bias(hidden),
            b_i: init.bias(hidden),
            b_o: init.bias(hidden),
            b_g: init.bias(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_f.len()
    }
}

impl MLstmParams {
    pub fn init(init: &mut Init, input: usize, video: usize, hidden: usize) -> Self {
        MLstmParams {
            w_xf: init.weight(hidden, input),
            w_xi: init.weight(hidden, input),
            w_xo: init.weight(hidden, input),
            w_xg: init.weight(hidden, input),
            w_hf: init.weight(hidden, hidden),
            w_hi: init.weight(hidden, hidden),
            w_ho: init.weight(hidden, hidden),
            w_hg: init.weight(hidden, hidden),
            w_yf: init.weight(hidden, video),
            w_yi: init.weight(hidden, video),
            w_yo: init.weight(hidden, video),
            w_yg: init.weight(hidden, video),
            b_f: init.bias(hidden),
            b_i: init.bias(hidden),
            b_o: init.bias(hidden),
            b_g: init.bias(hidden),
        }
    }

    pub fn hidden(&self) -> usize {
        self.b_f.len()
    }
}

impl FcNet {
    pub fn init(init: &mut Init, input: usize, hidden: usize, output: usize) -> Self {
        FcNet {
            w1: init.weight(hidden, input),
            b1: init.bias(hidden),
            w2: init.weight(output, hidden),
            b2: init.bias(output),
        }
    }
}

impl StochasticParams {
    pub fn init(init: &mut Init, d_z: usize, h: usize, h_r: usize, fc_hidden: usize) -> Self {
        StochasticParams {
            fc_p1: FcNet::init(init, d_z + h, fc_hidden, d_z),
            fc_p2: FcNet::init(init, d_z + h, fc_hidden, d_z),
            fc_q1: FcNet::init(init, d_z + h_r, fc_hidden, d_z),
            fc_q2: FcNet::init(init, d_z + h_r, fc_hidden, d_z),
        }
    }
}

impl OutputParams {
    pub fn init(init: &mut Init, d_a: usize, d_in: usize) -> Self {
        OutputParams {
            u_p: init.weight(d_a, d_in),
            b: init.bias(d_a),
        }
    }
}

/// Column lookup: `U_s * onehot(token)`.
pub fn embed<G: Graph>(g: &mut G, p: &EmbeddingParams<G::Var>, token: usize) -> Result<G::Var> {
    g.column(&p.u_s, token)
}

fn preactivation<G: Graph>(
    g: &mut G,
    terms: &[(&G::Var, &G::Var)],
    bias: &G::Var,
) -> Result<G::Var> {
    let mut acc = g.matvec(terms[0].0, terms[0].1)?;
    for (w, x) in &terms[1..] {
        let t = g.matvec(w, x)?;
        acc = g.add(&acc, &t)?;
    }
    g.add(&acc, bias)
}

/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
fn cell_update<G: Graph>(
    g: &mut G,
    [f, i, o, cand]: [G::Var; 4],
    c_prev: &G::Var,
) -> Result<(G::Var, G::Var)> {
    let kept = g.mul(&f, c_prev)?;
    let written = g.mul(&i, &cand)?;
    let c = g.add(&kept, &written)?;
    let tc = g.tanh(&c)?;
    let h = g.mul(&o, &tc)?;
    Ok((h, c))
}

pub fn lstm_step<G: Graph>(
    g: &mut G,
    p: &LstmParams<G::Var>,
    x: &G::Var,
    h_prev: &G::Var,
    c_prev: &G::Var,
) -> Result<(G::Var, G::Var)> {
    let f = preactivation(g, &[(&p.w_xf, x), (&p.w_hf, h_prev)], &p.b_f)?;
    let f = g.sigmoid(&f)?;
    let i = preactivation(g, &[(&p.w_xi, x), (&p.w_hi, h_prev)], &p.b_i)?;
    let i = g.sigmoid(&i)?;
    let o = preactivation(g, &[(&p.w_xo, x), (&p.w_ho, h_prev)], &p.b_o)?;
    let o = g.sigmoid(&o)?;
    let cand = preactivation(g, &[(&p.w_xg, x), (&p.w_hg, h_prev)], &p.b_g)?;
    let cand = g.tanh(&cand)?;
    cell_update(g, [f, i, o, cand], c_prev)
}

/// M-LSTM step: every gate adds a `W_y * v_bar` term before its activation.
pub fn mlstm_step<G: Graph>(
    g: &mut G,
    p: &MLstmParams<G::Var>,
    s_prime: &G::Var,
    v_bar: &G::Var,
    l_prev: &G::Var,
    c_prev: &G::Var,
) -> Result<(G::Var, G::Var)> {
    let f = preactivation(g, &[(&p.w_xf, s_prime), (&p.w_hf, l_prev), (&p.w_yf, v_bar)], &p.b_f)?;
    let f = g.sigmoid(&f)?;
    let i = preactivation(g, &[(&p.w_xi, s_prime), (&p.w_hi, l_prev), (&p.w_yi, v_bar)], &p.b_i)?;
    let i = g.sigmoid(&i)?;
    let o = preactivation(g, &[(&p.w_xo, s_prime), (&p.w_ho, l_prev), (&p.w_yo, v_bar)], &p.b_o)?;
    let o = g.sigmoid(&o)?;
    let cand = preactivation(g, &[(&p.w_xg, s_prime), (&p.w_hg, l_prev), (&p.w_yg, v_bar)], &p.b_g)?;
    let cand = g.tanh(&cand)?;
    cell_update(g, [f, i, o, cand], c_prev)
}

/// Runs an LSTM right-to-left over `concat(s_next[t], l[t])` from a zero state.
/// The returned sequence is indexed forward: `r[t]` summarizes steps `t..T`.
pub fn backward_lstm_run<G: Graph>(
    g: &mut G,
    p: &LstmParams<G::Var>,
    hidden: usize,
    s_next_seq: &[G::Var],
    l_seq: &[G::Var],
) -> Result<Vec<G::Var>> {
    if s_next_seq.len() != l_seq.len() {
        return Err(Error::contract(format!(
            "backward LSTM inputs differ in length: {} vs {}",
            s_next_seq.len(),
            l_seq.len()
        )));
    }
    let mut r = g.input(Tensor::zeros(&[hidden]));
    let mut c = g.input(Tensor::zeros(&[hidden]));
    let mut out = Vec::with_capacity(l_seq.len());
    for t in (0..l_seq.len()).rev() {
        let x = g.concat(&s_next_seq[t], &l_seq[t])?;
        (r, c) = lstm_step(g, p, &x, &r, &c)?;
        out.push(r.clone());
    }
    out.reverse();
    Ok(out)
}

pub fn fc_forward<G: Graph>(g: &mut G, p: &FcNet<G::Var>, x: &G::Var) -> Result<G::Var> {
    let a = g.matvec(&p.w1, x)?;
    let a = g.add(&a, &p.b1)?;
    let a = g.tanh(&a)?;
    let y = g.matvec(&p.w2, &a)?;
    g.add(&y, &p.b2)
}

fn gaussian_stats<G: Graph>(
    g: &mut G,
    mean_net: &FcNet<G::Var>,
    logvar_net: &FcNet<G::Var>,
    z_prev: &G::Var,
    cond: &G::Var,
) -> Result<(G::Var, G::Var)> {
    let x = g.concat(z_prev, cond)?;
    let mu = fc_forward(g, mean_net, &x)?;
    let half = fc_forward(g, logvar_net, &x)?;
    let half = g.scale(&half, 0.5)?;
    let sigma = g.exp(&half)?;
    Ok((mu, sigma))
}

/// Prior statistics from `[z_prev, l_t]`.
pub fn prior_stats<G: Graph>(
    g: &mut G,
    p: &StochasticParams<G::Var>,
    z_prev: &G::Var,
    l_t: &G::Var,
) -> Result<(G::Var, G::Var)> {
    gaussian_stats(g, &p.fc_p1, &p.fc_p2, z_prev, l_t)
}

/// Posterior statistics from `[z_prev, r_t]`.
pub fn posterior_stats<G: Graph>(
    g: &mut G,
    p: &StochasticParams<G::Var>,
    z_prev: &G::Var,
    r_t: &G::Var,
) -> Result<(G::Var, G::Var)> {
    gaussian_stats(g, &p.fc_q1, &p.fc_q2, z_prev, r_t)
}

/// Pre-softmax scores `U_p * [z_t, l_t] + b`.
pub fn output_logits<G: Graph>(
    g: &mut G,
    p: &OutputParams<G::Var>,
    z_t: &G::Var,
    l_t: &G::Var,
) -> Result<G::Var> {
    let x = g.concat(z_t, l_t)?;
    let y = g.matvec(&p.u_p, &x)?;
    g.add(&y, &p.b)
}
