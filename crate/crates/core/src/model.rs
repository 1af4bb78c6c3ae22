//! The full decoder: mean-pooled video feature, word LSTM, M-LSTM, backward
//! LSTM with the stochastic cell, and the ELBO objective.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::layers::{
    self, EmbeddingParams, Init, LstmParams, MLstmParams, OutputParams, StochasticParams,
};
use crate::numerics::{Eval, Graph, RandomSource, Tape, Tensor, Val};

/// Layer sizes. `d_a` is the vocabulary size including reserved tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub d_v: usize,
    pub d_s: usize,
    pub h: usize,
    pub h_r: usize,
    pub d_z: usize,
    pub d_a: usize,
    pub fc_hidden: usize,
}

impl Dims {
    /// Desk-scale defaults for a given vocabulary size.
    pub fn desk(d_a: usize) -> Self {
        Dims {
            d_v: 16,
            d_s: 16,
            h: 32,
            h_r: 32,
            d_z: 8,
            d_a,
            fc_hidden: 8,
        }
    }
}

/// `M` drops the stochastic path entirely; `M+S` is the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationMode {
    Deterministic,
    Stochastic,
}

impl fmt::Display for AblationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AblationMode::Deterministic => write!(f, "M"),
            AblationMode::Stochastic => write!(f, "M+S"),
        }
    }
}

impl FromStr for AblationMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "M" | "m" => Ok(AblationMode::Deterministic),
            "M+S" | "m+s" => Ok(AblationMode::Stochastic),
            other => Err(Error::Usage(format!("unknown ablation mode `{other}` (expected M or M+S)"))),
        }
    }
}

/// Which posterior mean the KL term compares against the prior.
///
/// Training samples `z = mu_q + mu_p + sigma_q * eps`, so `Effective` uses
/// `mu_q + mu_p`; `Residual` uses the raw `mu_q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PosteriorMean {
    Effective,
    Residual,
}

impl FromStr for PosteriorMean {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "effective" => Ok(PosteriorMean::Effective),
            "residual" => Ok(PosteriorMean::Residual),
            other => Err(Error::Usage(format!(
                "unknown kl mean `{other}` (expected effective or residual)"
            ))),
        }
    }
}

impl fmt::Display for PosteriorMean {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PosteriorMean::Effective => write!(f, "effective"),
            PosteriorMean::Residual => write!(f, "residual"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelConfig {
    pub dims: Dims,
    pub mode: AblationMode,
    pub kl_mean: PosteriorMean,
}

impl ModelConfig {
    pub fn new(dims: Dims) -> Self {
        ModelConfig {
            dims,
            mode: AblationMode::Stochastic,
            kl_mean: PosteriorMean::Effective,
        }
    }
}

/// Every learned weight of the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = Tensor> {
    pub config: ModelConfig,
    pub embedding: EmbeddingParams<T>,
    pub word_lstm: LstmParams<T>,
    pub mlstm: MLstmParams<T>,
    pub blstm: LstmParams<T>,
    pub stochastic: StochasticParams<T>,
    pub output: OutputParams<T>,
}

macro_rules! each_component {
    ($self:ident, $method:ident, $f:ident) => {{
        $self.embedding.$method(&mut |n, t| $f(&format!("embedding.{n}"), t));
        $self.word_lstm.$method(&mut |n, t| $f(&format!("word_lstm.{n}"), t));
        $self.mlstm.$method(&mut |n, t| $f(&format!("mlstm.{n}"), t));
        $self.blstm.$method(&mut |n, t| $f(&format!("blstm.{n}"), t));
        $self.stochastic.$method(&mut |n, t| $f(&format!("stochastic.{n}"), t));
        $self.output.$method(&mut |n, t| $f(&format!("output.{n}"), t));
    }};
}

impl<T> ModelParams<T> {
    pub fn map<'a, U>(&'a self, f: &mut impl FnMut(&str, &'a T) -> U) -> ModelParams<U> {
        ModelParams {
            config: self.config,
            embedding: self.embedding.map(&mut |n, t| f(&format!("embedding.{n}"), t)),
            word_lstm: self.word_lstm.map(&mut |n, t| f(&format!("word_lstm.{n}"), t)),
            mlstm: self.mlstm.map(&mut |n, t| f(&format!("mlstm.{n}"), t)),
            blstm: self.blstm.map(&mut |n, t| f(&format!("blstm.{n}"), t)),
            stochastic: self.stochastic.map(&mut |n, t| f(&format!("stochastic.{n}"), t)),
            output: self.output.map(&mut |n, t| f(&format!("output.{n}"), t)),
        }
    }

    /// Visits every tensor under its canonical dotted name, in a fixed order.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&str, &'a T)) {
        each_component!(self, visit, f)
    }

    pub fn visit_mut(&mut self, f: &mut impl FnMut(&str, &mut T)) {
        each_component!(self, visit_mut, f)
    }

    pub fn names(&self) -> Vec<String> {
        let mut names = Vec::new();
        self.visit(&mut |n, _| names.push(n.to_string()));
        names
    }
}

impl ModelParams {
    /// Random initialization: uniform(-init_scale, init_scale) weights, zero biases.
    pub fn new(config: ModelConfig, seed: u64, init_scale: f64) -> Self {
        let mut rs = RandomSource::new(seed);
        let mut init = Init { rs: &mut rs, scale: init_scale };
        let d = config.dims;
        ModelParams {
            config,
            embedding: EmbeddingParams::init(&mut init, d.d_s, d.d_a),
            word_lstm: LstmParams::init(&mut init, d.d_s, d.d_s),
            mlstm: MLstmParams::init(&mut init, d.d_s, d.d_v, d.h),
            blstm: LstmParams::init(&mut init, d.d_s + d.h, d.h_r),
            stochastic: StochasticParams::init(&mut init, d.d_z, d.h, d.h_r, d.fc_hidden),
            output: OutputParams::init(&mut init, d.d_a, d.d_z + d.h),
        }
    }

    pub fn zeros(config: ModelConfig) -> Self {
        ModelParams::new(config, 0, 0.0)
    }

    pub fn dims(&self) -> Dims {
        self.config.dims
    }

    pub fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    /// Checks every tensor against the shape implied by `config.dims`.
    pub fn check_shapes(&self) -> Result<()> {
        let reference = ModelParams::zeros(self.config);
        let mut expected = Vec::new();
        reference.visit(&mut |n, t| expected.push((n.to_string(), t.shape().to_vec())));
        let mut i = 0;
        let mut err = None;
        self.visit(&mut |n, t| {
            if err.is_none() && t.shape() != expected[i].1.as_slice() {
                err = Some(Error::Schema(format!(
                    "tensor {n} has shape {:?}, dims imply {:?}",
                    t.shape(),
                    expected[i].1
                )));
            }
            i += 1;
        });
        err.map_or(Ok(()), Err)
    }

    /// Tensors in canonical visit order.
    pub fn tensors(&self) -> Vec<&Tensor> {
        let mut out = Vec::new();
        self.visit(&mut |_, t| out.push(t));
        out
    }
}

/// Arithmetic mean over the frame axis of an `N x D_v` matrix.
pub fn mean_pool(frames: &Tensor) -> Result<Tensor> {
    if frames.rank() != 2 {
        return Err(Error::dims("mean_pool", frames.shape(), &[0, 0]));
    }
    let (n, d) = (frames.shape()[0], frames.shape()[1]);
    if n == 0 {
        return Err(Error::EmptyClip);
    }
    let mut acc = vec![0.0; d];
    for row in frames.data().chunks(d.max(1)).take(n) {
        for (a, x) in acc.iter_mut().zip(row) {
            *a += x;
        }
    }
    Ok(Tensor::vector(acc.into_iter().map(|a| a / n as f64).collect()))
}

/// Loss parts of one teacher-forced pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub nll: f64,
    pub kl: f64,
    pub kl_weight: f64,
    pub objective: f64,
}

/// Per-step activations of one teacher-forced pass.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    pub s: Tensor,
    pub s_prime: Tensor,
    pub l: Tensor,
    /// Backward-LSTM state; absent in the deterministic ablation.
    pub r: Option<Tensor>,
    pub mu_p: Option<Tensor>,
    pub sigma_p: Option<Tensor>,
    pub mu_q: Option<Tensor>,
    pub sigma_q: Option<Tensor>,
    pub eps: Tensor,
    pub z: Tensor,
    pub logits: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub v_bar: Tensor,
    pub steps: Vec<StepTrace>,
    pub loss: LossBreakdown,
}

struct StepVars<V> {
    s: V,
    s_prime: V,
    l: V,
    r: Option<V>,
    prior: Option<(V, V)>,
    posterior: Option<(V, V)>,
    z: V,
    logits: V,
}

struct Unrolled<V> {
    steps: Vec<StepVars<V>>,
    nll: V,
    kl: V,
    objective: V,
}

fn check_tokens(tokens: &[usize], d_a: usize) -> Result<()> {
    if let Some(&bad) = tokens.iter().find(|&&t| t >= d_a) {
        return Err(Error::Vocabulary { index: bad, size: d_a });
    }
    Ok(())
}

/// Builds the whole objective graph. `tokens` is `a_1..a_{T+1}`; step `t`
/// predicts `tokens[t + 1]`.
fn unroll<G: Graph>(
    g: &mut G,
    p: &ModelParams<G::Var>,
    v_bar: &G::Var,
    tokens: &[usize],
    eps: &[Tensor],
    kl_weight: f64,
) -> Result<Unrolled<G::Var>> {
    let d = p.config.dims;
    if tokens.len() < 2 {
        return Err(Error::contract("a training sequence needs at least one predicted token (T >= 1)"));
    }
    if !(kl_weight > 0.0 && kl_weight <= 1.0) {
        return Err(Error::contract(format!("kl_weight must lie in (0, 1], got {kl_weight}")));
    }
    check_tokens(tokens, d.d_a)?;
    let steps = tokens.len() - 1;
    if eps.len() != steps || eps.iter().any(|e| e.shape() != [d.d_z]) {
        return Err(Error::contract(format!(
            "expected {steps} noise vectors of length {}",
            d.d_z
        )));
    }
    let stochastic = p.config.mode == AblationMode::Stochastic;

    let s: Vec<G::Var> = tokens
        .iter()
        .map(|&tok| layers::embed(g, &p.embedding, tok))
        .collect::<Result<_>>()?;

    let mut h = g.input(Tensor::zeros(&[d.d_s]));
    let mut c = g.input(Tensor::zeros(&[d.d_s]));
    let mut s_prime = Vec::with_capacity(steps);
    for s_t in &s[..steps] {
        (h, c) = layers::lstm_step(g, &p.word_lstm, s_t, &h, &c)?;
        s_prime.push(h.clone());
    }

    let mut l_prev = g.input(Tensor::zeros(&[d.h]));
    let mut c_m = g.input(Tensor::zeros(&[d.h]));
    let mut l = Vec::with_capacity(steps);
    for sp in &s_prime {
        (l_prev, c_m) = layers::mlstm_step(g, &p.mlstm, sp, v_bar, &l_prev, &c_m)?;
        l.push(l_prev.clone());
    }

    let r = if stochastic {
        Some(layers::backward_lstm_run(g, &p.blstm, d.h_r, &s[1..], &l)?)
    } else {
        None
    };

    let zero_z = g.input(Tensor::zeros(&[d.d_z]));
    let mut z_prev = zero_z.clone();
    let mut nll: Option<G::Var> = None;
    let mut kl: Option<G::Var> = None;
    let mut out = Vec::with_capacity(steps);
    for t in 0..steps {
        let (z, prior, posterior) = match &r {
            Some(r) => {
                let (mu_p, sigma_p) = layers::prior_stats(g, &p.stochastic, &z_prev, &l[t])?;
                let (mu_q, sigma_q) = layers::posterior_stats(g, &p.stochastic, &z_prev, &r[t])?;
                let mu_eff = g.add(&mu_q, &mu_p)?;
                let e = g.input(eps[t].clone());
                let noise = g.mul(&sigma_q, &e)?;
                let z = g.add(&mu_eff, &noise)?;
                let kl_mean = match p.config.kl_mean {
                    PosteriorMean::Effective => &mu_eff,
                    PosteriorMean::Residual => &mu_q,
                };
                let kl_t = g.gaussian_kl(kl_mean, &sigma_q, &mu_p, &sigma_p)?;
                kl = Some(match kl {
                    Some(acc) => g.add(&acc, &kl_t)?,
                    None => kl_t,
                });
                (z, Some((mu_p, sigma_p)), Some((mu_q, sigma_q)))
            }
            None => (zero_z.clone(), None, None),
        };
        let logits = layers::output_logits(g, &p.output, &z, &l[t])?;
        let xent = g.softmax_cross_entropy(&logits, tokens[t + 1])?;
        nll = Some(match nll {
            Some(acc) => g.add(&acc, &xent)?,
            None => xent,
        });
        out.push(StepVars {
            s: s[t].clone(),
            s_prime: s_prime[t].clone(),
            l: l[t].clone(),
            r: r.as_ref().map(|r| r[t].clone()),
            prior,
            posterior,
            z: z.clone(),
            logits,
        });
        z_prev = z;
    }

    let nll = nll.expect("steps >= 1");
    let kl = match kl {
        Some(kl) => kl,
        None => g.input(Tensor::vector(vec![0.0])),
    };
    let weighted = g.scale(&kl, kl_weight)?;
    let objective = g.add(&nll, &weighted)?;
    Ok(Unrolled {
        steps: out,
        nll,
        kl,
        objective,
    })
}

fn breakdown<G: Graph>(g: &G, u: &Unrolled<G::Var>, kl_weight: f64) -> LossBreakdown {
    LossBreakdown {
        nll: g.value(&u.nll).data()[0],
        kl: g.value(&u.kl).data()[0],
        kl_weight,
        objective: g.value(&u.objective).data()[0],
    }
}

/// Draws one standard-normal vector of length `d_z` per predicted token.
pub fn draw_noise(rs: &mut RandomSource, steps: usize, d_z: usize) -> Vec<Tensor> {
    (0..steps).map(|_| rs.sample_standard_normal(d_z)).collect()
}

/// Teacher-forced pass with noise drawn from `rs` (one vector per step).
pub fn forward_train(
    p: &ModelParams,
    frames: &Tensor,
    tokens: &[usize],
    rs: &mut RandomSource,
    kl_weight: f64,
) -> Result<(LossBreakdown, ForwardTrace)> {
    if tokens.len() < 2 {
        return Err(Error::contract("a training sequence needs at least one predicted token (T >= 1)"));
    }
    let eps = draw_noise(rs, tokens.len() - 1, p.dims().d_z);
    forward_train_with_noise(p, frames, tokens, &eps, kl_weight)
}

/// Teacher-forced pass with caller-supplied noise; a pure function of its inputs.
pub fn forward_train_with_noise(
    p: &ModelParams,
    frames: &Tensor,
    tokens: &[usize],
    eps: &[Tensor],
    kl_weight: f64,
) -> Result<(LossBreakdown, ForwardTrace)> {
    let v_bar = mean_pool(frames)?;
    check_video_dim(&v_bar, p.dims())?;
    let mut g = Eval::new();
    let lifted = p.map(&mut |_, t| Val::Ref(t));
    let vb = Val::Ref(&v_bar);
    let u = unroll(&mut g, &lifted, &vb, tokens, eps, kl_weight)?;
    let loss = breakdown(&g, &u, kl_weight);
    let steps = u
        .steps
        .iter()
        .zip(eps)
        .map(|(s, e)| StepTrace {
            s: (*s.s).clone(),
            s_prime: (*s.s_prime).clone(),
            l: (*s.l).clone(),
            r: s.r.as_ref().map(|r| (**r).clone()),
            mu_p: s.prior.as_ref().map(|p| (*p.0).clone()),
            sigma_p: s.prior.as_ref().map(|p| (*p.1).clone()),
            mu_q: s.posterior.as_ref().map(|q| (*q.0).clone()),
            sigma_q: s.posterior.as_ref().map(|q| (*q.1).clone()),
            eps: e.clone(),
            z: (*s.z).clone(),
            logits: (*s.logits).clone(),
        })
        .collect();
    Ok((
        loss,
        ForwardTrace {
            v_bar,
            steps,
            loss,
        },
    ))
}

/// Objective and its gradient with respect to every parameter tensor.
pub fn loss_and_gradients(
    p: &ModelParams,
    frames: &Tensor,
    tokens: &[usize],
    eps: &[Tensor],
    kl_weight: f64,
) -> Result<(LossBreakdown, ModelParams)> {
    let v_bar = mean_pool(frames)?;
    check_video_dim(&v_bar, p.dims())?;
    let mut tape = Tape::new();
    let leaves = p.map(&mut |_, t| tape.leaf(t.clone()));
    let vb = tape.input(v_bar);
    let u = unroll(&mut tape, &leaves, &vb, tokens, eps, kl_weight)?;
    let loss = breakdown(&tape, &u, kl_weight);
    let grads = tape.backward(u.objective)?;
    Ok((loss, leaves.map(&mut |_, id| grads.get(*id))))
}

fn check_video_dim(v_bar: &Tensor, dims: Dims) -> Result<()> {
    if v_bar.len() != dims.d_v {
        return Err(Error::Schema(format!(
            "video feature dimension {} does not match model d_v {}",
            v_bar.len(),
            dims.d_v
        )));
    }
    Ok(())
}

/// Closed-form Gaussian KL summed over latent dimensions.
pub fn gaussian_kl_step(mu_q_eff: &Tensor, sigma_q: &Tensor, mu_p: &Tensor, sigma_p: &Tensor) -> Result<f64> {
    crate::numerics::gaussian_kl(mu_q_eff, sigma_q, mu_p, sigma_p)
}

/// KL weight schedule: starts at `start` and rises linearly to 1 over `anneal_epochs`.
pub fn kl_anneal_weight_with(epoch: usize, anneal_epochs: usize, start: f64) -> f64 {
    if anneal_epochs == 0 || epoch >= anneal_epochs {
        return 1.0;
    }
    start + (1.0 - start) * epoch as f64 / anneal_epochs as f64
}

/// The default schedule: 0.01 at epoch 0, 1.0 from epoch 20 on.
pub fn kl_anneal_weight(epoch: usize) -> f64 {
    kl_anneal_weight_with(epoch, 20, 0.01)
}

/// Recurrent state carried between generation steps.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h_word: Tensor,
    pub c_word: Tensor,
    pub l: Tensor,
    pub c_m: Tensor,
    pub z: Tensor,
}

impl DecoderState {
    pub fn initial(dims: &Dims) -> Self {
        DecoderState {
            h_word: Tensor::zeros(&[dims.d_s]),
            c_word: Tensor::zeros(&[dims.d_s]),
            l: Tensor::zeros(&[dims.h]),
            c_m: Tensor::zeros(&[dims.h]),
            z: Tensor::zeros(&[dims.d_z]),
        }
    }
}

/// Inference-time view of the parameters, lifted once and reused across steps.
pub struct Decoder<'a> {
    params: ModelParams<Val<'a>>,
    config: ModelConfig,
}

impl<'a> Decoder<'a> {
    pub fn new(p: &'a ModelParams) -> Self {
        Decoder {
            params: p.map(&mut |_, t| Val::Ref(t)),
            config: p.config,
        }
    }

    pub fn dims(&self) -> Dims {
        self.config.dims
    }

    /// One generation step; returns vocabulary logits and the next state.
    /// The backward LSTM is not used: `z = mu_p + sigma_p * eps`.
    pub fn step_logits(
        &self,
        state: &DecoderState,
        prev_token: usize,
        v_bar: &Tensor,
        eps: &Tensor,
    ) -> Result<(Tensor, DecoderState)> {
        let d = self.config.dims;
        check_tokens(&[prev_token], d.d_a)?;
        check_video_dim(v_bar, d)?;
        if eps.shape() != [d.d_z] {
            return Err(Error::dims("generate_step eps", eps.shape(), &[d.d_z]));
        }
        let mut g = Eval::new();
        let p = &self.params;
        let s = layers::embed(&mut g, &p.embedding, prev_token)?;
        let (h, c) = layers::lstm_step(
            &mut g,
            &p.word_lstm,
            &s,
            &Val::Ref(&state.h_word),
            &Val::Ref(&state.c_word),
        )?;
        let (l, c_m) = layers::mlstm_step(
            &mut g,
            &p.mlstm,
            &h,
            &Val::Ref(v_bar),
            &Val::Ref(&state.l),
            &Val::Ref(&state.c_m),
        )?;
        let z: Val = match self.config.mode {
            AblationMode::Stochastic => {
                let (mu_p, sigma_p) = layers::prior_stats(&mut g, &p.stochastic, &Val::Ref(&state.z), &l)?;
                let noise = g.mul(&sigma_p, &Val::Ref(eps))?;
                g.add(&mu_p, &noise)?
            }
            AblationMode::Deterministic => Tensor::zeros(&[d.d_z]).into(),
        };
        let logits = layers::output_logits(&mut g, &p.output, &z, &l)?;
        Ok((
            (*logits).clone(),
            DecoderState {
                h_word: (*h).clone(),
                c_word: (*c).clone(),
                l: (*l).clone(),
                c_m: (*c_m).clone(),
                z: (*z).clone(),
            },
        ))
    }

    pub fn step(
        &self,
        state: &DecoderState,
        prev_token: usize,
        v_bar: &Tensor,
        eps: &Tensor,
    ) -> Result<(Tensor, DecoderState)> {
        let (logits, next) = self.step_logits(state, prev_token, v_bar, eps)?;
        Ok((logits.softmax()?, next))
    }
}

/// One generation step: next-token probabilities and the advanced state.
pub fn generate_step(
    p: &ModelParams,
    state: &DecoderState,
    prev_token: usize,
    v_bar: &Tensor,
    eps: &Tensor,
) -> Result<(Tensor, DecoderState)> {
    Decoder::new(p).step(state, prev_token, v_bar, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(mode: AblationMode) -> ModelConfig {
        ModelConfig {
            dims: Dims {
                d_v: 3,
                d_s: 4,
                h: 5,
                h_r: 4,
                d_z: 2,
                d_a: 5,
                fc_hidden: 3,
            },
            mode,
            kl_mean: PosteriorMean::Effective,
        }
    }

    fn frames(rs: &mut RandomSource, n: usize, d: usize) -> Tensor {
        Tensor::matrix(n, d, rs.sample_standard_normal(n * d).into_data()).unwrap()
    }

    #[test]
    fn mean_pool_examples() {
        let f = Tensor::matrix(2, 2, vec![1.0, 3.0, 3.0, 1.0]).unwrap();
        assert_eq!(mean_pool(&f).unwrap().data(), &[2.0, 2.0]);
        let one = Tensor::matrix(1, 3, vec![0.1, -0.2, 0.3]).unwrap();
        assert_eq!(mean_pool(&one).unwrap().data(), &[0.1, -0.2, 0.3]);
        assert!(matches!(mean_pool(&Tensor::zeros(&[0, 3])), Err(Error::EmptyClip)));
    }

    #[test]
    fn mean_pool_of_28_frames_matches_scalar_sums() {
        let mut rs = RandomSource::new(28);
        let f = frames(&mut rs, 28, 6);
        let pooled = mean_pool(&f).unwrap();
        for j in 0..6 {
            let mut sum = 0.0;
            for i in 0..28 {
                sum += f.data()[i * 6 + j];
            }
            assert!((pooled.data()[j] - sum / 28.0).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_params_give_uniform_nll_and_zero_kl() {
        let cfg = tiny(AblationMode::Stochastic);
        let p = ModelParams::zeros(cfg);
        let mut rs = RandomSource::new(1);
        let f = frames(&mut rs, 4, 3);
        let tokens = [0, 3, 4, 2, 1];
        let (loss, trace) = forward_train(&p, &f, &tokens, &mut rs, 0.5).unwrap();
        let t = (tokens.len() - 1) as f64;
        assert!((loss.nll - t * 5f64.ln()).abs() < 1e-12);
        assert_eq!(loss.kl, 0.0);
        assert_eq!(trace.steps.len(), 4);
    }

    #[test]
    fn objective_decomposes_exactly() {
        let p = ModelParams::new(tiny(AblationMode::Stochastic), 3, 0.5);
        let mut rs = RandomSource::new(2);
        let f = frames(&mut rs, 3, 3);
        let tokens = [0, 2, 3, 1];
        let eps = draw_noise(&mut rs, 3, 2);
        let (a, _) = forward_train_with_noise(&p, &f, &tokens, &eps, 0.25).unwrap();
        let (b, _) = forward_train_with_noise(&p, &f, &tokens, &eps, 0.5).unwrap();
        assert_eq!(a.nll, b.nll);
        assert_eq!(a.kl, b.kl);
        assert_eq!(a.objective, a.nll + 0.25 * a.kl);
        assert!((b.objective - a.objective - a.kl * 0.25).abs() < 1e-12);
        assert!(a.kl >= 0.0);
    }

    #[test]
    fn forward_is_pure_in_the_noise() {
        let p = ModelParams::new(tiny(AblationMode::Stochastic), 4, 0.3);
        let mut rs = RandomSource::new(5);
        let f = frames(&mut rs, 2, 3);
        let eps = draw_noise(&mut rs, 2, 2);
        let a = forward_train_with_noise(&p, &f, &[0, 4, 1], &eps, 1.0).unwrap();
        let b = forward_train_with_noise(&p, &f, &[0, 4, 1], &eps, 1.0).unwrap();
        assert_eq!(a.0.objective.to_bits(), b.0.objective.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn forward_errors() {
        let p = ModelParams::new(tiny(AblationMode::Stochastic), 4, 0.3);
        let mut rs = RandomSource::new(5);
        let f = frames(&mut rs, 2, 3);
        assert!(matches!(forward_train(&p, &f, &[0], &mut rs, 1.0), Err(Error::Contract(_))));
        assert!(matches!(
            forward_train(&p, &f, &[0, 9, 1], &mut rs, 1.0),
            Err(Error::Vocabulary { index: 9, size: 5 })
        ));
        assert!(forward_train(&p, &f, &[0, 1], &mut rs, 0.0).is_err());
        let wrong = frames(&mut rs, 2, 4);
        assert!(matches!(forward_train(&p, &wrong, &[0, 1], &mut rs, 1.0), Err(Error::Schema(_))));
    }

    #[test]
    fn deterministic_mode_reports_zero_kl() {
        let p = ModelParams::new(tiny(AblationMode::Deterministic), 4, 0.3);
        let mut rs = RandomSource::new(5);
        let f = frames(&mut rs, 2, 3);
        let (loss, trace) = forward_train(&p, &f, &[0, 3, 2, 1], &mut rs, 1.0).unwrap();
        assert_eq!(loss.kl, 0.0);
        assert_eq!(loss.objective, loss.nll);
        assert!(trace.steps.iter().all(|s| s.r.is_none() && s.z.data().iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn zero_stochastic_cell_with_zero_noise_is_the_deterministic_model() {
        let mut p = ModelParams::new(tiny(AblationMode::Stochastic), 8, 0.4);
        p.stochastic.visit_mut(&mut |_, t| *t = Tensor::zeros(t.shape()));
        let mut m = p.clone();
        m.config.mode = AblationMode::Deterministic;
        let mut rs = RandomSource::new(6);
        let f = frames(&mut rs, 3, 3);
        let tokens = [0, 2, 4, 3, 1];
        let eps = vec![Tensor::zeros(&[2]); 4];
        let (ls, ts) = forward_train_with_noise(&p, &f, &tokens, &eps, 1.0).unwrap();
        let (lm, tm) = forward_train_with_noise(&m, &f, &tokens, &eps, 1.0).unwrap();
        assert_eq!(ls.kl, 0.0);
        assert_eq!(ls.nll, lm.nll);
        for (a, b) in ts.steps.iter().zip(&tm.steps) {
            assert_eq!(a.logits, b.logits);
        }
    }

    #[test]
    fn kl_examples() {
        let v = |x: f64| Tensor::vector(vec![x]);
        assert_eq!(gaussian_kl_step(&v(0.3), &v(1.7), &v(0.3), &v(1.7)).unwrap(), 0.0);
        assert!((gaussian_kl_step(&v(1.0), &v(1.0), &v(0.0), &v(1.0)).unwrap() - 0.5).abs() < 1e-15);
        let expected = 0.5f64.ln() + 4.0 / 2.0 - 0.5;
        assert!((gaussian_kl_step(&v(0.0), &v(2.0), &v(0.0), &v(1.0)).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.806_852_819_440_054_7).abs() < 1e-15);
        assert!(matches!(gaussian_kl_step(&v(0.0), &v(-1.0), &v(0.0), &v(1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn anneal_schedule() {
        assert_eq!(kl_anneal_weight(0), 0.01);
        assert_eq!(kl_anneal_weight(20), 1.0);
        assert_eq!(kl_anneal_weight(500), 1.0);
        assert!((kl_anneal_weight(10) - 0.505).abs() < 1e-12);
        for e in 0..20 {
            assert!(kl_anneal_weight(e) < kl_anneal_weight(e + 1));
        }
    }

    #[test]
    fn zero_params_generate_uniform() {
        let p = ModelParams::zeros(tiny(AblationMode::Stochastic));
        let st = DecoderState::initial(&p.dims());
        let v_bar = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let (probs, _) = generate_step(&p, &st, 0, &v_bar, &Tensor::vector(vec![0.7, -1.2])).unwrap();
        for &q in probs.data() {
            assert!((q - 0.2).abs() < 1e-15);
        }
    }

    #[test]
    fn generate_step_is_pure() {
        let p = ModelParams::new(tiny(AblationMode::Stochastic), 9, 0.5);
        let st = DecoderState::initial(&p.dims());
        let v_bar = Tensor::vector(vec![1.0, 2.0, 3.0]);
        let eps = Tensor::zeros(&[2]);
        let a = generate_step(&p, &st, 0, &v_bar, &eps).unwrap();
        let b = generate_step(&p, &st, 0, &v_bar, &eps).unwrap();
        assert_eq!(a, b);
        assert!(matches!(generate_step(&p, &st, 5, &v_bar, &eps), Err(Error::Vocabulary { .. })));
    }

    #[test]
    fn generation_matches_training_logits_when_posterior_is_silenced() {
        // With zero posterior networks, mu_q = 0 and sigma_q = 1; zero training
        // noise then gives z = mu_p, which is the test-time rule at eps = 0.
        let mut p = ModelParams::new(tiny(AblationMode::Stochastic), 12, 0.5);
        p.stochastic.fc_q1.visit_mut(&mut |_, t| *t = Tensor::zeros(t.shape()));
        p.stochastic.fc_q2.visit_mut(&mut |_, t| *t = Tensor::zeros(t.shape()));
        let mut rs = RandomSource::new(13);
        let f = frames(&mut rs, 3, 3);
        let tokens = [0, 3, 2, 4, 1];
        let eps = vec![Tensor::zeros(&[2]); 4];
        let (_, trace) = forward_train_with_noise(&p, &f, &tokens, &eps, 1.0).unwrap();

        let dec = Decoder::new(&p);
        let v_bar = mean_pool(&f).unwrap();
        let mut st = DecoderState::initial(&p.dims());
        for (t, step) in trace.steps.iter().enumerate() {
            let (logits, next) = dec.step_logits(&st, tokens[t], &v_bar, &Tensor::zeros(&[2])).unwrap();
            assert!(logits.max_abs_diff(&step.logits) < 1e-12, "step {t}");
            st = next;
        }
    }

    #[test]
    fn check_shapes_catches_mismatch() {
        let mut p = ModelParams::new(tiny(AblationMode::Stochastic), 1, 0.1);
        assert!(p.check_shapes().is_ok());
        p.output.b = Tensor::zeros(&[7]);
        assert!(matches!(p.check_shapes(), Err(Error::Schema(_))));
    }

    #[test]
    fn canonical_names_are_unique() {
        let p = ModelParams::zeros(tiny(AblationMode::Stochastic));
        let names = p.names();
        let set: std::collections::HashSet<_> = names.iter().collect();
        assert_eq!(set.len(), names.len());
        assert!(names.contains(&"stochastic.fc_q2.w1".to_string()));
    }
}
