//! Beam search over generation steps and the repeated stochastic sampler.

use crate::data::{BOS_ID, EOS_ID};
use crate::error::{Error, Result};
use crate::model::{mean_pool, Decoder, DecoderState, ModelParams};
use crate::numerics::{RandomSource, Tensor};

pub const DEFAULT_BEAM: usize = 5;
pub const DEFAULT_MAX_LEN: usize = 30;

/// How latent noise is chosen during decoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseMode {
    /// `eps = 0`: latents sit at the prior mean.
    Mean,
    /// One `eps_t` per step drawn from the seed and shared by every hypothesis.
    Shared(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    /// Emitted tokens, `<bos>` excluded, `<eos>` included once finished.
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub state: DecoderState,
    pub finished: bool,
}

impl Hypothesis {
    fn last_token(&self) -> usize {
        self.tokens.last().copied().unwrap_or(BOS_ID)
    }
}

/// A decoded caption with `<eos>` stripped and its cumulative log-probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Caption {
    pub tokens: Vec<usize>,
    pub score: f64,
}

fn sort_desc(hyps: &mut [Hypothesis]) {
    hyps.sort_by(|a, b| b.log_prob.total_cmp(&a.log_prob));
}

/// Length-capped beam search from `<bos>`. `max_len` counts emitted tokens
/// including `<eos>`. Finished hypotheses stay in the pool with frozen scores.
pub fn beam_search(
    p: &ModelParams,
    frames: &Tensor,
    beam_size: usize,
    max_len: usize,
    mode: NoiseMode,
) -> Result<Caption> {
    let v_bar = mean_pool(frames)?;
    beam_search_pooled(&Decoder::new(p), &v_bar, beam_size, max_len, mode)
}

/// Beam search on an already pooled video feature.
pub fn beam_search_pooled(
    decoder: &Decoder<'_>,
    v_bar: &Tensor,
    beam_size: usize,
    max_len: usize,
    mode: NoiseMode,
) -> Result<Caption> {
    if beam_size == 0 || max_len == 0 {
        return Err(Error::contract("beam_size and max_len must be at least 1"));
    }
    let d = decoder.dims();
    let mut rs = match mode {
        NoiseMode::Shared(seed) => Some(RandomSource::new(seed)),
        NoiseMode::Mean => None,
    };
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: DecoderState::initial(&d),
        finished: false,
    }];
    for _ in 0..max_len {
        if beam.iter().all(|h| h.finished) {
            break;
        }
        let eps = match rs.as_mut() {
            Some(rs) => rs.sample_standard_normal(d.d_z),
            None => Tensor::zeros(&[d.d_z]),
        };
        let mut pool = Vec::with_capacity(beam.len() * beam_size);
        for hyp in beam {
            if hyp.finished {
                pool.push(hyp);
                continue;
            }
            let (probs, next) = decoder.step(&hyp.state, hyp.last_token(), v_bar, &eps)?;
            let mut ext: Vec<(usize, f64)> = probs.data().iter().map(|q| q.ln()).enumerate().collect();
            ext.sort_by(|a, b| b.1.total_cmp(&a.1));
            ext.truncate(beam_size);
            for (tok, lp) in ext {
                let mut tokens = hyp.tokens.clone();
                tokens.push(tok);
                pool.push(Hypothesis {
                    tokens,
                    log_prob: hyp.log_prob + lp,
                    state: next.clone(),
                    finished: tok == EOS_ID,
                });
            }
        }
        sort_desc(&mut pool);
        pool.truncate(beam_size);
        beam = pool;
    }
    let best = beam
        .into_iter()
        .reduce(|a, b| if b.log_prob > a.log_prob { b } else { a })
        .expect("beam is never empty");
    let mut tokens = best.tokens;
    if tokens.last() == Some(&EOS_ID) {
        tokens.pop();
    }
    Ok(Caption {
        tokens,
        score: best.log_prob,
    })
}

/// Runs shared-noise beam search `k` times with seeds `base_seed..base_seed+k`.
pub fn sample_captions(
    p: &ModelParams,
    frames: &Tensor,
    k: usize,
    base_seed: u64,
    beam_size: usize,
    max_len: usize,
) -> Result<Vec<Caption>> {
    if k == 0 {
        return Err(Error::contract("sample count must be at least 1"));
    }
    let v_bar = mean_pool(frames)?;
    let decoder = Decoder::new(p);
    (0..k as u64)
        .map(|i| beam_search_pooled(&decoder, &v_bar, beam_size, max_len, NoiseMode::Shared(base_seed.wrapping_add(i))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_step, AblationMode, Dims, ModelConfig};

    fn tiny(d_a: usize, seed: u64) -> ModelParams {
        let dims = Dims {
            d_v: 3,
            d_s: 4,
            h: 5,
            h_r: 4,
            d_z: 2,
            d_a,
            fc_hidden: 3,
        };
        ModelParams::new(ModelConfig::new(dims), seed, 1.0)
    }

    fn clip(seed: u64) -> Tensor {
        let mut rs = RandomSource::new(seed);
        Tensor::matrix(2, 3, rs.sample_standard_normal(6).into_data()).unwrap()
    }

    /// Every sequence that ends in `<eos>` or reaches `max_len`, scored by summed ln-probabilities.
    fn exhaustive(p: &ModelParams, frames: &Tensor, max_len: usize, eps: &[Tensor]) -> (Vec<usize>, f64) {
        let v_bar = mean_pool(frames).unwrap();
        let mut best = (Vec::new(), f64::NEG_INFINITY);
        let mut stack = vec![(Vec::<usize>::new(), 0.0, DecoderState::initial(&p.dims()))];
        while let Some((toks, lp, state)) = stack.pop() {
            let done = toks.last() == Some(&EOS_ID) || toks.len() == max_len;
            if done {
                if lp > best.1 {
                    let mut t = toks.clone();
                    if t.last() == Some(&EOS_ID) {
                        t.pop();
                    }
                    best = (t, lp);
                }
                continue;
            }
            let prev = toks.last().copied().unwrap_or(BOS_ID);
            let (probs, next) = generate_step(p, &state, prev, &v_bar, &eps[toks.len()]).unwrap();
            for (k, q) in probs.data().iter().enumerate() {
                let mut t = toks.clone();
                t.push(k);
                stack.push((t, lp + q.ln(), next.clone()));
            }
        }
        best
    }

    #[test]
    fn wide_beam_matches_exhaustive_search() {
        for seed in 0..10 {
            let p = tiny(4, seed);
            let f = clip(100 + seed);
            let zeros = vec![Tensor::zeros(&[2]); 3];
            let got = beam_search(&p, &f, 64, 3, NoiseMode::Mean).unwrap();
            let (toks, score) = exhaustive(&p, &f, 3, &zeros);
            assert_eq!(got.tokens, toks);
            assert_eq!(got.score, score);

            let mut rs = RandomSource::new(seed);
            let shared: Vec<Tensor> = (0..3).map(|_| rs.sample_standard_normal(2)).collect();
            let got = beam_search(&p, &f, 64, 3, NoiseMode::Shared(seed)).unwrap();
            let (toks, score) = exhaustive(&p, &f, 3, &shared);
            assert_eq!(got.tokens, toks);
            assert_eq!(got.score, score);
        }
    }

    #[test]
    fn beam_one_is_greedy() {
        for seed in 0..10 {
            let p = tiny(6, seed);
            let f = clip(seed);
            let v_bar = mean_pool(&f).unwrap();
            let mut state = DecoderState::initial(&p.dims());
            let (mut prev, mut toks, mut score) = (BOS_ID, Vec::new(), 0.0);
            for _ in 0..8 {
                let (probs, next) = generate_step(&p, &state, prev, &v_bar, &Tensor::zeros(&[2])).unwrap();
                let k = probs.argmax();
                score += probs.data()[k].ln();
                state = next;
                prev = k;
                if k == EOS_ID {
                    break;
                }
                toks.push(k);
            }
            let got = beam_search(&p, &f, 1, 8, NoiseMode::Mean).unwrap();
            assert_eq!(got.tokens, toks);
            assert_eq!(got.score, score);
        }
    }

    #[test]
    fn certain_eos_gives_empty_caption() {
        let mut p = tiny(5, 3);
        p.output.u_p = Tensor::zeros(p.output.u_p.shape());
        let mut b = vec![0.0; 5];
        b[EOS_ID] = 1000.0;
        p.output.b = Tensor::vector(b);
        let got = beam_search(&p, &clip(0), 5, 10, NoiseMode::Mean).unwrap();
        assert!(got.tokens.is_empty());
        assert_eq!(got.score, 0.0);
    }

    #[test]
    fn wider_beam_scores_at_least_greedy() {
        for seed in 0..20 {
            let p = tiny(6, seed);
            let f = clip(seed);
            let mode = NoiseMode::Shared(seed);
            let greedy = beam_search(&p, &f, 1, 6, mode).unwrap();
            let wide = beam_search(&p, &f, 5, 6, mode).unwrap();
            assert!(greedy.score <= 0.0);
            assert!(wide.score >= greedy.score, "seed {seed}: {} < {}", wide.score, greedy.score);
        }
    }

    #[test]
    fn mean_mode_ignores_seed_and_sampling_is_reproducible() {
        let p = tiny(6, 1);
        let f = clip(2);
        let a = beam_search(&p, &f, 3, 6, NoiseMode::Mean).unwrap();
        let b = beam_search(&p, &f, 3, 6, NoiseMode::Mean).unwrap();
        assert_eq!(a, b);
        let s1 = sample_captions(&p, &f, 4, 9, 3, 6).unwrap();
        let s2 = sample_captions(&p, &f, 4, 9, 3, 6).unwrap();
        assert_eq!(s1, s2);
        let one = sample_captions(&p, &f, 1, 9, 3, 6).unwrap();
        assert_eq!(one[0], beam_search(&p, &f, 3, 6, NoiseMode::Shared(9)).unwrap());
        assert!(sample_captions(&p, &f, 0, 9, 3, 6).is_err());
        assert!(beam_search(&p, &f, 0, 6, NoiseMode::Mean).is_err());
    }

    #[test]
    fn deterministic_mode_ignores_noise() {
        let mut cfg = tiny(6, 4).config;
        cfg.mode = AblationMode::Deterministic;
        let p = ModelParams::new(cfg, 4, 1.0);
        let f = clip(5);
        let a = beam_search(&p, &f, 3, 6, NoiseMode::Shared(1)).unwrap();
        let b = beam_search(&p, &f, 3, 6, NoiseMode::Shared(2)).unwrap();
        assert_eq!(a, b);
    }
}
