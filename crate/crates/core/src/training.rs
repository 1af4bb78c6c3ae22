//! Adadelta, the epoch loop with KL annealing and early stopping, and the
//! finite-difference gradient check.

use std::fmt;
use std::str::FromStr;

use crate::data::ClipRecord;
use crate::decoding::{beam_search_pooled, NoiseMode};
use crate::error::{Error, Result};
use crate::metrics::{bleu, cider, rouge_l, EvalCorpus};
use crate::model::{
    draw_noise, forward_train_with_noise, kl_anneal_weight_with, loss_and_gradients, mean_pool,
    AblationMode, Decoder, ModelConfig, ModelParams,
};
use crate::numerics::{RandomSource, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdadeltaConfig {
    pub rho: f64,
    pub eps: f64,
    /// Multiplies every update.
    pub scale: f64,
}

impl Default for AdadeltaConfig {
    fn default() -> Self {
        AdadeltaConfig {
            rho: 0.95,
            eps: 1e-6,
            scale: 1.0,
        }
    }
}

/// Squared-gradient and squared-update running averages, one tensor per
/// parameter in canonical order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdadeltaState {
    pub config: AdadeltaConfig,
    pub acc_grad: Vec<Tensor>,
    pub acc_update: Vec<Tensor>,
}

impl AdadeltaState {
    pub fn new(params: &ModelParams, config: AdadeltaConfig) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        AdadeltaState {
            config,
            acc_grad: zeros.clone(),
            acc_update: zeros,
        }
    }
}

/// Applies one Adadelta update in place. Returns the largest `|delta|`.
pub fn adadelta_step(state: &mut AdadeltaState, params: &mut ModelParams, grads: &ModelParams) -> Result<f64> {
    let g = grads.tensors();
    if g.len() != state.acc_grad.len() {
        return Err(Error::contract("gradient and optimizer state have different tensor counts"));
    }
    let mut names = Vec::new();
    params.visit(&mut |n, t| names.push((n.to_string(), t.shape().to_vec())));
    for (i, (name, shape)) in names.iter().enumerate() {
        if g[i].shape() != shape.as_slice() || state.acc_grad[i].shape() != shape.as_slice() {
            return Err(Error::contract(format!(
                "gradient for {name} has shape {:?}, parameter has {shape:?}",
                g[i].shape()
            )));
        }
    }
    let AdadeltaConfig { rho, eps, scale } = state.config;
    let mut i = 0;
    let mut max_delta: f64 = 0.0;
    let (acc_g, acc_d) = (&mut state.acc_grad, &mut state.acc_update);
    params.visit_mut(&mut |_, p| {
        let gi = g[i].data();
        let ag = acc_g[i].data_mut();
        let ad = acc_d[i].data_mut();
        for (k, x) in p.data_mut().iter_mut().enumerate() {
            ag[k] = rho * ag[k] + (1.0 - rho) * gi[k] * gi[k];
            let delta = -((ad[k] + eps).sqrt() / (ag[k] + eps).sqrt()) * gi[k] * scale;
            ad[k] = rho * ad[k] + (1.0 - rho) * delta * delta;
            *x += delta;
            max_delta = max_delta.max(delta.abs());
        }
        i += 1;
    });
    if !max_delta.is_finite() {
        return Err(Error::NonFinite { op: "adadelta_step" });
    }
    Ok(max_delta)
}

/// Metric used to select the best epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValMetric {
    Bleu(usize),
    RougeL,
    Cider,
}

impl FromStr for ValMetric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bleu1" | "bleu@1" => Ok(ValMetric::Bleu(1)),
            "bleu2" | "bleu@2" => Ok(ValMetric::Bleu(2)),
            "bleu3" | "bleu@3" => Ok(ValMetric::Bleu(3)),
            "bleu4" | "bleu@4" => Ok(ValMetric::Bleu(4)),
            "rouge_l" | "rouge-l" | "rougel" => Ok(ValMetric::RougeL),
            "cider" => Ok(ValMetric::Cider),
            other => Err(Error::Usage(format!("unknown metric `{other}`"))),
        }
    }
}

impl fmt::Display for ValMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValMetric::Bleu(n) => write!(f, "bleu{n}"),
            ValMetric::RougeL => write!(f, "rouge_l"),
            ValMetric::Cider => write!(f, "cider"),
        }
    }
}

impl ValMetric {
    pub fn score<T: Clone + Ord>(&self, corpus: &EvalCorpus<T>) -> Result<f64> {
        match *self {
            ValMetric::Bleu(n) => bleu(corpus, n),
            ValMetric::RougeL => rouge_l(corpus),
            ValMetric::Cider => cider(corpus),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub anneal_epochs: usize,
    pub anneal_start: f64,
    pub seed: u64,
    pub val_metric: ValMetric,
    pub beam_size: usize,
    pub max_len: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub optimizer: AdadeltaConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 4,
            max_epochs: 500,
            patience: 20,
            anneal_epochs: 20,
            anneal_start: 0.01,
            seed: 0,
            val_metric: ValMetric::Bleu(4),
            beam_size: 5,
            max_len: 30,
            clip_norm: None,
            optimizer: AdadeltaConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::contract("batch_size, patience and max_epochs must be at least 1"));
        }
        if self.beam_size == 0 || self.max_len == 0 {
            return Err(Error::contract("beam_size and max_len must be at least 1"));
        }
        if !(self.anneal_start > 0.0 && self.anneal_start <= 1.0) {
            return Err(Error::contract("anneal_start must be in (0, 1]"));
        }
        if let Some(c) = self.clip_norm {
            if !(c > 0.0 && c.is_finite()) {
                return Err(Error::contract("clip_norm must be positive"));
            }
        }
        let o = self.optimizer;
        if !(o.rho > 0.0 && o.rho < 1.0 && o.eps > 0.0 && o.scale >= 0.0 && o.scale.is_finite()) {
            return Err(Error::contract("adadelta needs 0 < rho < 1, eps > 0 and scale >= 0"));
        }
        Ok(())
    }
}

/// Per-epoch means over training sequences plus the validation score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub nll: f64,
    pub kl: f64,
    pub kl_weight: f64,
    pub objective: f64,
    pub val_metric: f64,
    /// Batches whose gradient was rescaled by the norm clip.
    pub clip_events: usize,
}

impl EpochRecord {
    /// `epoch, nll, kl, kl_weight, val_metric`
    pub fn log_line(&self) -> String {
        format!(
            "{}, {:.6}, {:.6}, {:.6}, {:.6}",
            self.epoch, self.nll, self.kl, self.kl_weight, self.val_metric
        )
    }
}

pub fn history_log(history: &[EpochRecord]) -> String {
    history.iter().map(|r| r.log_line() + "\n").collect()
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best validation score.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Mean-mode beam search over `clips`, scored against each clip's references.
pub fn validation_score(
    p: &ModelParams,
    clips: &[ClipRecord],
    metric: ValMetric,
    beam_size: usize,
    max_len: usize,
) -> Result<f64> {
    let decoder = Decoder::new(p);
    let mut corpus = EvalCorpus::new();
    for clip in clips {
        let refs = clip.references();
        if refs.is_empty() {
            return Err(Error::contract(format!("validation clip {} has no captions", clip.id)));
        }
        let v_bar = mean_pool(&clip.frames)?;
        let cap = beam_search_pooled(&decoder, &v_bar, beam_size, max_len, NoiseMode::Mean)?;
        corpus.insert(clip.id.clone(), cap.tokens, refs)?;
    }
    metric.score(&corpus)
}

fn divergence(err: Error, epoch: usize, batch: usize) -> Error {
    match err {
        Error::NonFinite { .. } => Error::Divergence { epoch, batch },
        other => other,
    }
}

fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|t| t.data())
        .map(|x| x * x)
        .sum::<f64>()
        .sqrt()
}

/// Trains on every (clip, caption) pair with seeded shuffling, averaged
/// minibatch gradients and Adadelta. Stops at `max_epochs` or when the
/// validation score has not strictly improved for `patience` epochs. The
/// latest epoch among those tied for the best score is returned.
pub fn train(
    initial: &ModelParams,
    train_set: &[ClipRecord],
    val_set: &[ClipRecord],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    train_with_observer(initial, train_set, val_set, cfg, |_| {})
}

/// `train`, calling `observe` after every epoch.
pub fn train_with_observer(
    initial: &ModelParams,
    train_set: &[ClipRecord],
    val_set: &[ClipRecord],
    cfg: &TrainConfig,
    mut observe: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    initial.check_shapes()?;
    let d = initial.dims();
    let mut samples = Vec::new();
    for (ci, clip) in train_set.iter().enumerate() {
        if clip.frames.shape()[1] != d.d_v {
            return Err(Error::Schema(format!(
                "clip {} has feature dimension {}, model expects {}",
                clip.id,
                clip.frames.shape()[1],
                d.d_v
            )));
        }
        for (k, cap) in clip.captions.iter().enumerate() {
            if let Some(&bad) = cap.iter().find(|&&t| t >= d.d_a) {
                return Err(Error::Vocabulary { index: bad, size: d.d_a });
            }
            samples.push((ci, k));
        }
    }
    if samples.is_empty() {
        return Err(Error::contract("training set has no captioned clips"));
    }

    let mut rs = RandomSource::new(cfg.seed);
    let mut params = initial.clone();
    let mut opt = AdadeltaState::new(&params, cfg.optimizer);
    let mut best: Option<(f64, usize, ModelParams)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();

    for epoch in 0..cfg.max_epochs {
        let kl_weight = kl_anneal_weight_with(epoch, cfg.anneal_epochs, cfg.anneal_start);
        rs.shuffle(&mut samples);
        let (mut nll, mut kl, mut objective) = (0.0, 0.0, 0.0);
        let mut clip_events = 0;
        for (batch, chunk) in samples.chunks(cfg.batch_size).enumerate() {
            let mut sum: Option<Vec<Tensor>> = None;
            for &(ci, k) in chunk {
                let clip = &train_set[ci];
                let tokens = &clip.captions[k];
                let eps = draw_noise(&mut rs, tokens.len() - 1, d.d_z);
                let (loss, grads) = loss_and_gradients(&params, &clip.frames, tokens, &eps, kl_weight)
                    .map_err(|e| divergence(e, epoch, batch))?;
                if !loss.objective.is_finite() {
                    return Err(Error::Divergence { epoch, batch });
                }
                nll += loss.nll;
                kl += loss.kl;
                objective += loss.objective;
                let g: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();
                sum = Some(match sum {
                    None => g,
                    Some(acc) => acc
                        .iter()
                        .zip(&g)
                        .map(|(a, b)| a.add(b))
                        .collect::<Result<_>>()
                        .map_err(|e| divergence(e, epoch, batch))?,
                });
            }
            let mut mean = 1.0 / chunk.len() as f64;
            let sum = sum.expect("chunks are non-empty");
            if let Some(c) = cfg.clip_norm {
                let norm = global_norm(&sum) * mean;
                if norm > c {
                    mean *= c / norm;
                    clip_events += 1;
                }
            }
            let mut grads = ModelParams::zeros(params.config);
            let mut it = sum.into_iter();
            let mut failed = false;
            grads.visit_mut(&mut |_, t| {
                let g = it.next().expect("same tensor count");
                match g.scale(mean) {
                    Ok(s) => *t = s,
                    Err(_) => failed = true,
                }
            });
            if failed {
                return Err(Error::Divergence { epoch, batch });
            }
            adadelta_step(&mut opt, &mut params, &grads).map_err(|e| divergence(e, epoch, batch))?;
        }
        let n = samples.len() as f64;
        let val = validation_score(
            &params,
            if val_set.is_empty() { train_set } else { val_set },
            cfg.val_metric,
            cfg.beam_size,
            cfg.max_len,
        )?;
        let record = EpochRecord {
            epoch,
            nll: nll / n,
            kl: kl / n,
            kl_weight,
            objective: objective / n,
            val_metric: val,
            clip_events,
        };
        observe(&record);
        history.push(record);
        // ties move the selection forward; only strict gains reset patience
        match &best {
            Some((b, _, _)) if val < *b => since_best += 1,
            Some((b, _, _)) if val == *b => {
                since_best += 1;
                best = Some((val, epoch, params.clone()));
            }
            _ => {
                best = Some((val, epoch, params.clone()));
                since_best = 0;
            }
        }
        if since_best >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, params) = best.expect("at least one epoch ran");
    Ok(TrainOutcome {
        params,
        best_epoch,
        history,
    })
}

/// Returns a copy of the parameters running in the given mode. In `M` the
/// stochastic tensors stay in place but are never read.
pub fn ablation_mode(p: &ModelParams, mode: AblationMode) -> ModelParams {
    let mut q = p.clone();
    q.config.mode = mode;
    q
}

/// Worst relative error of one named tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupReport {
    pub name: String,
    pub max_rel_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GradCheckReport {
    pub groups: Vec<GroupReport>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.groups.iter().all(|g| g.passed)
    }

    pub fn failing(&self) -> Vec<&str> {
        self.groups.iter().filter(|g| !g.passed).map(|g| g.name.as_str()).collect()
    }

    pub fn max_error(&self) -> f64 {
        self.groups.iter().map(|g| g.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.groups {
            writeln!(
                f,
                "{}\t{:.3e}\t{}",
                g.name,
                g.max_rel_error,
                if g.passed { "ok" } else { "FAIL" }
            )?;
        }
        Ok(())
    }
}

/// Step of the fourth-order central difference.
pub const FD_STEP: f64 = 1e-4;
/// Denominator floor for the relative error, so that gradients near zero are
/// compared in absolute terms.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares analytic gradients of named tensors with central differences of
/// `loss`. `loss` receives the tensors with one element perturbed.
pub fn finite_difference_report(
    tensors: &[(String, Tensor)],
    analytic: &[Tensor],
    tolerance: f64,
    mut loss: impl FnMut(&[(String, Tensor)]) -> Result<f64>,
) -> Result<GradCheckReport> {
    if analytic.len() != tensors.len() {
        return Err(Error::contract("one analytic gradient per tensor is required"));
    }
    let mut work = tensors.to_vec();
    let mut groups = Vec::with_capacity(tensors.len());
    for (i, (name, _)) in tensors.iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 0..work[i].1.len() {
            let orig = work[i].1.data()[k];
            let mut at = |offset: f64| {
                work[i].1.data_mut()[k] = orig + offset;
                loss(&work)
            };
            let (p1, m1) = (at(FD_STEP)?, at(-FD_STEP)?);
            let (p2, m2) = (at(2.0 * FD_STEP)?, at(-2.0 * FD_STEP)?);
            work[i].1.data_mut()[k] = orig;
            let numeric = (8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * FD_STEP);
            worst = worst.max(relative_error(analytic[i].data()[k], numeric));
        }
        groups.push(GroupReport {
            name: name.clone(),
            max_rel_error: worst,
            passed: worst < tolerance,
        });
    }
    Ok(GradCheckReport { groups, tolerance })
}

/// Gradient check of the full objective on a random model and sample.
pub fn gradient_check(config: ModelConfig, seq_len: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    gradient_check_with_hook(config, seq_len, seed, tolerance, |_, _| {})
}

/// `gradient_check` with a hook that may alter the analytic gradients first.
pub fn gradient_check_with_hook(
    config: ModelConfig,
    seq_len: usize,
    seed: u64,
    tolerance: f64,
    mut corrupt: impl FnMut(&str, &mut Tensor),
) -> Result<GradCheckReport> {
    if seq_len == 0 {
        return Err(Error::contract("gradient check needs T >= 1"));
    }
    let d = config.dims;
    let p = ModelParams::new(config, seed, 0.5);
    let mut rs = RandomSource::new(seed ^ 0x9e37_79b9_7f4a_7c15);
    let frames = Tensor::matrix(3, d.d_v, rs.sample_standard_normal(3 * d.d_v).into_data())?;
    let mut tokens = vec![crate::data::BOS_ID];
    tokens.extend((0..seq_len).map(|_| (rs.uniform() * d.d_a as f64) as usize % d.d_a));
    let eps = draw_noise(&mut rs, seq_len, d.d_z);
    let kl_weight = 0.5;

    let (_, mut grads) = loss_and_gradients(&p, &frames, &tokens, &eps, kl_weight)?;
    grads.visit_mut(&mut |n, t| corrupt(n, t));
    let mut named = Vec::new();
    p.visit(&mut |n, t| named.push((n.to_string(), t.clone())));
    let analytic: Vec<Tensor> = grads.tensors().into_iter().cloned().collect();

    let mut probe = p.clone();
    finite_difference_report(&named, &analytic, tolerance, |ts| {
        let mut it = ts.iter();
        probe.visit_mut(&mut |_, t| t.clone_from(&it.next().expect("same tensor count").1));
        let (loss, _) = forward_train_with_noise(&probe, &frames, &tokens, &eps, kl_weight)?;
        Ok(loss.objective)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Dims, PosteriorMean};

    fn tiny_config() -> ModelConfig {
        ModelConfig::new(Dims {
            d_v: 3,
            d_s: 3,
            h: 4,
            h_r: 3,
            d_z: 2,
            d_a: 6,
            fc_hidden: 3,
        })
    }

    fn scalar_state(g: f64, cfg: AdadeltaConfig) -> (AdadeltaState, ModelParams, ModelParams) {
        let p = ModelParams::zeros(tiny_config());
        let mut grads = ModelParams::zeros(tiny_config());
        grads.output.b.data_mut()[0] = g;
        (AdadeltaState::new(&p, cfg), p, grads)
    }

    #[test]
    fn adadelta_first_step_value() {
        let (mut st, mut p, g) = scalar_state(1.0, AdadeltaConfig::default());
        adadelta_step(&mut st, &mut p, &g).unwrap();
        let expected = -(1e-6f64).sqrt() / (0.050001f64).sqrt();
        assert!((p.output.b.data()[0] - expected).abs() < 1e-15);
        assert!((expected + 0.004472).abs() < 1e-6);
    }

    #[test]
    fn zero_gradient_only_decays() {
        let (mut st, mut p, g) = scalar_state(1.0, AdadeltaConfig::default());
        adadelta_step(&mut st, &mut p, &g).unwrap();
        let before = p.clone();
        let acc_before = st.acc_grad.clone();
        adadelta_step(&mut st, &mut p, &ModelParams::zeros(tiny_config())).unwrap();
        assert_eq!(p, before);
        for (a, b) in st.acc_grad.iter().zip(&acc_before) {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(*x, 0.95 * y);
            }
        }
    }

    #[test]
    fn adadelta_is_deterministic_and_bounded() {
        let cfg = AdadeltaConfig::default();
        let mut rs = RandomSource::new(5);
        let p0 = ModelParams::new(tiny_config(), 1, 0.1);
        let (mut s1, mut s2) = (AdadeltaState::new(&p0, cfg), AdadeltaState::new(&p0, cfg));
        let (mut p1, mut p2) = (p0.clone(), p0.clone());
        for _ in 0..5 {
            let mut g = ModelParams::zeros(tiny_config());
            g.visit_mut(&mut |_, t| {
                for x in t.data_mut() {
                    *x = 10.0 * rs.standard_normal();
                }
            });
            let bounds: Vec<f64> = s1
                .acc_update
                .iter()
                .map(|a| a.data().iter().map(|v| ((v + cfg.eps) / cfg.eps).sqrt()).fold(0.0, f64::max))
                .collect();
            let before = p1.clone();
            adadelta_step(&mut s1, &mut p1, &g).unwrap();
            adadelta_step(&mut s2, &mut p2, &g).unwrap();
            let (a, b) = (before.tensors(), p1.tensors());
            for i in 0..a.len() {
                assert!(a[i].max_abs_diff(b[i]) <= cfg.scale * bounds[i] + 1e-15);
            }
        }
        assert_eq!(p1, p2);
        assert_eq!(s1, s2);
    }

    #[test]
    fn adadelta_rejects_shape_mismatch() {
        let (mut st, mut p, _) = scalar_state(0.0, AdadeltaConfig::default());
        let mut other = tiny_config();
        other.dims.d_a = 7;
        assert!(matches!(
            adadelta_step(&mut st, &mut p, &ModelParams::zeros(other)),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn anneal_schedule() {
        assert_eq!(kl_anneal_weight_with(0, 20, 0.01), 0.01);
        assert_eq!(kl_anneal_weight_with(20, 20, 0.01), 1.0);
        assert_eq!(kl_anneal_weight_with(300, 20, 0.01), 1.0);
        assert!((kl_anneal_weight_with(10, 20, 0.01) - 0.505).abs() < 1e-12);
    }

    #[test]
    fn tiny_gradient_check_passes_in_both_kl_modes() {
        for kl_mean in [PosteriorMean::Effective, PosteriorMean::Residual] {
            let mut cfg = tiny_config();
            cfg.kl_mean = kl_mean;
            let report = gradient_check(cfg, 3, 11, 1e-4).unwrap();
            assert!(report.passed(), "{report}");
            assert_eq!(report.groups.len(), ModelParams::zeros(cfg).names().len());
        }
    }

    #[test]
    fn corrupted_gradient_is_flagged() {
        let report = gradient_check_with_hook(tiny_config(), 3, 11, 1e-4, |n, t| {
            if n == "mlstm.w_yo" {
                t.data_mut()[0] += 0.1;
            }
        })
        .unwrap();
        assert_eq!(report.failing(), ["mlstm.w_yo"]);
    }

    #[test]
    fn empty_parameter_set_gives_empty_report() {
        let report = finite_difference_report(&[], &[], 1e-4, |_| Ok(0.0)).unwrap();
        assert!(report.groups.is_empty());
        assert!(report.passed());
    }

    #[test]
    fn ablation_switches_mode_only() {
        let p = ModelParams::new(tiny_config(), 3, 0.1);
        let m = ablation_mode(&p, AblationMode::Deterministic);
        assert_eq!(m.config.mode, AblationMode::Deterministic);
        assert_eq!(m.tensors(), p.tensors());
    }
}
