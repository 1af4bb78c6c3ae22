use msrnn::data::{generate_synthetic, join, ClipRecord, SynthSpec, Vocabulary};
use msrnn::decoding::{beam_search, NoiseMode};
use msrnn::model::{AblationMode, Decoder, DecoderState, Dims, ModelConfig, ModelParams};
use msrnn::numerics::Tensor;
use msrnn::training::{ablation_mode, train, AdadeltaConfig, TrainConfig};
use msrnn::Error;

fn small_dims(d_a: usize) -> Dims {
    Dims {
        d_v: 4,
        d_s: 8,
        h: 12,
        h_r: 8,
        d_z: 3,
        d_a,
        fc_hidden: 4,
    }
}

fn corpus(clips_per_scene: usize) -> (Vec<ClipRecord>, Vocabulary) {
    let spec = SynthSpec {
        scenes: 3,
        clips_per_scene,
        d_v: 4,
        frames: 3,
        ..SynthSpec::default()
    };
    let c = generate_synthetic(&spec).unwrap();
    let texts: Vec<String> = c.captions().into_iter().map(|(_, t)| t).collect();
    let vocab = Vocabulary::build(&texts, 1).unwrap();
    (join(c.features(), &c.captions(), &vocab).unwrap(), vocab)
}

#[test]
fn single_caption_is_memorised() {
    let (clips, vocab) = corpus(1);
    let one = vec![ClipRecord {
        captions: vec![clips[0].captions[0].clone()],
        ..clips[0].clone()
    }];
    let steps = (one[0].captions[0].len() - 1) as f64;
    let p = ModelParams::new(ModelConfig::new(small_dims(vocab.len())), 1, 0.08);
    let cfg = TrainConfig {
        batch_size: 1,
        max_epochs: 500,
        patience: 500,
        ..TrainConfig::default()
    };
    let out = train(&p, &one, &[], &cfg).unwrap();
    let best = out.history.iter().map(|r| r.nll / steps).fold(f64::INFINITY, f64::min);
    assert!(best < 0.1, "per-token nll {best}");
}

#[test]
fn frozen_optimizer_with_patience_one_evaluates_twice() {
    let (clips, vocab) = corpus(2);
    let p = ModelParams::new(ModelConfig::new(small_dims(vocab.len())), 2, 0.08);
    let cfg = TrainConfig {
        patience: 1,
        optimizer: AdadeltaConfig {
            scale: 0.0,
            ..AdadeltaConfig::default()
        },
        ..TrainConfig::default()
    };
    let out = train(&p, &clips, &[], &cfg).unwrap();
    assert_eq!(out.history.len(), 2);
    assert_eq!(out.params, p);
}

#[test]
fn training_is_deterministic_and_objective_falls() {
    let (clips, vocab) = corpus(4);
    let p = ModelParams::new(ModelConfig::new(small_dims(vocab.len())), 3, 0.08);
    let cfg = TrainConfig {
        max_epochs: 51,
        patience: 51,
        seed: 9,
        ..TrainConfig::default()
    };
    let a = train(&p, &clips, &[], &cfg).unwrap();
    let b = train(&p, &clips, &[], &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.params, b.params);
    assert!(a.history[50].objective < a.history[1].objective);

    let best = a.history.iter().map(|r| r.val_metric).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(a.history[a.best_epoch].val_metric, best);
}

#[test]
fn deterministic_mode_reports_zero_kl() {
    let (clips, vocab) = corpus(2);
    let mut cfg = ModelConfig::new(small_dims(vocab.len()));
    cfg.mode = AblationMode::Deterministic;
    let p = ModelParams::new(cfg, 4, 0.08);
    let tc = TrainConfig {
        max_epochs: 3,
        ..TrainConfig::default()
    };
    let out = train(&p, &clips, &[], &tc).unwrap();
    assert!(out.history.iter().all(|r| r.kl == 0.0));
    let f = &clips[0].frames;
    assert_eq!(
        beam_search(&out.params, f, 3, 10, NoiseMode::Shared(1)).unwrap(),
        beam_search(&out.params, f, 3, 10, NoiseMode::Shared(2)).unwrap()
    );
}

#[test]
fn silenced_prior_matches_deterministic_logits() {
    let (clips, vocab) = corpus(1);
    let mut p = ModelParams::new(ModelConfig::new(small_dims(vocab.len())), 5, 0.3);
    // mu_p = 0 and sigma_p = exp(-500) make z vanish
    let fc1 = &mut p.stochastic.fc_p1;
    fc1.w2 = Tensor::zeros(fc1.w2.shape());
    fc1.b2 = Tensor::zeros(fc1.b2.shape());
    let fc2 = &mut p.stochastic.fc_p2;
    fc2.w2 = Tensor::zeros(fc2.w2.shape());
    fc2.b2 = Tensor::vector(vec![-1000.0; fc2.b2.len()]);
    let m = ablation_mode(&p, AblationMode::Deterministic);
    let v_bar = msrnn::model::mean_pool(&clips[0].frames).unwrap();
    let (ds, dm) = (Decoder::new(&p), Decoder::new(&m));
    let (mut ss, mut sm) = (DecoderState::initial(&p.dims()), DecoderState::initial(&m.dims()));
    let eps = Tensor::vector(vec![1.5, -2.0, 0.7]);
    for &tok in &clips[0].captions[0][..4] {
        let (ls, ns) = ds.step_logits(&ss, tok, &v_bar, &eps).unwrap();
        let (lm, nm) = dm.step_logits(&sm, tok, &v_bar, &eps).unwrap();
        assert!(ls.max_abs_diff(&lm) < 1e-12);
        ss = ns;
        sm = nm;
    }
}

#[test]
fn overflow_is_reported_as_divergence() {
    let (clips, vocab) = corpus(2);
    let p = ModelParams::new(ModelConfig::new(small_dims(vocab.len())), 6, 400.0);
    match train(&p, &clips, &[], &TrainConfig::default()) {
        Err(Error::Divergence { epoch, batch }) => assert_eq!((epoch, batch), (0, 0)),
        other => panic!("{other:?}"),
    }
}

#[test]
fn empty_training_set_is_rejected() {
    let p = ModelParams::new(ModelConfig::new(small_dims(8)), 7, 0.08);
    assert!(matches!(train(&p, &[], &[], &TrainConfig::default()), Err(Error::Contract(_))));
}
