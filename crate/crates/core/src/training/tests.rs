use super::*;
use crate::evaluation::SISDR_CAP_DB;
use crate::network::Variant;
use crate::signal_io::{build_training_grid, make_synthetic_corpus, pseudo_speech, NoiseKind};
use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

fn small_stft() -> StftConfig {
    StftConfig {
        frame_len: 64,
        hop: 32,
        fft_size: 64,
        ..StftConfig::default()
    }
}

fn tiny_cfg(variant: Variant) -> ModelConfig {
    ModelConfig {
        variant,
        encoder_channels: vec![2, 4],
        datrnn_blocks: 1,
        datrnn_dim: 8,
        chunk_len: 4,
        lstm_hidden: 4,
        stft: small_stft(),
        seed: 9,
        ..ModelConfig::default()
    }
}

fn gaussian(len: usize, seed: u64) -> Waveform {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    Waveform::new(
        (0..len).map(|_| 0.1 * r.sample::<f64, _>(StandardNormal)).collect(),
        16_000,
    )
    .unwrap()
}

fn speech(len: usize, seed: u64) -> Waveform {
    pseudo_speech(len, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn pair(len: usize, seed: u64) -> TrainPair {
    let clean = speech(len, seed);
    let noise = gaussian(len, seed + 1000);
    let noisy = Waveform::new(
        clean.samples.iter().zip(&noise.samples).map(|(a, b)| a + b).collect(),
        16_000,
    )
    .unwrap();
    TrainPair::new(clean, noisy, &small_stft()).unwrap()
}

#[test]
fn loss_examples() {
    let cfg = StftConfig::default();
    let clean = speech(4000, 1);
    let spec = stft(&clean, &cfg).unwrap();
    let l = loss(&clean, &clean, &spec, &spec, 0.3).unwrap();
    assert_eq!(l, -SISDR_CAP_DB / 10.0);

    let noisy = Waveform::new(
        clean
            .samples
            .iter()
            .zip(gaussian(4000, 2).samples)
            .map(|(a, b)| a + b)
            .collect(),
        16_000,
    )
    .unwrap();
    let base = loss(&noisy, &clean, &spec, &spec, 0.0).unwrap();
    for a in [0.5, 2.0, 7.0] {
        let scaled = Waveform::new(noisy.samples.iter().map(|v| a * v).collect(), 16_000).unwrap();
        assert!((loss(&scaled, &clean, &spec, &spec, 0.0).unwrap() - base).abs() < 1e-12);
    }

    let est_spec = stft(&noisy, &cfg).unwrap();
    let (cm, em) = (spec.magnitude(), est_spec.magnitude());
    let mut l1 = 0.0;
    for (a, b) in cm.iter().zip(em.iter()) {
        l1 += (a - b).abs();
    }
    l1 /= cm.len() as f64;
    let expect = -crate::evaluation::sisdr(&clean, &noisy).unwrap() / 10.0 + 0.3 * l1;
    let got = loss(&noisy, &clean, &est_spec, &spec, 0.3).unwrap();
    assert!((got - expect).abs() < 1e-12);

    let silent = Waveform::zeros(4000, 16_000);
    assert!(loss(&noisy, &silent, &est_spec, &spec, 0.3).is_err());
}

#[test]
fn loss_gradient_matches_finite_differences() {
    let p = pair(300, 3);
    let mut enh = p.noisy_spec.clone();
    let mut r = ChaCha8Rng::seed_from_u64(4);
    enh.real.mapv_inplace(|v| v + 0.05 * r.gen_range(-1.0..1.0));
    enh.imag.mapv_inplace(|v| v + 0.05 * r.gen_range(-1.0..1.0));
    for kind in [LossKind::Combined, LossKind::Waveform, LossKind::Spectral] {
        let (_, g) = loss_and_grad(&enh, &p.clean, &p.clean_spec, 0.3, kind).unwrap();
        let eval = |s: &ComplexSpectrogram| loss_and_grad(s, &p.clean, &p.clean_spec, 0.3, kind).unwrap().0.total;
        let eps = 1e-6;
        let (bins, frames) = enh.real.dim();
        let mut worst: f64 = 0.0;
        for k in 0..bins {
            for t in (0..frames).step_by(3) {
                for plane in 0..2 {
                    let probe = |delta: f64| {
                        let mut s = enh.clone();
                        let a: &mut Array2<f64> = if plane == 0 { &mut s.real } else { &mut s.imag };
                        a[[k, t]] += delta;
                        eval(&s)
                    };
                    let num = (probe(eps) - probe(-eps)) / (2.0 * eps);
                    let ana = if plane == 0 { g.real[[k, t]] } else { g.imag[[k, t]] };
                    worst = worst.max(crate::gradcheck::relative_error(ana, num));
                }
            }
        }
        assert!(worst < 1e-4, "{kind:?}: {worst}");
    }
}

#[test]
fn adam_and_clipping() {
    let mut a = Adam::new(2);
    let mut p = vec![1.0, -2.0];
    a.step(&mut p, &[0.5, -4.0], 0.1);
    // first bias-corrected step moves every coordinate by lr against the gradient sign
    assert!((p[0] - 0.9).abs() < 1e-7 && (p[1] + 1.9).abs() < 1e-7, "{p:?}");
    let mut p2 = p.clone();
    a.step(&mut p2, &[0.0, 0.0], 0.1);
    let m = 0.9 * 0.05;
    let v = 0.999 * 0.00025;
    let expect = p[0] - 0.1 * (m / (1.0 - 0.81)) / ((v / (1.0 - 0.999f64.powi(2))).sqrt() + ADAM_EPS);
    assert!((p2[0] - expect).abs() < 1e-12);

    let mut g = vec![3.0, 4.0];
    assert_eq!(clip_global_norm(&mut g, 1.0), 5.0);
    assert!((global_norm(&g) - 1.0).abs() < 1e-12);
    let mut small = vec![0.3, 0.4];
    clip_global_norm(&mut small, 1.0);
    assert_eq!(small, vec![0.3, 0.4]);
}

#[test]
fn train_config_validation_and_json() {
    let c = TrainConfig::default();
    c.validate().unwrap();
    let back: TrainConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
    assert_eq!(back, c);
    let partial: TrainConfig = serde_json::from_str(r#"{"lr": 0.01, "loss": "spectral"}"#).unwrap();
    assert_eq!(partial.loss, LossKind::Spectral);
    assert_eq!(partial.batch, c.batch);
    for bad in [
        TrainConfig { lr: 0.0, ..c.clone() },
        TrainConfig {
            loss_alpha: 1.5,
            ..c.clone()
        },
        TrainConfig { batch: 0, ..c.clone() },
        TrainConfig {
            grad_clip_norm: -1.0,
            ..c.clone()
        },
    ] {
        assert!(bad.validate().is_err());
    }
    assert!(serde_json::from_str::<TrainConfig>(r#"{"learning_rate": 1}"#).is_err());
}

#[test]
fn single_step_updates_parameters_within_clip() {
    let model = Model::build(&tiny_cfg(Variant::F)).unwrap();
    let before = model.flatten();
    let mut t = Trainer::new(
        model,
        TrainConfig {
            grad_clip_norm: 1e-3,
            ..TrainConfig::default()
        },
    )
    .unwrap();
    let p = pair(2000, 5);
    let s = t.step(&[&p]).unwrap();
    assert!(s.grad_norm > 0.0 && s.loss.is_finite());
    let after = t.model.flatten();
    assert!(before.iter().zip(&after).any(|(a, b)| a != b));
    // Adam's first step moves each coordinate by at most lr
    assert!(before.iter().zip(&after).all(|(a, b)| (a - b).abs() <= 1e-3 + 1e-12));
    assert!(t.step(&[]).is_err());
}

#[test]
fn clipping_bounds_the_applied_gradient() {
    let model = Model::build(&tiny_cfg(Variant::Base)).unwrap();
    let p = pair(2000, 6);
    let mut grad = model.zeros_like();
    accumulate_gradient(&model, &p, &TrainConfig::default(), &mut grad).unwrap();
    let mut g = grad.flatten();
    let raw = clip_global_norm(&mut g, 0.01);
    assert!(raw > 0.01);
    assert!(global_norm(&g) <= 0.01 + 1e-12);
}

#[test]
fn loss_decreases_on_fixed_batch() {
    let mut t = Trainer::new(Model::build(&tiny_cfg(Variant::F)).unwrap(), TrainConfig::default()).unwrap();
    let batch = [pair(2000, 7), pair(2000, 8)];
    let refs: Vec<&TrainPair> = batch.iter().collect();
    let first = t.step(&refs).unwrap().loss;
    let mut last = first;
    for _ in 0..49 {
        last = t.step(&refs).unwrap().loss;
    }
    assert!(last < first, "{first} -> {last}");
}

fn tiny_dataset() -> Dataset {
    let corpus: Vec<Utterance> = make_synthetic_corpus(3, 2)
        .unwrap()
        .into_iter()
        .map(|mut u| {
            u.clean.samples.truncate(12_000);
            u
        })
        .collect();
    let noise = NoiseGenerator::from_corpus(&corpus).unwrap();
    let ids: Vec<&str> = corpus.iter().map(|u| u.id.as_str()).collect();
    let grid = build_training_grid(&ids, &[NoiseKind::White], 4).unwrap();
    let grid: Vec<MixRecipe> = grid.into_iter().step_by(4).collect();
    Dataset::from_grid(&corpus, &noise, &grid, 0.34, &small_stft()).unwrap()
}

#[test]
fn dataset_split_by_utterance() {
    let d = tiny_dataset();
    assert!(!d.train.is_empty() && !d.valid.is_empty());
    assert_eq!(d.train.len() + d.valid.len(), 7);
    let corpus = make_synthetic_corpus(1, 2).unwrap();
    let noise = NoiseGenerator::from_corpus(&corpus).unwrap();
    assert!(Dataset::from_grid(&corpus, &noise, &[], 0.1, &small_stft()).is_err());
}

fn tcfg(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        batch: 2,
        lr_patience: 1,
        seed: 11,
        ..TrainConfig::default()
    }
}

#[test]
fn training_is_deterministic_and_resumable() {
    let data = tiny_dataset();
    let dir = tempfile::tempdir().unwrap();
    let full = train(
        Model::build(&tiny_cfg(Variant::F)).unwrap(),
        &data,
        &tcfg(3),
        Some(dir.path()),
    )
    .unwrap();
    let again = train(Model::build(&tiny_cfg(Variant::F)).unwrap(), &data, &tcfg(3), None).unwrap();
    assert_eq!(full.last, again.last);
    assert_eq!(full.last.state.history.len(), 6);

    let log = read_metrics_csv(dir.path().join(METRICS_FILE)).unwrap();
    assert_eq!(log, full.last.state.history);
    let text = std::fs::read_to_string(dir.path().join(METRICS_FILE)).unwrap();
    assert!(text.starts_with("epoch,split,loss,sisdr,stoi,lsd"));

    let best = Checkpoint::load(dir.path().join(BEST_CHECKPOINT)).unwrap();
    assert_eq!(best, full.best);
    let best_loss = full
        .last
        .state
        .history
        .iter()
        .filter(|r| r.split == "valid")
        .map(|r| r.loss)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(best.state.best_valid, Some(best_loss));

    let partial = train(
        Model::build(&tiny_cfg(Variant::F)).unwrap(),
        &data,
        &tcfg(1),
        Some(dir.path()),
    )
    .unwrap();
    let path = dir.path().join("resume.dnpc");
    partial.last.save(&path).unwrap();
    let loaded = Checkpoint::load(&path).unwrap();
    assert_eq!(loaded, partial.last);
    let x = crate::network::spectrogram_tensor(&data.train[0].noisy_spec);
    assert_eq!(
        loaded.model.forward_tensor(&x).unwrap(),
        partial.last.model.forward_tensor(&x).unwrap()
    );
    let mut resumed = Trainer::from_checkpoint(loaded).unwrap();
    resumed.config.epochs = 3;
    let out = train_from(resumed, &data, None).unwrap();
    assert_eq!(out.last.model, full.last.model);
    assert_eq!(out.last.state, full.last.state);
}

#[test]
fn learning_rate_decays_after_stalls() {
    let data = tiny_dataset();
    let mut t = Trainer::new(
        Model::build(&tiny_cfg(Variant::F)).unwrap(),
        TrainConfig { lr: 1e-9, ..tcfg(0) },
    )
    .unwrap();
    t.state.best_valid = Some(f64::NEG_INFINITY);
    t.run_epoch(&data).unwrap();
    assert_eq!(t.state.lr, 0.5e-9);
    assert!(train(
        Model::build(&tiny_cfg(Variant::F)).unwrap(),
        &Dataset::default(),
        &tcfg(1),
        None
    )
    .is_err());
}

#[test]
fn overfit_harness_basics() {
    let clean = speech(2000, 12);
    let noise = gaussian(4000, 13);
    let cfg = tiny_cfg(Variant::F);
    let (zero, model) = overfit_single(&cfg, &clean, &noise, 0.0, 0, &TrainConfig::default()).unwrap();
    assert_eq!(zero.sisdr_enhanced, zero.sisdr_initial);
    assert!(zero.losses.is_empty());
    assert_eq!(model, Model::build(&cfg).unwrap());
    assert!((zero.sisdr_noisy - 0.0).abs() < 0.5, "{}", zero.sisdr_noisy);

    let (a, _) = overfit_single(&cfg, &clean, &noise, 0.0, 3, &TrainConfig::default()).unwrap();
    let (b, _) = overfit_single(&cfg, &clean, &noise, 0.0, 3, &TrainConfig::default()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.losses.len(), 3);
}

#[test]
fn gradient_audit_passes_for_every_module() {
    for m in AuditModule::ALL {
        let rep = grad_audit(m, AuditDims::default(), 1e-5, 1).unwrap();
        assert!(rep.passes(1e-4), "{m}: {rep:?}");
        assert!(rep.checked > 0);
        assert_eq!(m.name().parse::<AuditModule>().unwrap(), m);
    }
    assert!("bogus".parse::<AuditModule>().is_err());
    assert_eq!(
        "3x9x5".parse::<AuditDims>().unwrap(),
        AuditDims {
            channels: 3,
            freq: 9,
            frames: 5
        }
    );
    assert!("3x9".parse::<AuditDims>().is_err());
    assert!("0x9x5".parse::<AuditDims>().is_err());
    assert!(grad_audit(AuditModule::Lstm, AuditDims::default(), 0.0, 1).is_err());
}
