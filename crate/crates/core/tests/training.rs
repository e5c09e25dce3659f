mod common;

use candle_core::{DType, Device, Tensor};
use landmark_expr::codec::Provenance;
use landmark_expr::data::{synth_corpus, Dataset, Image, Vocabulary};
use landmark_expr::identity::{train_embedder, EmbedderTrainConfig, IdentityEmbedder};
use landmark_expr::losses::{discriminator_loss, scalar, LossReport};
use landmark_expr::nn::{Adam, AdamConfig, Discriminator, DiscriminatorSpec};
use landmark_expr::train::{self, generate, latest_checkpoint, load_checkpoint, Trainer};
use landmark_expr::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::tiny_config;

fn corpus() -> Dataset {
    synth_corpus(2, &Vocabulary::basic_expressions(), 1, 32, 5).unwrap()
}

fn embedder(ds: &Dataset) -> IdentityEmbedder {
    train_embedder(
        ds,
        &EmbedderTrainConfig {
            epochs: 2,
            ..Default::default()
        },
    )
    .unwrap()
}

fn trace(reports: &[LossReport]) -> Vec<f64> {
    reports.iter().flat_map(|r| r.terms().map(|(_, v)| v)).collect()
}

#[test]
fn seeded_runs_reproduce_exactly() {
    let ds = corpus();
    let emb = embedder(&ds);
    let run = || {
        trace(
            &Trainer::new(&ds, tiny_config(4), Some(&emb))
                .unwrap()
                .run(4)
                .unwrap(),
        )
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 4 * 14);
    assert_eq!(a, b);

    let other = trace(
        &Trainer::new(
            &ds,
            landmark_expr::train::TrainConfig {
                seed: 1,
                ..tiny_config(4)
            },
            Some(&emb),
        )
        .unwrap()
        .run(4)
        .unwrap(),
    );
    assert_ne!(a, other, "a different seed must change the run");
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let ds = corpus();
    let emb = embedder(&ds);
    let straight = trace(
        &Trainer::new(&ds, tiny_config(6), Some(&emb))
            .unwrap()
            .run(6)
            .unwrap(),
    );

    let dir = tempfile::tempdir().unwrap();
    let mut first = Trainer::new(&ds, tiny_config(6), Some(&emb)).unwrap();
    let mut resumed = trace(&first.run(3).unwrap());
    let ckpt = first.save_checkpoint(dir.path()).unwrap();
    drop(first);
    let mut second = Trainer::resume(&ckpt, &ds, Some(&emb)).unwrap();
    assert_eq!(second.step_count(), 3);
    resumed.extend(trace(&second.run(3).unwrap()));
    let worst = straight
        .iter()
        .zip(&resumed)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert_eq!(straight.len(), resumed.len());
    assert!(worst <= 1e-6, "max difference {worst}");
}

#[test]
fn every_network_updates_and_embedder_stays_fixed() {
    let ds = corpus();
    let emb = embedder(&ds);
    let emb_hash = emb.parameter_hash().unwrap();
    let mut trainer = Trainer::new(&ds, tiny_config(2), Some(&emb)).unwrap();
    let before = trainer.model().parameter_hashes().unwrap();
    trainer.step().unwrap();
    let after = trainer.model().parameter_hashes().unwrap();
    for (net, (b, a)) in ["G_l", "G_e", "D_l", "D_e"].iter().zip(before.iter().zip(&after)) {
        assert_ne!(b, a, "{net} was not updated");
    }
    assert_eq!(emb.parameter_hash().unwrap(), emb_hash);
}

#[test]
fn disabled_landmark_term_reports_zero() {
    let ds = corpus();
    let cfg = landmark_expr::train::TrainConfig {
        use_landmark_recon: false,
        use_identity_loss: false,
        ..tiny_config(3)
    };
    let reports = Trainer::new(&ds, cfg, None).unwrap().run(3).unwrap();
    assert_eq!(reports.len(), 3);
    for r in &reports {
        assert_eq!(r.landmark_recon, 0.0);
        assert_eq!(r.identity, 0.0);
        assert!(r.first_non_finite().is_none());
    }
}

#[test]
fn identity_loss_requires_an_embedder() {
    let ds = corpus();
    let err = Trainer::new(&ds, tiny_config(1), None).err().unwrap();
    assert!(matches!(err, Error::Invalid(_)), "{err}");
}

#[test]
fn discriminator_alone_separates_real_from_fake() {
    let ds = corpus();
    let real: Vec<&Image> = ds.samples.iter().take(4).map(|s| &s.image).collect();
    let real = Image::batch_tensor(&real, &Device::Cpu, DType::F32).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fake: Vec<Image> = (0..4).map(|_| common::random_image(32, 32, &mut rng)).collect();
    let fake = Image::batch_tensor(&fake.iter().collect::<Vec<_>>(), &Device::Cpu, DType::F32).unwrap();
    let d = Discriminator::new(DiscriminatorSpec::new(3, 8, true), 0, DType::F32, &Device::Cpu).unwrap();
    let mut opt = Adam::new(AdamConfig::new(2e-4, 0.5, 0.999));
    let loss = |d: &Discriminator| -> Tensor {
        discriminator_loss(&d.forward(&real).unwrap(), &d.forward(&fake).unwrap()).unwrap()
    };
    let start = scalar(&loss(&d)).unwrap();
    for _ in 0..50 {
        let l = loss(&d);
        opt.step(d.params(), &l.backward().unwrap()).unwrap();
    }
    let end = scalar(&loss(&d)).unwrap();
    assert!(end < start, "discriminator loss {start} -> {end}");
}

#[test]
fn train_writes_log_checkpoints_and_resumes() {
    let ds = corpus();
    let emb = embedder(&ds);
    let dir = tempfile::tempdir().unwrap();
    let cfg = landmark_expr::train::TrainConfig {
        checkpoint_every: 2,
        ..tiny_config(3)
    };
    let outcome = train::train(&ds, cfg, Some(&emb), Some(dir.path())).unwrap();
    assert_eq!(outcome.reports.len(), 3);
    let log = std::fs::read_to_string(dir.path().join("losses.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 3);
    let first: LossReport = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first.step, 1);
    let latest = latest_checkpoint(&dir.path().join("checkpoints"))
        .unwrap()
        .unwrap();
    assert!(latest.ends_with("ckpt_3"), "{}", latest.display());
    assert!(dir.path().join("checkpoints/ckpt_2").is_dir());

    // the restored model generates exactly what the in-memory one does
    let restored = load_checkpoint(&latest).unwrap().model;
    assert_eq!(
        restored.parameter_hashes().unwrap(),
        outcome.model.parameter_hashes().unwrap()
    );
    // finished runs resume as a no-op
    let again = train::resume_training(&ds, Some(&emb), dir.path()).unwrap();
    assert!(again.reports.is_empty());
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let ds = corpus();
    let emb = embedder(&ds);
    let dir = tempfile::tempdir().unwrap();
    let mut trainer = Trainer::new(&ds, tiny_config(1), Some(&emb)).unwrap();
    trainer.step().unwrap();
    let ckpt = trainer.save_checkpoint(dir.path()).unwrap();
    let state = ckpt.join("state.json");
    let text = std::fs::read_to_string(&state).unwrap();
    let mut json: serde_json::Value = serde_json::from_str(&text).unwrap();
    json["parameter_hashes"][0] = serde_json::Value::String("0".repeat(64));
    std::fs::write(&state, json.to_string()).unwrap();
    assert!(matches!(load_checkpoint(&ckpt), Err(Error::Checkpoint(_))));
}

#[test]
fn generation_produces_consistent_outputs() {
    let ds = corpus();
    let cfg = landmark_expr::train::TrainConfig {
        use_identity_loss: false,
        ..tiny_config(1)
    };
    let mut trainer = Trainer::new(&ds, cfg, None).unwrap();
    trainer.step().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let ckpt = trainer.save_checkpoint(dir.path()).unwrap();
    let model = trainer.model();
    let input = &ds.samples[0].image;

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let g = model.generate(input, "happy", None, true, &mut rng).unwrap();
    assert_eq!((g.face.height(), g.face.width()), (32, 32));
    assert_eq!(g.landmark_image.provenance, Provenance::Generated);
    assert!(g.landmarks.in_bounds(32, 32));
    assert!(g.face.data().iter().all(|v| (-1.0..=1.0).contains(v)));

    // deterministic generation ignores the random stream
    let again = model
        .generate(input, "happy", None, true, &mut ChaCha8Rng::seed_from_u64(9))
        .unwrap();
    assert_eq!(g.face.data(), again.face.data());
    // dropout noise changes the output
    let noisy = model.generate(input, "happy", None, false, &mut rng).unwrap();
    assert_ne!(g.face.data(), noisy.face.data());

    assert!(matches!(
        model.generate(input, "bored", None, true, &mut rng),
        Err(Error::UnknownLabel { .. })
    ));
    assert!(model.generate(input, "happy", Some(2), true, &mut rng).is_err());
    let small = Image::filled(16, 16, [0.0; 3]);
    assert!(matches!(
        model.generate(&small, "happy", None, true, &mut rng),
        Err(Error::Shape(_))
    ));

    let g = generate(&ckpt, input, "happy", None).unwrap();
    assert_eq!(g.landmarks.points().len(), 68);
    assert_eq!(g.landmark_image.image.height(), 32);
    assert_eq!(g.face.width(), 32);
}

#[test]
fn intensity_conditioning_requires_levels() {
    let vocab = Vocabulary::new(["neutral", "happy"]).unwrap();
    let ds = synth_corpus(2, &vocab, 4, 32, 1).unwrap();
    let cfg = landmark_expr::train::TrainConfig {
        intensity_conditioning: true,
        use_identity_loss: false,
        pairing: landmark_expr::data::PairingPolicy::FromNeutral,
        ..tiny_config(1)
    };
    let mut trainer = Trainer::new(&ds, cfg.clone(), None).unwrap();
    trainer.step().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let input = &ds.samples[0].image;
    for level in 1..=4 {
        trainer
            .model()
            .generate(input, "happy", Some(level), true, &mut rng)
            .unwrap();
    }
    assert!(trainer
        .model()
        .generate(input, "happy", Some(5), true, &mut rng)
        .is_err());
    // an omitted level means level 1
    let default = trainer
        .model()
        .generate(input, "happy", None, true, &mut rng)
        .unwrap();
    let first = trainer
        .model()
        .generate(input, "happy", Some(1), true, &mut rng)
        .unwrap();
    assert_eq!(default.face.data(), first.face.data());

    let flat = synth_corpus(2, &vocab, 1, 32, 1).unwrap();
    assert!(Trainer::new(&flat, cfg, None).is_err());
}
