use densecap::captioning::{CaptionConfig, ContextMode};
use densecap::corpus::{build_vocab, generate_synthetic, Event, FeatureSequence, SyntheticSpec, VideoRecord, EOS, UNK};
use densecap::numerics::{grad_check_ids, Grads, Tensor};
use densecap::proposals::ProposalConfig;
use densecap::training::*;
use densecap::Error;

fn small_model(input_dim: usize, mode: &str, init_std: f64) -> ModelConfig {
    ModelConfig {
        proposal: ProposalConfig {
            strides: vec![1, 2],
            k: 3,
            hidden_size: 4,
            ..ProposalConfig::default()
        },
        caption: CaptionConfig {
            embed_dim: 4,
            hidden_size: 5,
            num_layers: 2,
            inject_every_step: false,
        },
        mode: ContextMode::from_variant(mode).unwrap(),
        init_std,
        ..ModelConfig::new(input_dim)
    }
}

fn corpus(n: usize, seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        duration_s: [10.0, 16.0],
        event_length_s: [2.0, 5.0],
        feature_dim: 5,
        events_per_video: [2, 3],
        ..SyntheticSpec::new(n, seed)
    }
}

fn data(spec: &SyntheticSpec) -> (TrainingData, densecap::corpus::Vocabulary) {
    let c = generate_synthetic(spec).unwrap();
    let vocab = build_vocab(&c.records, 1).unwrap();
    (TrainingData::new(c.records, c.features, &vocab).unwrap(), vocab)
}

fn fast_train(max_epochs: u64) -> TrainConfig {
    TrainConfig {
        alternate_every: 7,
        warmup_epochs: 1,
        max_epochs,
        ..TrainConfig::default()
    }
}

/// Two-row video whose single GT event makes one positive and one negative anchor.
fn balanced_video() -> (VideoRecord, FeatureSequence) {
    let seq = FeatureSequence::new("v", 16, 16.0, Tensor::matrix(2, 3, vec![0.5, -1.0, 2.0, 0.1, 0.2, 0.3]).unwrap())
        .unwrap();
    let rec = VideoRecord {
        id: "v".into(),
        duration_s: 2.0,
        events: vec![Event::new(0.0, 1.0, "zebra")],
    };
    (rec, seq)
}

fn spec(phase: Phase, mode: &str, source: CaptionSource) -> StepSpec {
    StepSpec {
        phase,
        mode: ContextMode::from_variant(mode).unwrap(),
        source,
    }
}

#[test]
fn joint_loss_of_zero_network() {
    let (rec, seq) = balanced_video();
    let vocab = build_vocab(std::slice::from_ref(&rec), 5).unwrap();
    assert_eq!(vocab.len(), 4);
    let mut model = small_model(3, "full", 0.0);
    model.proposal.strides = vec![1];
    model.proposal.k = 1;
    let p = Pipeline::new(model, vocab, 1).unwrap();
    let sentences = vec![vec![UNK, EOS]];
    let cfg = TrainConfig::default();
    let l = joint_loss(&p, p.params(), None, &seq, &rec, &sentences, &cfg, spec(Phase::Caption, "full", CaptionSource::GroundTruth))
        .unwrap()
        .unwrap();
    let expected = 1.0 * 4f64.ln() + 0.1 * 2f64.ln();
    assert!((l.total - expected).abs() < 1e-12, "{} vs {expected}", l.total);

    let no_prop = TrainConfig {
        lambda_prop: 0.0,
        ..cfg
    };
    let l = joint_loss(&p, p.params(), None, &seq, &rec, &sentences, &no_prop, spec(Phase::Caption, "full", CaptionSource::GroundTruth))
        .unwrap()
        .unwrap();
    assert_eq!(l.total, l.caption);
}

#[test]
fn joint_gradients_match_finite_differences() {
    let (d, vocab) = data(&corpus(2, 3));
    let v = 0;
    for (phase, lambda_cap) in [(Phase::Caption, 1.0), (Phase::Proposal, 0.0)] {
        for source in [CaptionSource::GroundTruth, CaptionSource::GatedProposals] {
            let mut p = Pipeline::new(small_model(5, "full", 0.3), vocab.clone(), 4).unwrap();
            let cfg = TrainConfig {
                lambda_cap,
                caption_iou_gate: 0.3,
                ..TrainConfig::default()
            };
            let ids = match phase {
                Phase::Caption => p.caption_ids(),
                Phase::Proposal => p.proposal_ids(),
            };
            let s = spec(phase, "full", source);
            let probe = p.clone();
            let report = grad_check_ids(&mut p.store, &ids, 1e-4, |params, g: &mut Grads| {
                joint_loss(&probe, params, Some(g), &d.features[v], &d.records[v], &d.sentences[v], &cfg, s)
                    .unwrap()
                    .unwrap()
                    .total
            })
            .unwrap();
            assert!(report.max_relative_error < 1e-4, "{phase:?} {source:?}: {report:?}");
        }
    }
}

#[test]
fn phases_touch_only_their_module() {
    let (d, vocab) = data(&corpus(6, 5));
    let mut t = Trainer::new(small_model(5, "full", 0.1), fast_train(3), vocab, 9).unwrap();
    for _ in 0..20 {
        let phase = t.phase();
        let snap = |t: &Trainer, ids: Vec<densecap::numerics::ParamId>| {
            ids.into_iter().map(|id| t.pipeline.store.value(id).clone()).collect::<Vec<_>>()
        };
        let frozen_ids = match phase {
            Phase::Caption => t.pipeline.proposal_ids(),
            Phase::Proposal => t.pipeline.caption_ids(),
        };
        let before = snap(&t, frozen_ids.clone());
        t.step(&d).unwrap();
        assert_eq!(snap(&t, frozen_ids), before, "{phase:?}");
    }
    let phases: Vec<Phase> = t.log().iter().map(|r| r.phase).collect();
    assert_eq!(phases[6], Phase::Caption);
    assert_eq!(phases[7], Phase::Proposal);
    assert_eq!(phases[14], Phase::Caption);
    assert_eq!(t.log().len(), 20);
}

#[test]
fn training_is_deterministic() {
    let (d, vocab) = data(&corpus(5, 6));
    let run = || {
        let mut t = Trainer::new(small_model(5, "online", 0.1), fast_train(3), vocab.clone(), 2).unwrap();
        t.train(&d).unwrap();
        t
    };
    let (a, b) = (run(), run());
    assert_eq!(a.log().len(), 15);
    let bits = |t: &Trainer| t.log().iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    assert_eq!(loss_log_csv(a.log()), loss_log_csv(b.log()));
    assert!(loss_log_csv(a.log()).starts_with("iteration,phase,loss\n0,caption,"));
}

#[test]
fn endless_warmup_matches_no_context() {
    let (d, vocab) = data(&corpus(4, 7));
    let run = |mode: &str| {
        let cfg = TrainConfig {
            warmup_epochs: u64::MAX,
            ..fast_train(3)
        };
        let mut t = Trainer::new(small_model(5, mode, 0.1), cfg, vocab.clone(), 3).unwrap();
        t.train(&d).unwrap();
        t
    };
    let full = run("full");
    let none = run("none");
    let bits = |t: &Trainer| t.log().iter().map(|r| r.loss.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&full), bits(&none));
    for id in full.pipeline.store.ids() {
        assert_eq!(full.pipeline.store.value(id), none.pipeline.store.value(id));
    }
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let (d, vocab) = data(&corpus(7, 8));
    let model = small_model(5, "full", 0.1);
    let cfg = fast_train(100);
    let mut straight = Trainer::new(model.clone(), cfg.clone(), vocab.clone(), 5).unwrap();
    straight.train_iterations(&d, 40).unwrap();

    let mut first = Trainer::new(model.clone(), cfg.clone(), vocab.clone(), 5).unwrap();
    first.train_iterations(&d, 17).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    first.checkpoint().unwrap().save(&path).unwrap();
    let ck = Checkpoint::load(&path).unwrap();
    assert_eq!(ck, first.checkpoint().unwrap());
    let mut resumed = Trainer::resume(&ck, &model, &cfg, &vocab, 5).unwrap();
    for id in first.pipeline.store.ids() {
        let (a, b) = (first.pipeline.store.value(id), resumed.pipeline.store.value(id));
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    resumed.train_iterations(&d, 23).unwrap();
    for id in straight.pipeline.store.ids() {
        let (a, b) = (straight.pipeline.store.value(id), resumed.pipeline.store.value(id));
        assert!(a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
    assert_eq!(loss_log_csv(straight.log()), loss_log_csv(resumed.log()));

    let other_vocab = build_vocab(&d.records[..1], 1).unwrap();
    assert!(matches!(
        Trainer::resume(&ck, &model, &cfg, &other_vocab, 5),
        Err(Error::Incompatible(_))
    ));
    assert!(matches!(Trainer::resume(&ck, &model, &cfg, &vocab, 6), Err(Error::Incompatible(_))));
    let mut bytes = ck.to_bytes().unwrap();
    bytes[4] = 9;
    assert!(matches!(Checkpoint::from_bytes(&bytes), Err(Error::Incompatible(_))));
}

#[test]
fn divergence_aborts_with_last_finite_state() {
    let (d, vocab) = data(&corpus(3, 9));
    let cfg = TrainConfig {
        lr_caption: 1e305,
        ..fast_train(5)
    };
    let mut t = Trainer::new(small_model(5, "full", 0.1), cfg, vocab, 1).unwrap();
    let before = t.pipeline.store.clone();
    let err = t.train(&d).unwrap_err();
    assert!(err.is_numeric());
    let Error::Diverged { iteration, checkpoint } = err else {
        panic!("expected divergence")
    };
    let ck = Checkpoint::from_bytes(&checkpoint).unwrap();
    assert_eq!(ck.meta.iteration, iteration);
    let restored = pipeline_from_checkpoint(&ck).unwrap();
    for id in restored.store.ids() {
        assert!(restored.store.value(id).is_finite());
    }
    if iteration == 0 {
        for id in before.ids() {
            assert_eq!(before.value(id), restored.store.value(id));
        }
    }
}

#[test]
fn caption_loss_decreases_on_synthetic_corpus() {
    let spec = SyntheticSpec {
        feature_dim: 8,
        ..SyntheticSpec::new(50, 21)
    };
    let (d, vocab) = data(&spec);
    let mut model = small_model(8, "full", 0.1);
    model.caption.embed_dim = 16;
    model.caption.hidden_size = 24;
    model.proposal.hidden_size = 16;
    let cfg = TrainConfig {
        alternate_every: 500,
        warmup_epochs: 2,
        max_epochs: 6,
        caption_source: CaptionSource::GroundTruth,
        ..TrainConfig::default()
    };
    let mut t = Trainer::new(model, cfg, vocab, 4).unwrap();
    t.train(&d).unwrap();
    let mean = |e: u64| {
        let xs: Vec<f64> = t.log().iter().filter(|r| r.epoch == e && r.phase == Phase::Caption).map(|r| r.caption_loss).collect();
        xs.iter().sum::<f64>() / xs.len() as f64
    };
    let first = t.log().iter().find(|r| r.phase == Phase::Caption).unwrap().caption_loss;
    assert!(mean(5) < first, "final {} vs initial {first}", mean(5));
    assert!(mean(5) < mean(0));
}
