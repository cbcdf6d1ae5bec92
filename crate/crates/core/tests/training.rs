use adadrug::checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes};
use adadrug::data::{DomainBundle, LabeledDomain, TupleIndices, Upsampler};
use adadrug::model::ModelBundle;
use adadrug::numerics::Matrix;
use adadrug::optim::{Adam, AdamConfig};
use adadrug::synth::{self, bench_train_config, SynthConfig};
use adadrug::train::{self, TrainConfig, Variant};
use std::path::Path;

fn small_synth(seed: u64) -> synth::SynthBundle {
    synth::generate(&SynthConfig {
        n_per_domain: 80,
        n_target: 80,
        genes: 20,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        latent_dim: 6,
        ae_hidden: 16,
        head_hidden: 8,
        batch_size: 32,
        epochs: 4,
        learning_rate: 1e-3,
        seed: 3,
        ..Default::default()
    }
}

#[test]
fn fifty_steps_lower_the_total_loss() {
    let data = synth::generate(&SynthConfig::default()).unwrap();
    let probe = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    let (_, one) = train::train(&data.bundle, &probe).unwrap();
    let per_epoch = one.steps.len();
    let cfg = TrainConfig {
        epochs: 50usize.div_ceil(per_epoch),
        ..Default::default()
    };
    let (_, hist) = train::train(&data.bundle, &cfg).unwrap();
    let steps = &hist.steps[..50];
    let first = steps[0].parts.total;
    let last = steps[49].parts.total;
    assert!(last < first, "total went {first} -> {last}");
}

#[test]
fn zero_learning_rate_leaves_parameters_bitwise_unchanged() {
    let data = small_synth(1);
    let cfg = TrainConfig {
        learning_rate: 0.0,
        ..small_cfg()
    };
    let mut init = ModelBundle::init(&cfg.arch(20), cfg.seed).unwrap();
    init.weighting = cfg.weighting();
    let (trained, hist) = train::train(&data.bundle, &cfg).unwrap();
    assert!(!hist.steps.is_empty());
    assert_eq!(
        to_bytes(&trained, &cfg, 0).unwrap(),
        to_bytes(&init, &cfg, 0).unwrap()
    );
}

#[test]
fn same_seed_gives_identical_checkpoints() {
    let data = small_synth(2);
    let cfg = small_cfg();
    let (a, ha) = train::train(&data.bundle, &cfg).unwrap();
    let (b, hb) = train::train(&data.bundle, &cfg).unwrap();
    assert_eq!(
        to_bytes(&a, &cfg, ha.final_step).unwrap(),
        to_bytes(&b, &cfg, hb.final_step).unwrap()
    );
    let other = TrainConfig {
        seed: 4,
        ..cfg.clone()
    };
    let (c, _) = train::train(&data.bundle, &other).unwrap();
    assert_ne!(a, c);
}

#[test]
fn reload_then_zero_epochs_resaves_identically() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_synth(3);
    let cfg = small_cfg();
    let (model, hist) = train::train(&data.bundle, &cfg).unwrap();
    let first = dir.path().join("a.ckpt");
    save_checkpoint(&model, &cfg, hist.final_step, &first).unwrap();

    let mut ck = load_checkpoint(&first).unwrap();
    assert_eq!(ck.model, model);
    assert_eq!(ck.config, cfg);
    let h = train::fit(&data.bundle, &ck.config, &mut ck.model, ck.step, 0).unwrap();
    assert!(h.steps.is_empty());
    assert_eq!(h.final_step, ck.step);
    let second = dir.path().join("b.ckpt");
    save_checkpoint(&ck.model, &ck.config, h.final_step, &second).unwrap();
    assert_eq!(
        std::fs::read(&first).unwrap(),
        std::fs::read(&second).unwrap()
    );
}

#[test]
fn resumed_training_continues_the_step_count() {
    let data = small_synth(3);
    let cfg = small_cfg();
    let (mut model, hist) = train::train(&data.bundle, &cfg).unwrap();
    let more = train::fit(&data.bundle, &cfg, &mut model, hist.final_step, 2).unwrap();
    assert_eq!(more.steps[0].step, hist.final_step);
    assert_eq!(more.epoch_seconds.len(), 2);
    let bytes = to_bytes(&model, &cfg, more.final_step).unwrap();
    assert_eq!(
        from_bytes(&bytes, Path::new("mem")).unwrap().step,
        more.final_step
    );
}

#[test]
fn history_steps_are_monotone_and_exported() {
    let data = small_synth(4);
    let cfg = small_cfg();
    let (_, hist) = train::train(&data.bundle, &cfg).unwrap();
    assert_eq!(hist.epoch_seconds.len(), cfg.epochs);
    for (i, r) in hist.steps.iter().enumerate() {
        assert_eq!(r.step, i as u64);
    }
    assert_eq!(hist.final_step, hist.steps.len() as u64);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("history.csv");
    hist.write_csv(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "step,reco,ind,adv,cls,total");
    assert_eq!(lines.count(), hist.steps.len());
}

#[test]
fn without_ind_the_term_is_exactly_zero() {
    let data = small_synth(5);
    let cfg = Variant::NoInd.configure(&small_cfg());
    let (_, hist) = train::train(&data.bundle, &cfg).unwrap();
    for r in &hist.steps {
        let p = r.parts;
        assert_eq!(p.ind, 0.0);
        assert!(p.adv > 0.0);
        assert_eq!(p.total, p.reco + p.adv + p.cls);
    }
}

#[test]
fn variant_terms_follow_their_flags() {
    let data = small_synth(6);
    let base = small_cfg();
    let (_, full) = train::train(&data.bundle, &Variant::Full.configure(&base)).unwrap();
    assert!(full
        .steps
        .iter()
        .all(|r| r.parts.ind > 0.0 && r.parts.adv > 0.0));

    let (m, no_mda) = train::train(&data.bundle, &Variant::NoMda.configure(&base)).unwrap();
    assert!(!m.weighting);
    for r in &no_mda.steps {
        assert_eq!((r.parts.ind, r.parts.adv), (0.0, 0.0));
        assert_eq!(r.parts.total, r.parts.reco + r.parts.cls);
    }

    let (m, no_awg) = train::train(&data.bundle, &Variant::NoAwg.configure(&base)).unwrap();
    assert!(!m.weighting);
    assert!(no_awg
        .steps
        .iter()
        .all(|r| r.parts.ind == 0.0 && r.parts.adv > 0.0));

    let single = Variant::Baseline.sources(&data.bundle).unwrap();
    assert_eq!(single.sources().len(), 1);
    assert_eq!(single.sources()[0], data.bundle.sources()[0]);
    let (m, _) = train::train(&single, &Variant::Baseline.configure(&base)).unwrap();
    assert!(!m.weighting);
}

#[test]
fn adam_with_zero_gradients_barely_moves() {
    let mut p =
        Matrix::from_vec(3, 4, (1..=12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
    let before = p.clone();
    let mut adam = Adam::new(AdamConfig::default(), [(3, 4)]);
    adam.step(&mut [&mut p], &[Matrix::zeros(3, 4)]);
    for (a, b) in p.as_slice().iter().zip(before.as_slice()) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(adam.steps(), 1);
}

#[test]
fn mismatched_gene_count_is_rejected() {
    let data = small_synth(7);
    let cfg = small_cfg();
    let mut model = ModelBundle::init(&cfg.arch(21), 0).unwrap();
    assert!(train::fit(&data.bundle, &cfg, &mut model, 0, 1).is_err());
}

#[test]
fn single_class_source_is_rejected() {
    let data = small_synth(8);
    let src = &data.bundle.sources()[0];
    let ones = LabeledDomain::new(src.expr.clone(), vec![1; src.n_samples()]).unwrap();
    let bundle = DomainBundle::new(vec![ones], data.bundle.target().clone()).unwrap();
    for sampler in [Upsampler::Weight, Upsampler::Smote] {
        let cfg = TrainConfig {
            sampler,
            ..small_cfg()
        };
        assert!(train::train(&bundle, &cfg).is_err(), "{sampler:?}");
    }
}

#[test]
fn discriminator_is_fooled_on_mildly_shifted_data() {
    let mut finals = Vec::new();
    for seed in 0..5u64 {
        let data = synth::generate(&SynthConfig {
            sigma_shift: 0.1,
            n_per_domain: 600,
            n_target: 600,
            seed: 100 + seed,
            ..Default::default()
        })
        .unwrap();
        let fit_rows: Vec<usize> = (0..400).collect();
        let held: Vec<usize> = (400..600).collect();
        let sources = data
            .bundle
            .sources()
            .iter()
            .map(|s| s.select_samples(&fit_rows))
            .collect();
        let bundle =
            DomainBundle::new(sources, data.bundle.target().select_samples(&fit_rows)).unwrap();
        let batch = data.bundle.tuple_batch(&TupleIndices {
            sources: vec![held.clone(); 3],
            target: held,
        });
        let cfg = TrainConfig {
            seed,
            ..bench_train_config()
        };
        let (model, _) = train::train(&bundle, &cfg).unwrap();
        finals.push(train::discriminator_accuracy(&model, &batch).unwrap());
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    assert!((0.35..=0.65).contains(&mean), "{finals:?}");
}
