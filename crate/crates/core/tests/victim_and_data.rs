use std::collections::HashSet;

use fcd_core::attacks::{AttackConfig, AttackKind};
use fcd_core::data::{
    balanced_select, build_ae_dataset, load_cifar, read_ae_split, split_train_test, write_ae_split, BuildConfig,
    CifarSplit, LabeledImage,
};
use fcd_core::synthetic::{write_dataset, SyntheticConfig};
use fcd_core::train::FitConfig;
use fcd_core::victim::{softmax, train_with_spec, victim_spec, LossKind, Victim, VictimConfig};
use fcd_core::{CoreError, CLASSES, IMAGE_SHAPE};
use fcd_tensor::{LayerSpec, Model, ModelSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_image(seed: u64) -> Tensor<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(IMAGE_SHAPE.to_vec(), |_| rng.gen_range(0.0f32..1.0)).unwrap()
}

fn ce_f64(model: &Model<f64>, x: &Tensor<f64>, label: usize) -> f64 {
    let z = model.infer(&x.clone().batched()).unwrap();
    let p = softmax(z.data());
    -p[label].ln()
}

#[test]
fn input_gradient_agrees_with_finite_differences() {
    let model = Model::<f32>::new(victim_spec(), 7).unwrap();
    let wide = model.cast::<f64>();
    let victim = Victim::untrained(model);
    let image = random_image(3);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for kind in [LossKind::CrossEntropy, LossKind::Logit(4)] {
        let g = victim.input_gradient(&image, 2, kind).unwrap();
        let scalar = |x: &Tensor<f64>| match kind {
            LossKind::CrossEntropy => ce_f64(&wide, x, 2),
            LossKind::Logit(k) => wide.infer(&x.clone().batched()).unwrap().data()[k],
        };
        let base = image.cast::<f64>();
        let mut checked = 0;
        while checked < 10 {
            let i = rng.gen_range(0..base.len());
            let h = 1e-5;
            let mut plus = base.clone();
            plus.data_mut()[i] += h;
            let mut minus = base.clone();
            minus.data_mut()[i] -= h;
            let fd = (scalar(&plus) - scalar(&minus)) / (2.0 * h);
            let an = g.data()[i] as f64;
            if fd.abs() < 1e-6 && an.abs() < 1e-6 {
                continue;
            }
            let rel = (fd - an).abs() / fd.abs().max(an.abs());
            assert!(rel < 1e-3, "{kind:?} pixel {i}: fd {fd} vs analytic {an}");
            checked += 1;
        }
    }
}

#[test]
fn predictions_are_normalized_pure_and_consistent() {
    let victim = Victim::untrained(Model::new(victim_spec(), 1).unwrap());
    let images: Vec<Tensor<f32>> = (0..100).map(random_image).collect();
    let preds = victim.predict_batch(&images).unwrap();
    for (img, p) in images.iter().zip(&preds) {
        assert!((p.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-5);
        let by_prob = fcd_core::attacks::argmax(&p.probabilities);
        assert_eq!(by_prob, p.label);
        assert_eq!(fcd_core::attacks::argmax(&p.logits), p.label);
        assert_eq!(&victim.predict(img).unwrap(), p);
    }
}

#[test]
fn gradient_is_linear_in_the_output_seed() {
    let model = Model::<f64>::new(victim_spec(), 5).unwrap();
    let x = random_image(2).cast::<f64>().batched();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (z, tape) = model.forward(&x, fcd_tensor::Mode::Gradient, &mut rng).unwrap();
    let dz = Tensor::from_fn(z.shape().to_vec(), |i| (i as f64 - 4.0) / 3.0).unwrap();
    let g1 = model.input_gradient(&tape, &dz).unwrap();
    let g3 = model.input_gradient(&tape, &dz.scale(3.0)).unwrap();
    for (a, b) in g1.data().iter().zip(g3.data()) {
        assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
    }
}

fn two_class_toy(n: usize, seed: u64) -> Vec<LabeledImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let base = if label == 0 { 0.2 } else { 0.8 };
            LabeledImage {
                pixels: Tensor::from_fn(IMAGE_SHAPE.to_vec(), |_| base + rng.gen_range(-0.1f32..0.1)).unwrap(),
                label,
                id: format!("toy:{i}"),
            }
        })
        .collect()
}

fn tiny_spec(classes: usize) -> ModelSpec {
    ModelSpec::new(
        "tiny",
        IMAGE_SHAPE.to_vec(),
        vec![
            LayerSpec::conv2d_same(6, [3, 3]),
            LayerSpec::relu(),
            LayerSpec::maxpool2d([4, 4]),
            LayerSpec::flatten(),
            LayerSpec::dense(classes),
        ],
    )
}

fn quick(epochs: usize, gate: f64) -> VictimConfig {
    VictimConfig {
        fit: FitConfig {
            epochs,
            batch_size: 16,
            learning_rate: 3e-3,
            patience: 0,
            seed: 1,
        },
        accuracy_gate: gate,
    }
}

#[test]
fn separable_toy_is_learned_perfectly() {
    let train = two_class_toy(64, 1);
    let held = two_class_toy(20, 2);
    let (victim, report) = train_with_spec(tiny_spec(2), &train, &held, &quick(5, 0.7)).unwrap();
    assert_eq!(victim.accuracy(&train).unwrap(), 1.0);
    assert!(report.best_epoch >= 1);
}

#[test]
fn zero_epochs_fail_the_gate() {
    let train = two_class_toy(8, 1);
    match train_with_spec(tiny_spec(2), &train, &train, &quick(0, 0.7)) {
        Err(CoreError::GateNotMet { .. }) => {}
        other => panic!("expected gate failure, got {other:?}"),
    }
}

fn synthetic_pool(per_class: usize) -> (tempfile::TempDir, Vec<LabeledImage>) {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(
        dir.path(),
        &SyntheticConfig {
            train_per_class: 30,
            test_per_class: per_class,
            noise_std: 0.03,
            seed: 4,
        },
    )
    .unwrap();
    let test = load_cifar(dir.path(), CifarSplit::Test, per_class, 0).unwrap();
    (dir, test)
}

fn trained_tiny(dir: &std::path::Path) -> Victim {
    let train = load_cifar(dir, CifarSplit::Train, 30, 0).unwrap();
    train_with_spec(tiny_spec(CLASSES), &train, &train, &quick(6, 0.0)).unwrap().0
}

fn fast_attacks() -> Vec<AttackConfig> {
    AttackKind::ALL
        .iter()
        .map(|&k| AttackConfig {
            max_iterations: 30,
            ..AttackConfig::new(k)
        })
        .collect()
}

#[test]
fn loading_is_balanced_and_scaled() {
    let (dir, test) = synthetic_pool(4);
    assert_eq!(test.len(), 4 * CLASSES);
    for c in 0..CLASSES {
        assert_eq!(test.iter().filter(|i| i.label == c).count(), 4);
    }
    assert!(load_cifar(dir.path(), CifarSplit::Test, 0, 0).unwrap().is_empty());
    assert_eq!(load_cifar(dir.path(), CifarSplit::Test, 4, 3).unwrap(), load_cifar(dir.path(), CifarSplit::Test, 4, 3).unwrap());
    assert!(matches!(
        load_cifar(dir.path(), CifarSplit::Test, 5, 0),
        Err(CoreError::NotEnoughImages { .. })
    ));
    assert!(matches!(
        load_cifar(&dir.path().join("missing"), CifarSplit::Test, 1, 0),
        Err(CoreError::MissingFile(_))
    ));
}

#[test]
fn ae_dataset_is_deterministic_and_every_usable_example_fools() {
    let (dir, pool) = synthetic_pool(10);
    let victim = trained_tiny(dir.path());
    let cfg = BuildConfig {
        confidence_floor: 0.3,
        ..Default::default()
    };
    let (a, log_a) = build_ae_dataset(&pool, &victim, &fast_attacks(), &cfg).unwrap();
    let (b, log_b) = build_ae_dataset(&pool, &victim, &fast_attacks(), &cfg).unwrap();
    assert_eq!(log_a, log_b);
    assert_eq!(a, b);
    assert_eq!(log_a.candidates, 100);
    assert!(log_a.survivors > 0, "{log_a:?}");
    for e in &a {
        let p = victim.predict(&e.benign.pixels).unwrap();
        assert_eq!(p.label, e.benign.label);
        assert!(p.probabilities[p.label] >= 0.3);
        for kind in AttackKind::ALL {
            if let Some(adv) = e.usable(kind) {
                assert_ne!(victim.predict(&adv.pixels).unwrap().label, e.benign.label);
            }
        }
    }

    // storage round trip keeps everything
    let out = tempfile::tempdir().unwrap();
    write_ae_split(out.path(), "train", &a).unwrap();
    assert_eq!(read_ae_split(out.path(), "train").unwrap(), a);
}

#[test]
fn impossible_floor_and_hopeless_victim_give_empty_datasets() {
    let (dir, pool) = synthetic_pool(2);
    let victim = trained_tiny(dir.path());
    let strict = BuildConfig {
        confidence_floor: 1.01,
        ..Default::default()
    };
    let (entries, log) = build_ae_dataset(&pool, &victim, &fast_attacks(), &strict).unwrap();
    assert!(entries.is_empty());
    assert_eq!(log.survivors, 0);

    // relabel every image with a class the victim never predicts for it
    let wrong: Vec<LabeledImage> = pool
        .iter()
        .map(|im| LabeledImage {
            label: (victim.predict(&im.pixels).unwrap().label + 1) % CLASSES,
            ..im.clone()
        })
        .collect();
    let (entries, _) = build_ae_dataset(&wrong, &victim, &fast_attacks(), &BuildConfig::default()).unwrap();
    assert!(entries.is_empty());

    let untrained = Victim::untrained(victim.model.clone());
    assert!(matches!(
        build_ae_dataset(&pool, &untrained, &fast_attacks(), &BuildConfig::default()),
        Err(CoreError::Untrained)
    ));
}

#[test]
fn split_is_sized_seeded_and_leak_free() {
    let ids: Vec<String> = (0..10).map(|i| format!("img{i}")).collect();
    let (train, test) = split_train_test(&ids, 0.7, 3).unwrap();
    assert_eq!((train.len(), test.len()), (7, 3));
    assert_eq!(split_train_test(&ids, 0.7, 3).unwrap(), (train.clone(), test.clone()));
    let a: HashSet<_> = train.iter().collect();
    assert!(test.iter().all(|t| !a.contains(t)));
    assert_eq!(a.len() + test.len(), 10);

    let many: Vec<usize> = (0..8000).collect();
    let (tr, te) = split_train_test(&many, 0.7, 0).unwrap();
    assert_eq!((tr.len(), te.len()), (5600, 2400));

    assert!(split_train_test(&ids[..1], 0.7, 0).is_err());
    assert!(split_train_test(&ids, 1.0, 0).is_err());
}

#[test]
fn balanced_selection_respects_exclusions() {
    let (_dir, pool) = synthetic_pool(6);
    let first = balanced_select(&pool, 3, 1, &HashSet::new()).unwrap();
    let taken: HashSet<String> = first.iter().map(|i| i.id.clone()).collect();
    let second = balanced_select(&pool, 3, 2, &taken).unwrap();
    assert!(second.iter().all(|i| !taken.contains(&i.id)));
    assert!(balanced_select(&pool, 4, 2, &taken).is_err());
}
