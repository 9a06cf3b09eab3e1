use focusfuse::dataset::{sample_patches, swap_augment, synthetic_composite, LabeledSample};
use focusfuse::scorer::{Architecture, NormMode};
use focusfuse::training::{evaluate_accuracy, train, train_with_observer, TrainConfig};
use focusfuse::{FocusScorer, PatchPair, ScorerModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn samples(p: usize, n: usize, seed: u64) -> Vec<LabeledSample> {
    let c = synthetic_composite(64, 64, (2.0, 3.0), seed).unwrap();
    sample_patches(&c, n, p, seed + 1).unwrap()
}

/// Worst `|analytic - numeric| / (|analytic| + 1e-6)` over 20 random parameters.
fn worst_relative_error(seed: u64, h: f64) -> f64 {
    let model = ScorerModel::<f64>::new(Architecture::new(1, 16), seed).unwrap();
    let s = samples(16, 1, 40 + seed).remove(0);
    let (_, grads) = model.gradient(&s.patch, s.label, NormMode::Batch).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let t = rng.random_range(0..model.params().len());
        let k = rng.random_range(0..model.params()[t].len());
        let loss_at = |delta: f64| {
            let mut m = model.clone();
            m.params_mut()[t].data[k] += delta;
            m.loss(std::slice::from_ref(&s.patch), &[s.label], NormMode::Batch).unwrap()
        };
        let numeric = (loss_at(h) - loss_at(-h)) / (2.0 * h);
        let analytic = grads.tensors[t].data[k];
        worst = worst.max((analytic - numeric).abs() / (analytic.abs() + 1e-6));
    }
    worst
}

#[test]
fn finite_difference_gradient_check() {
    let worst = worst_relative_error(0, 1e-4);
    assert!(worst <= 1e-3, "{worst:e}");
}

#[test]
fn gradient_matches_fine_differences_across_seeds() {
    // a step of 1e-4 in a normalization parameter can push a ReLU input across
    // zero; at 1e-6 the difference quotient is clear of kinks
    for seed in 0..6 {
        let worst = worst_relative_error(seed, 1e-6);
        assert!(worst <= 1e-5, "seed {seed}: {worst:e}");
    }
}

#[test]
fn small_step_decreases_single_sample_loss() {
    let mut model = ScorerModel::<f64>::new(Architecture::new(1, 16), 3).unwrap();
    let s = samples(16, 1, 7).remove(0);
    let batch = std::slice::from_ref(&s.patch);
    let before = model.loss(batch, &[s.label], NormMode::Batch).unwrap();
    let (_, grads) = model.gradient(&s.patch, s.label, NormMode::Batch).unwrap();
    for (w, g) in model.params_mut().iter_mut().zip(&grads.tensors) {
        for (wi, gi) in w.data.iter_mut().zip(&g.data) {
            *wi -= 1e-4 * gi;
        }
    }
    let after = model.loss(batch, &[s.label], NormMode::Batch).unwrap();
    assert!(after < before, "{after} >= {before}");
}

#[test]
fn every_tensor_receives_gradient() {
    let model = ScorerModel::<f64>::new(Architecture::new(1, 16), 5).unwrap();
    let batch = samples(16, 8, 11);
    let patches: Vec<PatchPair> = batch.iter().map(|s| s.patch.clone()).collect();
    let labels: Vec<u8> = batch.iter().map(|s| s.label).collect();
    let (_, grads, _) = model.batch_gradient(&patches, &labels, NormMode::Batch).unwrap();
    assert_eq!(grads.tensors.len(), model.params().len());
    for (name, g) in model.param_names().iter().zip(&grads.tensors) {
        assert!(g.data.iter().any(|&v| v != 0.0), "{name} has zero gradient");
    }
}

#[test]
fn one_training_step_moves_every_tensor() {
    let model = ScorerModel::<f32>::new(Architecture::new(1, 16), 6).unwrap();
    let train_set = samples(16, 8, 13);
    let holdout = samples(16, 4, 14);
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        decay_epochs: vec![],
        epochs: 1,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let mut after = None;
    let (_, report) = train_with_observer(model.clone(), &train_set, &holdout, &cfg, &mut |_, m| after = Some(m.clone())).unwrap();
    assert_eq!(report.epochs.len(), 1);
    let after = after.unwrap();
    for (name, (a, b)) in model.param_names().iter().zip(model.params().iter().zip(after.params())) {
        assert_ne!(a.data, b.data, "{name} unchanged");
    }
}

#[test]
fn report_has_one_line_per_epoch() {
    let model = ScorerModel::<f32>::new(Architecture::new(1, 16), 2).unwrap();
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        decay_epochs: vec![1],
        epochs: 3,
        batch_size: 4,
        ..TrainConfig::default()
    };
    let (_, report) = train(model, &samples(16, 10, 3), &samples(16, 4, 4), &cfg).unwrap();
    assert_eq!(report.epochs.len(), 3);
    assert_eq!(report.to_text().lines().count(), 3);
    assert_eq!(report.epochs[2].learning_rate, cfg.learning_rate_at(3));
}

/// Channel A sharp noise and channel B flat, or the reverse.
fn separable(p: usize, n: usize, seed: u64) -> Vec<LabeledSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let noise: Vec<f64> = (0..p * p).map(|_| rng.random::<f64>()).collect();
            let flat = vec![0.5; p * p];
            let label = (i % 2) as u8;
            let (a, b) = if label == 1 { (noise, flat) } else { (flat, noise) };
            LabeledSample {
                patch: PatchPair::new(p, a, b, (0, 0)).unwrap(),
                label,
            }
        })
        .collect()
}

#[test]
fn separable_toy_problem_is_learned() {
    let model = ScorerModel::<f32>::new(Architecture::new(1, 16), 0).unwrap();
    let train_set = separable(16, 200, 1);
    let holdout = separable(16, 40, 2);
    let cfg = TrainConfig {
        learning_rate: 0.02,
        decay_epochs: vec![],
        epochs: 20,
        batch_size: 16,
        ..TrainConfig::default()
    };
    let (model, report) = train(model, &train_set, &holdout, &cfg).unwrap();
    assert!(report.epochs.len() <= 20);
    assert_eq!(evaluate_accuracy(&model, &holdout).unwrap(), 1.0);
    // swap consistency is only approximate for the network
    let swapped: Vec<PatchPair> = holdout.iter().map(|s| swap_augment(s).patch).collect();
    let direct = model.score_batch(&holdout.iter().map(|s| s.patch.clone()).collect::<Vec<_>>());
    let mirror = model.score_batch(&swapped);
    let gap = direct.iter().zip(&mirror).map(|(x, y)| (x + y - 1.0).abs()).sum::<f64>() / direct.len() as f64;
    assert!(gap <= 0.1, "mean swap gap {gap}");
}
