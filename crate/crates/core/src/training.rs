//! Mini-batch momentum SGD for [`ScorerModel`] with a step schedule, a
//! random holdout split and best-holdout checkpoint selection.

use std::fmt::{self, Write as _};
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Manifest, SampleSource};
use crate::error::{Error, Result};
use crate::scorer::{FocusScorer, NormMode, Real, ScorerModel};

/// Batch size used when evaluating accuracy.
const EVAL_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// The rate is multiplied by `decay_factor` once for every listed epoch already completed.
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Update weight of the normalization running statistics.
    pub norm_momentum: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            decay_epochs: vec![80, 120, 160, 180],
            decay_factor: 0.1,
            epochs: 200,
            batch_size: 128,
            holdout_fraction: 0.15,
            seed: 0,
            momentum: 0.9,
            weight_decay: 0.0,
            norm_momentum: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::invalid(format!("holdout fraction {} must lie in (0, 1)", self.holdout_fraction)));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("decay epochs must be strictly increasing"));
        }
        if self.decay_epochs.last().is_some_and(|&e| e >= self.epochs) && self.epochs > 0 {
            return Err(Error::invalid("decay epochs must precede the final epoch"));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::invalid("decay factor must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.momentum) || !(0.0..=1.0).contains(&self.norm_momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::invalid("weight decay must be non-negative"));
        }
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let decays = self.decay_epochs.iter().filter(|&&d| d < epoch).count();
        self.learning_rate * self.decay_factor.powi(decays as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean training loss over the epoch's samples.
    pub loss: f64,
    pub holdout_accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were kept (0 = initial model).
    pub best_epoch: usize,
    pub best_accuracy: f64,
    pub checkpoint: Option<PathBuf>,
}

impl TrainReport {
    /// One line per epoch: `epoch=3 lr=1.0000e-3 loss=0.412345 holdout_accuracy=0.912000`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "epoch={} lr={:.4e} loss={:.6} holdout_accuracy={:.6}",
                e.epoch, e.learning_rate, e.loss, e.holdout_accuracy
            );
        }
        out
    }
}

impl fmt::Display for TrainReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

/// Deterministic random partition of `0..n` into (train, holdout) index sets,
/// each in ascending order. The holdout has `round(fraction * n)` elements.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("holdout fraction {fraction} must lie in (0, 1)")));
    }
    let k = (fraction * n as f64).round() as usize;
    if k == 0 || k == n {
        return Err(Error::invalid(format!(
            "holdout fraction {fraction} of {n} samples leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut holdout = order[..k].to_vec();
    let mut train = order[k..].to_vec();
    holdout.sort_unstable();
    train.sort_unstable();
    Ok((train, holdout))
}

/// Splits a manifest into (train, holdout) manifests.
pub fn split_holdout(manifest: &Manifest, fraction: f64, seed: u64) -> Result<(Manifest, Manifest)> {
    if manifest.is_empty() {
        return Err(Error::invalid("cannot split an empty manifest"));
    }
    let (train, holdout) = split_indices(manifest.len(), fraction, seed)?;
    let pick = |idx: &[usize]| manifest.with_records(idx.iter().map(|&i| manifest.records[i]).collect());
    Ok((pick(&train), pick(&holdout)))
}

/// Fraction of samples whose prediction (`score >= 0.5` means class 1) equals the label.
pub fn evaluate_accuracy(scorer: &dyn FocusScorer, samples: &dyn SampleSource) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("accuracy of an empty sample set"));
    }
    if samples.patch_size() != scorer.patch_size() {
        return Err(Error::invalid(format!(
            "samples use {}px patches but the scorer expects {}px",
            samples.patch_size(),
            scorer.patch_size()
        )));
    }
    let mut correct = 0usize;
    let n = samples.len();
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let batch: Vec<_> = (start..end).map(|i| samples.sample(i)).collect();
        let patches: Vec<_> = batch.iter().map(|s| s.patch.clone()).collect();
        let scores = scorer.score_batch(&patches);
        correct += scores
            .iter()
            .zip(&batch)
            .filter(|(&s, b)| ((s >= 0.5) as u8) == b.label)
            .count();
        start = end;
    }
    Ok(correct as f64 / n as f64)
}

/// See [`train_with_observer`].
pub fn train<T: Real>(
    model: ScorerModel<T>,
    train_set: &dyn SampleSource,
    holdout: &dyn SampleSource,
    cfg: &TrainConfig,
) -> Result<(ScorerModel<T>, TrainReport)> {
    train_with_observer(model, train_set, holdout, cfg, &mut |_, _| {})
}

/// Trains for `cfg.epochs` epochs of shuffled mini-batches and returns the
/// weights with the best holdout accuracy (the initial weights count as
/// epoch 0). `observer` sees the report and the current weights after every epoch.
///
/// A non-finite batch loss aborts with [`Error::Diverged`], which carries the
/// report of the completed epochs.
pub fn train_with_observer<T: Real>(
    model: ScorerModel<T>,
    train_set: &dyn SampleSource,
    holdout: &dyn SampleSource,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&TrainReport, &ScorerModel<T>),
) -> Result<(ScorerModel<T>, TrainReport)> {
    cfg.validate()?;
    let p = model.architecture().patch_size;
    for (name, set) in [("training", train_set), ("holdout", holdout)] {
        if set.is_empty() {
            return Err(Error::invalid(format!("{name} set is empty")));
        }
        if set.patch_size() != p {
            return Err(Error::invalid(format!(
                "{name} set uses {}px patches but the model expects {p}px",
                set.patch_size()
            )));
        }
    }
    let mut report = TrainReport::default();
    if cfg.epochs == 0 {
        return Ok((model, report));
    }

    let mut model = model;
    report.best_accuracy = evaluate_accuracy(&model, holdout)?;
    let mut best = model.clone();
    let mut velocity: Vec<Vec<T>> = model.params().iter().map(|t| vec![T::ZERO; t.len()]).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mu = T::from_f64(cfg.momentum);
    let wd = T::from_f64(cfg.weight_decay);

    for epoch in 1..=cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let step = T::from_f64(lr);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<_> = batch.iter().map(|&i| train_set.sample(i)).collect();
            let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
            let patches: Vec<_> = samples.into_iter().map(|s| s.patch).collect();
            let (loss, grads, stats) = model.batch_gradient(&patches, &labels, NormMode::Batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    report: Box::new(report),
                });
            }
            loss_sum += loss * batch.len() as f64;
            for ((w, g), v) in model.params_mut().iter_mut().zip(&grads.tensors).zip(&mut velocity) {
                for ((wi, &gi), vi) in w.data.iter_mut().zip(&g.data).zip(v.iter_mut()) {
                    *vi = mu * *vi + gi + wd * *wi;
                    *wi -= step * *vi;
                }
            }
            model.update_running_stats(&stats, cfg.norm_momentum);
        }
        let holdout_accuracy = evaluate_accuracy(&model, holdout)?;
        report.epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            loss: loss_sum / train_set.len() as f64,
            holdout_accuracy,
        });
        if holdout_accuracy > report.best_accuracy {
            report.best_accuracy = holdout_accuracy;
            report.best_epoch = epoch;
            best = model.clone();
        }
        observer(&report, &model);
    }
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabeledSample;
    use crate::raster::PatchPair;
    use crate::scorer::{Architecture, ConstantScorer};

    #[test]
    fn default_schedule() {
        let cfg = TrainConfig::default();
        let expect = [(1, 1e-3), (80, 1e-3), (81, 1e-4), (120, 1e-4), (121, 1e-5), (160, 1e-5), (161, 1e-6), (180, 1e-6), (181, 1e-7), (200, 1e-7)];
        for (epoch, lr) in expect {
            let got = cfg.learning_rate_at(epoch);
            assert!((got - lr).abs() <= lr * 1e-9, "epoch {epoch}: {got}");
        }
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_rejects_bad_schedules() {
        let mut cfg = TrainConfig {
            decay_epochs: vec![5, 3],
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
        cfg.decay_epochs = vec![200];
        assert!(cfg.validate().is_err());
        cfg.decay_epochs = vec![];
        cfg.holdout_fraction = 1.0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn holdout_split_is_a_partition() {
        let (train, holdout) = split_indices(100, 0.15, 4).unwrap();
        assert_eq!((train.len(), holdout.len()), (85, 15));
        let mut all: Vec<usize> = train.iter().chain(&holdout).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
        assert_eq!(split_indices(100, 0.15, 4).unwrap(), (train, holdout));
        assert!(split_indices(3, 0.1, 0).is_err());
    }

    fn flat_samples(n: usize, p: usize) -> Vec<LabeledSample> {
        (0..n)
            .map(|i| LabeledSample {
                patch: PatchPair::new(p, vec![0.5; p * p], vec![0.25; p * p], (0, 0)).unwrap(),
                label: (i % 4 == 0) as u8,
            })
            .collect()
    }

    #[test]
    fn accuracy_of_constant_predictors() {
        let samples = flat_samples(40, 8);
        // ties predict class 1
        let ones = evaluate_accuracy(&ConstantScorer::new(0.5, 8), &samples).unwrap();
        assert!((ones - 0.25).abs() < 1e-12);
        let zeros = evaluate_accuracy(&ConstantScorer::new(0.1, 8), &samples).unwrap();
        assert!((zeros - 0.75).abs() < 1e-12);
        assert!(evaluate_accuracy(&ConstantScorer::new(0.1, 16), &samples).is_err());
    }

    #[test]
    fn zero_epochs_returns_initial_model() {
        let model = ScorerModel::<f32>::new(Architecture::new(1, 8), 3).unwrap();
        let samples = flat_samples(10, 8);
        let cfg = TrainConfig {
            epochs: 0,
            decay_epochs: vec![],
            ..TrainConfig::default()
        };
        let (out, report) = train(model.clone(), &samples, &samples, &cfg).unwrap();
        assert_eq!(out.params(), model.params());
        assert!(report.epochs.is_empty());
    }

    #[test]
    fn divergence_is_reported() {
        let model = ScorerModel::<f32>::new(Architecture::new(1, 8), 3).unwrap();
        let samples = flat_samples(16, 8);
        let cfg = TrainConfig {
            epochs: 3,
            decay_epochs: vec![],
            learning_rate: 1e300,
            batch_size: 4,
            ..TrainConfig::default()
        };
        match train(model, &samples, &samples, &cfg) {
            Err(Error::Diverged { report, .. }) => assert!(report.epochs.len() < 3),
            other => panic!("expected divergence, got {:?}", other.map(|(_, r)| r)),
        }
    }
}
