use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{ModelParams, DEFAULT_FILTERS};
use super::network::{backward, cross_entropy, forward, Gradients, Mode};
use super::NnError;
use crate::audio::{stream_windows, AudioClip};
use crate::features::{FeatureExtractor, FeatureImage};
use crate::SnoreClass;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// SGD with classical momentum 0.9.
    Momentum,
    /// Adam with β₁ = 0.9, β₂ = 0.999, ε = 1e-7.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub base_lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub dropout_rate: f64,
    pub decay_rate: f64,
    pub decay_steps: f64,
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
    pub filters: [usize; 3],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_lr: 0.0005,
            batch_size: 64,
            epochs: 30,
            dropout_rate: 0.25,
            decay_rate: 1.0,
            decay_steps: 1000.0,
            validation_fraction: 0.2,
            optimizer: Optimizer::Momentum,
            filters: DEFAULT_FILTERS,
            seed: 0,
        }
    }
}

impl TrainConfig {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(NnError::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        if !(self.base_lr > 0.0) || !(self.decay_steps > 0.0) || self.decay_rate < 0.0 {
            return Err(NnError::Config(
                "learning-rate schedule needs base_lr > 0, decay_steps > 0, decay_rate >= 0".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(NnError::Config("validation_fraction must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Inverse time decay: `base_lr / (1 + decay_rate · step / decay_steps)`.
pub fn lr_schedule(cfg: &TrainConfig, step: u64) -> f64 {
    cfg.base_lr / (1.0 + cfg.decay_rate * step as f64 / cfg.decay_steps)
}

/// Labeled feature images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub images: Vec<FeatureImage>,
    pub labels: Vec<SnoreClass>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn push(&mut self, image: FeatureImage, label: SnoreClass) {
        self.images.push(image);
        self.labels.push(label);
    }

    pub fn count(&self, class: SnoreClass) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            images: idx.iter().map(|&i| self.images[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// One image per labeled clip, cut from the clip's loudest
    /// `window_ms` window (quarter-window steps). Clips shorter than a window
    /// are zero-padded.
    pub fn from_clips(clips: &[AudioClip], extractor: &FeatureExtractor, window_ms: u64) -> Result<Dataset, NnError> {
        let mut out = Dataset::default();
        for (i, clip) in clips.iter().enumerate() {
            let label = clip.label.ok_or_else(|| NnError::Data(format!("clip {i} has no label")))?;
            let samples = loudest_window(clip, window_ms);
            out.push(extractor.extract_samples(&samples)?, label);
        }
        Ok(out)
    }
}

pub(crate) fn loudest_window(clip: &AudioClip, window_ms: u64) -> Vec<f32> {
    let win = (window_ms * clip.sample_rate() as u64 / 1000) as usize;
    if clip.len() <= win {
        let mut padded = clip.samples().to_vec();
        padded.resize(win, 0.0);
        return padded;
    }
    let windows = stream_windows(clip, window_ms, (window_ms / 4).max(1));
    let mut best = 0;
    let mut best_rms = f64::NEG_INFINITY;
    for (i, w) in windows.iter().enumerate() {
        let rms = AudioClip::rms(&w.samples);
        if rms > best_rms {
            best_rms = rms;
            best = i;
        }
    }
    windows.into_iter().nth(best).map(|w| w.samples).unwrap_or_default()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean of the mini-batch losses seen during the epoch (dropout active).
    pub batch_loss: f64,
    /// Inference-mode loss over the training split after the epoch.
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub initial_train_loss: f64,
    pub initial_val_accuracy: f64,
    pub train_size: usize,
    pub val_size: usize,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn final_val_accuracy(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.val_accuracy)
    }

    /// Trailing moving average of the per-epoch training loss.
    pub fn smoothed_train_loss(&self, window: usize) -> Vec<f64> {
        let losses: Vec<f64> = self.epochs.iter().map(|e| e.train_loss).collect();
        if window == 0 || losses.len() < window {
            return Vec::new();
        }
        losses.windows(window).map(|w| w.iter().sum::<f64>() / window as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,learning_rate,batch_loss,train_loss,train_accuracy,val_loss,val_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                e.epoch, e.learning_rate, e.batch_loss, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy
            ));
        }
        out
    }
}

pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: History,
}

fn seeded(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-class shuffle, then the first `fraction` of each class (rounded) goes
/// to validation. Returns `(train, validation)` indices.
pub fn stratified_split(labels: &[SnoreClass], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded(seed, 2);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in SnoreClass::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n_val = ((idx.len() as f64 * fraction).round() as usize).min(idx.len().saturating_sub(1));
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Inference-mode mean loss and accuracy.
pub fn loss_and_accuracy(params: &ModelParams, data: &Dataset) -> Result<(f64, f64), NnError> {
    if data.is_empty() {
        return Ok((0.0, 0.0));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (img, &label) in data.images.iter().zip(&data.labels) {
        let pass = forward(params, img, Mode::Infer)?;
        loss += cross_entropy(&pass.probs, label);
        correct += usize::from(pass.prediction.inferred_class == label);
    }
    let n = data.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

struct AdamState {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: i32,
}

fn apply_update(params: &mut ModelParams, grads: &Gradients, lr: f64, optimizer: Optimizer, adam: &mut AdamState) {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-7;
    adam.t += 1;
    let (c1, c2) = (1.0 - B1.powi(adam.t), 1.0 - B2.powi(adam.t));
    for (ti, tensor) in params.tensors_mut().into_iter().enumerate() {
        let g = &grads.tensors[ti];
        match optimizer {
            Optimizer::Sgd => {
                for (p, &gi) in tensor.iter_mut().zip(g) {
                    *p = (*p as f64 - lr * gi) as f32;
                }
            }
            Optimizer::Momentum => {
                let m = &mut adam.m[ti];
                for i in 0..tensor.len() {
                    m[i] = 0.9 * m[i] - lr * g[i];
                    tensor[i] = (tensor[i] as f64 + m[i]) as f32;
                }
            }
            Optimizer::Adam => {
                let (m, v) = (&mut adam.m[ti], &mut adam.v[ti]);
                for i in 0..tensor.len() {
                    m[i] = B1 * m[i] + (1.0 - B1) * g[i];
                    v[i] = B2 * v[i] + (1.0 - B2) * g[i] * g[i];
                    let step = lr * (m[i] / c1) / ((v[i] / c2).sqrt() + EPS);
                    tensor[i] = (tensor[i] as f64 - step) as f32;
                }
            }
        }
    }
}

/// Mini-batch training with a seeded stratified split.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome, NnError> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(NnError::Data("empty training corpus".into()));
    }
    for class in SnoreClass::ALL {
        if data.count(class) == 0 {
            return Err(NnError::Data(format!("corpus has no `{class}` examples; both classes are required")));
        }
    }
    let side = data.images[0].side();
    if data.images.iter().any(|i| i.side() != side) {
        return Err(NnError::Shape("all images must share one side".into()));
    }

    let mut params = ModelParams::random(side, cfg.filters, &mut seeded(cfg.seed, 1))?;
    let (train_idx, val_idx) = stratified_split(&data.labels, cfg.validation_fraction, cfg.seed);
    let train_set = data.subset(&train_idx);
    let val_set = data.subset(&val_idx);

    let mut shuffle_rng = seeded(cfg.seed, 3);
    let mut dropout_rng = seeded(cfg.seed, 4);
    let zeros = Gradients::zeros_like(&params).tensors;
    let mut adam = AdamState { m: zeros.clone(), v: zeros, t: 0 };

    let (initial_train_loss, _) = loss_and_accuracy(&params, &train_set)?;
    let (_, initial_val_accuracy) = loss_and_accuracy(&params, &val_set)?;
    let mut history = History {
        initial_train_loss,
        initial_val_accuracy,
        train_size: train_set.len(),
        val_size: val_set.len(),
        epochs: Vec::with_capacity(cfg.epochs),
    };

    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0u64;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        let mut lr = lr_schedule(cfg, step);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&FeatureImage, SnoreClass)> =
                chunk.iter().map(|&i| (&train_set.images[i], train_set.labels[i])).collect();
            let (grads, loss) = backward(&params, &batch, &mut dropout_rng, cfg.dropout_rate)?;
            lr = lr_schedule(cfg, step);
            apply_update(&mut params, &grads, lr, cfg.optimizer, &mut adam);
            step += 1;
            loss_sum += loss;
            batches += 1;
        }
        let (train_loss, train_accuracy) = loss_and_accuracy(&params, &train_set)?;
        let (val_loss, val_accuracy) = loss_and_accuracy(&params, &val_set)?;
        history.epochs.push(EpochRecord {
            epoch,
            learning_rate: lr,
            batch_loss: loss_sum / batches.max(1) as f64,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }
    params.validate()?;
    Ok(TrainOutcome { params, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{InputSide, SpectrogramConfig};

    #[test]
    fn schedule_values() {
        let cfg = TrainConfig::default();
        assert_eq!(lr_schedule(&cfg, 0), 0.0005);
        assert_eq!(lr_schedule(&cfg, 1000), 0.00025);
        let mut prev = f64::INFINITY;
        for step in 0..5000 {
            let lr = lr_schedule(&cfg, step);
            assert!(lr < prev);
            prev = lr;
        }
    }

    #[test]
    fn split_is_stratified_and_seeded() {
        let labels: Vec<SnoreClass> =
            (0..100).map(|i| if i % 2 == 0 { SnoreClass::Snoring } else { SnoreClass::NonSnoring }).collect();
        let (train, val) = stratified_split(&labels, 0.2, 7);
        assert_eq!(val.len(), 20);
        assert_eq!(train.len(), 80);
        assert_eq!(val.iter().filter(|&&i| labels[i] == SnoreClass::Snoring).count(), 10);
        assert_eq!(stratified_split(&labels, 0.2, 7), (train.clone(), val.clone()));
        assert_ne!(stratified_split(&labels, 0.2, 8).1, val);
    }

    #[test]
    fn single_class_corpus_is_rejected() {
        let mut data = Dataset::default();
        data.push(FeatureImage::new(24, vec![0.5; 576]).unwrap(), SnoreClass::Snoring);
        data.push(FeatureImage::new(24, vec![0.1; 576]).unwrap(), SnoreClass::Snoring);
        assert!(matches!(train(&data, &TrainConfig::default()), Err(NnError::Data(_))));
    }

    #[test]
    fn invalid_configs() {
        let base = TrainConfig::default();
        assert!(TrainConfig { batch_size: 0, ..base.clone() }.validate().is_err());
        assert!(TrainConfig { dropout_rate: 1.0, ..base.clone() }.validate().is_err());
        assert!(base.validate().is_ok());
    }

    #[test]
    fn loudest_window_picks_the_burst() {
        let mut samples = vec![0.0f32; 48_000];
        samples[30_000..34_000].iter_mut().for_each(|s| *s = 0.5);
        let clip = AudioClip::new(samples, 16_000).unwrap();
        let w = loudest_window(&clip, 1000);
        assert_eq!(w.len(), 16_000);
        assert!(w.iter().filter(|&&s| s == 0.5).count() == 4_000);
    }

    #[test]
    fn tiny_corpus_overfits() {
        let clips = crate::audio::synth_corpus(21, 10, 16_000);
        let ex = FeatureExtractor::new(SpectrogramConfig::default(), 16_000, InputSide::Fast).unwrap();
        let data = Dataset::from_clips(&clips, &ex, 1000).unwrap();
        let cfg = TrainConfig {
            epochs: 60,
            batch_size: 20,
            validation_fraction: 0.0,
            dropout_rate: 0.0,
            base_lr: 0.003,
            seed: 1,
            ..TrainConfig::default()
        };
        let out = train(&data, &cfg).unwrap();
        assert_eq!(out.history.train_size, 20);
        assert_eq!(out.history.epochs.last().unwrap().train_accuracy, 1.0);
    }
}
