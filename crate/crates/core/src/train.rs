//! SGD training with momentum, weight decay, a piecewise-constant learning
//! rate, waveform augmentation and mixup, plus whole-file evaluation.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::audio::{augment_example, normalize, seconds_to_samples, tile_to, AudioClip, AugmentConfig, LabeledClip};
use crate::builder::{NetworkConfig, WeightSet};
use crate::error::{Error, Result};
use crate::layers::{softmax, Mode};
use crate::mixup::{mixup_batch, LabeledExample, MixupConfig};
use crate::model::Model;
use crate::store;
use crate::tensor::{Real, Tensor};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    /// `(learning rate, epochs)` phases; past the end the last rate holds.
    pub lr_phases: Vec<(f64, usize)>,
    /// Total epochs; defaults to the sum of the phase lengths.
    pub epochs: Option<usize>,
    pub augment: Option<AugmentConfig>,
    pub mixup: Option<MixupConfig>,
    pub seed: u64,
    pub eval_every: usize,
    pub checkpoint_every: usize,
    /// Stop once validation accuracy reaches this value.
    pub target_accuracy: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            momentum: 0.9,
            weight_decay: 2e-4,
            batch_size: 64,
            lr_phases: vec![(0.2, 500), (0.04, 1000), (0.016, 500)],
            epochs: None,
            augment: Some(AugmentConfig::default()),
            mixup: Some(MixupConfig::default()),
            seed: 0,
            eval_every: 10,
            checkpoint_every: 50,
            target_accuracy: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lr_phases.is_empty() {
            return Err(Error::Config("learning rate schedule has no phases".into()));
        }
        if let Some((lr, _)) = self.lr_phases.iter().find(|(lr, _)| !(*lr > 0.0)) {
            return Err(Error::Config(format!("learning rates must be positive, got {lr}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config(
                "momentum must be in [0,1) and weight decay nonnegative".into(),
            ));
        }
        if let Some(a) = &self.augment {
            a.validate()?;
        }
        if let Some(m) = &self.mixup {
            m.validate()?;
        }
        Ok(())
    }

    pub fn total_epochs(&self) -> usize {
        self.epochs
            .unwrap_or_else(|| self.lr_phases.iter().map(|p| p.1).sum())
    }

    fn crop_seconds(&self) -> f64 {
        self.augment.map_or(AugmentConfig::default().crop_seconds, |a| a.crop_seconds)
    }
}

/// Learning rate for a zero-based epoch.
pub fn lr_at(config: &TrainConfig, epoch: usize) -> f64 {
    let mut end = 0;
    for &(lr, n) in &config.lr_phases {
        end += n;
        if epoch < end {
            return lr;
        }
    }
    config.lr_phases.last().map_or(0.0, |p| p.0)
}

/// Independent random stream for one `(domain, epoch, index)` slot, so
/// results do not depend on the order in which examples are processed.
pub fn stream_rng(seed: u64, domain: u64, epoch: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    for (i, v) in [seed, domain, epoch, index].iter().enumerate() {
        key[i * 8..(i + 1) * 8].copy_from_slice(&v.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

const SHUFFLE: u64 = 1;
const EXAMPLE: u64 = 2;
const BATCH: u64 = 3;

/// Mean soft-target cross entropy `-sum t log(p + 1e-12)` over the rows of
/// `(K)` or `(N, K)` probabilities, and its gradient with respect to the
/// logits, `(p - t) / N`.
pub fn cross_entropy<T: Real>(probs: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if probs.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "probabilities {} vs targets {}",
            probs.shape(),
            target.shape()
        )));
    }
    let rows = if probs.dims().len() == 2 { probs.dims()[0] } else { 1 };
    let loss = probs
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| -t.as_f64() * (p.as_f64() + 1e-12).ln())
        .sum::<f64>()
        / rows as f64;
    let inv = T::of_f64(1.0 / rows as f64);
    let grad = probs
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| (p - t) * inv)
        .collect();
    Ok((loss, Tensor::from_vec(probs.dims(), grad)?))
}

/// Zero-initialized momentum buffers matching `weights`.
pub fn zero_velocity<T: Real>(weights: &WeightSet<T>) -> Vec<Tensor<T>> {
    weights
        .params
        .iter()
        .map(|p| Tensor::zeros(p.tensor.shape().clone()))
        .collect()
}

/// `g = grad + wd * w` (conv weights only), `v = momentum * v + g`,
/// `w = w - lr * v`.
pub fn sgd_step<T: Real>(
    weights: &mut WeightSet<T>,
    velocity: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    lr: f64,
    config: &TrainConfig,
) -> Result<()> {
    if grads.len() != weights.params.len() || velocity.len() != weights.params.len() {
        return Err(Error::Shape(format!(
            "{} gradients and {} momentum buffers for {} parameters",
            grads.len(),
            velocity.len(),
            weights.params.len()
        )));
    }
    let (lr, mu, wd) = (T::of_f64(lr), T::of_f64(config.momentum), T::of_f64(config.weight_decay));
    for ((p, v), g) in weights.params.iter_mut().zip(velocity.iter_mut()).zip(grads) {
        if p.tensor.shape() != g.shape() || v.shape() != g.shape() {
            return Err(Error::Shape(format!(
                "gradient {} does not match parameter {} {}",
                g.shape(),
                p.name,
                p.tensor.shape()
            )));
        }
        let decay = if p.kind.decays() { wd } else { T::zero() };
        for ((w, v), &g) in p.tensor.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            let g = g + decay * *w;
            *v = mu * *v + g;
            *w -= lr * *v;
        }
    }
    Ok(())
}

/// Stacks equal-length examples into `(N, L)` waveforms and `(N, K)`
/// targets.
pub fn stack(batch: &[LabeledExample]) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let n = batch.len();
    let (l, k) = batch
        .first()
        .map(|e| (e.x.len(), e.y.len()))
        .ok_or_else(|| Error::Shape("empty batch".into()))?;
    let mut x = Vec::with_capacity(n * l);
    let mut y = Vec::with_capacity(n * k);
    for e in batch {
        if e.x.len() != l || e.y.len() != k {
            return Err(Error::Shape("batch examples differ in length".into()));
        }
        x.extend_from_slice(&e.x);
        y.extend_from_slice(&e.y);
    }
    Ok((Tensor::from_vec([n, l], x)?, Tensor::from_vec([n, k], y)?))
}

/// One forward/backward/update on a prepared batch; returns the batch loss
/// before the update.
pub fn train_step<R: rand::Rng + ?Sized>(
    model: &mut Model<f32>,
    velocity: &mut [Tensor<f32>],
    x: &Tensor<f32>,
    y: &Tensor<f32>,
    lr: f64,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<f64> {
    let trace = model.forward(x, Mode::Train, rng)?;
    let probs = softmax(trace.logits())?;
    let (loss, grad) = cross_entropy(&probs, y)?;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("loss is {loss}")));
    }
    let grads = model.backward(&trace, &grad)?;
    if let Some((g, p)) = grads
        .iter()
        .zip(&model.weights().params)
        .find(|(g, _)| !g.is_finite())
    {
        let _ = g;
        return Err(Error::Numeric(format!(
            "non-finite gradient first appears at {}",
            p.name
        )));
    }
    sgd_step(model.weights_mut(), velocity, &grads, lr, config)?;
    Ok(loss)
}

/// Fixed-length training waveform: the augmentation pipeline, or without
/// augmentation the normalized clip tiled or cut to the crop length.
/// Segments that are constant (digital silence) are redrawn a few times.
pub fn training_waveform(clip: &AudioClip, config: &TrainConfig, rng: &mut ChaCha8Rng) -> Result<Vec<f32>> {
    match &config.augment {
        Some(a) => {
            let mut last = None;
            for _ in 0..8 {
                match augment_example(clip, a, rng) {
                    Ok(c) => return Ok(c.samples),
                    Err(Error::Degenerate(m)) => last = Some(m),
                    Err(e) => return Err(e),
                }
            }
            Err(Error::Degenerate(last.unwrap_or_default()))
        }
        None => {
            let n = seconds_to_samples(config.crop_seconds(), clip.rate);
            let c = tile_to(&normalize(clip)?, n);
            Ok(c.samples[..n].to_vec())
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
}

pub const METRICS_HEADER: &str = "epoch,phase_lr,train_loss,val_accuracy";

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{:.6},{}",
            self.epoch,
            self.lr,
            self.train_loss,
            self.val_accuracy.map_or(String::new(), |a| format!("{a:.4}"))
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainState {
    pub model: Model<f32>,
    pub velocity: Vec<Tensor<f32>>,
    /// Epochs completed.
    pub epoch: usize,
    pub seed: u64,
    pub history: Vec<EpochMetrics>,
    pub best_accuracy: Option<f64>,
}

impl TrainState {
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let model = Model::new(config, seed)?;
        let velocity = zero_velocity(model.weights());
        Ok(TrainState {
            model,
            velocity,
            epoch: 0,
            seed,
            history: Vec::new(),
            best_accuracy: None,
        })
    }
}

/// Where training writes its metrics CSV and checkpoints.
#[derive(Debug, Clone)]
pub struct OutputDir {
    pub dir: PathBuf,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let metrics = dir.join("metrics.csv");
        fs::write(&metrics, format!("{METRICS_HEADER}\n")).map_err(|e| Error::io(&metrics, e))?;
        Ok(OutputDir { dir })
    }

    fn append(&self, m: &EpochMetrics) -> Result<()> {
        let path = self.dir.join("metrics.csv");
        let mut f = OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?;
        writeln!(f, "{}", m.csv_row()).map_err(|e| Error::io(&path, e))
    }
}

/// One epoch over `train`: shuffle, build augmented (and mixed) batches,
/// and update. Returns the mean training loss.
pub fn run_epoch(state: &mut TrainState, train: &[LabeledClip], config: &TrainConfig) -> Result<f64> {
    let epoch = state.epoch;
    let k = state.model.num_classes();
    let lr = lr_at(config, epoch);
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.shuffle(&mut stream_rng(state.seed, SHUFFLE, epoch as u64, 0));

    let mut total = 0.0;
    for (b, chunk) in order.chunks(config.batch_size).enumerate() {
        let examples = chunk
            .par_iter()
            .map(|&i| {
                let mut rng = stream_rng(state.seed, EXAMPLE, epoch as u64, i as u64);
                let c = &train[i];
                let x = training_waveform(&c.clip, config, &mut rng).map_err(|e| match e {
                    Error::Degenerate(m) => Error::Degenerate(format!("{}: {m}", c.path.display())),
                    e => e,
                })?;
                Ok(LabeledExample::one_hot(x, c.target, k))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut rng = stream_rng(state.seed, BATCH, epoch as u64, b as u64);
        let examples = match &config.mixup {
            Some(m) => mixup_batch(&examples, m, epoch, &mut rng)?,
            None => examples,
        };
        let (x, y) = stack(&examples)?;
        let loss = train_step(&mut state.model, &mut state.velocity, &x, &y, lr, config, &mut rng)?;
        total += loss * chunk.len() as f64;
    }
    state.epoch += 1;
    Ok(total / train.len() as f64)
}

/// Full training run. Validation (whole-file, normalization only) runs
/// every `eval_every` epochs and after the last one; with an output
/// directory, metrics are appended per epoch, checkpoints written every
/// `checkpoint_every` epochs, the best-accuracy model kept as `best.acln`
/// and the final one as `final.acln`.
pub fn train(
    net: &NetworkConfig,
    train_set: &[LabeledClip],
    val_set: &[LabeledClip],
    config: &TrainConfig,
    out: Option<&OutputDir>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainState> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut state = TrainState::new(net, config.seed)?;
    let epochs = config.total_epochs();
    while state.epoch < epochs {
        let epoch = state.epoch;
        let lr = lr_at(config, epoch);
        let train_loss = run_epoch(&mut state, train_set, config)?;
        let done = state.epoch == epochs;
        let eval_now = !val_set.is_empty()
            && (done || (config.eval_every > 0 && state.epoch % config.eval_every == 0) || config.target_accuracy.is_some());
        let val_accuracy = if eval_now {
            Some(evaluate(&state.model, val_set)?.accuracy)
        } else {
            None
        };
        let m = EpochMetrics {
            epoch,
            lr,
            train_loss,
            val_accuracy,
        };
        if let Some(out) = out {
            out.append(&m)?;
            if config.checkpoint_every > 0 && state.epoch % config.checkpoint_every == 0 {
                store::save_model(out.dir.join(format!("checkpoint_{:05}.acln", state.epoch)), &state.model)?;
            }
            if let Some(a) = val_accuracy {
                if state.best_accuracy.is_none_or(|b| a > b) {
                    store::save_model(out.dir.join("best.acln"), &state.model)?;
                }
            }
        }
        if let Some(a) = val_accuracy {
            if state.best_accuracy.is_none_or(|b| a > b) {
                state.best_accuracy = Some(a);
            }
        }
        on_epoch(&m);
        state.history.push(m);
        if let (Some(t), Some(a)) = (config.target_accuracy, val_accuracy) {
            if a >= t {
                break;
            }
        }
    }
    if let Some(out) = out {
        store::save_model(out.dir.join("final.acln"), &state.model)?;
    }
    Ok(state)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

impl Evaluation {
    pub fn from_predictions(predicted: &[usize], targets: &[usize], num_classes: usize) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Config("cannot evaluate on an empty test set".into()));
        }
        if predicted.len() != targets.len() {
            return Err(Error::Shape("prediction and target counts differ".into()));
        }
        let mut confusion = vec![vec![0; num_classes]; num_classes];
        let mut correct = 0;
        for (&p, &t) in predicted.iter().zip(targets) {
            if p >= num_classes || t >= num_classes {
                return Err(Error::Shape(format!("class id outside 0..{num_classes}")));
            }
            confusion[t][p] += 1;
            correct += usize::from(p == t);
        }
        Ok(Evaluation {
            correct,
            total: targets.len(),
            accuracy: correct as f64 / targets.len() as f64,
            confusion,
        })
    }
}

pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Class distribution for a whole clip; the only preprocessing is
/// normalization.
pub fn classify(model: &Model<f32>, clip: &AudioClip) -> Result<Vec<f32>> {
    model.predict(&normalize(clip)?.samples)
}

/// Whole-file accuracy and confusion counts. Never touches model state.
pub fn evaluate(model: &Model<f32>, clips: &[LabeledClip]) -> Result<Evaluation> {
    if clips.is_empty() {
        return Err(Error::Config("cannot evaluate on an empty test set".into()));
    }
    let predicted = clips
        .par_iter()
        .map(|c| classify(model, &c.clip).map(|p| argmax(&p)))
        .collect::<Result<Vec<_>>>()?;
    let targets: Vec<usize> = clips.iter().map(|c| c.target).collect();
    Evaluation::from_predictions(&predicted, &targets, model.num_classes())
}

/// Per-fold accuracies of a cross-validation run.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossValidation {
    pub fold_accuracy: Vec<(u8, f64)>,
}

impl CrossValidation {
    pub fn mean(&self) -> f64 {
        self.fold_accuracy.iter().map(|f| f.1).sum::<f64>() / self.fold_accuracy.len().max(1) as f64
    }
}

/// Trains one model per test fold, each in `out/fold{N}`, and reports the
/// final model's accuracy on its held-out fold.
pub fn cross_validate(
    net: &NetworkConfig,
    folds: &[(u8, Vec<LabeledClip>, Vec<LabeledClip>)],
    config: &TrainConfig,
    out: Option<&Path>,
    mut on_epoch: impl FnMut(u8, &EpochMetrics),
) -> Result<CrossValidation> {
    let mut fold_accuracy = Vec::new();
    for (fold, train_set, test_set) in folds {
        let dir = out.map(|o| OutputDir::create(o.join(format!("fold{fold}")))).transpose()?;
        let state = train(net, train_set, test_set, config, dir.as_ref(), |m| on_epoch(*fold, m))?;
        fold_accuracy.push((*fold, evaluate(&state.model, test_set)?.accuracy));
    }
    Ok(CrossValidation { fold_accuracy })
}
