//! Mixup: training on convex combinations of example pairs and their
//! label distributions.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixupConfig {
    pub alpha: f64,
    /// Mixup is off while `epoch < warmup_epochs`.
    pub warmup_epochs: usize,
}

impl Default for MixupConfig {
    fn default() -> Self {
        MixupConfig {
            alpha: 0.1,
            warmup_epochs: 100,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 5.0) {
            return Err(Error::Config(format!(
                "mixup alpha must be in (0, 5], got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Waveform with a class distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub x: Vec<f32>,
    pub y: Vec<f32>,
}

impl LabeledExample {
    pub fn one_hot(x: Vec<f32>, class: usize, num_classes: usize) -> Self {
        let mut y = vec![0.0; num_classes];
        y[class] = 1.0;
        LabeledExample { x, y }
    }
}

/// Draws from the symmetric `Beta(alpha, alpha)` as `g1 / (g1 + g2)` with
/// independent `Gamma(alpha, 1)` draws.
pub fn sample_beta<R: Rng + ?Sized>(alpha: f64, rng: &mut R) -> Result<f64> {
    let gamma = Gamma::new(alpha, 1.0)
        .map_err(|e| Error::Config(format!("beta alpha {alpha}: {e}")))?;
    loop {
        let g1: f64 = gamma.sample(rng);
        let g2: f64 = gamma.sample(rng);
        // both can underflow to zero for small alpha
        if g1 + g2 > 0.0 {
            return Ok(g1 / (g1 + g2));
        }
    }
}

fn mix(a: &[f32], b: &[f32], lambda: f64) -> Vec<f32> {
    a.iter()
        .zip(b)
        .map(|(&u, &v)| (lambda * u as f64 + (1.0 - lambda) * v as f64) as f32)
        .collect()
}

/// `(lambda * a + (1 - lambda) * b)` applied to both waveform and target.
pub fn mixup_pair(a: &LabeledExample, b: &LabeledExample, lambda: f64) -> Result<LabeledExample> {
    if a.x.len() != b.x.len() || a.y.len() != b.y.len() {
        return Err(Error::Shape(format!(
            "cannot mix examples of {}/{} samples and {}/{} classes",
            a.x.len(),
            b.x.len(),
            a.y.len(),
            b.y.len()
        )));
    }
    Ok(LabeledExample {
        x: mix(&a.x, &b.x, lambda),
        y: mix(&a.y, &b.y, lambda),
    })
}

/// During warm-up the batch is returned unchanged and no randomness is
/// consumed. Afterwards each element is mixed with the partner given by a
/// random permutation of the batch, drawing one `lambda` per element.
pub fn mixup_batch<R: Rng + ?Sized>(
    batch: &[LabeledExample],
    config: &MixupConfig,
    epoch: usize,
    rng: &mut R,
) -> Result<Vec<LabeledExample>> {
    if epoch < config.warmup_epochs {
        return Ok(batch.to_vec());
    }
    config.validate()?;
    let mut partner: Vec<usize> = (0..batch.len()).collect();
    partner.shuffle(rng);
    batch
        .iter()
        .zip(&partner)
        .map(|(a, &j)| {
            let lambda = sample_beta(config.alpha, rng)?;
            mixup_pair(a, &batch[j], lambda)
        })
        .collect()
}
