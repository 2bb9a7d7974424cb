//! Per-channel batch normalization over `(N,C,H,W)` activations.

use crate::error::{Error, Result};
use crate::tensor::{nchw, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchNormSpec {
    pub channels: usize,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNormSpec {
    pub fn new(channels: usize) -> Self {
        BatchNormSpec {
            channels,
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn param_count(&self) -> usize {
        2 * self.channels
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// Learnable scale/shift plus running statistics of one normalization layer.
#[derive(Debug)]
pub struct BatchNormState<'a, T> {
    pub gamma: &'a Tensor<T>,
    pub beta: &'a Tensor<T>,
    pub running_mean: &'a mut Tensor<T>,
    pub running_var: &'a mut Tensor<T>,
}

/// What a training-mode forward pass keeps for the backward pass.
#[derive(Debug, Clone)]
pub struct BatchNormContext<T> {
    pub x_hat: Tensor<T>,
    pub inv_std: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads<T> {
    pub input: Tensor<T>,
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
}

fn check<T: Real>(spec: &BatchNormSpec, input: &Tensor<T>, gamma: &Tensor<T>, beta: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (n, c, h, w) = nchw(input.shape())?;
    if c != spec.channels {
        return Err(Error::Shape(format!(
            "batch norm over {} channels got input {}",
            spec.channels,
            input.shape()
        )));
    }
    for (name, t) in [("gamma", gamma), ("beta", beta)] {
        if t.dims() != [c] {
            return Err(Error::Shape(format!("{name} must be ({c}), got {}", t.shape())));
        }
    }
    Ok((n, c, h * w))
}

/// Normalizes with frozen running statistics; never mutates them.
pub fn batchnorm_infer<T: Real>(
    spec: &BatchNormSpec,
    input: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
    running_mean: &Tensor<T>,
    running_var: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (n, c, plane) = check(spec, input, gamma, beta)?;
    let x = input.data();
    let eps = T::of_f64(spec.eps);
    let mut out = vec![T::zero(); x.len()];
    for ch in 0..c {
        let inv = (running_var.data()[ch] + eps).sqrt().recip();
        let scale = gamma.data()[ch] * inv;
        let mean = running_mean.data()[ch];
        let shift = beta.data()[ch];
        for b in 0..n {
            let i = (b * c + ch) * plane;
            for (o, &v) in out[i..i + plane].iter_mut().zip(&x[i..i + plane]) {
                *o = scale * (v - mean) + shift;
            }
        }
    }
    Tensor::from_vec(input.dims(), out)
}

/// Inference: `gamma * (x - running_mean) / sqrt(running_var + eps) + beta`.
/// Training: normalizes with the batch statistics (biased variance) over
/// `N*H*W` positions and folds them into the running statistics with the
/// unbiased variance.
pub fn batchnorm_forward<T: Real>(
    spec: &BatchNormSpec,
    input: &Tensor<T>,
    state: BatchNormState<'_, T>,
    mode: Mode,
) -> Result<(Tensor<T>, Option<BatchNormContext<T>>)> {
    let (n, c, plane) = check(spec, input, state.gamma, state.beta)?;
    let x = input.data();
    let eps = T::of_f64(spec.eps);
    let m = n * plane;
    let mut out = vec![T::zero(); x.len()];
    let idx = |b: usize, ch: usize| (b * c + ch) * plane;

    match mode {
        Mode::Infer => {
            let y = batchnorm_infer(
                spec,
                input,
                state.gamma,
                state.beta,
                state.running_mean,
                state.running_var,
            )?;
            Ok((y, None))
        }
        Mode::Train => {
            let mut x_hat = vec![T::zero(); x.len()];
            let mut inv_std = Vec::with_capacity(c);
            let mom = T::of_f64(spec.momentum);
            for ch in 0..c {
                // statistics accumulate in f64 whatever the storage precision
                let mut sum = 0f64;
                for b in 0..n {
                    let i = idx(b, ch);
                    sum += x[i..i + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                }
                let mean64 = sum / m as f64;
                let mut sq64 = 0f64;
                for b in 0..n {
                    let i = idx(b, ch);
                    sq64 += x[i..i + plane].iter().map(|v| (v.as_f64() - mean64).powi(2)).sum::<f64>();
                }
                let mean = T::of_f64(mean64);
                let sq = T::of_f64(sq64);
                let var = T::of_f64(sq64 / m as f64);
                let inv = (var + eps).sqrt().recip();
                inv_std.push(inv);
                let (g, bt) = (state.gamma.data()[ch], state.beta.data()[ch]);
                for b in 0..n {
                    let i = idx(b, ch);
                    for j in i..i + plane {
                        let xh = (x[j] - mean) * inv;
                        x_hat[j] = xh;
                        out[j] = g * xh + bt;
                    }
                }
                let unbiased = if m > 1 {
                    sq / T::of_f64((m - 1) as f64)
                } else {
                    var
                };
                let rm = &mut state.running_mean.data_mut()[ch];
                *rm = (T::one() - mom) * *rm + mom * mean;
                let rv = &mut state.running_var.data_mut()[ch];
                *rv = (T::one() - mom) * *rv + mom * unbiased;
            }
            let ctx = BatchNormContext {
                x_hat: Tensor::from_vec(input.dims(), x_hat)?,
                inv_std,
            };
            Ok((Tensor::from_vec(input.dims(), out)?, Some(ctx)))
        }
    }
}

pub fn batchnorm_backward<T: Real>(
    spec: &BatchNormSpec,
    ctx: &BatchNormContext<T>,
    gamma: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<BatchNormGrads<T>> {
    if grad_out.shape() != ctx.x_hat.shape() {
        return Err(Error::Shape(format!(
            "upstream gradient {} does not match forward {}",
            grad_out.shape(),
            ctx.x_hat.shape()
        )));
    }
    let (n, c, plane) = check(spec, grad_out, gamma, gamma)?;
    let gy = grad_out.data();
    let xh = ctx.x_hat.data();
    let m = T::of_f64((n * plane) as f64);
    let mut gx = vec![T::zero(); gy.len()];
    let mut gg = vec![T::zero(); c];
    let mut gb = vec![T::zero(); c];
    for ch in 0..c {
        let (mut sg64, mut sgx64) = (0f64, 0f64);
        for b in 0..n {
            let i = (b * c + ch) * plane;
            for j in i..i + plane {
                sg64 += gy[j].as_f64();
                sgx64 += gy[j].as_f64() * xh[j].as_f64();
            }
        }
        let (sg, sgx) = (T::of_f64(sg64), T::of_f64(sgx64));
        gb[ch] = sg;
        gg[ch] = sgx;
        // the bracket cancels heavily on small planes, so evaluate it in f64
        let k = (gamma.data()[ch] * ctx.inv_std[ch]).as_f64() / m.as_f64();
        for b in 0..n {
            let i = (b * c + ch) * plane;
            for j in i..i + plane {
                let bracket = m.as_f64() * gy[j].as_f64() - sg64 - xh[j].as_f64() * sgx64;
                gx[j] = T::of_f64(k * bracket);
            }
        }
    }
    Ok(BatchNormGrads {
        input: Tensor::from_vec(grad_out.dims(), gx)?,
        gamma: Tensor::from_vec([c], gg)?,
        beta: Tensor::from_vec([c], gb)?,
    })
}
