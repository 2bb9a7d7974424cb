use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{Real, Tensor};

pub fn relu_forward<T: Real>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| v.max(T::zero()))
}

/// Passes gradient where the forward input was strictly positive.
pub fn relu_backward<T: Real>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if input.shape() != grad_out.shape() {
        return Err(Error::Shape(format!(
            "relu backward: {} vs {}",
            input.shape(),
            grad_out.shape()
        )));
    }
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.dims(), data)
}

/// Softmax over the last axis, `(K)` or `(N,K)`, with max subtraction.
pub fn softmax<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let k = *input.dims().last().expect("tensors have rank >= 1");
    if input.shape().rank() > 2 {
        return Err(Error::Shape(format!(
            "softmax expects (K) or (N,K), got {}",
            input.shape()
        )));
    }
    let mut out = Vec::with_capacity(input.len());
    for row in input.data().chunks(k) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - m).exp()));
        let z: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v /= z);
    }
    Tensor::from_vec(input.dims(), out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    pub p: f64,
}

/// Inverted dropout: kept activations are scaled by `1/(1-p)` so that
/// inference is the identity. Returns the output and the applied mask.
pub fn dropout_train<T: Real, R: Rng + ?Sized>(
    spec: &DropoutSpec,
    input: &Tensor<T>,
    rng: &mut R,
) -> (Tensor<T>, Vec<T>) {
    if spec.p <= 0.0 {
        return (input.clone(), vec![T::one(); input.len()]);
    }
    let keep = T::of_f64(1.0 / (1.0 - spec.p));
    let mask: Vec<T> = (0..input.len())
        .map(|_| if rng.random::<f64>() < spec.p { T::zero() } else { keep })
        .collect();
    let data = input.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
    (
        Tensor::from_vec(input.dims(), data).expect("same shape"),
        mask,
    )
}

pub fn dropout_backward<T: Real>(mask: &[T], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if mask.len() != grad_out.len() {
        return Err(Error::Shape("dropout mask does not match gradient".into()));
    }
    let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
    Tensor::from_vec(grad_out.dims(), data)
}
