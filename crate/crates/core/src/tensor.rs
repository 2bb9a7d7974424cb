//! Dense row-major tensors and the element types they are built over.
//!
//! The last axis is fastest. Image-like activations are laid out
//! `(channels, height, width)`, batched activations `(batch, channels,
//! height, width)`, so the time axis of the front-end is always innermost.

use std::fmt;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

use crate::error::{Error, Result};

/// Scalar element of a tensor. Implemented for `f32` (default compute
/// precision) and `f64` (used for finite-difference gradient checks).
pub trait Real:
    Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Send
    + Sync
    + fmt::Debug
    + fmt::Display
    + 'static
{
    fn of_f64(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("finite f64 converts")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Shape(Vec<usize>);

impl Shape {
    pub fn new(dims: impl Into<Vec<usize>>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() {
            return Err(Error::Shape("shape must have at least one dim".into()));
        }
        if let Some(i) = dims.iter().position(|&d| d == 0) {
            return Err(Error::Shape(format!("dim {i} of {dims:?} is zero")));
        }
        dims.iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .filter(|&n| n <= isize::MAX as usize)
            .ok_or_else(|| Error::Size(format!("element count of {dims:?} overflows")))?;
        Ok(Shape(dims))
    }

    pub fn dims(&self) -> &[usize] {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.len()
    }

    pub fn numel(&self) -> usize {
        self.0.iter().product()
    }
}

impl fmt::Debug for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{d}")?;
        }
        write!(f, ")")
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Mul,
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Shape,
    data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        let data = vec![T::zero(); shape.numel()];
        Tensor { shape, data }
    }

    pub fn from_vec(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let shape = Shape::new(dims)?;
        if shape.numel() != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape} holds {} elements, got {}",
                shape.numel(),
                data.len()
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dims(&self) -> &[usize] {
        self.shape.dims()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reinterprets the data under a new shape with the same element count.
    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        Tensor::from_vec(dims, self.data)
    }

    /// Swaps the channel axis with the (unit) height axis: `(C,1,T)` becomes
    /// `(1,C,T)`, and batched `(N,C,1,T)` becomes `(N,1,C,T)`. Because the
    /// swapped axis has extent 1 the data is not moved.
    pub fn transpose_cw(self) -> Result<Self> {
        let d = self.dims().to_vec();
        let new = match d.as_slice() {
            [c, 1, t] => vec![1, *c, *t],
            [n, c, 1, t] => vec![*n, 1, *c, *t],
            _ => {
                return Err(Error::Shape(format!(
                    "transpose_cw expects (C,1,T) or (N,C,1,T), got {}",
                    self.shape
                )))
            }
        };
        self.reshape(new)
    }

    /// Inverse of [`Tensor::transpose_cw`].
    pub fn transpose_wc(self) -> Result<Self> {
        let d = self.dims().to_vec();
        let new = match d.as_slice() {
            [1, c, t] => vec![*c, 1, *t],
            [n, 1, c, t] => vec![*n, *c, 1, *t],
            _ => {
                return Err(Error::Shape(format!(
                    "transpose_wc expects (1,C,T) or (N,1,C,T), got {}",
                    self.shape
                )))
            }
        };
        self.reshape(new)
    }

    pub fn elementwise(&self, other: &Tensor<T>, op: BinaryOp) -> Result<Tensor<T>> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "elementwise {op:?}: {} vs {}",
                self.shape, other.shape
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| match op {
                BinaryOp::Add => a + b,
                BinaryOp::Mul => a * b,
            })
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, BinaryOp::Add)
    }

    pub fn mul(&self, other: &Tensor<T>) -> Result<Tensor<T>> {
        self.elementwise(other, BinaryOp::Mul)
    }

    pub fn scale(&self, factor: T) -> Tensor<T> {
        self.map(|v| v * factor)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn cast<U: Real>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| U::of_f64(v.as_f64())).collect(),
        }
    }
}

impl<T: fmt::Debug> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let head: Vec<_> = self.data.iter().take(8).collect();
        write!(f, "Tensor{} {:?}", self.shape, head)?;
        if self.data.len() > 8 {
            write!(f, "..")?;
        }
        Ok(())
    }
}

/// Splits a rank-3 `(C,H,W)` or rank-4 `(N,C,H,W)` shape into `(n, c, h, w)`.
pub(crate) fn nchw(shape: &Shape) -> Result<(usize, usize, usize, usize)> {
    match *shape.dims() {
        [c, h, w] => Ok((1, c, h, w)),
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::Shape(format!(
            "expected (C,H,W) or (N,C,H,W), got {shape}"
        ))),
    }
}

/// Builds an output shape with the same rank convention as `like`.
pub(crate) fn shape_like(like: &Shape, n: usize, c: usize, h: usize, w: usize) -> Result<Shape> {
    if like.rank() == 3 {
        Shape::new([c, h, w])
    } else {
        Shape::new([n, c, h, w])
    }
}
