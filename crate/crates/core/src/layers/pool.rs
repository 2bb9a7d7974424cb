//! Non-overlapping max pooling and global average pooling.

use crate::error::{Error, Result};
use crate::tensor::{nchw, shape_like, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Max,
    AvgGlobal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolSpec {
    pub kind: PoolKind,
    pub kernel_h: usize,
    pub kernel_w: usize,
}

impl PoolSpec {
    pub fn max(kernel_h: usize, kernel_w: usize) -> Self {
        PoolSpec {
            kind: PoolKind::Max,
            kernel_h,
            kernel_w,
        }
    }

    pub fn global_avg() -> Self {
        PoolSpec {
            kind: PoolKind::AvgGlobal,
            kernel_h: 0,
            kernel_w: 0,
        }
    }

    /// Output extent along one axis. Windows tile the axis with stride equal
    /// to the kernel and a partial tail window is dropped. An axis shorter
    /// than the kernel collapses to a single window spanning the whole axis,
    /// so any input of at least one position still produces output.
    pub fn out_extent(len: usize, kernel: usize) -> usize {
        (len / kernel).max(1)
    }

    pub fn output_hw(&self, h: usize, w: usize) -> (usize, usize) {
        match self.kind {
            PoolKind::Max => (
                Self::out_extent(h, self.kernel_h),
                Self::out_extent(w, self.kernel_w),
            ),
            PoolKind::AvgGlobal => (1, 1),
        }
    }
}

/// Flat input index of each output's maximum, for routing gradients back.
#[derive(Debug, Clone)]
pub struct MaxPoolContext {
    pub input_dims: Vec<usize>,
    pub argmax: Vec<usize>,
}

pub fn maxpool_forward<T: Real>(spec: &PoolSpec, input: &Tensor<T>) -> Result<(Tensor<T>, MaxPoolContext)> {
    if spec.kind != PoolKind::Max || spec.kernel_h == 0 || spec.kernel_w == 0 {
        return Err(Error::Shape(format!("not a max pool: {spec:?}")));
    }
    let (n, c, h, w) = nchw(input.shape())?;
    let (oh, ow) = spec.output_hw(h, w);
    let (kh, kw) = (spec.kernel_h.min(h), spec.kernel_w.min(w));
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * kh * w + ox * kw;
                for ky in 0..kh {
                    let row = base + (oy * kh + ky) * w + ox * kw;
                    for i in row..row + kw {
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let shape = shape_like(input.shape(), n, c, oh, ow)?;
    Ok((
        Tensor::from_vec(shape.dims(), out)?,
        MaxPoolContext {
            input_dims: input.dims().to_vec(),
            argmax,
        },
    ))
}

pub fn maxpool_backward<T: Real>(ctx: &MaxPoolContext, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.len() != ctx.argmax.len() {
        return Err(Error::Shape(format!(
            "upstream gradient {} does not match pooled output of {} elements",
            grad_out.shape(),
            ctx.argmax.len()
        )));
    }
    let mut gx = Tensor::zeros(crate::tensor::Shape::new(ctx.input_dims.clone())?);
    let d = gx.data_mut();
    for (&i, &g) in ctx.argmax.iter().zip(grad_out.data()) {
        d[i] += g;
    }
    Ok(gx)
}

/// Per-channel mean over every spatial position: `(C,H,W) -> (C)`,
/// `(N,C,H,W) -> (N,C)`.
pub fn avgpool_global<T: Real>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = nchw(input.shape())?;
    let plane = h * w;
    let out = input
        .data()
        .chunks(plane)
        .map(|p| T::of_f64(p.iter().map(|v| v.as_f64()).sum::<f64>() / plane as f64))
        .collect();
    if input.shape().rank() == 3 {
        Tensor::from_vec([c], out)
    } else {
        Tensor::from_vec([n, c], out)
    }
}

pub fn avgpool_global_backward<T: Real>(input_dims: &[usize], grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    let shape = crate::tensor::Shape::new(input_dims.to_vec())?;
    let (n, c, h, w) = nchw(&shape)?;
    if grad_out.len() != n * c {
        return Err(Error::Shape(format!(
            "upstream gradient {} does not match {n}x{c} pooled values",
            grad_out.shape()
        )));
    }
    let plane = h * w;
    let inv = T::of_f64(1.0 / plane as f64);
    let mut data = Vec::with_capacity(shape.numel());
    for &g in grad_out.data() {
        data.extend(std::iter::repeat_n(g * inv, plane));
    }
    Tensor::from_vec(input_dims, data)
}
