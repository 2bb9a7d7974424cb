//! Strided, grouped cross-correlation over 1-D waveforms and 2-D feature maps.
//!
//! Both forms run through the same kernel: a 1-D convolution is a 2-D
//! convolution over a height-1 map with a `1 x k` filter. Depthwise filters
//! are `groups == in_ch == out_ch`, pointwise filters are `1 x 1`.
//!
//! Layouts:
//! * 1-D input `(C,1,T)` or `(N,C,1,T)`, weight `(out, in/groups, k)`
//! * 2-D input `(C,H,W)` or `(N,C,H,W)`, weight `(out, in/groups, kh, kw)`
//! * bias `(out)`

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{nchw, shape_like, Real, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl Conv1dSpec {
    /// Dense, bias-free filter with "same"-style padding: `(k-1)/2` zeros on
    /// the left and the remainder on the right, so the output has exactly
    /// `T/stride` samples whenever `stride` divides `T`.
    pub fn same(in_ch: usize, out_ch: usize, kernel: usize, stride: usize) -> Self {
        let pad_left = (kernel - 1) / 2;
        Conv1dSpec {
            in_ch,
            out_ch,
            kernel,
            stride,
            pad_left,
            pad_right: kernel - 1 - pad_left,
            groups: 1,
            has_bias: false,
        }
    }

    pub fn depthwise(ch: usize, kernel: usize, stride: usize) -> Self {
        Conv1dSpec {
            groups: ch,
            ..Conv1dSpec::same(ch, ch, kernel, stride)
        }
    }

    pub fn pointwise(in_ch: usize, out_ch: usize) -> Self {
        Conv1dSpec::same(in_ch, out_ch, 1, 1)
    }

    pub fn output_len(&self, in_len: usize) -> Option<usize> {
        let padded = in_len + self.pad_left + self.pad_right;
        (padded >= self.kernel).then(|| (padded - self.kernel) / self.stride + 1)
    }

    pub fn weight_dims(&self) -> [usize; 3] {
        [self.out_ch, self.in_ch / self.groups, self.kernel]
    }

    pub fn param_count(&self) -> usize {
        self.weight_dims().iter().product::<usize>() + if self.has_bias { self.out_ch } else { 0 }
    }

    fn geometry(&self) -> Geometry {
        Geometry {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            groups: self.groups,
            kh: 1,
            kw: self.kernel,
            sh: 1,
            sw: self.stride,
            pad_top: 0,
            pad_left: self.pad_left,
            pad_bottom: 0,
            pad_right: self.pad_right,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dSpec {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub groups: usize,
    pub has_bias: bool,
}

impl Conv2dSpec {
    /// `k x k` dense filter, stride 1, padding `k/2` (spatial size preserved
    /// for odd `k`), no bias.
    pub fn square(in_ch: usize, out_ch: usize, k: usize) -> Self {
        Conv2dSpec {
            in_ch,
            out_ch,
            kernel_h: k,
            kernel_w: k,
            stride: 1,
            padding: k / 2,
            groups: 1,
            has_bias: false,
        }
    }

    pub fn depthwise(ch: usize, k: usize) -> Self {
        Conv2dSpec {
            groups: ch,
            ..Conv2dSpec::square(ch, ch, k)
        }
    }

    pub fn pointwise(in_ch: usize, out_ch: usize) -> Self {
        Conv2dSpec::square(in_ch, out_ch, 1)
    }

    pub fn with_bias(mut self) -> Self {
        self.has_bias = true;
        self
    }

    pub fn output_hw(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        let g = self.geometry();
        Some((g.out_h(h)?, g.out_w(w)?))
    }

    pub fn weight_dims(&self) -> [usize; 4] {
        [
            self.out_ch,
            self.in_ch / self.groups,
            self.kernel_h,
            self.kernel_w,
        ]
    }

    pub fn param_count(&self) -> usize {
        self.weight_dims().iter().product::<usize>() + if self.has_bias { self.out_ch } else { 0 }
    }

    fn geometry(&self) -> Geometry {
        Geometry {
            in_ch: self.in_ch,
            out_ch: self.out_ch,
            groups: self.groups,
            kh: self.kernel_h,
            kw: self.kernel_w,
            sh: self.stride,
            sw: self.stride,
            pad_top: self.padding,
            pad_left: self.padding,
            pad_bottom: self.padding,
            pad_right: self.padding,
        }
    }
}

/// Gradients produced by a convolution backward pass.
#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
}

#[derive(Debug, Clone, Copy)]
struct Geometry {
    in_ch: usize,
    out_ch: usize,
    groups: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    pad_top: usize,
    pad_left: usize,
    pad_bottom: usize,
    pad_right: usize,
}

impl Geometry {
    fn out_h(&self, h: usize) -> Option<usize> {
        let p = h + self.pad_top + self.pad_bottom;
        (p >= self.kh).then(|| (p - self.kh) / self.sh + 1)
    }

    fn out_w(&self, w: usize) -> Option<usize> {
        let p = w + self.pad_left + self.pad_right;
        (p >= self.kw).then(|| (p - self.kw) / self.sw + 1)
    }

    fn in_per_group(&self) -> usize {
        self.in_ch / self.groups
    }

    fn out_per_group(&self) -> usize {
        self.out_ch / self.groups
    }

    fn validate(&self) -> Result<()> {
        let Geometry {
            in_ch,
            out_ch,
            groups,
            kh,
            kw,
            sh,
            sw,
            ..
        } = *self;
        if in_ch == 0 || out_ch == 0 || groups == 0 || kh == 0 || kw == 0 || sh == 0 || sw == 0 {
            return Err(Error::Shape(format!("degenerate convolution {self:?}")));
        }
        if in_ch % groups != 0 || out_ch % groups != 0 {
            return Err(Error::Shape(format!(
                "channels {in_ch}->{out_ch} not divisible by groups {groups}"
            )));
        }
        Ok(())
    }

    /// Range of output positions `o` for which `o*stride + k - pad` lands
    /// inside `[0, len)`.
    fn valid(out_len: usize, len: usize, stride: usize, k: usize, pad: usize) -> (usize, usize) {
        let lo = if pad > k { (pad - k).div_ceil(stride) } else { 0 };
        let hi = if len + pad > k {
            ((len + pad - k - 1) / stride + 1).min(out_len)
        } else {
            0
        };
        (lo, hi.max(lo))
    }
}

struct Dims {
    n: usize,
    h: usize,
    w: usize,
    oh: usize,
    ow: usize,
}

fn check<T: Real>(g: &Geometry, input: &Tensor<T>, weight: &Tensor<T>, wdims: &[usize]) -> Result<Dims> {
    g.validate()?;
    let (n, c, h, w) = nchw(input.shape())?;
    if c != g.in_ch {
        return Err(Error::Shape(format!(
            "convolution expects {} input channels, got input {}",
            g.in_ch,
            input.shape()
        )));
    }
    if weight.dims() != wdims {
        return Err(Error::Shape(format!(
            "convolution weight must be {wdims:?}, got {}",
            weight.shape()
        )));
    }
    let (oh, ow) = match (g.out_h(h), g.out_w(w)) {
        (Some(oh), Some(ow)) => (oh, ow),
        _ => {
            return Err(Error::Shape(format!(
                "input {} smaller than kernel {}x{}",
                input.shape(),
                g.kh,
                g.kw
            )))
        }
    };
    Ok(Dims { n, h, w, oh, ow })
}

fn forward<T: Real>(
    g: &Geometry,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    wdims: &[usize],
) -> Result<Tensor<T>> {
    let d = check(g, input, weight, wdims)?;
    if let Some(b) = bias {
        if b.dims() != [g.out_ch] {
            return Err(Error::Shape(format!(
                "bias must be ({}), got {}",
                g.out_ch,
                b.shape()
            )));
        }
    }
    let (ipg, opg) = (g.in_per_group(), g.out_per_group());
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![T::zero(); d.n * g.out_ch * out_plane];

    out.par_chunks_mut(out_plane).enumerate().for_each(|(row, o_plane)| {
        let (b, o) = (row / g.out_ch, row % g.out_ch);
        let grp = o / opg;
        if let Some(bias) = bias {
            o_plane.fill(bias.data()[o]);
        }
        for cl in 0..ipg {
            let ci = grp * ipg + cl;
            let x_plane = &x[(b * g.in_ch + ci) * in_plane..][..in_plane];
            let w_base = (o * ipg + cl) * g.kh * g.kw;
            for ky in 0..g.kh {
                let (y0, y1) = Geometry::valid(d.oh, d.h, g.sh, ky, g.pad_top);
                for kx in 0..g.kw {
                    let wv = wt[w_base + ky * g.kw + kx];
                    let (x0, x1) = Geometry::valid(d.ow, d.w, g.sw, kx, g.pad_left);
                    for oy in y0..y1 {
                        let iy = oy * g.sh + ky - g.pad_top;
                        let src = &x_plane[iy * d.w..][..d.w];
                        let dst = &mut o_plane[oy * d.ow..][..d.ow];
                        if g.sw == 1 {
                            let off = x0 + kx - g.pad_left;
                            for (o, &s) in dst[x0..x1].iter_mut().zip(&src[off..off + (x1 - x0)]) {
                                *o += wv * s;
                            }
                        } else {
                            for ox in x0..x1 {
                                dst[ox] += wv * src[ox * g.sw + kx - g.pad_left];
                            }
                        }
                    }
                }
            }
        }
    });

    let shape = shape_like(input.shape(), d.n, g.out_ch, d.oh, d.ow)?;
    Tensor::from_vec(shape.dims(), out)
}

fn backward<T: Real>(
    g: &Geometry,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    has_bias: bool,
    wdims: &[usize],
) -> Result<ConvGrads<T>> {
    let d = check(g, input, weight, wdims)?;
    let expect = shape_like(input.shape(), d.n, g.out_ch, d.oh, d.ow)?;
    if grad_out.shape() != &expect {
        return Err(Error::Shape(format!(
            "upstream gradient must be {expect}, got {}",
            grad_out.shape()
        )));
    }
    let (ipg, opg) = (g.in_per_group(), g.out_per_group());
    let in_plane = d.h * d.w;
    let out_plane = d.oh * d.ow;
    let x = input.data();
    let wt = weight.data();
    let gy = grad_out.data();
    let ksz = g.kh * g.kw;

    // weight gradient, one output channel per task
    let mut gw = vec![T::zero(); weight.len()];
    gw.par_chunks_mut(ipg * ksz).enumerate().for_each(|(o, gw_o)| {
        let grp = o / opg;
        for b in 0..d.n {
            let g_plane = &gy[(b * g.out_ch + o) * out_plane..][..out_plane];
            for cl in 0..ipg {
                let ci = grp * ipg + cl;
                let x_plane = &x[(b * g.in_ch + ci) * in_plane..][..in_plane];
                for ky in 0..g.kh {
                    let (y0, y1) = Geometry::valid(d.oh, d.h, g.sh, ky, g.pad_top);
                    for kx in 0..g.kw {
                        let (x0, x1) = Geometry::valid(d.ow, d.w, g.sw, kx, g.pad_left);
                        let mut acc = 0f64;
                        for oy in y0..y1 {
                            let iy = oy * g.sh + ky - g.pad_top;
                            let src = &x_plane[iy * d.w..][..d.w];
                            let gr = &g_plane[oy * d.ow..][..d.ow];
                            for ox in x0..x1 {
                                acc += gr[ox].as_f64() * src[ox * g.sw + kx - g.pad_left].as_f64();
                            }
                        }
                        gw_o[cl * ksz + ky * g.kw + kx] += T::of_f64(acc);
                    }
                }
            }
        }
    });

    // input gradient, one (batch, input channel) plane per task
    let mut gx = vec![T::zero(); x.len()];
    gx.par_chunks_mut(in_plane).enumerate().for_each(|(row, gx_plane)| {
        let (b, ci) = (row / g.in_ch, row % g.in_ch);
        let grp = ci / ipg;
        let cl = ci % ipg;
        for o in grp * opg..(grp + 1) * opg {
            let g_plane = &gy[(b * g.out_ch + o) * out_plane..][..out_plane];
            let w_base = (o * ipg + cl) * ksz;
            for ky in 0..g.kh {
                let (y0, y1) = Geometry::valid(d.oh, d.h, g.sh, ky, g.pad_top);
                for kx in 0..g.kw {
                    let wv = wt[w_base + ky * g.kw + kx];
                    let (x0, x1) = Geometry::valid(d.ow, d.w, g.sw, kx, g.pad_left);
                    for oy in y0..y1 {
                        let iy = oy * g.sh + ky - g.pad_top;
                        let dst = &mut gx_plane[iy * d.w..][..d.w];
                        let gr = &g_plane[oy * d.ow..][..d.ow];
                        for ox in x0..x1 {
                            dst[ox * g.sw + kx - g.pad_left] += wv * gr[ox];
                        }
                    }
                }
            }
        }
    });

    let bias = if has_bias {
        let mut gb = vec![0f64; g.out_ch];
        for b in 0..d.n {
            for (o, acc) in gb.iter_mut().enumerate() {
                *acc += gy[(b * g.out_ch + o) * out_plane..][..out_plane]
                    .iter()
                    .map(|v| v.as_f64())
                    .sum::<f64>();
            }
        }
        Some(Tensor::from_vec([g.out_ch], gb.into_iter().map(T::of_f64).collect())?)
    } else {
        None
    };

    Ok(ConvGrads {
        input: Tensor::from_vec(input.dims(), gx)?,
        weight: Tensor::from_vec(weight.dims(), gw)?,
        bias,
    })
}

fn check_1d<T: Real>(input: &Tensor<T>) -> Result<()> {
    let (_, _, h, _) = nchw(input.shape())?;
    if h != 1 {
        return Err(Error::Shape(format!(
            "1-D convolution expects (C,1,T) or (N,C,1,T), got {}",
            input.shape()
        )));
    }
    Ok(())
}

/// Strided 1-D cross-correlation (no kernel flip).
pub fn conv1d_forward<T: Real>(
    spec: &Conv1dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    check_1d(input)?;
    forward(&spec.geometry(), input, weight, bias, &spec.weight_dims())
}

pub fn conv1d_backward<T: Real>(
    spec: &Conv1dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    check_1d(input)?;
    backward(&spec.geometry(), input, weight, grad_out, spec.has_bias, &spec.weight_dims())
}

/// 2-D cross-correlation; also serves depthwise (`groups == in_ch`) and
/// pointwise (`1 x 1`) filters.
pub fn conv2d_forward<T: Real>(
    spec: &Conv2dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: Option<&Tensor<T>>,
) -> Result<Tensor<T>> {
    forward(&spec.geometry(), input, weight, bias, &spec.weight_dims())
}

pub fn conv2d_backward<T: Real>(
    spec: &Conv2dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    backward(&spec.geometry(), input, weight, grad_out, spec.has_bias, &spec.weight_dims())
}

pub fn depthwise_forward<T: Real>(
    spec: &Conv2dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<Tensor<T>> {
    if spec.groups != spec.in_ch || spec.in_ch != spec.out_ch {
        return Err(Error::Shape(format!(
            "depthwise filter needs in_ch == out_ch == groups, got {spec:?}"
        )));
    }
    conv2d_forward(spec, input, weight, None)
}

pub fn pointwise_forward<T: Real>(
    spec: &Conv2dSpec,
    input: &Tensor<T>,
    weight: &Tensor<T>,
) -> Result<Tensor<T>> {
    if spec.kernel_h != 1 || spec.kernel_w != 1 || spec.groups != 1 {
        return Err(Error::Shape(format!(
            "pointwise filter must be dense 1x1, got {spec:?}"
        )));
    }
    conv2d_forward(spec, input, weight, None)
}
