//! Architecture configuration and its resolution into a layer graph.
//!
//! The front-end ("LLF") is two strided 1-D convolutions and a max pool that
//! decimate the waveform to 64 channels at one frame per 10 ms. Its output is
//! viewed as a one-channel `64 x frames` image and fed to a VGG-like 2-D
//! stack ("HLF") ending in a `1 x 1` class head and global average pooling.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::layers::{BatchNormSpec, Conv1dSpec, Conv2dSpec, DropoutSpec, PoolSpec};
use crate::tensor::{Real, Shape, Tensor};

/// Channels of the LLF output, i.e. the height of the HLF input image.
pub const LLF_CHANNELS: usize = 64;

/// Base output channels of Conv3..Conv11 at width multiplier 1.
pub const HLF_BASE_CHANNELS: [usize; 9] = [32, 64, 64, 128, 128, 256, 256, 512, 512];

pub const SUPPORTED_RATES: [u32; 2] = [16_000, 44_100];

/// Reference rate at which the default front-end kernel sizes are defined.
pub const REFERENCE_RATE: u32 = 16_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConvType {
    /// conv -> BN -> ReLU
    Standard,
    /// depthwise conv -> BN -> ReLU -> pointwise conv -> BN -> ReLU
    Separable,
}

impl fmt::Display for ConvType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConvType::Standard => "sc",
            ConvType::Separable => "dwsc",
        })
    }
}

impl FromStr for ConvType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sc" | "standard" => Ok(ConvType::Standard),
            "dwsc" | "separable" => Ok(ConvType::Separable),
            _ => Err(Error::Config(format!(
                "conv type must be `sc` or `dwsc`, got `{s}`"
            ))),
        }
    }
}

/// Width multiplier held as an exact reduced fraction so it survives
/// serialization and comparison without float drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WidthMultiplier {
    num: u32,
    den: u32,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl WidthMultiplier {
    pub const ONE: WidthMultiplier = WidthMultiplier { num: 1, den: 1 };

    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::Config(format!(
                "width multiplier must be positive, got {num}/{den}"
            )));
        }
        let g = gcd(num as u64, den as u64) as u32;
        Ok(WidthMultiplier {
            num: num / g,
            den: den / g,
        })
    }

    pub fn numerator(&self) -> u32 {
        self.num
    }

    pub fn denominator(&self) -> u32 {
        self.den
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    /// `round(base * wm)` with halves rounded up, never below 1.
    pub fn apply(&self, base_channels: usize) -> usize {
        let n = base_channels as u64 * self.num as u64;
        let d = self.den as u64;
        ((2 * n + d) / (2 * d)).max(1) as usize
    }
}

impl fmt::Display for WidthMultiplier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // exact decimal when the denominator is of the form 2^a 5^b
        let mut d = self.den;
        for p in [2, 5] {
            while d % p == 0 {
                d /= p;
            }
        }
        if d == 1 {
            let v = self.as_f64();
            let s = format!("{v:.10}");
            let s = s.trim_end_matches('0').trim_end_matches('.');
            f.write_str(s)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

impl FromStr for WidthMultiplier {
    type Err = Error;

    /// Accepts `a/b` fractions and plain decimals such as `0.125` or `2`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("invalid width multiplier `{s}`"));
        let s = s.trim();
        if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse::<u32>().map_err(|_| bad())?;
            let b = b.trim().parse::<u32>().map_err(|_| bad())?;
            return WidthMultiplier::new(a, b);
        }
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 9 || !frac.chars().all(|c| c.is_ascii_digit()) {
            return Err(bad());
        }
        let int: u64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad())? };
        let scale = 10u64.pow(frac.len() as u32);
        let frac_v: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| bad())? };
        let num = int.checked_mul(scale).and_then(|v| v.checked_add(frac_v)).ok_or_else(bad)?;
        let g = gcd(num, scale).max(1);
        let (num, den) = (num / g, scale / g);
        let num = u32::try_from(num).map_err(|_| bad())?;
        WidthMultiplier::new(num, den as u32)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub sample_rate: u32,
    pub conv_type: ConvType,
    pub width_multiplier: WidthMultiplier,
    pub c1: usize,
    pub s1: usize,
    pub s2: usize,
    /// Front-end kernel sizes at the 16 kHz reference rate; scaled with the
    /// sample rate when the graph is built.
    pub llf_kernel1: usize,
    pub llf_kernel2: usize,
    pub num_classes: usize,
    pub dropout_p: f64,
}

impl NetworkConfig {
    /// Defaults: kernels 9 and 5, `(c1,s1,s2)` = (8,2,2) for standard and
    /// (16,2,4) for separable blocks, 50 classes, dropout 0.2.
    pub fn new(sample_rate: u32, conv_type: ConvType, width_multiplier: WidthMultiplier) -> Self {
        let (c1, s1, s2) = match conv_type {
            ConvType::Standard => (8, 2, 2),
            ConvType::Separable => (16, 2, 4),
        };
        NetworkConfig {
            sample_rate,
            conv_type,
            width_multiplier,
            c1,
            s1,
            s2,
            llf_kernel1: 9,
            llf_kernel2: 5,
            num_classes: 50,
            dropout_p: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !SUPPORTED_RATES.contains(&self.sample_rate) {
            return Err(Error::Config(format!(
                "sample rate must be one of {SUPPORTED_RATES:?}, got {}",
                self.sample_rate
            )));
        }
        for (name, v) in [
            ("c1", self.c1),
            ("s1", self.s1),
            ("s2", self.s2),
            ("llf_kernel1", self.llf_kernel1),
            ("llf_kernel2", self.llf_kernel2),
            ("num_classes", self.num_classes),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!(
                "dropout_p must be in [0,1), got {}",
                self.dropout_p
            )));
        }
        let decim = self.s1 * self.s2;
        if self.sample_rate == REFERENCE_RATE && 160 % decim != 0 {
            return Err(Error::Config(format!(
                "s1*s2 = {decim} must divide 160 so the 10 ms pool kernel is an integer"
            )));
        }
        if self.samples_per_frame() / decim == 0 {
            return Err(Error::Config(format!(
                "s1*s2 = {decim} exceeds the {} samples of a 10 ms frame",
                self.samples_per_frame()
            )));
        }
        Ok(())
    }

    pub fn samples_per_frame(&self) -> usize {
        self.sample_rate as usize / 100
    }

    pub fn hlf_channels(&self) -> [usize; 9] {
        HLF_BASE_CHANNELS.map(|c| self.width_multiplier.apply(c))
    }

    /// Short label such as `16k-dwsc`.
    pub fn label(&self) -> String {
        let rate = match self.sample_rate {
            16_000 => "16k".to_string(),
            44_100 => "44.1k".to_string(),
            r => format!("{r}"),
        };
        format!("{rate}-{}", self.conv_type)
    }
}

pub fn apply_width_multiplier(base_channels: usize, wm: WidthMultiplier) -> usize {
    wm.apply(base_channels)
}

/// Front-end geometry after adapting the reference kernels to a sample rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LlfGeometry {
    pub kernel1: usize,
    pub kernel2: usize,
    pub s1: usize,
    pub s2: usize,
    /// Maxpool1 kernel: samples per 10 ms frame after decimation, rounded down.
    pub pool_kernel: usize,
}

impl LlfGeometry {
    pub fn samples_per_frame(&self) -> usize {
        self.s1 * self.s2 * self.pool_kernel
    }
}

/// Kernels scale with the rate (rounded down, at least 1); strides stay put
/// and the pool kernel absorbs the rest of the 10 ms frame.
pub fn scale_llf_for_rate(config: &NetworkConfig) -> Result<LlfGeometry> {
    config.validate()?;
    let ratio = config.sample_rate as f64 / REFERENCE_RATE as f64;
    let scale = |k: usize| ((k as f64 * ratio + 1e-9).floor() as usize).max(1);
    Ok(LlfGeometry {
        kernel1: scale(config.llf_kernel1),
        kernel2: scale(config.llf_kernel2),
        s1: config.s1,
        s2: config.s2,
        pool_kernel: config.samples_per_frame() / (config.s1 * config.s2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Llf,
    Hlf,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerSpec {
    Conv1d(Conv1dSpec),
    Conv2d(Conv2dSpec),
    BatchNorm(BatchNormSpec),
    Relu,
    MaxPool(PoolSpec),
    /// `(C,1,T)` viewed as the image `(1,C,T)`.
    Transpose,
    Dropout(DropoutSpec),
    GlobalAvgPool,
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    ConvBias,
    BnGamma,
    BnBeta,
}

impl ParamKind {
    /// Whether L2 weight decay applies to this kind of parameter.
    pub fn decays(&self) -> bool {
        matches!(self, ParamKind::ConvWeight)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNode {
    /// `Conv4`, `Conv4.dw`, `Conv4.dw_bn`, ... The part before the first
    /// `.` is the architecture-level layer name.
    pub name: String,
    pub stage: Stage,
    pub spec: LayerSpec,
    pub input: Shape,
    pub output: Shape,
}

impl LayerNode {
    pub fn layer_name(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }

    /// Learnable tensors of this node, as `(suffix, dims, kind)`.
    pub fn params(&self) -> Vec<(&'static str, Vec<usize>, ParamKind)> {
        match &self.spec {
            LayerSpec::Conv1d(s) => {
                let mut v = vec![("weight", s.weight_dims().to_vec(), ParamKind::ConvWeight)];
                if s.has_bias {
                    v.push(("bias", vec![s.out_ch], ParamKind::ConvBias));
                }
                v
            }
            LayerSpec::Conv2d(s) => {
                let mut v = vec![("weight", s.weight_dims().to_vec(), ParamKind::ConvWeight)];
                if s.has_bias {
                    v.push(("bias", vec![s.out_ch], ParamKind::ConvBias));
                }
                v
            }
            LayerSpec::BatchNorm(s) => vec![
                ("gamma", vec![s.channels], ParamKind::BnGamma),
                ("beta", vec![s.channels], ParamKind::BnBeta),
            ],
            _ => Vec::new(),
        }
    }

    /// Non-learnable state (batch norm running statistics).
    pub fn buffers(&self) -> Vec<(&'static str, Vec<usize>)> {
        match &self.spec {
            LayerSpec::BatchNorm(s) => vec![
                ("running_mean", vec![s.channels]),
                ("running_var", vec![s.channels]),
            ],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGraph {
    pub config: NetworkConfig,
    pub llf: LlfGeometry,
    pub input_len: usize,
    pub nodes: Vec<LayerNode>,
}

impl LayerGraph {
    pub fn node(&self, name: &str) -> Option<&LayerNode> {
        self.nodes.iter().find(|n| n.name == name)
    }

    pub fn output_shape(&self) -> &Shape {
        &self.nodes.last().expect("graph is never empty").output
    }

    /// All learnable tensors in execution order: `(name, dims, kind)`.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>, ParamKind)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.params()
                    .into_iter()
                    .map(move |(s, d, k)| (format!("{}.{s}", n.name), d, k))
            })
            .collect()
    }

    pub fn buffer_shapes(&self) -> Vec<(String, Vec<usize>)> {
        self.nodes
            .iter()
            .flat_map(|n| {
                n.buffers()
                    .into_iter()
                    .map(move |(s, d)| (format!("{}.{s}", n.name), d))
            })
            .collect()
    }

    /// Number of HLF time frames the front-end produces.
    pub fn frames(&self) -> usize {
        self.node("Maxpool1").map(|n| n.output.dims()[2]).unwrap_or(0)
    }
}

/// Smallest accepted input: one 10 ms frame of samples.
pub fn min_input_len(config: &NetworkConfig) -> Result<usize> {
    Ok(scale_llf_for_rate(config)?.samples_per_frame())
}

struct GraphBuilder {
    nodes: Vec<LayerNode>,
    shape: Shape,
    stage: Stage,
}

impl GraphBuilder {
    fn push(&mut self, name: impl Into<String>, spec: LayerSpec) -> Result<()> {
        let out = output_shape(&spec, &self.shape)?;
        self.nodes.push(LayerNode {
            name: name.into(),
            stage: self.stage,
            spec,
            input: self.shape.clone(),
            output: out.clone(),
        });
        self.shape = out;
        Ok(())
    }

    fn channels(&self) -> usize {
        self.shape.dims()[0]
    }

    fn bn_relu(&mut self, prefix: &str, channels: usize) -> Result<()> {
        self.push(format!("{prefix}bn"), LayerSpec::BatchNorm(BatchNormSpec::new(channels)))?;
        self.push(format!("{prefix}relu"), LayerSpec::Relu)
    }

    fn conv1d_block(&mut self, name: &str, form: ConvType, out: usize, k: usize, stride: usize) -> Result<()> {
        let cin = self.channels();
        match form {
            ConvType::Standard => {
                self.push(name, LayerSpec::Conv1d(Conv1dSpec::same(cin, out, k, stride)))?;
                self.bn_relu(&format!("{name}."), out)
            }
            ConvType::Separable => {
                self.push(
                    format!("{name}.dw"),
                    LayerSpec::Conv1d(Conv1dSpec::depthwise(cin, k, stride)),
                )?;
                self.bn_relu(&format!("{name}.dw_"), cin)?;
                self.push(
                    format!("{name}.pw"),
                    LayerSpec::Conv1d(Conv1dSpec::pointwise(cin, out)),
                )?;
                self.bn_relu(&format!("{name}.pw_"), out)
            }
        }
    }

    fn conv2d_block(&mut self, name: &str, form: ConvType, out: usize) -> Result<()> {
        let cin = self.channels();
        match form {
            ConvType::Standard => {
                self.push(name, LayerSpec::Conv2d(Conv2dSpec::square(cin, out, 3)))?;
                self.bn_relu(&format!("{name}."), out)
            }
            ConvType::Separable => {
                self.push(format!("{name}.dw"), LayerSpec::Conv2d(Conv2dSpec::depthwise(cin, 3)))?;
                self.bn_relu(&format!("{name}.dw_"), cin)?;
                self.push(format!("{name}.pw"), LayerSpec::Conv2d(Conv2dSpec::pointwise(cin, out)))?;
                self.bn_relu(&format!("{name}.pw_"), out)
            }
        }
    }
}

/// Output shape of one layer for an unbatched input shape.
pub fn output_shape(spec: &LayerSpec, input: &Shape) -> Result<Shape> {
    let d = input.dims();
    let expect3 = || {
        if d.len() == 3 {
            Ok((d[0], d[1], d[2]))
        } else {
            Err(Error::Shape(format!("{spec:?} expects (C,H,W), got {input}")))
        }
    };
    match spec {
        LayerSpec::Conv1d(s) => {
            let (c, h, t) = expect3()?;
            if c != s.in_ch || h != 1 {
                return Err(Error::Shape(format!("{s:?} cannot take {input}")));
            }
            let out = s
                .output_len(t)
                .ok_or_else(|| Error::Shape(format!("{t} samples shorter than kernel {}", s.kernel)))?;
            Shape::new([s.out_ch, 1, out])
        }
        LayerSpec::Conv2d(s) => {
            let (c, h, w) = expect3()?;
            if c != s.in_ch {
                return Err(Error::Shape(format!("{s:?} cannot take {input}")));
            }
            let (oh, ow) = s
                .output_hw(h, w)
                .ok_or_else(|| Error::Shape(format!("{input} smaller than kernel")))?;
            Shape::new([s.out_ch, oh, ow])
        }
        LayerSpec::BatchNorm(_) | LayerSpec::Relu | LayerSpec::Dropout(_) => Ok(input.clone()),
        LayerSpec::MaxPool(p) => {
            let (c, h, w) = expect3()?;
            let (oh, ow) = p.output_hw(h, w);
            Shape::new([c, oh, ow])
        }
        LayerSpec::Transpose => {
            let (c, h, t) = expect3()?;
            if h != 1 {
                return Err(Error::Shape(format!("transpose expects (C,1,T), got {input}")));
            }
            Shape::new([1, c, t])
        }
        LayerSpec::GlobalAvgPool => Shape::new([expect3()?.0]),
        LayerSpec::Softmax => Ok(input.clone()),
    }
}

/// Resolves a configuration into the full layer graph for `input_len`
/// samples. Conv1 and Conv3 are always standard convolutions; Conv2 and
/// Conv4..Conv11 take the configured form.
pub fn build(config: &NetworkConfig, input_len: usize) -> Result<LayerGraph> {
    let llf = scale_llf_for_rate(config)?;
    if input_len < llf.samples_per_frame() {
        return Err(Error::Config(format!(
            "input of {input_len} samples is shorter than one 10 ms frame ({} samples)",
            llf.samples_per_frame()
        )));
    }
    let form = config.conv_type;
    let mut b = GraphBuilder {
        nodes: Vec::new(),
        shape: Shape::new([1, 1, input_len])?,
        stage: Stage::Llf,
    };

    b.conv1d_block("Conv1", ConvType::Standard, config.c1, llf.kernel1, llf.s1)?;
    b.conv1d_block("Conv2", form, LLF_CHANNELS, llf.kernel2, llf.s2)?;
    b.push("Maxpool1", LayerSpec::MaxPool(PoolSpec::max(1, llf.pool_kernel)))?;

    b.stage = Stage::Hlf;
    b.push("Transpose", LayerSpec::Transpose)?;
    let ch = config.hlf_channels();
    b.conv2d_block("Conv3", ConvType::Standard, ch[0])?;
    b.push("Maxpool2", LayerSpec::MaxPool(PoolSpec::max(2, 2)))?;
    for (i, &c) in ch.iter().enumerate().skip(1) {
        let conv = i + 3;
        b.conv2d_block(&format!("Conv{conv}"), form, c)?;
        if conv % 2 == 1 {
            b.push(format!("Maxpool{}", conv / 2 + 1), LayerSpec::MaxPool(PoolSpec::max(2, 2)))?;
        }
    }
    b.push("Dropout", LayerSpec::Dropout(DropoutSpec { p: config.dropout_p }))?;
    let cin = b.channels();
    b.push(
        "Conv12",
        LayerSpec::Conv2d(Conv2dSpec::pointwise(cin, config.num_classes).with_bias()),
    )?;
    b.push("Avgpool1", LayerSpec::GlobalAvgPool)?;
    b.push("Softmax", LayerSpec::Softmax)?;

    Ok(LayerGraph {
        config: config.clone(),
        llf,
        input_len,
        nodes: b.nodes,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor<T> {
    pub name: String,
    pub tensor: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<T>,
}

/// Learnable parameters and normalization statistics of a network, both
/// in graph execution order.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet<T> {
    pub params: Vec<Param<T>>,
    pub buffers: Vec<NamedTensor<T>>,
}

impl<T: Real> WeightSet<T> {
    /// Total number of learnable scalars.
    pub fn flat_len(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn buffer(&self, name: &str) -> Option<&Tensor<T>> {
        self.buffers.iter().find(|p| p.name == name).map(|p| &p.tensor)
    }

    pub fn cast<U: Real>(&self) -> WeightSet<U> {
        WeightSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    kind: p.kind,
                    tensor: p.tensor.cast(),
                })
                .collect(),
            buffers: self
                .buffers
                .iter()
                .map(|b| NamedTensor {
                    name: b.name.clone(),
                    tensor: b.tensor.cast(),
                })
                .collect(),
        }
    }

    /// Checks names and shapes against what `graph` requires.
    pub fn check_against(&self, graph: &LayerGraph) -> Result<()> {
        let want_p = graph.param_shapes();
        let want_b = graph.buffer_shapes();
        if want_p.len() != self.params.len() || want_b.len() != self.buffers.len() {
            return Err(Error::Shape(format!(
                "weight set has {}+{} tensors, graph needs {}+{}",
                self.params.len(),
                self.buffers.len(),
                want_p.len(),
                want_b.len()
            )));
        }
        let pairs = want_p
            .iter()
            .map(|(n, d, _)| (n, d))
            .zip(self.params.iter().map(|p| (&p.name, &p.tensor)))
            .chain(
                want_b
                    .iter()
                    .map(|(n, d)| (n, d))
                    .zip(self.buffers.iter().map(|b| (&b.name, &b.tensor))),
            );
        for ((wn, wd), (n, t)) in pairs {
            if wn != n || wd.as_slice() != t.dims() {
                return Err(Error::Shape(format!(
                    "tensor `{n}` {} does not match required `{wn}` {wd:?}",
                    t.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Scale of the class-head init relative to the hidden layers. Untrained
/// running statistics leave activations unnormalized at inference, so a
/// full-scale head would already be confidently wrong.
pub const HEAD_INIT_GAIN: f64 = 0.01;

/// Fan-in scaled uniform initialization, deterministic under `seed`.
///
/// Hidden convolutions draw from `U(-b, b)` with `b = sqrt(6 / fan_in)`
/// (variance `2 / fan_in`). The class head uses the same bound scaled by
/// [`HEAD_INIT_GAIN`] and a zero bias so an untrained network starts near
/// the uniform distribution.
/// Batch norm starts at `gamma = 1, beta = 0`, running stats `(0, 1)`.
pub fn init_weights<T: Real>(graph: &LayerGraph, seed: u64) -> WeightSet<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = Vec::new();
    for node in &graph.nodes {
        let head = node.name == "Conv12";
        for (suffix, dims, kind) in node.params() {
            let n: usize = dims.iter().product();
            let data: Vec<T> = match kind {
                ParamKind::ConvWeight => {
                    let fan_in: usize = dims[1..].iter().product();
                    let bound = if head {
                        HEAD_INIT_GAIN * (6.0 / fan_in as f64).sqrt()
                    } else {
                        (6.0 / fan_in as f64).sqrt()
                    };
                    (0..n)
                        .map(|_| T::of_f64(rng.random_range(-bound..bound)))
                        .collect()
                }
                ParamKind::ConvBias | ParamKind::BnBeta => vec![T::zero(); n],
                ParamKind::BnGamma => vec![T::one(); n],
            };
            params.push(Param {
                name: format!("{}.{suffix}", node.name),
                kind,
                tensor: Tensor::from_vec(dims, data).expect("dims from graph"),
            });
        }
    }
    let buffers = graph
        .buffer_shapes()
        .into_iter()
        .map(|(name, dims)| {
            let n = dims.iter().product();
            let fill = if name.ends_with("running_var") { T::one() } else { T::zero() };
            NamedTensor {
                name,
                tensor: Tensor::from_vec(dims, vec![fill; n]).expect("dims from graph"),
            }
        })
        .collect();
    WeightSet { params, buffers }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wm(s: &str) -> WidthMultiplier {
        s.parse().unwrap()
    }

    #[test]
    fn width_multiplier_examples() {
        assert_eq!(apply_width_multiplier(32, WidthMultiplier::ONE), 32);
        assert_eq!(apply_width_multiplier(32, wm("0.125")), 4);
        assert_eq!(apply_width_multiplier(32, wm("1/32")), 1);
        assert_eq!(apply_width_multiplier(32, wm("1/64")), 1);
        assert_eq!(apply_width_multiplier(512, wm("1.5")), 768);
        // round half up: 3 * 0.5 = 1.5 -> 2
        assert_eq!(apply_width_multiplier(3, wm("0.5")), 2);
    }

    #[test]
    fn width_multiplier_parsing() {
        assert_eq!(wm("0.03125"), wm("1/32"));
        assert_eq!(wm("2"), WidthMultiplier::new(2, 1).unwrap());
        assert_eq!(wm(".5").to_string(), "0.5");
        assert_eq!(wm("1/3").to_string(), "1/3");
        assert_eq!(wm("0.125").to_string(), "0.125");
        assert!("0".parse::<WidthMultiplier>().is_err());
        assert!("-1".parse::<WidthMultiplier>().is_err());
        assert!("abc".parse::<WidthMultiplier>().is_err());
    }

    #[test]
    fn llf_scaling() {
        let c16 = NetworkConfig::new(16_000, ConvType::Separable, WidthMultiplier::ONE);
        let g = scale_llf_for_rate(&c16).unwrap();
        assert_eq!((g.kernel1, g.kernel2, g.pool_kernel), (9, 5, 20));

        let c44 = NetworkConfig::new(44_100, ConvType::Separable, WidthMultiplier::ONE);
        let g = scale_llf_for_rate(&c44).unwrap();
        assert_eq!((g.kernel1, g.kernel2, g.pool_kernel), (24, 13, 55));

        let sc44 = NetworkConfig::new(44_100, ConvType::Standard, WidthMultiplier::ONE);
        assert_eq!(scale_llf_for_rate(&sc44).unwrap().pool_kernel, 110);

        let bad = NetworkConfig {
            sample_rate: 22_050,
            ..c16
        };
        assert!(matches!(scale_llf_for_rate(&bad), Err(Error::Config(_))));
    }

    #[test]
    fn decimation_must_divide_frame() {
        let c = NetworkConfig {
            s1: 3,
            ..NetworkConfig::new(16_000, ConvType::Standard, WidthMultiplier::ONE)
        };
        let err = c.validate().unwrap_err().to_string();
        assert!(err.contains("divide 160"), "{err}");
    }

    #[test]
    fn table_shapes_at_16k() {
        let c = NetworkConfig::new(16_000, ConvType::Standard, WidthMultiplier::ONE);
        let g = build(&c, 20_480).unwrap();
        let out = |n: &str| g.node(n).unwrap().output.dims().to_vec();
        assert_eq!(out("Conv1"), [8, 1, 10_240]);
        assert_eq!(out("Conv2"), [64, 1, 5_120]);
        assert_eq!(out("Maxpool1"), [64, 1, 128]);
        assert_eq!(out("Transpose"), [1, 64, 128]);
        assert_eq!(out("Conv3"), [32, 64, 128]);
        assert_eq!(out("Maxpool2"), [32, 32, 64]);
        assert_eq!(out("Conv5"), [64, 32, 64]);
        assert_eq!(out("Maxpool3"), [64, 16, 32]);
        assert_eq!(out("Maxpool4"), [128, 8, 16]);
        assert_eq!(out("Maxpool5"), [256, 4, 8]);
        assert_eq!(out("Conv11"), [512, 4, 8]);
        assert_eq!(out("Maxpool6"), [512, 2, 4]);
        assert_eq!(out("Conv12"), [50, 2, 4]);
        assert_eq!(out("Avgpool1"), [50]);
        assert_eq!(g.output_shape().dims(), &[50]);
        for w in g.nodes.windows(2) {
            assert_eq!(w[0].output, w[1].input);
        }
    }

    #[test]
    fn dwsc_front_end_shapes() {
        let c = NetworkConfig::new(16_000, ConvType::Separable, WidthMultiplier::ONE);
        let g = build(&c, 20_480).unwrap();
        assert_eq!(g.node("Conv1").unwrap().output.dims(), &[16, 1, 10_240]);
        assert_eq!(g.node("Conv2.dw").unwrap().output.dims(), &[16, 1, 2_560]);
        assert_eq!(g.node("Conv2.pw").unwrap().output.dims(), &[64, 1, 2_560]);
        assert_eq!(g.frames(), 128);
        assert!(g.node("Conv3.dw").is_none());
        assert!(g.node("Conv4.dw").is_some());
    }

    #[test]
    fn one_and_a_half_seconds_pool_chain() {
        let c = NetworkConfig::new(16_000, ConvType::Standard, WidthMultiplier::ONE);
        let g = build(&c, 24_000).unwrap();
        assert_eq!(g.frames(), 150);
        let widths: Vec<usize> = (2..=6)
            .map(|i| g.node(&format!("Maxpool{i}")).unwrap().output.dims()[2])
            .collect();
        assert_eq!(widths, [75, 37, 18, 9, 4]);
        assert_eq!(g.node("Conv12").unwrap().output.dims(), &[50, 2, 4]);
    }

    #[test]
    fn head_ignores_width_multiplier() {
        for w in ["1/32", "0.5", "2"] {
            let c = NetworkConfig::new(44_100, ConvType::Separable, wm(w));
            let g = build(&c, 44_100).unwrap();
            assert_eq!(g.node("Conv12").unwrap().output.dims()[0], 50);
        }
    }

    #[test]
    fn rejects_short_input() {
        let c = NetworkConfig::new(16_000, ConvType::Separable, WidthMultiplier::ONE);
        assert_eq!(min_input_len(&c).unwrap(), 160);
        assert!(build(&c, 160).is_ok());
        assert!(matches!(build(&c, 159), Err(Error::Config(_))));
    }

    #[test]
    fn init_is_deterministic() {
        let c = NetworkConfig::new(16_000, ConvType::Separable, wm("0.25"));
        let g = build(&c, 16_000).unwrap();
        let a: WeightSet<f32> = init_weights(&g, 7);
        let b: WeightSet<f32> = init_weights(&g, 7);
        assert_eq!(a, b);
        let c2: WeightSet<f32> = init_weights(&g, 8);
        assert_ne!(a, c2);
        for p in a.params.iter().filter(|p| p.kind == ParamKind::BnGamma) {
            assert!(p.tensor.data().iter().all(|&v| v == 1.0));
        }
        a.check_against(&g).unwrap();
    }

    #[test]
    fn kaiming_variance() {
        let c = NetworkConfig::new(16_000, ConvType::Standard, WidthMultiplier::ONE);
        let g = build(&c, 16_000).unwrap();
        let w: WeightSet<f64> = init_weights(&g, 1);
        let t = w.param("Conv4.weight").unwrap();
        assert!(t.len() >= 10_000);
        let fan_in = 32.0 * 9.0;
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        let want = 2.0 / fan_in;
        assert!((var - want).abs() / want < 0.1, "{var} vs {want}");
    }
}
