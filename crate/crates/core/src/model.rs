//! Executes a layer graph over batches of waveforms, with a cached forward
//! trace for backpropagation.

use rand::Rng;

use crate::builder::{build, init_weights, min_input_len, LayerGraph, LayerSpec, NetworkConfig, WeightSet};
use crate::error::{Error, Result};
use crate::layers::{
    avgpool_global, avgpool_global_backward, batchnorm_backward, batchnorm_forward, batchnorm_infer,
    conv1d_backward, conv1d_forward, conv2d_backward, conv2d_forward, dropout_backward, dropout_train,
    maxpool_backward, maxpool_forward, relu_backward, relu_forward, softmax, BatchNormContext,
    BatchNormState, MaxPoolContext, Mode,
};
use crate::tensor::{Real, Tensor};

/// Per-node data kept by a training-mode forward pass.
#[derive(Debug, Clone)]
enum Saved<T> {
    Conv(Tensor<T>),
    BatchNorm(BatchNormContext<T>),
    /// ReLU output; positive exactly where the input was.
    Relu(Tensor<T>),
    MaxPool(MaxPoolContext),
    Transpose,
    Dropout(Vec<T>),
    AvgPool(Vec<usize>),
}

/// Result of a forward pass. Only training-mode traces can be
/// backpropagated.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    mode: Mode,
    graph: LayerGraph,
    /// `(node index, first param index, saved data)` in execution order.
    saved: Vec<(usize, usize, Saved<T>)>,
    logits: Tensor<T>,
}

impl<T: Real> Trace<T> {
    /// Pre-softmax class scores, `(N, K)`.
    pub fn logits(&self) -> &Tensor<T> {
        &self.logits
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn probabilities(&self) -> Result<Tensor<T>> {
        softmax(&self.logits)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    config: NetworkConfig,
    weights: WeightSet<T>,
}

impl<T: Real> Model<T> {
    /// Freshly initialized network.
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let graph = build(config, min_input_len(config)?)?;
        Ok(Model {
            config: config.clone(),
            weights: init_weights(&graph, seed),
        })
    }

    pub fn from_weights(config: &NetworkConfig, weights: WeightSet<T>) -> Result<Self> {
        let graph = build(config, min_input_len(config)?)?;
        weights.check_against(&graph)?;
        Ok(Model {
            config: config.clone(),
            weights,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn weights(&self) -> &WeightSet<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut WeightSet<T> {
        &mut self.weights
    }

    pub fn into_weights(self) -> WeightSet<T> {
        self.weights
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Graph for inputs of `input_len` samples.
    pub fn graph(&self, input_len: usize) -> Result<LayerGraph> {
        build(&self.config, input_len)
    }

    /// Inference-mode logits for a `(N, L)` batch of waveforms. Running
    /// statistics are read, never written.
    pub fn infer_logits(&self, batch: &Tensor<T>) -> Result<Tensor<T>> {
        let (graph, mut x) = self.prepare(batch)?;
        let (mut pi, mut bi) = (0, 0);
        for node in &graph.nodes {
            let w = &self.weights;
            x = match &node.spec {
                LayerSpec::Conv1d(s) => {
                    let bias = s.has_bias.then(|| &w.params[pi + 1].tensor);
                    conv1d_forward(s, &x, &w.params[pi].tensor, bias)?
                }
                LayerSpec::Conv2d(s) => {
                    let bias = s.has_bias.then(|| &w.params[pi + 1].tensor);
                    conv2d_forward(s, &x, &w.params[pi].tensor, bias)?
                }
                LayerSpec::BatchNorm(s) => batchnorm_infer(
                    s,
                    &x,
                    &w.params[pi].tensor,
                    &w.params[pi + 1].tensor,
                    &w.buffers[bi].tensor,
                    &w.buffers[bi + 1].tensor,
                )?,
                LayerSpec::Relu => relu_forward(&x),
                LayerSpec::MaxPool(s) => maxpool_forward(s, &x)?.0,
                LayerSpec::Transpose => x.transpose_cw()?,
                LayerSpec::Dropout(_) => x,
                LayerSpec::GlobalAvgPool => avgpool_global(&x)?,
                LayerSpec::Softmax => break,
            };
            pi += node.params().len();
            bi += node.buffers().len();
            if !x.is_finite() {
                return Err(non_finite(&node.name));
            }
        }
        Ok(x)
    }

    /// Class distribution for a single waveform of any length of at least
    /// one frame.
    pub fn predict(&self, samples: &[T]) -> Result<Vec<T>> {
        let batch = Tensor::from_vec([1, samples.len()], samples.to_vec())?;
        Ok(softmax(&self.infer_logits(&batch)?)?.into_vec())
    }

    /// Forward pass over a `(N, L)` batch. In training mode batch norm uses
    /// batch statistics and updates its running statistics, dropout draws
    /// its mask from `rng`, and everything needed by [`Model::backward`] is
    /// kept.
    pub fn forward<R: Rng + ?Sized>(&mut self, batch: &Tensor<T>, mode: Mode, rng: &mut R) -> Result<Trace<T>> {
        if mode == Mode::Infer {
            let logits = self.infer_logits(batch)?;
            return Ok(Trace {
                mode,
                graph: self.graph(batch.dims()[batch.dims().len() - 1])?,
                saved: Vec::new(),
                logits,
            });
        }
        let (graph, mut x) = self.prepare(batch)?;
        let mut saved = Vec::with_capacity(graph.nodes.len());
        let (mut pi, mut bi) = (0, 0);
        for (ni, node) in graph.nodes.iter().enumerate() {
            let w = &mut self.weights;
            let (y, s) = match &node.spec {
                LayerSpec::Conv1d(s) => {
                    let bias = s.has_bias.then(|| &w.params[pi + 1].tensor);
                    let y = conv1d_forward(s, &x, &w.params[pi].tensor, bias)?;
                    (y, Saved::Conv(x))
                }
                LayerSpec::Conv2d(s) => {
                    let bias = s.has_bias.then(|| &w.params[pi + 1].tensor);
                    let y = conv2d_forward(s, &x, &w.params[pi].tensor, bias)?;
                    (y, Saved::Conv(x))
                }
                LayerSpec::BatchNorm(s) => {
                    let (rm, rv) = w.buffers[bi..bi + 2].split_at_mut(1);
                    let state = BatchNormState {
                        gamma: &w.params[pi].tensor,
                        beta: &w.params[pi + 1].tensor,
                        running_mean: &mut rm[0].tensor,
                        running_var: &mut rv[0].tensor,
                    };
                    let (y, ctx) = batchnorm_forward(s, &x, state, Mode::Train)?;
                    (y, Saved::BatchNorm(ctx.expect("train mode keeps context")))
                }
                LayerSpec::Relu => {
                    let y = relu_forward(&x);
                    (y.clone(), Saved::Relu(y))
                }
                LayerSpec::MaxPool(s) => {
                    let (y, ctx) = maxpool_forward(s, &x)?;
                    (y, Saved::MaxPool(ctx))
                }
                LayerSpec::Transpose => (x.transpose_cw()?, Saved::Transpose),
                LayerSpec::Dropout(s) => {
                    let (y, mask) = dropout_train(s, &x, rng);
                    (y, Saved::Dropout(mask))
                }
                LayerSpec::GlobalAvgPool => (avgpool_global(&x)?, Saved::AvgPool(x.dims().to_vec())),
                LayerSpec::Softmax => break,
            };
            if !y.is_finite() {
                return Err(non_finite(&node.name));
            }
            saved.push((ni, pi, s));
            pi += node.params().len();
            bi += node.buffers().len();
            x = y;
        }
        Ok(Trace {
            mode,
            graph,
            saved,
            logits: x,
        })
    }

    /// Gradients of a scalar loss with respect to every learnable tensor, in
    /// the order of `weights().params`, given `d loss / d logits`.
    pub fn backward(&self, trace: &Trace<T>, grad_logits: &Tensor<T>) -> Result<Vec<Tensor<T>>> {
        if trace.mode != Mode::Train {
            return Err(Error::State(
                "backward needs a training-mode forward trace".into(),
            ));
        }
        if grad_logits.shape() != trace.logits.shape() {
            return Err(Error::Shape(format!(
                "logit gradient {} does not match logits {}",
                grad_logits.shape(),
                trace.logits.shape()
            )));
        }
        let w = &self.weights;
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; w.params.len()];
        let mut g = grad_logits.clone();
        for (ni, pi, saved) in trace.saved.iter().rev() {
            let node = &trace.graph.nodes[*ni];
            g = match (&node.spec, saved) {
                (LayerSpec::Conv1d(s), Saved::Conv(x)) => {
                    let cg = conv1d_backward(s, x, &w.params[*pi].tensor, &g)?;
                    grads[*pi] = Some(cg.weight);
                    if let Some(b) = cg.bias {
                        grads[pi + 1] = Some(b);
                    }
                    cg.input
                }
                (LayerSpec::Conv2d(s), Saved::Conv(x)) => {
                    let cg = conv2d_backward(s, x, &w.params[*pi].tensor, &g)?;
                    grads[*pi] = Some(cg.weight);
                    if let Some(b) = cg.bias {
                        grads[pi + 1] = Some(b);
                    }
                    cg.input
                }
                (LayerSpec::BatchNorm(s), Saved::BatchNorm(ctx)) => {
                    let bg = batchnorm_backward(s, ctx, &w.params[*pi].tensor, &g)?;
                    grads[*pi] = Some(bg.gamma);
                    grads[pi + 1] = Some(bg.beta);
                    bg.input
                }
                (LayerSpec::Relu, Saved::Relu(y)) => relu_backward(y, &g)?,
                (LayerSpec::MaxPool(_), Saved::MaxPool(ctx)) => maxpool_backward(ctx, &g)?,
                (LayerSpec::Transpose, Saved::Transpose) => g.transpose_wc()?,
                (LayerSpec::Dropout(_), Saved::Dropout(mask)) => dropout_backward(mask, &g)?,
                (LayerSpec::GlobalAvgPool, Saved::AvgPool(dims)) => avgpool_global_backward(dims, &g)?,
                _ => {
                    return Err(Error::State(format!(
                        "trace entry does not match node {}",
                        node.name
                    )))
                }
            };
        }
        grads
            .into_iter()
            .zip(&w.params)
            .map(|(g, p)| {
                g.ok_or_else(|| Error::State(format!("no gradient reached {}", p.name)))
            })
            .collect()
    }

    /// Validates a `(N, L)` batch and returns its graph and the `(N,1,1,L)`
    /// network input.
    fn prepare(&self, batch: &Tensor<T>) -> Result<(LayerGraph, Tensor<T>)> {
        let (n, len) = match *batch.dims() {
            [l] => (1, l),
            [n, l] => (n, l),
            _ => {
                return Err(Error::Shape(format!(
                    "expected a (N, samples) batch, got {}",
                    batch.shape()
                )))
            }
        };
        if !batch.is_finite() {
            return Err(Error::Numeric("input waveform has non-finite samples".into()));
        }
        let graph = self.graph(len)?;
        let x = batch.clone().reshape([n, 1, 1, len])?;
        Ok((graph, x))
    }
}

fn non_finite(layer: &str) -> Error {
    Error::Numeric(format!("non-finite activations first appear at layer {layer}"))
}
