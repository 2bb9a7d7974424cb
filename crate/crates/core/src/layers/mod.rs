//! Layer primitives with hand-written forward and backward passes.

mod activation;
mod conv;
mod norm;
mod pool;

pub use activation::{
    dropout_backward, dropout_train, relu_backward, relu_forward, softmax, DropoutSpec,
};
pub use conv::{
    conv1d_backward, conv1d_forward, conv2d_backward, conv2d_forward, depthwise_forward,
    pointwise_forward, Conv1dSpec, Conv2dSpec, ConvGrads,
};
pub use norm::{
    batchnorm_backward, batchnorm_forward, batchnorm_infer, BatchNormContext, BatchNormGrads,
    BatchNormSpec, BatchNormState, Mode,
};
pub use pool::{
    avgpool_global, avgpool_global_backward, maxpool_backward, maxpool_forward, MaxPoolContext,
    PoolKind, PoolSpec,
};
