//! Inference engine for compact multi-task CNNs.
//!
//! The supported architecture family is a standard stem convolution
//! followed by a stack of inverted-residual blocks built from
//! depthwise-separable convolutions, three global-average-pooled feature
//! taps fused by concatenation, and a single linear head. The module also
//! provides exact parameter/MAC accounting for any such architecture and a
//! checksummed binary weight container.
//!
//! Everything is single-threaded and allocation-light; specs and stores
//! are immutable after construction and freely shareable across threads.

mod count;
mod layers;
mod model;
mod tensor;
mod weights;

pub use count::{
    conv2d_macs, conv2d_params, count_macs, count_params, depthwise_macs, depthwise_params,
    layer_costs, linear_macs, pointwise_macs, pointwise_params, separable_params,
    separable_saving, LayerCost,
};
pub use layers::{conv2d, depthwise_conv, global_avg_pool, linear, pointwise_conv, relu6};
pub use model::{
    inverted_residual, BlockSpec, BlockWeights, InputSpec, Model, ModelSpec, StemSpec, TensorInfo,
};
pub use tensor::Tensor3;
#[cfg(test)]
pub(crate) use model::tests_support;
pub use weights::{crc32, f16_bits_to_f32, f32_to_f16_bits, WeightStore, WeightTensor};

/// Errors of the inference engine and its weight container.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MicronetError {
    #[error("{context}: {detail}")]
    ShapeMismatch { context: String, detail: String },
    #[error("required weight tensor {0} is missing")]
    MissingWeight(String),
    #[error("{0} contains non-finite values")]
    NonFinite(String),
    #[error("invalid architecture: {0}")]
    InvalidSpec(String),
    #[error("not a weight file (bad magic)")]
    BadMagic,
    #[error("weight file version {0} not supported")]
    VersionUnsupported(u32),
    #[error("weight file ends mid-record")]
    TruncatedFile,
    #[error("weight file checksum mismatch")]
    ChecksumMismatch,
    #[error("malformed tensor record: {0}")]
    InvalidTensor(String),
    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for MicronetError {
    fn from(e: std::io::Error) -> Self {
        Self::Io(e.to_string())
    }
}
