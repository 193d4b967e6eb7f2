//! Exact parameter and multiply-accumulate accounting.
//!
//! Counting rules, applied uniformly:
//! - parameters: every stored scalar, weights and biases alike;
//! - MACs: one per multiply in a convolution or linear layer, so a standard
//!   conv costs `out_h*out_w*n^2*c*k`, a depthwise conv `out_h*out_w*n^2*c`,
//!   a pointwise conv `h*w*c*k`, and the head `in*out`;
//! - bias additions, activations, pooling, and residual adds cost zero MACs.

use super::model::ModelSpec;

/// Parameters of a standard `n x n` convolution, `c` in / `k` out channels.
pub fn conv2d_params(kernel: usize, in_ch: usize, out_ch: usize, bias: bool) -> u64 {
    (kernel * kernel * in_ch * out_ch + if bias { out_ch } else { 0 }) as u64
}

/// Parameters of a depthwise `n x n` convolution over `c` channels.
pub fn depthwise_params(kernel: usize, channels: usize, bias: bool) -> u64 {
    (kernel * kernel * channels + if bias { channels } else { 0 }) as u64
}

/// Parameters of a pointwise (1x1) convolution, `c` in / `k` out.
pub fn pointwise_params(in_ch: usize, out_ch: usize, bias: bool) -> u64 {
    (in_ch * out_ch + if bias { out_ch } else { 0 }) as u64
}

/// Parameters of the depthwise-separable factorization of a standard conv.
pub fn separable_params(kernel: usize, in_ch: usize, out_ch: usize, bias: bool) -> u64 {
    depthwise_params(kernel, in_ch, bias) + pointwise_params(in_ch, out_ch, bias)
}

/// Bias-free parameter saving of the separable factorization over the
/// standard convolution: `n^2*c*k - (n^2*c + c*k) = c*(n^2*(k-1) - k)`.
/// Negative for degenerate shapes (e.g. a 1x1 kernel), hence signed.
pub fn separable_saving(kernel: usize, in_ch: usize, out_ch: usize) -> i64 {
    conv2d_params(kernel, in_ch, out_ch, false) as i64
        - separable_params(kernel, in_ch, out_ch, false) as i64
}

/// MACs of a standard convolution at the given output size.
pub fn conv2d_macs(out_h: usize, out_w: usize, kernel: usize, in_ch: usize, out_ch: usize) -> u64 {
    (out_h * out_w) as u64 * (kernel * kernel * in_ch * out_ch) as u64
}

/// MACs of a depthwise convolution at the given output size.
pub fn depthwise_macs(out_h: usize, out_w: usize, kernel: usize, channels: usize) -> u64 {
    (out_h * out_w) as u64 * (kernel * kernel * channels) as u64
}

/// MACs of a pointwise convolution (spatial size unchanged).
pub fn pointwise_macs(h: usize, w: usize, in_ch: usize, out_ch: usize) -> u64 {
    (h * w) as u64 * (in_ch * out_ch) as u64
}

/// MACs of a fully connected layer.
pub fn linear_macs(in_dim: usize, out_dim: usize) -> u64 {
    (in_dim * out_dim) as u64
}

/// Per-layer cost line for reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerCost {
    /// Logical layer name ("stem", "block2.depthwise", "head", ...).
    pub name: String,
    pub params: u64,
    pub macs: u64,
    /// Spatial size this layer produces.
    pub out_h: usize,
    pub out_w: usize,
}

/// Walk the architecture, tracking spatial dimensions, and cost each layer.
pub fn layer_costs(spec: &ModelSpec) -> Vec<LayerCost> {
    let mut costs = Vec::new();
    let (mut h, mut w) = (spec.input.height, spec.input.width);
    let (oh, ow) = (h.div_ceil(spec.stem.stride), w.div_ceil(spec.stem.stride));
    costs.push(LayerCost {
        name: "stem".into(),
        params: conv2d_params(spec.stem.kernel, spec.input.channels, spec.stem.out_channels, true),
        macs: conv2d_macs(oh, ow, spec.stem.kernel, spec.input.channels, spec.stem.out_channels),
        out_h: oh,
        out_w: ow,
    });
    h = oh;
    w = ow;
    for (i, b) in spec.blocks.iter().enumerate() {
        let e = b.expanded_channels();
        if b.expansion > 1 {
            costs.push(LayerCost {
                name: format!("block{i}.expand"),
                params: pointwise_params(b.in_channels, e, true),
                macs: pointwise_macs(h, w, b.in_channels, e),
                out_h: h,
                out_w: w,
            });
        }
        let (oh, ow) = (h.div_ceil(b.stride), w.div_ceil(b.stride));
        costs.push(LayerCost {
            name: format!("block{i}.depthwise"),
            params: depthwise_params(b.kernel, e, true),
            macs: depthwise_macs(oh, ow, b.kernel, e),
            out_h: oh,
            out_w: ow,
        });
        h = oh;
        w = ow;
        costs.push(LayerCost {
            name: format!("block{i}.project"),
            params: pointwise_params(e, b.out_channels, true),
            macs: pointwise_macs(h, w, e, b.out_channels),
            out_h: h,
            out_w: w,
        });
    }
    costs.push(LayerCost {
        name: "head".into(),
        params: (spec.head_in() * spec.head_out + spec.head_out) as u64,
        macs: linear_macs(spec.head_in(), spec.head_out),
        out_h: 1,
        out_w: 1,
    });
    costs
}

/// Total stored scalars of the architecture.
pub fn count_params(spec: &ModelSpec) -> u64 {
    layer_costs(spec).iter().map(|l| l.params).sum()
}

/// Total multiply-accumulates of one forward pass.
pub fn count_macs(spec: &ModelSpec) -> u64 {
    layer_costs(spec).iter().map(|l| l.macs).sum()
}
