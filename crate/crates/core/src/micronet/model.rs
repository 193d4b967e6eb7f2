//! Architecture description and the forward pass.

use serde::{Deserialize, Serialize};

use crate::num::{real, Real};

use super::layers::{conv2d, depthwise_conv, global_avg_pool, linear, pointwise_conv, relu6};
use super::tensor::Tensor3;
use super::weights::WeightStore;
use super::MicronetError;

/// One inverted-residual block: pointwise expand (`c -> c*t`, skipped when
/// `t = 1`) -> ReLU6 -> depthwise `n x n` stride `s` -> ReLU6 -> pointwise
/// project (`c*t -> k`, linear). The input is added back iff `s = 1` and
/// `c = k`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    /// Channel expansion factor `t >= 1`.
    pub expansion: usize,
    /// Spatial stride of the depthwise stage, 1 or 2.
    pub stride: usize,
    /// Depthwise kernel extent.
    #[serde(default = "default_kernel")]
    pub kernel: usize,
}

fn default_kernel() -> usize {
    3
}

impl BlockSpec {
    pub fn has_residual(&self) -> bool {
        self.stride == 1 && self.in_channels == self.out_channels
    }

    pub fn expanded_channels(&self) -> usize {
        self.in_channels * self.expansion
    }

    fn validate(&self, index: usize) -> Result<(), MicronetError> {
        let ok = self.in_channels > 0
            && self.out_channels > 0
            && self.expansion >= 1
            && (self.stride == 1 || self.stride == 2)
            && self.kernel >= 1;
        if ok {
            Ok(())
        } else {
            Err(MicronetError::InvalidSpec(format!(
                "block{index}: channels/expansion/stride/kernel out of range"
            )))
        }
    }
}

/// Leading standard convolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StemSpec {
    pub out_channels: usize,
    #[serde(default = "default_kernel")]
    pub kernel: usize,
    pub stride: usize,
}

/// Expected input tensor shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

/// Complete architecture: stem, block stack, the tap points whose pooled
/// features feed the head, and the head output size.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    pub input: InputSpec,
    pub stem: StemSpec,
    pub blocks: Vec<BlockSpec>,
    /// Block indices producing the pooled multi-scale features, strictly
    /// increasing; the last one must be the final block. The shipped
    /// architectures use three taps. Empty exactly when `blocks` is empty
    /// (degenerate stem+head model); the head then pools the stem output.
    pub taps: Vec<usize>,
    pub head_out: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), MicronetError> {
        let err = |msg: String| Err(MicronetError::InvalidSpec(msg));
        if self.input.channels == 0 || self.input.height == 0 || self.input.width == 0 {
            return err("input dimensions must be positive".into());
        }
        if self.stem.out_channels == 0 || self.stem.kernel == 0 || !(1..=2).contains(&self.stem.stride) {
            return err("stem out of range".into());
        }
        let mut chain = self.stem.out_channels;
        for (i, b) in self.blocks.iter().enumerate() {
            b.validate(i)?;
            if b.in_channels != chain {
                return err(format!(
                    "block{i} expects {} input channels but the chain provides {chain}",
                    b.in_channels
                ));
            }
            chain = b.out_channels;
        }
        if self.blocks.is_empty() {
            if !self.taps.is_empty() {
                return err("taps must be empty when there are no blocks".into());
            }
        } else {
            if self.taps.is_empty() {
                return err("at least one tap required".into());
            }
            if !self.taps.windows(2).all(|w| w[0] < w[1]) {
                return err("tap indices must be strictly increasing".into());
            }
            if *self.taps.last().unwrap() != self.blocks.len() - 1 {
                return err("last tap must be the final block".into());
            }
        }
        if self.head_out == 0 {
            return err("head output size must be positive".into());
        }
        Ok(())
    }

    /// Pooled feature length feeding the head: sum of tapped channel
    /// counts, or the stem width when there are no blocks.
    pub fn head_in(&self) -> usize {
        if self.blocks.is_empty() {
            self.stem.out_channels
        } else {
            self.taps.iter().map(|&i| self.blocks[i].out_channels).sum()
        }
    }

    /// Named weight tensors required by this architecture, with shapes.
    /// Iteration order matches execution order.
    pub fn tensor_inventory(&self) -> Vec<TensorInfo> {
        let mut inv = Vec::new();
        let mut push = |name: String, dims: Vec<usize>| inv.push(TensorInfo { name, dims });
        push(
            "stem.weight".into(),
            vec![self.stem.out_channels, self.input.channels, self.stem.kernel, self.stem.kernel],
        );
        push("stem.bias".into(), vec![self.stem.out_channels]);
        for (i, b) in self.blocks.iter().enumerate() {
            let e = b.expanded_channels();
            if b.expansion > 1 {
                push(format!("block{i}.expand.weight"), vec![e, b.in_channels]);
                push(format!("block{i}.expand.bias"), vec![e]);
            }
            push(format!("block{i}.depthwise.weight"), vec![e, b.kernel, b.kernel]);
            push(format!("block{i}.depthwise.bias"), vec![e]);
            push(format!("block{i}.project.weight"), vec![b.out_channels, e]);
            push(format!("block{i}.project.bias"), vec![b.out_channels]);
        }
        push("head.weight".into(), vec![self.head_out, self.head_in()]);
        push("head.bias".into(), vec![self.head_out]);
        inv
    }
}

/// Name and shape of one required weight tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorInfo {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorInfo {
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Weights of one inverted-residual block, already at working precision.
#[derive(Debug, Clone)]
pub struct BlockWeights<F> {
    /// Pointwise expansion; absent when `expansion = 1`.
    pub expand: Option<(Vec<F>, Vec<F>)>,
    pub depthwise: (Vec<F>, Vec<F>),
    pub project: (Vec<F>, Vec<F>),
}

/// Run one inverted-residual block.
pub fn inverted_residual<F: Real>(
    x: &Tensor3<F>,
    spec: &BlockSpec,
    w: &BlockWeights<F>,
) -> Result<Tensor3<F>, MicronetError> {
    if x.channels() != spec.in_channels {
        return Err(MicronetError::ShapeMismatch {
            context: "inverted_residual".into(),
            detail: format!("input has {} channels, block expects {}", x.channels(), spec.in_channels),
        });
    }
    let expanded = match (&w.expand, spec.expansion) {
        (Some((ew, eb)), t) if t > 1 => {
            let mut e = pointwise_conv(x, ew, Some(eb), spec.expanded_channels())?;
            relu6(&mut e);
            e
        }
        (None, 1) => x.clone(),
        _ => {
            return Err(MicronetError::ShapeMismatch {
                context: "inverted_residual".into(),
                detail: "expansion weights inconsistent with the block spec".into(),
            })
        }
    };
    let mut d = depthwise_conv(&expanded, &w.depthwise.0, Some(&w.depthwise.1), spec.kernel, spec.stride)?;
    relu6(&mut d);
    let mut p = pointwise_conv(&d, &w.project.0, Some(&w.project.1), spec.out_channels)?;
    if spec.has_residual() {
        for (o, i) in p.data_mut().iter_mut().zip(x.data()) {
            *o += *i;
        }
    }
    Ok(p)
}

/// An architecture bound to its weights at working precision `F`.
///
/// Weight files store 32-bit floats; binding converts once up front so the
/// forward pass allocates nothing per layer beyond its output tensor.
#[derive(Debug, Clone)]
pub struct Model<F> {
    spec: ModelSpec,
    stem: (Vec<F>, Vec<F>),
    blocks: Vec<BlockWeights<F>>,
    head: (Vec<F>, Vec<F>),
}

impl<F: Real> Model<F> {
    /// Bind `spec` to `store`, checking that every required tensor exists
    /// with exactly the expected shape.
    pub fn from_store(spec: ModelSpec, store: &WeightStore) -> Result<Self, MicronetError> {
        spec.validate()?;
        let fetch = |name: &str, dims: &[usize]| -> Result<Vec<F>, MicronetError> {
            let t = store
                .get(name)
                .ok_or_else(|| MicronetError::MissingWeight(name.into()))?;
            if t.dims != dims {
                return Err(MicronetError::ShapeMismatch {
                    context: name.into(),
                    detail: format!("stored dims {:?}, expected {:?}", t.dims, dims),
                });
            }
            Ok(t.data.iter().map(|&v| real(v as f64)).collect())
        };
        let mut stem = None;
        let mut head = None;
        let mut blocks: Vec<BlockWeights<F>> = spec
            .blocks
            .iter()
            .map(|_| BlockWeights { expand: None, depthwise: (vec![], vec![]), project: (vec![], vec![]) })
            .collect();
        for info in spec.tensor_inventory() {
            let data = fetch(&info.name, &info.dims)?;
            match info.name.split('.').collect::<Vec<_>>()[..] {
                ["stem", "weight"] => stem = Some((data, vec![])),
                ["stem", "bias"] => stem.as_mut().unwrap().1 = data,
                ["head", "weight"] => head = Some((data, vec![])),
                ["head", "bias"] => head.as_mut().unwrap().1 = data,
                [block, stage, field] => {
                    let i: usize = block["block".len()..].parse().unwrap();
                    let b = &mut blocks[i];
                    match (stage, field) {
                        ("expand", "weight") => b.expand = Some((data, vec![])),
                        ("expand", "bias") => b.expand.as_mut().unwrap().1 = data,
                        ("depthwise", "weight") => b.depthwise.0 = data,
                        ("depthwise", "bias") => b.depthwise.1 = data,
                        ("project", "weight") => b.project.0 = data,
                        ("project", "bias") => b.project.1 = data,
                        _ => unreachable!("inventory names are fixed"),
                    }
                }
                _ => unreachable!("inventory names are fixed"),
            }
        }
        Ok(Self { spec, stem: stem.unwrap(), blocks, head: head.unwrap() })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Full forward pass: stem -> block stack with pooled taps ->
    /// concatenated feature vector -> linear head. Returns pre-activation
    /// outputs; applying sigmoids/softmaxes is the decoder's job.
    pub fn forward(&self, image: &Tensor3<F>) -> Result<Vec<F>, MicronetError> {
        let want = (self.spec.input.channels, self.spec.input.height, self.spec.input.width);
        if image.shape() != want {
            return Err(MicronetError::ShapeMismatch {
                context: "forward".into(),
                detail: format!("input shape {:?}, model expects {:?}", image.shape(), want),
            });
        }
        let mut x = conv2d(
            image,
            &self.stem.0,
            Some(&self.stem.1),
            self.spec.stem.out_channels,
            self.spec.stem.kernel,
            self.spec.stem.stride,
        )?;
        relu6(&mut x);
        let mut features: Vec<F> = Vec::with_capacity(self.spec.head_in());
        if self.spec.blocks.is_empty() {
            features.extend(global_avg_pool(&x));
        }
        for (i, (spec, w)) in self.spec.blocks.iter().zip(&self.blocks).enumerate() {
            x = inverted_residual(&x, spec, w)?;
            if self.spec.taps.contains(&i) {
                features.extend(global_avg_pool(&x));
            }
        }
        linear(&features, &self.head.0, Some(&self.head.1), self.spec.head_out)
    }
}
