use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use libm::sqrt;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::layers::{
    conv_backward_padded, conv_forward_padded, crop_planes, dense_backward, dense_forward,
    pad_planes, pool_backward, pool_forward, ConvGeometry,
};
use super::{selu, selu_grad_from_input, sigmoid, Tensor};
use crate::labels::NUM_LABELS;
use crate::rng::{self, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel: usize,
    #[serde(default)]
    pub padding: usize,
    /// Follow the activation with 2x2 max pooling.
    pub pool: bool,
}

/// Layer layout of the multi-label CNN.
///
/// Convolutions (each followed by SeLU and optional pooling) feed dense
/// hidden layers with SeLU, then the embedding layer (SeLU) and finally the
/// sigmoid output layer with one unit per label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Channels, height, width.
    pub input: [usize; 3],
    pub convs: Vec<ConvSpec>,
    pub hidden: Vec<usize>,
    pub embedding_dim: usize,
    pub num_labels: usize,
}

impl NetworkConfig {
    /// Three convolutions with 9, 18 and 36 filters of size 5, 5 and 3, each
    /// followed by SeLU and 2x2 pooling, then dense layers of 1024 and 128
    /// units before the embedding. The first dense width follows from the
    /// input size.
    pub fn baseline(size: usize, embedding_dim: usize) -> Self {
        Self {
            input: [3, size, size],
            convs: vec![
                ConvSpec {
                    out_channels: 9,
                    kernel: 5,
                    padding: 0,
                    pool: true,
                },
                ConvSpec {
                    out_channels: 18,
                    kernel: 5,
                    padding: 0,
                    pool: true,
                },
                ConvSpec {
                    out_channels: 36,
                    kernel: 3,
                    padding: 0,
                    pool: true,
                },
            ],
            hidden: vec![1024, 128],
            embedding_dim,
            num_labels: NUM_LABELS,
        }
    }

    pub fn layers(&self) -> Result<Vec<LayerShape>> {
        if self.embedding_dim == 0 || self.num_labels == 0 || self.input.iter().any(|&d| d == 0) {
            return Err(Error::Shape(format!(
                "degenerate network config {:?}",
                self
            )));
        }
        let [mut c, mut h, mut w] = self.input;
        let mut out = Vec::new();
        for (i, spec) in self.convs.iter().enumerate() {
            let geom = ConvGeometry {
                in_channels: c,
                height: h,
                width: w,
                out_channels: spec.out_channels,
                kernel: spec.kernel,
                stride: 1,
                padding: spec.padding,
            };
            let (oh, ow) = geom
                .output()
                .map_err(|e| Error::Shape(format!("conv{}: {e}", i + 1)))?;
            if spec.out_channels == 0 {
                return Err(Error::Shape(format!("conv{} has no filters", i + 1)));
            }
            out.push(LayerShape::Conv {
                name: format!("conv{}", i + 1),
                geom,
                pool: spec.pool,
            });
            c = spec.out_channels;
            (h, w) = if spec.pool {
                (oh.div_ceil(2), ow.div_ceil(2))
            } else {
                (oh, ow)
            };
        }
        let mut n_in = c * h * w;
        let dense = self.hidden.iter().map(|&n| (n, Activation::Selu)).chain([
            (self.embedding_dim, Activation::Selu),
            (self.num_labels, Activation::Sigmoid),
        ]);
        let n_dense = self.hidden.len() + 2;
        for (i, (n_out, act)) in dense.enumerate() {
            if n_out == 0 {
                return Err(Error::Shape(format!("dense layer {} has no units", i + 1)));
            }
            let name = match i {
                _ if i + 2 == n_dense => String::from("embedding"),
                _ if i + 1 == n_dense => String::from("output"),
                _ => format!("fc{}", i + 1),
            };
            out.push(LayerShape::Dense {
                name,
                n_in,
                n_out,
                activation: act,
            });
            n_in = n_out;
        }
        Ok(out)
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Selu,
    Sigmoid,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerShape {
    Conv {
        name: String,
        geom: ConvGeometry,
        pool: bool,
    },
    Dense {
        name: String,
        n_in: usize,
        n_out: usize,
        activation: Activation,
    },
}

impl LayerShape {
    pub fn name(&self) -> &str {
        match self {
            LayerShape::Conv { name, .. } | LayerShape::Dense { name, .. } => name,
        }
    }

    pub fn weight_shape(&self) -> Vec<usize> {
        match self {
            LayerShape::Conv { geom, .. } => vec![
                geom.out_channels,
                geom.in_channels,
                geom.kernel,
                geom.kernel,
            ],
            LayerShape::Dense { n_in, n_out, .. } => vec![*n_out, *n_in],
        }
    }

    pub fn weight_len(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn bias_len(&self) -> usize {
        match self {
            LayerShape::Conv { geom, .. } => geom.out_channels,
            LayerShape::Dense { n_out, .. } => *n_out,
        }
    }

    fn fans(&self) -> (usize, usize) {
        match self {
            LayerShape::Conv { geom, .. } => {
                let k2 = geom.kernel * geom.kernel;
                (geom.in_channels * k2, geom.out_channels * k2)
            }
            LayerShape::Dense { n_in, n_out, .. } => (*n_in, *n_out),
        }
    }
}

/// Where one layer's weights and biases live in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSlot {
    pub shape: LayerShape,
    pub weight: Range<usize>,
    pub bias: Range<usize>,
}

/// All trainable values, flat, in declaration order: for each layer its
/// weight tensor followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: NetworkConfig,
    slots: Vec<LayerSlot>,
    values: Vec<f64>,
    pub seed: u64,
}

impl ModelParams {
    /// Uniform Glorot initialization with zero biases.
    pub fn init(config: &NetworkConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(config)?;
        params.seed = seed;
        let mut rng = rng::seeded(seed, stream::INIT);
        for slot in &params.slots {
            let (fan_in, fan_out) = slot.shape.fans();
            let limit = sqrt(6.0 / (fan_in + fan_out) as f64);
            for v in &mut params.values[slot.weight.clone()] {
                *v = rng.random_range(-limit..limit);
            }
        }
        Ok(params)
    }

    pub fn zeros(config: &NetworkConfig) -> Result<Self> {
        let mut slots = Vec::new();
        let mut at = 0;
        for shape in config.layers()? {
            let weight = at..at + shape.weight_len();
            let bias = weight.end..weight.end + shape.bias_len();
            at = bias.end;
            slots.push(LayerSlot {
                shape,
                weight,
                bias,
            });
        }
        Ok(Self {
            config: config.clone(),
            slots,
            values: vec![0.0; at],
            seed: 0,
        })
    }

    /// Rebuilds parameters from a flat vector in declaration order.
    pub fn from_values(config: &NetworkConfig, values: Vec<f64>, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(config)?;
        if values.len() != p.values.len() {
            return Err(Error::Shape(format!(
                "{} parameter values for a network of {}",
                values.len(),
                p.values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite parameter".into()));
        }
        p.values = values;
        p.seed = seed;
        Ok(p)
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    pub fn slots(&self) -> &[LayerSlot] {
        &self.slots
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn output_slot(&self) -> &LayerSlot {
        self.slots.last().expect("network has an output layer")
    }

    /// Output probabilities from an embedding using only the last layer.
    pub fn head_probs(&self, embedding: &[f64]) -> Vec<f64> {
        let slot = self.output_slot();
        dense_forward(
            embedding,
            &self.values[slot.weight.clone()],
            &self.values[slot.bias.clone()],
        )
        .into_iter()
        .map(sigmoid)
        .collect()
    }
}

/// Cached activations of one sample.
enum Cache {
    Conv {
        padded_input: Vec<f64>,
        pre: Vec<f64>,
        argmax: Option<Vec<usize>>,
    },
    Dense {
        input: Vec<f64>,
        pre: Vec<f64>,
    },
}

pub(crate) struct SampleTrace {
    caches: Vec<Cache>,
    pub embedding: Vec<f64>,
    pub logits: Vec<f64>,
    pub probs: Vec<f64>,
}

fn check_finite(values: &[f64], layer: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite {
            layer: layer.into(),
        })
    }
}

pub(crate) fn forward_sample(params: &ModelParams, input: &[f64]) -> Result<SampleTrace> {
    let mut x = input.to_vec();
    let mut caches = Vec::with_capacity(params.slots.len());
    let mut embedding = Vec::new();
    let mut logits = Vec::new();
    let n_layers = params.slots.len();
    for (li, slot) in params.slots.iter().enumerate() {
        let w = &params.values[slot.weight.clone()];
        let b = &params.values[slot.bias.clone()];
        match &slot.shape {
            LayerShape::Conv { name, geom, pool } => {
                let xp = pad_planes(&x, geom.in_channels, geom.height, geom.width, geom.padding);
                let pre = conv_forward_padded(geom, &xp, w, b);
                check_finite(&pre, name)?;
                let act: Vec<f64> = pre.iter().map(|&z| selu(z)).collect();
                let (oh, ow) = geom.output()?;
                let (next, argmax) = if *pool {
                    let (pooled, arg) = pool_forward(&act, geom.out_channels, oh, ow);
                    (pooled, Some(arg))
                } else {
                    (act, None)
                };
                caches.push(Cache::Conv {
                    padded_input: xp,
                    pre,
                    argmax,
                });
                x = next;
            }
            LayerShape::Dense {
                name, activation, ..
            } => {
                let pre = dense_forward(&x, w, b);
                check_finite(&pre, name)?;
                let next: Vec<f64> = match activation {
                    Activation::Selu => pre.iter().map(|&z| selu(z)).collect(),
                    Activation::Sigmoid => pre.iter().map(|&z| sigmoid(z)).collect(),
                };
                if li + 2 == n_layers {
                    embedding = next.clone();
                }
                if li + 1 == n_layers {
                    logits = pre.clone();
                }
                caches.push(Cache::Dense {
                    input: core::mem::take(&mut x),
                    pre,
                });
                x = next;
            }
        }
    }
    Ok(SampleTrace {
        caches,
        embedding,
        logits,
        probs: x,
    })
}

/// Accumulates parameter gradients for one sample given dLoss/dlogit.
pub(crate) fn backward_sample(
    params: &ModelParams,
    trace: &SampleTrace,
    grad_logits: &[f64],
    grads: &mut [f64],
) {
    let mut g = grad_logits.to_vec();
    let n_layers = params.slots.len();
    for (li, (slot, cache)) in params.slots.iter().zip(&trace.caches).enumerate().rev() {
        let w = &params.values[slot.weight.clone()];
        let want_input = li > 0;
        let (gw_range, gb_range) = (slot.weight.clone(), slot.bias.clone());
        match (&slot.shape, cache) {
            (LayerShape::Dense { .. }, Cache::Dense { input, pre }) => {
                if li + 1 != n_layers {
                    for (gv, &z) in g.iter_mut().zip(pre) {
                        *gv *= selu_grad_from_input(z);
                    }
                }
                let (gw, gb) = split_grads(grads, gw_range, gb_range);
                match dense_backward(input, w, &g, gw, gb, want_input) {
                    Some(gx) => g = gx,
                    None => return,
                }
            }
            (
                LayerShape::Conv { geom, .. },
                Cache::Conv {
                    padded_input,
                    pre,
                    argmax,
                },
            ) => {
                let mut gact = match argmax {
                    Some(arg) => pool_backward(arg, &g, pre.len()),
                    None => core::mem::take(&mut g),
                };
                for (gv, &z) in gact.iter_mut().zip(pre) {
                    *gv *= selu_grad_from_input(z);
                }
                let (gw, gb) = split_grads(grads, gw_range, gb_range);
                match conv_backward_padded(geom, padded_input, w, &gact, gw, gb, want_input) {
                    Some(gxp) => {
                        g = crop_planes(
                            &gxp,
                            geom.in_channels,
                            geom.height,
                            geom.width,
                            geom.padding,
                        )
                    }
                    None => return,
                }
            }
            _ => unreachable!("cache matches layer kind"),
        }
    }
}

fn split_grads(grads: &mut [f64], w: Range<usize>, b: Range<usize>) -> (&mut [f64], &mut [f64]) {
    debug_assert_eq!(w.end, b.start);
    let (head, tail) = grads[w.start..b.end].split_at_mut(w.len());
    (head, tail)
}

/// Embeddings and label probabilities for a batch, both row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub n: usize,
    pub embedding_dim: usize,
    pub num_labels: usize,
    pub embeddings: Vec<f64>,
    pub probs: Vec<f64>,
}

impl ForwardOutput {
    pub fn embedding(&self, i: usize) -> &[f64] {
        &self.embeddings[i * self.embedding_dim..(i + 1) * self.embedding_dim]
    }

    pub fn probs_of(&self, i: usize) -> &[f64] {
        &self.probs[i * self.num_labels..(i + 1) * self.num_labels]
    }
}

/// Embedding of one flattened CHW sample.
pub(crate) fn embed_input(params: &ModelParams, input: &[f64]) -> Result<Vec<f64>> {
    let len = params.config().input_len();
    if input.len() != len {
        return Err(Error::Shape(format!(
            "sample of {} values, expected {len}",
            input.len()
        )));
    }
    Ok(forward_sample(params, input)?.embedding)
}

/// Runs a `(N, C, H, W)` batch through the network.
pub fn forward(params: &ModelParams, batch: &Tensor) -> Result<ForwardOutput> {
    let cfg = &params.config;
    let s = batch.shape();
    if s.len() != 4 || s[1..] != cfg.input {
        return Err(Error::Shape(format!(
            "batch {s:?} does not match network input {:?}",
            cfg.input
        )));
    }
    let per = cfg.input_len();
    let mut out = ForwardOutput {
        n: s[0],
        embedding_dim: cfg.embedding_dim,
        num_labels: cfg.num_labels,
        embeddings: Vec::with_capacity(s[0] * cfg.embedding_dim),
        probs: Vec::with_capacity(s[0] * cfg.num_labels),
    };
    for sample in batch.data().chunks_exact(per) {
        let t = forward_sample(params, sample)?;
        out.embeddings.extend_from_slice(&t.embedding);
        out.probs.extend_from_slice(&t.probs);
    }
    Ok(out)
}
