//! Convolution, 2x2 max pooling and dense kernels with their backward passes.
//!
//! The slice kernels work on one sample in channel-major layout; the
//! `Tensor` wrappers check shapes for direct use.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeometry {
    pub fn padded(&self) -> (usize, usize) {
        (
            self.height + 2 * self.padding,
            self.width + 2 * self.padding,
        )
    }

    pub fn output(&self) -> Result<(usize, usize)> {
        let (ph, pw) = self.padded();
        if self.kernel == 0 || self.stride == 0 || self.kernel > ph || self.kernel > pw {
            return Err(Error::Shape(format!(
                "kernel {k}x{k} stride {s} does not fit input {h}x{w} with padding {p}",
                k = self.kernel,
                s = self.stride,
                h = self.height,
                w = self.width,
                p = self.padding
            )));
        }
        Ok((
            (ph - self.kernel) / self.stride + 1,
            (pw - self.kernel) / self.stride + 1,
        ))
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }
}

/// Zero-pads each channel plane; returns the input unchanged when `pad == 0`.
pub(crate) fn pad_planes(x: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return x.to_vec();
    }
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = vec![0.0; c * ph * pw];
    for ci in 0..c {
        for y in 0..h {
            let src = &x[(ci * h + y) * w..(ci * h + y + 1) * w];
            let start = (ci * ph + y + pad) * pw + pad;
            out[start..start + w].copy_from_slice(src);
        }
    }
    out
}

pub(crate) fn crop_planes(xp: &[f64], c: usize, h: usize, w: usize, pad: usize) -> Vec<f64> {
    if pad == 0 {
        return xp.to_vec();
    }
    let (ph, pw) = (h + 2 * pad, w + 2 * pad);
    let mut out = Vec::with_capacity(c * h * w);
    for ci in 0..c {
        for y in 0..h {
            let start = (ci * ph + y + pad) * pw + pad;
            out.extend_from_slice(&xp[start..start + w]);
        }
    }
    out
}

/// Cross-correlation of an already padded input.
pub(crate) fn conv_forward_padded(
    g: &ConvGeometry,
    xp: &[f64],
    weight: &[f64],
    bias: &[f64],
) -> Vec<f64> {
    let (ph, pw) = g.padded();
    let (oh, ow) = g.output().expect("validated geometry");
    let (c, k, s) = (g.in_channels, g.kernel, g.stride);
    let mut y = vec![0.0; g.out_channels * oh * ow];
    for o in 0..g.out_channels {
        let out = &mut y[o * oh * ow..(o + 1) * oh * ow];
        out.fill(bias[o]);
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let wv = weight[((o * c + ci) * k + ky) * k + kx];
                    for oy in 0..oh {
                        let base = (ci * ph + oy * s + ky) * pw + kx;
                        let orow = &mut out[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            let xrow = &xp[base..base + ow];
                            for (o, &x) in orow.iter_mut().zip(xrow) {
                                *o += wv * x;
                            }
                        } else {
                            for (ox, o) in orow.iter_mut().enumerate() {
                                *o += wv * xp[base + ox * s];
                            }
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients; returns the padded input gradient
/// when requested.
pub(crate) fn conv_backward_padded(
    g: &ConvGeometry,
    xp: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let (ph, pw) = g.padded();
    let (oh, ow) = g.output().expect("validated geometry");
    let (c, k, s) = (g.in_channels, g.kernel, g.stride);
    let mut gxp = want_input.then(|| vec![0.0; c * ph * pw]);
    for o in 0..g.out_channels {
        let go = &grad_out[o * oh * ow..(o + 1) * oh * ow];
        grad_bias[o] += go.iter().sum::<f64>();
        for ci in 0..c {
            for ky in 0..k {
                for kx in 0..k {
                    let widx = ((o * c + ci) * k + ky) * k + kx;
                    let wv = weight[widx];
                    let mut acc = 0.0;
                    for oy in 0..oh {
                        let base = (ci * ph + oy * s + ky) * pw + kx;
                        let grow = &go[oy * ow..(oy + 1) * ow];
                        if s == 1 {
                            let xrow = &xp[base..base + ow];
                            acc += grow.iter().zip(xrow).map(|(a, b)| a * b).sum::<f64>();
                            if let Some(gx) = gxp.as_mut() {
                                for (d, &gv) in gx[base..base + ow].iter_mut().zip(grow) {
                                    *d += wv * gv;
                                }
                            }
                        } else {
                            for (ox, &gv) in grow.iter().enumerate() {
                                acc += gv * xp[base + ox * s];
                                if let Some(gx) = gxp.as_mut() {
                                    gx[base + ox * s] += wv * gv;
                                }
                            }
                        }
                    }
                    grad_weight[widx] += acc;
                }
            }
        }
    }
    gxp
}

fn conv_geometry(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<ConvGeometry> {
    let (i, w) = (input.shape(), weight.shape());
    if i.len() != 3 || w.len() != 4 || w[1] != i[0] || w[2] != w[3] {
        return Err(Error::Shape(format!(
            "conv2d input {i:?} with weights {w:?}"
        )));
    }
    let g = ConvGeometry {
        in_channels: i[0],
        height: i[1],
        width: i[2],
        out_channels: w[0],
        kernel: w[2],
        stride,
        padding,
    };
    g.output().map_err(|_| {
        Error::Shape(format!(
            "conv2d input {i:?} with weights {w:?}, stride {stride}, padding {padding}"
        ))
    })?;
    Ok(g)
}

/// Cross-correlation of a `(C, H, W)` input with `(O, C, K, K)` weights.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: &[f64],
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = conv_geometry(input, weight, stride, padding)?;
    if bias.len() != g.out_channels {
        return Err(Error::Shape(format!(
            "{} biases for {} output channels",
            bias.len(),
            g.out_channels
        )));
    }
    let (oh, ow) = g.output()?;
    let xp = pad_planes(input.data(), g.in_channels, g.height, g.width, padding);
    Tensor::new(
        vec![g.out_channels, oh, ow],
        conv_forward_padded(&g, &xp, weight.data(), bias),
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor,
    pub weight: Tensor,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<ConvGrads> {
    let g = conv_geometry(input, weight, stride, padding)?;
    let (oh, ow) = g.output()?;
    if grad_out.shape() != [g.out_channels, oh, ow] {
        return Err(Error::Shape(format!(
            "output gradient {:?}, expected {:?}",
            grad_out.shape(),
            [g.out_channels, oh, ow]
        )));
    }
    let xp = pad_planes(input.data(), g.in_channels, g.height, g.width, padding);
    let mut gw = vec![0.0; g.weight_len()];
    let mut gb = vec![0.0; g.out_channels];
    let gxp = conv_backward_padded(
        &g,
        &xp,
        weight.data(),
        grad_out.data(),
        &mut gw,
        &mut gb,
        true,
    )
    .expect("requested");
    Ok(ConvGrads {
        input: Tensor::new(
            input.shape().to_vec(),
            crop_planes(&gxp, g.in_channels, g.height, g.width, padding),
        )?,
        weight: Tensor::new(weight.shape().to_vec(), gw)?,
        bias: gb,
    })
}

/// 2x2 stride-2 max pooling over `(C, H, W)`. Odd sizes behave as if padded
/// with negative infinity on the bottom and right. Returns the pooled values
/// and the flat input index of each window's maximum (first one on ties).
pub(crate) fn pool_forward(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut arg = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_i = (ci * h + 2 * oy) * w + 2 * ox;
                for y in 2 * oy..(2 * oy + 2).min(h) {
                    for xx in 2 * ox..(2 * ox + 2).min(w) {
                        let i = (ci * h + y) * w + xx;
                        if x[i] > x[best_i] {
                            best_i = i;
                        }
                    }
                }
                out.push(x[best_i]);
                arg.push(best_i);
            }
        }
    }
    (out, arg)
}

pub(crate) fn pool_backward(argmax: &[usize], grad_out: &[f64], input_len: usize) -> Vec<f64> {
    let mut gx = vec![0.0; input_len];
    for (&i, &g) in argmax.iter().zip(grad_out) {
        gx[i] += g;
    }
    gx
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub output: Tensor,
    pub argmax: Vec<usize>,
}

pub fn maxpool2(input: &Tensor) -> Result<Pooled> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::Shape(format!(
            "maxpool2 expects (C, H, W), got {s:?}"
        )));
    }
    let (out, argmax) = pool_forward(input.data(), s[0], s[1], s[2]);
    Ok(Pooled {
        output: Tensor::new(vec![s[0], s[1].div_ceil(2), s[2].div_ceil(2)], out)?,
        argmax,
    })
}

/// Routes each output gradient to the position that won its window.
pub fn maxpool2_backward(
    input_shape: &[usize],
    pooled: &Pooled,
    grad_out: &Tensor,
) -> Result<Tensor> {
    if grad_out.shape() != pooled.output.shape() {
        return Err(Error::Shape(format!(
            "gradient {:?} vs pooled {:?}",
            grad_out.shape(),
            pooled.output.shape()
        )));
    }
    let n = input_shape.iter().product();
    Tensor::new(
        input_shape.to_vec(),
        pool_backward(&pooled.argmax, grad_out.data(), n),
    )
}

/// `y = W x + b` with `W` stored `(out, in)` row-major.
pub(crate) fn dense_forward(x: &[f64], weight: &[f64], bias: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    bias.iter()
        .enumerate()
        .map(|(o, &b)| {
            b + weight[o * n_in..(o + 1) * n_in]
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
        })
        .collect()
}

pub(crate) fn dense_backward(
    x: &[f64],
    weight: &[f64],
    grad_out: &[f64],
    grad_weight: &mut [f64],
    grad_bias: &mut [f64],
    want_input: bool,
) -> Option<Vec<f64>> {
    let n_in = x.len();
    let mut gx = want_input.then(|| vec![0.0; n_in]);
    for (o, &g) in grad_out.iter().enumerate() {
        grad_bias[o] += g;
        if g == 0.0 {
            continue;
        }
        for (gw, &v) in grad_weight[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
            *gw += g * v;
        }
        if let Some(gx) = gx.as_mut() {
            for (d, &w) in gx.iter_mut().zip(&weight[o * n_in..(o + 1) * n_in]) {
                *d += g * w;
            }
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random(shape: Vec<usize>, seed: u64) -> Tensor {
        let mut r = rng::seeded(seed, 0);
        let n = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn identity_kernel_copies_input() {
        let x = random(vec![1, 4, 5], 1);
        let w = Tensor::new(vec![1, 1, 1, 1], vec![1.0]).unwrap();
        assert_eq!(conv2d(&x, &w, &[0.0], 1, 0).unwrap(), x);
    }

    #[test]
    fn ones_kernel_sums_window() {
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::new(vec![1, 1, 2, 2], vec![1.0; 4]).unwrap();
        assert_eq!(conv2d(&x, &w, &[0.0], 1, 0).unwrap().data(), &[10.0]);
    }

    #[test]
    fn conv_output_size_with_stride_and_padding() {
        let x = random(vec![2, 7, 9], 2);
        let w = random(vec![3, 2, 3, 3], 3);
        let y = conv2d(&x, &w, &[0.0; 3], 2, 1).unwrap();
        assert_eq!(y.shape(), &[3, 4, 5]);
    }

    #[test]
    fn conv_shape_errors_name_both_shapes() {
        let x = random(vec![2, 4, 4], 2);
        let w = random(vec![3, 3, 3, 3], 3);
        let err = conv2d(&x, &w, &[0.0; 3], 1, 0).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(
            msg.contains("[2, 4, 4]") && msg.contains("[3, 3, 3, 3]"),
            "{msg}"
        );
        let big = random(vec![1, 1, 5, 5], 3);
        assert!(conv2d(&random(vec![1, 3, 3], 1), &big, &[0.0], 1, 0).is_err());
    }

    fn conv_loss(x: &Tensor, w: &Tensor, b: &[f64], up: &Tensor, stride: usize, pad: usize) -> f64 {
        let y = conv2d(x, w, b, stride, pad).unwrap();
        y.data().iter().zip(up.data()).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn conv_backward_matches_finite_differences() {
        for (stride, pad) in [(1, 0), (1, 2), (2, 1)] {
            let x = random(vec![3, 8, 8], 10);
            let w = random(vec![4, 3, 3, 3], 11);
            let b = [0.1, -0.2, 0.3, 0.0];
            let y = conv2d(&x, &w, &b, stride, pad).unwrap();
            let up = random(y.shape().to_vec(), 12);
            let grads = conv2d_backward(&x, &w, stride, pad, &up).unwrap();
            let h = 1e-5;
            let mut worst: f64 = 0.0;
            for i in 0..x.len() {
                let (mut xp, mut xm) = (x.clone(), x.clone());
                xp.data_mut()[i] += h;
                xm.data_mut()[i] -= h;
                let fd = (conv_loss(&xp, &w, &b, &up, stride, pad)
                    - conv_loss(&xm, &w, &b, &up, stride, pad))
                    / (2.0 * h);
                worst = worst.max(rel_err(grads.input.data()[i], fd));
            }
            for i in 0..w.len() {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp.data_mut()[i] += h;
                wm.data_mut()[i] -= h;
                let fd = (conv_loss(&x, &wp, &b, &up, stride, pad)
                    - conv_loss(&x, &wm, &b, &up, stride, pad))
                    / (2.0 * h);
                worst = worst.max(rel_err(grads.weight.data()[i], fd));
            }
            for i in 0..b.len() {
                let fd = up.data()
                    [i * y.shape()[1] * y.shape()[2]..(i + 1) * y.shape()[1] * y.shape()[2]]
                    .iter()
                    .sum::<f64>();
                worst = worst.max(rel_err(grads.bias[i], fd));
            }
            assert!(worst < 1e-4, "stride {stride} pad {pad}: {worst}");
        }
    }

    #[test]
    fn pool_examples() {
        let c = Tensor::new(vec![1, 4, 4], vec![0.7; 16]).unwrap();
        assert_eq!(maxpool2(&c).unwrap().output.data(), &[0.7; 4]);
        let x = Tensor::new(vec![1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(maxpool2(&x).unwrap().output.data(), &[4.0]);
        let odd = Tensor::new(
            vec![1, 3, 3],
            vec![-1.0, -2.0, -3.0, -4.0, -5.0, -6.0, -7.0, -8.0, -9.0],
        )
        .unwrap();
        assert_eq!(
            maxpool2(&odd).unwrap().output.data(),
            &[-1.0, -3.0, -7.0, -9.0]
        );
    }

    #[test]
    fn pool_backward_matches_finite_differences() {
        let x = random(vec![2, 6, 5], 20);
        let pooled = maxpool2(&x).unwrap();
        let up = random(pooled.output.shape().to_vec(), 21);
        let gx = maxpool2_backward(x.shape(), &pooled, &up).unwrap();
        let loss = |t: &Tensor| -> f64 {
            maxpool2(t)
                .unwrap()
                .output
                .data()
                .iter()
                .zip(up.data())
                .map(|(a, b)| a * b)
                .sum()
        };
        let h = 1e-6;
        for i in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp.data_mut()[i] += h;
            xm.data_mut()[i] -= h;
            let fd = (loss(&xp) - loss(&xm)) / (2.0 * h);
            assert!(rel_err(gx.data()[i], fd) < 1e-4, "index {i}");
        }
    }
}
