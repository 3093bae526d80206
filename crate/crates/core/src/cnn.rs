//! Small convolutional regressor shared by the happiness and aesthetics
//! channels.
//!
//! Layout: `conv (valid) -> ReLU [-> 2x2 max-pool]` per convolution layer,
//! then flatten and dense layers with ReLU on all but the final scalar
//! output. Parameters are stored as two flat vectors: every convolution
//! kernel and bias (`conv_params`) and every dense weight and bias
//! (`dense_params`), so the two groups can be updated independently.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::modelfile::{ModelReader, ModelWriter};
use crate::raster::{resize_bilinear, to_grayscale, RasterImage, RealGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub filters: usize,
    pub kernel: usize,
    pub stride: usize,
    /// 2x2 max-pool after the activation.
    pub pool: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackboneSpec {
    /// Side of the square single-channel input.
    pub input_size: usize,
    pub conv: Vec<ConvSpec>,
    /// Dense widths; the last one must be 1.
    pub dense: Vec<usize>,
}

impl Default for BackboneSpec {
    fn default() -> Self {
        let layer = ConvSpec {
            filters: 8,
            kernel: 3,
            stride: 1,
            pool: true,
        };
        Self {
            input_size: 64,
            conv: vec![layer, layer],
            dense: vec![32, 1],
        }
    }
}

/// Channel-major stack of feature maps.
#[derive(Debug, Clone, PartialEq)]
pub struct Maps {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Maps {
    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![0.0; channels * height * width],
        }
    }

    #[inline]
    fn idx(&self, c: usize, y: usize, x: usize) -> usize {
        (c * self.height + y) * self.width + x
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }
}

/// Grayscale, scaled to `[0, 1]`, bilinearly resized to `size x size`.
pub fn prepare_input(img: &RasterImage, size: usize) -> Result<Maps> {
    let luma = to_grayscale(img);
    let grid = RealGrid::new(
        luma.width(),
        luma.height(),
        luma.data().iter().map(|v| v / 255.0).collect(),
    )?;
    let resized = resize_bilinear(&grid, size, size)?;
    Ok(Maps {
        channels: 1,
        height: size,
        width: size,
        data: resized.into_data(),
    })
}

#[derive(Debug, Clone, PartialEq)]
struct ConvShape {
    in_ch: usize,
    out_ch: usize,
    kernel: usize,
    stride: usize,
    in_size: (usize, usize),
    out_size: (usize, usize),
    pool: bool,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct DenseShape {
    inputs: usize,
    outputs: usize,
    w_off: usize,
    b_off: usize,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    conv: Vec<ConvShape>,
    dense: Vec<DenseShape>,
    conv_len: usize,
    dense_len: usize,
}

impl BackboneSpec {
    fn layout(&self) -> Result<Layout> {
        if self.conv.is_empty() {
            return Err(Error::InvalidArgument("at least one conv layer".into()));
        }
        if self.dense.last() != Some(&1) {
            return Err(Error::InvalidArgument(
                "dense widths must end with 1".into(),
            ));
        }
        let (mut h, mut w, mut ch) = (self.input_size, self.input_size, 1usize);
        let mut conv = Vec::new();
        let mut off = 0;
        for (i, spec) in self.conv.iter().enumerate() {
            if spec.filters == 0 || spec.kernel == 0 || spec.stride == 0 {
                return Err(Error::InvalidArgument(format!("conv layer {i}: zero size")));
            }
            if h < spec.kernel || w < spec.kernel {
                return Err(Error::DimensionMismatch(format!(
                    "conv layer {i}: {w}x{h} input smaller than kernel {}",
                    spec.kernel
                )));
            }
            let oh = (h - spec.kernel) / spec.stride + 1;
            let ow = (w - spec.kernel) / spec.stride + 1;
            if spec.pool && (oh < 2 || ow < 2) {
                return Err(Error::DimensionMismatch(format!(
                    "conv layer {i}: {ow}x{oh} output too small to pool"
                )));
            }
            let n_w = spec.filters * ch * spec.kernel * spec.kernel;
            conv.push(ConvShape {
                in_ch: ch,
                out_ch: spec.filters,
                kernel: spec.kernel,
                stride: spec.stride,
                in_size: (h, w),
                out_size: (oh, ow),
                pool: spec.pool,
                w_off: off,
                b_off: off + n_w,
            });
            off += n_w + spec.filters;
            ch = spec.filters;
            (h, w) = if spec.pool {
                (oh / 2, ow / 2)
            } else {
                (oh, ow)
            };
        }
        let conv_len = off;
        let mut inputs = ch * h * w;
        let mut dense = Vec::new();
        off = 0;
        for &outputs in &self.dense {
            if outputs == 0 {
                return Err(Error::InvalidArgument("zero dense width".into()));
            }
            dense.push(DenseShape {
                inputs,
                outputs,
                w_off: off,
                b_off: off + inputs * outputs,
            });
            off += inputs * outputs + outputs;
            inputs = outputs;
        }
        Ok(Layout {
            conv,
            dense,
            conv_len,
            dense_len: off,
        })
    }
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    /// Input to each conv layer (the image for layer 0).
    pub conv_inputs: Vec<Maps>,
    pub conv_pre: Vec<Maps>,
    pub conv_post: Vec<Maps>,
    /// Argmax source index (into `conv_post[l]`) of each pooled cell.
    pool_argmax: Vec<Option<Vec<usize>>>,
    pub dense_inputs: Vec<Vec<f64>>,
    pub dense_pre: Vec<Vec<f64>>,
    pub prediction: f64,
}

impl Trace {
    /// Activation maps of the last convolution layer (before any pooling).
    pub fn final_maps(&self) -> &Maps {
        self.conv_post.last().expect("at least one conv layer")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Backbone {
    spec: BackboneSpec,
    layout: Layout,
    pub conv_params: Vec<f64>,
    pub dense_params: Vec<f64>,
}

impl Backbone {
    pub fn zeros(spec: BackboneSpec) -> Result<Self> {
        let layout = spec.layout()?;
        Ok(Self {
            conv_params: vec![0.0; layout.conv_len],
            dense_params: vec![0.0; layout.dense_len],
            spec,
            layout,
        })
    }

    /// He-uniform weights, biases 0.01, final bias `output_bias`.
    pub fn init<R: Rng + ?Sized>(
        spec: BackboneSpec,
        rng: &mut R,
        output_bias: f64,
    ) -> Result<Self> {
        let mut net = Self::zeros(spec)?;
        for l in &net.layout.conv {
            let fan_in = (l.in_ch * l.kernel * l.kernel) as f64;
            let limit = (6.0 / fan_in).sqrt();
            for p in &mut net.conv_params[l.w_off..l.b_off] {
                *p = rng.random_range(-limit..limit);
            }
            net.conv_params[l.b_off..l.b_off + l.out_ch].fill(0.01);
        }
        let last = net.layout.dense.len() - 1;
        for (i, l) in net.layout.dense.iter().enumerate() {
            let limit = if i == last {
                (3.0 / l.inputs as f64).sqrt()
            } else {
                (6.0 / l.inputs as f64).sqrt()
            };
            for p in &mut net.dense_params[l.w_off..l.b_off] {
                *p = rng.random_range(-limit..limit);
            }
            let bias = if i == last { output_bias } else { 0.01 };
            net.dense_params[l.b_off..l.b_off + l.outputs].fill(bias);
        }
        Ok(net)
    }

    pub fn spec(&self) -> &BackboneSpec {
        &self.spec
    }

    pub fn input_size(&self) -> usize {
        self.spec.input_size
    }

    /// Spatial size `(height, width)` of the last conv layer's activation maps.
    pub fn final_map_size(&self) -> (usize, usize) {
        self.layout.conv.last().expect("conv layer").out_size
    }

    pub fn final_map_channels(&self) -> usize {
        self.layout.conv.last().expect("conv layer").out_ch
    }

    pub fn param_count(&self) -> usize {
        self.conv_params.len() + self.dense_params.len()
    }

    pub fn forward(&self, input: &Maps) -> Result<Trace> {
        let s = self.spec.input_size;
        if input.channels != 1 || input.height != s || input.width != s {
            return Err(Error::DimensionMismatch(format!(
                "network expects 1x{s}x{s} input, got {}x{}x{}",
                input.channels, input.height, input.width
            )));
        }
        let mut conv_inputs = Vec::with_capacity(self.layout.conv.len());
        let mut conv_pre = Vec::with_capacity(self.layout.conv.len());
        let mut conv_post = Vec::with_capacity(self.layout.conv.len());
        let mut pool_argmax = Vec::with_capacity(self.layout.conv.len());
        let mut current = input.clone();
        let n_conv = self.layout.conv.len();
        for (li, l) in self.layout.conv.iter().enumerate() {
            let pre = self.conv_forward(l, &current);
            let post = Maps {
                data: pre.data.iter().map(|v| v.max(0.0)).collect(),
                ..pre.clone()
            };
            conv_inputs.push(current);
            conv_pre.push(pre);
            // the last layer's pool belongs to the head
            if l.pool && li + 1 < n_conv {
                let (pooled, arg) = max_pool(&post);
                pool_argmax.push(Some(arg));
                current = pooled;
            } else {
                pool_argmax.push(None);
                current = post.clone();
            }
            conv_post.push(post);
        }
        let (dense_inputs, dense_pre, prediction) = self.head(conv_post.last().unwrap());
        Ok(Trace {
            conv_inputs,
            conv_pre,
            conv_post,
            pool_argmax,
            dense_inputs,
            dense_pre,
            prediction,
        })
    }

    pub fn predict(&self, input: &Maps) -> Result<f64> {
        Ok(self.forward(input)?.prediction)
    }

    /// Prediction computed from given last-layer activation maps.
    pub fn head_prediction(&self, final_maps: &Maps) -> f64 {
        self.head(final_maps).2
    }

    fn head(&self, final_maps: &Maps) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, f64) {
        let last = self.layout.conv.last().unwrap();
        let flat = if last.pool {
            max_pool(final_maps).0.data
        } else {
            final_maps.data.clone()
        };
        let mut dense_inputs = Vec::with_capacity(self.layout.dense.len());
        let mut dense_pre = Vec::with_capacity(self.layout.dense.len());
        let mut x = flat;
        let n = self.layout.dense.len();
        for (i, l) in self.layout.dense.iter().enumerate() {
            let w = &self.dense_params[l.w_off..l.b_off];
            let b = &self.dense_params[l.b_off..l.b_off + l.outputs];
            let z: Vec<f64> = (0..l.outputs)
                .map(|o| {
                    let row = &w[o * l.inputs..(o + 1) * l.inputs];
                    b[o] + row.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>()
                })
                .collect();
            dense_inputs.push(x);
            x = if i + 1 < n {
                z.iter().map(|v| v.max(0.0)).collect()
            } else {
                z.clone()
            };
            dense_pre.push(z);
        }
        (dense_inputs, dense_pre, x[0])
    }

    fn conv_forward(&self, l: &ConvShape, input: &Maps) -> Maps {
        let (oh, ow) = l.out_size;
        let k = l.kernel;
        let mut out = Maps::zeros(l.out_ch, oh, ow);
        let w = &self.conv_params[l.w_off..l.b_off];
        let b = &self.conv_params[l.b_off..l.b_off + l.out_ch];
        for (o, &bias) in b.iter().enumerate() {
            for y in 0..oh {
                for x in 0..ow {
                    let mut acc = bias;
                    for c in 0..l.in_ch {
                        let wbase = (o * l.in_ch + c) * k * k;
                        for ky in 0..k {
                            let row = input.idx(c, y * l.stride + ky, x * l.stride);
                            let wrow = wbase + ky * k;
                            for kx in 0..k {
                                acc += w[wrow + kx] * input.data[row + kx];
                            }
                        }
                    }
                    let i = out.idx(o, y, x);
                    out.data[i] = acc;
                }
            }
        }
        out
    }

    /// Backpropagates `d_pred = dL/dy` through the dense head.
    ///
    /// Returns the dense-parameter gradient and the gradient with respect to
    /// the last conv layer's activation maps.
    pub fn backward_head(&self, trace: &Trace, d_pred: f64) -> (Vec<f64>, Maps) {
        let mut grad = vec![0.0; self.dense_params.len()];
        let mut upstream = vec![d_pred];
        let n = self.layout.dense.len();
        for i in (0..n).rev() {
            let l = &self.layout.dense[i];
            let d_z: Vec<f64> = if i + 1 < n {
                upstream
                    .iter()
                    .zip(&trace.dense_pre[i])
                    .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                    .collect()
            } else {
                upstream.clone()
            };
            let x = &trace.dense_inputs[i];
            let w = &self.dense_params[l.w_off..l.b_off];
            let mut d_x = vec![0.0; l.inputs];
            for o in 0..l.outputs {
                let d = d_z[o];
                grad[l.b_off + o] += d;
                if d == 0.0 {
                    continue;
                }
                let row = o * l.inputs;
                for j in 0..l.inputs {
                    grad[l.w_off + row + j] += d * x[j];
                    d_x[j] += d * w[row + j];
                }
            }
            upstream = d_x;
        }
        let last = self.layout.conv.last().unwrap();
        let final_maps = trace.final_maps();
        let d_final = if last.pool {
            let (_, arg) = max_pool(final_maps);
            unpool(&upstream, &arg, final_maps)
        } else {
            Maps {
                data: upstream,
                ..final_maps.clone()
            }
        };
        (grad, d_final)
    }

    /// Backpropagates a gradient on the last conv activations down to the
    /// convolution parameters.
    pub fn backward_conv(&self, trace: &Trace, d_final: &Maps) -> Vec<f64> {
        let mut grad = vec![0.0; self.conv_params.len()];
        let mut d_post = d_final.clone();
        for li in (0..self.layout.conv.len()).rev() {
            let l = &self.layout.conv[li];
            let pre = &trace.conv_pre[li];
            let d_pre: Vec<f64> = d_post
                .data
                .iter()
                .zip(&pre.data)
                .map(|(d, z)| if *z > 0.0 { *d } else { 0.0 })
                .collect();
            let input = &trace.conv_inputs[li];
            let need_input_grad = li > 0;
            let mut d_in = Maps::zeros(input.channels, input.height, input.width);
            let (oh, ow) = l.out_size;
            let k = l.kernel;
            for o in 0..l.out_ch {
                for y in 0..oh {
                    for x in 0..ow {
                        let d = d_pre[(o * oh + y) * ow + x];
                        if d == 0.0 {
                            continue;
                        }
                        grad[l.b_off + o] += d;
                        for c in 0..l.in_ch {
                            let wbase = (o * l.in_ch + c) * k * k;
                            for ky in 0..k {
                                let row = input.idx(c, y * l.stride + ky, x * l.stride);
                                let wrow = wbase + ky * k;
                                for kx in 0..k {
                                    grad[l.w_off + wrow + kx] += d * input.data[row + kx];
                                    if need_input_grad {
                                        d_in.data[row + kx] +=
                                            d * self.conv_params[l.w_off + wrow + kx];
                                    }
                                }
                            }
                        }
                    }
                }
            }
            if li == 0 {
                break;
            }
            d_post = match &trace.pool_argmax[li - 1] {
                Some(arg) => unpool(&d_in.data, arg, &trace.conv_post[li - 1]),
                None => d_in,
            };
        }
        grad
    }

    pub fn write_into(&self, w: &mut ModelWriter) {
        w.int("input_size", self.spec.input_size as u64);
        let conv: Vec<String> = self
            .spec
            .conv
            .iter()
            .map(|c| {
                format!(
                    "{}:{}:{}:{}",
                    c.filters,
                    c.kernel,
                    c.stride,
                    u8::from(c.pool)
                )
            })
            .collect();
        w.text("conv_layers", &conv.join(","));
        let dense: Vec<String> = self.spec.dense.iter().map(|d| d.to_string()).collect();
        w.text("dense_layers", &dense.join(","));
        w.reals("conv_params", &self.conv_params);
        w.reals("dense_params", &self.dense_params);
    }

    pub fn read_from(r: &ModelReader) -> Result<Self> {
        let bad = |what: &str| Error::ModelFormat(format!("bad {what}"));
        let conv = r
            .text("conv_layers")?
            .split(',')
            .map(|s| {
                let f: Vec<usize> = s
                    .split(':')
                    .map(|v| v.parse().map_err(|_| bad("conv_layers")))
                    .collect::<Result<_>>()?;
                match f.as_slice() {
                    [filters, kernel, stride, pool] if *pool <= 1 => Ok(ConvSpec {
                        filters: *filters,
                        kernel: *kernel,
                        stride: *stride,
                        pool: *pool == 1,
                    }),
                    _ => Err(bad("conv_layers")),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let dense = r
            .text("dense_layers")?
            .split(',')
            .map(|v| v.parse().map_err(|_| bad("dense_layers")))
            .collect::<Result<Vec<usize>>>()?;
        let spec = BackboneSpec {
            input_size: r.int("input_size")? as usize,
            conv,
            dense,
        };
        let mut net = Backbone::zeros(spec)?;
        let n_conv = net.conv_params.len();
        let n_dense = net.dense_params.len();
        net.conv_params
            .copy_from_slice(r.reals_exact("conv_params", n_conv)?);
        net.dense_params
            .copy_from_slice(r.reals_exact("dense_params", n_dense)?);
        Ok(net)
    }
}

fn max_pool(m: &Maps) -> (Maps, Vec<usize>) {
    let (ph, pw) = (m.height / 2, m.width / 2);
    let mut out = Maps::zeros(m.channels, ph, pw);
    let mut arg = vec![0; out.data.len()];
    for c in 0..m.channels {
        for y in 0..ph {
            for x in 0..pw {
                let mut best = m.idx(c, 2 * y, 2 * x);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let i = m.idx(c, 2 * y + dy, 2 * x + dx);
                    if m.data[i] > m.data[best] {
                        best = i;
                    }
                }
                let o = out.idx(c, y, x);
                out.data[o] = m.data[best];
                arg[o] = best;
            }
        }
    }
    (out, arg)
}

fn unpool(d_pooled: &[f64], arg: &[usize], like: &Maps) -> Maps {
    let mut d = Maps::zeros(like.channels, like.height, like.width);
    for (g, &src) in d_pooled.iter().zip(arg) {
        d.data[src] += g;
    }
    d
}
