//! From-scratch convolutional network engine.
//!
//! The engine supports exactly what the detector needs: valid (no padding)
//! cross-correlation with ReLU, 2x2 max pooling, shared weights between
//! 32x32 patch inference and dense fully-convolutional inference, and
//! reverse-mode gradients for every weight and bias. Layouts are
//! channel-major `(channels, batch, height, width)` so one batch entry's
//! plane is contiguous per channel.

pub mod gradcheck;
mod init;
mod kernels;
mod optimizer;

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

// `f64::sqrt` is inherent only with `std`; the trait supplies it otherwise.
#[allow(unused_imports)]
use num_traits::Float;

use crate::real::Real;
use crate::tensor::Tensor;

pub use init::he_uniform;
pub use optimizer::{sgd_update, OptimizerConfig, SgdMomentum};

use kernels::{
    col2im_tile, conv_dcol_tile, conv_dw_tile, conv_gemm_tile, im2col_tile, ConvDims,
    TILE_POSITIONS,
};

/// Side length of the canonical input patch.
pub const PATCH_SIZE: usize = 32;

/// Errors surfaced by the network engine. Every variant names the offending
/// layer so shape bugs are diagnosable without a debugger.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum NnError {
    /// Input channel count does not match the layer's weights.
    ChannelMismatch {
        layer: usize,
        expected: usize,
        got: usize,
    },
    /// Spatial extent is smaller than the layer's kernel or pool window.
    SpatialTooSmall {
        layer: usize,
        kernel: usize,
        height: usize,
        width: usize,
    },
    /// Input tensor does not have the shape the entry point requires.
    BadInput { expected: String, got: String },
}

impl core::fmt::Display for NnError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            NnError::ChannelMismatch {
                layer,
                expected,
                got,
            } => write!(
                f,
                "layer {layer}: expected {expected} input channels, got {got}"
            ),
            NnError::SpatialTooSmall {
                layer,
                kernel,
                height,
                width,
            } => write!(
                f,
                "layer {layer}: input {height}x{width} is smaller than the {kernel}x{kernel} window"
            ),
            NnError::BadInput { expected, got } => {
                write!(f, "bad network input: expected {expected}, got {got}")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for NnError {}

/// Batched feature maps in `(channels, batch, height, width)` layout.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMaps<T> {
    pub channels: usize,
    pub batch: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<T>,
}

impl<T: Real> FeatureMaps<T> {
    pub fn zeros(channels: usize, batch: usize, height: usize, width: usize) -> Self {
        FeatureMaps {
            channels,
            batch,
            height,
            width,
            data: vec![T::zero(); channels * batch * height * width],
        }
    }

    pub fn from_data(
        channels: usize,
        batch: usize,
        height: usize,
        width: usize,
        data: Vec<T>,
    ) -> Self {
        assert_eq!(
            data.len(),
            channels * batch * height * width,
            "feature map data length must match its dimensions"
        );
        FeatureMaps {
            channels,
            batch,
            height,
            width,
            data,
        }
    }

    /// One contiguous `(height * width)` plane for channel `c`, batch `n`.
    pub fn plane(&self, c: usize, n: usize) -> &[T] {
        let hw = self.height * self.width;
        let start = (c * self.batch + n) * hw;
        &self.data[start..start + hw]
    }

    pub fn plane_mut(&mut self, c: usize, n: usize) -> &mut [T] {
        let hw = self.height * self.width;
        let start = (c * self.batch + n) * hw;
        &mut self.data[start..start + hw]
    }
}

/// One convolution layer: valid cross-correlation plus bias, optional ReLU.
#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    pub relu: bool,
    /// Weights, shape `(out_ch, in_ch, kernel, kernel)` row-major.
    pub weights: Tensor<T>,
    /// Biases, shape `(out_ch,)`.
    pub bias: Tensor<T>,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, relu: bool) -> Self {
        ConvLayer {
            in_ch,
            out_ch,
            kernel,
            relu,
            weights: Tensor::zeros(&[out_ch, in_ch, kernel, kernel]),
            bias: Tensor::zeros(&[out_ch]),
        }
    }
}

/// A layer of the feed-forward stack.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer<T> {
    Conv(ConvLayer<T>),
    /// 2x2 max pooling with stride 2; trailing odd rows/columns are dropped.
    MaxPool2,
}

/// Feed-forward stack of convolution and pooling layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
}

/// Cached activations from a forward pass, consumed by [`Network::backward`].
pub struct Trace<T> {
    input: FeatureMaps<T>,
    records: Vec<Record<T>>,
}

enum Record<T> {
    Conv { out: FeatureMaps<T> },
    Pool { out: FeatureMaps<T>, argmax: Vec<u8> },
}

impl<T: Real> Trace<T> {
    /// Final-layer activations of the traced pass.
    pub fn output(&self) -> &FeatureMaps<T> {
        match self.records.last() {
            Some(Record::Conv { out }) | Some(Record::Pool { out, .. }) => out,
            None => &self.input,
        }
    }
}

/// Per-layer parameter gradients, mirroring the network's conv layers.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads<T> {
    /// `Some` at conv-layer indices, `None` at pool indices.
    pub per_layer: Vec<Option<ConvGrad<T>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvGrad<T> {
    pub dw: Vec<T>,
    pub db: Vec<T>,
}

impl<T: Real> NetGrads<T> {
    pub fn zeros_for(net: &Network<T>) -> Self {
        let per_layer = net
            .layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => Some(ConvGrad {
                    dw: vec![T::zero(); c.weights.len()],
                    db: vec![T::zero(); c.bias.len()],
                }),
                Layer::MaxPool2 => None,
            })
            .collect();
        NetGrads { per_layer }
    }

    /// Element-wise `self += other`. Panics if shapes differ.
    pub fn add_assign(&mut self, other: &NetGrads<T>) {
        assert_eq!(self.per_layer.len(), other.per_layer.len());
        for (a, b) in self.per_layer.iter_mut().zip(other.per_layer.iter()) {
            match (a, b) {
                (Some(ga), Some(gb)) => {
                    for (x, y) in ga.dw.iter_mut().zip(gb.dw.iter()) {
                        *x = *x + *y;
                    }
                    for (x, y) in ga.db.iter_mut().zip(gb.db.iter()) {
                        *x = *x + *y;
                    }
                }
                (None, None) => {}
                _ => panic!("gradient layouts disagree"),
            }
        }
    }

    pub fn scale(&mut self, s: T) {
        for g in self.per_layer.iter_mut().flatten() {
            for x in g.dw.iter_mut() {
                *x = *x * s;
            }
            for x in g.db.iter_mut() {
                *x = *x * s;
            }
        }
    }

    /// Largest absolute entry; useful in non-finite diagnostics.
    pub fn max_abs(&self) -> f64 {
        let mut m = 0.0f64;
        for g in self.per_layer.iter().flatten() {
            for x in g.dw.iter().chain(g.db.iter()) {
                let v = x.into_f64().abs();
                if v > m {
                    m = v;
                }
            }
        }
        m
    }

    /// Global L2 norm over all parameter gradients, accumulated in `f64`
    /// in fixed layer order (deterministic for any scalar type).
    pub fn l2_norm(&self) -> f64 {
        let mut acc = 0.0f64;
        for g in self.per_layer.iter().flatten() {
            for x in g.dw.iter().chain(g.db.iter()) {
                let v = x.into_f64();
                acc += v * v;
            }
        }
        acc.sqrt()
    }

    /// Accumulates these gradients into the grad buffers of `net`'s tensors.
    pub fn accumulate_into(&self, net: &mut Network<T>) {
        for (layer, grad) in net.layers.iter_mut().zip(self.per_layer.iter()) {
            if let (Layer::Conv(c), Some(g)) = (layer, grad) {
                for (dst, src) in c.weights.grad_mut().iter_mut().zip(g.dw.iter()) {
                    *dst = *dst + *src;
                }
                for (dst, src) in c.bias.grad_mut().iter_mut().zip(g.db.iter()) {
                    *dst = *dst + *src;
                }
            }
        }
    }
}

impl<T: Real> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Self {
        Network { layers }
    }

    /// The detector architecture: five valid convolutions regressing two
    /// coordinates from a 32x32 patch, with 2x2 pools after the first two.
    ///
    /// ```text
    /// 32x32x1 -conv5x5-> 28x28x32 -pool-> 14x14x32 -conv5x5-> 10x10x128
    ///   -pool-> 5x5x128 -conv3x3-> 3x3x128 -conv3x3-> 1x1x256 -conv1x1-> 1x1x2
    /// ```
    ///
    /// Weights are He-uniform initialized from `seed`; biases start at zero.
    /// The same seed always yields bit-identical parameters.
    pub fn detector(seed: u64) -> Self {
        let spec: [(usize, usize, usize, bool); 5] = [
            (1, 32, 5, true),
            (32, 128, 5, true),
            (128, 128, 3, true),
            (128, 256, 3, true),
            (256, 2, 1, false),
        ];
        let mut layers = Vec::new();
        for (pos, &(i, o, k, relu)) in spec.iter().enumerate() {
            let mut layer = ConvLayer::new(i, o, k, relu);
            init::fill_he_uniform(layer.weights.data_mut(), i * k * k, seed, pos as u64);
            layers.push(Layer::Conv(layer));
            if pos == 0 || pos == 1 {
                layers.push(Layer::MaxPool2);
            }
        }
        Network { layers }
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        &mut self.layers
    }

    /// Total number of trainable scalars.
    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| match l {
                Layer::Conv(c) => c.weights.len() + c.bias.len(),
                Layer::MaxPool2 => 0,
            })
            .sum()
    }

    /// Number of output channels of the final conv layer.
    pub fn out_channels(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match l {
                Layer::Conv(c) => Some(c.out_ch),
                Layer::MaxPool2 => None,
            })
            .unwrap_or(0)
    }

    /// Receptive field size and output stride of the whole stack, assuming
    /// valid convolutions (stride 1) and 2x2 pools (stride 2).
    pub fn receptive_field(&self) -> (usize, usize) {
        let mut size = 1usize;
        let mut stride = 1usize;
        for layer in self.layers.iter().rev() {
            match layer {
                Layer::Conv(c) => size += c.kernel - 1,
                Layer::MaxPool2 => {
                    size *= 2;
                    stride *= 2;
                }
            }
        }
        (size, stride)
    }

    /// Spatial output grid for an input of `height x width`, or `None` if the
    /// input is too small for the stack.
    pub fn output_grid(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        let mut h = height;
        let mut w = width;
        for layer in &self.layers {
            match layer {
                Layer::Conv(c) => {
                    if h < c.kernel || w < c.kernel {
                        return None;
                    }
                    h = h - c.kernel + 1;
                    w = w - c.kernel + 1;
                }
                Layer::MaxPool2 => {
                    if h < 2 || w < 2 {
                        return None;
                    }
                    h /= 2;
                    w /= 2;
                }
            }
        }
        Some((h, w))
    }

    /// Inference-only forward pass.
    pub fn forward(&self, input: &FeatureMaps<T>) -> Result<FeatureMaps<T>, NnError> {
        let mut cur = input.clone();
        for (idx, layer) in self.layers.iter().enumerate() {
            cur = match layer {
                Layer::Conv(c) => conv_forward(c, &cur, idx)?,
                Layer::MaxPool2 => pool_forward(&cur, idx)?.0,
            };
        }
        Ok(cur)
    }

    /// Forward pass that keeps every intermediate activation for backprop.
    pub fn forward_trace(&self, input: FeatureMaps<T>) -> Result<Trace<T>, NnError> {
        let mut records = Vec::with_capacity(self.layers.len());
        {
            let mut cur = &input;
            for (idx, layer) in self.layers.iter().enumerate() {
                let rec = match layer {
                    Layer::Conv(c) => Record::Conv {
                        out: conv_forward(c, cur, idx)?,
                    },
                    Layer::MaxPool2 => {
                        let (out, argmax) = pool_forward(cur, idx)?;
                        Record::Pool { out, argmax }
                    }
                };
                records.push(rec);
                cur = match records.last().unwrap() {
                    Record::Conv { out } | Record::Pool { out, .. } => out,
                };
            }
        }
        Ok(Trace { input, records })
    }

    /// Reverse-mode pass. `dout` must match the traced output shape. Parameter
    /// gradients are accumulated (`+=`) into `grads`; the gradient with
    /// respect to the input is returned when `want_dinput` is set.
    pub fn backward(
        &self,
        trace: &Trace<T>,
        dout: FeatureMaps<T>,
        grads: &mut NetGrads<T>,
        want_dinput: bool,
    ) -> Option<FeatureMaps<T>> {
        assert_eq!(grads.per_layer.len(), self.layers.len());
        let mut cur = dout;
        for idx in (0..self.layers.len()).rev() {
            let below = if idx == 0 {
                &trace.input
            } else {
                match &trace.records[idx - 1] {
                    Record::Conv { out } | Record::Pool { out, .. } => out,
                }
            };
            let need_dinput = want_dinput || idx > 0;
            cur = match (&self.layers[idx], &trace.records[idx]) {
                (Layer::Conv(c), Record::Conv { out }) => {
                    let g = grads.per_layer[idx]
                        .as_mut()
                        .expect("conv layer must have a gradient slot");
                    conv_backward(c, below, out, cur, g, need_dinput)
                }
                (Layer::MaxPool2, Record::Pool { argmax, .. }) => {
                    pool_backward(below, argmax, &cur)
                }
                _ => panic!("trace does not match network"),
            };
            if idx == 0 && !want_dinput {
                return None;
            }
        }
        Some(cur)
    }

    /// Regresses the two output coordinates for a single 32x32 patch.
    pub fn forward_patch(&self, pixels: &[T]) -> Result<[T; 2], NnError> {
        if pixels.len() != PATCH_SIZE * PATCH_SIZE {
            return Err(NnError::BadInput {
                expected: format!("{} pixels", PATCH_SIZE * PATCH_SIZE),
                got: format!("{} pixels", pixels.len()),
            });
        }
        let maps = FeatureMaps::from_data(1, 1, PATCH_SIZE, PATCH_SIZE, pixels.to_vec());
        let out = self.forward(&maps)?;
        if out.channels != 2 || out.height != 1 || out.width != 1 {
            return Err(NnError::BadInput {
                expected: String::from("a 2-channel 1x1 network output"),
                got: format!("{}x{}x{}", out.channels, out.height, out.width),
            });
        }
        Ok([out.data[0], out.data[1]])
    }
}

fn conv_forward<T: Real>(
    layer: &ConvLayer<T>,
    input: &FeatureMaps<T>,
    idx: usize,
) -> Result<FeatureMaps<T>, NnError> {
    if input.channels != layer.in_ch {
        return Err(NnError::ChannelMismatch {
            layer: idx,
            expected: layer.in_ch,
            got: input.channels,
        });
    }
    if input.height < layer.kernel || input.width < layer.kernel {
        return Err(NnError::SpatialTooSmall {
            layer: idx,
            kernel: layer.kernel,
            height: input.height,
            width: input.width,
        });
    }
    let d = ConvDims {
        in_ch: layer.in_ch,
        out_ch: layer.out_ch,
        k: layer.kernel,
        batch: input.batch,
        ih: input.height,
        iw: input.width,
        oh: input.height - layer.kernel + 1,
        ow: input.width - layer.kernel + 1,
    };
    let np = d.positions();
    let row = d.row();
    let mut out = FeatureMaps::zeros(d.out_ch, d.batch, d.oh, d.ow);
    let mut col: Vec<T> = Vec::new();
    let mut start = 0;
    while start < np {
        let len = TILE_POSITIONS.min(np - start);
        im2col_tile(&input.data, &d, start, len, &mut col);
        conv_gemm_tile(
            layer.weights.data(),
            layer.bias.data(),
            layer.relu,
            &col,
            row,
            &mut out.data,
            np,
            start,
            len,
            d.out_ch,
        );
        start += len;
    }
    Ok(out)
}

fn conv_backward<T: Real>(
    layer: &ConvLayer<T>,
    input: &FeatureMaps<T>,
    output: &FeatureMaps<T>,
    mut dout: FeatureMaps<T>,
    grad: &mut ConvGrad<T>,
    want_dinput: bool,
) -> FeatureMaps<T> {
    let d = ConvDims {
        in_ch: layer.in_ch,
        out_ch: layer.out_ch,
        k: layer.kernel,
        batch: input.batch,
        ih: input.height,
        iw: input.width,
        oh: output.height,
        ow: output.width,
    };
    let np = d.positions();
    let row = d.row();
    // ReLU: zero the gradient wherever the activation was clamped.
    if layer.relu {
        for (g, &y) in dout.data.iter_mut().zip(output.data.iter()) {
            if y <= T::zero() {
                *g = T::zero();
            }
        }
    }
    // Bias gradient: row sums of dout.
    for o in 0..d.out_ch {
        let mut s = T::zero();
        for &g in &dout.data[o * np..(o + 1) * np] {
            s = s + g;
        }
        grad.db[o] = grad.db[o] + s;
    }
    let mut dinput = if want_dinput {
        Some(FeatureMaps::zeros(d.in_ch, d.batch, d.ih, d.iw))
    } else {
        None
    };
    let mut col: Vec<T> = Vec::new();
    let mut dcol: Vec<T> = Vec::new();
    let mut start = 0;
    while start < np {
        let len = TILE_POSITIONS.min(np - start);
        im2col_tile(&input.data, &d, start, len, &mut col);
        conv_dw_tile(&dout.data, &col, row, &mut grad.dw, np, start, len, d.out_ch);
        if let Some(di) = dinput.as_mut() {
            conv_dcol_tile(
                &dout.data,
                layer.weights.data(),
                row,
                &mut dcol,
                np,
                start,
                len,
                d.out_ch,
            );
            col2im_tile(&dcol, &d, start, len, &mut di.data);
        }
        start += len;
    }
    dinput.unwrap_or_else(|| FeatureMaps::zeros(0, 0, 0, 0))
}

/// 2x2/stride-2 max pool. Ties resolve to the first cell in reading order
/// (top-left, top-right, bottom-left, bottom-right), recorded in `argmax`.
fn pool_forward<T: Real>(
    input: &FeatureMaps<T>,
    idx: usize,
) -> Result<(FeatureMaps<T>, Vec<u8>), NnError> {
    if input.height < 2 || input.width < 2 {
        return Err(NnError::SpatialTooSmall {
            layer: idx,
            kernel: 2,
            height: input.height,
            width: input.width,
        });
    }
    let oh = input.height / 2;
    let ow = input.width / 2;
    let mut out = FeatureMaps::zeros(input.channels, input.batch, oh, ow);
    let mut argmax = vec![0u8; out.data.len()];
    let iw = input.width;
    for c in 0..input.channels {
        for n in 0..input.batch {
            let src = input.plane(c, n);
            let base = (c * input.batch + n) * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let top = 2 * oy * iw + 2 * ox;
                    let cand = [src[top], src[top + 1], src[top + iw], src[top + iw + 1]];
                    let mut best = 0usize;
                    for (i, &v) in cand.iter().enumerate().skip(1) {
                        if v > cand[best] {
                            best = i;
                        }
                    }
                    out.data[base + oy * ow + ox] = cand[best];
                    argmax[base + oy * ow + ox] = best as u8;
                }
            }
        }
    }
    Ok((out, argmax))
}

fn pool_backward<T: Real>(
    input: &FeatureMaps<T>,
    argmax: &[u8],
    dout: &FeatureMaps<T>,
) -> FeatureMaps<T> {
    let mut dinput = FeatureMaps::zeros(input.channels, input.batch, input.height, input.width);
    let iw = input.width;
    let (oh, ow) = (dout.height, dout.width);
    for c in 0..dout.channels {
        for n in 0..dout.batch {
            let base = (c * dout.batch + n) * oh * ow;
            let dst = dinput.plane_mut(c, n);
            for oy in 0..oh {
                for ox in 0..ow {
                    let sel = argmax[base + oy * ow + ox] as usize;
                    let top = 2 * oy * iw + 2 * ox;
                    let pos = match sel {
                        0 => top,
                        1 => top + 1,
                        2 => top + iw,
                        _ => top + iw + 1,
                    };
                    dst[pos] = dst[pos] + dout.data[base + oy * ow + ox];
                }
            }
        }
    }
    dinput
}

/// In-place 3x3 box blur on a single plane; used by the optional vote-map
/// smoothing path. Borders average only the in-bounds neighbors.
pub fn box_blur3(values: &mut [f64], height: usize, width: usize) {
    assert_eq!(values.len(), height * width);
    let src = values.to_vec();
    for y in 0..height {
        for x in 0..width {
            let mut sum = 0.0;
            let mut count = 0.0;
            for dy in -1i64..=1 {
                for dx in -1i64..=1 {
                    let ny = y as i64 + dy;
                    let nx = x as i64 + dx;
                    if ny >= 0 && ny < height as i64 && nx >= 0 && nx < width as i64 {
                        sum += src[ny as usize * width + nx as usize];
                        count += 1.0;
                    }
                }
            }
            values[y * width + x] = sum / count;
        }
    }
}

// The unit tests for this module live in `tests/nn.rs`, where the brute-force
// reference implementations from the test kit are available.
#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detector_shapes() {
        let net: Network<f32> = Network::detector(7);
        assert_eq!(net.receptive_field(), (32, 4));
        assert_eq!(net.output_grid(32, 32), Some((1, 1)));
        assert_eq!(net.output_grid(31, 32), None);
        assert_eq!(net.output_grid(64, 48), Some((9, 5)));
        assert_eq!(net.out_channels(), 2);
        // conv params: 25*32+32 + 32*25*128+128 + 128*9*128+128 + 128*9*256+256 + 256*2+2
        assert_eq!(
            net.param_count(),
            (25 * 32 + 32)
                + (32 * 25 * 128 + 128)
                + (128 * 9 * 128 + 128)
                + (128 * 9 * 256 + 256)
                + (256 * 2 + 2)
        );
    }

    #[test]
    fn detector_init_is_deterministic() {
        let a: Network<f32> = Network::detector(11);
        let b: Network<f32> = Network::detector(11);
        let c: Network<f32> = Network::detector(12);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn forward_patch_rejects_bad_sizes() {
        let net: Network<f32> = Network::detector(3);
        let err = net.forward_patch(&[0.0; 100]).unwrap_err();
        assert!(matches!(err, NnError::BadInput { .. }));
    }
}
