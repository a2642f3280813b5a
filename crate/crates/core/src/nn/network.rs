//! Forward and backward passes.
//!
//! Parameters are stored as `f32`; every activation, loss and gradient is
//! computed in `f64`.

use std::time::Instant;

use rand::{Rng, RngCore};

use super::model::{pooled_sides, ConvLayer, DenseLayer, ModelParams, CONV_KERNEL, NUM_CLASSES};
use super::NnError;
use crate::features::FeatureImage;
use crate::SnoreClass;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub p_snore: f64,
    pub p_non_snore: f64,
    pub inferred_class: SnoreClass,
    pub latency_ms: f64,
}

impl Prediction {
    fn from_probs(probs: [f64; NUM_CLASSES], latency_ms: f64) -> Self {
        let p_non_snore = probs[SnoreClass::NonSnoring.index()];
        let p_snore = probs[SnoreClass::Snoring.index()];
        let inferred_class = if p_snore > p_non_snore { SnoreClass::Snoring } else { SnoreClass::NonSnoring };
        Self { p_snore, p_non_snore, inferred_class, latency_ms }
    }

    /// Equality of everything except the measured latency.
    pub fn same_outcome(&self, other: &Prediction) -> bool {
        self.p_snore == other.p_snore
            && self.p_non_snore == other.p_non_snore
            && self.inferred_class == other.inferred_class
    }
}

pub enum Mode<'a> {
    Infer,
    /// Inverted dropout after every hidden dense layer, masks drawn from `rng`.
    Train {
        dropout_rate: f64,
        rng: &'a mut dyn RngCore,
    },
}

struct ConvCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
}

struct DenseCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    mask: Option<Vec<f64>>,
}

/// Activations kept by a training-mode forward pass.
pub struct Cache {
    conv: Vec<ConvCache>,
    dense: Vec<DenseCache>,
    output_input: Vec<f64>,
}

pub struct ForwardPass {
    pub prediction: Prediction,
    pub probs: [f64; NUM_CLASSES],
    pub cache: Option<Cache>,
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

/// Same-padded 3×3 convolution, stride 1.
fn conv_forward(layer: &ConvLayer, input: &[f64], side: usize) -> Vec<f64> {
    let area = side * side;
    let w = widen(&layer.weights);
    let mut out = vec![0.0; layer.out_channels * area];
    for o in 0..layer.out_channels {
        let plane = &mut out[o * area..(o + 1) * area];
        plane.iter_mut().for_each(|v| *v = layer.biases[o] as f64);
        for i in 0..layer.in_channels {
            let src = &input[i * area..(i + 1) * area];
            for ky in 0..CONV_KERNEL {
                for kx in 0..CONV_KERNEL {
                    let wv = w[((o * layer.in_channels + i) * CONV_KERNEL + ky) * CONV_KERNEL + kx];
                    let (y0, y1) = valid_range(ky, side);
                    let (x0, x1) = valid_range(kx, side);
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let dst = &mut plane[y * side + x0..y * side + x1];
                        let s = &src[sy * side + x0 + kx - 1..sy * side + x1 + kx - 1];
                        for (d, &v) in dst.iter_mut().zip(s) {
                            *d += wv * v;
                        }
                    }
                }
            }
        }
    }
    out
}

/// Output rows/cols for which kernel offset `k` reads inside the input.
fn valid_range(k: usize, side: usize) -> (usize, usize) {
    match k {
        0 => (1, side),
        1 => (0, side),
        _ => (0, side - 1),
    }
}

/// Accumulates weight/bias gradients and optionally the input gradient.
fn conv_backward(
    layer: &ConvLayer,
    input: &[f64],
    d_pre: &[f64],
    side: usize,
    grad_w: &mut [f64],
    grad_b: &mut [f64],
    d_input: Option<&mut [f64]>,
) {
    let area = side * side;
    let w = widen(&layer.weights);
    for o in 0..layer.out_channels {
        let dplane = &d_pre[o * area..(o + 1) * area];
        grad_b[o] += dplane.iter().sum::<f64>();
        for i in 0..layer.in_channels {
            let src = &input[i * area..(i + 1) * area];
            for ky in 0..CONV_KERNEL {
                for kx in 0..CONV_KERNEL {
                    let idx = ((o * layer.in_channels + i) * CONV_KERNEL + ky) * CONV_KERNEL + kx;
                    let (y0, y1) = valid_range(ky, side);
                    let (x0, x1) = valid_range(kx, side);
                    let mut acc = 0.0;
                    for y in y0..y1 {
                        let sy = y + ky - 1;
                        let d = &dplane[y * side + x0..y * side + x1];
                        let s = &src[sy * side + x0 + kx - 1..sy * side + x1 + kx - 1];
                        acc += d.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    }
                    grad_w[idx] += acc;
                }
            }
        }
    }
    if let Some(d_input) = d_input {
        for o in 0..layer.out_channels {
            let dplane = &d_pre[o * area..(o + 1) * area];
            for i in 0..layer.in_channels {
                let dst_plane = &mut d_input[i * area..(i + 1) * area];
                for ky in 0..CONV_KERNEL {
                    for kx in 0..CONV_KERNEL {
                        let wv = w[((o * layer.in_channels + i) * CONV_KERNEL + ky) * CONV_KERNEL + kx];
                        let (y0, y1) = valid_range(ky, side);
                        let (x0, x1) = valid_range(kx, side);
                        for y in y0..y1 {
                            let sy = y + ky - 1;
                            let d = &dplane[y * side + x0..y * side + x1];
                            let dst = &mut dst_plane[sy * side + x0 + kx - 1..sy * side + x1 + kx - 1];
                            for (t, &g) in dst.iter_mut().zip(d) {
                                *t += wv * g;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 stride-2 max pool (odd trailing row/column dropped). Returns pooled
/// values and the flat input index each output was taken from; ties go to
/// the first position in row-major order.
pub(crate) fn maxpool_forward(input: &[f64], channels: usize, side: usize) -> (Vec<f64>, Vec<usize>) {
    let out_side = side / 2;
    let mut out = Vec::with_capacity(channels * out_side * out_side);
    let mut argmax = Vec::with_capacity(out.capacity());
    for c in 0..channels {
        let base = c * side * side;
        for y in 0..out_side {
            for x in 0..out_side {
                let mut best = base + 2 * y * side + 2 * x;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * y + dy) * side + 2 * x + dx;
                    if input[idx] > input[best] {
                        best = idx;
                    }
                }
                out.push(input[best]);
                argmax.push(best);
            }
        }
    }
    (out, argmax)
}

pub(crate) fn maxpool_backward(d_out: &[f64], argmax: &[usize], input_len: usize) -> Vec<f64> {
    let mut d_in = vec![0.0; input_len];
    for (&g, &idx) in d_out.iter().zip(argmax) {
        d_in[idx] += g;
    }
    d_in
}

fn dense_forward(layer: &DenseLayer, input: &[f64]) -> Vec<f64> {
    (0..layer.outputs)
        .map(|o| {
            let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
            layer.biases[o] as f64 + row.iter().zip(input).map(|(&w, x)| w as f64 * x).sum::<f64>()
        })
        .collect()
}

fn dense_backward(
    layer: &DenseLayer,
    input: &[f64],
    d_pre: &[f64],
    grad_w: &mut [f64],
    grad_b: &mut [f64],
) -> Vec<f64> {
    let mut d_in = vec![0.0; layer.inputs];
    for (o, &g) in d_pre.iter().enumerate() {
        grad_b[o] += g;
        if g == 0.0 {
            continue;
        }
        let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
        let grow = &mut grad_w[o * layer.inputs..(o + 1) * layer.inputs];
        for ((gw, &x), (&w, d)) in grow.iter_mut().zip(input).zip(row.iter().zip(d_in.iter_mut())) {
            *gw += g * x;
            *d += g * w as f64;
        }
    }
    d_in
}

fn relu(v: &[f64]) -> Vec<f64> {
    v.iter().map(|&x| x.max(0.0)).collect()
}

pub fn softmax(logits: &[f64; NUM_CLASSES]) -> [f64; NUM_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.map(|z| (z - max).exp());
    let sum: f64 = exps.iter().sum();
    exps.map(|e| e / sum)
}

fn check_input(params: &ModelParams, image: &FeatureImage) -> Result<(), NnError> {
    if image.side() != params.input_side() {
        return Err(NnError::Shape(format!(
            "image side {} does not match model input side {}",
            image.side(),
            params.input_side()
        )));
    }
    Ok(())
}

pub fn forward(params: &ModelParams, image: &FeatureImage, mode: Mode<'_>) -> Result<ForwardPass, NnError> {
    check_input(params, image)?;
    let started = Instant::now();
    let (train, dropout_rate, mut rng) = match mode {
        Mode::Infer => (false, 0.0, None),
        Mode::Train { dropout_rate, rng } => (true, dropout_rate, Some(rng)),
    };
    let mut conv_caches = Vec::with_capacity(3);
    let mut x = widen(image.values());
    let mut side = params.input_side();
    for layer in &params.conv {
        let pre = conv_forward(layer, &x, side);
        let act = relu(&pre);
        let (pooled, argmax) = maxpool_forward(&act, layer.out_channels, side);
        if train {
            conv_caches.push(ConvCache { input: std::mem::take(&mut x), pre, argmax });
        }
        x = pooled;
        side /= 2;
    }
    let (hidden, output) = params.dense.split_at(params.dense.len() - 1);
    let mut dense_caches = Vec::with_capacity(hidden.len());
    for layer in hidden {
        let pre = dense_forward(layer, &x);
        let mut act = relu(&pre);
        let mask = match rng.as_mut() {
            Some(rng) if dropout_rate > 0.0 => {
                let keep = 1.0 - dropout_rate;
                let mask: Vec<f64> =
                    (0..act.len()).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
                act.iter_mut().zip(&mask).for_each(|(a, m)| *a *= m);
                Some(mask)
            }
            _ => None,
        };
        if train {
            dense_caches.push(DenseCache { input: std::mem::take(&mut x), pre, mask });
        }
        x = act;
    }
    let logits = dense_forward(&output[0], &x);
    let probs = softmax(&[logits[0], logits[1]]);
    let latency_ms = started.elapsed().as_secs_f64() * 1e3;
    let cache = train.then_some(Cache { conv: conv_caches, dense: dense_caches, output_input: x });
    Ok(ForwardPass { prediction: Prediction::from_probs(probs, latency_ms), probs, cache })
}

impl ModelParams {
    pub fn predict(&self, image: &FeatureImage) -> Result<Prediction, NnError> {
        Ok(forward(self, image, Mode::Infer)?.prediction)
    }
}

/// Parameter gradients, laid out like [`ModelParams::tensors`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self { tensors: params.tensors().iter().map(|t| vec![0.0; t.len()]).collect() }
    }

    fn scale(&mut self, factor: f64) {
        self.tensors.iter_mut().flatten().for_each(|g| *g *= factor);
    }

    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flatten().copied().collect()
    }
}

/// Cross-entropy of one prediction.
pub fn cross_entropy(probs: &[f64; NUM_CLASSES], label: SnoreClass) -> f64 {
    -probs[label.index()].max(f64::MIN_POSITIVE).ln()
}

fn backward_sample(
    params: &ModelParams,
    cache: &Cache,
    probs: &[f64; NUM_CLASSES],
    label: SnoreClass,
    grads: &mut Gradients,
) {
    let n_conv = params.conv.len();
    let dense_base = 2 * n_conv;
    let mut d_logits = probs.to_vec();
    d_logits[label.index()] -= 1.0;

    let out_idx = params.dense.len() - 1;
    let (gw, gb) = pair_mut(&mut grads.tensors, dense_base + 2 * out_idx);
    let mut d_x = dense_backward(&params.dense[out_idx], &cache.output_input, &d_logits, gw, gb);

    for (j, layer) in params.dense[..out_idx].iter().enumerate().rev() {
        let c = &cache.dense[j];
        if let Some(mask) = &c.mask {
            d_x.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
        }
        d_x.iter_mut().zip(&c.pre).for_each(|(d, &p)| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        let (gw, gb) = pair_mut(&mut grads.tensors, dense_base + 2 * j);
        d_x = dense_backward(layer, &c.input, &d_x, gw, gb);
    }

    let sides = pooled_sides(params.input_side());
    for l in (0..n_conv).rev() {
        let layer = &params.conv[l];
        let c = &cache.conv[l];
        let side = if l == 0 { params.input_side() } else { sides[l - 1] };
        let mut d_pre = maxpool_backward(&d_x, &c.argmax, c.pre.len());
        d_pre.iter_mut().zip(&c.pre).for_each(|(d, &p)| {
            if p <= 0.0 {
                *d = 0.0
            }
        });
        let (gw, gb) = pair_mut(&mut grads.tensors, 2 * l);
        if l == 0 {
            conv_backward(layer, &c.input, &d_pre, side, gw, gb, None);
        } else {
            let mut d_in = vec![0.0; c.input.len()];
            conv_backward(layer, &c.input, &d_pre, side, gw, gb, Some(&mut d_in));
            d_x = d_in;
        }
    }
}

fn pair_mut(tensors: &mut [Vec<f64>], at: usize) -> (&mut [f64], &mut [f64]) {
    let (a, b) = tensors[at..at + 2].split_at_mut(1);
    (&mut a[0], &mut b[0])
}

/// Gradient of the mean cross-entropy over `batch`, with the batch loss.
///
/// Each sample draws its own dropout masks from `rng` during the forward
/// pass and those masks are reused on the way back.
pub fn backward(
    params: &ModelParams,
    batch: &[(&FeatureImage, SnoreClass)],
    rng: &mut dyn RngCore,
    dropout_rate: f64,
) -> Result<(Gradients, f64), NnError> {
    if batch.is_empty() {
        return Err(NnError::Data("empty batch".into()));
    }
    if !(0.0..1.0).contains(&dropout_rate) {
        return Err(NnError::Config(format!("dropout rate {dropout_rate} outside [0, 1)")));
    }
    let mut grads = Gradients::zeros_like(params);
    let mut loss = 0.0;
    for &(image, label) in batch {
        let pass = forward(params, image, Mode::Train { dropout_rate, rng: &mut *rng })?;
        loss += cross_entropy(&pass.probs, label);
        let cache = pass.cache.as_ref().expect("train mode keeps a cache");
        backward_sample(params, cache, &pass.probs, label, &mut grads);
    }
    let n = batch.len() as f64;
    grads.scale(1.0 / n);
    Ok((grads, loss / n))
}

/// Mean cross-entropy over `batch`, evaluated the same way [`backward`]
/// evaluates it (same dropout draws for the same `rng` state).
pub fn batch_loss(
    params: &ModelParams,
    batch: &[(&FeatureImage, SnoreClass)],
    rng: &mut dyn RngCore,
    dropout_rate: f64,
) -> Result<f64, NnError> {
    let mut loss = 0.0;
    for &(image, label) in batch {
        let mode = if dropout_rate > 0.0 { Mode::Train { dropout_rate, rng: &mut *rng } } else { Mode::Infer };
        loss += cross_entropy(&forward(params, image, mode)?.probs, label);
    }
    Ok(loss / batch.len() as f64)
}
