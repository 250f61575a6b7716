//! A small convolutional selector network, written directly against f64
//! buffers: three blocks of (3x3 same-padded convolution, ReLU, 2x2 max
//! pool) with 8/16/32 channels, global average pooling, and a single
//! sigmoid output. Trained full-batch with Adam on binary cross-entropy.
//!
//! Everything is deterministic given (seed, config): initialization comes
//! from a seeded ChaCha stream and training touches samples in order.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: [usize; 3] = [8, 16, 32];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvNetConfig {
    pub patch_size: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
}

impl Default for ConvNetConfig {
    fn default() -> Self {
        ConvNetConfig {
            patch_size: 64,
            seed: 42,
            learning_rate: 1e-4,
            epochs: 200,
        }
    }
}

#[derive(Debug, Clone)]
struct ConvLayer {
    in_ch: usize,
    out_ch: usize,
    /// [oc][ic][ky][kx] flattened
    w: Vec<f64>,
    b: Vec<f64>,
}

impl ConvLayer {
    fn w_index(&self, oc: usize, ic: usize, ky: usize, kx: usize) -> usize {
        ((oc * self.in_ch + ic) * 3 + ky) * 3 + kx
    }
}

/// The selector network.
#[derive(Debug, Clone)]
pub struct ConvNet {
    pub config: ConvNetConfig,
    conv: Vec<ConvLayer>,
    dense_w: Vec<f64>,
    dense_b: f64,
}

/// One channel-major activation tensor (C, H, W).
#[derive(Debug, Clone)]
struct Tensor {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl Tensor {
    fn zeros(c: usize, h: usize, w: usize) -> Tensor {
        Tensor {
            c,
            h,
            w,
            data: vec![0.0; c * h * w],
        }
    }
    #[inline]
    fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.h + y) * self.w + x]
    }
    #[inline]
    fn at_mut(&mut self, c: usize, y: usize, x: usize) -> &mut f64 {
        &mut self.data[(c * self.h + y) * self.w + x]
    }
    fn dims(&self) -> (usize, usize, usize) {
        (self.c, self.h, self.w)
    }
}

/// Stored activations for one sample's forward pass.
struct ForwardTrace {
    /// Input and each block's pooled output (inputs to the next block).
    inputs: Vec<Tensor>,
    /// Pre-ReLU convolution outputs per block.
    pre_relu: Vec<Tensor>,
    /// Argmax flat index (into the ReLU output) per pooled cell, per block.
    pool_argmax: Vec<Vec<usize>>,
    gap: Vec<f64>,
    logit: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl ConvNet {
    /// Seeded He-normal initialization.
    pub fn new(config: ConvNetConfig) -> Result<ConvNet> {
        if config.patch_size < 8 || config.patch_size % 8 != 0 {
            return Err(Error::Selector(format!(
                "patch size {} must be a multiple of 8 (three 2x2 pools)",
                config.patch_size
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut normal = BoxMuller::default();

        let mut conv = Vec::new();
        let mut in_ch = 1usize;
        for &out_ch in &CHANNELS {
            let fan_in = (in_ch * 9) as f64;
            let std = (2.0 / fan_in).sqrt();
            let w: Vec<f64> = (0..out_ch * in_ch * 9)
                .map(|_| normal.sample(&mut rng) * std)
                .collect();
            conv.push(ConvLayer {
                in_ch,
                out_ch,
                w,
                b: vec![0.0; out_ch],
            });
            in_ch = out_ch;
        }
        let std = (2.0 / in_ch as f64).sqrt();
        let dense_w: Vec<f64> = (0..in_ch).map(|_| normal.sample(&mut rng) * std).collect();

        Ok(ConvNet {
            config,
            conv,
            dense_w,
            dense_b: 0.0,
        })
    }

    /// Block output dimensions (C, H, W) for the configured patch size.
    pub fn block_dims(&self) -> [(usize, usize, usize); 3] {
        let mut s = self.config.patch_size;
        let mut out = [(0, 0, 0); 3];
        for (i, &c) in CHANNELS.iter().enumerate() {
            s /= 2;
            out[i] = (c, s, s);
        }
        out
    }

    fn forward(&self, patch: &Array2<f64>) -> ForwardTrace {
        let s = self.config.patch_size;
        assert_eq!(patch.dim(), (s, s), "patch size mismatch");
        let mut input = Tensor::zeros(1, s, s);
        for ((y, x), &v) in patch.indexed_iter() {
            *input.at_mut(0, y, x) = v;
        }

        let mut inputs = vec![input];
        let mut pre_relu = Vec::new();
        let mut pool_argmax = Vec::new();

        for layer in &self.conv {
            let x = inputs.last().unwrap();
            let (_, h, w) = x.dims();
            // 3x3 same-padded convolution
            let mut z = Tensor::zeros(layer.out_ch, h, w);
            for oc in 0..layer.out_ch {
                for y in 0..h {
                    for xx in 0..w {
                        let mut acc = layer.b[oc];
                        for ic in 0..layer.in_ch {
                            for ky in 0..3usize {
                                let sy = y as isize + ky as isize - 1;
                                if sy < 0 || sy >= h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let sx = xx as isize + kx as isize - 1;
                                    if sx < 0 || sx >= w as isize {
                                        continue;
                                    }
                                    acc += x.at(ic, sy as usize, sx as usize)
                                        * layer.w[layer.w_index(oc, ic, ky, kx)];
                                }
                            }
                        }
                        *z.at_mut(oc, y, xx) = acc;
                    }
                }
            }
            // ReLU + 2x2 max pool
            let (ph, pw) = (h / 2, w / 2);
            let mut pooled = Tensor::zeros(layer.out_ch, ph, pw);
            let mut argmax = vec![0usize; layer.out_ch * ph * pw];
            for oc in 0..layer.out_ch {
                for py in 0..ph {
                    for px in 0..pw {
                        let mut best = f64::MIN;
                        let mut best_idx = 0;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let (y, xx) = (2 * py + dy, 2 * px + dx);
                                let v = z.at(oc, y, xx).max(0.0);
                                if v > best {
                                    best = v;
                                    best_idx = (oc * h + y) * w + xx;
                                }
                            }
                        }
                        *pooled.at_mut(oc, py, px) = best;
                        argmax[(oc * ph + py) * pw + px] = best_idx;
                    }
                }
            }
            pre_relu.push(z);
            pool_argmax.push(argmax);
            inputs.push(pooled);
        }

        let last = inputs.last().unwrap();
        let (c, h, w) = last.dims();
        let spatial = (h * w) as f64;
        let gap: Vec<f64> = (0..c)
            .map(|ch| {
                let mut acc = 0.0;
                for y in 0..h {
                    for x in 0..w {
                        acc += last.at(ch, y, x);
                    }
                }
                acc / spatial
            })
            .collect();
        let logit = gap
            .iter()
            .zip(&self.dense_w)
            .map(|(g, w)| g * w)
            .sum::<f64>()
            + self.dense_b;

        ForwardTrace {
            inputs,
            pre_relu,
            pool_argmax,
            gap,
            logit,
        }
    }

    /// Probability of the TEXTURE class for one patch.
    pub fn predict(&self, patch: &Array2<f64>) -> f64 {
        sigmoid(self.forward(patch).logit).clamp(1e-9, 1.0 - 1e-9)
    }

    /// Mean BCE loss over a batch.
    pub fn batch_loss(&self, patches: &[Array2<f64>], targets: &[u8]) -> f64 {
        let mut total = 0.0;
        for (p, &t) in patches.iter().zip(targets) {
            let z = self.forward(p).logit;
            total += softplus(z) - t as f64 * z;
        }
        total / patches.len() as f64
    }

    /// Mean loss and gradients (flattened in parameter order) over a batch.
    pub fn batch_loss_and_gradients(
        &self,
        patches: &[Array2<f64>],
        targets: &[u8],
    ) -> (f64, Vec<f64>) {
        let mut grads = Gradients::zeros_like(self);
        let mut total = 0.0;
        let n = patches.len() as f64;
        for (p, &t) in patches.iter().zip(targets) {
            let trace = self.forward(p);
            total += softplus(trace.logit) - t as f64 * trace.logit;
            let dlogit = (sigmoid(trace.logit) - t as f64) / n;
            self.backward(&trace, dlogit, &mut grads);
        }
        (total / n, grads.into_flat())
    }

    fn backward(&self, trace: &ForwardTrace, dlogit: f64, grads: &mut Gradients) {
        // dense
        for (g, gv) in grads.dense_w.iter_mut().zip(&trace.gap) {
            *g += dlogit * gv;
        }
        grads.dense_b += dlogit;

        // GAP backward into the last pooled tensor
        let last = trace.inputs.last().unwrap();
        let (c, h, w) = last.dims();
        let spatial = (h * w) as f64;
        let mut dpooled = Tensor::zeros(c, h, w);
        for ch in 0..c {
            let g = dlogit * self.dense_w[ch] / spatial;
            for y in 0..h {
                for x in 0..w {
                    *dpooled.at_mut(ch, y, x) = g;
                }
            }
        }

        // blocks in reverse
        for (k, layer) in self.conv.iter().enumerate().rev() {
            let z = &trace.pre_relu[k];
            let x = &trace.inputs[k];
            let (_, zh, zw) = z.dims();
            let (pc, ph, pw) = dpooled.dims();

            // pool + ReLU backward
            let mut dz = Tensor::zeros(z.c, zh, zw);
            for oc in 0..pc {
                for py in 0..ph {
                    for px in 0..pw {
                        let flat = trace.pool_argmax[k][(oc * ph + py) * pw + px];
                        let y = (flat / zw) % zh;
                        let xx = flat % zw;
                        if z.at(oc, y, xx) > 0.0 {
                            *dz.at_mut(oc, y, xx) += dpooled.at(oc, py, px);
                        }
                    }
                }
            }

            // conv backward: weight/bias grads and input grad
            let gl = &mut grads.conv[k];
            let mut dx = Tensor::zeros(layer.in_ch, x.h, x.w);
            for oc in 0..layer.out_ch {
                for y in 0..zh {
                    for xx in 0..zw {
                        let g = dz.at(oc, y, xx);
                        if g == 0.0 {
                            continue;
                        }
                        gl.b[oc] += g;
                        for ic in 0..layer.in_ch {
                            for ky in 0..3usize {
                                let sy = y as isize + ky as isize - 1;
                                if sy < 0 || sy >= x.h as isize {
                                    continue;
                                }
                                for kx in 0..3usize {
                                    let sx = xx as isize + kx as isize - 1;
                                    if sx < 0 || sx >= x.w as isize {
                                        continue;
                                    }
                                    let widx = layer.w_index(oc, ic, ky, kx);
                                    gl.w[widx] += g * x.at(ic, sy as usize, sx as usize);
                                    *dx.at_mut(ic, sy as usize, sx as usize) +=
                                        g * layer.w[widx];
                                }
                            }
                        }
                    }
                }
            }
            dpooled = dx;
        }
    }

    /// All parameters flattened: conv blocks (weights then biases) in order,
    /// then the dense layer.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for layer in &self.conv {
            out.extend_from_slice(&layer.w);
            out.extend_from_slice(&layer.b);
        }
        out.extend_from_slice(&self.dense_w);
        out.push(self.dense_b);
        out
    }

    pub fn set_params_flat(&mut self, params: &[f64]) {
        let mut at = 0usize;
        for layer in &mut self.conv {
            let wl = layer.w.len();
            layer.w.copy_from_slice(&params[at..at + wl]);
            at += wl;
            let bl = layer.b.len();
            layer.b.copy_from_slice(&params[at..at + bl]);
            at += bl;
        }
        let dw = self.dense_w.len();
        self.dense_w.copy_from_slice(&params[at..at + dw]);
        at += dw;
        self.dense_b = params[at];
    }

    /// Named parameter ranges within the flat vector, one per layer.
    pub fn layer_spans(&self) -> Vec<(String, std::ops::Range<usize>)> {
        let mut spans = Vec::new();
        let mut at = 0usize;
        for (i, layer) in self.conv.iter().enumerate() {
            let len = layer.w.len() + layer.b.len();
            spans.push((format!("conv{}", i + 1), at..at + len));
            at += len;
        }
        spans.push(("dense".to_string(), at..at + self.dense_w.len() + 1));
        spans
    }

    /// Shapes of the parameter tensors, in flat order.
    pub fn layer_shapes(&self) -> Vec<Vec<usize>> {
        let mut shapes = Vec::new();
        for layer in &self.conv {
            shapes.push(vec![layer.out_ch, layer.in_ch, 3, 3]);
            shapes.push(vec![layer.out_ch]);
        }
        shapes.push(vec![1, self.dense_w.len()]);
        shapes.push(vec![1]);
        shapes
    }

    /// Train full-batch with Adam; returns the trained network and the loss
    /// curve (initial loss first, final loss last: `epochs + 1` entries).
    pub fn train(
        patches: &[Array2<f64>],
        targets: &[u8],
        config: ConvNetConfig,
    ) -> Result<(ConvNet, Vec<f64>)> {
        if patches.is_empty() || patches.len() != targets.len() {
            return Err(Error::Selector("empty or mismatched training batch".into()));
        }
        let mut net = ConvNet::new(config)?;
        let mut params = net.params_flat();
        let mut m = vec![0.0; params.len()];
        let mut v = vec![0.0; params.len()];
        let (beta1, beta2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let lr = config.learning_rate;

        let mut curve = Vec::with_capacity(config.epochs + 1);
        for step in 1..=config.epochs {
            let (loss, grads) = net.batch_loss_and_gradients(patches, targets);
            curve.push(loss);
            let bc1 = 1.0 - beta1.powi(step as i32);
            let bc2 = 1.0 - beta2.powi(step as i32);
            for i in 0..params.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
                params[i] -= lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + eps);
            }
            net.set_params_flat(&params);
        }
        curve.push(net.batch_loss(patches, targets));
        Ok((net, curve))
    }

    /// Serialize as a one-line JSON header followed by the parameters as a
    /// flat little-endian f32 blob.
    pub fn to_blob(&self) -> Vec<u8> {
        let params = self.params_flat();
        let header = serde_json::json!({
            "backend": "CONVNET",
            "config": self.config,
            "layer_shapes": self.layer_shapes(),
            "param_count": params.len(),
        });
        let mut out = serde_json::to_vec(&header).expect("header serializes");
        out.push(b'\n');
        for p in params {
            out.extend_from_slice(&(p as f32).to_le_bytes());
        }
        out
    }

    pub fn from_blob(bytes: &[u8]) -> Result<ConvNet> {
        let newline = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::Selector("missing blob header".into()))?;
        let header: serde_json::Value = serde_json::from_slice(&bytes[..newline])?;
        let config: ConvNetConfig = serde_json::from_value(header["config"].clone())?;
        let count = header["param_count"]
            .as_u64()
            .ok_or_else(|| Error::Selector("missing param_count".into()))? as usize;
        let blob = &bytes[newline + 1..];
        if blob.len() != count * 4 {
            return Err(Error::Selector(format!(
                "parameter blob has {} bytes, expected {}",
                blob.len(),
                count * 4
            )));
        }
        let params: Vec<f64> = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        let mut net = ConvNet::new(config)?;
        if net.params_flat().len() != count {
            return Err(Error::Selector("parameter count mismatch".into()));
        }
        net.set_params_flat(&params);
        Ok(net)
    }
}

struct Gradients {
    conv: Vec<ConvGrad>,
    dense_w: Vec<f64>,
    dense_b: f64,
}

struct ConvGrad {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Gradients {
    fn zeros_like(net: &ConvNet) -> Gradients {
        Gradients {
            conv: net
                .conv
                .iter()
                .map(|l| ConvGrad {
                    w: vec![0.0; l.w.len()],
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
            dense_w: vec![0.0; net.dense_w.len()],
            dense_b: 0.0,
        }
    }

    fn into_flat(self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.conv {
            out.extend_from_slice(&g.w);
            out.extend_from_slice(&g.b);
        }
        out.extend_from_slice(&self.dense_w);
        out.push(self.dense_b);
        out
    }
}

/// Box-Muller standard normal sampler over a uniform RNG.
#[derive(Default)]
struct BoxMuller {
    spare: Option<f64>,
}

impl BoxMuller {
    fn sample<R: Rng>(&mut self, rng: &mut R) -> f64 {
        if let Some(v) = self.spare.take() {
            return v;
        }
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = 2.0 * std::f64::consts::PI * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_batch(s: usize, n: usize, seed: u64) -> (Vec<Array2<f64>>, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patches = Vec::new();
        let mut targets = Vec::new();
        for i in 0..n {
            let bright = i % 2 == 0;
            let patch = Array2::from_shape_fn((s, s), |_| {
                let base = if bright { 0.7 } else { 0.3 };
                (base + rng.gen_range(-0.1..0.1f64)).clamp(0.0, 1.0)
            });
            patches.push(patch);
            targets.push(u8::from(bright));
        }
        (patches, targets)
    }

    #[test]
    fn forward_shapes_follow_the_blocks() {
        let net = ConvNet::new(ConvNetConfig {
            patch_size: 64,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(net.block_dims(), [(8, 32, 32), (16, 16, 16), (32, 8, 8)]);
        let trace = net.forward(&Array2::zeros((64, 64)));
        assert_eq!(trace.inputs[1].dims(), (8, 32, 32));
        assert_eq!(trace.inputs[2].dims(), (16, 16, 16));
        assert_eq!(trace.inputs[3].dims(), (32, 8, 8));
        assert_eq!(trace.gap.len(), 32);
    }

    #[test]
    fn patch_size_must_be_poolable() {
        let bad = ConvNet::new(ConvNetConfig {
            patch_size: 60,
            ..Default::default()
        });
        assert!(bad.is_err());
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let (patches, targets) = toy_batch(16, 2, 3);
        let mut net = ConvNet::new(ConvNetConfig {
            patch_size: 16,
            seed: 9,
            ..Default::default()
        })
        .unwrap();
        let (_, grads) = net.batch_loss_and_gradients(&patches, &targets);
        let params = net.params_flat();
        let spans = net.layer_spans();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let eps = 1e-5;
        for (name, span) in spans {
            for _ in 0..20 {
                let idx = rng.gen_range(span.clone());
                let mut p_plus = params.clone();
                let mut p_minus = params.clone();
                p_plus[idx] += eps;
                p_minus[idx] -= eps;
                net.set_params_flat(&p_plus);
                let lp = net.batch_loss(&patches, &targets);
                net.set_params_flat(&p_minus);
                let lm = net.batch_loss(&patches, &targets);
                let fd = (lp - lm) / (2.0 * eps);
                let rel = (grads[idx] - fd).abs() / fd.abs().max(1e-6);
                assert!(
                    rel < 1e-3,
                    "{name}[{idx}]: analytic {} vs fd {fd} (rel {rel})",
                    grads[idx]
                );
            }
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let (patches, targets) = toy_batch(16, 6, 4);
        let config = ConvNetConfig {
            patch_size: 16,
            seed: 123,
            learning_rate: 1e-3,
            epochs: 5,
        };
        let (net1, curve1) = ConvNet::train(&patches, &targets, config).unwrap();
        let (net2, curve2) = ConvNet::train(&patches, &targets, config).unwrap();
        assert_eq!(net1.params_flat(), net2.params_flat());
        assert_eq!(curve1, curve2);
    }

    #[test]
    fn loss_decreases_on_separable_toy_data() {
        let (patches, targets) = toy_batch(16, 8, 5);
        let config = ConvNetConfig {
            patch_size: 16,
            seed: 21,
            learning_rate: 1e-2,
            epochs: 60,
        };
        let (_, curve) = ConvNet::train(&patches, &targets, config).unwrap();
        assert!(
            curve.last().unwrap() < &(curve[0] * 0.5),
            "loss {} -> {}",
            curve[0],
            curve.last().unwrap()
        );
    }

    #[test]
    fn blob_round_trip_preserves_f32_params() {
        let net = ConvNet::new(ConvNetConfig {
            patch_size: 16,
            seed: 31,
            ..Default::default()
        })
        .unwrap();
        let blob = net.to_blob();
        let back = ConvNet::from_blob(&blob).unwrap();
        let expected: Vec<f64> = net.params_flat().iter().map(|&p| p as f32 as f64).collect();
        assert_eq!(back.params_flat(), expected);
        assert_eq!(back.config, net.config);
    }
}
