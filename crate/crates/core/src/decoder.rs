//! Neighborhood convolution over the Gaussian point set.
//!
//! Each layer computes `out[p] = φ(Σ_k W_k · x[knn(p, k)] + B)`. The fast path
//! gathers each Gaussian's neighbors into one row of length `K·D_in` (rank
//! order, self first) and multiplies by the `D_out × K·D_in` matrix whose
//! column block `k` is `W_k`; the naive path runs the sum directly.

use std::path::Path;

use rand::{Rng, SeedableRng};

use crate::counters;
use crate::error::{Error, Result};
use crate::par;
use crate::scene::{GaussianScene, KnnIndex, ReverseKnn};
use crate::style::{self, StyleStats};
use crate::tensor::{gemm, Op};

/// Default neighborhood size.
pub const DEFAULT_K: usize = 8;
/// Default channel schedule, input width first.
pub const DEFAULT_SCHEDULE: [usize; 6] = [256, 256, 128, 64, 32, 3];

const ROW_CHUNK: usize = 128;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
    Identity,
}

impl Activation {
    fn tag(self) -> u8 {
        match self {
            Activation::Sigmoid => 0,
            Activation::Identity => 1,
        }
    }

    fn from_tag(t: u8) -> Option<Self> {
        match t {
            0 => Some(Activation::Sigmoid),
            1 => Some(Activation::Identity),
            _ => None,
        }
    }

    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation's output.
    #[inline]
    fn grad_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConvLayer {
    k: usize,
    d_in: usize,
    d_out: usize,
    /// `D_out × K·D_in` row-major; entry `(o, k·D_in + i)` is `W_k[o][i]`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl ConvLayer {
    pub fn new(
        k: usize,
        d_in: usize,
        d_out: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if k == 0 || d_in == 0 || d_out == 0 {
            return Err(Error::Shape("conv layer dimensions must be positive".into()));
        }
        if weights.len() != d_out * k * d_in || bias.len() != d_out {
            return Err(Error::Shape(format!(
                "{} weights and {} biases for K={k}, {d_in}→{d_out}",
                weights.len(),
                bias.len()
            )));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Format("conv layer has non-finite parameters".into()));
        }
        Ok(ConvLayer { k, d_in, d_out, weights, bias, activation })
    }

    pub fn zeros(k: usize, d_in: usize, d_out: usize) -> Self {
        ConvLayer {
            k,
            d_in,
            d_out,
            weights: vec![0.0; d_out * k * d_in],
            bias: vec![0.0; d_out],
            activation: Activation::Sigmoid,
        }
    }

    /// Uniform `±1/√(K·D_in)` weights and biases.
    pub fn random(k: usize, d_in: usize, d_out: usize, rng: &mut impl Rng) -> Self {
        let s = 1.0 / ((k * d_in) as f64).sqrt();
        let mut layer = Self::zeros(k, d_in, d_out);
        layer.weights.iter_mut().for_each(|w| *w = rng.random_range(-s..s));
        layer.bias.iter_mut().for_each(|b| *b = rng.random_range(-s..s));
        layer
    }

    /// Builds a layer from `K` separate `D_out × D_in` matrices.
    pub fn from_matrices(mats: &[Vec<f64>], bias: Vec<f64>, activation: Activation) -> Result<Self> {
        let k = mats.len();
        let d_out = bias.len();
        if k == 0 || d_out == 0 || mats[0].len() % d_out != 0 {
            return Err(Error::Shape("weight matrices do not match the bias width".into()));
        }
        let d_in = mats[0].len() / d_out;
        if mats.iter().any(|m| m.len() != d_out * d_in) {
            return Err(Error::Shape("weight matrices differ in shape".into()));
        }
        let mut w = vec![0.0; d_out * k * d_in];
        for (kk, m) in mats.iter().enumerate() {
            for o in 0..d_out {
                w[o * k * d_in + kk * d_in..o * k * d_in + (kk + 1) * d_in].copy_from_slice(&m[o * d_in..(o + 1) * d_in]);
            }
        }
        Self::new(k, d_in, d_out, w, bias, activation)
    }

    /// `W_k` as a `D_out × D_in` matrix.
    pub fn matrix(&self, k: usize) -> Vec<f64> {
        let kd = self.k * self.d_in;
        (0..self.d_out)
            .flat_map(|o| self.weights[o * kd + k * self.d_in..o * kd + (k + 1) * self.d_in].iter().copied())
            .collect()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn set_activation(&mut self, a: Activation) {
        self.activation = a;
    }

    fn check(&self, feats: &[f64], knn: &KnnIndex) -> Result<usize> {
        if knn.k() != self.k {
            return Err(Error::Shape(format!("KNN has K={}, layer expects K={}", knn.k(), self.k)));
        }
        if feats.len() != knn.len() * self.d_in {
            return Err(Error::Shape(format!(
                "{} feature values for {} Gaussians of width {}",
                feats.len(),
                knn.len(),
                self.d_in
            )));
        }
        Ok(knn.len())
    }

    /// Writes the neighbor rows `first..first+n` into `buf` (`n × K·D_in`).
    fn gather(&self, feats: &[f64], knn: &KnnIndex, first: usize, n: usize, buf: &mut [f64]) {
        let d = self.d_in;
        for r in 0..n {
            let row = &mut buf[r * self.k * d..(r + 1) * self.k * d];
            for (kk, &q) in knn.row(first + r).iter().enumerate() {
                row[kk * d..(kk + 1) * d].copy_from_slice(&feats[q as usize * d..(q as usize + 1) * d]);
            }
        }
    }
}

/// Direct evaluation of the windowed sum, one scalar at a time.
pub fn conv_forward_naive(feats: &[f64], knn: &KnnIndex, layer: &ConvLayer) -> Result<Vec<f64>> {
    let p = layer.check(feats, knn)?;
    let (k, di, dout) = (layer.k, layer.d_in, layer.d_out);
    let mut out = vec![0.0; p * dout];
    for i in 0..p {
        let nbrs = knn.row(i);
        for o in 0..dout {
            let mut acc = layer.bias[o];
            for (kk, &q) in nbrs.iter().enumerate() {
                for c in 0..di {
                    acc += layer.weights[o * k * di + kk * di + c] * feats[q as usize * di + c];
                }
            }
            out[i * dout + o] = layer.activation.apply(acc);
        }
    }
    Ok(out)
}

/// Gather-then-multiply evaluation.
pub fn conv_forward_fast(feats: &[f64], knn: &KnnIndex, layer: &ConvLayer) -> Result<Vec<f64>> {
    let p = layer.check(feats, knn)?;
    let (kd, dout) = (layer.k * layer.d_in, layer.d_out);
    let mut out = vec![0.0; p * dout];
    par::for_each_chunk_mut(&mut out, ROW_CHUNK * dout, |c, chunk| {
        let first = c * ROW_CHUNK;
        let n = chunk.len() / dout;
        let mut buf = vec![0.0; n * kd];
        layer.gather(feats, knn, first, n, &mut buf);
        for row in chunk.chunks_exact_mut(dout) {
            row.copy_from_slice(&layer.bias);
        }
        gemm(n, kd, dout, 1.0, &buf, Op::N, &layer.weights, Op::T, 1.0, chunk);
        for v in chunk.iter_mut() {
            *v = layer.activation.apply(*v);
        }
    });
    Ok(out)
}

/// Input and output of one forward layer, required for its backward pass.
#[derive(Clone, Debug)]
pub struct ConvCache {
    input: Vec<f64>,
    output: Vec<f64>,
}

impl ConvCache {
    pub fn output(&self) -> &[f64] {
        &self.output
    }

    pub fn input(&self) -> &[f64] {
        &self.input
    }
}

pub fn conv_forward_traced(feats: Vec<f64>, knn: &KnnIndex, layer: &ConvLayer) -> Result<ConvCache> {
    let output = conv_forward_fast(&feats, knn, layer)?;
    Ok(ConvCache { input: feats, output })
}

#[derive(Clone, Debug)]
pub struct ConvGrads {
    /// `None` when input gradients were not requested.
    pub feats: Option<Vec<f64>>,
    /// Same layout as [`ConvLayer::weights`].
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ConvGrads {
    /// `∂L/∂W_k` as a `D_out × D_in` matrix.
    pub fn matrix(&self, layer: &ConvLayer, k: usize) -> Vec<f64> {
        let kd = layer.k * layer.d_in;
        (0..layer.d_out)
            .flat_map(|o| self.weights[o * kd + k * layer.d_in..o * kd + (k + 1) * layer.d_in].iter().copied())
            .collect()
    }
}

/// Exact gradients of [`conv_forward_fast`]. Input gradients are gathered
/// per target Gaussian through the reverse index, so the accumulation order
/// is fixed.
pub fn conv_backward(
    cache: &ConvCache,
    knn: &KnnIndex,
    rev: &ReverseKnn,
    layer: &ConvLayer,
    grad_out: &[f64],
    want_feats: bool,
) -> Result<ConvGrads> {
    let p = layer.check(&cache.input, knn)?;
    let (k, di, dout) = (layer.k, layer.d_in, layer.d_out);
    let kd = k * di;
    if grad_out.len() != p * dout || cache.output.len() != p * dout {
        return Err(Error::Shape("output gradient does not match the layer".into()));
    }
    let g_pre: Vec<f64> = grad_out
        .iter()
        .zip(&cache.output)
        .map(|(g, &y)| g * layer.activation.grad_from_output(y))
        .collect();

    let mut bias = vec![0.0; dout];
    for row in g_pre.chunks_exact(dout) {
        for (b, g) in bias.iter_mut().zip(row) {
            *b += g;
        }
    }

    let mut weights = vec![0.0; dout * kd];
    let mut buf = vec![0.0; ROW_CHUNK * kd];
    for first in (0..p).step_by(ROW_CHUNK) {
        let n = ROW_CHUNK.min(p - first);
        layer.gather(&cache.input, knn, first, n, &mut buf[..n * kd]);
        gemm(dout, n, kd, 1.0, &g_pre[first * dout..(first + n) * dout], Op::T, &buf[..n * kd], Op::N, 1.0, &mut weights);
    }

    let feats = if want_feats {
        let mut g_gather = vec![0.0; p * kd];
        par::for_each_chunk_mut(&mut g_gather, ROW_CHUNK * kd, |c, chunk| {
            let n = chunk.len() / kd;
            let g = &g_pre[c * ROW_CHUNK * dout..(c * ROW_CHUNK + n) * dout];
            gemm(n, dout, kd, 1.0, g, Op::N, &layer.weights, Op::N, 0.0, chunk);
        });
        let mut gf = vec![0.0; p * di];
        par::for_each_chunk_mut(&mut gf, ROW_CHUNK * di, |c, chunk| {
            for (local, out) in chunk.chunks_exact_mut(di).enumerate() {
                let q = c * ROW_CHUNK + local;
                for &slot in rev.slots(q) {
                    let (row, rank) = (slot as usize / k, slot as usize % k);
                    let src = &g_gather[row * kd + rank * di..row * kd + (rank + 1) * di];
                    for (o, v) in out.iter_mut().zip(src) {
                        *o += v;
                    }
                }
            }
        });
        Some(gf)
    } else {
        None
    };
    Ok(ConvGrads { feats, weights, bias })
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnDecoder {
    k: usize,
    layers: Vec<ConvLayer>,
}

impl KnnDecoder {
    pub fn new(layers: Vec<ConvLayer>) -> Result<Self> {
        let first = layers.first().ok_or_else(|| Error::Shape("decoder needs at least one layer".into()))?;
        let k = first.k;
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].d_out != w[1].d_in {
                return Err(Error::Shape(format!(
                    "layer {i} outputs {} channels, layer {} expects {}",
                    w[0].d_out,
                    i + 1,
                    w[1].d_in
                )));
            }
        }
        if let Some(l) = layers.iter().find(|l| l.k != k) {
            return Err(Error::Shape(format!("layers disagree on K ({} vs {k})", l.k)));
        }
        if layers.last().unwrap().d_out != 3 {
            return Err(Error::Shape("last layer must output 3 channels".into()));
        }
        Ok(KnnDecoder { k, layers })
    }

    /// Randomly initialized decoder with the given schedule (input width first).
    pub fn random(k: usize, schedule: &[usize], rng: &mut impl Rng) -> Result<Self> {
        if schedule.len() < 2 {
            return Err(Error::Config("schedule needs an input and at least one output width".into()));
        }
        Self::new(schedule.windows(2).map(|w| ConvLayer::random(k, w[0], w[1], rng)).collect())
    }

    /// [`KnnDecoder::random`] drawn from a ChaCha8 stream seeded with `seed`.
    pub fn seeded(k: usize, schedule: &[usize], seed: u64) -> Result<Self> {
        Self::random(k, schedule, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    /// K = 8 with the 256 → 256, 128, 64, 32, 3 schedule.
    pub fn default_random(rng: &mut impl Rng) -> Self {
        Self::random(DEFAULT_K, &DEFAULT_SCHEDULE, rng).expect("default schedule is valid")
    }

    pub fn zeros(k: usize, schedule: &[usize]) -> Result<Self> {
        if schedule.len() < 2 {
            return Err(Error::Config("schedule needs an input and at least one output width".into()));
        }
        Self::new(schedule.windows(2).map(|w| ConvLayer::zeros(k, w[0], w[1])).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [ConvLayer] {
        &mut self.layers
    }

    pub fn d_in(&self) -> usize {
        self.layers[0].d_in
    }

    /// Input width followed by each layer's output width.
    pub fn schedule(&self) -> Vec<usize> {
        std::iter::once(self.d_in()).chain(self.layers.iter().map(|l| l.d_out)).collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Forward pass keeping every layer's activations.
    pub fn forward_traced(&self, feats: Vec<f64>, knn: &KnnIndex) -> Result<Vec<ConvCache>> {
        let mut caches: Vec<ConvCache> = Vec::with_capacity(self.layers.len());
        let mut x = feats;
        for layer in &self.layers {
            let c = conv_forward_traced(x, knn, layer)?;
            x = c.output.clone();
            caches.push(c);
        }
        Ok(caches)
    }

    /// Per-Gaussian RGB for `P × D` features.
    pub fn forward(&self, feats: &[f64], knn: &KnnIndex) -> Result<Vec<f64>> {
        let mut x = conv_forward_fast(feats, knn, &self.layers[0])?;
        for layer in &self.layers[1..] {
            x = conv_forward_fast(&x, knn, layer)?;
        }
        Ok(x)
    }

    /// Parameter gradients for every layer given `∂L/∂rgb`; the input
    /// gradient of the first layer is skipped.
    pub fn backward(
        &self,
        caches: &[ConvCache],
        knn: &KnnIndex,
        rev: &ReverseKnn,
        grad_rgb: &[f64],
    ) -> Result<Vec<ConvGrads>> {
        if caches.len() != self.layers.len() {
            return Err(Error::Shape("trace does not match the decoder".into()));
        }
        let mut grads: Vec<ConvGrads> = Vec::with_capacity(self.layers.len());
        let mut g = grad_rgb.to_vec();
        for (i, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let gr = conv_backward(cache, knn, rev, layer, &g, i > 0)?;
            if let Some(f) = &gr.feats {
                g = f.clone();
            }
            grads.push(gr);
        }
        grads.reverse();
        Ok(grads)
    }

    /// `GSDC` bytes: magic, version u16, K u16, layer count u16, then per
    /// layer D_in u16, D_out u16, activation u8, the K weight matrices
    /// (each `D_out × D_in`, row-major f32) and the bias (f32).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(b"GSDC");
        out.extend_from_slice(&GSDC_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.k as u16).to_le_bytes());
        out.extend_from_slice(&(self.layers.len() as u16).to_le_bytes());
        for l in &self.layers {
            out.extend_from_slice(&(l.d_in as u16).to_le_bytes());
            out.extend_from_slice(&(l.d_out as u16).to_le_bytes());
            out.push(l.activation.tag());
            for k in 0..l.k {
                for v in l.matrix(k) {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            for v in &l.bias {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader { bytes, pos: 0 };
        if r.take(4)? != b"GSDC" {
            return Err(Error::Format("bad magic, expected GSDC".into()));
        }
        let version = r.u16()?;
        if version != GSDC_VERSION {
            return Err(Error::Format(format!("unsupported GSDC version {version}")));
        }
        let k = r.u16()? as usize;
        let n = r.u16()? as usize;
        let mut layers = Vec::with_capacity(n);
        for _ in 0..n {
            let d_in = r.u16()? as usize;
            let d_out = r.u16()? as usize;
            let tag = r.take(1)?[0];
            let act = Activation::from_tag(tag).ok_or_else(|| Error::Format(format!("unknown activation tag {tag}")))?;
            let mats: Vec<Vec<f64>> = (0..k).map(|_| r.f32s(d_out * d_in)).collect::<Result<_>>()?;
            let bias = r.f32s(d_out)?;
            let layer = if k == 0 {
                return Err(Error::Format("GSDC with K = 0".into()));
            } else {
                ConvLayer::from_matrices(&mats, bias, act)?
            };
            layers.push(layer);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after GSDC layers".into()));
        }
        Self::new(layers)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(Error::io_at(path))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::manifest::write_atomic(path.as_ref(), &self.to_bytes())
    }
}

const GSDC_VERSION: u16 = 1;

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse { offset: self.pos as u64, msg: "truncated GSDC file".into() });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        Ok(self
            .take(n * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }
}

/// Largest color strictly below 1 in f32.
const COLOR_MAX: f32 = 1.0 - f32::EPSILON / 2.0;
const COLOR_MIN: f32 = f32::EPSILON / 2.0;

/// Decodes `P × D` features to per-Gaussian colors in the open unit cube.
pub fn decode_values(feats: &[f32], decoder: &KnnDecoder, knn: &KnnIndex) -> Result<Vec<[f32; 3]>> {
    if knn.k() != decoder.k {
        return Err(Error::Shape(format!("KNN has K={}, decoder expects K={}", knn.k(), decoder.k)));
    }
    counters::bump_decode();
    let x: Vec<f64> = feats.iter().map(|&v| v as f64).collect();
    let rgb = decoder.forward(&x, knn)?;
    Ok(rgb
        .chunks_exact(3)
        .map(|c| [0, 1, 2].map(|j| (c[j] as f32).clamp(COLOR_MIN, COLOR_MAX)))
        .collect())
}

/// Decodes `transformed_feat` into `styled_color`.
pub fn decode(scene: &mut GaussianScene, decoder: &KnnDecoder, knn: &KnnIndex) -> Result<()> {
    let t = scene
        .transformed_feat()
        .ok_or_else(|| Error::Contract("scene has no transformed_feat; run a style transfer first".into()))?;
    if t.dim() != decoder.d_in() {
        return Err(Error::Shape(format!("transformed_feat has {} channels, decoder expects {}", t.dim(), decoder.d_in())));
    }
    if knn.len() != scene.len() {
        return Err(Error::Shape("KNN index belongs to a different scene".into()));
    }
    let colors = decode_values(t.data(), decoder, knn)?;
    scene.set_styled_color(colors)
}

/// Style transfer followed by decoding: fills `transformed_feat` and
/// `styled_color`. This is the only step that depends on the style.
pub fn stylize(scene: &mut GaussianScene, style: &StyleStats, decoder: &KnnDecoder, knn: &KnnIndex) -> Result<()> {
    style::adain_transfer(scene, style)?;
    decode(scene, decoder, knn)
}

/// Transfers each style, blends the transferred sets with simplex
/// `weights`, and decodes the blend. A single style with weight 1 gives the
/// same result as [`stylize`].
pub fn stylize_blend(
    scene: &mut GaussianScene,
    styles: &[&StyleStats],
    weights: &[f64],
    decoder: &KnnDecoder,
    knn: &KnnIndex,
) -> Result<()> {
    if styles.len() != weights.len() || styles.is_empty() {
        return Err(Error::Contract(format!("{} styles and {} weights", styles.len(), weights.len())));
    }
    let stats = style::compute_scene_stats(scene)?;
    let high = scene.high_feat().expect("checked by compute_scene_stats");
    let d = high.dim();
    let sets = styles
        .iter()
        .map(|s| style::adain_values(high, &stats, s))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&[f32]> = sets.iter().map(Vec::as_slice).collect();
    let blended = style::interpolate_styles(&refs, weights)?;
    scene.set_transformed_feat(d, blended)?;
    decode(scene, decoder, knn)
}

/// Copies a trained decoder for a new scene after checking its shape.
pub fn init_decoder_from(source: &KnnDecoder, k: usize, schedule: &[usize]) -> Result<KnnDecoder> {
    let have = source.schedule();
    if source.k != k || have != schedule {
        return Err(Error::Config(format!(
            "decoder shape mismatch: source has K={} schedule {:?}, expected K={k} schedule {:?}",
            source.k, have, schedule
        )));
    }
    Ok(source.clone())
}
