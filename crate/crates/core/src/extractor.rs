//! Multi-scale image features: a deterministic toy pyramid standing in for a
//! pretrained network, and the `GSFM` file format for externally computed
//! feature maps.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::tensor::{gemm, Op};

/// The four feature taps. Stride and width are fixed per layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum LayerId {
    L1,
    L2,
    L3,
    L4,
}

impl LayerId {
    pub const ALL: [LayerId; 4] = [LayerId::L1, LayerId::L2, LayerId::L3, LayerId::L4];
    /// The layer features are embedded from.
    pub const EMBED: LayerId = LayerId::L3;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn stride(self) -> usize {
        1 << self.index()
    }

    pub fn channels(self) -> usize {
        64 << self.index()
    }

    pub fn from_tag(tag: u8) -> Option<LayerId> {
        match tag {
            1 => Some(LayerId::L1),
            2 => Some(LayerId::L2),
            3 => Some(LayerId::L3),
            4 => Some(LayerId::L4),
            _ => None,
        }
    }

    pub fn tag(self) -> u8 {
        self.index() as u8 + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureSource {
    Toy,
    External,
}

/// `H × W × C` feature image tied to one layer of the fixed table.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    layer: LayerId,
    source: FeatureSource,
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(layer: LayerId, source: FeatureSource, height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * layer.channels() {
            return Err(Error::Shape(format!(
                "{} values for a {height}×{width}×{} {layer:?} map",
                data.len(),
                layer.channels()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("feature map has non-finite values".into()));
        }
        Ok(FeatureMap { layer, source, height, width, data })
    }

    pub fn from_image(layer: LayerId, source: FeatureSource, img: &Image) -> Result<Self> {
        if img.channels != layer.channels() {
            return Err(Error::Shape(format!("{} channels for layer {layer:?}", img.channels)));
        }
        Self::new(layer, source, img.height, img.width, img.data.iter().map(|&v| v as f32).collect())
    }

    pub fn layer(&self) -> LayerId {
        self.layer
    }

    pub fn source(&self) -> FeatureSource {
        self.source
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.layer.channels()
    }

    pub fn stride(&self) -> usize {
        self.layer.stride()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_image(&self) -> Image {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels(),
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }

    /// `GSFM` bytes: magic, version u16, layer u8, stride u8, C u16, H u32,
    /// W u32, f32 LE payload, then a CRC32 of everything before it.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(GSFM_HEADER + self.data.len() * 4 + 4);
        out.extend_from_slice(b"GSFM");
        out.extend_from_slice(&GSFM_VERSION.to_le_bytes());
        out.push(self.layer.tag());
        out.push(self.stride() as u8);
        out.extend_from_slice(&(self.channels() as u16).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 || &bytes[..4] != b"GSFM" {
            return Err(Error::Format("bad magic, expected GSFM".into()));
        }
        if bytes.len() < GSFM_HEADER + 4 {
            return Err(Error::Format("truncated GSFM header".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != GSFM_VERSION {
            return Err(Error::Format(format!("unsupported GSFM version {version}")));
        }
        let layer = LayerId::from_tag(bytes[6])
            .ok_or_else(|| Error::Format(format!("unknown layer id {}", bytes[6])))?;
        let stride = bytes[7] as usize;
        let channels = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        if stride != layer.stride() || channels != layer.channels() {
            return Err(Error::Format(format!(
                "layer {layer:?} must have stride {} and {} channels, header says {stride} and {channels}",
                layer.stride(),
                layer.channels()
            )));
        }
        let h = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let w = u32::from_le_bytes(bytes[14..18].try_into().unwrap()) as usize;
        let payload = h
            .checked_mul(w)
            .and_then(|n| n.checked_mul(channels))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("GSFM dimensions overflow".into()))?;
        let expected = GSFM_HEADER + payload + 4;
        if bytes.len() < expected {
            return Err(Error::Format(format!("truncated GSFM payload: {} of {expected} bytes", bytes.len())));
        }
        if bytes.len() > expected {
            return Err(Error::Format("trailing bytes after GSFM checksum".into()));
        }
        let body_end = GSFM_HEADER + payload;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let actual = crc32fast::hash(&bytes[..body_end]);
        if stored != actual {
            return Err(Error::Format(format!("GSFM checksum mismatch: stored {stored:08x}, computed {actual:08x}")));
        }
        let data = bytes[GSFM_HEADER..body_end]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(layer, FeatureSource::External, h, w, data)
    }

    /// CRC32 that terminates the encoded file.
    pub fn checksum(&self) -> u32 {
        let bytes = self.to_bytes();
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap())
    }
}

const GSFM_VERSION: u16 = 1;
const GSFM_HEADER: usize = 18;

pub fn load_feature_map(path: impl AsRef<Path>) -> Result<FeatureMap> {
    let path = path.as_ref();
    FeatureMap::from_bytes(&std::fs::read(path).map_err(Error::io_at(path))?)
}

pub fn save_feature_map(map: &FeatureMap, path: impl AsRef<Path>) -> Result<()> {
    crate::manifest::write_atomic(path.as_ref(), &map.to_bytes())
}

/// One 3×3 convolution with replicate padding followed by clamping at zero.
#[derive(Clone, Debug)]
struct ConvStage {
    c_in: usize,
    c_out: usize,
    /// `c_out × 9·c_in`, column `(ky·3 + kx)·c_in + ci`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

fn im2col(input: &Image) -> Vec<f64> {
    let (h, w, c) = (input.height, input.width, input.channels);
    let mut col = vec![0.0; h * w * 9 * c];
    for y in 0..h {
        for x in 0..w {
            let row = &mut col[(y * w + x) * 9 * c..(y * w + x + 1) * 9 * c];
            for ky in 0..3 {
                let sy = (y + ky).saturating_sub(1).min(h - 1);
                for kx in 0..3 {
                    let sx = (x + kx).saturating_sub(1).min(w - 1);
                    let at = (ky * 3 + kx) * c;
                    row[at..at + c].copy_from_slice(input.pixel(sy, sx));
                }
            }
        }
    }
    col
}

fn col2im(col: &[f64], h: usize, w: usize, c: usize) -> Image {
    let mut img = Image::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            let row = &col[(y * w + x) * 9 * c..(y * w + x + 1) * 9 * c];
            for ky in 0..3 {
                let sy = (y + ky).saturating_sub(1).min(h - 1);
                for kx in 0..3 {
                    let sx = (x + kx).saturating_sub(1).min(w - 1);
                    let at = (ky * 3 + kx) * c;
                    for (o, &g) in img.pixel_mut(sy, sx).iter_mut().zip(&row[at..at + c]) {
                        *o += g;
                    }
                }
            }
        }
    }
    img
}

fn avg_pool2(input: &Image) -> Image {
    let (h, w, c) = (input.height / 2, input.width / 2, input.channels);
    let mut out = Image::zeros(h, w, c);
    for y in 0..h {
        for x in 0..w {
            let o = out.pixel_mut(y, x);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                for (a, &v) in o.iter_mut().zip(input.pixel(2 * y + dy, 2 * x + dx)) {
                    *a += 0.25 * v;
                }
            }
        }
    }
    out
}

fn avg_pool2_backward(grad: &Image, into: &mut Image) {
    for y in 0..grad.height {
        for x in 0..grad.width {
            let g = grad.pixel(y, x);
            for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                for (a, &v) in into.pixel_mut(2 * y + dy, 2 * x + dx).iter_mut().zip(g) {
                    *a += 0.25 * v;
                }
            }
        }
    }
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct ExtractTrace {
    /// Post-clamp outputs of the four layers.
    pub layers: Vec<Image>,
}

/// Deterministic stand-in feature extractor: four conv stages with 2×2
/// average pooling between them, widths 64/128/256/512.
#[derive(Clone, Debug)]
pub struct ToyExtractor {
    seed: u64,
    stages: Vec<ConvStage>,
}

impl ToyExtractor {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7f4a_7c15_9e37_79b9);
        let mut c_in = 3;
        let stages = LayerId::ALL
            .iter()
            .map(|l| {
                let c_out = l.channels();
                let fan_in = 9 * c_in;
                let a = (6.0 / fan_in as f64).sqrt();
                let weights = (0..c_out * fan_in).map(|_| rng.random_range(-a..a)).collect();
                let bias = (0..c_out).map(|_| rng.random_range(-0.05..0.05)).collect();
                let st = ConvStage { c_in, c_out, weights, bias };
                c_in = c_out;
                st
            })
            .collect();
        ToyExtractor { seed, stages }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check_input(image: &Image) -> Result<()> {
        if image.channels != 3 {
            return Err(Error::Shape(format!("extractor needs RGB input, got {} channels", image.channels)));
        }
        if image.height == 0 || image.width == 0 || image.height % 8 != 0 || image.width % 8 != 0 {
            return Err(Error::Shape(format!(
                "image is {}×{}; both sides must be positive multiples of 8",
                image.height, image.width
            )));
        }
        Ok(())
    }

    /// Forward pass in f64, keeping activations.
    pub fn forward(&self, image: &Image) -> Result<ExtractTrace> {
        Self::check_input(image)?;
        let mut layers: Vec<Image> = Vec::with_capacity(4);
        for (s, st) in self.stages.iter().enumerate() {
            let pooled;
            let input = if s == 0 {
                image
            } else {
                pooled = avg_pool2(&layers[s - 1]);
                &pooled
            };
            let (h, w) = (input.height, input.width);
            let col = im2col(input);
            let mut out = Image::zeros(h, w, st.c_out);
            for px in out.data.chunks_exact_mut(st.c_out) {
                px.copy_from_slice(&st.bias);
            }
            gemm(h * w, 9 * st.c_in, st.c_out, 1.0, &col, Op::N, &st.weights, Op::T, 1.0, &mut out.data);
            for v in &mut out.data {
                *v = v.max(0.0);
            }
            layers.push(out);
        }
        Ok(ExtractTrace { layers })
    }

    /// Gradient w.r.t. the input image given per-layer output gradients
    /// (`None` for layers that receive no gradient).
    pub fn backward(&self, trace: &ExtractTrace, grads: &[Option<Image>]) -> Result<Image> {
        if grads.len() != 4 {
            return Err(Error::Shape("need one gradient slot per layer".into()));
        }
        let mut carry: Option<Image> = None;
        for s in (0..4).rev() {
            let st = &self.stages[s];
            let out = &trace.layers[s];
            let mut g = carry.take().unwrap_or_else(|| Image::zeros(out.height, out.width, out.channels));
            if let Some(extra) = &grads[s] {
                if !extra.same_shape(out) {
                    return Err(Error::Shape(format!("gradient for layer {} has the wrong shape", s + 1)));
                }
                for (a, b) in g.data.iter_mut().zip(&extra.data) {
                    *a += b;
                }
            }
            for (gv, &ov) in g.data.iter_mut().zip(&out.data) {
                if ov <= 0.0 {
                    *gv = 0.0;
                }
            }
            let (h, w) = (out.height, out.width);
            let mut gcol = vec![0.0; h * w * 9 * st.c_in];
            gemm(h * w, st.c_out, 9 * st.c_in, 1.0, &g.data, Op::N, &st.weights, Op::N, 0.0, &mut gcol);
            let g_in = col2im(&gcol, h, w, st.c_in);
            if s == 0 {
                return Ok(g_in);
            }
            let prev = &trace.layers[s - 1];
            let mut g_prev = Image::zeros(prev.height, prev.width, prev.channels);
            avg_pool2_backward(&g_in, &mut g_prev);
            carry = Some(g_prev);
        }
        unreachable!("stage 0 returns")
    }

    /// Feature maps for all four layers.
    pub fn extract(&self, image: &Image) -> Result<Vec<FeatureMap>> {
        let trace = self.forward(image)?;
        LayerId::ALL
            .iter()
            .zip(&trace.layers)
            .map(|(&l, img)| FeatureMap::from_image(l, FeatureSource::Toy, img))
            .collect()
    }

    /// Feature map of a single layer.
    pub fn extract_layer(&self, image: &Image, layer: LayerId) -> Result<FeatureMap> {
        let trace = self.forward(image)?;
        FeatureMap::from_image(layer, FeatureSource::Toy, &trace.layers[layer.index()])
    }
}
