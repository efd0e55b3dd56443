//! Zero-shot transfer: per-Gaussian features re-normalized to a style
//! image's channel statistics, and convex blends of transferred sets.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use crate::counters;
use crate::error::{Error, Result};
use crate::extractor::{FeatureMap, LayerId, ToyExtractor};
use crate::image::Image;
use crate::scene::{Channel, GaussianScene};

/// Division guard for channels with zero spread.
pub const ADAIN_EPS: f64 = 1e-8;

/// Per-channel population mean and standard deviation.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Welford accumulation over `rows` of width `channels`.
pub fn channel_stats<T: Copy + Into<f64>>(data: &[T], channels: usize) -> Result<ChannelStats> {
    if channels == 0 || data.is_empty() || data.len() % channels != 0 {
        return Err(Error::Shape(format!("cannot take statistics of {} values in {channels} channels", data.len())));
    }
    let mut mean = vec![0.0; channels];
    let mut m2 = vec![0.0; channels];
    for (n, row) in data.chunks_exact(channels).enumerate() {
        let n = (n + 1) as f64;
        for ((mu, s), &v) in mean.iter_mut().zip(&mut m2).zip(row) {
            let v: f64 = v.into();
            let delta = v - *mu;
            *mu += delta / n;
            *s += delta * (v - *mu);
        }
    }
    let n = (data.len() / channels) as f64;
    let std = m2.iter().map(|s| (s / n).max(0.0).sqrt()).collect();
    Ok(ChannelStats { mean, std })
}

#[derive(Clone, Debug, PartialEq)]
pub struct StyleStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// SHA-256 of the style source (image or feature file).
    pub source_id: [u8; 32],
}

impl StyleStats {
    pub fn new(mean: Vec<f64>, std: Vec<f64>, source_id: [u8; 32]) -> Result<Self> {
        if mean.len() != std.len() || mean.is_empty() {
            return Err(Error::Shape(format!("{} means and {} deviations", mean.len(), std.len())));
        }
        if mean.iter().chain(&std).any(|v| !v.is_finite()) || std.iter().any(|&s| s < 0.0) {
            return Err(Error::Format("style statistics must be finite with non-negative std".into()));
        }
        Ok(StyleStats { mean, std, source_id })
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn source_hex(&self) -> String {
        self.source_id.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `GSST` bytes: magic, D u16, mean (f32), std (f32), 32-byte source hash.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 8 * self.channels() + 32);
        out.extend_from_slice(b"GSST");
        out.extend_from_slice(&(self.channels() as u16).to_le_bytes());
        for v in self.mean.iter().chain(&self.std) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out.extend_from_slice(&self.source_id);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != b"GSST" {
            return Err(Error::Format("bad magic, expected GSST".into()));
        }
        let d = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
        if bytes.len() != 6 + 8 * d + 32 {
            return Err(Error::Format(format!("GSST file is {} bytes, expected {}", bytes.len(), 6 + 8 * d + 32)));
        }
        let vals: Vec<f64> = bytes[6..6 + 8 * d]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let source_id = bytes[6 + 8 * d..].try_into().unwrap();
        Self::new(vals[..d].to_vec(), vals[d..].to_vec(), source_id)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(Error::io_at(path))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::manifest::write_atomic(path.as_ref(), &self.to_bytes())
    }
}

/// Channel statistics of a style feature map over all spatial positions.
/// The source id is the hash of the map's `GSFM` encoding.
pub fn compute_style_stats(map: &FeatureMap) -> Result<StyleStats> {
    let id = sha256(&map.to_bytes());
    compute_style_stats_with_id(map, id)
}

pub fn compute_style_stats_with_id(map: &FeatureMap, source_id: [u8; 32]) -> Result<StyleStats> {
    if map.height() == 0 || map.width() == 0 {
        return Err(Error::Shape("style feature map is empty".into()));
    }
    let s = channel_stats(map.data(), map.channels())?;
    StyleStats::new(s.mean, s.std, source_id)
}

pub(crate) fn sha256(bytes: &[u8]) -> [u8; 32] {
    use sha2::Digest;
    sha2::Sha256::digest(bytes).into()
}

/// Population statistics of `high_feat` over all Gaussians.
pub fn compute_scene_stats(scene: &GaussianScene) -> Result<ChannelStats> {
    let high = scene
        .high_feat()
        .ok_or_else(|| Error::Contract("scene has no high_feat; embed it first".into()))?;
    channel_stats(high.data(), high.dim())
}

/// `σ_s ⊙ (f − μ) ⊘ max(σ, ε) + μ_s` for every row of `feats`.
pub fn adain_values(feats: &Channel, scene: &ChannelStats, style: &StyleStats) -> Result<Vec<f32>> {
    let d = feats.dim();
    if scene.mean.len() != d || style.channels() != d {
        return Err(Error::Shape(format!(
            "features have {d} channels, scene stats {} and style stats {}",
            scene.mean.len(),
            style.channels()
        )));
    }
    counters::bump_adain();
    let gain: Vec<f64> = style
        .std
        .iter()
        .zip(&scene.std)
        .map(|(s, c)| s / c.max(ADAIN_EPS))
        .collect();
    let mut out = vec![0f32; feats.data().len()];
    crate::par::for_each_chunk_mut(&mut out, 256 * d, |c, chunk| {
        let src = &feats.data()[c * 256 * d..c * 256 * d + chunk.len()];
        for (o_row, f_row) in chunk.chunks_exact_mut(d).zip(src.chunks_exact(d)) {
            for j in 0..d {
                o_row[j] = (gain[j] * (f_row[j] as f64 - scene.mean[j]) + style.mean[j]) as f32;
            }
        }
    });
    Ok(out)
}

/// Re-normalizes `high_feat` to the style statistics into `transformed_feat`.
pub fn adain_transfer(scene: &mut GaussianScene, style: &StyleStats) -> Result<()> {
    let stats = compute_scene_stats(scene)?;
    let high = scene.high_feat().expect("checked by compute_scene_stats");
    let d = high.dim();
    let out = adain_values(high, &stats, style)?;
    scene.set_transformed_feat(d, out)
}

/// Elementwise convex combination of equally shaped feature sets.
pub fn interpolate_styles(sets: &[&[f32]], weights: &[f64]) -> Result<Vec<f32>> {
    if sets.is_empty() || sets.len() != weights.len() {
        return Err(Error::Shape(format!("{} feature sets and {} weights", sets.len(), weights.len())));
    }
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::Contract("interpolation weights must be non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::Contract(format!("interpolation weights sum to {total}, expected 1")));
    }
    let n = sets[0].len();
    if sets.iter().any(|s| s.len() != n) {
        return Err(Error::Shape("feature sets differ in size".into()));
    }
    let active: Vec<(&[f32], f64)> = sets
        .iter()
        .zip(weights)
        .filter(|(_, &w)| w != 0.0)
        .map(|(s, &w)| (*s, w))
        .collect();
    if let [(only, w)] = active.as_slice() {
        if *w == 1.0 {
            return Ok(only.to_vec());
        }
    }
    Ok((0..n)
        .map(|i| active.iter().map(|(s, w)| w * s[i] as f64).sum::<f64>() as f32)
        .collect())
}

/// Style statistics keyed by source hash; reads are shared, inserts exclusive.
#[derive(Debug, Default)]
pub struct StyleStatsCache {
    inner: RwLock<HashMap<[u8; 32], Arc<StyleStats>>>,
}

impl StyleStatsCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, id: &[u8; 32]) -> Option<Arc<StyleStats>> {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).get(id).cloned()
    }

    pub fn insert(&self, stats: StyleStats) -> Arc<StyleStats> {
        let mut map = self.inner.write().unwrap_or_else(|e| e.into_inner());
        map.entry(stats.source_id).or_insert_with(|| Arc::new(stats)).clone()
    }

    /// Returns the cached entry for `id`, computing it on a miss.
    pub fn get_or_compute(&self, id: [u8; 32], f: impl FnOnce() -> Result<StyleStats>) -> Result<Arc<StyleStats>> {
        if let Some(s) = self.get(&id) {
            return Ok(s);
        }
        let mut stats = f()?;
        stats.source_id = id;
        Ok(self.insert(stats))
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self) -> Vec<[u8; 32]> {
        let mut ids: Vec<_> = self.inner.read().unwrap_or_else(|e| e.into_inner()).keys().copied().collect();
        ids.sort();
        ids
    }
}

/// Top-left crop to the largest multiple of `m` on each side.
pub fn crop_to_multiple(img: &Image, m: usize) -> Result<Image> {
    let (h, w) = (img.height / m * m, img.width / m * m);
    if h == 0 || w == 0 {
        return Err(Error::Shape(format!("{}×{} image is smaller than {m}×{m}", img.height, img.width)));
    }
    let mut out = Image::zeros(h, w, img.channels);
    for y in 0..h {
        let row = y * img.width * img.channels;
        out.data[y * w * img.channels..(y + 1) * w * img.channels]
            .copy_from_slice(&img.data[row..row + w * img.channels]);
    }
    Ok(out)
}

/// Style statistics from a style source: a `GSST` file, a `GSFM` map of the
/// embedding layer, or a PNG image run through `extractor` (cropped to a
/// multiple of 8). Except for `GSST`, which carries its own id, the id is
/// the SHA-256 of `bytes`.
pub fn style_from_bytes(bytes: &[u8], extractor: &ToyExtractor) -> Result<StyleStats> {
    if bytes.starts_with(b"GSST") {
        return StyleStats::from_bytes(bytes);
    }
    let id = sha256(bytes);
    let map = if bytes.starts_with(b"GSFM") {
        let map = FeatureMap::from_bytes(bytes)?;
        if map.layer() != LayerId::EMBED {
            return Err(Error::Shape(format!("style map is from layer {:?}, need {:?}", map.layer(), LayerId::EMBED)));
        }
        map
    } else {
        let img = crop_to_multiple(&Image::from_png(bytes)?, 8)?;
        extractor.extract_layer(&img, LayerId::EMBED)?
    };
    compute_style_stats_with_id(&map, id)
}
