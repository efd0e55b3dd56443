//! Feature embedding: per-Gaussian low-dimensional features rendered at
//! feature-map resolution and lifted to the teacher's width by a learned
//! affine map.
//!
//! Compositing is linear in the per-Gaussian values, so lifting the rendered
//! low-dimensional feature with `A·F′ + b·Σw` gives exactly the render of the
//! per-Gaussian lifted features `A·f′ + b`. Training only ever renders `D′`
//! channels.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extractor::{FeatureMap, LayerId};
use crate::image::Image;
use crate::optim::{Adam, AdamConfig};
use crate::render::{rasterize, scale_camera, BlendCache, Camera, RenderOptions};
use crate::scene::GaussianScene;
use crate::tensor::{gemm, Op};

/// `F = A·F′ + b·Σw`, with `A` stored `D × D′` row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineLift {
    d: usize,
    d_low: usize,
    a: Vec<f64>,
    b: Vec<f64>,
}

impl AffineLift {
    pub fn new(d: usize, d_low: usize, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if d == 0 || d_low == 0 {
            return Err(Error::Shape("affine lift needs non-zero widths".into()));
        }
        if a.len() != d * d_low || b.len() != d {
            return Err(Error::Shape(format!(
                "A has {} entries and b has {}, expected {d}×{d_low} and {d}",
                a.len(),
                b.len()
            )));
        }
        if a.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(Error::Format("affine lift has non-finite entries".into()));
        }
        Ok(AffineLift { d, d_low, a, b })
    }

    /// `A = [I; 0]`, `b = 0`.
    pub fn identity(d: usize, d_low: usize) -> Result<Self> {
        let mut a = vec![0.0; d * d_low];
        for i in 0..d.min(d_low) {
            a[i * d_low + i] = 1.0;
        }
        Self::new(d, d_low, a, vec![0.0; d])
    }

    /// `A ~ U(±1/√D′)`, `b = 0`.
    pub fn random(d: usize, d_low: usize, rng: &mut impl Rng) -> Result<Self> {
        let s = 1.0 / (d_low as f64).sqrt();
        let a = (0..d * d_low).map(|_| rng.random_range(-s..s)).collect();
        Self::new(d, d_low, a, vec![0.0; d])
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn d_low(&self) -> usize {
        self.d_low
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    /// `GSAF` bytes: magic, D u16, D′ u16, A (f32, row-major), b (f32).
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * (self.a.len() + self.b.len()));
        out.extend_from_slice(b"GSAF");
        out.extend_from_slice(&(self.d as u16).to_le_bytes());
        out.extend_from_slice(&(self.d_low as u16).to_le_bytes());
        for v in self.a.iter().chain(&self.b) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != b"GSAF" {
            return Err(Error::Format("bad magic, expected GSAF".into()));
        }
        let d = u16::from_le_bytes([bytes[4], bytes[5]]) as usize;
        let d_low = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let n = d * d_low + d;
        if bytes.len() != 8 + 4 * n {
            return Err(Error::Format(format!("GSAF payload is {} bytes, expected {}", bytes.len() - 8, 4 * n)));
        }
        let vals: Vec<f64> = bytes[8..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let (a, b) = vals.split_at(d * d_low);
        Self::new(d, d_low, a.to_vec(), b.to_vec())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(Error::io_at(path))?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::manifest::write_atomic(path.as_ref(), &self.to_bytes())
    }

    /// Applies the lift to `n` rows of `D′` values, scaling `b` per row.
    fn apply_rows(&self, rows: &[f64], bias_scale: &[f64]) -> Vec<f64> {
        let n = bias_scale.len();
        let mut out = vec![0.0; n * self.d];
        for (o, &s) in out.chunks_exact_mut(self.d).zip(bias_scale) {
            for (v, &b) in o.iter_mut().zip(&self.b) {
                *v = s * b;
            }
        }
        gemm(n, self.d_low, self.d, 1.0, rows, Op::N, &self.a, Op::T, 1.0, &mut out);
        out
    }
}

/// Lifts one rendered pixel: `A·F′ + b·weight_sum`.
pub fn lift_pixel(lift: &AffineLift, f_low: &[f64], weight_sum: f64) -> Vec<f64> {
    assert_eq!(f_low.len(), lift.d_low, "lift_pixel: feature width");
    (0..lift.d)
        .map(|r| {
            let row = &lift.a[r * lift.d_low..(r + 1) * lift.d_low];
            row.iter().zip(f_low).map(|(a, f)| a * f).sum::<f64>() + lift.b[r] * weight_sum
        })
        .collect()
}

/// Lifts every pixel of a rendered low-dimensional map.
pub fn lift_image(lift: &AffineLift, low: &Image, weight_sum: &[f64]) -> Result<Image> {
    if low.channels != lift.d_low || weight_sum.len() != low.pixels() {
        return Err(Error::Shape("rendered map does not match the lift".into()));
    }
    let data = lift.apply_rows(&low.data, weight_sum);
    Image::from_vec(low.height, low.width, lift.d, data)
}

/// Sets `high_feat[p] = A·low_feat[p] + b` for every Gaussian.
pub fn lift_gaussians(scene: &mut GaussianScene, lift: &AffineLift) -> Result<()> {
    let low = scene
        .low_feat()
        .ok_or_else(|| Error::Contract("scene has no low_feat to lift".into()))?;
    if low.dim() != lift.d_low {
        return Err(Error::Shape(format!("low_feat has {} channels, lift expects {}", low.dim(), lift.d_low)));
    }
    let rows: Vec<f64> = low.data().iter().map(|&v| v as f64).collect();
    let high = lift.apply_rows(&rows, &vec![1.0; scene.len()]);
    scene.set_high_feat(lift.d, high.into_iter().map(|v| v as f32).collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FeatureInit {
    /// `U(−0.01, 0.01)` features and a random `A`.
    Random,
    /// Zero features and zero `A`.
    Zero,
}

#[derive(Clone, Debug)]
pub struct EmbedConfig {
    pub iterations: usize,
    pub lr_features: f64,
    pub lr_affine: f64,
    pub d_low: usize,
    pub d_high: usize,
    pub layer: LayerId,
    pub seed: u64,
    pub init: FeatureInit,
    /// Keeps `(A, b)` at this value instead of learning it.
    pub fixed_lift: Option<AffineLift>,
    pub render: RenderOptions,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            iterations: 30_000,
            lr_features: 0.01,
            lr_affine: 0.001,
            d_low: 32,
            d_high: 256,
            layer: LayerId::EMBED,
            seed: 0,
            init: FeatureInit::Random,
            fixed_lift: None,
            render: RenderOptions::default(),
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_features > 0.0 && self.lr_affine > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.d_low == 0 {
            return Err(Error::Config("D′ must be positive".into()));
        }
        match &self.fixed_lift {
            Some(l) if l.d != self.d_high || l.d_low != self.d_low => Err(Error::Config(format!(
                "fixed lift is {}×{}, config says {}×{}",
                l.d, l.d_low, self.d_high, self.d_low
            ))),
            Some(_) => Ok(()),
            None if self.d_low >= self.d_high => {
                Err(Error::Config(format!("D′ = {} must be below D = {}", self.d_low, self.d_high)))
            }
            None => Ok(()),
        }
    }
}

/// Gradients of the L1 objective.
#[derive(Clone, Debug)]
pub struct EmbedGrads {
    pub low: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

/// Mean absolute error between the lifted render of `low` (`P × D′`) and
/// `gt`, with its gradients. The subgradient of |x| at 0 is 0.
pub fn l1_objective(cache: &BlendCache, low: &[f64], lift: &AffineLift, gt: &Image) -> Result<(f64, EmbedGrads)> {
    let (d, dl) = (lift.d, lift.d_low);
    if gt.height != cache.height || gt.width != cache.width || gt.channels != d {
        return Err(Error::Shape(format!(
            "target is {}×{}×{}, render is {}×{}×{d}",
            gt.height, gt.width, gt.channels, cache.height, cache.width
        )));
    }
    if low.len() != cache.gaussians() * dl {
        return Err(Error::Shape("feature table does not match the scene".into()));
    }
    let hw = gt.pixels();
    let rendered = cache.composite(low, dl, &[]);
    let ws = cache.weight_sum();
    let lifted = lift.apply_rows(&rendered.data, ws);
    let n = (hw * d) as f64;
    let mut loss = 0.0;
    let g: Vec<f64> = lifted
        .iter()
        .zip(&gt.data)
        .map(|(&f, &t)| {
            let r = f - t;
            loss += r.abs();
            if r > 0.0 {
                1.0 / n
            } else if r < 0.0 {
                -1.0 / n
            } else {
                0.0
            }
        })
        .collect();
    let mut ga = vec![0.0; d * dl];
    gemm(d, hw, dl, 1.0, &g, Op::T, &rendered.data, Op::N, 0.0, &mut ga);
    let mut gb = vec![0.0; d];
    for (row, &w) in g.chunks_exact(d).zip(ws) {
        for (o, &v) in gb.iter_mut().zip(row) {
            *o += w * v;
        }
    }
    let mut g_low_px = Image::zeros(gt.height, gt.width, dl);
    gemm(hw, d, dl, 1.0, &g, Op::N, &lift.a, Op::N, 0.0, &mut g_low_px.data);
    let g_low = cache.backward(&g_low_px);
    Ok((loss / n, EmbedGrads { low: g_low, a: ga, b: gb }))
}

#[derive(Clone, Debug)]
pub struct EmbedResult {
    pub lift: AffineLift,
    /// Mean L1 loss of each iteration, measured before its update.
    pub losses: Vec<f64>,
    /// View drawn at each iteration.
    pub views: Vec<usize>,
}

/// Trains against feature maps of the configured layer.
pub fn embed_train(
    scene: &mut GaussianScene,
    cameras: &[Camera],
    gt_maps: &[FeatureMap],
    cfg: &EmbedConfig,
) -> Result<EmbedResult> {
    if let Some(m) = gt_maps.iter().find(|m| m.layer() != cfg.layer) {
        return Err(Error::Shape(format!("feature map from layer {:?}, expected {:?}", m.layer(), cfg.layer)));
    }
    let targets: Vec<Image> = gt_maps.iter().map(FeatureMap::to_image).collect();
    embed_train_tensors(scene, cameras, &targets, cfg)
}

/// Trains against raw `H × W × D` targets rendered at stride `cfg.layer`.
pub fn embed_train_tensors(
    scene: &mut GaussianScene,
    cameras: &[Camera],
    targets: &[Image],
    cfg: &EmbedConfig,
) -> Result<EmbedResult> {
    cfg.validate()?;
    if cameras.len() != targets.len() {
        return Err(Error::Shape(format!("{} cameras but {} feature maps", cameras.len(), targets.len())));
    }
    if cameras.is_empty() {
        return Err(Error::Contract("embedding needs at least one view".into()));
    }
    let stride = cfg.layer.stride();
    let mut scaled = Vec::with_capacity(cameras.len());
    for (i, (cam, gt)) in cameras.iter().zip(targets).enumerate() {
        if gt.channels != cfg.d_high {
            return Err(Error::Shape(format!("feature map {i} has {} channels, D = {}", gt.channels, cfg.d_high)));
        }
        let sc = scale_camera(cam, stride)?;
        if sc.width != gt.width || sc.height != gt.height {
            return Err(Error::Shape(format!(
                "feature map {i} is {}×{}, view {i} at stride {stride} is {}×{}",
                gt.width, gt.height, sc.width, sc.height
            )));
        }
        scaled.push(sc);
    }
    let mut caches: Vec<Option<BlendCache>> = vec![None; cameras.len()];

    let p = scene.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut low: Vec<f64> = match cfg.init {
        FeatureInit::Random => (0..p * cfg.d_low).map(|_| rng.random_range(-0.01..0.01)).collect(),
        FeatureInit::Zero => vec![0.0; p * cfg.d_low],
    };
    let mut lift = match (&cfg.fixed_lift, cfg.init) {
        (Some(l), _) => l.clone(),
        (None, FeatureInit::Random) => AffineLift::random(cfg.d_high, cfg.d_low, &mut rng)?,
        (None, FeatureInit::Zero) => {
            AffineLift::new(cfg.d_high, cfg.d_low, vec![0.0; cfg.d_high * cfg.d_low], vec![0.0; cfg.d_high])?
        }
    };
    let learn_affine = cfg.fixed_lift.is_none();
    let mut opt_low = Adam::new(AdamConfig::with_lr(cfg.lr_features), low.len());
    let mut opt_a = Adam::new(AdamConfig::with_lr(cfg.lr_affine), lift.a.len());
    let mut opt_b = Adam::new(AdamConfig::with_lr(cfg.lr_affine), lift.b.len());

    let mut losses = Vec::with_capacity(cfg.iterations);
    let mut views = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let v = rng.random_range(0..cameras.len());
        if caches[v].is_none() {
            caches[v] = Some(rasterize(scene, &scaled[v], &cfg.render)?);
        }
        let cache = caches[v].as_ref().unwrap();
        let (loss, grads) = l1_objective(cache, &low, &lift, &targets[v])?;
        losses.push(loss);
        views.push(v);
        opt_low.step(&mut low, &grads.low);
        if learn_affine {
            opt_a.step(&mut lift.a, &grads.a);
            opt_b.step(&mut lift.b, &grads.b);
        }
        if it % 1000 == 0 {
            log::debug!("embed iteration {it}: loss {loss:.6}");
        }
    }

    if low.iter().chain(&lift.a).chain(&lift.b).any(|v| !v.is_finite()) {
        return Err(Error::Contract("embedding diverged to non-finite values".into()));
    }
    scene.set_low_feat(cfg.d_low, low.iter().map(|&v| v as f32).collect())?;
    lift_gaussians(scene, &lift)?;
    Ok(EmbedResult { lift, losses, views })
}
