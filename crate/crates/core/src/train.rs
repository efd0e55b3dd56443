//! Decoder training: `L = Lc + λ·Ls` on rendered views, back-propagated
//! through the extractor and the (linear, fixed-geometry) renderer into the
//! decoder weights.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::decoder::{ConvGrads, KnnDecoder};
use crate::error::{Error, Result};
use crate::extractor::{FeatureMap, LayerId, ToyExtractor};
use crate::image::Image;
use crate::optim::{Adam, AdamConfig};
use crate::render::{rasterize, BlendCache, Camera, RenderOptions};
use crate::scene::{GaussianScene, KnnIndex, ReverseKnn};
use crate::style::{self, channel_stats, StyleStats};

#[derive(Clone, Debug, PartialEq)]
pub struct StyleLossConfig {
    pub lambda: f64,
    pub layers: Vec<LayerId>,
}

impl Default for StyleLossConfig {
    fn default() -> Self {
        StyleLossConfig { lambda: 10.0, layers: LayerId::ALL.to_vec() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub iterations: usize,
    pub lr: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Iterations when starting from another scene's decoder.
    pub const INIT_FROM_ITERATIONS: usize = 30_000;
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { iterations: 100_000, lr: 0.001, seed: 0 }
    }
}

fn check_pairs(a: &[Image], b: &[Image]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} layers vs {}", a.len(), b.len())));
    }
    if let Some(i) = a.iter().zip(b).position(|(x, y)| !x.same_shape(y)) {
        return Err(Error::Shape(format!("layer {i} shapes differ")));
    }
    Ok(())
}

/// Mean over layers of the elementwise mean squared error, with gradients
/// w.r.t. `stylized`.
pub fn content_loss_grad(stylized: &[Image], content: &[Image]) -> Result<(f64, Vec<Image>)> {
    check_pairs(stylized, content)?;
    let l = stylized.len() as f64;
    let mut total = 0.0;
    let grads = stylized
        .iter()
        .zip(content)
        .map(|(s, c)| {
            let n = s.data.len() as f64;
            let mut sum = 0.0;
            let data = s
                .data
                .iter()
                .zip(&c.data)
                .map(|(a, b)| {
                    let r = a - b;
                    sum += r * r;
                    2.0 * r / (n * l)
                })
                .collect();
            total += sum / n;
            Image { height: s.height, width: s.width, channels: s.channels, data }
        })
        .collect();
    Ok((total / l, grads))
}

pub fn content_loss(stylized: &[FeatureMap], content: &[FeatureMap]) -> Result<f64> {
    let a: Vec<Image> = stylized.iter().map(FeatureMap::to_image).collect();
    let b: Vec<Image> = content.iter().map(FeatureMap::to_image).collect();
    Ok(content_loss_grad(&a, &b)?.0)
}

/// Mean over layers of `(‖μ − μ_s‖² + ‖σ − σ_s‖²) / C`, with gradients.
pub fn style_loss_grad(stylized: &[Image], targets: &[StyleStats]) -> Result<(f64, Vec<Image>)> {
    if stylized.len() != targets.len() {
        return Err(Error::Shape(format!("{} layers vs {} style targets", stylized.len(), targets.len())));
    }
    let l = stylized.len() as f64;
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(stylized.len());
    for (f, t) in stylized.iter().zip(targets) {
        let c = f.channels;
        if t.channels() != c {
            return Err(Error::Shape(format!("{c}-channel features vs {}-channel style stats", t.channels())));
        }
        let s = channel_stats(&f.data, c)?;
        let n = f.pixels() as f64;
        let mut layer = 0.0;
        let mut gm = vec![0.0; c];
        let mut gs = vec![0.0; c];
        for j in 0..c {
            let dm = s.mean[j] - t.mean[j];
            let ds = s.std[j] - t.std[j];
            layer += dm * dm + ds * ds;
            gm[j] = 2.0 * dm / (c as f64 * l);
            gs[j] = 2.0 * ds / (c as f64 * l);
        }
        total += layer / c as f64;
        let mut g = Image::zeros(f.height, f.width, c);
        for (grow, frow) in g.data.chunks_exact_mut(c).zip(f.data.chunks_exact(c)) {
            for j in 0..c {
                let dstd = if s.std[j] > 0.0 { (frow[j] - s.mean[j]) / (n * s.std[j]) } else { 0.0 };
                grow[j] = gm[j] / n + gs[j] * dstd;
            }
        }
        grads.push(g);
    }
    Ok((total / l, grads))
}

pub fn style_loss(stylized: &[FeatureMap], targets: &[StyleStats]) -> Result<f64> {
    let a: Vec<Image> = stylized.iter().map(FeatureMap::to_image).collect();
    Ok(style_loss_grad(&a, targets)?.0)
}

/// A style image reduced to what training needs: statistics at every loss
/// layer, plus the embed-layer statistics used for transfer.
#[derive(Clone, Debug)]
pub struct StyleTarget {
    pub layers: Vec<StyleStats>,
    pub embed: StyleStats,
}

impl StyleTarget {
    pub fn from_image(extractor: &ToyExtractor, image: &Image) -> Result<Self> {
        let id = style::sha256(&image.to_gsim());
        let maps = extractor.extract(image)?;
        let layers = maps
            .iter()
            .map(|m| style::compute_style_stats_with_id(m, id))
            .collect::<Result<Vec<_>>>()?;
        let embed = layers[LayerId::EMBED.index()].clone();
        Ok(StyleTarget { layers, embed })
    }
}

/// One iteration's loss terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossRecord {
    pub iteration: usize,
    pub content: f64,
    pub style: f64,
    pub total: f64,
}

/// Everything about one scene that stays fixed during decoder training:
/// per-view blend lists and content features, per-style transferred
/// features and target statistics.
pub struct TrainProblem<'a> {
    extractor: &'a ToyExtractor,
    knn: &'a KnnIndex,
    rev: ReverseKnn,
    loss: StyleLossConfig,
    views: Vec<BlendCache>,
    content: Vec<Vec<Image>>,
    styles: Vec<StyleTarget>,
    transformed: Vec<Vec<f64>>,
    d: usize,
}

impl<'a> TrainProblem<'a> {
    pub fn new(
        scene: &GaussianScene,
        cameras: &[Camera],
        styles: Vec<StyleTarget>,
        extractor: &'a ToyExtractor,
        knn: &'a KnnIndex,
        loss: StyleLossConfig,
    ) -> Result<Self> {
        let high = scene
            .high_feat()
            .ok_or_else(|| Error::Contract("decoder training needs high_feat; embed the scene first".into()))?;
        if knn.len() != scene.len() {
            return Err(Error::Contract("KNN index was built for a different scene".into()));
        }
        if cameras.is_empty() || styles.is_empty() {
            return Err(Error::Contract("decoder training needs at least one camera and one style".into()));
        }
        if loss.lambda < 0.0 || loss.layers.is_empty() {
            return Err(Error::Config("λ must be non-negative and at least one loss layer given".into()));
        }
        let d = high.dim();
        let scene_stats = style::compute_scene_stats(scene)?;
        let transformed = styles
            .iter()
            .map(|s| {
                style::adain_values(high, &scene_stats, &s.embed).map(|v| v.into_iter().map(f64::from).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        let colors: Vec<f64> = scene.colors().as_flattened().iter().map(|&v| v as f64).collect();
        let mut views = Vec::with_capacity(cameras.len());
        let mut content = Vec::with_capacity(cameras.len());
        for cam in cameras {
            let cache = rasterize(scene, cam, &RenderOptions::default())?;
            let img = cache.composite(&colors, 3, &[0.0; 3]);
            let trace = extractor.forward(&img)?;
            content.push(loss.layers.iter().map(|l| trace.layers[l.index()].clone()).collect());
            views.push(cache);
        }
        Ok(TrainProblem { extractor, knn, rev: knn.reverse(), loss, views, content, styles, transformed, d })
    }

    pub fn views(&self) -> usize {
        self.views.len()
    }

    pub fn styles(&self) -> usize {
        self.styles.len()
    }

    /// Black-background render of the decoded colors for `style` in `view`.
    pub fn render_stylized(&self, decoder: &KnnDecoder, style: usize, view: usize) -> Result<Image> {
        let rgb = decoder.forward(&self.transformed[style], self.knn)?;
        Ok(self.views[view].composite(&rgb, 3, &[0.0; 3]))
    }

    /// Loss terms of an arbitrary rendered image against `style` and the
    /// content of `view`.
    pub fn image_loss(&self, image: &Image, style: usize, view: usize) -> Result<(f64, f64)> {
        let trace = self.extractor.forward(image)?;
        let feats: Vec<Image> = self.loss.layers.iter().map(|l| trace.layers[l.index()].clone()).collect();
        let targets: Vec<StyleStats> = self.loss.layers.iter().map(|l| self.styles[style].layers[l.index()].clone()).collect();
        let (lc, _) = content_loss_grad(&feats, &self.content[view])?;
        let (ls, _) = style_loss_grad(&feats, &targets)?;
        Ok((lc, ls))
    }

    /// Content render of `view` (original colors, black background).
    pub fn render_content(&self, scene: &GaussianScene, view: usize) -> Image {
        let colors: Vec<f64> = scene.colors().as_flattened().iter().map(|&v| v as f64).collect();
        self.views[view].composite(&colors, 3, &[0.0; 3])
    }

    /// Loss and decoder gradients for one (style, view) pair.
    pub fn loss_and_grads(&self, decoder: &KnnDecoder, style: usize, view: usize) -> Result<(LossRecord, Vec<ConvGrads>)> {
        if decoder.d_in() != self.d {
            return Err(Error::Shape(format!("decoder expects {} channels, features have {}", decoder.d_in(), self.d)));
        }
        let caches = decoder.forward_traced(self.transformed[style].clone(), self.knn)?;
        let rgb = caches.last().expect("decoder has layers").output();
        let cache = &self.views[view];
        let image = cache.composite(rgb, 3, &[0.0; 3]);
        let trace = self.extractor.forward(&image)?;
        let feats: Vec<Image> = self.loss.layers.iter().map(|l| trace.layers[l.index()].clone()).collect();
        let targets: Vec<StyleStats> = self.loss.layers.iter().map(|l| self.styles[style].layers[l.index()].clone()).collect();
        let (lc, gc) = content_loss_grad(&feats, &self.content[view])?;
        let (ls, gs) = style_loss_grad(&feats, &targets)?;
        let mut layer_grads: Vec<Option<Image>> = vec![None; 4];
        for ((l, mut a), b) in self.loss.layers.iter().zip(gc).zip(gs) {
            for (x, y) in a.data.iter_mut().zip(&b.data) {
                *x += self.loss.lambda * y;
            }
            layer_grads[l.index()] = Some(match layer_grads[l.index()].take() {
                Some(mut prev) => {
                    prev.data.iter_mut().zip(&a.data).for_each(|(p, q)| *p += q);
                    prev
                }
                None => a,
            });
        }
        let g_img = self.extractor.backward(&trace, &layer_grads)?;
        let g_rgb = cache.backward(&g_img);
        let grads = decoder.backward(&caches, self.knn, &self.rev, &g_rgb)?;
        let rec = LossRecord { iteration: 0, content: lc, style: ls, total: lc + self.loss.lambda * ls };
        Ok((rec, grads))
    }
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub history: Vec<LossRecord>,
}

impl TrainReport {
    /// Mean total loss over iterations `[from, from + len)`.
    pub fn window_mean(&self, from: usize, len: usize) -> f64 {
        let w = &self.history[from.min(self.history.len())..(from + len).min(self.history.len())];
        w.iter().map(|r| r.total).sum::<f64>() / w.len().max(1) as f64
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        writeln!(out, "iteration,content,style,total")?;
        for r in &self.history {
            writeln!(out, "{},{:.9},{:.9},{:.9}", r.iteration, r.content, r.style, r.total)?;
        }
        crate::manifest::write_atomic(path, &out)
    }
}

/// Optimizes `decoder` on `problem`: one seeded (style, view) draw per
/// iteration, Adam on every layer's weights and bias.
pub fn train_decoder(problem: &TrainProblem<'_>, decoder: &mut KnnDecoder, cfg: &TrainConfig) -> Result<TrainReport> {
    train_decoder_with(problem, decoder, cfg, |_| {})
}

/// [`train_decoder`] with a per-iteration callback.
pub fn train_decoder_with(
    problem: &TrainProblem<'_>,
    decoder: &mut KnnDecoder,
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&LossRecord),
) -> Result<TrainReport> {
    if !(cfg.lr > 0.0) {
        return Err(Error::Config("learning rate must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let adam = AdamConfig::with_lr(cfg.lr);
    let mut opts: Vec<(Adam, Adam)> = decoder
        .layers()
        .iter()
        .map(|l| (Adam::new(adam, l.weights().len()), Adam::new(adam, l.bias().len())))
        .collect();
    let mut history = Vec::with_capacity(cfg.iterations);
    for it in 0..cfg.iterations {
        let s = rng.random_range(0..problem.styles());
        let v = rng.random_range(0..problem.views());
        let (mut rec, grads) = problem.loss_and_grads(decoder, s, v)?;
        rec.iteration = it;
        for ((layer, g), (ow, ob)) in decoder.layers_mut().iter_mut().zip(&grads).zip(&mut opts) {
            ow.step(layer.weights_mut(), &g.weights);
            ob.step(layer.bias_mut(), &g.bias);
        }
        if !rec.total.is_finite() {
            return Err(Error::Contract(format!("loss became non-finite at iteration {it}")));
        }
        if it % 500 == 0 {
            log::debug!("train iteration {it}: Lc {:.5} Ls {:.5} total {:.5}", rec.content, rec.style, rec.total);
        }
        on_step(&rec);
        history.push(rec);
    }
    Ok(TrainReport { history })
}
