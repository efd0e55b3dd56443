//! Splat rendering of any per-Gaussian channel, with exact channel gradients.

mod camera;
mod project;
mod raster;

pub use camera::{cameras_to_json, parse_cameras, scale_camera, Camera, CameraRecord, DEFAULT_NEAR_CLIP};
pub use project::{alpha_at, project, project_unbounded, SplatProjection, BLUR_FLOOR, EXTENT_SIGMAS, MAX_ALPHA};
pub use raster::{rasterize, BlendCache, BlendEntry, RenderOptions};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::scene::{Appearance, GaussianScene};

/// What to composite.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RenderChannel {
    Appearance(Appearance),
    /// Camera-frame depth of each Gaussian's mean.
    Depth,
}

impl RenderChannel {
    pub const COLOR: RenderChannel = RenderChannel::Appearance(Appearance::Color);
    pub const STYLED: RenderChannel = RenderChannel::Appearance(Appearance::StyledColor);
    pub const LOW_FEAT: RenderChannel = RenderChannel::Appearance(Appearance::LowFeat);
    pub const HIGH_FEAT: RenderChannel = RenderChannel::Appearance(Appearance::HighFeat);

    pub fn parse(s: &str) -> Option<RenderChannel> {
        Some(match s {
            "color" | "rgb" => Self::COLOR,
            "styled" | "styled_color" => Self::STYLED,
            "low_feat" => Self::LOW_FEAT,
            "high_feat" => Self::HIGH_FEAT,
            "transformed_feat" => RenderChannel::Appearance(Appearance::TransformedFeat),
            "depth" => RenderChannel::Depth,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub image: Image,
    /// Σ wᵢ per pixel.
    pub weight_sum: Vec<f64>,
    /// Σ wᵢ zᵢ per pixel (not normalized by the weight sum).
    pub depth_map: Vec<f64>,
    /// Blend lists; needed by [`backward_channel`].
    pub cache: Option<BlendCache>,
}

impl RenderOutput {
    /// Renders another channel through the same blend lists.
    pub fn composite_channel(&self, values: &[f64], dim: usize, background: &[f64]) -> Result<Image> {
        let cache = self.cache.as_ref().ok_or_else(|| Error::Contract("render cache was dropped".into()))?;
        if values.len() != cache.gaussians() * dim {
            return Err(Error::Shape("value table does not match the scene".into()));
        }
        Ok(cache.composite(values, dim, background))
    }
}

/// Renders one channel with default thresholds.
pub fn render(scene: &GaussianScene, cam: &Camera, channel: RenderChannel, background: &[f64]) -> Result<RenderOutput> {
    render_with(scene, cam, channel, background, &RenderOptions::default())
}

pub fn render_with(
    scene: &GaussianScene,
    cam: &Camera,
    channel: RenderChannel,
    background: &[f64],
    opts: &RenderOptions,
) -> Result<RenderOutput> {
    let cache = rasterize(scene, cam, opts)?;
    render_cached(scene, cache, channel, background)
}

/// Composites a channel through an existing blend cache for the same scene.
pub fn render_cached(
    scene: &GaussianScene,
    cache: BlendCache,
    channel: RenderChannel,
    background: &[f64],
) -> Result<RenderOutput> {
    if cache.gaussians() != scene.len() {
        return Err(Error::Contract("blend cache belongs to a different scene".into()));
    }
    let check_bg = |dim: usize| {
        if background.is_empty() || background.len() == dim {
            Ok(())
        } else {
            Err(Error::Shape(format!("background has {} values, channel has {dim}", background.len())))
        }
    };
    let image = match channel {
        RenderChannel::Appearance(kind) => {
            let ch = scene
                .channel(kind)
                .ok_or_else(|| Error::Contract(format!("channel {} is not populated", kind.name())))?;
            check_bg(ch.dim)?;
            cache.composite(ch.data, ch.dim, background)
        }
        RenderChannel::Depth => {
            check_bg(1)?;
            cache.composite(cache.depths(), 1, background)
        }
    };
    let depth_map = cache.composite(cache.depths(), 1, &[]).data;
    Ok(RenderOutput { image, weight_sum: cache.weight_sum().to_vec(), depth_map, cache: Some(cache) })
}

/// Gradient of the rendered image w.r.t. the rendered channel's per-Gaussian
/// values, `P × C` row-major. Geometry is fixed, so the map is linear and
/// the gradient is exactly the cached blending weights.
pub fn backward_channel(out: &RenderOutput, grad_image: &Image) -> Result<Vec<f64>> {
    let cache = out
        .cache
        .as_ref()
        .ok_or_else(|| Error::Contract("render cache was dropped; cannot backpropagate".into()))?;
    if !grad_image.same_shape(&out.image) {
        return Err(Error::Shape(format!(
            "gradient image is {}×{}×{}, render is {}×{}×{}",
            grad_image.height,
            grad_image.width,
            grad_image.channels,
            out.image.height,
            out.image.width,
            out.image.channels
        )));
    }
    Ok(cache.backward(grad_image))
}
