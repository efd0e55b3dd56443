//! Gaussian scene data model.
//!
//! Geometry (mean, scale, rotation, opacity) is fixed at construction and
//! only readable afterwards. Appearance channels can be replaced wholesale
//! by the embedding, transfer and decoding stages.

mod knn;
mod native;
mod ply;

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use knn::{build_knn, KnnIndex, ReverseKnn};
pub use native::{read_native, write_native};
pub use ply::{read_ply, write_ply};

/// Opacity ceiling applied on load.
pub const MAX_OPACITY: f32 = 0.999;
/// Scenes larger than this log a warning; memory use grows with `P × D`.
pub const SOFT_MAX_GAUSSIANS: usize = 300_000;
/// Zeroth-order spherical harmonic basis constant.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

/// One Gaussian's geometry and base color.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Gaussian {
    pub mean: [f32; 3],
    pub scale: [f32; 3],
    /// Unit quaternion, w-x-y-z order.
    pub rotation: [f32; 4],
    pub opacity: f32,
    pub color: [f32; 3],
}

impl Gaussian {
    /// World-space covariance `R · diag(scale)² · Rᵀ`.
    pub fn covariance(&self) -> [[f64; 3]; 3] {
        covariance(self.rotation, self.scale)
    }
}

/// Rotation matrix of a w-x-y-z quaternion. The input is normalized first.
pub fn quat_to_matrix(q: [f32; 4]) -> [[f64; 3]; 3] {
    let n = q.iter().map(|&v| (v as f64) * (v as f64)).sum::<f64>().sqrt();
    let (w, x, y, z) = (q[0] as f64 / n, q[1] as f64 / n, q[2] as f64 / n, q[3] as f64 / n);
    [
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y)],
        [2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x)],
        [2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y)],
    ]
}

pub fn covariance(rotation: [f32; 4], scale: [f32; 3]) -> [[f64; 3]; 3] {
    let r = quat_to_matrix(rotation);
    let s2 = scale.map(|s| (s as f64) * (s as f64));
    let mut cov = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cov[i][j] = (0..3).map(|k| r[i][k] * s2[k] * r[j][k]).sum();
        }
    }
    cov
}

/// A per-Gaussian vector channel stored as `P × dim` floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    dim: usize,
    data: Vec<f32>,
}

impl Channel {
    pub fn new(dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::Shape(format!(
                "channel of {} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        Ok(Channel { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// The per-Gaussian appearance channels a scene can carry.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Appearance {
    Color,
    LowFeat,
    HighFeat,
    TransformedFeat,
    StyledColor,
}

impl Appearance {
    pub fn name(self) -> &'static str {
        match self {
            Appearance::Color => "color",
            Appearance::LowFeat => "low_feat",
            Appearance::HighFeat => "high_feat",
            Appearance::TransformedFeat => "transformed_feat",
            Appearance::StyledColor => "styled_color",
        }
    }
}

/// Borrowed view of one appearance channel.
#[derive(Clone, Copy, Debug)]
pub struct ChannelRef<'a> {
    pub dim: usize,
    pub data: &'a [f32],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianScene {
    pub name: String,
    pub source: Option<PathBuf>,
    means: Vec<[f32; 3]>,
    scales: Vec<[f32; 3]>,
    rotations: Vec<[f32; 4]>,
    opacities: Vec<f32>,
    colors: Vec<[f32; 3]>,
    low_feat: Option<Channel>,
    high_feat: Option<Channel>,
    transformed_feat: Option<Channel>,
    styled_color: Option<Vec<[f32; 3]>>,
}

fn check_finite(index: usize, what: &str, values: &[f32]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Validation { index, msg: format!("non-finite {what}") })
    }
}

impl GaussianScene {
    /// Builds a scene, normalizing rotations and clamping opacity.
    pub fn new(name: impl Into<String>, gaussians: Vec<Gaussian>) -> Result<Self> {
        let gaussians = gaussians
            .into_iter()
            .enumerate()
            .map(|(i, mut g)| {
                check_finite(i, "rotation", &g.rotation)?;
                let n = g.rotation.iter().map(|&v| (v as f64).powi(2)).sum::<f64>().sqrt();
                if n < 1e-12 {
                    return Err(Error::Validation { index: i, msg: "zero-norm rotation".into() });
                }
                g.rotation = g.rotation.map(|v| (v as f64 / n) as f32);
                g.opacity = g.opacity.clamp(0.0, MAX_OPACITY);
                Ok(g)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_validated(name.into(), gaussians)
    }

    /// Builds a scene from Gaussians that must already satisfy every
    /// invariant; nothing is renormalized so stored bits survive.
    pub(crate) fn from_validated(name: String, gaussians: Vec<Gaussian>) -> Result<Self> {
        if gaussians.is_empty() {
            return Err(Error::Contract("a scene needs at least one Gaussian".into()));
        }
        if gaussians.len() > SOFT_MAX_GAUSSIANS {
            log::warn!(
                "scene {name} has {} Gaussians (soft limit {SOFT_MAX_GAUSSIANS})",
                gaussians.len()
            );
        }
        for (i, g) in gaussians.iter().enumerate() {
            check_finite(i, "mean", &g.mean)?;
            check_finite(i, "scale", &g.scale)?;
            check_finite(i, "rotation", &g.rotation)?;
            check_finite(i, "opacity", &[g.opacity])?;
            check_finite(i, "color", &g.color)?;
            if g.scale.iter().any(|&s| s <= 0.0) {
                return Err(Error::Validation { index: i, msg: "scale must be positive".into() });
            }
            let n2: f64 = g.rotation.iter().map(|&v| (v as f64).powi(2)).sum();
            if (n2.sqrt() - 1.0).abs() > 1e-6 {
                return Err(Error::Validation { index: i, msg: "rotation is not unit norm".into() });
            }
            if !(0.0..=MAX_OPACITY).contains(&g.opacity) {
                return Err(Error::Validation { index: i, msg: "opacity outside [0, 0.999]".into() });
            }
        }
        Ok(GaussianScene {
            name,
            source: None,
            means: gaussians.iter().map(|g| g.mean).collect(),
            scales: gaussians.iter().map(|g| g.scale).collect(),
            rotations: gaussians.iter().map(|g| g.rotation).collect(),
            opacities: gaussians.iter().map(|g| g.opacity).collect(),
            colors: gaussians.iter().map(|g| g.color).collect(),
            low_feat: None,
            high_feat: None,
            transformed_feat: None,
            styled_color: None,
        })
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn gaussian(&self, i: usize) -> Gaussian {
        Gaussian {
            mean: self.means[i],
            scale: self.scales[i],
            rotation: self.rotations[i],
            opacity: self.opacities[i],
            color: self.colors[i],
        }
    }

    pub fn gaussians(&self) -> impl Iterator<Item = Gaussian> + '_ {
        (0..self.len()).map(|i| self.gaussian(i))
    }

    pub fn means(&self) -> &[[f32; 3]] {
        &self.means
    }

    pub fn scales(&self) -> &[[f32; 3]] {
        &self.scales
    }

    pub fn rotations(&self) -> &[[f32; 4]] {
        &self.rotations
    }

    pub fn opacities(&self) -> &[f32] {
        &self.opacities
    }

    pub fn colors(&self) -> &[[f32; 3]] {
        &self.colors
    }

    pub fn low_feat(&self) -> Option<&Channel> {
        self.low_feat.as_ref()
    }

    pub fn high_feat(&self) -> Option<&Channel> {
        self.high_feat.as_ref()
    }

    pub fn transformed_feat(&self) -> Option<&Channel> {
        self.transformed_feat.as_ref()
    }

    pub fn styled_color(&self) -> Option<&[[f32; 3]]> {
        self.styled_color.as_deref()
    }

    /// `(D′, D)`: low and high feature widths, 0 when absent.
    pub fn feature_dims(&self) -> (usize, usize) {
        let low = self.low_feat.as_ref().map_or(0, Channel::dim);
        let high = self
            .high_feat
            .as_ref()
            .or(self.transformed_feat.as_ref())
            .map_or(0, Channel::dim);
        (low, high)
    }

    pub fn channel(&self, kind: Appearance) -> Option<ChannelRef<'_>> {
        fn ch(c: &Option<Channel>) -> Option<ChannelRef<'_>> {
            c.as_ref().map(|c| ChannelRef { dim: c.dim, data: &c.data })
        }
        match kind {
            Appearance::Color => Some(ChannelRef { dim: 3, data: self.colors.as_flattened() }),
            Appearance::LowFeat => ch(&self.low_feat),
            Appearance::HighFeat => ch(&self.high_feat),
            Appearance::TransformedFeat => ch(&self.transformed_feat),
            Appearance::StyledColor => self
                .styled_color
                .as_ref()
                .map(|c| ChannelRef { dim: 3, data: c.as_flattened() }),
        }
    }

    fn checked_channel(&self, what: &str, dim: usize, data: Vec<f32>) -> Result<Channel> {
        let ch = Channel::new(dim, data)?;
        if ch.len() != self.len() {
            return Err(Error::Shape(format!(
                "{what} has {} rows, scene has {} Gaussians",
                ch.len(),
                self.len()
            )));
        }
        Ok(ch)
    }

    pub fn set_low_feat(&mut self, dim: usize, data: Vec<f32>) -> Result<()> {
        self.low_feat = Some(self.checked_channel("low_feat", dim, data)?);
        Ok(())
    }

    pub fn set_high_feat(&mut self, dim: usize, data: Vec<f32>) -> Result<()> {
        let ch = self.checked_channel("high_feat", dim, data)?;
        if let Some(t) = &self.transformed_feat {
            if t.dim != dim {
                self.transformed_feat = None;
            }
        }
        self.high_feat = Some(ch);
        Ok(())
    }

    pub fn set_transformed_feat(&mut self, dim: usize, data: Vec<f32>) -> Result<()> {
        let ch = self.checked_channel("transformed_feat", dim, data)?;
        if let Some(h) = &self.high_feat {
            if h.dim != dim {
                return Err(Error::Shape(format!(
                    "transformed_feat width {dim} differs from high_feat width {}",
                    h.dim
                )));
            }
        }
        self.transformed_feat = Some(ch);
        Ok(())
    }

    pub fn set_styled_color(&mut self, colors: Vec<[f32; 3]>) -> Result<()> {
        if colors.len() != self.len() {
            return Err(Error::Shape(format!(
                "styled_color has {} rows, scene has {} Gaussians",
                colors.len(),
                self.len()
            )));
        }
        self.styled_color = Some(colors);
        Ok(())
    }

    pub fn clear_appearance(&mut self, kind: Appearance) {
        match kind {
            Appearance::Color => {}
            Appearance::LowFeat => self.low_feat = None,
            Appearance::HighFeat => self.high_feat = None,
            Appearance::TransformedFeat => self.transformed_feat = None,
            Appearance::StyledColor => self.styled_color = None,
        }
    }

    /// Little-endian bytes of the fixed geometry, in native-file order.
    pub fn geometry_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.len() * 11 * 4);
        let mut put = |vals: &[f32]| {
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        put(self.means.as_flattened());
        put(self.scales.as_flattened());
        put(self.rotations.as_flattened());
        put(&self.opacities);
        out
    }

    /// SHA-256 of the geometry; keys the on-disk KNN cache.
    pub fn geometry_hash(&self) -> [u8; 32] {
        Sha256::digest(self.geometry_bytes()).into()
    }
}

/// Loads a scene from a native `GSSC` file or a 3DGS PLY, sniffed by magic.
pub fn load_scene(path: impl AsRef<Path>) -> Result<GaussianScene> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(Error::io_at(path))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scene".into());
    let mut scene = if bytes.starts_with(native::MAGIC) {
        read_native(&bytes, name)?
    } else if bytes.starts_with(b"ply") {
        read_ply(&bytes, name)?
    } else {
        return Err(Error::Parse { offset: 0, msg: "neither a GSSC nor a PLY file".into() });
    };
    scene.source = Some(path.to_path_buf());
    Ok(scene)
}

/// Writes a scene. A `.ply` extension produces a standard 3DGS PLY (geometry
/// and base color only); anything else produces the native format with every
/// populated channel.
pub fn save_scene(scene: &GaussianScene, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let is_ply = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
    let bytes = if is_ply { write_ply(scene, false) } else { write_native(scene)? };
    crate::manifest::write_atomic(path, &bytes)
}
