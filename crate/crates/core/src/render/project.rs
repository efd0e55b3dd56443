//! EWA projection of 3D Gaussians to screen-space ellipses.

use super::Camera;
use crate::scene::Gaussian;

/// Added to the projected covariance diagonal (pixels²).
pub const BLUR_FLOOR: f64 = 0.3;
/// Per-splat opacity ceiling during compositing.
pub const MAX_ALPHA: f64 = 0.999;
/// Footprint half-extent in standard deviations.
pub const EXTENT_SIGMAS: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatProjection {
    /// Center in pixel coordinates.
    pub mean2d: [f64; 2],
    /// Screen covariance `[xx, xy, yy]` including the blur floor.
    pub cov2d: [f64; 3],
    /// Inverse of `cov2d`, `[xx, xy, yy]`.
    pub conic: [f64; 3],
    /// Camera-frame z of the mean.
    pub depth: f64,
    /// `EXTENT_SIGMAS` times the largest screen-space standard deviation.
    pub radius: f64,
}

/// Projects without viewport culling; `None` only when behind the near plane.
pub fn project_unbounded(g: &Gaussian, cam: &Camera) -> Option<SplatProjection> {
    let m = g.mean.map(|v| v as f64);
    let c = cam.to_camera(m);
    let (x, y, z) = (c[0], c[1], c[2]);
    if z <= cam.near_clip {
        return None;
    }
    let cov = g.covariance();
    let r = &cam.rotation;
    // camera-frame covariance R Σ Rᵀ
    let mut rs = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            rs[i][j] = (0..3).map(|k| r[i][k] * cov[k][j]).sum();
        }
    }
    let mut cc = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            cc[i][j] = (0..3).map(|k| rs[i][k] * r[j][k]).sum();
        }
    }
    // perspective Jacobian at the mean
    let j = [[cam.fx / z, 0.0, -cam.fx * x / (z * z)], [0.0, cam.fy / z, -cam.fy * y / (z * z)]];
    let mut jc = [[0.0; 3]; 2];
    for a in 0..2 {
        for b in 0..3 {
            jc[a][b] = (0..3).map(|k| j[a][k] * cc[k][b]).sum();
        }
    }
    let entry = |a: usize, b: usize| -> f64 { (0..3).map(|k| jc[a][k] * j[b][k]).sum() };
    let cov2d = [entry(0, 0) + BLUR_FLOOR, entry(0, 1), entry(1, 1) + BLUR_FLOOR];
    let det = cov2d[0] * cov2d[2] - cov2d[1] * cov2d[1];
    if !(det > 0.0) {
        return None;
    }
    let conic = [cov2d[2] / det, -cov2d[1] / det, cov2d[0] / det];
    let mid = 0.5 * (cov2d[0] + cov2d[2]);
    let lambda_max = mid + (mid * mid - det).max(0.0).sqrt();
    Some(SplatProjection {
        mean2d: cam.project_point(c),
        cov2d,
        conic,
        depth: z,
        radius: EXTENT_SIGMAS * lambda_max.sqrt(),
    })
}

/// Projects a Gaussian, culling it behind the near plane or when its
/// footprint misses the viewport.
pub fn project(g: &Gaussian, cam: &Camera) -> Option<SplatProjection> {
    let p = project_unbounded(g, cam)?;
    let [mx, my] = p.mean2d;
    let misses = mx + p.radius < 0.0
        || my + p.radius < 0.0
        || mx - p.radius > cam.width as f64
        || my - p.radius > cam.height as f64;
    (!misses).then_some(p)
}

/// Splat opacity at a pixel-coordinate position.
#[inline]
pub fn alpha_at(proj: &SplatProjection, opacity: f64, pixel: [f64; 2]) -> f64 {
    let dx = pixel[0] - proj.mean2d[0];
    let dy = pixel[1] - proj.mean2d[1];
    let q = proj.conic[0] * dx * dx + 2.0 * proj.conic[1] * dx * dy + proj.conic[2] * dy * dy;
    (opacity * (-0.5 * q).exp()).clamp(0.0, MAX_ALPHA)
}
