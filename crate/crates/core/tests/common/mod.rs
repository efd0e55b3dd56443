#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stylesplat::image::Image;
use stylesplat::render::{alpha_at, project_unbounded, Camera};
use stylesplat::scene::{Gaussian, GaussianScene};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rng: &mut impl Rng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

pub fn uniform_f32(rng: &mut impl Rng, n: usize, lo: f32, hi: f32) -> Vec<f32> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Camera at the origin looking down +z.
pub fn front_camera(width: usize, height: usize) -> Camera {
    Camera::look_at([0.0; 3], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0], width as f64 * 1.2, width, height)
}

/// Random Gaussians in a box in front of [`front_camera`].
pub fn random_scene(rng: &mut impl Rng, p: usize) -> GaussianScene {
    let gaussians = (0..p)
        .map(|_| {
            let z = rng.random_range(2.0f32..6.0);
            let q: [f32; 4] = [0, 1, 2, 3].map(|_| rng.random_range(-1.0f32..1.0));
            Gaussian {
                mean: [rng.random_range(-0.4..0.4) * z, rng.random_range(-0.4..0.4) * z, z],
                scale: [0, 1, 2].map(|_| rng.random_range(0.03f32..0.4)),
                rotation: if q.iter().map(|v| v * v).sum::<f32>() < 1e-3 { [1.0, 0.0, 0.0, 0.0] } else { q },
                opacity: rng.random_range(0.05..0.99),
                color: [0, 1, 2].map(|_| rng.random_range(0.0f32..1.0)),
            }
        })
        .collect();
    GaussianScene::new("random", gaussians).unwrap()
}

/// Per-pixel compositing of `values` (`P × dim`) with no tiles, footprint
/// bounds or thresholds: every projected splat, fully depth-sorted.
/// Returns the image and the per-pixel weight sums.
pub fn exhaustive_composite(scene: &GaussianScene, cam: &Camera, values: &[f64], dim: usize) -> (Image, Vec<f64>) {
    let mut splats: Vec<(usize, _)> =
        (0..scene.len()).filter_map(|i| project_unbounded(&scene.gaussian(i), cam).map(|p| (i, p))).collect();
    splats.sort_by(|a, b| a.1.depth.total_cmp(&b.1.depth).then(a.0.cmp(&b.0)));
    let mut img = Image::zeros(cam.height, cam.width, dim);
    let mut sums = vec![0.0; cam.width * cam.height];
    for y in 0..cam.height {
        for x in 0..cam.width {
            let mut t = 1.0;
            let px = [x as f64 + 0.5, y as f64 + 0.5];
            for (i, proj) in &splats {
                let a = alpha_at(proj, scene.opacities()[*i] as f64, px);
                let w = a * t;
                for c in 0..dim {
                    img.pixel_mut(y, x)[c] += w * values[i * dim + c];
                }
                sums[y * cam.width + x] += w;
                t *= 1.0 - a;
            }
        }
    }
    (img, sums)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `|a − n| / max(|a|, |n|)`, with differences below `floor` counted as exact.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let d = (analytic - numeric).abs();
    if d <= floor {
        0.0
    } else {
        d / analytic.abs().max(numeric.abs())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
