//! Small procedural scenes, camera rigs and style images for demos, tests
//! and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::image::Image;
use crate::render::Camera;
use crate::scene::{Gaussian, GaussianScene};

/// Ground disc radius; stays inside the orbit of [`orbit_cameras`].
const GROUND: f32 = 2.6;

/// A patterned sphere of radius 1 resting above a checkered ground disc.
/// About 60% of the Gaussians sit on the sphere.
pub fn toy_scene(seed: u64, p: usize) -> GaussianScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let on_sphere = p * 3 / 5;
    let sphere_scale = (4.0 * std::f32::consts::PI / on_sphere.max(1) as f32).sqrt() * 0.6;
    let ground_scale = (std::f32::consts::PI * GROUND * GROUND / (p - on_sphere).max(1) as f32).sqrt() * 0.6;
    let mut gaussians = Vec::with_capacity(p);
    for i in 0..p {
        let (mean, scale, color) = if i < on_sphere {
            let n = loop {
                let v: [f32; 3] = [0, 1, 2].map(|_| rng.random_range(-1.0f32..1.0));
                let r2 = v.iter().map(|x| x * x).sum::<f32>();
                if r2 > 1e-4 && r2 <= 1.0 {
                    break v.map(|x| x / r2.sqrt());
                }
            };
            let stripe = ((n[1] * 6.0).sin() * 0.5 + 0.5).clamp(0.0, 1.0);
            let color = [
                0.2 + 0.7 * stripe,
                0.5 + 0.4 * (n[0] * 3.0).cos() * (1.0 - stripe),
                0.3 + 0.6 * (0.5 + 0.5 * n[2]),
            ];
            (n, [sphere_scale; 3], color)
        } else {
            let r = GROUND * rng.random_range(0.0f32..1.0).sqrt();
            let t = rng.random_range(0.0..std::f32::consts::TAU);
            let (x, z) = (r * t.cos(), r * t.sin());
            let checker = ((x.floor() + z.floor()) as i32).rem_euclid(2) as f32;
            let color = [0.15 + 0.7 * checker, 0.25 + 0.3 * checker, 0.6 - 0.4 * checker];
            ([x, -1.05, z], [ground_scale, 0.02, ground_scale], color)
        };
        gaussians.push(Gaussian {
            mean,
            scale,
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity: rng.random_range(0.6..0.95),
            color: color.map(|c: f32| c.clamp(0.0, 1.0)),
        });
    }
    GaussianScene::new(format!("toy-{seed}"), gaussians).expect("toy Gaussians are valid")
}

/// Camera on a circle of `radius` around the y axis at `angle_deg`, raised
/// by `height` and looking at the origin. Focal length gives a ~50° field
/// of view across the width.
pub fn orbit_camera(angle_deg: f64, radius: f64, height: f64, width: usize, image_height: usize) -> Camera {
    let a = angle_deg.to_radians();
    let eye = [radius * a.sin(), height, -radius * a.cos()];
    let focal = width as f64 * 1.07;
    Camera::look_at(eye, [0.0, 0.0, 0.0], [0.0, 1.0, 0.0], focal, width, image_height)
}

/// `n` cameras spread evenly over `arc_deg` degrees starting at angle 0
/// (the full circle when `arc_deg` is 360).
pub fn orbit_cameras(n: usize, arc_deg: f64, width: usize, height: usize) -> Vec<Camera> {
    let step = if arc_deg >= 360.0 { arc_deg / n as f64 } else { arc_deg / (n.max(2) - 1) as f64 };
    (0..n).map(|i| orbit_camera(i as f64 * step, 3.2, 1.0, width, height)).collect()
}

fn hsv(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = h.rem_euclid(1.0) * 6.0;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match h6 as u32 {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Seeded color-field image: two saturated colors mixed by a few plane
/// waves, so different seeds differ strongly in color statistics and
/// texture scale.
pub fn style_image(seed: u64, height: usize, width: usize) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_57e1);
    let hue = rng.random_range(0.0..1.0);
    let primary = hsv(hue, rng.random_range(0.7..1.0), rng.random_range(0.6..1.0));
    let secondary = hsv(hue + rng.random_range(0.2..0.8), rng.random_range(0.5..1.0), rng.random_range(0.05..0.5));
    let waves: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| {
            let freq = rng.random_range(0.1..0.8);
            let theta = rng.random_range(0.0..std::f64::consts::PI);
            (freq * theta.cos(), freq * theta.sin(), rng.random_range(0.0..6.3))
        })
        .collect();
    let mut img = Image::zeros(height, width, 3);
    for y in 0..height {
        for x in 0..width {
            let m = waves
                .iter()
                .map(|(fx, fy, ph)| (fx * x as f64 + fy * y as f64 + ph).sin())
                .sum::<f64>()
                / 3.0;
            let t = (0.5 + 0.9 * m).clamp(0.0, 1.0);
            let px = img.pixel_mut(y, x);
            for c in 0..3 {
                px[c] = (primary[c] * t + secondary[c] * (1.0 - t)).clamp(0.0, 1.0);
            }
        }
    }
    img
}

/// `n` style images with consecutive seeds.
pub fn style_images(n: usize, seed: u64, size: usize) -> Vec<Image> {
    (0..n as u64).map(|i| style_image(seed.wrapping_add(i), size, size)).collect()
}
