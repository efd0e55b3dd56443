//! Multi-view consistency by depth reprojection, and transfer/render timing.

use std::fmt::Write as _;
use std::time::Instant;

use crate::decoder::{stylize, KnnDecoder};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::render::{render, Camera, RenderChannel, RenderOutput};
use crate::scene::{GaussianScene, KnnIndex};
use crate::style::StyleStats;

/// Pixels whose accumulated weight is at or below this are not warped.
pub const MIN_COVERAGE: f64 = 0.5;
/// Relative depth disagreement treated as an occlusion.
pub const DEPTH_TOLERANCE: f64 = 0.02;
/// Reprojections this close to a pixel center are read from that pixel.
const SNAP: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub rmse: f64,
    pub valid_fraction: f64,
    pub view_pair: (usize, usize),
}

fn styled_render(scene: &GaussianScene, cam: &Camera) -> Result<RenderOutput> {
    if scene.styled_color().is_none() {
        return Err(Error::Contract("scene has no styled_color; stylize it first".into()));
    }
    render(scene, cam, RenderChannel::STYLED, &[0.0; 3])
}

/// Normalized depth of pixel `p`, or `None` when it is not covered.
fn pixel_depth(out: &RenderOutput, p: usize) -> Option<f64> {
    let w = out.weight_sum[p];
    (w > MIN_COVERAGE).then(|| out.depth_map[p] / w)
}

/// Bilinear read at continuous pixel coordinates (pixel centers at +0.5).
fn sample_bilinear(img: &Image, u: f64, v: f64) -> Vec<f64> {
    let snap = |t: f64| if (t - t.round()).abs() < SNAP { t.round() } else { t };
    let x = snap(u - 0.5).clamp(0.0, (img.width - 1) as f64);
    let y = snap(v - 0.5).clamp(0.0, (img.height - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(img.width - 1), (y0 + 1).min(img.height - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    if fx == 0.0 && fy == 0.0 {
        return img.pixel(y0, x0).to_vec();
    }
    (0..img.channels)
        .map(|c| {
            let a = img.pixel(y0, x0)[c] * (1.0 - fx) + img.pixel(y0, x1)[c] * fx;
            let b = img.pixel(y1, x0)[c] * (1.0 - fx) + img.pixel(y1, x1)[c] * fx;
            a * (1.0 - fy) + b * fy
        })
        .collect()
}

/// Warps the styled render of view A into view B through A's depth map and
/// reports the RGB error over pixels that land visibly inside B.
pub fn warp_consistency(scene: &GaussianScene, cam_a: &Camera, cam_b: &Camera) -> Result<ConsistencyReport> {
    let a = styled_render(scene, cam_a)?;
    let b = styled_render(scene, cam_b)?;
    Ok(warp_renders(&a, cam_a, &b, cam_b))
}

fn warp_renders(a: &RenderOutput, cam_a: &Camera, b: &RenderOutput, cam_b: &Camera) -> ConsistencyReport {
    let (w, h) = (cam_a.width, cam_a.height);
    let mut sum = 0.0;
    let mut valid = 0usize;
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let Some(z) = pixel_depth(a, p) else { continue };
            let (u, v) = (x as f64 + 0.5, y as f64 + 0.5);
            let pc = [(u - cam_a.cx) / cam_a.fx * z, (v - cam_a.cy) / cam_a.fy * z, z];
            let world = cam_a.to_world(pc);
            let qc = cam_b.to_camera(world);
            if qc[2] <= cam_b.near_clip {
                continue;
            }
            let [ub, vb] = cam_b.project_point(qc);
            if !(ub >= 0.0 && vb >= 0.0 && ub < cam_b.width as f64 && vb < cam_b.height as f64) {
                continue;
            }
            let pb = vb as usize * cam_b.width + ub as usize;
            let Some(zb) = pixel_depth(b, pb) else { continue };
            if (zb - qc[2]).abs() >= DEPTH_TOLERANCE * qc[2] {
                continue;
            }
            let sampled = sample_bilinear(&b.image, ub, vb);
            for (s, &c) in sampled.iter().zip(a.image.pixel(y, x)) {
                sum += (s - c) * (s - c);
            }
            valid += 1;
        }
    }
    let rmse = if valid == 0 { 0.0 } else { (sum / (3 * valid) as f64).sqrt() };
    ConsistencyReport { rmse, valid_fraction: valid as f64 / (w * h).max(1) as f64, view_pair: (0, 0) }
}

/// Consistency for each `(i, j)` pair of `cameras`; each view is rendered once.
pub fn consistency_for_pairs(
    scene: &GaussianScene,
    cameras: &[Camera],
    pairs: &[(usize, usize)],
) -> Result<Vec<ConsistencyReport>> {
    if let Some(&(i, j)) = pairs.iter().find(|&&(i, j)| i >= cameras.len() || j >= cameras.len()) {
        return Err(Error::Contract(format!("pair ({i}, {j}) refers to a missing camera; {} given", cameras.len())));
    }
    let mut renders: Vec<Option<RenderOutput>> = vec![None; cameras.len()];
    for &(i, j) in pairs {
        for k in [i, j] {
            if renders[k].is_none() {
                renders[k] = Some(styled_render(scene, &cameras[k])?);
            }
        }
    }
    Ok(pairs
        .iter()
        .map(|&(i, j)| {
            let mut r = warp_renders(renders[i].as_ref().unwrap(), &cameras[i], renders[j].as_ref().unwrap(), &cameras[j]);
            r.view_pair = (i, j);
            r
        })
        .collect())
}

pub fn consistency_csv(reports: &[ConsistencyReport]) -> String {
    let mut s = String::from("view_a,view_b,rmse,valid_fraction\n");
    for r in reports {
        let _ = writeln!(s, "{},{},{:.9},{:.6}", r.view_pair.0, r.view_pair.1, r.rmse, r.valid_fraction);
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    /// Scene statistics, AdaIN and decoding, once.
    pub transfer_seconds: f64,
    /// Median per-frame render time.
    pub render_seconds: f64,
    pub frames: usize,
    pub gaussians: usize,
    pub width: usize,
    pub height: usize,
}

impl TimingReport {
    pub fn to_csv(&self) -> String {
        format!(
            "gaussians,width,height,frames,transfer_seconds,render_seconds\n{},{},{},{},{:.9},{:.9}\n",
            self.gaussians, self.width, self.height, self.frames, self.transfer_seconds, self.render_seconds
        )
    }
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    match n {
        0 => 0.0,
        _ if n % 2 == 1 => values[n / 2],
        _ => 0.5 * (values[n / 2 - 1] + values[n / 2]),
    }
}

/// Median wall time of styled renders cycling through `cameras`.
pub fn time_renders(scene: &GaussianScene, cameras: &[Camera], frames: usize) -> Result<f64> {
    if cameras.is_empty() {
        return Err(Error::Contract("timing needs at least one camera".into()));
    }
    let mut times = Vec::with_capacity(frames);
    for f in 0..frames {
        let t = Instant::now();
        let out = styled_render(scene, &cameras[f % cameras.len()])?;
        std::hint::black_box(&out);
        times.push(t.elapsed().as_secs_f64());
    }
    Ok(median(&mut times))
}

/// Times one transfer (stats, AdaIN, decode) and then `frames` renders
/// (at least 20).
pub fn measure_timing(
    scene: &mut GaussianScene,
    decoder: &KnnDecoder,
    knn: &KnnIndex,
    style: &StyleStats,
    cameras: &[Camera],
    frames: usize,
) -> Result<TimingReport> {
    let t = Instant::now();
    stylize(scene, style, decoder, knn)?;
    let transfer_seconds = t.elapsed().as_secs_f64();
    let frames = frames.max(20);
    let render_seconds = time_renders(scene, cameras, frames)?;
    let cam = cameras.first().expect("checked by time_renders");
    Ok(TimingReport {
        transfer_seconds,
        render_seconds,
        frames,
        gaussians: scene.len(),
        width: cam.width,
        height: cam.height,
    })
}
