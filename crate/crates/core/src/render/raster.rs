//! Front-to-back compositing into per-pixel blend lists.
//!
//! Geometry alone determines the blending weights, so one [`BlendCache`]
//! per view serves every per-Gaussian channel: compositing is a sparse
//! linear map from Gaussian values to pixels, and the channel gradient is
//! its transpose.

use std::sync::OnceLock;

use super::project::{alpha_at, project, project_unbounded, SplatProjection};
use super::Camera;
use crate::error::Result;
use crate::image::Image;
use crate::par;
use crate::scene::GaussianScene;

const TILE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderOptions {
    /// Splats with α below this are skipped at a pixel.
    pub alpha_cutoff: f64,
    /// Traversal stops once transmittance drops below this.
    pub min_transmittance: f64,
    /// Restrict each splat to its 3σ box and cull off-screen splats.
    pub bounded: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { alpha_cutoff: 1.0 / 255.0, min_transmittance: 1e-4, bounded: true }
    }
}

impl RenderOptions {
    /// Every splat in front of the camera contributes at every pixel.
    pub fn exact() -> Self {
        RenderOptions { alpha_cutoff: 0.0, min_transmittance: 0.0, bounded: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendEntry {
    pub index: u32,
    pub weight: f64,
}

/// Per-Gaussian transpose: `(pixel, weight)` pairs in pixel order.
#[derive(Clone, Debug)]
struct Transposed {
    offsets: Vec<u32>,
    entries: Vec<(u32, f64)>,
}

#[derive(Debug)]
pub struct BlendCache {
    pub width: usize,
    pub height: usize,
    gaussians: usize,
    offsets: Vec<u32>,
    entries: Vec<BlendEntry>,
    weight_sum: Vec<f64>,
    depths: Vec<f64>,
    transposed: OnceLock<Transposed>,
}

impl Clone for BlendCache {
    fn clone(&self) -> Self {
        BlendCache {
            width: self.width,
            height: self.height,
            gaussians: self.gaussians,
            offsets: self.offsets.clone(),
            entries: self.entries.clone(),
            weight_sum: self.weight_sum.clone(),
            depths: self.depths.clone(),
            transposed: OnceLock::new(),
        }
    }
}

impl BlendCache {
    /// Blend list of pixel `y * width + x`, front to back.
    pub fn pixel(&self, p: usize) -> &[BlendEntry] {
        &self.entries[self.offsets[p] as usize..self.offsets[p + 1] as usize]
    }

    pub fn pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn gaussians(&self) -> usize {
        self.gaussians
    }

    /// Σ wᵢ per pixel.
    pub fn weight_sum(&self) -> &[f64] {
        &self.weight_sum
    }

    /// Camera-frame depth of each Gaussian's mean (0 when culled).
    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn entry_count(&self) -> usize {
        self.entries.len()
    }

    /// `Σ wᵢ vᵢ + (1 − Σ wᵢ) · background` for a `P × dim` value table.
    pub fn composite<T: Copy + Into<f64> + Sync>(&self, values: &[T], dim: usize, background: &[f64]) -> Image {
        assert_eq!(values.len(), self.gaussians * dim, "composite: value table shape");
        assert!(background.is_empty() || background.len() == dim, "composite: background width");
        let mut img = Image::zeros(self.height, self.width, dim);
        let row_len = self.width * dim;
        par::for_each_chunk_mut(&mut img.data, row_len.max(1), |y, row| {
            for x in 0..self.width {
                let p = y * self.width + x;
                let out = &mut row[x * dim..(x + 1) * dim];
                for e in self.pixel(p) {
                    let v = &values[e.index as usize * dim..(e.index as usize + 1) * dim];
                    for (o, &vi) in out.iter_mut().zip(v) {
                        *o += e.weight * vi.into();
                    }
                }
                if !background.is_empty() {
                    let rest = 1.0 - self.weight_sum[p];
                    for (o, b) in out.iter_mut().zip(background) {
                        *o += rest * b;
                    }
                }
            }
        });
        img
    }

    fn transposed(&self) -> &Transposed {
        self.transposed.get_or_init(|| {
            let mut offsets = vec![0u32; self.gaussians + 1];
            for e in &self.entries {
                offsets[e.index as usize + 1] += 1;
            }
            for i in 0..self.gaussians {
                offsets[i + 1] += offsets[i];
            }
            let mut fill = offsets.clone();
            let mut entries = vec![(0u32, 0.0); self.entries.len()];
            for p in 0..self.pixels() {
                for e in self.pixel(p) {
                    let at = &mut fill[e.index as usize];
                    entries[*at as usize] = (p as u32, e.weight);
                    *at += 1;
                }
            }
            Transposed { offsets, entries }
        })
    }

    /// Gradient of a composite w.r.t. the `P × C` value table:
    /// `grad[g] = Σ_pixels w(g, pixel) · grad_image[pixel]`.
    pub fn backward(&self, grad_image: &Image) -> Vec<f64> {
        assert_eq!(grad_image.height, self.height, "backward: grad height");
        assert_eq!(grad_image.width, self.width, "backward: grad width");
        let dim = grad_image.channels;
        let t = self.transposed();
        let mut grad = vec![0.0; self.gaussians * dim];
        const CHUNK: usize = 64;
        par::for_each_chunk_mut(&mut grad, CHUNK * dim.max(1), |c, out| {
            for (local, g_out) in out.chunks_mut(dim.max(1)).enumerate() {
                let g = c * CHUNK + local;
                let span = t.offsets[g] as usize..t.offsets[g + 1] as usize;
                for &(p, w) in &t.entries[span] {
                    let gi = &grad_image.data[p as usize * dim..(p as usize + 1) * dim];
                    for (o, &v) in g_out.iter_mut().zip(gi) {
                        *o += w * v;
                    }
                }
            }
        });
        grad
    }
}

struct Visible {
    index: u32,
    proj: SplatProjection,
    opacity: f64,
}

/// Computes the blend lists for one view.
pub fn rasterize(scene: &GaussianScene, cam: &Camera, opts: &RenderOptions) -> Result<BlendCache> {
    cam.validate()?;
    let p = scene.len();
    let projections = par::map_indexed(p, |i| {
        let g = scene.gaussian(i);
        if opts.bounded {
            project(&g, cam)
        } else {
            project_unbounded(&g, cam)
        }
    });
    let depths: Vec<f64> = projections.iter().map(|pr| pr.map_or(0.0, |p| p.depth)).collect();
    let mut visible: Vec<Visible> = projections
        .iter()
        .enumerate()
        .filter_map(|(i, pr)| {
            pr.map(|proj| Visible { index: i as u32, proj, opacity: scene.opacities()[i] as f64 })
        })
        .collect();
    visible.sort_by(|a, b| a.proj.depth.total_cmp(&b.proj.depth).then(a.index.cmp(&b.index)));

    let (w, h) = (cam.width, cam.height);
    let (tiles_x, tiles_y) = (w.div_ceil(TILE), h.div_ceil(TILE));
    let mut tiles: Vec<Vec<u32>> = vec![Vec::new(); if opts.bounded { tiles_x * tiles_y } else { 1 }];
    for (slot, v) in visible.iter().enumerate() {
        if !opts.bounded {
            tiles[0].push(slot as u32);
            continue;
        }
        let r = v.proj.radius;
        let [mx, my] = v.proj.mean2d;
        let tile_range = |lo: f64, hi: f64, n: usize| {
            let a = ((lo - 0.5) / TILE as f64).floor().max(0.0) as usize;
            let b = ((hi - 0.5) / TILE as f64).floor();
            if b < 0.0 {
                return (1, 0);
            }
            (a, (b as usize).min(n - 1))
        };
        let (x0, x1) = tile_range(mx - r, mx + r, tiles_x);
        let (y0, y1) = tile_range(my - r, my + r, tiles_y);
        for ty in y0..=y1.min(tiles_y.saturating_sub(1)) {
            for tx in x0..=x1 {
                tiles[ty * tiles_x + tx].push(slot as u32);
            }
        }
    }

    let rows = par::map_indexed(h, |y| {
        let mut counts = Vec::with_capacity(w);
        let mut entries = Vec::new();
        let mut sums = Vec::with_capacity(w);
        let py = y as f64 + 0.5;
        for x in 0..w {
            let px = x as f64 + 0.5;
            let list = if opts.bounded { &tiles[(y / TILE) * tiles_x + x / TILE] } else { &tiles[0] };
            let before = entries.len();
            let mut transmittance = 1.0;
            for &slot in list {
                let v = &visible[slot as usize];
                if opts.bounded
                    && ((px - v.proj.mean2d[0]).abs() > v.proj.radius
                        || (py - v.proj.mean2d[1]).abs() > v.proj.radius)
                {
                    continue;
                }
                let alpha = alpha_at(&v.proj, v.opacity, [px, py]);
                if alpha < opts.alpha_cutoff || alpha <= 0.0 {
                    continue;
                }
                entries.push(BlendEntry { index: v.index, weight: alpha * transmittance });
                transmittance *= 1.0 - alpha;
                if transmittance < opts.min_transmittance {
                    break;
                }
            }
            counts.push((entries.len() - before) as u32);
            sums.push(entries[before..].iter().map(|e| e.weight).sum::<f64>());
        }
        (counts, entries, sums)
    });

    let total: usize = rows.iter().map(|r| r.1.len()).sum();
    let mut offsets = Vec::with_capacity(w * h + 1);
    let mut entries = Vec::with_capacity(total);
    let mut weight_sum = Vec::with_capacity(w * h);
    offsets.push(0u32);
    for (counts, row_entries, sums) in rows {
        let mut at = entries.len() as u32;
        for c in counts {
            at += c;
            offsets.push(at);
        }
        entries.extend(row_entries);
        weight_sum.extend(sums);
    }
    Ok(BlendCache {
        width: w,
        height: h,
        gaussians: p,
        offsets,
        entries,
        weight_sum,
        depths,
        transposed: OnceLock::new(),
    })
}
