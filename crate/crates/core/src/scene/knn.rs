//! K-nearest-neighbor index over Gaussian centers.
//!
//! Row `i` lists Gaussian `i` first, then its `K - 1` nearest other
//! Gaussians by Euclidean distance between means, ties broken by smaller
//! index. A uniform grid prunes the search; results are identical to an
//! exhaustive sort.

use std::path::{Path, PathBuf};

use super::GaussianScene;
use crate::error::{Error, Result};
use crate::par;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KnnIndex {
    k: usize,
    neighbors: Vec<u32>,
}

/// Transpose of a [`KnnIndex`]: for each Gaussian, the `(row, rank)` slots
/// that reference it, in ascending slot order.
#[derive(Clone, Debug)]
pub struct ReverseKnn {
    offsets: Vec<u32>,
    slots: Vec<u32>,
}

impl ReverseKnn {
    /// Flat slots `row * K + rank` that point at `target`.
    pub fn slots(&self, target: usize) -> &[u32] {
        &self.slots[self.offsets[target] as usize..self.offsets[target + 1] as usize]
    }
}

impl KnnIndex {
    pub fn from_rows(k: usize, neighbors: Vec<u32>) -> Result<Self> {
        if k == 0 || neighbors.len() % k != 0 {
            return Err(Error::Format(format!("{} entries do not form rows of {k}", neighbors.len())));
        }
        let p = neighbors.len() / k;
        for (i, row) in neighbors.chunks_exact(k).enumerate() {
            if row[0] as usize != i {
                return Err(Error::Format(format!("row {i} does not start with itself")));
            }
            if row.iter().any(|&j| j as usize >= p) {
                return Err(Error::Format(format!("row {i} has an out-of-range index")));
            }
        }
        Ok(KnnIndex { k, neighbors })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.neighbors.len() / self.k
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.neighbors[i * self.k..(i + 1) * self.k]
    }

    /// All rows, flattened row-major.
    pub fn as_slice(&self) -> &[u32] {
        &self.neighbors
    }

    pub fn reverse(&self) -> ReverseKnn {
        let p = self.len();
        let mut counts = vec![0u32; p + 1];
        for &j in &self.neighbors {
            counts[j as usize + 1] += 1;
        }
        for i in 0..p {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut slots = vec![0u32; self.neighbors.len()];
        for (slot, &j) in self.neighbors.iter().enumerate() {
            let at = &mut fill[j as usize];
            slots[*at as usize] = slot as u32;
            *at += 1;
        }
        ReverseKnn { offsets: counts, slots }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(14 + self.neighbors.len() * 4);
        out.extend_from_slice(b"GSKN");
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.k as u16).to_le_bytes());
        for v in &self.neighbors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..4] != b"GSKN" {
            return Err(Error::Format("not a GSKN file".into()));
        }
        let p = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let k = u16::from_le_bytes(bytes[8..10].try_into().unwrap()) as usize;
        let body = &bytes[10..];
        if body.len() != p * k * 4 {
            return Err(Error::Format("GSKN payload length mismatch".into()));
        }
        let neighbors = body
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_rows(k, neighbors)
    }

    /// Cache file for a scene's geometry and `k` inside `dir`.
    pub fn cache_path(dir: &Path, scene: &GaussianScene, k: usize) -> PathBuf {
        let hash = scene.geometry_hash();
        let hex: String = hash[..12].iter().map(|b| format!("{b:02x}")).collect();
        dir.join(format!("knn-{hex}-k{k}.gskn"))
    }

    /// Reads the cached index for `(scene geometry, k)` or builds and stores it.
    pub fn load_or_build(dir: &Path, scene: &GaussianScene, k: usize) -> Result<Self> {
        let path = Self::cache_path(dir, scene, k);
        if let Ok(bytes) = std::fs::read(&path) {
            match Self::from_bytes(&bytes) {
                Ok(idx) if idx.k == k && idx.len() == scene.len() => return Ok(idx),
                _ => log::warn!("ignoring stale KNN cache {}", path.display()),
            }
        }
        let idx = build_knn(scene, k)?;
        std::fs::create_dir_all(dir).map_err(Error::io_at(dir))?;
        crate::manifest::write_atomic(&path, &idx.to_bytes())?;
        Ok(idx)
    }
}

#[inline]
fn dist2(a: [f32; 3], b: [f32; 3]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

struct Grid {
    origin: [f64; 3],
    cell: f64,
    dims: [usize; 3],
    offsets: Vec<u32>,
    items: Vec<u32>,
}

impl Grid {
    fn new(points: &[[f32; 3]], k: usize) -> Grid {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for p in points {
            for a in 0..3 {
                lo[a] = lo[a].min(p[a] as f64);
                hi[a] = hi[a].max(p[a] as f64);
            }
        }
        let extent: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-9)).collect();
        let volume: f64 = extent.iter().product();
        // about k points per cell, at most ~2M cells
        let cells_wanted = ((points.len() as f64 / k.max(1) as f64).max(1.0)).min(2e6);
        let mut cell = (volume / cells_wanted).cbrt();
        let max_extent = extent.iter().cloned().fold(0.0, f64::max);
        cell = cell.max(max_extent / 256.0);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as usize + 1).max(1));
        let n_cells = dims[0] * dims[1] * dims[2];
        let mut grid = Grid { origin: lo, cell, dims, offsets: vec![0; n_cells + 1], items: Vec::new() };
        let ids: Vec<usize> = points.iter().map(|p| grid.cell_id(grid.coords(*p))).collect();
        for &c in &ids {
            grid.offsets[c + 1] += 1;
        }
        for c in 0..n_cells {
            grid.offsets[c + 1] += grid.offsets[c];
        }
        let mut fill = grid.offsets.clone();
        grid.items = vec![0; points.len()];
        for (i, &c) in ids.iter().enumerate() {
            grid.items[fill[c] as usize] = i as u32;
            fill[c] += 1;
        }
        grid
    }

    fn coords(&self, p: [f32; 3]) -> [usize; 3] {
        [0, 1, 2].map(|a| {
            let t = ((p[a] as f64 - self.origin[a]) / self.cell).floor();
            (t.max(0.0) as usize).min(self.dims[a] - 1)
        })
    }

    fn cell_id(&self, c: [usize; 3]) -> usize {
        (c[2] * self.dims[1] + c[1]) * self.dims[0] + c[0]
    }

    fn cell_items(&self, c: [usize; 3]) -> &[u32] {
        let id = self.cell_id(c);
        &self.items[self.offsets[id] as usize..self.offsets[id + 1] as usize]
    }
}

/// Keeps the `cap` smallest `(dist², index)` pairs, sorted ascending.
struct Best {
    cap: usize,
    items: Vec<(f64, u32)>,
}

impl Best {
    fn offer(&mut self, d: f64, j: u32) {
        if self.cap == 0 {
            return;
        }
        if self.items.len() == self.cap {
            let last = self.items[self.cap - 1];
            if (d, j) >= last {
                return;
            }
            self.items.pop();
        }
        let at = self.items.partition_point(|&e| e < (d, j));
        self.items.insert(at, (d, j));
    }

    fn worst(&self) -> Option<f64> {
        (self.items.len() == self.cap).then(|| self.items.last().map_or(0.0, |e| e.0))
    }
}

fn query(grid: &Grid, points: &[[f32; 3]], i: usize, k: usize) -> Vec<u32> {
    let me = points[i];
    let home = grid.coords(me);
    let mut best = Best { cap: k - 1, items: Vec::with_capacity(k) };
    let max_ring = grid.dims.iter().copied().max().unwrap_or(1);
    for ring in 0..=max_ring {
        let lo = home.map(|c| c as isize - ring as isize);
        let hi = home.map(|c| c as isize + ring as isize);
        for z in lo[2].max(0)..=hi[2].min(grid.dims[2] as isize - 1) {
            for y in lo[1].max(0)..=hi[1].min(grid.dims[1] as isize - 1) {
                for x in lo[0].max(0)..=hi[0].min(grid.dims[0] as isize - 1) {
                    let on_shell = x == lo[0] || x == hi[0] || y == lo[1] || y == hi[1] || z == lo[2] || z == hi[2];
                    if !on_shell {
                        continue;
                    }
                    for &j in grid.cell_items([x as usize, y as usize, z as usize]) {
                        if j as usize != i {
                            best.offer(dist2(me, points[j as usize]), j);
                        }
                    }
                }
            }
        }
        // Unvisited points are at least `ring * cell` away along some axis.
        if let Some(w) = best.worst() {
            let reach = ring as f64 * grid.cell * (1.0 - 1e-9);
            if w < reach * reach {
                break;
            }
        }
    }
    let mut row = Vec::with_capacity(k);
    row.push(i as u32);
    row.extend(best.items.iter().map(|e| e.1));
    row
}

/// Builds the KNN table with `k` entries per row (self included).
pub fn build_knn(scene: &GaussianScene, k: usize) -> Result<KnnIndex> {
    let p = scene.len();
    if k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if p < k {
        return Err(Error::Config(format!("scene has {p} Gaussians, fewer than K = {k}")));
    }
    let points = scene.means();
    let grid = Grid::new(points, k);
    let rows = par::map_indexed(p, |i| query(&grid, points, i, k));
    Ok(KnnIndex { k, neighbors: rows.into_iter().flatten().collect() })
}
