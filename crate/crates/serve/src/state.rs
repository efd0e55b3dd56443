//! Scene and style registries shared by all handlers.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use stylesplat::decoder::{decode_values, KnnDecoder};
use stylesplat::extractor::ToyExtractor;
use stylesplat::image::Image;
use stylesplat::render::{rasterize, Camera, RenderOptions};
use stylesplat::scene::{load_scene, GaussianScene, KnnIndex};
use stylesplat::style::{adain_values, compute_scene_stats, interpolate_styles, ChannelStats, StyleStats};
use tokio::sync::watch;

use crate::error::ApiError;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    /// Seed of the toy extractor used for uploaded style images.
    pub extractor_seed: u64,
    /// Styles whose transferred features are kept per scene.
    pub style_cache: usize,
    /// Upload size limit in bytes.
    pub max_upload: usize,
    /// Largest accepted frame area in pixels.
    pub max_pixels: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig { extractor_seed: 7, style_cache: 8, max_upload: 16 << 20, max_pixels: 4096 * 4096 }
    }
}

#[derive(Debug, Default)]
pub struct Counters {
    pub adain: AtomicU64,
    pub decode: AtomicU64,
    pub frames: AtomicU64,
    /// Transfers or decodes observed while rendering a frame; must stay 0.
    pub frame_path_transfers: AtomicU64,
}

/// What frames are rendered from. Replaced whole on every stylize.
#[derive(Debug, Default)]
pub struct Snapshot {
    pub colors: Option<Vec<[f32; 3]>>,
    pub styles: Vec<String>,
    pub weights: Vec<f64>,
    pub version: u64,
}

/// Small least-recently-used map keyed by style id.
#[derive(Debug)]
struct Lru<V> {
    cap: usize,
    entries: VecDeque<(String, V)>,
}

impl<V: Clone> Lru<V> {
    fn new(cap: usize) -> Self {
        Lru { cap: cap.max(1), entries: VecDeque::new() }
    }

    fn get(&mut self, key: &str) -> Option<V> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        let e = self.entries.remove(i)?;
        let v = e.1.clone();
        self.entries.push_back(e);
        Some(v)
    }

    fn insert(&mut self, key: String, v: V) {
        self.entries.retain(|(k, _)| *k != key);
        self.entries.push_back((key, v));
        while self.entries.len() > self.cap {
            self.entries.pop_front();
        }
    }

    fn remove(&mut self, key: &str) {
        self.entries.retain(|(k, _)| k != key);
    }

    fn keys(&self) -> Vec<String> {
        self.entries.iter().map(|(k, _)| k.clone()).collect()
    }
}

pub struct SceneEntry {
    pub id: String,
    pub scene: GaussianScene,
    pub decoder: Option<KnnDecoder>,
    knn: Option<KnnIndex>,
    stats: Option<ChannelStats>,
    transformed: Mutex<Lru<Arc<Vec<f32>>>>,
    snapshot: RwLock<Arc<Snapshot>>,
    busy: AtomicBool,
    closed: watch::Sender<bool>,
}

/// Clears the in-flight flag when a stylize job ends.
struct Busy<'a>(&'a AtomicBool);

impl Drop for Busy<'_> {
    fn drop(&mut self) {
        self.0.store(false, Ordering::Release);
    }
}

#[derive(Clone, Debug, serde::Serialize)]
pub struct StylizeReport {
    pub scene: String,
    pub styles: Vec<String>,
    pub weights: Vec<f64>,
    /// Wall time of the whole transfer: AdaIN for uncached styles, blending and decoding.
    pub decode_ms: f64,
    pub adain_ms: f64,
    pub adain_runs: usize,
    pub version: u64,
}

impl SceneEntry {
    pub fn new(id: impl Into<String>, scene: GaussianScene, decoder: Option<KnnDecoder>, cache: usize) -> stylesplat::Result<Self> {
        let knn = match &decoder {
            Some(d) => Some(stylesplat::scene::build_knn(&scene, d.k())?),
            None => None,
        };
        Self::with_knn(id, scene, decoder, knn, cache)
    }

    fn with_knn(
        id: impl Into<String>,
        scene: GaussianScene,
        decoder: Option<KnnDecoder>,
        knn: Option<KnnIndex>,
        cache: usize,
    ) -> stylesplat::Result<Self> {
        let stats = scene.high_feat().is_some().then(|| compute_scene_stats(&scene)).transpose()?;
        let snapshot = Snapshot { colors: scene.styled_color().map(<[_]>::to_vec), ..Snapshot::default() };
        Ok(SceneEntry {
            id: id.into(),
            scene,
            decoder,
            knn,
            stats,
            transformed: Mutex::new(Lru::new(cache)),
            snapshot: RwLock::new(Arc::new(snapshot)),
            busy: AtomicBool::new(false),
            closed: watch::channel(false).0,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn cached_styles(&self) -> Vec<String> {
        self.transformed.lock().unwrap_or_else(|e| e.into_inner()).keys()
    }

    pub fn ready(&self) -> bool {
        self.stats.is_some() && self.decoder.is_some()
    }

    pub fn closed(&self) -> watch::Receiver<bool> {
        self.closed.subscribe()
    }

    fn close(&self) {
        self.closed.send_replace(true);
    }

    /// Renders RGB from the current snapshot, or the base colors when
    /// `styled` is false or nothing has been stylized yet.
    pub fn render(&self, cam: &Camera, styled: bool, background: &[f64; 3], counters: &Counters) -> stylesplat::Result<(Image, u64)> {
        let (a0, d0) = (stylesplat::counters::adain_calls(), stylesplat::counters::decode_calls());
        let snap = self.snapshot();
        let cache = rasterize(&self.scene, cam, &RenderOptions::default())?;
        let image = match (&snap.colors, styled) {
            (Some(c), true) => cache.composite(c.as_flattened(), 3, background),
            _ => cache.composite(self.scene.colors().as_flattened(), 3, background),
        };
        if (stylesplat::counters::adain_calls(), stylesplat::counters::decode_calls()) != (a0, d0) {
            counters.frame_path_transfers.fetch_add(1, Ordering::Relaxed);
        }
        counters.frames.fetch_add(1, Ordering::Relaxed);
        Ok((image, snap.version))
    }

    /// Transfers (or reuses) each style, blends, decodes and swaps the snapshot.
    pub fn stylize(
        &self,
        styles: &[(String, Arc<StyleStats>)],
        weights: &[f64],
        counters: &Counters,
    ) -> Result<StylizeReport, ApiError> {
        let (Some(stats), Some(decoder), Some(knn)) = (&self.stats, &self.decoder, &self.knn) else {
            return Err(ApiError::conflict(format!("scene {} has no features or no decoder", self.id)));
        };
        if self.busy.swap(true, Ordering::AcqRel) {
            return Err(ApiError::conflict(format!("a stylize job is already running on scene {}", self.id)));
        }
        let _busy = Busy(&self.busy);
        let high = self.scene.high_feat().expect("stats imply high_feat");
        let start = Instant::now();
        let mut sets = Vec::with_capacity(styles.len());
        let mut adain_runs = 0;
        for (id, style) in styles {
            let cached = self.transformed.lock().unwrap_or_else(|e| e.into_inner()).get(id);
            let set = match cached {
                Some(s) => s,
                None => {
                    let s = Arc::new(adain_values(high, stats, style).map_err(ApiError::unprocessable)?);
                    counters.adain.fetch_add(1, Ordering::Relaxed);
                    adain_runs += 1;
                    self.transformed.lock().unwrap_or_else(|e| e.into_inner()).insert(id.clone(), s.clone());
                    s
                }
            };
            sets.push(set);
        }
        let adain_ms = start.elapsed().as_secs_f64() * 1e3;
        let refs: Vec<&[f32]> = sets.iter().map(|s| s.as_slice()).collect();
        let blended = interpolate_styles(&refs, weights).map_err(ApiError::unprocessable)?;
        let colors = decode_values(&blended, decoder, knn).map_err(ApiError::internal)?;
        counters.decode.fetch_add(1, Ordering::Relaxed);
        let decode_ms = start.elapsed().as_secs_f64() * 1e3;

        let mut slot = self.snapshot.write().unwrap_or_else(|e| e.into_inner());
        let version = slot.version + 1;
        *slot = Arc::new(Snapshot {
            colors: Some(colors),
            styles: styles.iter().map(|(id, _)| id.clone()).collect(),
            weights: weights.to_vec(),
            version,
        });
        Ok(StylizeReport {
            scene: self.id.clone(),
            styles: styles.iter().map(|(id, _)| id.clone()).collect(),
            weights: weights.to_vec(),
            decode_ms,
            adain_ms,
            adain_runs,
            version,
        })
    }

    fn forget_style(&self, id: &str) {
        self.transformed.lock().unwrap_or_else(|e| e.into_inner()).remove(id);
    }
}

pub struct Inner {
    pub config: ServerConfig,
    pub extractor: ToyExtractor,
    scenes: RwLock<BTreeMap<String, Arc<SceneEntry>>>,
    styles: RwLock<BTreeMap<String, Arc<StyleStats>>>,
    pub counters: Counters,
}

/// Cheaply clonable handle to the server state.
#[derive(Clone)]
pub struct AppState(pub Arc<Inner>);

impl std::ops::Deref for AppState {
    type Target = Inner;

    fn deref(&self) -> &Inner {
        &self.0
    }
}

impl AppState {
    pub fn new(config: ServerConfig) -> Self {
        let extractor = ToyExtractor::new(config.extractor_seed);
        AppState(Arc::new(Inner {
            config,
            extractor,
            scenes: RwLock::default(),
            styles: RwLock::default(),
            counters: Counters::default(),
        }))
    }

    /// Loads every `.gssc`/`.ply` scene in `dir`. A scene's decoder is
    /// `<stem>.gsdc` next to it, falling back to `decoder.gsdc`. KNN
    /// indices are cached under `dir/.knn`.
    pub fn load_dir(&self, dir: &Path) -> stylesplat::Result<usize> {
        let mut paths: Vec<_> = std::fs::read_dir(dir)
            .map_err(|e| stylesplat::Error::IoPath { path: dir.to_path_buf(), source: e })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "gssc" || e == "ply"))
            .collect();
        paths.sort();
        let shared = dir.join("decoder.gsdc");
        let mut n = 0;
        for path in paths {
            let scene = load_scene(&path)?;
            let own = path.with_extension("gsdc");
            let decoder = if own.exists() {
                Some(KnnDecoder::load(&own)?)
            } else if shared.exists() {
                Some(KnnDecoder::load(&shared)?)
            } else {
                None
            };
            let knn = match &decoder {
                Some(d) => Some(KnnIndex::load_or_build(&dir.join(".knn"), &scene, d.k())?),
                None => None,
            };
            let id = scene.name.clone();
            log::info!("loaded scene {id}: {} Gaussians, decoder {}", scene.len(), decoder.is_some());
            let entry = SceneEntry::with_knn(id, scene, decoder, knn, self.config.style_cache)?;
            self.insert_entry(entry);
            n += 1;
        }
        Ok(n)
    }

    pub fn insert_scene(&self, id: &str, scene: GaussianScene, decoder: Option<KnnDecoder>) -> stylesplat::Result<()> {
        self.insert_entry(SceneEntry::new(id, scene, decoder, self.config.style_cache)?);
        Ok(())
    }

    fn insert_entry(&self, entry: SceneEntry) {
        let old = self.scenes.write().unwrap_or_else(|e| e.into_inner()).insert(entry.id.clone(), Arc::new(entry));
        if let Some(old) = old {
            old.close();
        }
    }

    pub fn scene(&self, id: &str) -> Result<Arc<SceneEntry>, ApiError> {
        self.scenes
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no scene {id}")))
    }

    pub fn scenes(&self) -> Vec<Arc<SceneEntry>> {
        self.scenes.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect()
    }

    /// Removes a scene and closes its frame streams.
    pub fn unload_scene(&self, id: &str) -> Result<(), ApiError> {
        let entry = self.scenes.write().unwrap_or_else(|e| e.into_inner()).remove(id);
        entry.map(|e| e.close()).ok_or_else(|| ApiError::not_found(format!("no scene {id}")))
    }

    /// Registers style statistics; returns the id and whether it was new.
    pub fn add_style(&self, stats: StyleStats) -> (String, bool) {
        let id = stats.source_hex();
        let mut map = self.styles.write().unwrap_or_else(|e| e.into_inner());
        let fresh = !map.contains_key(&id);
        map.entry(id.clone()).or_insert_with(|| Arc::new(stats));
        (id, fresh)
    }

    pub fn style(&self, id: &str) -> Result<Arc<StyleStats>, ApiError> {
        self.styles
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("no style {id}")))
    }

    pub fn styles(&self) -> Vec<(String, Arc<StyleStats>)> {
        self.styles.read().unwrap_or_else(|e| e.into_inner()).iter().map(|(k, v)| (k.clone(), v.clone())).collect()
    }

    pub fn remove_style(&self, id: &str) -> Result<(), ApiError> {
        self.styles
            .write()
            .unwrap_or_else(|e| e.into_inner())
            .remove(id)
            .ok_or_else(|| ApiError::not_found(format!("no style {id}")))?;
        for s in self.scenes() {
            s.forget_style(id);
        }
        Ok(())
    }
}
