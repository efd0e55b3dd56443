#![allow(dead_code)]

use axum::body::Body;
use axum::http::{HeaderMap, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use stylesplat::decoder::KnnDecoder;
use stylesplat::render::{Camera, CameraRecord};
use stylesplat::scene::GaussianScene;
use stylesplat::toy::{orbit_camera, style_image, toy_scene};
use stylesplat_serve::{router, AppState, ServerConfig};
use tower::ServiceExt;

pub const CHANNELS: usize = 256;

/// Toy scene with random 256-channel features.
pub fn featured_scene(seed: u64, p: usize) -> GaussianScene {
    let mut scene = toy_scene(seed, p);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let feats = (0..p * CHANNELS).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    scene.set_high_feat(CHANNELS, feats).unwrap();
    scene
}

pub fn decoder(seed: u64, schedule: &[usize]) -> KnnDecoder {
    KnnDecoder::random(8, schedule, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub struct Fixture {
    pub state: AppState,
    pub scene: GaussianScene,
    pub decoder: KnnDecoder,
}

/// One ready scene called `toy`.
pub fn fixture(p: usize, schedule: &[usize], config: ServerConfig) -> Fixture {
    let scene = featured_scene(11, p);
    let decoder = decoder(12, schedule);
    let state = AppState::new(config);
    state.insert_scene("toy", scene.clone(), Some(decoder.clone())).unwrap();
    Fixture { state, scene, decoder }
}

pub fn small() -> Fixture {
    fixture(500, &[CHANNELS, 16, 3], ServerConfig::default())
}

pub fn camera(angle: f64) -> Camera {
    orbit_camera(angle, 4.0, 1.0, 48, 32)
}

pub fn camera_json(cam: &Camera) -> Value {
    serde_json::to_value(CameraRecord::from(cam)).unwrap()
}

pub fn style_png(seed: u64) -> Vec<u8> {
    style_image(seed, 40, 48).to_png().unwrap()
}

pub struct Reply {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&self.body)))
    }
}

pub async fn call(app: &Router, method: Method, uri: &str, body: impl Into<Body>) -> Reply {
    let req = Request::builder().method(method).uri(uri).body(body.into()).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let headers = resp.headers().clone();
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    call(app, Method::GET, uri, Body::empty()).await
}

pub async fn post(app: &Router, uri: &str, body: impl Into<Body>) -> Reply {
    call(app, Method::POST, uri, body).await
}

pub async fn post_json(app: &Router, uri: &str, v: &Value) -> Reply {
    post(app, uri, serde_json::to_vec(v).unwrap()).await
}

/// Uploads a style and returns its id.
pub async fn upload(app: &Router, bytes: Vec<u8>) -> String {
    let r = post(app, "/v1/styles", bytes).await;
    assert!(r.status.is_success(), "{}", String::from_utf8_lossy(&r.body));
    r.json()["id"].as_str().unwrap().to_string()
}

pub fn app(state: &AppState) -> Router {
    router(state.clone())
}
