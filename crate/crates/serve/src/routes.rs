use std::sync::atomic::Ordering;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Deserialize;
use serde_json::{json, Value};
use stylesplat::render::{Camera, CameraRecord};
use stylesplat::style::style_from_bytes;

use crate::error::ApiError;
use crate::state::{AppState, SceneEntry};

pub async fn healthz(State(state): State<AppState>) -> Json<Value> {
    let c = &state.counters;
    Json(json!({
        "status": "ok",
        "versions": {
            "stylesplat": stylesplat::VERSION,
            "stylesplat-serve": env!("CARGO_PKG_VERSION"),
        },
        "threads": stylesplat::par::threads(),
        "scenes": state.scenes().len(),
        "styles": state.styles().len(),
        "counters": {
            "adain": c.adain.load(Ordering::Relaxed),
            "decode": c.decode.load(Ordering::Relaxed),
            "frames": c.frames.load(Ordering::Relaxed),
            "frame_path_transfers": c.frame_path_transfers.load(Ordering::Relaxed),
        },
    }))
}

fn scene_json(e: &SceneEntry) -> Value {
    let snap = e.snapshot();
    let (d_low, d_high) = e.scene.feature_dims();
    json!({
        "id": e.id,
        "gaussians": e.scene.len(),
        "feature_dims": [d_low, d_high],
        "decoder": e.decoder.as_ref().map(|d| json!({ "k": d.k(), "schedule": d.schedule() })),
        "ready": e.ready(),
        "stylized": snap.colors.is_some(),
        "version": snap.version,
        "styles": snap.styles,
        "weights": snap.weights,
        "cached_styles": e.cached_styles(),
    })
}

pub async fn list_scenes(State(state): State<AppState>) -> Json<Value> {
    Json(Value::Array(state.scenes().iter().map(|e| scene_json(e)).collect()))
}

pub async fn get_scene(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let entry = state.scene(&id)?;
    Ok(Json(scene_json(&entry)))
}

pub async fn delete_scene(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.unload_scene(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn list_styles(State(state): State<AppState>) -> Json<Value> {
    let styles = state.styles().into_iter().map(|(id, s)| json!({ "id": id, "channels": s.channels() })).collect();
    Json(Value::Array(styles))
}

pub async fn get_style(State(state): State<AppState>, Path(id): Path<String>) -> Result<Json<Value>, ApiError> {
    let s = state.style(&id)?;
    Ok(Json(json!({ "id": id, "channels": s.channels(), "mean": s.mean, "std": s.std })))
}

pub async fn delete_style(State(state): State<AppState>, Path(id): Path<String>) -> Result<StatusCode, ApiError> {
    state.remove_style(&id)?;
    Ok(StatusCode::NO_CONTENT)
}

/// Accepts a PNG image, a `GSFM` feature map or a `GSST` statistics file.
pub async fn upload_style(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    if body.is_empty() {
        return Err(ApiError::bad_request("empty style payload"));
    }
    let st = state.clone();
    let stats = tokio::task::spawn_blocking(move || style_from_bytes(&body, &st.extractor))
        .await
        .map_err(ApiError::internal)?
        .map_err(|e| ApiError::bad_request(format!("undecodable style: {e}")))?;
    let channels = stats.channels();
    let (id, created) = state.add_style(stats);
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(json!({ "id": id, "channels": channels, "created": created }))).into_response())
}

#[derive(Debug, Deserialize)]
pub struct StylizeRequest {
    pub styles: Vec<String>,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

pub(crate) fn check_weights(styles: usize, weights: Option<Vec<f64>>) -> Result<Vec<f64>, ApiError> {
    let w = match weights {
        Some(w) => w,
        None if styles == 1 => vec![1.0],
        None => return Err(ApiError::unprocessable("weights are required when blending several styles")),
    };
    if styles == 0 {
        return Err(ApiError::unprocessable("at least one style is required"));
    }
    if w.len() != styles {
        return Err(ApiError::unprocessable(format!("{styles} styles but {} weights", w.len())));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(ApiError::unprocessable("weights must be finite and non-negative"));
    }
    let sum: f64 = w.iter().sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(ApiError::unprocessable(format!("weights sum to {sum}, expected 1")));
    }
    Ok(w)
}

pub async fn stylize(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let entry = state.scene(&id)?;
    let req: StylizeRequest =
        serde_json::from_slice(&body).map_err(|e| ApiError::unprocessable(format!("stylize request: {e}")))?;
    let weights = check_weights(req.styles.len(), req.weights)?;
    let styles = req
        .styles
        .iter()
        .map(|s| state.style(s).map(|st| (s.clone(), st)))
        .collect::<Result<Vec<_>, _>>()?;
    let st = state.clone();
    let report = tokio::task::spawn_blocking(move || entry.stylize(&styles, &weights, &st.counters))
        .await
        .map_err(ApiError::internal)??;
    Ok(Json(serde_json::to_value(report).map_err(ApiError::internal)?))
}

/// Camera plus per-frame options, as sent to the frame and stream endpoints.
#[derive(Debug, Deserialize)]
pub struct FrameRequest {
    #[serde(flatten)]
    pub camera: CameraRecord,
    #[serde(default)]
    pub channel: Option<String>,
    #[serde(default)]
    pub background: Option<[f64; 3]>,
}

#[derive(Clone)]
pub(crate) struct FrameSpec {
    pub camera: Camera,
    pub styled: bool,
    pub background: [f64; 3],
}

pub(crate) fn frame_spec(req: FrameRequest, max_pixels: usize) -> Result<FrameSpec, ApiError> {
    let styled = match req.channel.as_deref() {
        None | Some("styled") => true,
        Some("color") => false,
        Some(other) => return Err(ApiError::unprocessable(format!("unknown channel {other}; use styled or color"))),
    };
    let camera = Camera::try_from(req.camera).map_err(|e| ApiError::unprocessable(format!("invalid camera: {e}")))?;
    if camera.width.saturating_mul(camera.height) > max_pixels {
        return Err(ApiError::unprocessable(format!("{}×{} viewport is too large", camera.width, camera.height)));
    }
    Ok(FrameSpec { camera, styled, background: req.background.unwrap_or([0.0; 3]) })
}

pub(crate) fn parse_frame_request(bytes: &[u8], max_pixels: usize) -> Result<FrameSpec, ApiError> {
    let req: FrameRequest =
        serde_json::from_slice(bytes).map_err(|e| ApiError::unprocessable(format!("invalid camera: {e}")))?;
    frame_spec(req, max_pixels)
}

/// Renders one PNG frame off the async runtime.
pub(crate) async fn render_png(state: &AppState, entry: Arc<SceneEntry>, spec: FrameSpec) -> Result<(Vec<u8>, u64), ApiError> {
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let (img, version) = entry
            .render(&spec.camera, spec.styled, &spec.background, &st.counters)
            .map_err(ApiError::unprocessable)?;
        Ok((img.to_png().map_err(ApiError::internal)?, version))
    })
    .await
    .map_err(ApiError::internal)?
}

fn png_response(png: Vec<u8>, version: u64) -> Response {
    ([(header::CONTENT_TYPE, "image/png".to_string()), (header::HeaderName::from_static("x-snapshot-version"), version.to_string())], png)
        .into_response()
}

pub async fn post_frame(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let entry = state.scene(&id)?;
    let spec = parse_frame_request(&body, state.config.max_pixels)?;
    let (png, version) = render_png(&state, entry, spec).await?;
    Ok(png_response(png, version))
}

#[derive(Debug, Deserialize)]
pub struct FrameQuery {
    pub camera: String,
}

/// `GET` variant taking the same JSON in a `camera` query parameter.
pub async fn get_frame(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<FrameQuery>,
) -> Result<Response, ApiError> {
    let entry = state.scene(&id)?;
    let spec = parse_frame_request(q.camera.as_bytes(), state.config.max_pixels)?;
    let (png, version) = render_png(&state, entry, spec).await?;
    Ok(png_response(png, version))
}
