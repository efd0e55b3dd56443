//! Camera poses in, PNG frames out, latest pose wins.
//!
//! Each inbound text message is a frame request (camera fields plus an
//! optional `seq`). Every rendered frame is sent as a JSON text header
//! `{"seq", "version", "width", "height"}` followed by the PNG as a binary
//! message. Poses that arrive while a frame renders replace each other, so
//! only the newest is rendered next; frames are never reordered.

use std::sync::Arc;

use axum::extract::ws::{CloseFrame, Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::response::Response;
use futures_util::{SinkExt, StreamExt};
use serde::Deserialize;
use serde_json::json;
use tokio::sync::watch;

use crate::error::ApiError;
use crate::routes::{frame_spec, render_png, FrameRequest, FrameSpec};
use crate::state::{AppState, SceneEntry};

/// Close code sent when the scene is unloaded.
pub const CLOSE_UNLOADED: u16 = 1001;

#[derive(Deserialize)]
struct Pose {
    #[serde(default)]
    seq: Option<u64>,
    #[serde(flatten)]
    frame: FrameRequest,
}

type Parsed = (u64, Result<FrameSpec, String>);

fn parse_pose(text: &str, fallback_seq: u64, max_pixels: usize) -> Parsed {
    match serde_json::from_str::<Pose>(text) {
        Ok(p) => (p.seq.unwrap_or(fallback_seq), frame_spec(p.frame, max_pixels).map_err(|e| e.message)),
        Err(e) => {
            let seq = serde_json::from_str::<serde_json::Value>(text).ok().and_then(|v| v.get("seq")?.as_u64());
            (seq.unwrap_or(fallback_seq), Err(format!("invalid pose: {e}")))
        }
    }
}

pub async fn stream(
    ws: WebSocketUpgrade,
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let entry = state.scene(&id)?;
    Ok(ws.on_upgrade(move |socket| run(socket, state, entry)))
}

async fn run(socket: WebSocket, state: AppState, entry: Arc<SceneEntry>) {
    let (mut sink, mut source) = socket.split();
    let (pose_tx, mut pose_rx) = watch::channel::<Option<Arc<Parsed>>>(None);
    let max_pixels = state.config.max_pixels;
    let reader = tokio::spawn(async move {
        let mut received = 0u64;
        while let Some(Ok(msg)) = source.next().await {
            match msg {
                Message::Text(t) => {
                    received += 1;
                    if pose_tx.send(Some(Arc::new(parse_pose(&t, received, max_pixels)))).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    });

    let mut closed = entry.closed();
    loop {
        tokio::select! {
            biased;
            _ = async { let _ = closed.wait_for(|c| *c).await; } => {
                let frame = CloseFrame { code: CLOSE_UNLOADED, reason: "scene unloaded".into() };
                let _ = sink.send(Message::Close(Some(frame))).await;
                break;
            }
            changed = pose_rx.changed() => {
                if changed.is_err() {
                    break;
                }
                let Some(pose) = pose_rx.borrow_and_update().clone() else { continue };
                let (seq, spec) = match &*pose {
                    (seq, Ok(spec)) => (*seq, spec.clone()),
                    (seq, Err(e)) => {
                        let msg = json!({ "seq": seq, "error": e }).to_string();
                        if sink.send(Message::Text(msg.into())).await.is_err() {
                            break;
                        }
                        continue;
                    }
                };
                let (w, h) = (spec.camera.width, spec.camera.height);
                let sent = match render_png(&state, entry.clone(), spec).await {
                    Ok((png, version)) => {
                        let head = json!({ "seq": seq, "version": version, "width": w, "height": h }).to_string();
                        sink.send(Message::Text(head.into())).await.is_ok()
                            && sink.send(Message::Binary(png.into())).await.is_ok()
                    }
                    Err(e) => sink.send(Message::Text(json!({ "seq": seq, "error": e.message }).to_string().into())).await.is_ok(),
                };
                if !sent {
                    break;
                }
            }
        }
    }
    reader.abort();
}
