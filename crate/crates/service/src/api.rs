use std::collections::HashMap;
use std::io::Cursor;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, Multipart, Path, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use iseg_core::guidance::{ClickSizePolicy, Polarity};
use iseg_core::raster::{self, Mask};
use ndarray::Array2;
use serde::{Deserialize, Serialize};
use tokio::sync::Mutex;

use crate::config::ServiceConfig;
use crate::error::{ApiError, ApiResult};
use crate::registry::{CheckpointInfo, CheckpointRegistry};
use crate::session::{PaddedShape, Revision, Session};

struct Entry {
    session: Session,
    last_used: Instant,
}

pub struct AppState {
    config: ServiceConfig,
    registry: CheckpointRegistry,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> Arc<Self> {
        let registry = CheckpointRegistry::new(config.checkpoint_dir.clone());
        Arc::new(AppState { config, registry, sessions: RwLock::new(HashMap::new()) })
    }

    pub fn registry(&self) -> &CheckpointRegistry {
        &self.registry
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session lock").len()
    }

    /// Drop sessions idle for longer than the TTL. Sessions busy with a
    /// request are kept.
    pub fn evict_expired(&self, now: Instant) -> usize {
        let ttl = self.config.session_ttl();
        let mut sessions = self.sessions.write().expect("session lock");
        let before = sessions.len();
        sessions.retain(|_, entry| match entry.try_lock() {
            Ok(e) => now.saturating_duration_since(e.last_used) <= ttl,
            Err(_) => true,
        });
        before - sessions.len()
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Mutex<Entry>>> {
        self.sessions.read().expect("session lock").get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload_bytes;
    Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/checkpoints", get(list_checkpoints))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/clicks", post(add_click))
        .route("/sessions/{id}/mask", get(get_mask))
        .route("/sessions/{id}/undo", post(undo))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Periodically evict idle sessions.
pub fn spawn_sweeper(state: Arc<AppState>) -> tokio::task::JoinHandle<()> {
    let period = (state.config.session_ttl() / 4).clamp(Duration::from_secs(1), Duration::from_secs(60));
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(period);
        loop {
            tick.tick().await;
            let n = state.evict_expired(Instant::now());
            if n > 0 {
                tracing::info!(evicted = n, "expired sessions dropped");
            }
        }
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickRequest {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
}

#[derive(Debug, Deserialize)]
pub struct MaskQuery {
    pub revision: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClickView {
    pub row: usize,
    pub col: usize,
    pub polarity: Polarity,
    pub size_px: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskResponse {
    pub session_id: String,
    pub checkpoint: String,
    pub revision: u64,
    pub latest_revision: u64,
    pub height: usize,
    pub width: usize,
    pub padded_height: usize,
    pub padded_width: usize,
    pub clicks: Vec<ClickView>,
    /// Size given to the click that produced this revision.
    pub applied_click_size: Option<u32>,
    /// Size the next click would get.
    pub next_click_size: u32,
    pub foreground_pixels: usize,
    pub dsc: Option<f64>,
    /// Lossless 8-bit grayscale PNG, 255 = foreground.
    pub mask_png_base64: String,
}

fn mask_png(mask: &Mask) -> ApiResult<Vec<u8>> {
    let (h, w) = raster::dims(mask);
    let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| image::Luma([if mask[[y as usize, x as usize]] { 255 } else { 0 }]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(out.into_inner())
}

fn respond(session: &Session, rev: &Revision, headers: &HeaderMap, status: StatusCode) -> ApiResult<Response> {
    let png = mask_png(&rev.mask)?;
    let wants_png = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|a| a.contains("image/png") && !a.contains("application/json"));
    if wants_png {
        let mut resp = (status, [(header::CONTENT_TYPE, HeaderValue::from_static("image/png"))], png).into_response();
        let h = resp.headers_mut();
        h.insert("x-session-id", HeaderValue::from_str(&session.id).map_err(|e| ApiError::Internal(e.to_string()))?);
        h.insert("x-revision", HeaderValue::from(rev.revision));
        if let Some(size) = rev.applied_size {
            h.insert("x-applied-click-size", HeaderValue::from(size));
        }
        return Ok(resp);
    }
    let (h, w) = session.dims();
    let PaddedShape { height: ph, width: pw } = session.padded;
    let body = MaskResponse {
        session_id: session.id.clone(),
        checkpoint: session.checkpoint.clone(),
        revision: rev.revision,
        latest_revision: session.latest().revision,
        height: h,
        width: w,
        padded_height: ph,
        padded_width: pw,
        clicks: rev.clicks.clicks.iter().map(|c| ClickView { row: c.row, col: c.col, polarity: c.polarity, size_px: c.size_px }).collect(),
        applied_click_size: rev.applied_size,
        next_click_size: session.next_click_size(),
        foreground_pixels: raster::count_foreground(&rev.mask),
        dsc: rev.dsc,
        mask_png_base64: base64::engine::general_purpose::STANDARD.encode(png),
    };
    Ok((status, Json(body)).into_response())
}

async fn list_checkpoints(State(state): State<Arc<AppState>>) -> ApiResult<Json<Vec<CheckpointInfo>>> {
    let s = state.clone();
    let list = tokio::task::spawn_blocking(move || s.registry.list()).await.map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(Json(list))
}

fn decode_image(bytes: &[u8]) -> ApiResult<Array2<f32>> {
    let img = image::load_from_memory(bytes).map_err(|e| ApiError::BadImage(e.to_string()))?;
    let gray = img.to_luma32f();
    let (w, h) = gray.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| gray.get_pixel(c as u32, r as u32)[0].clamp(0.0, 1.0)))
}

fn decode_mask(bytes: &[u8]) -> ApiResult<Mask> {
    let img = image::load_from_memory(bytes).map_err(|e| ApiError::BadImage(format!("ground truth: {e}")))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(r, c)| gray.get_pixel(c as u32, r as u32)[0] > 0))
}

async fn create_session(State(state): State<Arc<AppState>>, headers: HeaderMap, mut form: Multipart) -> ApiResult<Response> {
    let (mut image, mut gt, mut policy, mut checkpoint) = (None, None, ClickSizePolicy::default(), None);
    while let Some(field) = form.next_field().await.map_err(|e| ApiError::BadRequest(e.to_string()))? {
        let name = field.name().unwrap_or_default().to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.to_string()))?;
        match name.as_str() {
            "image" => image = Some(bytes),
            "gt" => gt = Some(bytes),
            "policy" => policy = serde_json::from_slice(&bytes).map_err(|e| ApiError::BadRequest(format!("policy: {e}")))?,
            "checkpoint" => checkpoint = Some(String::from_utf8_lossy(&bytes).trim().to_string()),
            other => return Err(ApiError::BadRequest(format!("unexpected field {other:?}"))),
        }
    }
    let image = image.ok_or_else(|| ApiError::BadRequest("missing image field".into()))?;
    let ckpt_id = state.registry.resolve(checkpoint.as_deref(), state.config.default_checkpoint.as_deref())?;
    let st = state.clone();
    let session = tokio::task::spawn_blocking(move || -> ApiResult<Session> {
        let image = decode_image(&image)?;
        let gt = gt.map(|b| decode_mask(&b)).transpose()?;
        let (_, model) = st.registry.get(&ckpt_id)?;
        let multiple = model.spec().size_multiple();
        let id = format!("{:032x}", rand::random::<u128>());
        Session::new(id, ckpt_id, model, image, gt, policy, multiple)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))??;
    let resp = respond(&session, session.latest(), &headers, StatusCode::CREATED)?;
    tracing::info!(session = %session.id, dims = ?session.dims(), "session created");
    state
        .sessions
        .write()
        .expect("session lock")
        .insert(session.id.clone(), Arc::new(Mutex::new(Entry { session, last_used: Instant::now() })));
    Ok(resp)
}

/// Run `f` on the session off the async runtime, serialized per session.
async fn with_session<F>(state: &AppState, id: &str, headers: HeaderMap, f: F) -> ApiResult<Response>
where
    F: FnOnce(&mut Session) -> ApiResult<u64> + Send + 'static,
{
    let entry = state.entry(id)?;
    let guard = entry.lock_owned().await;
    tokio::task::spawn_blocking(move || {
        let mut guard = guard;
        guard.last_used = Instant::now();
        let rev = f(&mut guard.session)?;
        let session = &guard.session;
        respond(session, session.revision(Some(rev))?, &headers, StatusCode::OK)
    })
    .await
    .map_err(|e| ApiError::Internal(e.to_string()))?
}

async fn add_click(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
    Json(req): Json<ClickRequest>,
) -> ApiResult<Response> {
    with_session(&state, &id, headers, move |s| Ok(s.add_click(req.row, req.col, req.polarity)?.revision)).await
}

async fn undo(State(state): State<Arc<AppState>>, Path(id): Path<String>, headers: HeaderMap) -> ApiResult<Response> {
    with_session(&state, &id, headers, |s| Ok(s.undo()?.revision)).await
}

async fn get_mask(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<MaskQuery>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    with_session(&state, &id, headers, move |s| Ok(s.revision(q.revision)?.revision)).await
}
