use std::io::Cursor;
use std::path::Path;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use base64::Engine;
use http_body_util::BodyExt;
use iseg_core::network::{build_network, ModelCheckpoint, NetworkSpec, TrainingMeta};
use iseg_service::{router, AppState, MaskResponse, ServiceConfig};
use serde_json::Value;
use tower::ServiceExt;

const BOUNDARY: &str = "iseg-test-boundary";

fn write_checkpoint(dir: &Path, name: &str, seed: u64) {
    let model = build_network(&NetworkSpec::iunet(2), seed).unwrap();
    ModelCheckpoint::new(model, TrainingMeta { epochs: 1, seed, ..Default::default() })
        .save(dir.join(format!("{name}.ckpt")))
        .unwrap();
}

fn app(dir: &Path) -> Router {
    let config = ServiceConfig { checkpoint_dir: dir.to_path_buf(), ..Default::default() };
    router(AppState::new(config))
}

fn png(h: u32, w: u32, f: impl Fn(u32, u32) -> u8) -> Vec<u8> {
    let img = image::GrayImage::from_fn(w, h, |x, y| image::Luma([f(y, x)]));
    let mut out = Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).unwrap();
    out.into_inner()
}

fn disk_png(h: u32, w: u32) -> Vec<u8> {
    png(h, w, |r, c| {
        let (dr, dc) = (r as f64 - h as f64 / 2.0, c as f64 - w as f64 / 2.0);
        if dr * dr + dc * dc < 144.0 { 200 } else { 40 }
    })
}

fn multipart(parts: &[(&str, &[u8])]) -> Request<Body> {
    let mut body = Vec::new();
    for (name, data) in parts {
        body.extend_from_slice(format!("--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"{name}\"; filename=\"{name}\"\r\n\r\n").as_bytes());
        body.extend_from_slice(data);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/sessions")
        .header(header::CONTENT_TYPE, format!("multipart/form-data; boundary={BOUNDARY}"))
        .body(Body::from(body))
        .unwrap()
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn json(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let (status, body) = send(app, req).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn click(id: &str, row: usize, col: usize, polarity: &str) -> Request<Body> {
    Request::post(format!("/sessions/{id}/clicks"))
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(format!(r#"{{"row":{row},"col":{col},"polarity":"{polarity}"}}"#)))
        .unwrap()
}

fn decode_mask(resp: &MaskResponse) -> image::GrayImage {
    let bytes = base64::engine::general_purpose::STANDARD.decode(&resp.mask_png_base64).unwrap();
    image::load_from_memory(&bytes).unwrap().to_luma8()
}

#[tokio::test]
async fn session_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(dir.path(), "toy", 1);
    let app = app(dir.path());

    let (status, body) = json(&app, multipart(&[("image", &disk_png(64, 64)), ("gt", &disk_png(64, 64))])).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let created: MaskResponse = serde_json::from_value(body).unwrap();
    assert_eq!((created.revision, created.height, created.width), (0, 64, 64));
    assert_eq!(created.checkpoint, "toy");
    assert!(created.dsc.is_some());
    let id = created.session_id.clone();

    let (status, body) = json(&app, click(&id, 32, 32, "foreground")).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let first: MaskResponse = serde_json::from_value(body).unwrap();
    assert_eq!((first.revision, first.applied_click_size), (1, Some(5)));
    assert_eq!(first.clicks.len(), 1);

    let (status, body) = json(&app, click(&id, 64, 3, "background")).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(body["code"], "out_of_bounds");
    let (_, latest) = json(&app, Request::get(format!("/sessions/{id}/mask")).body(Body::empty()).unwrap()).await;
    assert_eq!(latest["revision"], 1);

    let (status, body) = json(&app, Request::post(format!("/sessions/{id}/undo")).body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let undone: MaskResponse = serde_json::from_value(body).unwrap();
    assert_eq!(undone.revision, 2);
    assert!(undone.clicks.is_empty());
    assert_eq!(decode_mask(&undone), decode_mask(&created));

    let (_, body) = json(&app, Request::get(format!("/sessions/{id}/mask?revision=1")).body(Body::empty()).unwrap()).await;
    let stale: MaskResponse = serde_json::from_value(body).unwrap();
    assert_eq!(decode_mask(&stale), decode_mask(&first));
    assert_eq!(stale.latest_revision, 2);

    let raw = Request::get(format!("/sessions/{id}/mask?revision=1"))
        .header(header::ACCEPT, "image/png")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(raw).await.unwrap();
    assert_eq!(resp.headers()[header::CONTENT_TYPE], "image/png");
    assert_eq!(resp.headers()["x-revision"], "1");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(image::load_from_memory(&bytes).unwrap().to_luma8(), decode_mask(&first));

    let (status, body) = json(&app, Request::get(format!("/sessions/{id}/mask?revision=9")).body(Body::empty()).unwrap()).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_revision")));
}

#[tokio::test]
async fn error_paths() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(dir.path(), "toy", 1);
    let app = app(dir.path());

    let (status, body) = json(&app, multipart(&[("image", b"definitely not a png")])).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_image")));
    assert!(body["message"].is_string());

    let (status, body) = json(&app, multipart(&[("image", &disk_png(32, 32)), ("checkpoint", b"missing")])).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_checkpoint")));

    let (status, body) = json(&app, click("nope", 1, 1, "foreground")).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::NOT_FOUND, Some("unknown_session")));

    let (status, body) = json(&app, multipart(&[("image", &disk_png(32, 32)), ("gt", &disk_png(16, 16))])).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_image")));

    let (_, body) = json(&app, multipart(&[("image", &disk_png(32, 32))])).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    let (status, body) = json(&app, Request::post(format!("/sessions/{id}/undo")).body(Body::empty()).unwrap()).await;
    assert_eq!((status, body["code"].as_str()), (StatusCode::CONFLICT, Some("nothing_to_undo")));
}

#[tokio::test]
async fn odd_sizes_are_padded_and_cropped() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(dir.path(), "toy", 2);
    let app = app(dir.path());
    let (status, body) = json(&app, multipart(&[("image", &disk_png(100, 100))])).await;
    assert_eq!(status, StatusCode::CREATED);
    let r: MaskResponse = serde_json::from_value(body).unwrap();
    assert_eq!((r.padded_height, r.padded_width), (112, 112));
    assert_eq!(decode_mask(&r).dimensions(), (100, 100));
}

#[tokio::test]
async fn dynamic_policy_and_checkpoint_listing() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(dir.path(), "a", 1);
    write_checkpoint(dir.path(), "b", 2);
    let app = app(dir.path());

    let (status, body) = json(&app, Request::get("/checkpoints").body(Body::empty()).unwrap()).await;
    assert_eq!(status, StatusCode::OK);
    let ids: Vec<&str> = body.as_array().unwrap().iter().map(|c| c["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["a", "b"]);
    assert_eq!(body[0]["spec"]["in_channels"], 3);

    // two checkpoints and no default: the request must name one
    let (status, _) = json(&app, multipart(&[("image", &disk_png(32, 32))])).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let policy = br#"{"mode":"dynamic","alpha":"1/800"}"#;
    let (status, body) = json(&app, multipart(&[("image", &disk_png(64, 64)), ("policy", policy), ("checkpoint", b"b")])).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let created: MaskResponse = serde_json::from_value(body).unwrap();
    // size from the previous mask: fixed 5 while it is empty, else
    // round(area / 800) clamped to [1, 64 / 4]
    let expected = |area: usize| if area == 0 { 5 } else { ((area as u64 * 2 + 800) / 1600).clamp(1, 16) as u32 };
    assert_eq!(created.next_click_size, expected(created.foreground_pixels));
    let (_, body) = json(&app, click(&created.session_id, 30, 30, "foreground")).await;
    let r: MaskResponse = serde_json::from_value(body).unwrap();
    assert_eq!(r.applied_click_size, Some(expected(created.foreground_pixels)));
    assert_eq!(r.next_click_size, expected(r.foreground_pixels));
}

#[tokio::test]
async fn sessions_expire() {
    let dir = tempfile::tempdir().unwrap();
    write_checkpoint(dir.path(), "toy", 1);
    let state = AppState::new(ServiceConfig { checkpoint_dir: dir.path().to_path_buf(), session_ttl_secs: 0, ..Default::default() });
    let app = router(state.clone());
    let (_, body) = json(&app, multipart(&[("image", &disk_png(32, 32))])).await;
    let id = body["session_id"].as_str().unwrap().to_string();
    assert_eq!(state.session_count(), 1);
    let later = std::time::Instant::now() + std::time::Duration::from_millis(10);
    assert_eq!(state.evict_expired(later), 1);
    let (status, _) = json(&app, click(&id, 1, 1, "foreground")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
