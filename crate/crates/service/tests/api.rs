use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use relit_core::fixtures::{gen_fixture, sky_env, FixtureKind, FixtureMaterial};
use relit_core::imageio::{load_bundle, read_environment, save_bundle, write_image, ImageFormat, PlaneEncoding};
use relit_core::prefilter::{build_dfg_lut, build_pyramid};
use relit_core::render::{display_png, relight_view, ViewState};
use relit_core::{PrefilterConfig, ShadingOptions};
use relit_service::{router, AppState};

const LUT_RES: usize = 32;
const LUT_SAMPLES: u32 = 256;

struct Fixture {
    _dir: tempfile::TempDir,
    manifest: PathBuf,
    env: PathBuf,
    dim_env: PathBuf,
}

fn fixture(res: usize, frames: usize) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let m = FixtureMaterial {
        frames,
        ..Default::default()
    };
    let g = gen_fixture(FixtureKind::ThreeSpheres, res, &m);
    let manifest = save_bundle(dir.path(), &g, Some("sky.pfm")).unwrap();
    let env = dir.path().join("sky.pfm");
    let dim_env = dir.path().join("dim.pfm");
    let sky = sky_env(32);
    write_image(&env, sky.pixels(), ImageFormat::Pfm, PlaneEncoding::Linear).unwrap();
    write_image(&dim_env, sky.scaled(0.1).pixels(), ImageFormat::Pfm, PlaneEncoding::Linear).unwrap();
    Fixture {
        _dir: dir,
        manifest,
        env,
        dim_env,
    }
}

fn app() -> Router {
    router(AppState::with_lut(build_dfg_lut(LUT_RES, LUT_SAMPLES).unwrap()))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, bytes)
}

async fn json_call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, bytes) = call(app, method, uri, body).await;
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router, manifest: &Path) -> String {
    let (status, v) = json_call(app, "POST", "/session", Some(json!({ "bundle_path": manifest }))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    v["session_id"].as_str().unwrap().to_string()
}

async fn wait_ready(app: &Router, id: &str) -> Value {
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let (status, v) = json_call(app, "GET", &format!("/session/{id}"), None).await;
        assert_eq!(status, StatusCode::OK);
        match v["status"]["state"].as_str().unwrap() {
            "ready" => return v,
            "failed" => panic!("build failed: {v}"),
            _ => assert!(Instant::now() < deadline, "pyramid build timed out"),
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
}

async fn frame(app: &Router, id: &str, query: &str) -> Vec<u8> {
    let (status, bytes) = call(app, "GET", &format!("/session/{id}/frame?{query}"), None).await;
    assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&bytes));
    bytes
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn frames_match_direct_render() {
    let f = fixture(48, 3);
    let app = app();
    let id = create(&app, &f.manifest).await;
    let info = wait_ready(&app, &id).await;
    assert_eq!(info["frames"], 3);
    assert_eq!(info["mode"], "relight");

    let served = frame(&app, &id, "index=2").await;
    let bundle = load_bundle(&f.manifest).unwrap();
    let p = build_pyramid(&read_environment(&f.env).unwrap(), &PrefilterConfig::relight()).unwrap();
    let lut = build_dfg_lut(LUT_RES, LUT_SAMPLES).unwrap();
    let view = ViewState::default();
    let hdr = relight_view(&bundle.frames[2], &view, &p, &lut, &ShadingOptions::default()).unwrap();
    let direct = display_png(&hdr, view.tonemap_params(), None).unwrap();
    assert_eq!(served, direct);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn edits_change_and_restore_frame() {
    let f = fixture(32, 1);
    let app = app();
    let id = create(&app, &f.manifest).await;
    wait_ready(&app, &id).await;
    let base = frame(&app, &id, "").await;
    let edit_uri = format!("/session/{id}/edit");

    let (status, v) = json_call(&app, "POST", &edit_uri, Some(json!({ "roughness_set": 0.9, "exposure_ev": 1.0 }))).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    let r1 = v["revision"].as_u64().unwrap();
    let edited = frame(&app, &id, "").await;
    assert_ne!(edited, base);

    // absent fields stay; null clears
    let (_, v) = json_call(&app, "POST", &edit_uri, Some(json!({ "roughness_set": null }))).await;
    assert!(v["revision"].as_u64().unwrap() > r1);
    assert_eq!(v["view"]["exposure_ev"], 1.0);
    assert!(v["view"]["edit"]["roughness_set"].is_null());
    json_call(&app, "POST", &edit_uri, Some(json!({ "exposure_ev": 0.0 }))).await;
    assert_eq!(frame(&app, &id, "").await, base);

    let (status, _) = call(&app, "GET", &format!("/session/{id}/materials?plane=orm"), None).await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn rejects_bad_requests() {
    let f = fixture(16, 1);
    let app = app();
    let (status, _) = call(&app, "GET", "/session/99/frame", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = call(&app, "GET", "/session/abc", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = json_call(&app, "POST", "/session", Some(json!({ "bundle_path": "/nonexistent/bundle.json" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);

    let id = create(&app, &f.manifest).await;
    let edit_uri = format!("/session/{id}/edit");
    for bad in [json!({ "roughness_set": 1.5 }), json!({ "roughness_scale": -1.0 }), json!({ "exposure_ev": 99.0 })] {
        let (status, v) = json_call(&app, "POST", &edit_uri, Some(bad.clone())).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{bad}: {v}");
        assert!(v["error"].is_string());
    }
    wait_ready(&app, &id).await;
    let (status, _) = call(&app, "GET", &format!("/session/{id}/frame?index=5"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    let (status, _) = call(&app, "GET", &format!("/session/{id}/materials?plane=bogus"), None).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn environment_swap_rebuilds_once() {
    let f = fixture(32, 1);
    let app = app();
    let id = create(&app, &f.manifest).await;

    // the first build is still running, so neither a frame nor a second build is allowed
    let (status, _) = call(&app, "GET", &format!("/session/{id}/frame"), None).await;
    let (swap, _) = json_call(&app, "POST", &format!("/session/{id}/env"), Some(json!({ "env_path": f.dim_env }))).await;
    let info = wait_ready(&app, &id).await;
    if info["revision"].as_u64().unwrap() == 2 {
        assert_eq!(status, StatusCode::CONFLICT);
        assert_eq!(swap, StatusCode::CONFLICT);
    }

    let before = frame(&app, &id, "").await;
    let next = if info["env_path"] == json!(f.dim_env) { &f.env } else { &f.dim_env };
    let (status, v) = json_call(&app, "POST", &format!("/session/{id}/env"), Some(json!({ "env_path": next }))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let info = wait_ready(&app, &id).await;
    assert_eq!(info["env_path"], json!(next));
    assert_ne!(frame(&app, &id, "").await, before);

    let (status, v) = json_call(&app, "POST", &format!("/session/{id}/env"), Some(json!({ "rotation_deg": 90.0 }))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["view"]["env_rotation_deg"], 90.0);
    let (status, _) = json_call(&app, "POST", &format!("/session/{id}/env"), Some(json!({ "env_path": "/missing.pfm" }))).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn warm_frame_latency() {
    let f = fixture(256, 1);
    let app = app();
    let id = create(&app, &f.manifest).await;
    wait_ready(&app, &id).await;
    frame(&app, &id, "").await;
    let mut times = Vec::new();
    for i in 0..5 {
        json_call(&app, "POST", &format!("/session/{id}/edit"), Some(json!({ "roughness_scale": 1.0 + 0.1 * i as f32 }))).await;
        let started = Instant::now();
        frame(&app, &id, "").await;
        times.push(started.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];
    println!("warm 256x256 frame: median {median:.1} ms over {times:?}");
    assert!(median < 100.0, "median {median:.1} ms");
}

#[test]
fn tint_round_trips_through_json() {
    let v: ViewState = serde_json::from_value(json!({ "edit": { "albedo_tint": [1.0, 0.5, 0.25] } })).unwrap();
    assert_eq!(v.edit.albedo_tint, Some([1.0, 0.5, 0.25]));
}
