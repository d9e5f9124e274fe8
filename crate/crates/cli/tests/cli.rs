use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

use relit_core::imageio::{read_image, write_image, ImageFormat, PlaneEncoding};
use relit_core::recon::{warp, Homography};

fn relit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relit"))
        .args(args)
        .env("RELIT_THREADS", "2")
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Vec<Value> {
    let out = relit(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout lines are JSON"))
        .collect()
}

async fn send(app: &axum::Router, method: &str, uri: &str, body: Value) -> Vec<u8> {
    use http_body_util::BodyExt;
    use tower::ServiceExt;
    let req = axum::http::Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let body = match body {
        Value::Null => axum::body::Body::empty(),
        v => axum::body::Body::from(v.to_string()),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    assert!(resp.status().is_success(), "{method} {uri}: {}", resp.status());
    resp.into_body().collect().await.unwrap().to_bytes().to_vec()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn fixture_oracle_relight_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    let lines = ok(&["gen-fixture", "sphere", "--res", "48", "--roughness", "0.6", "--out", path(&bundle), "--env-res", "32"]);
    assert_eq!(lines[0]["command"], "gen-fixture");
    assert_eq!(lines[0]["global"]["threads"], 2);
    let manifest = bundle.join("manifest.json");
    assert!(manifest.exists() && bundle.join("env.pfm").exists());

    let refs = dir.path().join("refs");
    let out = dir.path().join("out");
    ok(&["--seed", "3", "oracle", "--bundle", path(&manifest), "--spp", "2048", "--out", path(&refs)]);
    let lines = ok(&["--seed", "3", "relight", "--bundle", path(&manifest), "--no-multiscatter", "--out", path(&out)]);
    assert_eq!(lines[0]["config"]["prefilter"]["mode"], "relight");
    assert!(out.join("frame_000.png").exists());

    let lines = ok(&[
        "metrics",
        "--test",
        path(&out.join("frame_000.pfm")),
        "--reference",
        path(&refs.join("reference_000.pfm")),
        "--mask",
        path(&bundle.join("frame_000_alpha.png")),
    ]);
    let psnr = lines[1]["psnr"].as_f64().unwrap();
    assert!(psnr > 30.0, "psnr {psnr}");
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    ok(&["gen-fixture", "three-spheres", "--res", "32", "--frames", "2", "--out", path(&bundle), "--env-res", "32"]);
    let manifest = bundle.join("manifest.json");
    let pyr = dir.path().join("pyr");
    let out = dir.path().join("out");
    let masks = dir.path().join("masks");
    let run = || {
        ok(&["--seed", "9", "prefilter", "--env", path(&bundle.join("env.pfm")), "--base-res", "32", "--out", path(&pyr)]);
        ok(&["--seed", "9", "relight", "--bundle", path(&manifest), "--roughness-scale", "1.5", "--out", path(&out)]);
        ok(&["mask", "--bundle", path(&manifest), "--out", path(&masks)]);
        let mut files = Vec::new();
        for d in [&pyr, &out, &masks] {
            let mut names: Vec<_> = std::fs::read_dir(d).unwrap().map(|e| e.unwrap().path()).collect();
            names.sort();
            files.extend(names.into_iter().map(|p| (p.clone(), read(&p))));
        }
        files
    };
    let first = run();
    assert_eq!(first, run());

    let manifest: Value = serde_json::from_slice(&read(pyr.join("pyramid.json"))).unwrap();
    assert_eq!(manifest["levels"].as_array().unwrap().len(), 5);
    assert!(first.iter().any(|(p, _)| p.ends_with("frame_001.pfm")));
}

#[test]
fn relight_matches_service_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    ok(&["gen-fixture", "sphere", "--res", "32", "--out", path(&bundle), "--env-res", "32"]);
    let manifest = bundle.join("manifest.json");
    let out = dir.path().join("out");
    ok(&["relight", "--bundle", path(&manifest), "--roughness-set", "0.3", "--exposure-ev", "-0.5", "--out", path(&out)]);

    let rt = tokio::runtime::Runtime::new().unwrap();
    let served = rt.block_on(async {
        let app = relit_service::router(relit_service::AppState::new().unwrap());
        let created = send(&app, "POST", "/session", serde_json::json!({ "bundle_path": manifest })).await;
        let id = serde_json::from_slice::<Value>(&created).unwrap()["session_id"].as_str().unwrap().to_string();
        let edit = serde_json::json!({ "roughness_set": 0.3, "exposure_ev": -0.5 });
        send(&app, "POST", &format!("/session/{id}/edit"), edit).await;
        loop {
            let info: Value = serde_json::from_slice(&send(&app, "GET", &format!("/session/{id}"), Value::Null).await).unwrap();
            if info["status"]["state"] == "ready" {
                break;
            }
            tokio::time::sleep(std::time::Duration::from_millis(20)).await;
        }
        send(&app, "GET", &format!("/session/{id}/frame?index=0"), Value::Null).await
    });
    assert_eq!(served, read(out.join("frame_000.png")));
}

#[test]
fn exit_codes_follow_error_class() {
    let out = relit(&["relight", "--bogus-flag"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[usage]:"), "{err}");

    let out = relit(&["metrics", "--test", "/nonexistent/a.pfm", "--reference", "/nonexistent/b.pfm"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("error[input]:"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let out = relit(&["gen-fixture", "plane", "--res", "8", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3));

    let out = relit(&["--threads", "0", "gen-fixture", "plane", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(relit(&["--help"]).status.success());
}

#[test]
fn homography_recovers_shift_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = dir.path().join("bundle");
    ok(&["gen-fixture", "three-spheres", "--res", "64", "--out", path(&bundle), "--env-res", "32"]);
    let out = dir.path().join("out");
    ok(&["relight", "--bundle", path(&bundle.join("manifest.json")), "--out", path(&out)]);
    let rendered = out.join("frame_000.pfm");
    let shifted = dir.path().join("shifted.pfm");
    // the target is the render moved by a known translation
    let img = read_image(&rendered, PlaneEncoding::Linear).unwrap();
    let (target, _) = warp(&img, &Homography::translation(1.5, -1.0)).unwrap();
    write_image(&shifted, &target, ImageFormat::Pfm, PlaneEncoding::Linear).unwrap();
    let report = ok(&[
        "homography",
        "--rendered",
        path(&rendered),
        "--target",
        path(&shifted),
        "--out",
        path(&dir.path().join("fit.json")),
        "--warped",
        path(&dir.path().join("aligned.png")),
    ]);
    let h: Vec<f64> = report[1]["h"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!(!report[1]["diverged"].as_bool().unwrap());
    assert!((h[2] - 1.5).abs() < 0.1 && (h[5] + 1.0).abs() < 0.1, "{h:?}");
}
