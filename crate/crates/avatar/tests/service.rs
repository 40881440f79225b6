mod common;

use std::sync::Arc;

use avatar_core::fixture::{self, SDF_RESOLUTION};
use avatar_core::geom::vec3;
use avatar_core::render::{Image, RenderSettings};
use avatar_studio::service::{router, AppState, DIAGNOSTICS_HEADER, REVISION_HEADER};
use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::{avatar, cli_render, fixture, scratch_dir, variant_manifest};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> (Arc<AppState>, Router) {
    let state = AppState::new(RenderSettings::default());
    let r = router(state.clone(), None);
    (state, r)
}

struct Reply {
    status: StatusCode,
    headers: axum::http::HeaderMap,
    body: Vec<u8>,
}

impl Reply {
    fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|_| panic!("not json: {}", String::from_utf8_lossy(&self.body)))
    }

    fn revision(&self) -> u64 {
        self.headers[REVISION_HEADER].to_str().unwrap().parse().unwrap()
    }
}

async fn send(r: &Router, req: Request<Body>) -> Reply {
    let res = r.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let headers = res.headers().clone();
    let body = res.into_body().collect().await.unwrap().to_bytes().to_vec();
    Reply { status, headers, body }
}

async fn post(r: &Router, path: &str, body: Value) -> Reply {
    let req = Request::post(path)
        .header(header::CONTENT_TYPE, "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    send(r, req).await
}

async fn frame(r: &Router, revision: u64) -> Reply {
    send(
        r,
        Request::get(format!("/frame.png?revision={revision}"))
            .body(Body::empty())
            .unwrap(),
    )
    .await
}

async fn load(r: &Router, manifest: &std::path::Path) -> Reply {
    post(r, "/avatar", json!({ "manifest_path": manifest })).await
}

#[tokio::test]
async fn endpoints_need_an_avatar() {
    let (state, r) = app();
    assert_eq!(frame(&r, 0).await.status, StatusCode::NOT_FOUND);
    assert_eq!(post(&r, "/state", json!({})).await.status, StatusCode::NOT_FOUND);
    assert_eq!(
        post(&r, "/torso-line", json!({"pixel": [128, 200]})).await.status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(
        send(&r, Request::get("/state").body(Body::empty()).unwrap())
            .await
            .status,
        StatusCode::NOT_FOUND
    );
    assert_eq!(state.revision(), 0);
}

#[tokio::test]
async fn load_reports_metadata_and_errors() {
    let (state, r) = app();
    let missing = load(&r, &scratch_dir("nothing").join("avatar.json")).await;
    assert_eq!(missing.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(missing.json()["error"].as_str().unwrap().contains("avatar.json"));
    let bad = variant_manifest("alpha_zero", |v| v["alpha"] = json!(0.0));
    assert_eq!(load(&r, &bad).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let malformed = post(&r, "/avatar", json!({"path": "x"})).await;
    assert!(malformed.status.is_client_error());
    assert_eq!(state.revision(), 0);

    let ok = load(&r, &fixture().manifest).await;
    assert_eq!(ok.status, StatusCode::OK, "{}", String::from_utf8_lossy(&ok.body));
    let v = ok.json();
    assert_eq!(v["ok"], true);
    assert_eq!(v["revision"], 1);
    assert_eq!(v["front_image_url"], "/frame.png?revision=1");
    assert_eq!(v["landmarks2d"].as_array().unwrap().len(), 68);
    assert_eq!(v["y_head"], fixture::Y_HEAD);
    assert_eq!(v["y_torso"], fixture::Y_TORSO);
    assert_eq!(v["pose_enabled"], true);
    assert!(v["driver_poses"].as_array().unwrap().contains(&json!("mouth_open")));
    assert_eq!(state.revision(), 1);
}

#[tokio::test]
async fn unset_torso_line_flags_pose_disabled() {
    let (_, r) = app();
    let m = variant_manifest("no_torso", |v| v["y_torso"] = Value::Null);
    let v = load(&r, &m).await.json();
    assert_eq!(v["y_torso"], Value::Null);
    assert_eq!(v["pose_enabled"], false);
    let yaw = post(&r, "/state", json!({"pose": {"head": {"euler": [0, 15, 0]}}})).await;
    assert_eq!(yaw.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(yaw.json()["error"].as_str().unwrap().contains("y_torso"));
    let smile = post(&r, "/state", json!({"drive": {"pose": "smile", "w": 0.5}})).await;
    assert_eq!(smile.status, StatusCode::OK);
}

#[tokio::test]
async fn front_frame_matches_cli_render() {
    let (_, r) = app();
    load(&r, &fixture().manifest).await;
    let a = frame(&r, 1).await;
    assert_eq!(a.status, StatusCode::OK);
    assert_eq!(a.headers[header::CONTENT_TYPE], "image/png");
    assert_eq!(a.revision(), 1);
    let b = frame(&r, 1).await;
    assert_eq!(a.body, b.body);
    let cli = cli_render(&fixture().manifest, &scratch_dir("parity").join("front.png"));
    assert_eq!(a.body, cli);
}

#[tokio::test]
async fn state_updates_bump_revision_and_change_frames() {
    let (state, r) = app();
    load(&r, &fixture().manifest).await;
    let front = frame(&r, 1).await;

    let half = post(&r, "/state", json!({"drive": {"pose": "mouth_open", "w": 0.5}})).await;
    assert_eq!(half.status, StatusCode::OK);
    assert_eq!(half.json()["revision"], 2);

    for bad in [
        json!({"drive": {"pose": "mouth_open", "w": 1.5}}),
        json!({"drive": {"pose": "frown", "w": 0.5}}),
        json!({"pose": {"head": {"s": [1, 0, 1]}}}),
        json!({"camera": {"azimuth": 0, "elevation": 90}}),
        json!({"unknown": 1}),
    ] {
        let res = post(&r, "/state", bad.clone()).await;
        assert!(res.status.is_client_error(), "{bad}: {}", res.status);
    }
    assert_eq!(state.revision(), 2);

    let mouth = frame(&r, 2).await;
    assert_eq!(mouth.revision(), 2);
    assert_ne!(mouth.body, front.body);

    let posed = post(
        &r,
        "/state",
        json!({"drive": {"pose": "mouth_open", "w": 0.5}, "pose": {"head": {"euler": [0, 15, 0]}}}),
    )
    .await;
    assert_eq!(posed.json()["revision"], 3);
    // a stale revision still gets the current state
    let posed_frame = frame(&r, 1).await;
    assert_eq!(posed_frame.revision(), 3);
    assert_ne!(posed_frame.body, mouth.body);
    let diag: Value = serde_json::from_str(posed_frame.headers[DIAGNOSTICS_HEADER].to_str().unwrap()).unwrap();
    assert!(diag["timings"]["pose_warp_ms"].as_f64().unwrap() > 0.0);
    assert!(diag["neck"]["tets"].as_u64().unwrap() > 0);

    let current = send(&r, Request::get("/state").body(Body::empty()).unwrap())
        .await
        .json();
    assert_eq!(current["revision"], 3);
    assert_eq!(current["frame"]["drive"]["w"], 0.5);
}

/// The service frame for a state equals the CLI's one-frame track of the same state.
#[tokio::test]
async fn posed_frame_matches_cli_animate() {
    let (_, r) = app();
    load(&r, &fixture().manifest).await;
    let state = json!({
        "drive": {"pose": "mouth_open", "w": 1.0},
        "pose": {"head": {"euler": [0.0, 15.0, 0.0]}},
        "camera": {"azimuth": 20.0, "elevation": 5.0}
    });
    assert_eq!(post(&r, "/state", state.clone()).await.status, StatusCode::OK);
    let served = frame(&r, 2).await;

    let dir = scratch_dir("animate_parity");
    let track = dir.join("track.json");
    std::fs::write(&track, json!({"frames": [state]}).to_string()).unwrap();
    let out = dir.join("frames");
    let o = avatar([
        "animate".as_ref(),
        fixture().manifest.as_os_str(),
        track.as_os_str(),
        "--out-dir".as_ref(),
        out.as_os_str(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(served.body, std::fs::read(out.join("frame_00000.png")).unwrap());
}

#[tokio::test]
async fn torso_line_click() {
    let (state, r) = app();
    let m = variant_manifest("click", |v| v["y_torso"] = Value::Null);
    load(&r, &m).await;
    let camera = fixture::front_camera();

    let background = post(&r, "/torso-line", json!({"pixel": [6.0, 6.0]})).await;
    assert_eq!(background.status, StatusCode::CONFLICT);
    assert!(background.json()["error"]
        .as_str()
        .unwrap()
        .contains("does not land near the avatar"));

    let forehead = camera.project(&vec3(0.0, 0.45, 0.3)).unwrap();
    let above = post(&r, "/torso-line", json!({"pixel": forehead})).await;
    assert_eq!(above.status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(above.json()["error"]
        .as_str()
        .unwrap()
        .contains("y_torso must be below y_head"));
    assert_eq!(state.revision(), 1);

    // shoulder of the torso ellipsoid; the analytic shape is the oracle
    let shoulder = camera.project(&vec3(0.45, -0.5, 0.0)).unwrap();
    let exact = avatar_core::sdf::ray_surface_intersection(
        &fixture::bust_shape(),
        &camera.ray(shoulder[0], shoulder[1]),
        10.0,
        1e-9,
    )
    .unwrap();
    let cell = 2.0 / (SDF_RESOLUTION - 1) as f64;
    let res = post(&r, "/torso-line", json!({"pixel": shoulder})).await;
    assert_eq!(res.status, StatusCode::OK);
    let v = res.json();
    let y = v["y_torso"].as_f64().unwrap();
    assert!((y - exact.point.y).abs() <= cell, "{y} vs {}", exact.point.y);
    assert_eq!(v["revision"], 2);
    assert_eq!(v["pose_enabled"], true);
    assert!((v["guide_v"].as_f64().unwrap() - shoulder[1]).abs() < 2.0);

    let yaw = post(&r, "/state", json!({"pose": {"head": {"euler": [0, 15, 0]}}})).await;
    assert_eq!(yaw.status, StatusCode::OK);
    assert_eq!(frame(&r, 3).await.status, StatusCode::OK);

    // a second click replaces the first
    let lower = camera.project(&vec3(0.3, -0.6, 0.0)).unwrap();
    let v2 = post(&r, "/torso-line", json!({"pixel": lower})).await.json();
    assert!(v2["y_torso"].as_f64().unwrap() < y);
    let current = send(&r, Request::get("/state").body(Body::empty()).unwrap())
        .await
        .json();
    assert_eq!(current["y_torso"], v2["y_torso"]);
    assert_eq!(current["frame"]["pose"]["head"]["euler"][1], 15.0);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_mutations_are_counted() {
    let (state, r) = app();
    load(&r, &fixture().manifest).await;
    let tasks: Vec<_> = (0..8)
        .map(|i| {
            let r = r.clone();
            tokio::spawn(
                async move { post(&r, "/state", json!({"drive": {"pose": "smile", "w": i as f64 / 8.0}})).await },
            )
        })
        .collect();
    let mut seen = Vec::new();
    for t in tasks {
        seen.push(t.await.unwrap().json()["revision"].as_u64().unwrap());
    }
    seen.sort_unstable();
    assert_eq!(seen, (2..10).collect::<Vec<u64>>());
    assert_eq!(state.revision(), 9);
}

#[tokio::test]
async fn cors_allows_only_local_origins() {
    let (_, r) = app();
    let preflight = |origin: &str| {
        Request::builder()
            .method(Method::OPTIONS)
            .uri("/state")
            .header(header::ORIGIN, origin)
            .header(header::ACCESS_CONTROL_REQUEST_METHOD, "POST")
            .body(Body::empty())
            .unwrap()
    };
    let local = send(&r, preflight("http://localhost:5173")).await;
    assert_eq!(
        local.headers[header::ACCESS_CONTROL_ALLOW_ORIGIN],
        "http://localhost:5173"
    );
    let remote = send(&r, preflight("http://example.com")).await;
    assert!(!remote.headers.contains_key(header::ACCESS_CONTROL_ALLOW_ORIGIN));
}

#[tokio::test]
async fn serves_ui_directory() {
    let dir = scratch_dir("ui");
    std::fs::write(dir.join("index.html"), "<html></html>").unwrap();
    let r = router(AppState::new(RenderSettings::default()), Some(&dir));
    let res = send(&r, Request::get("/ui/index.html").body(Body::empty()).unwrap()).await;
    assert_eq!(res.status, StatusCode::OK);
    assert_eq!(res.body, b"<html></html>");
}

#[test]
fn frame_png_decodes_at_camera_size() {
    let rt = tokio::runtime::Runtime::new().unwrap();
    let (_, r) = app();
    let body = rt.block_on(async {
        load(&r, &fixture().manifest).await;
        frame(&r, 1).await.body
    });
    let path = scratch_dir("decode").join("f.png");
    std::fs::write(&path, body).unwrap();
    let img = Image::read_png(&path).unwrap();
    assert_eq!([img.width, img.height], fixture::IMAGE_SIZE);
}
