//! Local single-session HTTP service for the studio UI.
//!
//! Mutations (`POST /avatar`, `/torso-line`, `/state`) are serialized and
//! each accepted one bumps the revision; `GET /frame.png` renders a snapshot
//! of the state current when the request arrives.

use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use avatar_core::pipeline::{
    load_avatar, pick_torso_line, render_track_frame, rig_avatar, AvatarAsset, Rig, TrackFrame,
};
use avatar_core::render::RenderSettings;
use avatar_core::Error;
use axum::extract::{Query, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub const DEFAULT_PORT: u16 = 7847;
pub const REVISION_HEADER: &str = "x-revision";
pub const DIAGNOSTICS_HEADER: &str = "x-frame-diagnostics";

#[derive(Clone)]
struct Session {
    asset: Arc<AvatarAsset>,
    rig: Arc<Rig>,
    frame: TrackFrame,
}

#[derive(Default)]
struct Current {
    session: Option<Session>,
    revision: u64,
}

pub struct AppState {
    current: RwLock<Current>,
    /// Held for the whole of each mutation so they apply in a total order.
    writer: tokio::sync::Mutex<()>,
    settings: RenderSettings,
}

impl AppState {
    pub fn new(settings: RenderSettings) -> Arc<Self> {
        Arc::new(Self {
            current: RwLock::new(Current::default()),
            writer: tokio::sync::Mutex::new(()),
            settings,
        })
    }

    pub fn revision(&self) -> u64 {
        self.current.read().unwrap().revision
    }

    fn snapshot(&self) -> (Option<Session>, u64) {
        let c = self.current.read().unwrap();
        (c.session.clone(), c.revision)
    }

    fn commit(&self, session: Session) -> u64 {
        let mut c = self.current.write().unwrap();
        c.session = Some(session);
        c.revision += 1;
        c.revision
    }

    /// Loads and rigs a manifest as the current session (counts as a mutation).
    pub async fn load(self: &Arc<Self>, manifest: &Path) -> Result<AvatarResponse, ApiError> {
        let _w = self.writer.lock().await;
        let path = manifest.to_path_buf();
        let (asset, rig) = blocking(move || {
            let asset = load_avatar(&path)?;
            let rig = rig_avatar(&asset)?;
            Ok((asset, rig))
        })
        .await?;
        let body = AvatarResponse::new(&asset, &rig, 0);
        let revision = self.commit(Session {
            asset: Arc::new(asset),
            rig: Arc::new(rig),
            frame: TrackFrame::default(),
        });
        Ok(AvatarResponse {
            revision,
            front_image_url: frame_url(revision),
            ..body
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn no_avatar() -> Self {
        Self::new(StatusCode::NOT_FOUND, "no avatar loaded")
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.status)
    }
}

impl std::error::Error for ApiError {}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::ClickMissed { .. } => StatusCode::CONFLICT,
            e if e.is_validation() => StatusCode::UNPROCESSABLE_ENTITY,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> avatar_core::Result<T> + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))?
        .map_err(ApiError::from)
}

fn frame_url(revision: u64) -> String {
    format!("/frame.png?revision={revision}")
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AvatarRequest {
    manifest_path: PathBuf,
}

#[derive(Debug, Clone, Serialize)]
pub struct AvatarResponse {
    pub ok: bool,
    pub revision: u64,
    pub front_image_url: String,
    pub image_size: [u32; 2],
    pub landmarks2d: Vec<[f64; 2]>,
    pub y_head: f64,
    pub y_torso: Option<f64>,
    pub pose_enabled: bool,
    pub driver_poses: Vec<String>,
    pub warnings: Vec<String>,
}

impl AvatarResponse {
    fn new(asset: &AvatarAsset, rig: &Rig, revision: u64) -> Self {
        Self {
            ok: true,
            revision,
            front_image_url: frame_url(revision),
            image_size: asset.front_camera.image_size,
            landmarks2d: asset.landmarks_2d.points.clone(),
            y_head: asset.y_head,
            y_torso: asset.y_torso,
            pose_enabled: rig.pose_enabled(),
            driver_poses: asset
                .drivers
                .as_ref()
                .map(|d| d.pose_names().map(String::from).collect())
                .unwrap_or_default(),
            warnings: asset.warnings.clone(),
        }
    }
}

async fn post_avatar(
    State(app): State<Arc<AppState>>,
    Json(req): Json<AvatarRequest>,
) -> Result<Json<AvatarResponse>, ApiError> {
    app.load(&req.manifest_path).await.map(Json)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct TorsoLineRequest {
    pixel: [f64; 2],
}

#[derive(Debug, Serialize)]
struct TorsoLineResponse {
    y_torso: f64,
    revision: u64,
    /// Image row of the torso line below the clicked point.
    guide_v: f64,
    point: [f64; 3],
    fallback: bool,
    pose_enabled: bool,
}

async fn post_torso_line(
    State(app): State<Arc<AppState>>,
    Json(req): Json<TorsoLineRequest>,
) -> Result<Json<TorsoLineResponse>, ApiError> {
    let _w = app.writer.lock().await;
    let session = app.snapshot().0.ok_or_else(ApiError::no_avatar)?;
    let (session, pick) = blocking(move || {
        let pick = pick_torso_line(&session.asset, req.pixel)?;
        let mut asset = (*session.asset).clone();
        asset.set_y_torso(Some(pick.y_torso))?;
        let mut rig = (*session.rig).clone();
        rig.set_torso_line(&asset, asset.y_torso)?;
        Ok((
            Session {
                asset: Arc::new(asset),
                rig: Arc::new(rig),
                frame: session.frame,
            },
            pick,
        ))
    })
    .await?;
    let guide_v = session
        .asset
        .front_camera
        .project(&pick.point.into())
        .map_or(req.pixel[1], |p| p[1]);
    let pose_enabled = session.rig.pose_enabled();
    let revision = app.commit(session);
    Ok(Json(TorsoLineResponse {
        y_torso: pick.y_torso,
        revision,
        guide_v,
        point: pick.point,
        fallback: pick.fallback,
        pose_enabled,
    }))
}

#[derive(Debug, Serialize)]
struct StateResponse {
    revision: u64,
}

/// Replaces drive, pose and camera in one step.
async fn post_state(
    State(app): State<Arc<AppState>>,
    Json(frame): Json<TrackFrame>,
) -> Result<Json<StateResponse>, ApiError> {
    let _w = app.writer.lock().await;
    let mut session = app.snapshot().0.ok_or_else(ApiError::no_avatar)?;
    frame.validate(&session.asset, session.rig.pose_enabled())?;
    session.frame = frame;
    Ok(Json(StateResponse {
        revision: app.commit(session),
    }))
}

#[derive(Debug, Serialize)]
struct CurrentState<'a> {
    revision: u64,
    frame: &'a TrackFrame,
    y_head: f64,
    y_torso: Option<f64>,
    pose_enabled: bool,
}

async fn get_state(State(app): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let (session, revision) = app.snapshot();
    let s = session.ok_or_else(ApiError::no_avatar)?;
    Ok(Json(CurrentState {
        revision,
        frame: &s.frame,
        y_head: s.asset.y_head,
        y_torso: s.asset.y_torso,
        pose_enabled: s.rig.pose_enabled(),
    })
    .into_response())
}

#[derive(Debug, Deserialize)]
struct FrameQuery {
    #[allow(dead_code)]
    revision: Option<u64>,
}

/// Always renders the current state; `X-Revision` names the revision drawn.
async fn get_frame(State(app): State<Arc<AppState>>, Query(_q): Query<FrameQuery>) -> Result<Response, ApiError> {
    let (session, revision) = app.snapshot();
    let s = session.ok_or_else(ApiError::no_avatar)?;
    let settings = app.settings.with_resolution(s.asset.front_camera.image_size);
    let (png, diagnostics) = blocking(move || {
        let out = render_track_frame(&s.rig, &s.asset, &s.frame, &settings)?;
        Ok((out.rendered.image.encode_png()?, out.diagnostics))
    })
    .await?;
    let diag = serde_json::to_string(&diagnostics).expect("serializable");
    let mut res = (StatusCode::OK, png).into_response();
    let h = res.headers_mut();
    h.insert(header::CONTENT_TYPE, HeaderValue::from_static("image/png"));
    h.insert(header::CACHE_CONTROL, HeaderValue::from_static("no-store"));
    h.insert(REVISION_HEADER, HeaderValue::from(revision));
    if let Ok(v) = HeaderValue::from_str(&diag) {
        h.insert(DIAGNOSTICS_HEADER, v);
    }
    Ok(res)
}

fn is_local_origin(origin: &HeaderValue) -> bool {
    let Ok(o) = origin.to_str() else {
        return false;
    };
    let host = o.split("://").nth(1).unwrap_or("");
    let host = host.rsplit_once(':').map_or(host, |(h, port)| {
        if port.chars().all(|c| c.is_ascii_digit()) {
            h
        } else {
            host
        }
    });
    matches!(host, "localhost" | "127.0.0.1" | "[::1]")
}

pub fn router(app: Arc<AppState>, ui_dir: Option<&Path>) -> Router {
    let cors = CorsLayer::new()
        .allow_origin(AllowOrigin::predicate(|o, _| is_local_origin(o)))
        .allow_methods([Method::GET, Method::POST])
        .allow_headers([header::CONTENT_TYPE])
        .expose_headers([
            header::HeaderName::from_static(REVISION_HEADER),
            header::HeaderName::from_static(DIAGNOSTICS_HEADER),
        ]);
    let mut r = Router::new()
        .route("/avatar", post(post_avatar))
        .route("/torso-line", post(post_torso_line))
        .route("/state", post(post_state).get(get_state))
        .route("/frame.png", get(get_frame));
    if let Some(dir) = ui_dir {
        r = r.nest_service("/ui", ServeDir::new(dir));
    }
    r.layer(cors).with_state(app)
}

/// Serves on 127.0.0.1 until ctrl-c.
pub async fn serve(app: Arc<AppState>, port: u16, ui_dir: Option<&Path>) -> std::io::Result<()> {
    let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(app, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
