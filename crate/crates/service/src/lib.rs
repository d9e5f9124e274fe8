//! Local HTTP service behind the interactive viewer.
//!
//! A session holds one decoded bundle, the current view state and the
//! prefiltered environment. Material edits and environment rotation are
//! lookup-time changes; only swapping the environment map rebuilds the
//! pyramid, in the background, with an atomic swap on completion. Frames are
//! rendered through [`relit_core::render`], the same path the command line
//! uses, so both produce identical PNG bytes for the same state.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Instant;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Deserializer, Serialize};

use relit_core::color::ToneMapMode;
use relit_core::imageio::{load_bundle, read_environment};
use relit_core::prefilter::{build_dfg_lut, build_pyramid, DFG_RESOLUTION, DFG_SAMPLES};
use relit_core::render::{display_png, preview_png, relight_view, PreviewPlane, ViewState};
use relit_core::{DfgLut, EnvironmentMap, EnvironmentPyramid, ErrorKind, MaterialGBuffer, PrefilterConfig, PyramidMode, ShadingOptions};

/// Largest accepted exposure offset, in stops.
pub const MAX_EXPOSURE_EV: f32 = 16.0;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }

    fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }
}

impl From<relit_core::Error> for ApiError {
    fn from(e: relit_core::Error) -> Self {
        let status = match e.kind() {
            ErrorKind::Input => StatusCode::UNPROCESSABLE_ENTITY,
            ErrorKind::Numeric => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BuildStatus {
    Building,
    Ready,
    Failed { error: String },
}

struct SessionState {
    revision: u64,
    view: ViewState,
    env_path: PathBuf,
    status: BuildStatus,
    /// Last completed pyramid; replaced whole when a rebuild finishes.
    pyramid: Option<Arc<EnvironmentPyramid>>,
    /// Identifies the rebuild whose result may be installed.
    generation: u64,
}

struct Session {
    frames: Arc<Vec<MaterialGBuffer>>,
    bundle_path: PathBuf,
    config: PrefilterConfig,
    state: Mutex<SessionState>,
}

impl Session {
    fn lock(&self) -> std::sync::MutexGuard<'_, SessionState> {
        self.state.lock().unwrap_or_else(|p| p.into_inner())
    }
}

/// Shared server state: sessions plus one DFG table used by all of them.
#[derive(Clone)]
pub struct AppState {
    sessions: Arc<RwLock<HashMap<u64, Arc<Session>>>>,
    next_id: Arc<AtomicU64>,
    lut: Arc<DfgLut>,
}

impl AppState {
    pub fn new() -> relit_core::Result<Self> {
        Ok(Self::with_lut(build_dfg_lut(DFG_RESOLUTION, DFG_SAMPLES)?))
    }

    pub fn with_lut(lut: DfgLut) -> Self {
        Self {
            sessions: Arc::default(),
            next_id: Arc::new(AtomicU64::new(1)),
            lut: Arc::new(lut),
        }
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Session>> {
        let sessions = self.sessions.read().unwrap_or_else(|p| p.into_inner());
        id.parse::<u64>()
            .ok()
            .and_then(|id| sessions.get(&id).cloned())
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("unknown session '{id}'")))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/session", post(create_session))
        .route("/session/{id}", get(session_info))
        .route("/session/{id}/frame", get(frame))
        .route("/session/{id}/edit", post(edit))
        .route("/session/{id}/env", post(swap_env))
        .route("/session/{id}/materials", get(materials))
        .with_state(state)
}

/// Serves on `addr` until the process is stopped.
pub async fn serve(addr: SocketAddr, state: AppState) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker failed: {e}")))
}

/// Starts a background build and installs its result if no newer build
/// has been started meanwhile.
fn spawn_build(session: Arc<Session>, env: EnvironmentMap, generation: u64) {
    tokio::task::spawn_blocking(move || {
        let started = Instant::now();
        let result = build_pyramid(&env, &session.config);
        let mut st = session.lock();
        if st.generation != generation {
            return;
        }
        match result {
            Ok(p) => {
                log::info!("pyramid ready in {:.0} ms", started.elapsed().as_secs_f64() * 1e3);
                st.pyramid = Some(Arc::new(p));
                st.status = BuildStatus::Ready;
            }
            Err(e) => st.status = BuildStatus::Failed { error: e.to_string() },
        }
        st.revision += 1;
    });
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    pub bundle_path: PathBuf,
    /// Defaults to the environment recorded in the bundle manifest.
    #[serde(default)]
    pub env_path: Option<PathBuf>,
    #[serde(default = "default_mode")]
    pub mode: PyramidMode,
    #[serde(default)]
    pub seed: u64,
}

fn default_mode() -> PyramidMode {
    PyramidMode::Relight
}

#[derive(Debug, Serialize)]
pub struct SessionInfo {
    pub session_id: String,
    pub revision: u64,
    pub status: BuildStatus,
    pub bundle_path: PathBuf,
    pub env_path: PathBuf,
    pub mode: PyramidMode,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub view: ViewState,
}

fn info(id: u64, s: &Session) -> SessionInfo {
    let st = s.lock();
    SessionInfo {
        session_id: id.to_string(),
        revision: st.revision,
        status: st.status.clone(),
        bundle_path: s.bundle_path.clone(),
        env_path: st.env_path.clone(),
        mode: s.config.mode,
        frames: s.frames.len(),
        width: s.frames[0].width(),
        height: s.frames[0].height(),
        view: st.view,
    }
}

async fn create_session(State(app): State<AppState>, Json(req): Json<CreateRequest>) -> ApiResult<impl IntoResponse> {
    let bundle_path = req.bundle_path.clone();
    let env_override = req.env_path.clone();
    let (frames, env_path, env) = blocking(move || -> relit_core::Result<_> {
        let bundle = load_bundle(&bundle_path)?;
        let env_path = env_override
            .or_else(|| bundle.env_path())
            .ok_or_else(|| relit_core::Error::InvalidArgument("no env_path given and the bundle names none".into()))?;
        let env = read_environment(&env_path)?;
        Ok((bundle.frames, env_path, env))
    })
    .await??;
    let config = PrefilterConfig::for_mode(req.mode).with_seed(req.seed);
    let session = Arc::new(Session {
        frames: Arc::new(frames),
        bundle_path: req.bundle_path,
        config,
        state: Mutex::new(SessionState {
            revision: 1,
            view: ViewState::default(),
            env_path,
            status: BuildStatus::Building,
            pyramid: None,
            generation: 1,
        }),
    });
    let id = app.next_id.fetch_add(1, Ordering::Relaxed);
    app.sessions
        .write()
        .unwrap_or_else(|p| p.into_inner())
        .insert(id, session.clone());
    spawn_build(session.clone(), env, 1);
    Ok((StatusCode::CREATED, Json(info(id, &session))))
}

async fn session_info(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SessionInfo>> {
    let s = app.session(&id)?;
    Ok(Json(info(id.parse().unwrap_or_default(), &s)))
}

#[derive(Debug, Deserialize)]
pub struct FrameQuery {
    #[serde(default)]
    pub index: usize,
    pub width: Option<usize>,
}

fn frame_at(s: &Session, index: usize) -> ApiResult<&MaterialGBuffer> {
    s.frames
        .get(index)
        .ok_or_else(|| ApiError::unprocessable(format!("frame index {index} out of range (bundle has {})", s.frames.len())))
}

async fn frame(State(app): State<AppState>, Path(id): Path<String>, Query(q): Query<FrameQuery>) -> ApiResult<Response> {
    let started = Instant::now();
    let s = app.session(&id)?;
    frame_at(&s, q.index)?;
    if q.width.is_some_and(|w| w == 0 || w > 8192) {
        return Err(ApiError::unprocessable("width must be in 1..=8192"));
    }
    let (revision, view, pyramid) = {
        let st = s.lock();
        match &st.pyramid {
            Some(p) => (st.revision, st.view, p.clone()),
            None => {
                return Err(ApiError::new(
                    StatusCode::CONFLICT,
                    format!("environment pyramid not ready ({:?})", st.status),
                ))
            }
        }
    };
    let lut = app.lut.clone();
    let png = blocking(move || -> relit_core::Result<Vec<u8>> {
        let hdr = relight_view(&s.frames[q.index], &view, &pyramid, &lut, &ShadingOptions::default())?;
        display_png(&hdr, view.tonemap_params(), q.width)
    })
    .await??;
    let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png".to_string()),
            (header::HeaderName::from_static("x-relit-revision"), revision.to_string()),
            (header::HeaderName::from_static("x-render-ms"), format!("{elapsed_ms:.2}")),
        ],
        png,
    )
        .into_response())
}

/// Distinguishes an absent field (`None`) from an explicit `null`
/// (`Some(None)`).
fn double_option<'de, T: Deserialize<'de>, D: Deserializer<'de>>(d: D) -> Result<Option<Option<T>>, D::Error> {
    Option::<T>::deserialize(d).map(Some)
}

/// Partial update of the view state. Absent fields are unchanged; `null`
/// clears a material override.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EditRequest {
    #[serde(default, deserialize_with = "double_option")]
    pub roughness_scale: Option<Option<f32>>,
    #[serde(default, deserialize_with = "double_option")]
    pub roughness_set: Option<Option<f32>>,
    #[serde(default, deserialize_with = "double_option")]
    pub metallic_set: Option<Option<f32>>,
    #[serde(default, deserialize_with = "double_option")]
    pub albedo_tint: Option<Option<[f32; 3]>>,
    pub env_rotation_deg: Option<f32>,
    pub exposure_ev: Option<f32>,
    pub tonemap: Option<ToneMapMode>,
}

impl EditRequest {
    fn apply(&self, view: &ViewState) -> ApiResult<ViewState> {
        let mut v = *view;
        if let Some(x) = self.roughness_scale {
            v.edit.roughness_scale = x;
        }
        if let Some(x) = self.roughness_set {
            v.edit.roughness_set = x;
        }
        if let Some(x) = self.metallic_set {
            v.edit.metallic_set = x;
        }
        if let Some(x) = self.albedo_tint {
            v.edit.albedo_tint = x;
        }
        if let Some(x) = self.env_rotation_deg {
            v.env_rotation_deg = x;
        }
        if let Some(x) = self.exposure_ev {
            v.exposure_ev = x;
        }
        if let Some(x) = self.tonemap {
            v.tonemap = x;
        }
        v.edit.validate()?;
        if !v.env_rotation_deg.is_finite() {
            return Err(ApiError::unprocessable("env_rotation_deg must be finite"));
        }
        if v.exposure_ev.is_nan() || v.exposure_ev.abs() > MAX_EXPOSURE_EV {
            return Err(ApiError::unprocessable(format!(
                "exposure_ev must be within ±{MAX_EXPOSURE_EV}"
            )));
        }
        Ok(v)
    }
}

#[derive(Debug, Serialize)]
pub struct RevisionResponse {
    pub revision: u64,
    pub status: BuildStatus,
    pub view: ViewState,
}

async fn edit(State(app): State<AppState>, Path(id): Path<String>, Json(req): Json<EditRequest>) -> ApiResult<Json<RevisionResponse>> {
    let s = app.session(&id)?;
    let mut st = s.lock();
    st.view = req.apply(&st.view)?;
    st.revision += 1;
    Ok(Json(RevisionResponse {
        revision: st.revision,
        status: st.status.clone(),
        view: st.view,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvRequest {
    pub env_path: Option<PathBuf>,
    pub rotation_deg: Option<f32>,
}

async fn swap_env(State(app): State<AppState>, Path(id): Path<String>, Json(req): Json<EnvRequest>) -> ApiResult<impl IntoResponse> {
    let s = app.session(&id)?;
    if req.env_path.is_none() && req.rotation_deg.is_none() {
        return Err(ApiError::unprocessable("give env_path, rotation_deg or both"));
    }
    if req.rotation_deg.is_some_and(|r| !r.is_finite()) {
        return Err(ApiError::unprocessable("rotation_deg must be finite"));
    }
    if req.env_path.is_some() && s.lock().status == BuildStatus::Building {
        return Err(ApiError::new(StatusCode::CONFLICT, "an environment rebuild is already in progress"));
    }
    let env = match req.env_path.clone() {
        Some(p) => Some(blocking(move || read_environment(p)).await??),
        None => None,
    };
    let mut st = s.lock();
    if let Some(r) = req.rotation_deg {
        st.view.env_rotation_deg = r;
    }
    let status = match (env, req.env_path) {
        (Some(env), Some(path)) => {
            if st.status == BuildStatus::Building {
                return Err(ApiError::new(StatusCode::CONFLICT, "an environment rebuild is already in progress"));
            }
            st.generation += 1;
            st.env_path = path;
            st.status = BuildStatus::Building;
            spawn_build(s.clone(), env, st.generation);
            StatusCode::ACCEPTED
        }
        _ => StatusCode::OK,
    };
    st.revision += 1;
    Ok((
        status,
        Json(RevisionResponse {
            revision: st.revision,
            status: st.status.clone(),
            view: st.view,
        }),
    ))
}

#[derive(Debug, Deserialize)]
pub struct MaterialsQuery {
    #[serde(default)]
    pub index: usize,
    pub plane: Option<String>,
}

async fn materials(State(app): State<AppState>, Path(id): Path<String>, Query(q): Query<MaterialsQuery>) -> ApiResult<Response> {
    let s = app.session(&id)?;
    frame_at(&s, q.index)?;
    let plane: PreviewPlane = q.plane.as_deref().unwrap_or("albedo").parse()?;
    let png = blocking(move || preview_png(&s.frames[q.index], plane)).await??;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
