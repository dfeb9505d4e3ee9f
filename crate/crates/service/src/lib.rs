//! Local HTTP service for the review loop: segment a scale photograph,
//! identify a mask against the gallery, and record the reviewer's decision
//! (confirm a match or enroll a new individual).
//!
//! Identify sessions are persisted under `<gallery>/sessions/` so a restart
//! never loses a pending review.

pub mod api;
mod error;
mod sessions;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::rejection::JsonRejection;
use axum::extract::{DefaultBodyLimit, FromRequest, Path, Request, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::de::DeserializeOwned;
use serde_json::json;
use spotid_core::evaluation::Calibration;
use spotid_core::gallery::{enroll, load_gallery, validate_id, Gallery, MANIFEST_FILE};
use spotid_core::imaging::{BinaryMask, RgbImage};
use spotid_core::matching::{identify, match_detailed, MatchParams};
use spotid_core::segmentation::segment_scale;

use api::*;
pub use error::{ApiError, ApiResult};
use sessions::SessionStore;

pub const DEFAULT_MAX_UPLOAD_BYTES: usize = 16 * 1024 * 1024;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub gallery_dir: PathBuf,
    pub match_params: MatchParams,
    /// Largest accepted request body.
    pub max_upload_bytes: usize,
}

impl ServiceConfig {
    pub fn new(gallery_dir: impl Into<PathBuf>) -> Self {
        Self {
            gallery_dir: gallery_dir.into(),
            match_params: MatchParams::default(),
            max_upload_bytes: DEFAULT_MAX_UPLOAD_BYTES,
        }
    }
}

#[derive(Debug, Clone)]
enum Job {
    Running,
    Failed { status: StatusCode, message: String },
}

struct Inner {
    config: ServiceConfig,
    gallery: RwLock<Arc<Gallery>>,
    /// Serializes decisions and enrollments within this process; the
    /// gallery's compare-and-swap guards against other processes.
    writer: tokio::sync::Mutex<()>,
    jobs: Mutex<HashMap<String, Job>>,
    sessions: SessionStore,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    /// Opens (or creates) the gallery directory.
    pub fn open(config: ServiceConfig) -> spotid_core::Result<Self> {
        let dir = &config.gallery_dir;
        std::fs::create_dir_all(dir).map_err(|e| spotid_core::Error::Io {
            path: dir.clone(),
            source: e,
        })?;
        let gallery = if dir.join(MANIFEST_FILE).exists() {
            load_gallery(dir)?
        } else {
            Gallery::default()
        };
        Ok(Self(Arc::new(Inner {
            sessions: SessionStore::new(dir.join("sessions")),
            config,
            gallery: RwLock::new(Arc::new(gallery)),
            writer: tokio::sync::Mutex::new(()),
            jobs: Mutex::new(HashMap::new()),
        })))
    }

    pub fn gallery(&self) -> Arc<Gallery> {
        self.0.gallery.read().expect("gallery lock").clone()
    }

    fn set_gallery(&self, g: Gallery) {
        *self.0.gallery.write().expect("gallery lock") = Arc::new(g);
    }

    fn calibration(&self) -> ApiResult<Option<Calibration>> {
        Ok(Calibration::load(&self.0.config.gallery_dir)?)
    }

    fn set_job(&self, id: &str, job: Option<Job>) {
        let mut jobs = self.0.jobs.lock().expect("jobs lock");
        match job {
            Some(j) => jobs.insert(id.to_string(), j),
            None => jobs.remove(id),
        };
    }

    fn job(&self, id: &str) -> Option<Job> {
        self.0.jobs.lock().expect("jobs lock").get(id).cloned()
    }
}

/// JSON body extractor whose rejections use the service's error shape and
/// state the upload limit on 413.
pub struct JsonBody<T>(pub T);

impl<T: DeserializeOwned> FromRequest<AppState> for JsonBody<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &AppState) -> Result<Self, Self::Rejection> {
        match Json::<T>::from_request(req, state).await {
            Ok(Json(v)) => Ok(Self(v)),
            Err(rej) => Err(rejection(rej, state.0.config.max_upload_bytes)),
        }
    }
}

fn rejection(rej: JsonRejection, limit: usize) -> ApiError {
    let status = rej.status();
    if status == StatusCode::PAYLOAD_TOO_LARGE {
        return ApiError::new(status, format!("request body exceeds the upload limit of {limit} bytes"));
    }
    ApiError::new(status, rej.body_text())
}

pub fn router(state: AppState) -> Router {
    let limit = state.0.config.max_upload_bytes;
    Router::new()
        .route("/segment", post(post_segment))
        .route("/identify", post(post_identify))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/confirm", post(post_confirm))
        .route("/gallery", get(get_gallery))
        .route("/gallery/individuals", post(post_individual))
        .layer(DefaultBodyLimit::max(limit))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(config: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::open(config).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

pub fn encode_b64(bytes: &[u8]) -> String {
    STANDARD.encode(bytes)
}

fn decode_b64(field: &str, text: &str) -> ApiResult<Vec<u8>> {
    STANDARD
        .decode(text.trim())
        .map_err(|e| ApiError::bad_request(format!("{field} is not valid base64: {e}")))
}

fn decode_mask(text: &str) -> ApiResult<BinaryMask> {
    Ok(BinaryMask::decode_png(&decode_b64("mask_png", text)?)?)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn post_segment(JsonBody(req): JsonBody<SegmentRequest>) -> ApiResult<Json<SegmentResponse>> {
    let bytes = decode_b64("image", &req.image)?;
    blocking(move || {
        let img = RgbImage::decode(&bytes)?;
        let r = segment_scale(&img, &req.params)?;
        Ok(Json(SegmentResponse {
            width: r.mask.width(),
            height: r.mask.height(),
            spots: spotid_core::labeling::label(&r.mask).count(),
            mask_png: encode_b64(&r.mask.encode_png()?),
            dark_thread_png: encode_b64(&r.dark_thread_mask.encode_png()?),
            bright_thread_png: encode_b64(&r.bright_thread_mask.encode_png()?),
            params_used: r.params_used,
        }))
    })
    .await
}

fn run_identify(state: &AppState, session_id: String, gallery: &Gallery, req: IdentifyRequest, mask: BinaryMask) -> ApiResult<IdentifySession> {
    let params = state.0.config.match_params;
    let query_id = req.query_id.clone().unwrap_or_else(|| session_id.clone());
    let mut candidates = identify(&mask, &query_id, gallery, req.method, &params, None)?;
    candidates.scores.truncate(req.top_n);
    let overlays = candidates
        .scores
        .iter()
        .map(|s| {
            let record = gallery
                .records()
                .iter()
                .find(|r| r.individual_id == s.individual_id && r.scale_id == s.scale_id)
                .expect("candidate comes from the gallery");
            let o = match_detailed(&mask, record, req.method, &params)?;
            Ok(CandidateOverlay {
                individual_id: s.individual_id.clone(),
                scale_id: s.scale_id.clone(),
                dissimilarity: s.dissimilarity,
                rotation_deg: o.transform.angle().to_degrees(),
                transform: o.transform,
                aligned_query: o.aligned_query,
                record_cloud: record.cloud.clone(),
                pairs: o.pairs,
                record_width: record.width,
                record_height: record.height,
            })
        })
        .collect::<ApiResult<Vec<_>>>()?;
    let advisory = state
        .calibration()?
        .and_then(|cal| Advisory::for_candidates(&cal, req.method, &candidates));
    let session = IdentifySession {
        session_id,
        status: SessionStatus::PendingReview,
        query_id,
        query_mask_png: req.mask_png,
        method: req.method,
        top_n: req.top_n,
        gallery_version: gallery.manifest_version,
        candidates,
        overlays,
        advisory,
        decided_individual: None,
        enrolled: None,
    };
    state.0.sessions.save(&session)?;
    Ok(session)
}

async fn post_identify(State(state): State<AppState>, JsonBody(req): JsonBody<IdentifyRequest>) -> ApiResult<Response> {
    if req.top_n == 0 {
        return Err(ApiError::bad_request("top_n must be at least 1"));
    }
    if let Some(q) = &req.query_id {
        validate_id(q)?;
    }
    let mask = decode_mask(&req.mask_png)?;
    let gallery = state.gallery();
    if gallery.is_empty() {
        return Err(ApiError::conflict("the gallery is empty; enroll individuals before identifying"));
    }
    let id = uuid::Uuid::new_v4().to_string();
    state.set_job(&id, Some(Job::Running));
    let wait = req.wait;
    let (st, sid) = (state.clone(), id.clone());
    let task = tokio::task::spawn_blocking(move || {
        let out = run_identify(&st, sid.clone(), &gallery, req, mask);
        match &out {
            Ok(_) => st.set_job(&sid, None),
            Err(e) => st.set_job(
                &sid,
                Some(Job::Failed {
                    status: e.status,
                    message: e.message.clone(),
                }),
            ),
        }
        out
    });
    if !wait {
        let pending = PendingSession {
            session_id: id,
            state: "running".into(),
        };
        return Ok((StatusCode::ACCEPTED, Json(pending)).into_response());
    }
    let session = task.await.map_err(|e| ApiError::internal(format!("worker failed: {e}")))??;
    Ok(Json(session).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    if let Some(s) = state.0.sessions.load(&id)? {
        return Ok(Json(s).into_response());
    }
    match state.job(&id) {
        Some(Job::Running) => {
            let pending = PendingSession {
                session_id: id,
                state: "running".into(),
            };
            Ok((StatusCode::ACCEPTED, Json(pending)).into_response())
        }
        Some(Job::Failed { status, message }) => Err(ApiError::new(status, format!("identification failed: {message}"))),
        None => Err(ApiError::not_found(format!("no session {id}"))),
    }
}

/// Enrolls under the writer lock; on a compare-and-swap conflict the
/// in-memory gallery is refreshed from disk before reporting.
async fn enroll_mask(
    state: &AppState,
    individual_id: String,
    scale_id: Option<String>,
    mask: BinaryMask,
    metadata: spotid_core::gallery::RecordMetadata,
) -> ApiResult<Gallery> {
    let gallery = state.gallery();
    let dir = state.0.config.gallery_dir.clone();
    let result = blocking(move || Ok(enroll(&dir, &gallery, &individual_id, scale_id.as_deref(), mask, metadata))).await?;
    match result {
        Ok(g) => {
            state.set_gallery(g.clone());
            Ok(g)
        }
        Err(e @ spotid_core::Error::Conflict(_)) => {
            let dir = state.0.config.gallery_dir.clone();
            if let Ok(fresh) = blocking(move || Ok(load_gallery(&dir)?)).await {
                state.set_gallery(fresh);
            }
            Err(e.into())
        }
        Err(e) => Err(e.into()),
    }
}

async fn post_confirm(
    State(state): State<AppState>,
    Path(id): Path<String>,
    JsonBody(req): JsonBody<ConfirmRequest>,
) -> ApiResult<Json<IdentifySession>> {
    let _guard = state.0.writer.lock().await;
    let Some(mut session) = state.0.sessions.load(&id)? else {
        return Err(match state.job(&id) {
            Some(Job::Running) => ApiError::conflict(format!("session {id} is still being matched")),
            _ => ApiError::not_found(format!("no session {id}")),
        });
    };
    if session.status != SessionStatus::PendingReview {
        let ctx = serde_json::to_value(&session).map_err(|e| ApiError::internal(e.to_string()))?;
        return Err(ApiError::conflict(format!("session {id} was already decided")).with_context(json!({ "session": ctx })));
    }
    let gallery = state.gallery();
    match req.decision {
        Decision::Match(ind) => {
            if !gallery.individuals().contains(&ind.as_str()) {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    format!("individual {ind} is not in the gallery"),
                ));
            }
            session.status = SessionStatus::Confirmed;
            session.decided_individual = Some(ind);
        }
        Decision::NewIndividual(ind) => {
            validate_id(&ind)?;
            if gallery.individuals().contains(&ind.as_str()) {
                return Err(ApiError::conflict(format!("individual {ind} already exists")));
            }
            let mask = decode_mask(&session.query_mask_png)?;
            let g = enroll_mask(&state, ind.clone(), None, mask, req.metadata).await?;
            let rec = g.records().iter().rev().find(|r| r.individual_id == ind).expect("just enrolled");
            session.enrolled = Some(rec.key());
            session.status = SessionStatus::EnrolledNew;
            session.decided_individual = Some(ind);
        }
    }
    state.0.sessions.save(&session)?;
    Ok(Json(session))
}

fn gallery_view(g: &Gallery, calibration: Option<Calibration>) -> GalleryView {
    let individuals = g
        .individuals()
        .into_iter()
        .map(|ind| IndividualView {
            individual_id: ind.to_string(),
            scales: g
                .records()
                .iter()
                .filter(|r| r.individual_id == ind)
                .map(RecordSummary::from)
                .collect(),
        })
        .collect();
    GalleryView {
        manifest_version: g.manifest_version,
        scale_count: g.len(),
        individuals,
        calibration,
    }
}

async fn get_gallery(State(state): State<AppState>) -> ApiResult<Json<GalleryView>> {
    Ok(Json(gallery_view(&state.gallery(), state.calibration()?)))
}

async fn post_individual(
    State(state): State<AppState>,
    JsonBody(req): JsonBody<EnrollRequest>,
) -> ApiResult<(StatusCode, Json<RecordSummary>)> {
    let mask = decode_mask(&req.mask_png)?;
    let _guard = state.0.writer.lock().await;
    let ind = req.individual_id.clone();
    let g = enroll_mask(&state, req.individual_id, req.scale_id, mask, req.metadata).await?;
    let rec = g.records().iter().rev().find(|r| r.individual_id == ind).expect("just enrolled");
    Ok((StatusCode::CREATED, Json(RecordSummary::from(rec))))
}
