//! Review API over a shared store.
//!
//! Reads take the store's read lock; decisions take the write lock, so they
//! are applied one at a time in arrival order.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

use super::{current_state, start_cycle, CycleState};
use crate::dataset::CycleSpec;
use crate::error::Error;
use crate::model::{
    Annotation, AnnotationFilter, AnnotationId, AnnotationStore, BBox, ClassId, ColumnId, Decision, ManuscriptId,
    Origin, ScribeId, Status,
};

/// Shared server state.
pub struct AppState {
    pub store: RwLock<AnnotationStore>,
    pub columns_dir: PathBuf,
    /// Root for background exports: `datasets_dir/{manuscript}/cycle-{k}`.
    pub datasets_dir: PathBuf,
    pub jobs: Mutex<Vec<JobStatus>>,
}

impl AppState {
    pub fn new(store: AnnotationStore, columns_dir: PathBuf, datasets_dir: PathBuf) -> Arc<Self> {
        Arc::new(Self {
            store: RwLock::new(store),
            columns_dir,
            datasets_dir,
            jobs: Mutex::new(Vec::new()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobStatus {
    pub id: usize,
    pub state: &'static str,
    pub cycle: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<CycleState>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
}

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        Self(
            StatusCode::BAD_REQUEST,
            ErrorBody {
                error: "bad_request",
                message: message.into(),
            },
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::UnknownId(_) | Error::UnknownColumn(_) => StatusCode::NOT_FOUND,
            Error::AlreadyDecided(_) | Error::DuplicateAccepted(_) => StatusCode::CONFLICT,
            Error::BoxOutOfBounds { .. } | Error::DegenerateBox => StatusCode::UNPROCESSABLE_ENTITY,
            Error::PreviousCycleOpen(_) | Error::InvalidPhase { .. } => StatusCode::CONFLICT,
            Error::InvalidId(_) | Error::InvalidParameter(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self(
            status,
            ErrorBody {
                error: e.code(),
                message: e.to_string(),
            },
        )
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(self.1)).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

fn parse_column(id: &str) -> ApiResult<ColumnId> {
    id.parse().map_err(|_| Error::UnknownColumn(id.to_string()).into())
}

#[derive(Debug, Deserialize)]
struct ColumnsQuery {
    status: Option<String>,
    #[serde(default = "first_page")]
    page: usize,
    #[serde(default = "default_per_page")]
    per_page: usize,
}

fn first_page() -> usize {
    1
}

fn default_per_page() -> usize {
    50
}

#[derive(Debug, Serialize)]
struct ColumnSummary {
    id: String,
    width: u32,
    height: u32,
    scribe: Option<ScribeId>,
    pending: usize,
    decided: usize,
}

#[derive(Debug, Serialize)]
struct ColumnPage {
    items: Vec<ColumnSummary>,
    page: usize,
    per_page: usize,
    total: usize,
}

async fn list_columns(State(app): State<Arc<AppState>>, Query(q): Query<ColumnsQuery>) -> ApiResult<Json<ColumnPage>> {
    let status: Option<Status> = match q.status.as_deref() {
        None | Some("") => None,
        Some(s) => Some(
            s.parse()
                .map_err(|_| ApiError::bad_request(format!("unknown status {s:?}")))?,
        ),
    };
    if q.page == 0 || q.per_page == 0 || q.per_page > 1000 {
        return Err(ApiError::bad_request("page must be >= 1 and per_page in 1..=1000"));
    }
    let store = app.store.read().expect("store lock");
    let matching: Vec<ColumnSummary> = store
        .columns()
        .filter_map(|c| {
            let anns: Vec<&Annotation> = store.annotations_on(&c.id).collect();
            if let Some(s) = status {
                if !anns.iter().any(|a| a.status == s) {
                    return None;
                }
            }
            let pending = anns.iter().filter(|a| a.status == Status::Pending).count();
            Some(ColumnSummary {
                id: c.id.to_string(),
                width: c.width,
                height: c.height,
                scribe: c.scribe().cloned(),
                pending,
                decided: anns.len() - pending,
            })
        })
        .collect();
    let total = matching.len();
    let items = matching
        .into_iter()
        .skip((q.page - 1) * q.per_page)
        .take(q.per_page)
        .collect();
    Ok(Json(ColumnPage {
        items,
        page: q.page,
        per_page: q.per_page,
        total,
    }))
}

async fn column_image(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let col = parse_column(&id)?;
    if app.store.read().expect("store lock").column(&col).is_none() {
        return Err(Error::UnknownColumn(id).into());
    }
    let path = app.columns_dir.join(format!("{col}.png"));
    let bytes = tokio::fs::read(&path)
        .await
        .map_err(|_| ApiError::from(Error::UnknownColumn(format!("{col} (no image)"))))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes).into_response())
}

/// One reviewable box; `x, y, w, h` is the effective (adjusted if any) box.
#[derive(Debug, Serialize)]
struct BoxView {
    id: AnnotationId,
    column: String,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
    class: ClassId,
    status: Status,
    origin: Origin,
    cycle: u32,
    confidence: Option<f64>,
}

impl From<&Annotation> for BoxView {
    fn from(a: &Annotation) -> Self {
        let b = a.effective_box();
        Self {
            id: a.id,
            column: a.column.to_string(),
            x: b.x,
            y: b.y,
            w: b.w,
            h: b.h,
            class: a.class,
            status: a.status,
            origin: a.origin,
            cycle: a.cycle,
            confidence: a.confidence,
        }
    }
}

#[derive(Debug, Serialize)]
struct ColumnBoxes {
    column: String,
    width: u32,
    height: u32,
    boxes: Vec<BoxView>,
}

async fn column_boxes(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<ColumnBoxes>> {
    let col = parse_column(&id)?;
    let store = app.store.read().expect("store lock");
    let info = store.column(&col).ok_or_else(|| Error::UnknownColumn(id.clone()))?;
    let boxes = store
        .query(&AnnotationFilter {
            column: Some(col.clone()),
            ..Default::default()
        })
        .into_iter()
        .map(BoxView::from)
        .collect();
    Ok(Json(ColumnBoxes {
        column: col.to_string(),
        width: info.width,
        height: info.height,
        boxes,
    }))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Action {
    Accept,
    Reject,
    Adjust,
}

#[derive(Debug, Deserialize)]
struct DecisionBody {
    action: Action,
    #[serde(rename = "box")]
    bbox: Option<RawBox>,
    class: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct RawBox {
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

async fn decide(
    State(app): State<Arc<AppState>>,
    UrlPath(id): UrlPath<u64>,
    Json(body): Json<DecisionBody>,
) -> ApiResult<Json<BoxView>> {
    let decision = match (body.action, body.bbox) {
        (Action::Accept, None) => Decision::Accept,
        (Action::Reject, None) => Decision::Reject,
        (Action::Adjust, Some(b)) => Decision::Adjust(BBox::new(b.x, b.y, b.w, b.h)?),
        (Action::Adjust, None) => return Err(ApiError::bad_request("adjust needs a box")),
        (_, Some(_)) => return Err(ApiError::bad_request("only adjust takes a box")),
    };
    let class = match body.class {
        None => None,
        Some(v) => {
            Some(ClassId::from_value(v).ok_or_else(|| ApiError::bad_request(format!("class {v} is not 0 or 1")))?)
        }
    };
    let mut store = app.store.write().expect("store lock");
    let a = store.decide_as(AnnotationId(id), decision, class)?;
    Ok(Json(BoxView::from(&a)))
}

#[derive(Debug, Serialize)]
struct Progress {
    cycle: Option<u32>,
    phase: Option<String>,
    pending_count: usize,
    decided: usize,
    total: usize,
}

async fn progress(State(app): State<Arc<AppState>>) -> Json<Progress> {
    let store = app.store.read().expect("store lock");
    let state = current_state(&store);
    let total = store.len();
    let pending_all = store.annotations().filter(|a| a.status == Status::Pending).count();
    Json(Progress {
        cycle: state.as_ref().map(|s| s.cycle),
        phase: state.as_ref().map(|s| s.phase.to_string()),
        pending_count: state.map(|s| s.pending_count).unwrap_or(pending_all),
        decided: total - pending_all,
        total,
    })
}

#[derive(Debug, Deserialize)]
struct ExportRequest {
    manuscript: String,
    cycle: u32,
    scribe: Option<String>,
}

async fn start_export(
    State(app): State<Arc<AppState>>,
    Json(req): Json<ExportRequest>,
) -> ApiResult<(StatusCode, Json<JobStatus>)> {
    let manuscript = ManuscriptId::new(req.manuscript)?;
    let scribe = req.scribe.map(ScribeId::new).transpose()?;
    let spec = CycleSpec::standard(req.cycle, manuscript.clone(), scribe);
    let job = {
        let mut jobs = app.jobs.lock().expect("jobs lock");
        let job = JobStatus {
            id: jobs.len() + 1,
            state: "running",
            cycle: req.cycle,
            result: None,
            error: None,
        };
        jobs.push(job.clone());
        job
    };
    let id = job.id;
    let worker = app.clone();
    tokio::task::spawn_blocking(move || {
        let out = worker
            .datasets_dir
            .join(manuscript.as_str())
            .join(format!("cycle-{}", spec.cycle));
        let res = {
            let mut store = worker.store.write().expect("store lock");
            start_cycle(&mut store, &spec, Some((&worker.columns_dir, &out)))
        };
        let mut jobs = worker.jobs.lock().expect("jobs lock");
        let slot = &mut jobs[id - 1];
        match res {
            Ok((state, _)) => {
                slot.state = "done";
                slot.result = Some(state);
            }
            Err(e) => {
                slot.state = "failed";
                slot.error = Some(ApiError::from(e).1);
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job_status(State(app): State<Arc<AppState>>, UrlPath(id): UrlPath<usize>) -> ApiResult<Json<JobStatus>> {
    let jobs = app.jobs.lock().expect("jobs lock");
    id.checked_sub(1)
        .and_then(|i| jobs.get(i))
        .cloned()
        .map(Json)
        .ok_or_else(|| {
            ApiError(
                StatusCode::NOT_FOUND,
                ErrorBody {
                    error: "unknown_job",
                    message: format!("no job {id}"),
                },
            )
        })
}

/// The review API, plus static files from `ui_dir` at `/` when given.
pub fn router(state: Arc<AppState>, ui_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/columns", get(list_columns))
        .route("/api/columns/{id}/image", get(column_image))
        .route("/api/columns/{id}/boxes", get(column_boxes))
        .route("/api/boxes/{id}/decision", post(decide))
        .route("/api/progress", get(progress))
        .route("/api/jobs/export", post(start_export))
        .route("/api/jobs/{id}", get(job_status))
        .with_state(state);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until the listener fails or ctrl-c arrives.
pub async fn serve(
    state: Arc<AppState>,
    ui_dir: Option<PathBuf>,
    listener: tokio::net::TcpListener,
) -> std::io::Result<()> {
    axum::serve(listener, router(state, ui_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
