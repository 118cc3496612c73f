//! REST endpoints.

use std::collections::HashMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use sensolab_core::dataset::{import_dataset, transpose_copy, Dataset, FileFormat, ImportOptions};
use sensolab_core::inddiff::{segments_to_dataset, SegmentSet};

use crate::request::{FitRequest, RunError};
use crate::session::{JobState, JobStatus, ModelRecord, SegmentRecord, Session, SessionError};

/// Request bodies up to this size are accepted (imports included).
pub const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    violations: Vec<String>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            violations: Vec::new(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} '{id}'"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if !self.violations.is_empty() {
            body["violations"] = json!(self.violations);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl From<RunError> for ApiError {
    fn from(e: RunError) -> Self {
        let status = match &e {
            RunError::UnknownDataset(_) => StatusCode::NOT_FOUND,
            e if e.is_numerical() => StatusCode::INTERNAL_SERVER_ERROR,
            _ => StatusCode::UNPROCESSABLE_ENTITY,
        };
        let violations = match &e {
            RunError::UnknownDataset(_) => Vec::new(),
            other => other.violations(),
        };
        Self {
            status,
            message: e.to_string(),
            violations,
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Clone)]
struct App {
    session: Arc<Session>,
    pool: Arc<Semaphore>,
}

/// Router over a session; fits run on at most `workers` threads at once.
pub fn router(session: Arc<Session>, workers: usize) -> Router {
    let app = App {
        session,
        pool: Arc::new(Semaphore::new(workers.max(1))),
    };
    Router::new()
        .route("/healthz", get(healthz))
        .route("/datasets", get(list_datasets).post(import))
        .route("/datasets/{id}", get(get_dataset).delete(delete_dataset))
        .route("/datasets/{id}/transpose", post(transpose))
        .route("/models", get(list_models).post(create_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/plots/{name}", get(get_plot))
        .route("/segments", get(list_segments).post(create_segments))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(app)
}

async fn healthz() -> Json<Value> {
    Json(json!({ "status": "ok" }))
}

async fn list_datasets(State(app): State<App>) -> Json<Value> {
    Json(json!(app.session.list_datasets()))
}

async fn get_dataset(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Dataset>> {
    let d = app.session.dataset(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    Ok(Json((*d).clone()))
}

async fn delete_dataset(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<StatusCode> {
    if app.session.remove_dataset(&id)? {
        Ok(StatusCode::NO_CONTENT)
    } else {
        Err(ApiError::not_found("dataset", &id))
    }
}

async fn transpose(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<(StatusCode, Json<Value>)> {
    let d = app.session.dataset(&id).ok_or_else(|| ApiError::not_found("dataset", &id))?;
    let listing = app.session.add_dataset(transpose_copy(&d))?;
    Ok((StatusCode::CREATED, Json(json!(listing))))
}

fn format_from_name(name: &str) -> Option<FileFormat> {
    let ext = Path::new(name).extension()?.to_str()?.to_ascii_lowercase();
    match ext.as_str() {
        "csv" | "txt" | "tsv" | "tab" | "dat" => Some(FileFormat::Delimited),
        "xlsx" | "xlsm" | "xlsb" | "xls" | "ods" => Some(FileFormat::Workbook),
        _ => None,
    }
}

fn format_from_mime(mime: &str) -> Option<FileFormat> {
    let base = mime.split(';').next().unwrap_or("").trim().to_ascii_lowercase();
    match base.as_str() {
        "text/csv" | "text/plain" | "text/tab-separated-values" => Some(FileFormat::Delimited),
        "application/vnd.openxmlformats-officedocument.spreadsheetml.sheet"
        | "application/vnd.ms-excel"
        | "application/vnd.oasis.opendocument.spreadsheet" => Some(FileFormat::Workbook),
        _ => None,
    }
}

fn bad_request(message: impl Into<String>) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, message)
}

fn parse_bool(key: &str, v: &str) -> ApiResult<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(bad_request(format!("option '{key}' expects true or false, got '{v}'"))),
    }
}

/// Import options from query parameters. Returns whether `format` was
/// given explicitly.
fn options_from_query(q: &HashMap<String, String>) -> ApiResult<(ImportOptions, bool, Option<String>)> {
    let mut o = ImportOptions::default();
    let mut explicit = false;
    let mut filename = None;
    for (k, v) in q {
        match k.as_str() {
            "format" => {
                o.format = v.parse().map_err(bad_request)?;
                explicit = true;
            }
            "delimiter" => o.delimiter = v.parse().map_err(bad_request)?,
            "decimal" | "decimal_mark" => o.decimal_mark = v.parse().map_err(bad_request)?,
            "encoding" => o.encoding = v.parse().map_err(bad_request)?,
            "row_names" | "has_row_names" => o.has_row_names = parse_bool(k, v)?,
            "col_names" | "has_col_names" => o.has_col_names = parse_bool(k, v)?,
            "name" | "dataset_name" => o.dataset_name = v.clone(),
            "role" => o.role = v.parse().map_err(bad_request)?,
            "filename" => filename = Some(v.clone()),
            other => return Err(bad_request(format!("unknown import option '{other}'"))),
        }
    }
    Ok((o, explicit, filename))
}

struct Upload {
    bytes: Bytes,
    filename: Option<String>,
    mime: Option<String>,
    options: Option<Value>,
}

async fn read_upload(headers: &HeaderMap, req: Request) -> ApiResult<Upload> {
    let content_type = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("")
        .to_string();
    if !content_type.to_ascii_lowercase().starts_with("multipart/form-data") {
        let bytes = Bytes::from_request(req, &())
            .await
            .map_err(|e| bad_request(e.body_text()))?;
        return Ok(Upload {
            bytes,
            filename: None,
            mime: Some(content_type),
            options: None,
        });
    }
    let mut mp = Multipart::from_request(req, &()).await.map_err(|e| bad_request(e.body_text()))?;
    let mut upload = Upload {
        bytes: Bytes::new(),
        filename: None,
        mime: None,
        options: None,
    };
    let mut have_file = false;
    while let Some(field) = mp.next_field().await.map_err(|e| bad_request(e.body_text()))? {
        let name = field.name().unwrap_or("").to_string();
        if name == "options" {
            let text = field.text().await.map_err(|e| bad_request(e.body_text()))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| bad_request(format!("invalid options: {e}")))?;
            upload.options = Some(v);
        } else if name == "file" || field.file_name().is_some() {
            upload.filename = field.file_name().map(str::to_string);
            upload.mime = field.content_type().map(str::to_string);
            upload.bytes = field.bytes().await.map_err(|e| bad_request(e.body_text()))?;
            have_file = true;
        }
    }
    if !have_file {
        return Err(bad_request("multipart body has no file field"));
    }
    Ok(upload)
}

async fn import(
    State(app): State<App>,
    Query(q): Query<HashMap<String, String>>,
    headers: HeaderMap,
    req: Request,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let (mut opts, mut explicit, query_name) = options_from_query(&q)?;
    let upload = read_upload(&headers, req).await?;
    if let Some(v) = &upload.options {
        explicit |= v.get("format").is_some();
        opts = serde_json::from_value(v.clone()).map_err(|e| bad_request(format!("invalid options: {e}")))?;
    }
    let filename = upload.filename.clone().or(query_name);
    if !explicit {
        let detected = filename
            .as_deref()
            .and_then(format_from_name)
            .or_else(|| upload.mime.as_deref().and_then(format_from_mime));
        opts.format = detected.ok_or_else(|| {
            let what = filename.clone().or(upload.mime.clone()).unwrap_or_else(|| "upload".into());
            ApiError::new(StatusCode::UNSUPPORTED_MEDIA_TYPE, format!("unknown file format for '{what}'"))
        })?;
    }
    if opts.dataset_name.is_empty() {
        if let Some(stem) = filename.as_deref().and_then(|f| Path::new(f).file_stem()).and_then(|s| s.to_str()) {
            opts.dataset_name = stem.to_string();
        }
    }
    let bytes = upload.bytes;
    let d = tokio::task::spawn_blocking(move || import_dataset(&bytes, &opts))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?
        .map_err(|e| bad_request(e.to_string()))?;
    let listing = app.session.add_dataset(d)?;
    Ok((StatusCode::CREATED, Json(json!(listing))))
}

fn failed_status(e: &RunError) -> JobStatus {
    JobStatus {
        state: JobState::Failed,
        error: Some(e.to_string()),
        numerical: e.is_numerical(),
        violations: match e {
            RunError::Invalid(_) | RunError::Analysis(sensolab_core::Error::Validation(_)) => e.violations(),
            _ => Vec::new(),
        },
    }
}

async fn run_job(app: App, id: String, request: FitRequest) {
    let _permit = app.pool.clone().acquire_owned().await.expect("semaphore is never closed");
    let running = JobStatus {
        state: JobState::Running,
        ..JobStatus::queued()
    };
    let report = |r: Result<bool, SessionError>| {
        if let Err(e) = r {
            eprintln!("job {id}: {e}");
        }
    };
    report(app.session.update_job(&id, running, None));
    let session = app.session.clone();
    let outcome =
        tokio::task::spawn_blocking(move || request.run(|d| session.dataset(d).map(|x| (*x).clone()))).await;
    let (status, result) = match outcome {
        Ok(Ok(bundle)) => (
            JobStatus {
                state: JobState::Done,
                ..JobStatus::queued()
            },
            Some(bundle),
        ),
        Ok(Err(e)) => (failed_status(&e), None),
        Err(e) => (
            JobStatus {
                state: JobState::Failed,
                error: Some(format!("fit aborted: {e}")),
                numerical: true,
                violations: Vec::new(),
            },
            None,
        ),
    };
    report(app.session.update_job(&id, status, result));
}

fn model_response(m: &ModelRecord) -> Response {
    let status = match m.status.state {
        JobState::Failed if m.status.numerical => StatusCode::INTERNAL_SERVER_ERROR,
        JobState::Failed => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::OK,
    };
    (status, Json(model_json(m))).into_response()
}

fn model_json(m: &ModelRecord) -> Value {
    let mut v = json!({
        "id": m.id,
        "method": m.request.method(),
        "request": m.request,
        "status": m.status,
    });
    if let Some(r) = &m.result {
        v["result"] = json!(r);
    }
    if let Some(e) = &m.status.error {
        v["error"] = json!(e);
    }
    v
}

async fn create_model(State(app): State<App>, body: Bytes) -> ApiResult<Response> {
    let request: FitRequest =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid model request: {e}")))?;
    let resolve = |id: &str| app.session.dataset(id).map(|d| (*d).clone());
    request.check(resolve)?;
    let consumer_labels = app
        .session
        .dataset(request.consumer_dataset())
        .map(|d| d.col_labels().to_vec())
        .unwrap_or_default();
    let id = uuid::Uuid::new_v4().simple().to_string();
    app.session.add_model(ModelRecord {
        id: id.clone(),
        request: request.clone(),
        status: JobStatus::queued(),
        consumer_labels,
        result: None,
    })?;
    let location = [(header::LOCATION, format!("/models/{id}"))];
    if request.is_long() {
        let m = app.session.model(&id).expect("just added");
        tokio::spawn(run_job(app.clone(), id, request));
        return Ok((StatusCode::ACCEPTED, location, Json(model_json(&m))).into_response());
    }
    run_job(app.clone(), id.clone(), request).await;
    let m = app.session.model(&id).expect("just added");
    if m.status.state == JobState::Failed {
        return Ok(model_response(&m));
    }
    Ok((StatusCode::CREATED, location, Json(model_json(&m))).into_response())
}

async fn list_models(State(app): State<App>) -> Json<Value> {
    let list: Vec<Value> = app.session.list_models().iter().map(model_json).collect();
    Json(json!(list))
}

async fn get_model(State(app): State<App>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    let m = app.session.model(&id).ok_or_else(|| ApiError::not_found("model", &id))?;
    Ok(model_response(&m))
}

#[derive(Debug, Deserialize)]
struct PlotQuery {
    #[serde(default)]
    result: usize,
    #[serde(default)]
    format: Option<String>,
}

async fn get_plot(
    State(app): State<App>,
    UrlPath((id, name)): UrlPath<(String, String)>,
    Query(q): Query<PlotQuery>,
) -> ApiResult<Response> {
    let m = app.session.model(&id).ok_or_else(|| ApiError::not_found("model", &id))?;
    let Some(bundle) = &m.result else {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("model '{id}' has no result ({:?})", m.status.state)));
    };
    let sub = bundle
        .results
        .get(q.result)
        .ok_or_else(|| ApiError::not_found("result index", &q.result.to_string()))?;
    let plot = sub.plot(&name).ok_or_else(|| ApiError::not_found("plot", &name))?;
    match q.format.as_deref() {
        None | Some("json") => Ok(Json(plot).into_response()),
        Some("svg") => Ok(([(header::CONTENT_TYPE, "image/svg+xml")], plot.to_svg()).into_response()),
        Some(other) => Err(bad_request(format!("unknown plot format '{other}'"))),
    }
}

#[derive(Debug, Deserialize)]
struct SegmentsRequest {
    model: String,
    name: String,
    /// Consumer labels of each segment, in segment order.
    segments: Vec<Vec<String>>,
}

#[derive(Debug, Serialize)]
struct SegmentListing {
    id: String,
    name: String,
    model: String,
    dataset: String,
    sizes: Vec<usize>,
    unassigned: usize,
}

fn segment_listing(r: &SegmentRecord) -> SegmentListing {
    SegmentListing {
        id: r.id.clone(),
        name: r.segments.name().to_string(),
        model: r.model.clone(),
        dataset: r.dataset.clone(),
        sizes: r.segments.sizes(),
        unassigned: r.segments.assignment().iter().filter(|a| a.is_none()).count(),
    }
}

async fn create_segments(State(app): State<App>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: SegmentsRequest =
        serde_json::from_slice(&body).map_err(|e| bad_request(format!("invalid segment request: {e}")))?;
    let m = app.session.model(&req.model).ok_or_else(|| ApiError::not_found("model", &req.model))?;
    let labels = m.consumer_labels;
    let mut assignment = vec![None; labels.len()];
    let mut problems = Vec::new();
    for (k, members) in req.segments.iter().enumerate() {
        for label in members {
            match labels.iter().position(|l| l == label) {
                None => problems.push(format!("unknown consumer '{label}'")),
                Some(i) if assignment[i].is_some() => problems.push(format!("consumer '{label}' is in more than one segment")),
                Some(i) => assignment[i] = Some(k),
            }
        }
    }
    if !problems.is_empty() {
        return Err(ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: problems.join("; "),
            violations: problems,
        });
    }
    let unprocessable = |e: sensolab_core::Error| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string());
    let set = SegmentSet::new(req.name, labels, assignment).map_err(unprocessable)?;
    let d = segments_to_dataset(&set).map_err(unprocessable)?;
    let listing = app.session.add_dataset(d)?;
    let rec = SegmentRecord {
        id: uuid::Uuid::new_v4().simple().to_string(),
        model: req.model,
        dataset: listing.id.clone(),
        segments: set,
    };
    app.session.add_segments(rec.clone())?;
    let mut body = json!(segment_listing(&rec));
    body["dataset_summary"] = json!(listing);
    Ok((StatusCode::CREATED, Json(body)))
}

async fn list_segments(State(app): State<App>) -> Json<Value> {
    let list: Vec<SegmentListing> = app.session.list_segments().iter().map(segment_listing).collect();
    Json(json!(list))
}
