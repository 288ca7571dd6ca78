use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use contour_refine::contour::sketch_to_mask;
use contour_refine::{rasterize, BinaryImage, Camera, CameraSpec, Error, Objective, RefinementConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{ApiError, FieldError};
use crate::session::{Session, Work};
use crate::store::SessionDir;
use crate::AppState;

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/v1/templates", get(list_templates))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/reconstruct", post(reconstruct))
        .route("/v1/sessions/{id}/edit", post(edit))
        .route("/v1/sessions/{id}/jobs/{job}", get(get_job))
        .route("/v1/sessions/{id}/jobs/{job}/cancel", post(cancel_job))
        .route("/v1/sessions/{id}/undo", post(undo))
        .route("/v1/sessions/{id}/mesh", get(mesh))
        .route("/v1/sessions/{id}/render", get(render))
        .with_state(state)
}

/// Parses a JSON body, naming the offending field on failure.
fn parse<T: DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let de = &mut serde_json::Deserializer::from_slice(body);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = match e.path().to_string() {
            p if p == "." => "body".to_string(),
            p => p,
        };
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ApiError::BadRequest(format!("malformed JSON: {inner}"))
        } else {
            ApiError::Unprocessable { fields: vec![FieldError { field, message: inner.to_string() }] }
        }
    })
}

fn camera_from(field: &str, spec: &CameraSpec) -> Result<Camera, ApiError> {
    let errs = spec.field_errors();
    if !errs.is_empty() {
        return Err(ApiError::Unprocessable {
            fields: errs
                .into_iter()
                .map(|(f, m)| FieldError { field: format!("{field}.{f}"), message: m })
                .collect(),
        });
    }
    spec.to_camera().map_err(|e| ApiError::field(field, e.to_string()))
}

fn decode_image(field: &str, data: &str, camera: &Camera) -> Result<BinaryImage, ApiError> {
    let b64 = match data.split_once(";base64,") {
        Some((prefix, rest)) if prefix.starts_with("data:") => rest,
        _ => data,
    };
    let bytes = base64::engine::general_purpose::STANDARD
        .decode(b64.trim())
        .map_err(|e| ApiError::field(field, format!("not base64: {e}")))?;
    let image = BinaryImage::read_any(&bytes).map_err(|e| ApiError::field(field, e.to_string()))?;
    if (image.width(), image.height()) != (camera.width(), camera.height()) {
        return Err(ApiError::field(
            field,
            format!(
                "image is {}x{}, camera renders {}x{}",
                image.width(),
                image.height(),
                camera.width(),
                camera.height()
            ),
        ));
    }
    if image.stroke_count() == 0 {
        return Err(ApiError::field(field, "contains no stroke pixels"));
    }
    Ok(image)
}

fn config_error(e: Error) -> ApiError {
    match e {
        Error::InvalidConfig(m) => {
            let field = m.split_whitespace().next().unwrap_or("config").to_string();
            ApiError::field(field, m)
        }
        other => ApiError::field("config", other.to_string()),
    }
}

fn find(state: &AppState, id: &str) -> Result<Arc<Session>, ApiError> {
    state.session(id).ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
}

#[derive(Serialize)]
struct TemplateInfo {
    id: String,
    modes: usize,
    vertices: usize,
}

async fn list_templates(State(state): State<AppState>) -> Json<Vec<TemplateInfo>> {
    Json(
        state
            .0
            .templates
            .iter()
            .map(|(id, t)| TemplateInfo { id: id.clone(), modes: t.k(), vertices: t.vertex_count() })
            .collect(),
    )
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    template: String,
    camera: CameraSpec,
}

async fn create_session(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateSession = parse(&body)?;
    let template = state
        .template(&req.template)
        .ok_or_else(|| ApiError::NotFound(format!("unknown template {:?}", req.template)))?;
    let camera = camera_from("camera", &req.camera)?;
    let id = uuid::Uuid::new_v4().simple().to_string();
    let dir = SessionDir::new(&state.0.sessions_root, &id);
    let session = Session::create(dir, id, req.template, template, camera)?;
    let session = state.insert(session);
    Ok((StatusCode::CREATED, Json(session.view())).into_response())
}

async fn get_session(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    Ok(Json(find(&state, &id)?.view()).into_response())
}

#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ObjectiveKind {
    #[default]
    Chamfer,
    Silhouette,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReconstructRequest {
    sketch: String,
    #[serde(default)]
    objective: ObjectiveKind,
    steps: Option<usize>,
    step_size: Option<f64>,
    early_stop_window: Option<usize>,
    #[serde(default = "default_starts")]
    starts: usize,
    #[serde(default)]
    seed: u64,
}

fn default_starts() -> usize {
    64
}

#[derive(Serialize)]
struct JobHandle {
    job: String,
    status_url: String,
}

fn accepted(session: &Session, job: String) -> Response {
    let status_url = format!("/v1/sessions/{}/jobs/{job}", session.id);
    (StatusCode::ACCEPTED, Json(JobHandle { job, status_url })).into_response()
}

fn overrides(steps: Option<usize>, step_size: Option<f64>, early_stop_window: Option<usize>) -> RefinementConfig {
    let mut c = RefinementConfig::default();
    if let Some(s) = steps {
        c.steps = s;
    }
    if let Some(s) = step_size {
        c.step_size = s;
    }
    if let Some(w) = early_stop_window {
        c.early_stop_window = w;
    }
    c
}

fn spawn(state: &AppState, session: Arc<Session>, job: String, work: Work, cancel: Arc<std::sync::atomic::AtomicBool>) {
    state.0.pool.spawn(move || session.run(&job, work, &cancel));
}

async fn reconstruct(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    let req: ReconstructRequest = parse(&body)?;
    if req.starts == 0 {
        return Err(ApiError::field("starts", "must be at least 1"));
    }
    let config = overrides(req.steps, req.step_size, req.early_stop_window);
    config.validate().map_err(config_error)?;
    let (_, camera) = session.current();
    let sketch = decode_image("sketch", &req.sketch, &camera)?;
    let objective = match req.objective {
        ObjectiveKind::Chamfer => Objective::chamfer_from_sketch(&sketch),
        ObjectiveKind::Silhouette => match sketch_to_mask(&sketch) {
            Ok(mask) => Objective::silhouette(mask),
            Err(Error::OpenContour(_)) => Objective::chamfer_from_sketch(&sketch),
            Err(e) => Err(e),
        },
    }
    .map_err(|e| ApiError::field("sketch", e.to_string()))?;

    let (job, work, cancel) = session.begin_job(|_, camera| {
        Ok(Work::Reconstruct {
            sketch: sketch.clone(),
            objective,
            camera: camera.clone(),
            config,
            starts: req.starts,
            seed: req.seed,
        })
    })?;
    session.save_image(&format!("{job}_sketch.png"), &sketch);
    spawn(&state, session.clone(), job.clone(), work, cancel);
    Ok(accepted(&session, job))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EditRequest {
    stroke: String,
    /// Camera the stroke was drawn in; the session camera when omitted.
    camera: Option<CameraSpec>,
    t: Option<f64>,
    lambda_mask: Option<f64>,
    lambda_normal: Option<f64>,
    steps: Option<usize>,
    step_size: Option<f64>,
    early_stop_window: Option<usize>,
}

async fn edit(State(state): State<AppState>, Path(id): Path<String>, body: Bytes) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    let req: EditRequest = parse(&body)?;
    let mut config = overrides(req.steps, req.step_size, req.early_stop_window);
    if let Some(t) = req.t {
        config.t = t;
    }
    if let Some(l) = req.lambda_mask {
        config.lambda_mask = l;
    }
    if let Some(l) = req.lambda_normal {
        config.lambda_normal = l;
    }
    config.validate().map_err(config_error)?;
    let camera = match &req.camera {
        Some(spec) => camera_from("camera", spec)?,
        None => session.current().1,
    };
    let stroke = decode_image("stroke", &req.stroke, &camera)?;
    let template = session.template.clone();

    let (job, work, cancel) = session.begin_job(|code0, _| {
        let objective = Objective::partial_edit(&template, &camera, code0, &stroke, &config)
            .map_err(|e| ApiError::field("stroke", e.to_string()))?;
        Ok(Work::Edit { objective, camera: camera.clone(), code0: code0.clone(), config })
    })?;
    session.save_image(&format!("{job}_stroke.png"), &stroke);
    spawn(&state, session.clone(), job.clone(), work, cancel);
    Ok(accepted(&session, job))
}

async fn get_job(State(state): State<AppState>, Path((id, job)): Path<(String, String)>) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    let view = session.job(&job).ok_or_else(|| ApiError::NotFound(format!("no job {job}")))?;
    Ok(Json(view).into_response())
}

async fn cancel_job(State(state): State<AppState>, Path((id, job)): Path<(String, String)>) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    Ok((StatusCode::ACCEPTED, Json(session.cancel(&job)?)).into_response())
}

async fn undo(State(state): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    Ok(Json(session.undo()?).into_response())
}

#[derive(Deserialize)]
struct MeshQuery {
    format: Option<String>,
}

async fn mesh(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<MeshQuery>) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    if let Some(f) = q.format.as_deref().filter(|f| *f != "obj") {
        return Err(ApiError::field("format", format!("unsupported format {f:?}; only obj")));
    }
    let (code, _) = session.current();
    let mesh = session.template.decode(&code).map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "model/obj")], mesh.to_obj_string()).into_response())
}

#[derive(Deserialize)]
struct RenderQuery {
    /// Degrees; the session camera's view when omitted.
    az: Option<f64>,
    el: Option<f64>,
    /// `normals` (default) or `mask`.
    kind: Option<String>,
}

async fn render(State(state): State<AppState>, Path(id): Path<String>, Query(q): Query<RenderQuery>) -> Result<Response, ApiError> {
    let session = find(&state, &id)?;
    let (code, camera) = session.current();
    let mut spec = camera.spec();
    spec.azimuth_deg = q.az.unwrap_or(spec.azimuth_deg);
    spec.elevation_deg = q.el.unwrap_or(spec.elevation_deg);
    let view = camera_from("view", &spec)?;
    let mesh = session.template.decode(&code).map_err(|e| ApiError::Internal(e.to_string()))?;
    let buffers = rasterize(&mesh, &view);
    let png = match q.kind.as_deref().unwrap_or("normals") {
        "normals" => buffers.normal_png(),
        "mask" => buffers.mask.to_png(),
        other => return Err(ApiError::field("kind", format!("unknown render kind {other:?}"))),
    }
    .map_err(|e| ApiError::Internal(e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}
