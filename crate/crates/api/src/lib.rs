//! HTTP/JSON facade over the engine.
//!
//! Every mutating route requires a bearer token whose role is allowed for
//! it; `admin` is allowed everywhere. Reads need no token. Mutations go
//! through one FIFO write lock around the engine, so requests touching the
//! same enrollment are applied in arrival order and the event log has a
//! single writer.

mod auth;
mod error;

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use http::{header, HeaderMap, HeaderValue, StatusCode};
use jtms_learn::curriculum::{Curriculum, CurriculumError, Mode};
use jtms_learn::engine::{AppError, Engine};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use tokio::sync::RwLock;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

pub use auth::{ApiToken, Role, TokenFileError, TokenTable};
pub use error::ApiError;

#[derive(Debug, Clone, Default)]
pub struct ApiConfig {
    pub tokens: TokenTable,
    /// Allowed browser origins; `*` allows any. Empty disables CORS.
    pub cors_origins: Vec<String>,
}

struct Ctx {
    engine: RwLock<Engine>,
    tokens: TokenTable,
}

type Shared = State<Arc<Ctx>>;
type ApiResult<T> = Result<T, ApiError>;

pub fn router(engine: Engine, config: ApiConfig) -> Router {
    let ctx = Arc::new(Ctx {
        engine: RwLock::new(engine),
        tokens: config.tokens,
    });
    let app = Router::new()
        .route("/healthz", get(healthz))
        .route("/students", post(create_student))
        .route("/curricula", post(register_curriculum))
        .route("/curricula/{id}", get(get_curriculum))
        .route("/enrollments", post(enroll))
        .route("/enrollments/{id}/map", get(map))
        .route("/enrollments/{id}/map.dot", get(map_dot))
        .route("/enrollments/{id}/attempts", post(attempt))
        .route("/enrollments/{id}/recommendations", get(recommendations))
        .route("/enrollments/{id}/revoke", post(revoke))
        .route("/enrollments/{id}/mode", post(set_mode))
        .fallback(|| async { ApiError::not_found("no such route") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "method_not_allowed",
                "method not allowed",
            )
        })
        .with_state(ctx);
    match cors_layer(&config.cors_origins) {
        Some(layer) => app.layer(layer),
        None => app,
    }
}

fn cors_layer(origins: &[String]) -> Option<CorsLayer> {
    if origins.is_empty() {
        return None;
    }
    let base = CorsLayer::new()
        .allow_methods([http::Method::GET, http::Method::POST])
        .allow_headers([header::AUTHORIZATION, header::CONTENT_TYPE]);
    if origins.iter().any(|o| o == "*") {
        return Some(base.allow_origin(Any));
    }
    let list: Vec<HeaderValue> = origins.iter().filter_map(|o| o.parse().ok()).collect();
    Some(base.allow_origin(AllowOrigin::list(list)))
}

/// Serves `app` until `shutdown` resolves, then drains in-flight requests.
/// Dropping the router afterwards releases the store lock.
pub async fn serve(
    listener: tokio::net::TcpListener,
    app: Router,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
}

fn authorize<'a>(ctx: &'a Ctx, headers: &HeaderMap, allowed: &[Role]) -> ApiResult<&'a ApiToken> {
    let token = ctx
        .tokens
        .resolve(headers)
        .ok_or_else(ApiError::unauthorized)?;
    if token.role == Role::Admin || allowed.contains(&token.role) {
        Ok(token)
    } else {
        Err(ApiError::forbidden(format!(
            "role {:?} may not perform this action",
            token.role
        )))
    }
}

fn parse<T: DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewStudent {
    student_id: String,
    display_name: Option<String>,
}

async fn create_student(
    State(ctx): Shared,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    authorize(&ctx, &headers, &[])?;
    let req: NewStudent = parse(&body)?;
    let name = req.display_name.unwrap_or_else(|| req.student_id.clone());
    let profile = ctx
        .engine
        .write()
        .await
        .create_student(&req.student_id, &name)?;
    Ok((StatusCode::CREATED, Json(profile)).into_response())
}

async fn register_curriculum(
    State(ctx): Shared,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    authorize(&ctx, &headers, &[Role::Instructor])?;
    let text =
        std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("body is not UTF-8"))?;
    let curriculum = Curriculum::from_json(text).map_err(|e| match e {
        CurriculumError::Malformed(e) => ApiError::new(
            StatusCode::BAD_REQUEST,
            "malformed_curriculum",
            format!("malformed curriculum document: {e}"),
        ),
        other => AppError::from(other).into(),
    })?;
    let id = curriculum.id.clone();
    let milestones = curriculum.milestones.len();
    ctx.engine.write().await.register_curriculum(curriculum)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "curriculum_id": id, "milestones": milestones })),
    )
        .into_response())
}

async fn get_curriculum(State(ctx): Shared, Path(id): Path<String>) -> ApiResult<Json<Curriculum>> {
    let engine = ctx.engine.read().await;
    Ok(Json(
        engine
            .state()
            .curriculum(&id)
            .map_err(ApiError::from)?
            .clone(),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewEnrollment {
    curriculum_id: String,
    mode: Option<Mode>,
    student_id: Option<String>,
}

async fn enroll(State(ctx): Shared, headers: HeaderMap, body: Bytes) -> ApiResult<Response> {
    let token = authorize(&ctx, &headers, &[Role::Student])?;
    let req: NewEnrollment = parse(&body)?;
    let student_id = match (token.role, req.student_id) {
        (Role::Student, Some(s)) if s != token.subject_id => {
            return Err(ApiError::forbidden("students may only enroll themselves"))
        }
        (Role::Student, _) => token.subject_id.clone(),
        (_, Some(s)) => s,
        (_, None) => return Err(ApiError::bad_request("student_id is required")),
    };
    let mut engine = ctx.engine.write().await;
    let mode = match req.mode {
        Some(m) => m,
        None => engine.state().curriculum(&req.curriculum_id)?.mode_default,
    };
    let summary = engine.enroll(&student_id, &req.curriculum_id, mode)?;
    Ok((StatusCode::CREATED, Json(summary)).into_response())
}

async fn map(State(ctx): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let engine = ctx.engine.read().await;
    Ok(Json(engine.state().map(&id, engine.policy())?).into_response())
}

async fn map_dot(State(ctx): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let engine = ctx.engine.read().await;
    let dot = engine.state().export_dot(&id)?;
    Ok((
        [(header::CONTENT_TYPE, "text/vnd.graphviz; charset=utf-8")],
        dot,
    )
        .into_response())
}

async fn recommendations(State(ctx): Shared, Path(id): Path<String>) -> ApiResult<Response> {
    let engine = ctx.engine.read().await;
    Ok(Json(engine.recommend(&id)?).into_response())
}

/// Students may only act on their own enrollments.
fn check_owner(engine: &Engine, token: &ApiToken, enrollment_id: &str) -> ApiResult<()> {
    let e = engine.state().enrollment(enrollment_id)?;
    if token.role == Role::Student && e.student_id != token.subject_id {
        return Err(ApiError::forbidden("enrollment belongs to another student"));
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewAttempt {
    milestone_id: String,
    assessment_id: String,
    score: f64,
}

async fn attempt(
    State(ctx): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    let token = authorize(&ctx, &headers, &[Role::Student])?;
    let req: NewAttempt = parse(&body)?;
    let mut engine = ctx.engine.write().await;
    check_owner(&engine, token, &id)?;
    let delta = engine.record_attempt(&id, &req.milestone_id, &req.assessment_id, req.score)?;
    Ok(Json(delta).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RevokeRequest {
    milestone_id: String,
    #[serde(default)]
    reason: String,
}

async fn revoke(
    State(ctx): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    authorize(&ctx, &headers, &[Role::Instructor])?;
    let req: RevokeRequest = parse(&body)?;
    let delta = ctx
        .engine
        .write()
        .await
        .revoke_pass(&id, &req.milestone_id, &req.reason)?;
    Ok(Json(delta).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModeRequest {
    mode: Mode,
}

async fn set_mode(
    State(ctx): Shared,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Response> {
    authorize(&ctx, &headers, &[Role::Instructor])?;
    let req: ModeRequest = parse(&body)?;
    let changes = ctx.engine.write().await.set_mode(&id, req.mode)?;
    Ok(Json(json!({ "enrollment_id": id, "mode": req.mode, "changes": changes })).into_response())
}
