use axum::response::{IntoResponse, Response};
use axum::Json;
use http::StatusCode;
use jtms_learn::curriculum::{CurriculumError, ValidationReport};
use jtms_learn::engine::AppError;
use jtms_learn::persistence::StoreError;
use jtms_learn::student::StudentError;
use log::error;
use serde_json::json;

/// Uniform error envelope: `{"error": {"code", "message"}}`, plus a
/// `validation_report` for rejected curricula.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    pub report: Option<ValidationReport>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            report: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn unauthorized() -> Self {
        Self::new(
            StatusCode::UNAUTHORIZED,
            "unauthorized",
            "missing or unknown bearer token",
        )
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(StatusCode::FORBIDDEN, "forbidden", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<AppError> for ApiError {
    fn from(e: AppError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        let (status, code) = match &e {
            AppError::UnknownStudent(_) => (S::NOT_FOUND, "unknown_student"),
            AppError::UnknownCurriculum(_) => (S::NOT_FOUND, "unknown_curriculum"),
            AppError::UnknownEnrollment(_) => (S::NOT_FOUND, "unknown_enrollment"),
            AppError::DuplicateStudent(_) => (S::CONFLICT, "duplicate_student"),
            AppError::DuplicateCurriculum(_) => (S::CONFLICT, "duplicate_curriculum"),
            AppError::DuplicateEnrollment { .. } | AppError::DuplicateEnrollmentId(_) => {
                (S::CONFLICT, "duplicate_enrollment")
            }
            AppError::InvalidCurriculum(report) => {
                return ApiError {
                    status: S::UNPROCESSABLE_ENTITY,
                    code: "invalid_curriculum",
                    message,
                    report: Some(report.clone()),
                }
            }
            AppError::Student(s) => match s {
                StudentError::UnknownMilestone(_) => (S::NOT_FOUND, "unknown_milestone"),
                StudentError::UnknownAssessment { .. } => (S::NOT_FOUND, "unknown_assessment"),
                StudentError::MilestoneLocked(_) => (S::CONFLICT, "milestone_locked"),
                StudentError::NotPassed(_) => (S::CONFLICT, "not_passed"),
                StudentError::BelowPassThreshold { .. } | StudentError::Score(_) => {
                    (S::BAD_REQUEST, "invalid_score")
                }
                StudentError::Curriculum(CurriculumError::Malformed(_)) => {
                    (S::BAD_REQUEST, "malformed_curriculum")
                }
                StudentError::Curriculum(_) => (S::UNPROCESSABLE_ENTITY, "invalid_curriculum"),
            },
            AppError::Adaptation(_) => (S::UNPROCESSABLE_ENTITY, "adaptation_error"),
            AppError::Store(StoreError::SchemaViolation(_)) => (S::BAD_REQUEST, "schema_violation"),
            AppError::Store(_) | AppError::Replay { .. } => {
                error!("store failure: {e}");
                (S::INTERNAL_SERVER_ERROR, "store_failure")
            }
        };
        ApiError::new(status, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": { "code": self.code, "message": self.message } });
        if let Some(report) = self.report {
            body["error"]["validation_report"] =
                serde_json::to_value(report).expect("report serializes");
        }
        (self.status, Json(body)).into_response()
    }
}
