use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

use modalsim_core::decision::DecisionError;
use modalsim_core::policy::PolicyError;
use modalsim_core::stats::StatsError;
use modalsim_core::survey::ParseError;
use modalsim_core::synth::SynthError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{what} {id} not found")]
    NotFound { what: &'static str, id: String },
    #[error("population {0} is used by a live game")]
    InUse(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Unprocessable(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    error: &'a str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    row: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    column: Option<&'a str>,
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::NotFound { .. } => StatusCode::NOT_FOUND,
            ApiError::InUse(_) => StatusCode::CONFLICT,
            ApiError::Parse(_) | ApiError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ApiError::Unprocessable(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ApiError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            ApiError::NotFound { .. } => "NotFound",
            ApiError::InUse(_) => "InUse",
            ApiError::Parse(e) => e.kind(),
            ApiError::BadRequest(_) => "BadRequest",
            ApiError::Unprocessable(_) => "Unprocessable",
            ApiError::Internal(_) => "Internal",
        }
    }

    pub fn body(&self) -> serde_json::Value {
        let (row, column) = match self {
            ApiError::Parse(e) => (e.row(), e.column()),
            _ => (None, None),
        };
        serde_json::to_value(ErrorBody { error: self.kind(), message: self.to_string(), row, column })
            .expect("error body serializes")
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if matches!(self, ApiError::Internal(_)) {
            log::error!("{self}");
        }
        (self.status(), Json(self.body())).into_response()
    }
}

impl From<StatsError> for ApiError {
    fn from(e: StatsError) -> Self {
        ApiError::Unprocessable(e.to_string())
    }
}

impl From<DecisionError> for ApiError {
    fn from(e: DecisionError) -> Self {
        ApiError::Unprocessable(e.to_string())
    }
}

impl From<SynthError> for ApiError {
    fn from(e: SynthError) -> Self {
        ApiError::BadRequest(e.to_string())
    }
}

impl From<PolicyError> for ApiError {
    fn from(e: PolicyError) -> Self {
        match e {
            PolicyError::LengthMismatch { .. } | PolicyError::StateMismatch => ApiError::Internal(e.to_string()),
            _ => ApiError::Unprocessable(e.to_string()),
        }
    }
}
