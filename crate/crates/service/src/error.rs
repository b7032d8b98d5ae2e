use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use robotseg_core::Error as CoreError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0} not found")]
    NotFound(String),

    #[error("{0}")]
    Invalid(String),

    #[error("pixel ({x}, {y}) outside {width}x{height} image")]
    OutOfBounds {
        x: i64,
        y: i64,
        width: usize,
        height: usize,
    },

    #[error("{0}")]
    Unsupported(String),

    #[error(transparent)]
    Core(CoreError),

    #[error("storage: {0}")]
    Storage(String),
}

impl From<CoreError> for ServiceError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::OutOfBounds {
                x,
                y,
                width,
                height,
            } => ServiceError::OutOfBounds {
                x,
                y,
                width,
                height,
            },
            CoreError::UnsupportedPolicy(m) => ServiceError::Unsupported(m),
            e @ (CoreError::InvalidInput(_)
            | CoreError::Dimensions(_)
            | CoreError::MissingSeeds(_)) => ServiceError::Invalid(e.to_string()),
            e => ServiceError::Core(e),
        }
    }
}

impl From<std::io::Error> for ServiceError {
    fn from(e: std::io::Error) -> Self {
        ServiceError::Storage(e.to_string())
    }
}

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Invalid(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::OutOfBounds { .. } => StatusCode::BAD_REQUEST,
            ServiceError::Unsupported(_) => StatusCode::CONFLICT,
            ServiceError::Core(_) | ServiceError::Storage(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.to_string() });
        if let ServiceError::OutOfBounds {
            x,
            y,
            width,
            height,
        } = &self
        {
            body["bounds"] = json!({ "x": x, "y": y, "width": width, "height": height });
        }
        (self.status(), Json(body)).into_response()
    }
}
