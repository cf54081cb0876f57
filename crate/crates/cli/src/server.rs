//! HTTP classification endpoint.

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response as HttpResponse};
use axum::routing::post;
use axum::Router;

use stmtclass::pipeline::TextClassifier;

use crate::Response;

/// Largest accepted request body.
pub const MAX_BODY: usize = 64 * 1024;

pub fn router(classifier: Arc<TextClassifier>) -> Router {
    Router::new()
        .route("/", post(classify))
        .route("/classify", post(classify))
        .layer(DefaultBodyLimit::max(MAX_BODY))
        .with_state(classifier)
}

fn wants_text(headers: &HeaderMap) -> bool {
    let accept = headers
        .get(header::ACCEPT)
        .and_then(|v| v.to_str().ok())
        .unwrap_or("");
    accept.contains("text/plain") && !accept.contains("application/json")
}

async fn classify(
    State(classifier): State<Arc<TextClassifier>>,
    headers: HeaderMap,
    body: Bytes,
) -> HttpResponse {
    if body.iter().all(u8::is_ascii_whitespace) {
        return (StatusCode::BAD_REQUEST, "empty body\n").into_response();
    }
    let Ok(text) = std::str::from_utf8(&body) else {
        return (StatusCode::BAD_REQUEST, "body is not UTF-8\n").into_response();
    };
    match classifier.classify_text(text) {
        Ok(c) => {
            let response = Response::from(c);
            if wants_text(&headers) {
                (
                    [(header::CONTENT_TYPE, "text/plain; charset=utf-8")],
                    response.to_text(classifier.classes()),
                )
                    .into_response()
            } else {
                (
                    [(header::CONTENT_TYPE, "application/json")],
                    response.to_json(),
                )
                    .into_response()
            }
        }
        Err(e) => {
            log::error!("classification failed: {e}");
            (StatusCode::INTERNAL_SERVER_ERROR, "internal error\n").into_response()
        }
    }
}

/// Serves until the process is stopped.
pub fn serve(classifier: TextClassifier, bind: &str, port: u16) -> anyhow::Result<()> {
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind((bind, port)).await?;
        log::info!("listening on {}", listener.local_addr()?);
        println!("listening on {}", listener.local_addr()?);
        axum::serve(listener, router(Arc::new(classifier))).await?;
        Ok(())
    })
}
