//! Drives the HTTP router in-process.

use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use tokio::runtime::Runtime;
use tower::ServiceExt;

use secbelief::service::{router, AppState, Clock, ServiceConfig};
use secbelief::KnowledgeBase;

pub struct Api {
    rt: Runtime,
    router: Router,
    pub state: AppState,
}

/// Clock that advances by 10 ms on every read, starting at `start`.
pub fn ticking_clock(start: i64) -> Clock {
    let now = Arc::new(AtomicI64::new(start));
    Arc::new(move || now.fetch_add(10, Ordering::SeqCst))
}

impl Api {
    pub fn new(kb: KnowledgeBase) -> Self {
        Self::with_config(kb, ServiceConfig::default())
    }

    pub fn with_config(kb: KnowledgeBase, config: ServiceConfig) -> Self {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        let state = AppState::new(kb, config, ticking_clock(1_000));
        Api {
            rt,
            router: router(state.clone()),
            state,
        }
    }

    pub fn request(&self, method: &str, uri: &str, headers: &[(&str, &str)], body: Vec<u8>) -> (StatusCode, Vec<u8>) {
        let mut builder = Request::builder().method(method).uri(uri);
        for (k, v) in headers {
            builder = builder.header(*k, *v);
        }
        let request = builder.body(Body::from(body)).unwrap();
        self.rt.block_on(async {
            let response = self.router.clone().oneshot(request).await.unwrap();
            let status = response.status();
            let bytes = response.into_body().collect().await.unwrap().to_bytes();
            (status, bytes.to_vec())
        })
    }

    pub fn get(&self, uri: &str) -> (StatusCode, Vec<u8>) {
        self.request("GET", uri, &[], Vec::new())
    }

    pub fn post(&self, uri: &str, headers: &[(&str, &str)], body: impl Into<Vec<u8>>) -> (StatusCode, Vec<u8>) {
        self.request("POST", uri, headers, body.into())
    }

    pub fn get_json(&self, uri: &str) -> serde_json::Value {
        let (status, body) = self.get(uri);
        assert_eq!(status, StatusCode::OK, "{}", String::from_utf8_lossy(&body));
        serde_json::from_slice(&body).unwrap()
    }
}

pub fn json(body: &[u8]) -> serde_json::Value {
    serde_json::from_slice(body).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(body)))
}
