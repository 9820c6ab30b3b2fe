#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

use crowdrule_core::dataset::{load_truth, Dataset, GroundTruth};
use crowdrule_core::orchestration::{Condition, ExperimentConfig};
use crowdrule_service::api::{router, AppState, Judging};
use crowdrule_service::store::{logical_clock, Store};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/demo")
}

pub fn dataset() -> Arc<Dataset> {
    static DS: OnceLock<Arc<Dataset>> = OnceLock::new();
    DS.get_or_init(|| Arc::new(Dataset::load(data_dir()).unwrap())).clone()
}

pub fn truth() -> &'static GroundTruth {
    static T: OnceLock<GroundTruth> = OnceLock::new();
    T.get_or_init(|| load_truth(data_dir().join("truth.jsonl")).unwrap())
}

pub fn open_store(log: &Path, conditions: &[Condition]) -> Store {
    let config = ExperimentConfig::new(11, conditions.to_vec());
    Store::open(log, config, dataset(), false, logical_clock()).unwrap().0
}

pub struct TestApp {
    pub router: Router,
    pub store: Arc<Store>,
    pub dir: tempfile::TempDir,
}

pub fn app(conditions: &[Condition]) -> TestApp {
    app_with_judging(conditions, None)
}

pub fn app_with_judging(conditions: &[Condition], judging: Option<Judging>) -> TestApp {
    let dir = tempfile::tempdir().unwrap();
    let store = Arc::new(open_store(&dir.path().join("events.jsonl"), conditions));
    let router = router(AppState {
        store: store.clone(),
        judging: judging.map(Arc::new),
    });
    TestApp { router, store, dir }
}

impl TestApp {
    pub fn log(&self) -> String {
        std::fs::read_to_string(self.dir.path().join("events.jsonl")).unwrap_or_default()
    }

    pub async fn raw(&self, method: Method, uri: &str, body: &str) -> (StatusCode, Value) {
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(Body::from(body.to_string()))
            .unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let v = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
        };
        (status, v)
    }

    pub async fn post(&self, uri: &str, body: Value) -> (StatusCode, Value) {
        self.raw(Method::POST, uri, &body.to_string()).await
    }

    pub async fn get(&self, uri: &str) -> (StatusCode, Value) {
        let req = Request::builder().uri(uri).body(Body::empty()).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
    }
}
