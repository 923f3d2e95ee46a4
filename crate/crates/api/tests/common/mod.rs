#![allow(dead_code)]

pub mod walk;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use chrono::{DateTime, TimeZone, Utc};
use emag_api::{router, AppState};
use emag_core::ingest::FeedSource;
use emag_core::{Engine, EngineConfig, FixedClock, Store};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub const ADMIN: &str = "operator-secret";
pub const SPORTS_FEED: &str = include_str!("../fixtures/seed-sports.xml");
pub const TECH_FEED: &str = include_str!("../fixtures/seed-tech.xml");

pub fn start() -> DateTime<Utc> {
    Utc.with_ymd_and_hms(2024, 5, 7, 9, 0, 0).unwrap()
}

pub struct TestApp {
    pub router: Router,
    pub engine: Arc<Engine>,
    pub clock: Arc<FixedClock>,
}

/// An engine over `store` as it is, with the clock at [`start`].
pub fn over(store: Store) -> TestApp {
    let clock = Arc::new(FixedClock::new(start()));
    let engine = Arc::new(Engine::with_clock(store, EngineConfig::default(), clock.clone()));
    let router = router(AppState::new(engine.clone(), Some(ADMIN.to_string())));
    TestApp { router, engine, clock }
}

/// An engine over `store` with both seed feeds registered and ingested.
pub fn seeded(store: Store) -> TestApp {
    let app = over(store);
    let taxonomy = app.engine.config().taxonomy.clone();
    for (id, category, feed) in [("sports", "sports", SPORTS_FEED), ("tech", "technology", TECH_FEED)] {
        let url = format!("http://127.0.0.1:9/{id}.xml");
        app.engine.add_source(FeedSource::new(id, &url, category, &taxonomy).unwrap()).unwrap();
        let report = app.engine.ingest_document(id, feed).unwrap();
        assert!(report.errors.is_empty(), "{report:?}");
    }
    app
}

impl TestApp {
    pub async fn call(&self, method: Method, path: &str, token: Option<&str>, body: Option<Value>) -> (StatusCode, Value) {
        let mut req = Request::builder().method(method).uri(path);
        if let Some(t) = token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let req = match body {
            Some(b) => req
                .header("content-type", "application/json")
                .body(Body::from(serde_json::to_vec(&b).unwrap())),
            None => req.body(Body::empty()),
        }
        .unwrap();
        self.send(req).await
    }

    pub async fn send(&self, req: Request<Body>) -> (StatusCode, Value) {
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        let value = if bytes.is_empty() {
            Value::Null
        } else {
            serde_json::from_slice(&bytes).unwrap_or_else(|e| panic!("non-JSON body ({e}): {:?}", String::from_utf8_lossy(&bytes)))
        };
        (status, value)
    }

    pub async fn register(&self, email: &str) -> (String, String) {
        let (status, body) = self.call(Method::POST, "/users", None, Some(serde_json::json!({ "email": email }))).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        (body["user_id"].as_str().unwrap().to_string(), body["token"].as_str().unwrap().to_string())
    }

    pub fn content_id(&self, link: &str) -> String {
        self.engine
            .store()
            .snapshot()
            .values_as::<emag_core::ingest::ContentItem>(emag_core::store::Namespace::Contents)
            .unwrap()
            .into_iter()
            .find(|c| c.canonical_link == link)
            .unwrap_or_else(|| panic!("no item for {link}"))
            .id
    }
}

/// Validators for the `$defs` of the published schema.
pub struct Schemas {
    root: Value,
}

impl Schemas {
    pub fn load() -> Self {
        Self {
            root: serde_json::from_str(emag_api::SCHEMA).unwrap(),
        }
    }

    pub fn routes(&self) -> Vec<(String, String, u16, Option<String>)> {
        self.root["x-routes"]
            .as_array()
            .unwrap()
            .iter()
            .map(|r| {
                (
                    r["method"].as_str().unwrap().to_string(),
                    r["path"].as_str().unwrap().to_string(),
                    r["status"].as_u64().unwrap() as u16,
                    r["schema"].as_str().map(String::from),
                )
            })
            .collect()
    }

    /// Errors of `instance` against `$defs/name`, empty when valid.
    pub fn check(&self, name: &str, instance: &Value) -> Vec<String> {
        let mut schema = self.root.clone();
        assert!(schema["$defs"].get(name).is_some(), "no schema {name}");
        schema["$ref"] = Value::String(format!("#/$defs/{name}"));
        let validator = jsonschema::options().should_validate_formats(true).build(&schema).unwrap();
        validator.iter_errors(instance).map(|e| format!("{} at {}", e, e.instance_path)).collect()
    }

    pub fn assert_valid(&self, name: &str, instance: &Value) {
        let errors = self.check(name, instance);
        assert!(errors.is_empty(), "{name}: {errors:?}\n{instance:#}");
    }
}
