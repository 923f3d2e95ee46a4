//! Scripted request sequences shared by the contract and replay tests.

use std::collections::BTreeMap;

use axum::http::{Method, StatusCode};
use serde_json::{json, Value};

use super::{Schemas, TestApp, ADMIN};

/// One exchange checked against the published table.
#[derive(Debug)]
pub struct Exchange {
    pub method: String,
    pub route: String,
    pub path: String,
    pub expected: u16,
    pub status: u16,
    pub schema: Option<String>,
    pub problems: Vec<String>,
}

impl Exchange {
    pub fn ok(&self) -> bool {
        self.problems.is_empty()
    }
}

pub struct Walk<'a> {
    app: &'a TestApp,
    schemas: Schemas,
    table: BTreeMap<(String, String), (u16, Option<String>)>,
    pub exchanges: Vec<Exchange>,
}

impl<'a> Walk<'a> {
    pub fn new(app: &'a TestApp) -> Self {
        let schemas = Schemas::load();
        let table = schemas
            .routes()
            .into_iter()
            .map(|(m, p, s, n)| ((m, p), (s, n)))
            .collect();
        Self {
            app,
            schemas,
            table,
            exchanges: Vec::new(),
        }
    }

    /// A request expected to succeed as the table says for `route`.
    pub async fn hit(&mut self, method: Method, route: &str, path: &str, token: Option<&str>, body: Option<Value>) -> Value {
        let (expected, schema) = self
            .table
            .get(&(method.to_string(), route.to_string()))
            .cloned()
            .unwrap_or_else(|| panic!("{method} {route} is not in the published table"));
        let (status, value) = self.app.call(method.clone(), path, token, body).await;
        let mut problems = Vec::new();
        if status.as_u16() != expected {
            problems.push(format!("status {status}, expected {expected}: {value}"));
        } else {
            match &schema {
                Some(name) => problems.extend(self.schemas.check(name, &value)),
                None if !value.is_null() => problems.push(format!("expected no body, got {value}")),
                None => {}
            }
        }
        self.exchanges.push(Exchange {
            method: method.to_string(),
            route: route.to_string(),
            path: path.to_string(),
            expected,
            status: status.as_u16(),
            schema,
            problems,
        });
        value
    }

    /// A request expected to fail with `expected`; the body must be an error body.
    pub async fn fail(&mut self, method: Method, route: &str, path: &str, token: Option<&str>, body: Option<Value>, expected: StatusCode) {
        let (status, value) = self.app.call(method.clone(), path, token, body).await;
        let mut problems = Vec::new();
        if status != expected {
            problems.push(format!("status {status}, expected {expected}: {value}"));
        }
        problems.extend(self.schemas.check("Error", &value));
        self.exchanges.push(Exchange {
            method: method.to_string(),
            route: route.to_string(),
            path: path.to_string(),
            expected: expected.as_u16(),
            status: status.as_u16(),
            schema: Some("Error".into()),
            problems,
        });
    }

    /// Published routes that no successful exchange covered.
    pub fn uncovered(&self) -> Vec<String> {
        self.table
            .iter()
            .filter(|((m, p), (s, _))| {
                !self
                    .exchanges
                    .iter()
                    .any(|e| &e.method == m && &e.route == p && e.expected == *s)
            })
            .map(|((m, p), _)| format!("{m} {p}"))
            .collect()
    }
}

/// Exercises every published route, plus the documented error cases,
/// against a seeded app.
pub async fn contract_walk(app: &TestApp) -> Walk<'_> {
    let mut w = Walk::new(app);
    let cricket = app.content_id("https://sports.example/cricket/academy");
    let golf = app.content_id("https://sports.example/golf/birdie");
    let admin = Some(ADMIN);

    w.hit(Method::GET, "/healthz", "/healthz", None, None).await;
    let reg = w.hit(Method::POST, "/users", "/users", None, Some(json!({"email": "alice@example.com"}))).await;
    let alice = reg["user_id"].as_str().unwrap_or_default().to_string();
    let ta = reg["token"].as_str().unwrap_or_default().to_string();
    let reg = w.hit(Method::POST, "/users", "/users", None, Some(json!({"email": "bob@example.com"}))).await;
    let bob = reg["user_id"].as_str().unwrap_or_default().to_string();
    let tb = reg["token"].as_str().unwrap_or_default().to_string();
    let (ta, tb) = (Some(ta.as_str()), Some(tb.as_str()));
    let u = |id: &str, rest: &str| format!("/users/{id}{rest}");

    // a fresh reader gets the cold-start signal
    let mag = w.hit(Method::GET, "/users/{id}/magazine", &u(&alice, "/magazine"), ta, None).await;
    if mag["cold_start"] != json!(true) {
        w.exchanges.last_mut().unwrap().problems.push("fresh user without cold_start".into());
    }

    w.hit(Method::POST, "/users/{id}/profile-import", &u(&alice, "/profile-import"), ta,
        Some(json!({"user_id": alice, "likes": ["Sachin Tendulkar", "cricket"], "posts": ["watching cricket and golf"], "professional": ["software"]}))).await;
    w.hit(Method::PUT, "/users/{id}/interests/{keyword}", &u(&alice, "/interests/cricket"), ta, Some(json!({"weight": 0.8}))).await;
    w.hit(Method::PUT, "/users/{id}/interests", &u(&alice, "/interests"), ta,
        Some(json!([{"keyword": "golf", "weight": 0.65}, {"keyword": "linux", "weight": 0.4, "visibility": "private"}]))).await;
    w.hit(Method::GET, "/users/{id}/interests", &u(&alice, "/interests"), ta, None).await;
    w.hit(Method::GET, "/users/{id}/interests/{keyword}", &u(&alice, "/interests/golf"), ta, None).await;
    w.hit(Method::GET, "/users/{id}/magazine", &u(&alice, "/magazine?page=1&page_size=2"), ta, None).await;
    w.hit(Method::GET, "/search", "/search?keyword=cricket&media=image", ta, None).await;
    w.hit(Method::GET, "/search", "/search?keyword=golf", None, None).await;
    w.hit(Method::GET, "/contents/{id}", &format!("/contents/{cricket}"), ta, None).await;
    w.hit(Method::POST, "/events", "/events", ta,
        Some(json!({"user_id": alice, "kind": "click", "target": golf, "at": "2024-05-07T09:00:00Z"}))).await;
    w.hit(Method::POST, "/users/{id}/saved", &u(&alice, "/saved"), ta, Some(json!({"content_id": cricket}))).await;
    w.hit(Method::POST, "/contents/{id}/rating", &format!("/contents/{cricket}/rating"), ta, Some(json!({"value": 5}))).await;
    w.hit(Method::GET, "/users/{id}/saved", &u(&alice, "/saved?sort=publish_date"), ta, None).await;
    w.hit(Method::POST, "/contents/{id}/share", &format!("/contents/{golf}/share"), ta, Some(json!({"channel": "mail"}))).await;
    w.hit(Method::DELETE, "/users/{id}/saved/{content_id}", &u(&alice, &format!("/saved/{cricket}")), ta, None).await;
    w.hit(Method::GET, "/users/{id}/progress", &u(&alice, "/progress"), ta, None).await;
    w.hit(Method::PUT, "/users/{id}/visibility", &u(&alice, "/visibility"), ta,
        Some(json!({"list": "partial", "keywords": {"golf": "private"}}))).await;
    w.hit(Method::GET, "/users/{id}/interests/visible", &format!("/users/{alice}/interests/visible?viewer={bob}"), tb, None).await;
    w.hit(Method::POST, "/users/{id}/follow", &u(&bob, "/follow"), tb, Some(json!({"owner": alice, "keywords": ["cricket"]}))).await;
    w.hit(Method::PUT, "/users/{id}/interests/{keyword}", &u(&bob, "/interests/tennis"), tb, Some(json!({"weight": 0.5}))).await;
    w.hit(Method::GET, "/users/{id}/recommendations", &u(&alice, "/recommendations"), ta, None).await;
    w.hit(Method::GET, "/users/{id}", &u(&alice, ""), ta, None).await;
    w.hit(Method::DELETE, "/users/{id}/interests/{keyword}", &u(&alice, "/interests/linux"), ta, None).await;
    w.hit(Method::DELETE, "/users/{id}/interests/{keyword}", &u(&alice, "/interests/never-there"), ta, None).await;
    w.hit(Method::DELETE, "/users/{id}/interests", &u(&bob, "/interests"), tb, None).await;

    w.hit(Method::GET, "/admin/sources", "/admin/sources", admin, None).await;
    w.hit(Method::POST, "/admin/sources", "/admin/sources", admin,
        Some(json!({"id": "music", "url": "http://127.0.0.1:9/music.xml", "category": "entertainment/music"}))).await;
    w.hit(Method::POST, "/admin/sources/{id}/disable", "/admin/sources/music/disable", admin, None).await;
    w.hit(Method::POST, "/admin/ingest", "/admin/ingest", admin, Some(json!({}))).await;
    w.hit(Method::POST, "/admin/decay-flush", "/admin/decay-flush", admin, None).await;
    w.hit(Method::POST, "/admin/rebuild", "/admin/rebuild", admin, None).await;
    let dump = w.hit(Method::GET, "/admin/dump", "/admin/dump", admin, None).await;
    w.hit(Method::POST, "/admin/load", "/admin/load", admin, Some(dump)).await;

    // documented failures
    w.fail(Method::POST, "/users", "/users", None, Some(json!({"email": "alice@example.com"})), StatusCode::CONFLICT).await;
    w.fail(Method::POST, "/users", "/users", None, Some(json!({"mail": "x"})), StatusCode::BAD_REQUEST).await;
    w.fail(Method::GET, "/users/{id}/magazine", &u(&alice, "/magazine"), None, None, StatusCode::UNAUTHORIZED).await;
    w.fail(Method::GET, "/users/{id}/magazine", &u(&alice, "/magazine"), Some("nope"), None, StatusCode::UNAUTHORIZED).await;
    w.fail(Method::GET, "/users/{id}/magazine", &u(&alice, "/magazine"), tb, None, StatusCode::FORBIDDEN).await;
    w.fail(Method::GET, "/users/{id}/magazine", &u(&alice, "/magazine?page=99"), ta, None, StatusCode::NOT_FOUND).await;
    w.fail(Method::POST, "/contents/{id}/rating", &format!("/contents/{golf}/rating"), ta, Some(json!({"value": 0})), StatusCode::UNPROCESSABLE_ENTITY).await;
    w.fail(Method::POST, "/contents/{id}/rating", "/contents/missing/rating", ta, Some(json!({"value": 3})), StatusCode::NOT_FOUND).await;
    w.fail(Method::PUT, "/users/{id}/interests/{keyword}", &u(&alice, "/interests/golf"), ta, Some(json!({"weight": 1.5})), StatusCode::UNPROCESSABLE_ENTITY).await;
    w.fail(Method::POST, "/events", "/events", ta,
        Some(json!({"user_id": alice, "kind": "click", "target": golf, "at": "2024-05-07T09:00:00Z"})), StatusCode::CONFLICT).await;
    w.fail(Method::POST, "/events", "/events", ta,
        Some(json!({"user_id": alice, "kind": "click", "target": golf, "at": "2024-05-01T09:00:00Z"})), StatusCode::UNPROCESSABLE_ENTITY).await;
    w.fail(Method::POST, "/events", "/events", ta,
        Some(json!({"user_id": alice, "kind": "click", "target": "missing", "at": "2024-05-08T09:00:00Z"})), StatusCode::NOT_FOUND).await;
    w.fail(Method::GET, "/search", "/search?media=video", None, None, StatusCode::BAD_REQUEST).await;
    w.fail(Method::GET, "/admin/dump", "/admin/dump", ta, None, StatusCode::FORBIDDEN).await;
    w
}

/// One request of a replayable trace. `{alice}`-style placeholders in the
/// path and body are user ids, `{c:LINK}` content ids; `as_user` names the
/// token to send.
#[derive(Debug, Clone)]
pub struct Step {
    pub method: Method,
    pub path: String,
    pub as_user: Option<&'static str>,
    pub body: Option<Value>,
}

fn step(method: Method, path: &str, as_user: Option<&'static str>, body: Option<Value>) -> Step {
    Step {
        method,
        path: path.to_string(),
        as_user,
        body,
    }
}

/// A reader session touching every mutating route.
pub fn reader_trace() -> Vec<Step> {
    let a = Some("alice");
    let b = Some("bob");
    let academy = "{c:https://sports.example/cricket/academy}";
    let birdie = "{c:https://sports.example/golf/birdie}";
    vec![
        step(Method::POST, "/users", None, Some(json!({"email": "alice@example.com"}))),
        step(Method::POST, "/users", None, Some(json!({"email": "bob@example.com"}))),
        step(Method::GET, "/users/{alice}/magazine", a, None),
        step(Method::POST, "/users/{alice}/profile-import", a,
            Some(json!({"user_id": "{alice}", "likes": ["sachin tendulkar", "cricket"], "posts": ["cricket again"], "professional": []}))),
        step(Method::POST, "/users/{bob}/profile-import", b,
            Some(json!({"user_id": "{bob}", "likes": ["cricket", "golf"], "posts": [], "professional": ["software"]}))),
        step(Method::PUT, "/users/{alice}/interests/cricket", a, Some(json!({"weight": 0.8}))),
        step(Method::PUT, "/users/{bob}/interests", b, Some(json!([{"keyword": "cricket", "weight": 0.75}, {"keyword": "sachin tendulkar", "weight": 0.7}]))),
        step(Method::GET, "/users/{alice}/magazine?page=1&page_size=3", a, None),
        step(Method::POST, "/events", a, Some(json!({"user_id": "{alice}", "kind": "click", "target": academy, "at": "2024-05-07T09:00:00Z"}))),
        step(Method::POST, "/events", a, Some(json!({"user_id": "{alice}", "kind": "search", "target": "golf", "at": "2024-05-07T09:01:00Z"}))),
        step(Method::POST, "/users/{alice}/saved", a, Some(json!({"content_id": academy}))),
        step(Method::POST, &format!("/contents/{academy}/rating"), a, Some(json!({"value": 4}))),
        step(Method::POST, &format!("/contents/{birdie}/share"), a, Some(json!({"channel": "twitter"}))),
        step(Method::GET, "/search?keyword=golf", a, None),
        step(Method::PUT, "/users/{alice}/visibility", a, Some(json!({"list": "partial", "keywords": {"cricket": "public"}}))),
        step(Method::POST, "/users/{bob}/follow", b, Some(json!({"owner": "{alice}", "keywords": "ALL"}))),
        step(Method::DELETE, &format!("/users/{{alice}}/saved/{birdie}"), a, None),
        step(Method::DELETE, "/users/{bob}/interests/golf", b, None),
        step(Method::GET, "/users/{bob}/recommendations", b, None),
        step(Method::GET, "/users/{alice}/recommendations", a, None),
        step(Method::GET, "/users/{alice}/saved", a, None),
        step(Method::GET, "/users/{alice}/progress", a, None),
        step(Method::GET, "/users/{alice}/interests/visible?viewer={bob}", b, None),
    ]
}

/// Runs a trace, remembering user ids and tokens across runs so it can be
/// replayed against the same app.
#[derive(Debug, Default)]
pub struct TraceRunner {
    pub users: BTreeMap<String, (String, String)>,
}

impl TraceRunner {
    fn expand(&self, app: &TestApp, s: &str) -> String {
        let mut out = s.to_string();
        for (alias, (id, _)) in &self.users {
            out = out.replace(&format!("{{{alias}}}"), id);
        }
        while let Some(start) = out.find("{c:") {
            let end = start + out[start..].find('}').expect("unterminated placeholder");
            let id = app.content_id(&out[start + 3..end]);
            out.replace_range(start..=end, &id);
        }
        out
    }

    pub async fn run(&mut self, app: &TestApp, trace: &[Step]) -> Vec<(u16, Value)> {
        let mut out = Vec::new();
        for s in trace {
            let path = self.expand(app, &s.path);
            let body = s
                .body
                .as_ref()
                .map(|b| serde_json::from_str(&self.expand(app, &b.to_string())).unwrap());
            let token = s.as_user.and_then(|u| self.users.get(u)).map(|(_, t)| t.clone());
            let (status, value) = app.call(s.method.clone(), &path, token.as_deref(), body.clone()).await;
            if path == "/users" && status == StatusCode::CREATED {
                let email = body.as_ref().and_then(|b| b["email"].as_str()).unwrap_or_default();
                let alias = email.split('@').next().unwrap_or_default().to_string();
                let id = value["user_id"].as_str().unwrap().to_string();
                let tok = value["token"].as_str().unwrap().to_string();
                self.users.insert(alias, (id, tok));
            }
            out.push((status.as_u16(), value));
        }
        out
    }
}
