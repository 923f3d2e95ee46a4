//! HTTP/JSON service over the personalization engine.
//!
//! Readers authenticate with the bearer token returned at registration and
//! can only reach their own resources. Operator routes under `/admin`
//! accept the token configured as `ADMIN_TOKEN`; without one they are
//! closed.

use std::sync::Arc;

use axum::routing::{get, post, put};
use axum::Router;
use emag_core::Engine;

pub mod auth;
pub mod error;
mod routes;
pub mod views;

pub use error::{ApiError, ErrorBody};

/// Response schemas, one `$defs` entry per body shape.
pub const SCHEMA: &str = include_str!("../schemas/api.schema.json");

#[derive(Clone)]
pub struct AppState {
    pub engine: Arc<Engine>,
    pub admin_token: Option<String>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, admin_token: Option<String>) -> Self {
        Self { engine, admin_token }
    }
}

pub fn router(state: AppState) -> Router {
    use routes::*;
    Router::new()
        .route("/healthz", get(healthz))
        .route("/users", post(register))
        .route("/users/{id}", get(user_show))
        .route("/users/{id}/profile-import", post(profile_import))
        .route("/users/{id}/magazine", get(magazine))
        .route("/users/{id}/progress", get(progress))
        .route(
            "/users/{id}/interests",
            get(interests).put(put_interests).delete(clear_interests),
        )
        .route("/users/{id}/interests/visible", get(visible_interests))
        .route(
            "/users/{id}/interests/{keyword}",
            get(interest).put(put_interest).delete(delete_interest),
        )
        .route("/users/{id}/visibility", put(put_visibility))
        .route("/users/{id}/follow", post(follow))
        .route("/users/{id}/recommendations", get(recommendations))
        .route("/users/{id}/saved", get(saved).post(save))
        .route("/users/{id}/saved/{content_id}", axum::routing::delete(unsave))
        .route("/search", get(search))
        .route("/events", post(post_event))
        .route("/contents/{id}", get(content))
        .route("/contents/{id}/rating", post(rate))
        .route("/contents/{id}/share", post(share))
        .route("/admin/sources", get(sources).post(add_source))
        .route("/admin/sources/{id}/disable", post(disable_source))
        .route("/admin/ingest", post(ingest))
        .route("/admin/decay-flush", post(decay_flush))
        .route("/admin/rebuild", post(rebuild))
        .route("/admin/dump", get(dump))
        .route("/admin/load", post(load))
        .with_state(state)
}
