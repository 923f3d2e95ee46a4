//! Bearer-token principals.

use axum::extract::{FromRequestParts, OptionalFromRequestParts};
use axum::http::header::AUTHORIZATION;
use axum::http::request::Parts;
use emag_core::engine::Session;
use emag_core::EngineError;

use crate::error::ApiError;
use crate::AppState;

/// Who is calling: a reader with a session, or the operator holding the
/// admin token.
#[derive(Debug, Clone)]
pub enum Principal {
    User(Session),
    Admin,
}

impl Principal {
    /// Readers may only touch their own resources; the operator may touch any.
    pub fn require_user(&self, user_id: &str) -> Result<(), ApiError> {
        match self {
            Principal::Admin => Ok(()),
            Principal::User(s) if s.user_id == user_id => Ok(()),
            Principal::User(s) => Err(EngineError::Forbidden(format!(
                "token belongs to {}, not {user_id}",
                s.user_id
            ))
            .into()),
        }
    }

    pub fn require_admin(&self) -> Result<(), ApiError> {
        match self {
            Principal::Admin => Ok(()),
            Principal::User(_) => Err(EngineError::Forbidden("operator token required".into()).into()),
        }
    }

    pub fn user_id(&self) -> Option<&str> {
        match self {
            Principal::User(s) => Some(&s.user_id),
            Principal::Admin => None,
        }
    }
}

fn bearer(parts: &Parts) -> Result<Option<&str>, ApiError> {
    let Some(value) = parts.headers.get(AUTHORIZATION) else {
        return Ok(None);
    };
    let value = value.to_str().map_err(|_| ApiError(EngineError::Unauthorized))?;
    match value.split_once(' ') {
        Some((scheme, token)) if scheme.eq_ignore_ascii_case("bearer") && !token.trim().is_empty() => {
            Ok(Some(token.trim()))
        }
        _ => Err(ApiError(EngineError::Unauthorized)),
    }
}

fn resolve(token: &str, state: &AppState) -> Result<Principal, ApiError> {
    if let Some(admin) = &state.admin_token {
        if constant_time_eq(admin.as_bytes(), token.as_bytes()) {
            return Ok(Principal::Admin);
        }
    }
    Ok(Principal::User(state.engine.authenticate(token)?))
}

fn constant_time_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

impl FromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Self, Self::Rejection> {
        let token = bearer(parts)?.ok_or(ApiError(EngineError::Unauthorized))?;
        resolve(token, state)
    }
}

/// No header means anonymous; a header that does not check out is still a 401.
impl OptionalFromRequestParts<AppState> for Principal {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &AppState) -> Result<Option<Self>, Self::Rejection> {
        match bearer(parts)? {
            Some(token) => resolve(token, state).map(Some),
            None => Ok(None),
        }
    }
}
