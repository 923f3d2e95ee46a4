//! HTTP retrieval of feed documents.

use std::time::Duration;

use serde::Serialize;

use super::FeedSource;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FetchErrorKind {
    Disabled,
    Network { message: String },
    Status { code: u16 },
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, thiserror::Error)]
#[error("fetching source {source_id}: {kind:?} (retriable: {retriable})")]
pub struct FetchError {
    pub source_id: String,
    pub kind: FetchErrorKind,
    pub retriable: bool,
}

impl FetchError {
    fn new(source_id: &str, kind: FetchErrorKind) -> Self {
        let retriable = match &kind {
            FetchErrorKind::Disabled => false,
            FetchErrorKind::Network { .. } | FetchErrorKind::Timeout => true,
            FetchErrorKind::Status { code } => *code >= 500 || *code == 408 || *code == 429,
        };
        Self {
            source_id: source_id.to_string(),
            kind,
            retriable,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fetcher {
    client: reqwest::Client,
}

impl Fetcher {
    pub fn new(timeout: Duration) -> Self {
        let client = reqwest::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("emag/", env!("CARGO_PKG_VERSION")))
            .build()
            .expect("failed to build HTTP client");
        Self { client }
    }

    /// Returns the body of a 2xx response.
    pub async fn fetch_feed(&self, source: &FeedSource) -> Result<String, FetchError> {
        if !source.enabled {
            return Err(FetchError::new(&source.id, FetchErrorKind::Disabled));
        }
        let classify = |e: reqwest::Error| {
            let kind = if e.is_timeout() {
                FetchErrorKind::Timeout
            } else {
                FetchErrorKind::Network { message: e.to_string() }
            };
            FetchError::new(&source.id, kind)
        };
        let response = self.client.get(&source.url).send().await.map_err(classify)?;
        let status = response.status();
        if !status.is_success() {
            return Err(FetchError::new(
                &source.id,
                FetchErrorKind::Status { code: status.as_u16() },
            ));
        }
        response.text().await.map_err(classify)
    }
}

impl Default for Fetcher {
    fn default() -> Self {
        Self::new(Duration::from_secs(15))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn retriable_classification() {
        assert!(FetchError::new("s", FetchErrorKind::Timeout).retriable);
        assert!(FetchError::new("s", FetchErrorKind::Status { code: 503 }).retriable);
        assert!(FetchError::new("s", FetchErrorKind::Status { code: 429 }).retriable);
        assert!(!FetchError::new("s", FetchErrorKind::Status { code: 404 }).retriable);
        assert!(!FetchError::new("s", FetchErrorKind::Disabled).retriable);
    }
}
