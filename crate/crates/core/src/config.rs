//! Tunable constants, loaded from one JSON record.
//!
//! The interest-model fields sit at the top level of the document
//! (`deltas`, `tier_high`, `tier_mid`, `decay_per_day`, `flush_days`,
//! `progress_k`); everything else is grouped under its own key. Every field
//! has a default, so `{}` is a valid configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::taxonomy::Taxonomy;

/// Weight change applied per behavior event kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EventDeltas {
    pub click: f64,
    pub save: f64,
    pub unsave: f64,
    pub mail: f64,
    pub share: f64,
    pub search: f64,
    /// A rating `r` moves weights by `(r - 3) * rate_step`.
    pub rate_step: f64,
}

impl Default for EventDeltas {
    fn default() -> Self {
        Self {
            click: 0.05,
            save: 0.15,
            unsave: -0.10,
            mail: 0.10,
            share: 0.20,
            search: 0.10,
            rate_step: 0.10,
        }
    }
}

/// Constants of the interest model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InterestConfig {
    pub deltas: EventDeltas,
    /// Weights at or above this are High tier.
    pub tier_high: f64,
    /// Weights at or above this (and below `tier_high`) are Mid tier.
    pub tier_mid: f64,
    /// Multiplicative decay per full day untouched.
    pub decay_per_day: f64,
    /// Low-tier entries untouched this many days are flushed.
    pub flush_days: i64,
    /// Event count scale of the progress curve `1 - e^(-n/k)`.
    pub progress_k: f64,
    /// Weight of a keyword matched once by a profile import.
    pub profile_base: f64,
    /// Extra weight per additional profile occurrence.
    pub profile_step: f64,
    pub profile_cap: f64,
    /// Weight given to keywords adopted from another user's list.
    pub follow_weight: f64,
}

impl Default for InterestConfig {
    fn default() -> Self {
        Self {
            deltas: EventDeltas::default(),
            tier_high: 0.6,
            tier_mid: 0.3,
            decay_per_day: 0.99,
            flush_days: 30,
            progress_k: 25.0,
            profile_base: 0.3,
            profile_step: 0.1,
            profile_cap: 0.9,
            follow_weight: 0.3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendParams {
    /// Truncation rank; `None` means `min(users, keywords, 8)`.
    pub k: Option<usize>,
    pub sim_threshold: f64,
    pub max_results: usize,
}

impl Default for RecommendParams {
    fn default() -> Self {
        Self {
            k: None,
            sim_threshold: 0.7,
            max_results: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MagazineConfig {
    pub page_size: usize,
    /// Scale of the freshness factor `e^(-age_hours / freshness_hours)`.
    pub freshness_hours: f64,
    /// How long a failed on-demand fetch suppresses refetching the keyword.
    pub negative_cache_hours: i64,
    pub search_limit: usize,
}

impl Default for MagazineConfig {
    fn default() -> Self {
        Self {
            page_size: 10,
            freshness_hours: 72.0,
            negative_cache_hours: 24,
            search_limit: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    /// Hosts whose anchor/iframe URLs count as videos. Subdomains match.
    pub video_hosts: Vec<String>,
    pub fetch_timeout_secs: u64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            video_hosts: vec!["youtube.com".into(), "vimeo.com".into()],
            fetch_timeout_secs: 15,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EngineConfig {
    #[serde(flatten)]
    pub interest: InterestConfig,
    pub recommender: RecommendParams,
    pub magazine: MagazineConfig,
    pub ingest: IngestConfig,
    pub taxonomy: Taxonomy,
    pub session_ttl_hours: i64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            interest: InterestConfig::default(),
            recommender: RecommendParams::default(),
            magazine: MagazineConfig::default(),
            ingest: IngestConfig::default(),
            taxonomy: Taxonomy::default(),
            session_ttl_hours: 24 * 30,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl EngineConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let i = &self.interest;
        if !(0.0 < i.tier_mid && i.tier_mid < i.tier_high && i.tier_high <= 1.0) {
            return Err(ConfigError::Invalid(
                "tiers must satisfy 0 < tier_mid < tier_high <= 1".into(),
            ));
        }
        if !(0.0 < i.decay_per_day && i.decay_per_day <= 1.0) {
            return Err(ConfigError::Invalid("decay_per_day must be in (0, 1]".into()));
        }
        if i.progress_k <= 0.0 {
            return Err(ConfigError::Invalid("progress_k must be positive".into()));
        }
        if self.magazine.page_size == 0 {
            return Err(ConfigError::Invalid("page_size must be at least 1".into()));
        }
        if let Some(0) = self.recommender.k {
            return Err(ConfigError::Invalid("recommender.k must be at least 1".into()));
        }
        self.taxonomy
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }
}
