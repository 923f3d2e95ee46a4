//! Request and response bodies that are not core types as they are.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use emag_core::ingest::{ContentItem, MediaKind};
use emag_core::interest::{FollowSelection, ListVisibility, Visibility};
use emag_core::magazine::{snippet, SavedEntry};
use serde::{Deserialize, Serialize};

/// What lists show of an item: everything but the full body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentSummary {
    pub id: String,
    pub title: String,
    pub canonical_link: String,
    pub snippet: String,
    pub publish_date: DateTime<Utc>,
    pub category: String,
    pub media_kind: MediaKind,
    pub keywords: Vec<String>,
    pub image_urls: Vec<String>,
    pub video_urls: Vec<String>,
    pub source_id: String,
}

impl From<&ContentItem> for ContentSummary {
    fn from(item: &ContentItem) -> Self {
        Self {
            id: item.id.clone(),
            title: item.title.clone(),
            canonical_link: item.canonical_link.clone(),
            snippet: snippet(&item.body_text),
            publish_date: item.publish_date,
            category: item.category.clone(),
            media_kind: item.media_kind,
            keywords: item.keywords.iter().cloned().collect(),
            image_urls: item.image_urls.clone(),
            video_urls: item.video_urls.clone(),
            source_id: item.source_id.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagazineSlotView {
    pub content_id: String,
    pub score: f64,
    pub matched_keywords: Vec<String>,
    pub content: ContentSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagazineView {
    pub user_id: String,
    pub page: usize,
    pub page_size: usize,
    pub total_pages: usize,
    pub total_items: usize,
    pub cold_start: bool,
    pub generated_at: DateTime<Utc>,
    pub slots: Vec<MagazineSlotView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchView {
    pub items: Vec<ContentSummary>,
    pub fetched: Option<emag_core::ingest::IngestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedView {
    pub content_id: String,
    pub saved_at: DateTime<Utc>,
    pub rating: Option<u8>,
    pub content: ContentSummary,
}

impl From<&SavedEntry> for SavedView {
    fn from(e: &SavedEntry) -> Self {
        Self {
            content_id: e.saved.content_id.clone(),
            saved_at: e.saved.saved_at,
            rating: e.saved.rating,
            content: ContentSummary::from(&e.content),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibleInterest {
    pub keyword: String,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisibilityView {
    pub user_id: String,
    pub list_visibility: ListVisibility,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Removed {
    pub removed: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rebuilt {
    pub version: u64,
}

// ---- request bodies ----

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub email: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct WeightRequest {
    pub weight: f64,
    #[serde(default)]
    pub visibility: Option<Visibility>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityRequest {
    #[serde(default)]
    pub list: Option<ListVisibility>,
    #[serde(default)]
    pub keywords: BTreeMap<String, Visibility>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FollowRequest {
    pub owner: String,
    pub keywords: FollowSelection,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SaveRequest {
    pub content_id: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RatingRequest {
    /// Wide on purpose: 0 or 9 is a 422, not a malformed body.
    pub value: i64,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ShareRequest {
    pub channel: emag_core::magazine::Channel,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SourceRequest {
    pub id: String,
    pub url: String,
    pub category: String,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct IngestRequest {
    #[serde(default)]
    pub source: Option<String>,
}

// ---- query strings ----

#[derive(Debug, Clone, Default, Deserialize)]
pub struct PageParams {
    pub page: Option<usize>,
    pub page_size: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct FilterParams {
    pub keyword: Option<String>,
    pub media: Option<MediaKind>,
    pub from: Option<DateTime<Utc>>,
    pub to: Option<DateTime<Utc>>,
    pub source: Option<String>,
    pub limit: Option<usize>,
    pub sort: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct ViewerParams {
    pub viewer: Option<String>,
}

#[derive(Debug, Clone, Default, Deserialize)]
pub struct RecommendParams {
    pub rebuild: Option<bool>,
}
