//! Magazine assembly, search, saved items, ratings and share payloads.
//!
//! Everything here is a pure function over items and interests; the
//! engine feeds it from a store snapshot.

use std::cmp::Ordering;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::config::{InterestConfig, MagazineConfig};
use crate::ingest::{ContentItem, MediaKind};
use crate::interest::{EventKind, Tier, UserInterests};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub content_id: String,
    pub matched_keywords: Vec<String>,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagazinePage {
    pub page_number: usize,
    pub slots: Vec<Slot>,
    pub generated_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Magazine {
    pub pages: Vec<MagazinePage>,
    /// Set when nothing could be published: the user has no High-tier
    /// keyword or none of them matches a stored item.
    pub cold_start: bool,
    pub total_items: usize,
}

/// Hours between `published` and `now`, never negative.
fn age_hours(published: DateTime<Utc>, now: DateTime<Utc>) -> f64 {
    let ms = (now - published).num_milliseconds().max(0);
    ms as f64 / 3_600_000.0
}

/// High-tier keywords of `interests` that `item` carries, sorted.
pub fn matched_keywords(item: &ContentItem, interests: &UserInterests, tiers: &InterestConfig) -> Vec<String> {
    item.keywords
        .iter()
        .filter(|k| interests.get(*k).is_some_and(|e| e.tier(tiers) == Tier::High))
        .cloned()
        .collect()
}

/// Sum of matched High-tier weights times `e^(-age_hours / freshness_hours)`.
pub fn score_item(
    item: &ContentItem,
    interests: &UserInterests,
    now: DateTime<Utc>,
    tiers: &InterestConfig,
    cfg: &MagazineConfig,
) -> f64 {
    let relevance: f64 = matched_keywords(item, interests, tiers)
        .iter()
        .map(|k| interests[k].weight)
        .sum();
    if relevance == 0.0 {
        return 0.0;
    }
    relevance * (-age_hours(item.publish_date, now) / cfg.freshness_hours).exp()
}

/// Magazine order: score, then newer first, then id.
pub fn slot_order(a: (f64, DateTime<Utc>, &str), b: (f64, DateTime<Utc>, &str)) -> Ordering {
    b.0.total_cmp(&a.0)
        .then_with(|| b.1.cmp(&a.1))
        .then_with(|| a.2.cmp(b.2))
}

/// Scores every item and chunks the positive ones into pages of
/// `page_size` (values below 1 are treated as 1).
pub fn build_magazine<'a>(
    items: impl IntoIterator<Item = &'a ContentItem>,
    interests: &UserInterests,
    now: DateTime<Utc>,
    page_size: usize,
    tiers: &InterestConfig,
    cfg: &MagazineConfig,
) -> Magazine {
    let has_high = interests.values().any(|e| e.tier(tiers) == Tier::High);
    let mut scored: Vec<(f64, &ContentItem, Vec<String>)> = if has_high {
        items
            .into_iter()
            .filter_map(|item| {
                let score = score_item(item, interests, now, tiers, cfg);
                (score > 0.0).then(|| (score, item, matched_keywords(item, interests, tiers)))
            })
            .collect()
    } else {
        Vec::new()
    };
    scored.sort_by(|a, b| {
        slot_order(
            (a.0, a.1.publish_date, a.1.id.as_str()),
            (b.0, b.1.publish_date, b.1.id.as_str()),
        )
    });

    let total_items = scored.len();
    let slots: Vec<Slot> = scored
        .into_iter()
        .map(|(score, item, matched_keywords)| Slot {
            content_id: item.id.clone(),
            matched_keywords,
            score,
        })
        .collect();
    let pages = slots
        .chunks(page_size.max(1))
        .enumerate()
        .map(|(i, chunk)| MagazinePage {
            page_number: i + 1,
            slots: chunk.to_vec(),
            generated_at: now,
        })
        .collect();
    Magazine {
        pages,
        cold_start: total_items == 0,
        total_items,
    }
}

/// Filters shared by search and the saved list.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ItemFilter {
    #[serde(default)]
    pub media: Option<MediaKind>,
    #[serde(default)]
    pub from: Option<DateTime<Utc>>,
    #[serde(default)]
    pub to: Option<DateTime<Utc>>,
    #[serde(default)]
    pub source_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("search keyword is empty")]
    EmptyKeyword,
    #[error("date range starts after it ends")]
    InvertedRange,
    #[error("rating {0} is outside 1..=5")]
    RatingOutOfRange(u8),
}

impl ItemFilter {
    pub fn validate(&self) -> Result<(), QueryError> {
        match (self.from, self.to) {
            (Some(f), Some(t)) if f > t => Err(QueryError::InvertedRange),
            _ => Ok(()),
        }
    }

    /// A `mixed` item satisfies both the image and the video filter.
    pub fn accepts(&self, item: &ContentItem) -> bool {
        let media_ok = self.media.is_none_or(|m| {
            item.media_kind == m || (item.media_kind == MediaKind::Mixed && matches!(m, MediaKind::Image | MediaKind::Video))
        });
        media_ok
            && self.from.is_none_or(|f| item.publish_date >= f)
            && self.to.is_none_or(|t| item.publish_date <= t)
            && self.source_id.as_ref().is_none_or(|s| &item.source_id == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub keyword: String,
    #[serde(flatten)]
    pub filter: ItemFilter,
    #[serde(default)]
    pub limit: Option<usize>,
}

impl SearchQuery {
    pub fn new(keyword: &str) -> Self {
        Self {
            keyword: keyword.to_string(),
            filter: ItemFilter::default(),
            limit: None,
        }
    }

    pub fn validate(&self) -> Result<(), QueryError> {
        if self.keyword.trim().is_empty() {
            return Err(QueryError::EmptyKeyword);
        }
        self.filter.validate()
    }

    /// Case-insensitive substring match on keywords, title or body.
    pub fn matches(&self, item: &ContentItem) -> bool {
        let needle = self.keyword.trim().to_lowercase();
        let text_hit = item.keywords.iter().any(|k| k.contains(&needle))
            || item.title.to_lowercase().contains(&needle)
            || item.body_text.to_lowercase().contains(&needle);
        text_hit && self.filter.accepts(item)
    }
}

fn newest_first(a: &ContentItem, b: &ContentItem) -> Ordering {
    b.publish_date.cmp(&a.publish_date).then_with(|| a.id.cmp(&b.id))
}

/// Matching items, newest first (ties by id), cut at the query limit.
pub fn search<'a>(
    items: impl IntoIterator<Item = &'a ContentItem>,
    query: &SearchQuery,
) -> Result<Vec<ContentItem>, QueryError> {
    query.validate()?;
    let mut hits: Vec<ContentItem> = items.into_iter().filter(|i| query.matches(i)).cloned().collect();
    hits.sort_by(newest_first);
    if let Some(limit) = query.limit {
        hits.truncate(limit);
    }
    Ok(hits)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedItem {
    pub user_id: String,
    pub content_id: String,
    pub saved_at: DateTime<Utc>,
    #[serde(default)]
    pub rating: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user_id: String,
    pub content_id: String,
    pub value: u8,
    pub rated_at: DateTime<Utc>,
}

impl Rating {
    pub fn new(user_id: &str, content_id: &str, value: u8, rated_at: DateTime<Utc>) -> Result<Self, QueryError> {
        if !(1..=5).contains(&value) {
            return Err(QueryError::RatingOutOfRange(value));
        }
        Ok(Self {
            user_id: user_id.to_string(),
            content_id: content_id.to_string(),
            value,
            rated_at,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SavedSort {
    #[default]
    SavedAt,
    PublishDate,
}

impl std::str::FromStr for SavedSort {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "saved_at" => Ok(SavedSort::SavedAt),
            "publish_date" => Ok(SavedSort::PublishDate),
            other => Err(format!("unknown sort {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedEntry {
    #[serde(flatten)]
    pub saved: SavedItem,
    pub content: ContentItem,
}

/// Sorts and filters a user's saved items. Both orders are newest first
/// with ties broken by content id.
pub fn list_saved(entries: Vec<SavedEntry>, sort: SavedSort, filter: &ItemFilter) -> Result<Vec<SavedEntry>, QueryError> {
    filter.validate()?;
    let mut out: Vec<SavedEntry> = entries.into_iter().filter(|e| filter.accepts(&e.content)).collect();
    out.sort_by(|a, b| {
        let primary = match sort {
            SavedSort::SavedAt => b.saved.saved_at.cmp(&a.saved.saved_at),
            SavedSort::PublishDate => b.content.publish_date.cmp(&a.content.publish_date),
        };
        primary.then_with(|| a.saved.content_id.cmp(&b.saved.content_id))
    });
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Facebook,
    Twitter,
    Linkedin,
    Googleplus,
    Mail,
}

impl Channel {
    pub fn event_kind(self) -> EventKind {
        match self {
            Channel::Mail => EventKind::Mail,
            _ => EventKind::Share,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharePayload {
    pub channel: Channel,
    pub title: String,
    pub link: String,
    pub text_snippet: String,
}

pub const SNIPPET_MAX_CHARS: usize = 280;

/// The text itself when it fits in 280 characters, else its first 277
/// characters followed by an ellipsis.
pub fn snippet(text: &str) -> String {
    if text.chars().count() <= SNIPPET_MAX_CHARS {
        return text.to_string();
    }
    let mut s: String = text.chars().take(SNIPPET_MAX_CHARS - 3).collect();
    s.push('…');
    s
}

pub fn share_payload(item: &ContentItem, channel: Channel) -> SharePayload {
    SharePayload {
        channel,
        title: item.title.clone(),
        link: item.canonical_link.clone(),
        text_snippet: snippet(&item.body_text),
    }
}
