//! Feed ingestion: fetch → parse → scrape → classify → dedupe → persist.

mod classify;
mod feed;
mod fetch;

use std::collections::BTreeSet;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use url::Url;

pub use classify::{classify_item, Classification};
pub use feed::{parse_feed, FeedParseError, ParsedFeed, RawItem};
pub use fetch::{FetchError, FetchErrorKind, Fetcher};

use crate::html;
use crate::store::{Namespace, Store, StoreError};
use crate::taxonomy::Taxonomy;

/// A registered RSS endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedSource {
    pub id: String,
    pub url: String,
    pub category: String,
    #[serde(default)]
    pub last_fetched: Option<DateTime<Utc>>,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
}

fn enabled_by_default() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SourceError {
    #[error("source id must not be empty")]
    EmptyId,
    #[error("source url {0:?} is not an absolute http(s) URL")]
    BadUrl(String),
    #[error("category {0:?} is not in the taxonomy")]
    UnknownCategory(String),
}

impl FeedSource {
    pub fn new(id: &str, url: &str, category: &str, taxonomy: &Taxonomy) -> Result<Self, SourceError> {
        let source = Self {
            id: id.trim().to_string(),
            url: url.trim().to_string(),
            category: category.trim().to_string(),
            last_fetched: None,
            enabled: true,
        };
        source.validate(taxonomy)?;
        Ok(source)
    }

    pub fn validate(&self, taxonomy: &Taxonomy) -> Result<(), SourceError> {
        if self.id.is_empty() {
            return Err(SourceError::EmptyId);
        }
        let ok = Url::parse(&self.url)
            .map(|u| matches!(u.scheme(), "http" | "https") && u.has_host())
            .unwrap_or(false);
        if !ok {
            return Err(SourceError::BadUrl(self.url.clone()));
        }
        if !taxonomy.contains(&self.category) {
            return Err(SourceError::UnknownCategory(self.category.clone()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MediaKind {
    Article,
    Image,
    Video,
    Mixed,
}

impl MediaKind {
    pub fn from_media(images: &[String], videos: &[String]) -> Self {
        match (images.is_empty(), videos.is_empty()) {
            (true, true) => MediaKind::Article,
            (false, true) => MediaKind::Image,
            (true, false) => MediaKind::Video,
            (false, false) => MediaKind::Mixed,
        }
    }
}

impl std::str::FromStr for MediaKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "article" => Ok(MediaKind::Article),
            "image" => Ok(MediaKind::Image),
            "video" => Ok(MediaKind::Video),
            "mixed" => Ok(MediaKind::Mixed),
            other => Err(format!("unknown media kind {other:?}")),
        }
    }
}

/// One stored unit of content. Media are kept as URLs only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContentItem {
    pub id: String,
    pub title: String,
    pub canonical_link: String,
    pub body_text: String,
    pub links: Vec<String>,
    pub image_urls: Vec<String>,
    pub video_urls: Vec<String>,
    pub publish_date: DateTime<Utc>,
    pub fetched_at: DateTime<Utc>,
    pub category: String,
    pub media_kind: MediaKind,
    pub source_id: String,
    pub keywords: BTreeSet<String>,
}

/// Stable content id: hex SHA-256 prefix of `link` and `title`.
pub fn content_id(canonical_link: &str, title: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(canonical_link.as_bytes());
    hasher.update([0u8]);
    hasher.update(title.as_bytes());
    hex::encode(&hasher.finalize()[..16])
}

/// What scraping needs beyond the item itself.
#[derive(Debug, Clone)]
pub struct IngestContext<'a> {
    pub taxonomy: &'a Taxonomy,
    pub video_hosts: &'a [String],
}

/// Turns a parsed item into a content record, or `None` when it fails
/// the quality bar (no text and no media).
pub fn build_content_item(
    raw: &RawItem,
    source: &FeedSource,
    ctx: &IngestContext<'_>,
    now: DateTime<Utc>,
) -> Option<ContentItem> {
    let base = Url::parse(&raw.link).ok();
    let title = match html::strip_html_text(&raw.title) {
        t if t.is_empty() => raw.title.trim().to_string(),
        t => t,
    };
    let details = html::description_details_with_base(&raw.description, base.as_ref());
    let videos = html::extract_videos(&raw.description, base.as_ref(), ctx.video_hosts);
    if details.text.is_empty() && details.images.is_empty() && videos.is_empty() {
        return None;
    }
    let class = classify_item(
        &title,
        &details.text,
        &details.images,
        &videos,
        &source.category,
        ctx.taxonomy,
    );
    Some(ContentItem {
        id: content_id(&raw.link, &title),
        title,
        canonical_link: raw.link.clone(),
        body_text: details.text,
        links: details.links,
        image_urls: details.images,
        video_urls: videos,
        publish_date: raw.publish_date.unwrap_or(now),
        fetched_at: now,
        category: class.category,
        media_kind: class.media_kind,
        source_id: source.id.clone(),
        keywords: class.keywords,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestReport {
    pub source_id: String,
    /// `<item>` elements seen in the feed.
    pub fetched: usize,
    pub new: usize,
    pub duplicates: usize,
    /// Items without title/link, or failing the quality bar.
    pub skipped: usize,
    pub errors: Vec<String>,
}

impl IngestReport {
    pub fn merge(reports: &[IngestReport], label: &str) -> IngestReport {
        let mut out = IngestReport {
            source_id: label.to_string(),
            ..Default::default()
        };
        for r in reports {
            out.fetched += r.fetched;
            out.new += r.new;
            out.duplicates += r.duplicates;
            out.skipped += r.skipped;
            out.errors.extend(r.errors.iter().cloned());
        }
        out
    }
}

/// Stores `items`, skipping ids already present. Each item is its own
/// write so a crash never leaves one half-stored.
pub fn persist_items(store: &Store, items: Vec<ContentItem>, report: &mut IngestReport) {
    for item in items {
        let outcome = store.transact(|tx| {
            if tx.contains(Namespace::Contents, &item.id) {
                return Ok::<_, StoreError>(false);
            }
            tx.put_as(Namespace::Contents, &item.id, &item)?;
            Ok(true)
        });
        match outcome {
            Ok(true) => report.new += 1,
            Ok(false) => report.duplicates += 1,
            Err(e) => report.errors.push(format!("storing {}: {e}", item.id)),
        }
    }
}

/// Parses and stores one feed body. Pure apart from the store writes.
pub fn ingest_document(
    store: &Store,
    xml: &str,
    source: &FeedSource,
    ctx: &IngestContext<'_>,
    now: DateTime<Utc>,
) -> IngestReport {
    ingest_parsed(store, xml, source, ctx, now).0
}

/// The report, and whether the document parsed.
fn ingest_parsed(
    store: &Store,
    xml: &str,
    source: &FeedSource,
    ctx: &IngestContext<'_>,
    now: DateTime<Utc>,
) -> (IngestReport, bool) {
    let mut report = IngestReport {
        source_id: source.id.clone(),
        ..Default::default()
    };
    let parsed = match parse_feed(xml) {
        Ok(p) => p,
        Err(e) => {
            report.errors.push(e.to_string());
            return (report, false);
        }
    };
    report.fetched = parsed.item_elements();
    report.skipped = parsed.skipped;
    let mut items = Vec::new();
    for raw in &parsed.items {
        match build_content_item(raw, source, ctx, now) {
            Some(item) => items.push(item),
            None => report.skipped += 1,
        }
    }
    persist_items(store, items, &mut report);
    (report, true)
}

/// Runs the full pipeline for one source. Errors land in the report;
/// `last_fetched` of a registered source is set to `now` when the feed was
/// fetched and parsed.
pub async fn ingest_source(
    store: &Store,
    fetcher: &Fetcher,
    source: &FeedSource,
    ctx: &IngestContext<'_>,
    now: DateTime<Utc>,
) -> IngestReport {
    let body = match fetcher.fetch_feed(source).await {
        Ok(body) => body,
        Err(e) => {
            return IngestReport {
                source_id: source.id.clone(),
                errors: vec![e.to_string()],
                ..Default::default()
            }
        }
    };
    let (mut report, parsed) = ingest_parsed(store, &body, source, ctx, now);
    if parsed {
        let touched = store.transact(|tx| {
            if let Some(mut stored) = tx.get_as::<FeedSource>(Namespace::Sources, &source.id)? {
                stored.last_fetched = Some(now);
                tx.put_as(Namespace::Sources, &source.id, &stored)?;
            }
            Ok::<_, StoreError>(())
        });
        if let Err(e) = touched {
            report.errors.push(format!("updating source: {e}"));
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn source() -> FeedSource {
        FeedSource::new("s1", "http://feeds.example/tech.xml", "technology", &Taxonomy::default()).unwrap()
    }

    fn now() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
    }

    #[test]
    fn source_validation() {
        let t = Taxonomy::default();
        assert_eq!(FeedSource::new("", "http://x", "technology", &t), Err(SourceError::EmptyId));
        assert!(matches!(FeedSource::new("a", "ftp://x", "technology", &t), Err(SourceError::BadUrl(_))));
        assert!(matches!(FeedSource::new("a", "x/y", "technology", &t), Err(SourceError::BadUrl(_))));
        assert!(matches!(FeedSource::new("a", "http://x", "cars", &t), Err(SourceError::UnknownCategory(_))));
    }

    #[test]
    fn source_list_defaults() {
        let list: Vec<FeedSource> =
            serde_json::from_str(r#"[{"id":"a","url":"http://x","category":"sports"}]"#).unwrap();
        assert!(list[0].enabled);
        assert_eq!(list[0].last_fetched, None);
    }

    #[test]
    fn content_id_is_stable_and_distinct() {
        assert_eq!(content_id("http://a", "t"), content_id("http://a", "t"));
        assert_ne!(content_id("http://a", "t"), content_id("http://a", "u"));
        assert_ne!(content_id("http://at", ""), content_id("http://a", "t"));
        assert_eq!(content_id("http://a", "t").len(), 32);
    }

    #[test]
    fn build_item_resolves_and_classifies() {
        let hosts = vec!["youtube.com".to_string()];
        let ctx = IngestContext { taxonomy: &Taxonomy::default(), video_hosts: &hosts };
        let raw = RawItem {
            title: "New <b>Android</b> phones".into(),
            link: "http://news.example/a/1".into(),
            description: r#"<p>Review <a href="/more">more</a> <img src="pic.jpg"></p>"#.into(),
            publish_date: None,
        };
        let item = build_content_item(&raw, &source(), &ctx, now()).unwrap();
        assert_eq!(item.title, "New Android phones");
        assert_eq!(item.body_text, "Review more");
        assert_eq!(item.links, ["http://news.example/more"]);
        assert_eq!(item.image_urls, ["http://news.example/a/pic.jpg"]);
        assert_eq!(item.category, "technology/mobile");
        assert_eq!(item.media_kind, MediaKind::Image);
        assert_eq!(item.publish_date, now());
        assert_eq!(item.id, content_id("http://news.example/a/1", "New Android phones"));
    }

    #[test]
    fn empty_items_fail_quality_bar() {
        let ctx = IngestContext { taxonomy: &Taxonomy::default(), video_hosts: &[] };
        let raw = RawItem {
            title: "t".into(),
            link: "http://x/1".into(),
            description: "<p> </p>".into(),
            publish_date: None,
        };
        assert!(build_content_item(&raw, &source(), &ctx, now()).is_none());
    }

    #[test]
    fn ingest_document_dedupes() {
        let store = Store::in_memory();
        let ctx = IngestContext { taxonomy: &Taxonomy::default(), video_hosts: &[] };
        let xml = r#"<rss><channel>
            <item><title>a</title><link>http://x/1</link><description>one</description></item>
            <item><title>b</title><link>http://x/2</link><description>two</description></item>
            <item><title>c</title><description>no link</description></item>
        </channel></rss>"#;
        let first = ingest_document(&store, xml, &source(), &ctx, now());
        assert_eq!((first.fetched, first.new, first.duplicates, first.skipped), (3, 2, 0, 1));
        let second = ingest_document(&store, xml, &source(), &ctx, now());
        assert_eq!((second.fetched, second.new, second.duplicates, second.skipped), (3, 0, 2, 1));
        assert_eq!(store.snapshot().len(Namespace::Contents), 2);
    }

    #[test]
    fn category_index_follows_contents() {
        let store = Store::in_memory();
        let ctx = IngestContext { taxonomy: &Taxonomy::default(), video_hosts: &[] };
        let xml = r#"<rss><channel><item><title>Android news</title><link>http://x/1</link><description>d</description></item></channel></rss>"#;
        ingest_document(&store, xml, &source(), &ctx, now());
        let snap = store.snapshot();
        let ids: Vec<String> = snap.get_as(Namespace::ContentsByCategory, "technology/mobile").unwrap().unwrap();
        assert_eq!(ids.len(), 1);
        store.delete(Namespace::Contents, &ids[0]).unwrap();
        assert!(store.get(Namespace::ContentsByCategory, "technology/mobile").is_none());
    }
}
