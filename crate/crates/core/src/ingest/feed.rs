//! RSS 2.0 document parsing.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

/// One `<item>` with the fields the pipeline needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawItem {
    pub title: String,
    pub link: String,
    /// Raw description: escaped HTML, CDATA or inline markup, as written.
    pub description: String,
    pub publish_date: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParsedFeed {
    pub items: Vec<RawItem>,
    /// Items dropped for a missing title or link.
    pub skipped: usize,
}

impl ParsedFeed {
    /// Number of `<item>` elements in the document.
    pub fn item_elements(&self) -> usize {
        self.items.len() + self.skipped
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("malformed feed XML at byte {offset}: {message}")]
pub struct FeedParseError {
    pub offset: usize,
    pub message: String,
}

/// Reads every `<item>` of an RSS document in document order.
///
/// Title and link must be present and non-blank, and the link must be an
/// absolute http(s) URL; other items are skipped and counted. `pubDate` is
/// read as RFC 2822 (falling back to RFC 3339); an unreadable date is
/// treated as absent.
pub fn parse_feed(xml: &str) -> Result<ParsedFeed, FeedParseError> {
    let opts = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(xml, opts).map_err(|e| FeedParseError {
        offset: byte_offset(xml, e.pos()),
        message: e.to_string(),
    })?;

    let mut feed = ParsedFeed::default();
    for item in doc
        .descendants()
        .filter(|n| is_plain(n, "item"))
    {
        let child = |name: &str| item.children().find(|c| is_plain(c, name));
        let title = child("title").map(|n| text_of(&n)).unwrap_or_default();
        let link = child("link").map(|n| text_of(&n)).unwrap_or_default();
        let title = title.trim();
        let link = link.trim();
        if title.is_empty() || !is_absolute_http(link) {
            feed.skipped += 1;
            continue;
        }
        feed.items.push(RawItem {
            title: title.to_string(),
            link: link.to_string(),
            description: child("description")
                .map(|n| inner_source(xml, &n))
                .unwrap_or_default(),
            publish_date: child("pubDate").and_then(|n| parse_date(text_of(&n).trim())),
        });
    }
    Ok(feed)
}

fn is_plain(node: &roxmltree::Node, name: &str) -> bool {
    node.is_element() && node.tag_name().name() == name && node.tag_name().namespace().is_none()
}

fn text_of(node: &roxmltree::Node) -> String {
    node.descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect()
}

/// Element content as a description: plain text (entities and CDATA
/// already resolved by the XML parser), or the verbatim source when the
/// element holds inline markup.
fn inner_source(xml: &str, node: &roxmltree::Node) -> String {
    if node.children().any(|c| c.is_element()) {
        let first = node.first_child().map(|c| c.range().start);
        let last = node.last_child().map(|c| c.range().end);
        if let (Some(start), Some(end)) = (first, last) {
            return xml[start..end].to_string();
        }
    }
    text_of(node)
}

fn is_absolute_http(link: &str) -> bool {
    url::Url::parse(link)
        .map(|u| matches!(u.scheme(), "http" | "https") && u.has_host())
        .unwrap_or(false)
}

pub(crate) fn parse_date(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc2822(s)
        .or_else(|_| DateTime::parse_from_rfc3339(s))
        .ok()
        .map(|d| d.with_timezone(&Utc))
}

fn byte_offset(text: &str, pos: roxmltree::TextPos) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(pos.row.saturating_sub(1) as usize)
        .map(str::len)
        .sum();
    let line = &text[line_start.min(text.len())..];
    let col: usize = line
        .chars()
        .take(pos.col.saturating_sub(1) as usize)
        .map(char::len_utf8)
        .sum();
    line_start + col
}
