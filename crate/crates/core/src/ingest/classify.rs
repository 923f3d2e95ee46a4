use std::collections::BTreeSet;

use super::MediaKind;
use crate::taxonomy::{CategoryNode, Taxonomy};
use crate::text;

#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub category: String,
    pub keywords: BTreeSet<String>,
    pub media_kind: MediaKind,
}

/// Places an item in the taxonomy and derives its keyword set.
///
/// The category starts at `source_category` and descends one level at a
/// time into the child whose triggers occur most often in title or body (first
/// child wins ties); it stops when no child has a hit. Keywords are every
/// taxonomy trigger present in the text plus each title word longer than
/// three characters.
pub fn classify_item(
    title: &str,
    body_text: &str,
    images: &[String],
    videos: &[String],
    source_category: &str,
    taxonomy: &Taxonomy,
) -> Classification {
    let mut haystack = text::words(title);
    haystack.extend(text::words(body_text));

    let hits = |node: &CategoryNode| {
        node.triggers
            .iter()
            .map(|t| text::count_phrase(&haystack, t))
            .sum::<usize>()
    };

    let mut category = source_category.to_string();
    let mut node = taxonomy.resolve(source_category);
    while let Some(current) = node {
        let mut best: Option<(&CategoryNode, usize)> = None;
        for child in &current.children {
            let n = hits(child);
            if n > 0 && best.is_none_or(|(_, m)| n > m) {
                best = Some((child, n));
            }
        }
        match best {
            Some((child, _)) => {
                category = format!("{category}/{}", child.name);
                node = Some(child);
            }
            None => break,
        }
    }

    let mut keywords: BTreeSet<String> = taxonomy
        .triggers()
        .into_iter()
        .filter(|t| text::contains_phrase(&haystack, t))
        .collect();
    keywords.extend(
        text::words(title)
            .into_iter()
            .filter(|w| w.chars().count() > 3),
    );

    Classification {
        category,
        keywords,
        media_kind: MediaKind::from_media(images, videos),
    }
}
