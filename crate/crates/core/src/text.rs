//! Word tokenization and keyword matching shared by classification,
//! profile import and search.

/// Lowercase alphanumeric words of `text`, in order.
pub fn words(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Canonical form of a user-facing keyword: trimmed, lowercased, inner
/// whitespace collapsed. Returns `None` for blank input.
pub fn normalize_keyword(raw: &str) -> Option<String> {
    let joined = raw
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ");
    (!joined.is_empty()).then_some(joined)
}

/// Whether `phrase` occurs in `haystack` on word boundaries.
///
/// Both sides are tokenized with [`words`], so matching is case-insensitive
/// and punctuation-insensitive: `"android"` matches `"New Android-based"`
/// but not `"androids"`.
pub fn contains_phrase(haystack: &[String], phrase: &str) -> bool {
    count_phrase(haystack, phrase) > 0
}

/// Number of (possibly overlapping) occurrences of `phrase` in `haystack`.
pub fn count_phrase(haystack: &[String], phrase: &str) -> usize {
    let needle = words(phrase);
    if needle.is_empty() || needle.len() > haystack.len() {
        return 0;
    }
    haystack.windows(needle.len()).filter(|w| *w == needle.as_slice()).count()
}
