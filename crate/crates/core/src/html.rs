//! Lenient HTML handling for feed item descriptions.
//!
//! Descriptions are small fragments of often broken markup. A forgiving
//! tokenizer splits them into text runs and tags; text extraction, link
//! extraction and image extraction are all views over the same token
//! stream, so they agree on what counts as markup.

use url::Url;

/// A tag as written in the source. Names are lowercased; attribute values
/// are raw (entities not yet decoded). Duplicate attributes keep the first.
#[derive(Debug, Clone, PartialEq)]
pub struct Tag {
    pub name: String,
    pub attrs: Vec<(String, String)>,
}

impl Tag {
    pub fn attr(&self, name: &str) -> Option<&str> {
        self.attrs
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Token<'a> {
    Text(&'a str),
    Start(Tag),
    End(String),
}

/// Elements whose content is never text.
const RAW_TEXT: &[&str] = &["script", "style"];

/// Elements that separate words when rendered.
const BLOCK: &[&str] = &[
    "address", "article", "aside", "blockquote", "br", "dd", "div", "dl", "dt", "figcaption",
    "figure", "footer", "h1", "h2", "h3", "h4", "h5", "h6", "header", "hr", "li", "ol", "p",
    "pre", "section", "table", "td", "th", "tr", "ul",
];

/// Splits `src` into text and tags. Comments, doctypes and processing
/// instructions are dropped, as is the content of `script`/`style`. A `<`
/// that cannot start a tag is kept as text; a tag left open at the end of
/// input is dropped.
pub fn tokenize(src: &str) -> Vec<Token<'_>> {
    let b = src.as_bytes();
    let len = b.len();
    let mut out = Vec::new();
    let mut pos = 0;
    let mut text_start = 0;

    while pos < len {
        if b[pos] != b'<' {
            pos += 1;
            continue;
        }
        let Some(&next) = b.get(pos + 1) else { break };
        if !(next.is_ascii_alphabetic() || matches!(next, b'/' | b'!' | b'?')) {
            pos += 1;
            continue;
        }
        if text_start < pos {
            out.push(Token::Text(&src[text_start..pos]));
        }

        let rest = &src[pos..];
        pos = if rest.starts_with("<!-->") {
            pos + 5
        } else if rest.starts_with("<!--->") {
            pos + 6
        } else if rest.starts_with("<!--") {
            find(src, pos + 4, "-->").map_or(len, |i| i + 3)
        } else if next == b'!' || next == b'?' {
            find_byte(b, pos + 2, b'>').map_or(len, |i| i + 1)
        } else if next == b'/' {
            if b.get(pos + 2).is_some_and(u8::is_ascii_alphabetic) {
                let (tag, end) = parse_tag(src, pos + 2);
                if let Some(tag) = tag {
                    out.push(Token::End(tag.name));
                }
                end
            } else {
                find_byte(b, pos + 2, b'>').map_or(len, |i| i + 1)
            }
        } else {
            match parse_tag(src, pos + 1) {
                (Some(tag), end) => {
                    let raw = RAW_TEXT.contains(&tag.name.as_str());
                    let close = format!("</{}", tag.name);
                    out.push(Token::Start(tag));
                    if raw {
                        find_ascii_ci(src, end, &close).unwrap_or(len)
                    } else {
                        end
                    }
                }
                (None, end) => end,
            }
        };
        text_start = pos;
    }
    if text_start < len {
        out.push(Token::Text(&src[text_start..]));
    }
    out
}

/// Parses a tag whose name starts at `start`. Returns the tag and the
/// position just past its `>`, or `None` if input ends inside the tag.
fn parse_tag(src: &str, start: usize) -> (Option<Tag>, usize) {
    let b = src.as_bytes();
    let len = b.len();
    let stop = |c: u8| c.is_ascii_whitespace() || c == b'/' || c == b'>';

    let mut i = start;
    while i < len && !stop(b[i]) {
        i += 1;
    }
    let mut tag = Tag {
        name: src[start..i].to_ascii_lowercase(),
        attrs: Vec::new(),
    };

    loop {
        while i < len && (b[i].is_ascii_whitespace() || b[i] == b'/') {
            i += 1;
        }
        if i >= len {
            return (None, len);
        }
        if b[i] == b'>' {
            return (Some(tag), i + 1);
        }

        let name_start = i;
        if b[i] == b'=' {
            i += 1;
        }
        while i < len && !stop(b[i]) && b[i] != b'=' {
            i += 1;
        }
        let name = src[name_start..i].to_ascii_lowercase();
        while i < len && b[i].is_ascii_whitespace() {
            i += 1;
        }

        let mut value = "";
        if i < len && b[i] == b'=' {
            i += 1;
            while i < len && b[i].is_ascii_whitespace() {
                i += 1;
            }
            if i < len && (b[i] == b'"' || b[i] == b'\'') {
                let quote = b[i];
                match find_byte(b, i + 1, quote) {
                    Some(close) => {
                        value = &src[i + 1..close];
                        i = close + 1;
                    }
                    None => return (None, len),
                }
            } else {
                let value_start = i;
                while i < len && !b[i].is_ascii_whitespace() && b[i] != b'>' {
                    i += 1;
                }
                value = &src[value_start..i];
            }
        }
        if tag.attr(&name).is_none() {
            tag.attrs.push((name, value.to_string()));
        }
    }
}

fn find(src: &str, from: usize, needle: &str) -> Option<usize> {
    src.get(from..)?.find(needle).map(|i| i + from)
}

fn find_byte(b: &[u8], from: usize, needle: u8) -> Option<usize> {
    b.get(from..)?.iter().position(|&c| c == needle).map(|i| i + from)
}

fn find_ascii_ci(src: &str, from: usize, needle: &str) -> Option<usize> {
    let hay = src.as_bytes().get(from..)?;
    let needle = needle.as_bytes();
    hay.windows(needle.len())
        .position(|w| w.eq_ignore_ascii_case(needle))
        .map(|i| i + from)
}

/// Decodes `&amp; &lt; &gt; &quot; &#39;`. Any other entity is left as is.
pub fn decode_entities(s: &str) -> String {
    const TABLE: &[(&str, char)] = &[
        ("&amp;", '&'),
        ("&lt;", '<'),
        ("&gt;", '>'),
        ("&quot;", '"'),
        ("&#39;", '\''),
    ];
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        match TABLE.iter().find(|(name, _)| rest.starts_with(name)) {
            Some((name, ch)) => {
                out.push(*ch);
                rest = &rest[name.len()..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn collapse_whitespace(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn strip_once(src: &str) -> String {
    let mut buf = String::with_capacity(src.len());
    for token in tokenize(src) {
        match token {
            Token::Text(t) => buf.push_str(t),
            Token::Start(tag) if BLOCK.contains(&tag.name.as_str()) => buf.push(' '),
            Token::End(name) if BLOCK.contains(&name.as_str()) => buf.push(' '),
            _ => {}
        }
    }
    collapse_whitespace(&decode_entities(&buf))
}

/// Plain text of an HTML fragment: tags removed, the five basic entities
/// decoded, whitespace collapsed and trimmed.
///
/// Stripping is repeated until nothing changes, so the result is a fixed
/// point: it contains no tag opener (`<` followed by a letter, `/` or `!`)
/// and stripping it again returns it unchanged. Each round strictly
/// shortens the text or leaves it as is, which bounds the loop.
pub fn strip_html_text(description: &str) -> String {
    let mut current = strip_once(description);
    loop {
        let next = strip_once(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

fn attr_urls(description: &str, tag_name: &str, attr: &str, base: Option<&Url>) -> Vec<String> {
    tokenize(description)
        .into_iter()
        .filter_map(|t| match t {
            Token::Start(tag) if tag.name == tag_name => {
                let value = decode_entities(tag.attr(attr)?);
                let value = value.trim();
                (!value.is_empty()).then(|| resolve(value, base))
            }
            _ => None,
        })
        .collect()
}

/// Absolute URLs are kept verbatim; relative ones are joined onto `base`
/// when there is one.
fn resolve(raw: &str, base: Option<&Url>) -> String {
    if Url::parse(raw).is_ok() {
        return raw.to_string();
    }
    match base.and_then(|b| b.join(raw).ok()) {
        Some(u) => u.to_string(),
        None => raw.to_string(),
    }
}

/// `href` values of all anchors, in document order, duplicates kept.
pub fn extract_links(description: &str, base: Option<&Url>) -> Vec<String> {
    attr_urls(description, "a", "href", base)
}

/// `src` values of all images, in document order, duplicates kept.
pub fn extract_images(description: &str, base: Option<&Url>) -> Vec<String> {
    attr_urls(description, "img", "src", base)
}

/// Anchor and iframe URLs whose host is one of `hosts` or a subdomain of one.
pub fn extract_videos(description: &str, base: Option<&Url>, hosts: &[String]) -> Vec<String> {
    tokenize(description)
        .into_iter()
        .filter_map(|t| match t {
            Token::Start(tag) if tag.name == "a" => tag.attr("href").map(str::to_string),
            Token::Start(tag) if tag.name == "iframe" => tag.attr("src").map(str::to_string),
            _ => None,
        })
        .map(|raw| resolve(decode_entities(&raw).trim(), base))
        .filter(|u| is_video_url(u, hosts))
        .collect()
}

fn is_video_url(raw: &str, hosts: &[String]) -> bool {
    let Ok(url) = Url::parse(raw) else { return false };
    let Some(host) = url.host_str() else { return false };
    let host = host.to_ascii_lowercase();
    hosts.iter().any(|h| {
        let h = h.to_ascii_lowercase();
        host == h || host.ends_with(&format!(".{h}"))
    })
}

/// Text, links and images of one description.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct DescriptionDetails {
    pub text: String,
    pub links: Vec<String>,
    pub images: Vec<String>,
}

pub fn description_details(description: &str) -> DescriptionDetails {
    description_details_with_base(description, None)
}

pub fn description_details_with_base(description: &str, base: Option<&Url>) -> DescriptionDetails {
    DescriptionDetails {
        text: strip_html_text(description),
        links: extract_links(description, base),
        images: extract_images(description, base),
    }
}
