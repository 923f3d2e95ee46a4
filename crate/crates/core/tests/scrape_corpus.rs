//! Hand-labelled scraping corpus plus a comparison against an html5ever-based reference.

use std::fs;
use std::path::{Path, PathBuf};

use emag_core::html::{description_details_with_base, strip_html_text};
use emag_core::ingest::parse_feed;
use chrono::SecondsFormat;
use serde_json::{json, Value};
use url::Url;

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/scrape")
}

fn fixtures(ext: &str) -> Vec<(PathBuf, Value)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(corpus_dir()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().and_then(|e| e.to_str()) != Some(ext) {
            continue;
        }
        let expected = path.with_extension("expected.json");
        let expected: Value = serde_json::from_str(&fs::read_to_string(&expected).unwrap()).unwrap();
        out.push((path, expected));
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

fn details_json(description: &str, base: Option<&Url>) -> Value {
    let d = description_details_with_base(description, base);
    json!({ "text": d.text, "links": d.links, "images": d.images })
}

#[test]
fn corpus_has_twenty_five_documents() {
    assert_eq!(fixtures("html").len() + fixtures("xml").len(), 25);
}

#[test]
fn fragments_match_labels() {
    for (path, expected) in fixtures("html") {
        let src = fs::read_to_string(&path).unwrap();
        let base = expected.get("base").and_then(Value::as_str).map(|b| Url::parse(b).unwrap());
        let got = details_json(&src, base.as_ref());
        for field in ["text", "links", "images"] {
            assert_eq!(got[field], expected[field], "{} field {field}", path.display());
        }
    }
}

#[test]
fn feeds_match_labels() {
    for (path, expected) in fixtures("xml") {
        let src = fs::read_to_string(&path).unwrap();
        match parse_feed(&src) {
            Err(e) => {
                assert_eq!(Some(e.offset as u64), expected["error_offset"].as_u64(), "{}", path.display());
            }
            Ok(feed) => {
                assert!(expected.get("error_offset").is_none(), "{} should fail to parse", path.display());
                assert_eq!(feed.skipped as u64, expected["skipped"].as_u64().unwrap(), "{}", path.display());
                let want = expected["items"].as_array().unwrap();
                assert_eq!(feed.items.len(), want.len(), "{}", path.display());
                for (item, want) in feed.items.iter().zip(want) {
                    let base = Url::parse(&item.link).ok();
                    let details = details_json(&item.description, base.as_ref());
                    assert_eq!(item.title, want["title"].as_str().unwrap(), "{}", path.display());
                    assert_eq!(item.link, want["link"].as_str().unwrap(), "{}", path.display());
                    if let Some(d) = want.get("description") {
                        assert_eq!(item.description, d.as_str().unwrap(), "{}", path.display());
                    }
                    for field in ["text", "links", "images"] {
                        assert_eq!(details[field], want[field], "{} {} {field}", path.display(), item.title);
                    }
                    let date = item.publish_date.map(|d| d.to_rfc3339_opts(SecondsFormat::Secs, true));
                    assert_eq!(json!(date), want["publish_date"], "{}", path.display());
                }
            }
        }
    }
}

#[test]
fn stripping_is_idempotent_on_corpus() {
    let mut inputs = Vec::new();
    for (path, _) in fixtures("html") {
        inputs.push(fs::read_to_string(path).unwrap());
    }
    for (path, _) in fixtures("xml") {
        if let Ok(feed) = parse_feed(&fs::read_to_string(path).unwrap()) {
            inputs.extend(feed.items.into_iter().map(|i| i.description));
        }
    }
    for input in inputs {
        let once = strip_html_text(&input);
        assert_eq!(strip_html_text(&once), once, "input {input:?}");
    }
}

fn collapse(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Text, hrefs and srcs as seen by a standards-compliant HTML5 parser.
fn reference(src: &str) -> (String, Vec<String>, Vec<String>) {
    use scraper::{Html, Node};
    let doc = Html::parse_fragment(src);
    let mut text = String::new();
    let mut links = Vec::new();
    let mut images = Vec::new();
    for node in doc.tree.root().descendants() {
        match node.value() {
            Node::Text(t) => {
                let inside_raw = node.ancestors().any(|a| {
                    a.value().as_element().is_some_and(|e| matches!(e.name(), "script" | "style"))
                });
                if !inside_raw {
                    text.push_str(t);
                }
            }
            Node::Element(e) => {
                if matches!(e.name(), "p" | "div" | "li" | "td" | "br") {
                    text.push(' ');
                }
                match e.name() {
                    "a" => links.extend(e.attr("href").filter(|h| !h.is_empty()).map(String::from)),
                    "img" => images.extend(e.attr("src").filter(|s| !s.is_empty()).map(String::from)),
                    _ => {}
                }
            }
            _ => {}
        }
    }
    (collapse(&text), links, images)
}

#[test]
fn agrees_with_reference_parser_on_well_formed_markup() {
    let cases = [
        "<p>Hello <b>world</b></p>",
        "a &amp; b",
        "<div><script>x</script>ok</div>",
        "<div><style>p{}</style><p>one</p><p>two</p></div>",
        r#"<a href="http://x.example/a">one</a> and <a href="http://x.example/a">two</a>"#,
        r#"<a name="top">anchor</a><a href="http://y.example/">y</a>"#,
        r#"<img src="http://img.example/1.png"><p>caption</p>"#,
        "<ul><li>One</li><li>Two</li></ul>",
        "before<!-- hidden -->after",
        "<table><tr><td>A</td><td>B</td></tr></table>",
    ];
    for case in cases {
        let ours = description_details_with_base(case, None);
        let (text, links, images) = reference(case);
        assert_eq!(ours.text, text, "{case}");
        assert_eq!(ours.links, links, "{case}");
        assert_eq!(ours.images, images, "{case}");
    }
}

#[test]
fn malformed_nesting_keeps_the_valid_image() {
    let src = fs::read_to_string(corpus_dir().join("frag-06-malformed-nesting.html")).unwrap();
    let ours = description_details_with_base(&src, None);
    let (text, _, images) = reference(&src);
    assert_eq!(ours.images, images);
    assert_eq!(ours.text, text);
}
