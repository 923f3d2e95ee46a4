//! Human-readable output. `--json` bypasses this and prints the values as
//! they came back from the engine or server.

use std::fmt::Write;

use serde_json::Value;

#[derive(Debug, Clone, Copy)]
pub enum Kind {
    Source,
    Sources,
    Ingest,
    DecayFlush,
    Rebuilt,
    Recommendations,
    Interests,
    User,
    Done,
}

fn s(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".to_string(),
        other => other.to_string(),
    }
}

fn source_line(out: &mut String, v: &Value) {
    let state = if v["enabled"].as_bool().unwrap_or(true) { "enabled" } else { "disabled" };
    let _ = writeln!(
        out,
        "{}\t{}\t{}\t{}\tlast fetched {}",
        s(&v["id"]),
        s(&v["category"]),
        state,
        s(&v["url"]),
        s(&v["last_fetched"])
    );
}

fn interest_line(out: &mut String, v: &Value) {
    let weight = v["weight"].as_f64().unwrap_or(f64::NAN);
    let _ = writeln!(out, "{}\t{weight:.4}\t{}", s(&v["keyword"]), s(&v["tier"]));
}

fn items(v: &Value) -> &[Value] {
    v.as_array().map(Vec::as_slice).unwrap_or_default()
}

pub fn text(kind: Kind, v: &Value) -> String {
    let mut out = String::new();
    match kind {
        Kind::Source => source_line(&mut out, v),
        Kind::Sources => {
            if items(v).is_empty() {
                out.push_str("no sources\n");
            }
            for src in items(v) {
                source_line(&mut out, src);
            }
        }
        Kind::Ingest => {
            for r in items(v) {
                let _ = writeln!(
                    out,
                    "source {}: fetched {}, new {}, duplicates {}, skipped {}",
                    s(&r["source_id"]),
                    r["fetched"],
                    r["new"],
                    r["duplicates"],
                    r["skipped"]
                );
                for e in items(&r["errors"]) {
                    let _ = writeln!(out, "  error: {}", s(e));
                }
            }
        }
        Kind::DecayFlush => {
            let reports = v.as_object().cloned().unwrap_or_default();
            let decayed: u64 = reports.values().filter_map(|r| r["decayed"].as_u64()).sum();
            let flushed: usize = reports.values().map(|r| items(&r["flushed"]).len()).sum();
            let _ = writeln!(out, "{} users: {decayed} interests decayed, {flushed} flushed", reports.len());
            for (user, r) in &reports {
                for k in items(&r["flushed"]) {
                    let _ = writeln!(out, "  {user}: flushed {}", s(k));
                }
            }
        }
        Kind::Rebuilt => {
            let _ = writeln!(out, "model version {}", s(&v["version"]));
        }
        Kind::Recommendations => {
            if items(v).is_empty() {
                out.push_str("no recommendations\n");
            }
            for r in items(v) {
                let score = r["score"].as_f64().unwrap_or(f64::NAN);
                let via = match &r["contributing_user"] {
                    Value::String(u) => format!(" (via {u})"),
                    _ => String::new(),
                };
                let _ = writeln!(out, "{}\t{score:.4}\t{}{via}", s(&r["keyword"]), s(&r["reason"]));
            }
        }
        Kind::Interests => {
            for i in items(v) {
                interest_line(&mut out, i);
            }
        }
        Kind::User => {
            let p = &v["profile"];
            let _ = writeln!(out, "user {} <{}>", s(&p["user_id"]), s(&p["email"]));
            let _ = writeln!(
                out,
                "events {}, progress {}%, saved {}, ratings {}, list {}",
                v["events"],
                v["progress"],
                v["saved"],
                v["ratings"],
                s(&p["list_visibility"])
            );
            for i in items(&v["interests"]) {
                out.push_str("  ");
                interest_line(&mut out, i);
            }
        }
        Kind::Done => {
            for (k, val) in v.as_object().into_iter().flatten() {
                let _ = writeln!(out, "{k} {}", s(val));
            }
        }
    }
    out
}
