//! Per-user weighted interest keywords.
//!
//! Every keyword carries a weight in `[0, 1]`. Its tier is never stored:
//! it is computed from the weight against the configured thresholds, so it
//! can never disagree with the weight. High-tier keywords drive the
//! magazine, Mid-tier keywords are offered as recommendations, Low-tier
//! keywords wait and are eventually flushed.

use std::collections::{BTreeMap, BTreeSet};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::InterestConfig;
use crate::taxonomy::Taxonomy;
use crate::text;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier {
    Low,
    Mid,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Profile,
    Behavior,
    Manual,
    Followed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Visibility {
    #[default]
    Public,
    Private,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ListVisibility {
    #[default]
    Public,
    /// Only entries marked public are shown to others.
    Partial,
    Private,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestEntry {
    pub keyword: String,
    pub weight: f64,
    pub last_touched: DateTime<Utc>,
    pub origin: Origin,
    #[serde(default)]
    pub visibility: Visibility,
    /// Days of decay already applied since `last_touched`.
    #[serde(default)]
    pub decay_days: u32,
}

impl InterestEntry {
    pub fn tier(&self, cfg: &InterestConfig) -> Tier {
        tier_unchecked(self.weight, cfg)
    }

    fn touch(&mut self, weight: f64, at: DateTime<Utc>) {
        self.weight = weight;
        self.last_touched = at;
        self.decay_days = 0;
    }
}

/// A user's interests keyed by keyword.
pub type UserInterests = BTreeMap<String, InterestEntry>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub email: String,
    #[serde(default)]
    pub list_visibility: ListVisibility,
    #[serde(default)]
    pub event_count: u64,
    pub created_at: DateTime<Utc>,
    /// Time of the last applied behavior event.
    #[serde(default)]
    pub last_event_at: Option<DateTime<Utc>>,
}

impl UserProfile {
    pub fn new(user_id: &str, email: &str, created_at: DateTime<Utc>) -> Self {
        Self {
            user_id: user_id.to_string(),
            email: email.to_string(),
            list_visibility: ListVisibility::Public,
            event_count: 0,
            created_at,
            last_event_at: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum EventKind {
    Click,
    Save,
    Unsave,
    Rate(u8),
    Share,
    Mail,
    Search,
    SliderSet(f64),
}

impl EventKind {
    /// Whether the event's target is a content id (otherwise a keyword).
    pub fn targets_content(&self) -> bool {
        !matches!(self, EventKind::Search | EventKind::SliderSet(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaviorEvent {
    pub user_id: String,
    #[serde(flatten)]
    pub kind: EventKind,
    /// Content id, or keyword for `search` and `slider_set`.
    pub target: String,
    pub at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileDocument {
    pub user_id: String,
    #[serde(default)]
    pub likes: Vec<String>,
    #[serde(default)]
    pub posts: Vec<String>,
    #[serde(default)]
    pub professional: Vec<String>,
    #[serde(default)]
    pub demographics: Option<BTreeMap<String, String>>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum InterestError {
    #[error("weight {0} is outside [0, 1]")]
    WeightOutOfRange(f64),
    #[error("rating {0} is outside 1..=5")]
    InvalidRating(u8),
    #[error("keyword is empty")]
    EmptyKeyword,
    #[error("unknown event target {0:?}")]
    UnknownTarget(String),
    #[error("event at {at} precedes the last applied event at {last}")]
    OutOfOrder { at: DateTime<Utc>, last: DateTime<Utc> },
    #[error("event belongs to user {event_user:?}, not {profile_user:?}")]
    UserMismatch { event_user: String, profile_user: String },
    #[error("keyword {0:?} is not visible to this viewer")]
    NotVisible(String),
    #[error("profile document has no user id")]
    EmptyProfile,
}

/// One keyword's weight change caused by an event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightChange {
    pub keyword: String,
    pub old_weight: Option<f64>,
    pub new_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlushReport {
    pub decayed: usize,
    pub flushed: Vec<String>,
}

fn check_weight(weight: f64) -> Result<f64, InterestError> {
    if (0.0..=1.0).contains(&weight) {
        Ok(weight)
    } else {
        Err(InterestError::WeightOutOfRange(weight))
    }
}

/// Rounds to a 1e-12 grid so that sums of the decimal deltas land on the
/// decimal value (`0.35 - 0.2` is `0.15`, not `0.1499…97`).
fn quantize(weight: f64) -> f64 {
    (weight * 1e12).round() / 1e12
}

fn clamp_unit(weight: f64) -> f64 {
    weight.clamp(0.0, 1.0)
}

fn tier_unchecked(weight: f64, cfg: &InterestConfig) -> Tier {
    if weight >= cfg.tier_high {
        Tier::High
    } else if weight >= cfg.tier_mid {
        Tier::Mid
    } else {
        Tier::Low
    }
}

pub fn tier_of(weight: f64, cfg: &InterestConfig) -> Result<Tier, InterestError> {
    check_weight(weight).map(|w| tier_unchecked(w, cfg))
}

/// Weight delta of `kind`; `None` for absolute settings.
fn delta_of(kind: &EventKind, cfg: &InterestConfig) -> Option<f64> {
    let d = &cfg.deltas;
    Some(match kind {
        EventKind::Click => d.click,
        EventKind::Save => d.save,
        EventKind::Unsave => d.unsave,
        EventKind::Rate(r) => (f64::from(*r) - 3.0) * d.rate_step,
        EventKind::Share => d.share,
        EventKind::Mail => d.mail,
        EventKind::Search => d.search,
        EventKind::SliderSet(_) => return None,
    })
}

/// Applies one behavior event.
///
/// `item_keywords` are the keywords of the target content item, `None`
/// when the target id is unknown; they are ignored for keyword-targeted
/// kinds. Every keyword of the item moves by the same delta. Nothing is
/// changed when an error is returned.
pub fn apply_event(
    profile: &mut UserProfile,
    interests: &mut UserInterests,
    event: &BehaviorEvent,
    item_keywords: Option<&BTreeSet<String>>,
    cfg: &InterestConfig,
) -> Result<Vec<WeightChange>, InterestError> {
    if event.user_id != profile.user_id {
        return Err(InterestError::UserMismatch {
            event_user: event.user_id.clone(),
            profile_user: profile.user_id.clone(),
        });
    }
    if let Some(last) = profile.last_event_at {
        if event.at < last {
            return Err(InterestError::OutOfOrder { at: event.at, last });
        }
    }
    match event.kind {
        EventKind::Rate(r) if !(1..=5).contains(&r) => return Err(InterestError::InvalidRating(r)),
        EventKind::SliderSet(v) => {
            check_weight(v)?;
        }
        _ => {}
    }

    let keywords: Vec<String> = if event.kind.targets_content() {
        item_keywords
            .ok_or_else(|| InterestError::UnknownTarget(event.target.clone()))?
            .iter()
            .cloned()
            .collect()
    } else {
        vec![text::normalize_keyword(&event.target).ok_or(InterestError::EmptyKeyword)?]
    };

    let delta = delta_of(&event.kind, cfg);
    let mut changes = Vec::with_capacity(keywords.len());
    for keyword in keywords {
        let old = interests.get(&keyword).map(|e| e.weight);
        let new = match (delta, &event.kind) {
            (Some(d), _) => quantize(clamp_unit(old.unwrap_or(0.0) + d)),
            (None, EventKind::SliderSet(v)) => *v,
            (None, _) => unreachable!("only slider_set is absolute"),
        };
        interests
            .entry(keyword.clone())
            .and_modify(|e| e.touch(new, event.at))
            .or_insert_with(|| InterestEntry {
                keyword: keyword.clone(),
                weight: new,
                last_touched: event.at,
                origin: Origin::Behavior,
                visibility: Visibility::Public,
                decay_days: 0,
            });
        changes.push(WeightChange {
            keyword,
            old_weight: old,
            new_weight: new,
        });
    }
    profile.event_count += 1;
    profile.last_event_at = Some(event.at);
    Ok(changes)
}

/// Re-applies a logged event stream on top of an initial state.
pub fn replay<'a>(
    mut profile: UserProfile,
    mut interests: UserInterests,
    events: impl IntoIterator<Item = &'a BehaviorEvent>,
    item_keywords: impl Fn(&str) -> Option<BTreeSet<String>>,
    cfg: &InterestConfig,
) -> Result<(UserProfile, UserInterests), InterestError> {
    for event in events {
        let kws = if event.kind.targets_content() {
            item_keywords(&event.target)
        } else {
            None
        };
        apply_event(&mut profile, &mut interests, event, kws.as_ref(), cfg)?;
    }
    Ok((profile, interests))
}

/// Decays entries untouched for at least a day and flushes stale Low-tier
/// ones.
///
/// An entry untouched for `d` full days ends up at its last touched weight
/// times `decay_per_day^d`, however often this runs. Low-tier entries
/// untouched for `flush_days` or more are removed unless they were set
/// manually.
pub fn decay_and_flush(interests: &mut UserInterests, now: DateTime<Utc>, cfg: &InterestConfig) -> FlushReport {
    let mut report = FlushReport::default();
    interests.retain(|keyword, entry| {
        let days = (now - entry.last_touched).num_days();
        if days >= 1 {
            let days = u32::try_from(days).unwrap_or(u32::MAX);
            if days > entry.decay_days {
                let pending = i32::try_from(days - entry.decay_days).unwrap_or(i32::MAX);
                entry.weight *= cfg.decay_per_day.powi(pending);
                entry.decay_days = days;
                report.decayed += 1;
            }
        }
        let stale = days >= cfg.flush_days;
        let flush = stale && entry.origin != Origin::Manual && entry.tier(cfg) == Tier::Low;
        if flush {
            report.flushed.push(keyword.clone());
        }
        !flush
    });
    report
}

/// Maps profile data onto taxonomy keywords.
///
/// Each like, post and professional string is matched against every
/// trigger keyword and category name. A keyword found in `n` strings gets
/// `profile_base + (n - 1) * profile_step`, capped at `profile_cap`;
/// existing entries keep the larger weight. Returns the resulting entries
/// of all matched keywords.
pub fn import_profile(
    interests: &mut UserInterests,
    doc: &ProfileDocument,
    taxonomy: &Taxonomy,
    now: DateTime<Utc>,
    cfg: &InterestConfig,
) -> Vec<InterestEntry> {
    let vocabulary = taxonomy.vocabulary();
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for s in doc.likes.iter().chain(&doc.posts).chain(&doc.professional) {
        let words = text::words(s);
        for term in &vocabulary {
            if text::contains_phrase(&words, term) {
                *counts.entry(term.clone()).or_default() += 1;
            }
        }
    }

    counts
        .into_iter()
        .map(|(keyword, n)| {
            let extra = cfg.profile_step * (n - 1) as f64;
            let weight = quantize((cfg.profile_base + extra).min(cfg.profile_cap));
            let entry = interests
                .entry(keyword.clone())
                .and_modify(|e| {
                    if weight > e.weight {
                        e.touch(weight, now);
                    }
                })
                .or_insert_with(|| InterestEntry {
                    keyword,
                    weight,
                    last_touched: now,
                    origin: Origin::Profile,
                    visibility: Visibility::Public,
                    decay_days: 0,
                });
            entry.clone()
        })
        .collect()
}

/// Manual upsert. Keeps the entry's visibility unless one is given.
pub fn set_interest(
    interests: &mut UserInterests,
    keyword: &str,
    weight: f64,
    visibility: Option<Visibility>,
    now: DateTime<Utc>,
) -> Result<InterestEntry, InterestError> {
    let weight = check_weight(weight)?;
    let keyword = text::normalize_keyword(keyword).ok_or(InterestError::EmptyKeyword)?;
    let entry = interests
        .entry(keyword.clone())
        .and_modify(|e| {
            e.touch(weight, now);
            e.origin = Origin::Manual;
            if let Some(v) = visibility {
                e.visibility = v;
            }
        })
        .or_insert_with(|| InterestEntry {
            keyword,
            weight,
            last_touched: now,
            origin: Origin::Manual,
            visibility: visibility.unwrap_or_default(),
            decay_days: 0,
        });
    Ok(entry.clone())
}

/// Removes a keyword; absent keywords are not an error.
pub fn remove_interest(interests: &mut UserInterests, keyword: &str) -> bool {
    text::normalize_keyword(keyword)
        .and_then(|k| interests.remove(&k))
        .is_some()
}

/// `round(100 * (1 - e^(-events / progress_k)))`.
pub fn progress(event_count: u64, cfg: &InterestConfig) -> u8 {
    let p = 100.0 * (1.0 - (-(event_count as f64) / cfg.progress_k).exp());
    p.round().clamp(0.0, 100.0) as u8
}

/// Keywords sorted by weight, heaviest first; ties by keyword.
pub fn ranked_keywords(interests: &UserInterests) -> Vec<String> {
    let mut entries: Vec<&InterestEntry> = interests.values().collect();
    entries.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.keyword.cmp(&b.keyword)));
    entries.into_iter().map(|e| e.keyword.clone()).collect()
}

/// What `viewer` may see of `owner`'s list, heaviest first.
pub fn visible_interests(owner: &UserProfile, interests: &UserInterests, viewer: &str) -> Vec<(String, f64)> {
    let everything = viewer == owner.user_id || owner.list_visibility == ListVisibility::Public;
    ranked_keywords(interests)
        .into_iter()
        .filter_map(|k| {
            let e = &interests[&k];
            let shown = everything
                || (owner.list_visibility == ListVisibility::Partial && e.visibility == Visibility::Public);
            shown.then_some((k, e.weight))
        })
        .collect()
}

/// Which keywords of another user's list to adopt.
#[derive(Debug, Clone, PartialEq)]
pub enum FollowSelection {
    All,
    Keywords(Vec<String>),
}

impl Serialize for FollowSelection {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            FollowSelection::All => s.serialize_str("ALL"),
            FollowSelection::Keywords(k) => k.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for FollowSelection {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Word(String),
            List(Vec<String>),
        }
        match Raw::deserialize(d)? {
            Raw::Word(w) if w == "ALL" => Ok(FollowSelection::All),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("expected \"ALL\" or a keyword list, got {w:?}"))),
            Raw::List(list) => Ok(FollowSelection::Keywords(list)),
        }
    }
}

/// Adopts keywords from `owner`'s list into the viewer's.
///
/// New keywords enter at `follow_weight` with origin `followed`; keywords
/// the viewer already has keep the larger of the two weights. Requesting a
/// keyword the viewer cannot see fails without changing anything.
pub fn follow_keywords(
    viewer_interests: &mut UserInterests,
    viewer: &str,
    owner: &UserProfile,
    owner_interests: &UserInterests,
    selection: &FollowSelection,
    now: DateTime<Utc>,
    cfg: &InterestConfig,
) -> Result<Vec<InterestEntry>, InterestError> {
    if owner.list_visibility == ListVisibility::Private && viewer != owner.user_id {
        return Err(InterestError::NotVisible("the list is private".into()));
    }
    let visible: BTreeSet<String> = visible_interests(owner, owner_interests, viewer)
        .into_iter()
        .map(|(k, _)| k)
        .collect();
    let wanted: Vec<String> = match selection {
        FollowSelection::All => visible.iter().cloned().collect(),
        FollowSelection::Keywords(list) => {
            let mut out = Vec::new();
            for raw in list {
                let k = text::normalize_keyword(raw).ok_or(InterestError::EmptyKeyword)?;
                if !visible.contains(&k) {
                    return Err(InterestError::NotVisible(k));
                }
                if !out.contains(&k) {
                    out.push(k);
                }
            }
            out
        }
    };

    let weight = cfg.follow_weight;
    Ok(wanted
        .into_iter()
        .map(|keyword| {
            interests_adopt(viewer_interests, keyword, weight, now).clone()
        })
        .collect())
}

fn interests_adopt(interests: &mut UserInterests, keyword: String, weight: f64, now: DateTime<Utc>) -> &InterestEntry {
    interests
        .entry(keyword.clone())
        .and_modify(|e| {
            if weight > e.weight {
                e.touch(weight, now);
            }
        })
        .or_insert_with(|| InterestEntry {
            keyword,
            weight,
            last_touched: now,
            origin: Origin::Followed,
            visibility: Visibility::Public,
            decay_days: 0,
        })
}
