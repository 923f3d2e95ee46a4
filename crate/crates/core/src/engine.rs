//! The engine: every user-facing operation over one store.
//!
//! The HTTP service and the CLI are thin layers over [`Engine`]. Each
//! mutating operation is a single store transaction, so concurrent callers
//! never observe half of one.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::EngineConfig;
use crate::ingest::{self, ContentItem, FeedSource, Fetcher, IngestContext, IngestReport, SourceError};
use crate::interest::{
    self, BehaviorEvent, EventKind, FlushReport, FollowSelection, InterestEntry, InterestError, ListVisibility, Origin,
    ProfileDocument, Tier, UserInterests, UserProfile, Visibility, WeightChange,
};
use crate::magazine::{
    self, Channel, ItemFilter, Magazine, QueryError, Rating, SavedEntry, SavedItem, SavedSort, SearchQuery,
    SharePayload,
};
use crate::recommender::{self, DecompositionBlob, LsiModel, RecommendError, Recommendation};
use crate::store::{Dump, LoggedEvent, Namespace, Reader, Store, StoreError, Tx};

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// A clock that only moves when told to.
#[derive(Debug)]
pub struct FixedClock(Mutex<DateTime<Utc>>);

impl FixedClock {
    pub fn new(at: DateTime<Utc>) -> Self {
        Self(Mutex::new(at))
    }

    pub fn set(&self, at: DateTime<Utc>) {
        *self.0.lock().expect("clock poisoned") = at;
    }

    pub fn advance(&self, by: Duration) {
        *self.0.lock().expect("clock poisoned") += by;
    }
}

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        *self.0.lock().expect("clock poisoned")
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("{0}")]
    BadRequest(String),
    #[error("missing, unknown or expired token")]
    Unauthorized,
    #[error("{0}")]
    Forbidden(String),
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Contract(String),
    #[error("{0}")]
    Unavailable(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0}")]
    Internal(String),
}

impl EngineError {
    /// The HTTP status this error is reported with.
    pub fn status(&self) -> u16 {
        match self {
            EngineError::BadRequest(_) => 400,
            EngineError::Unauthorized => 401,
            EngineError::Forbidden(_) => 403,
            EngineError::NotFound(_) => 404,
            EngineError::Conflict(_) => 409,
            EngineError::Contract(_) => 422,
            EngineError::Unavailable(_) => 503,
            EngineError::Store(_) | EngineError::Internal(_) => 500,
        }
    }

    pub fn code(&self) -> &'static str {
        match self {
            EngineError::BadRequest(_) => "bad_request",
            EngineError::Unauthorized => "unauthorized",
            EngineError::Forbidden(_) => "forbidden",
            EngineError::NotFound(_) => "not_found",
            EngineError::Conflict(_) => "conflict",
            EngineError::Contract(_) => "contract_violation",
            EngineError::Unavailable(_) => "unavailable",
            EngineError::Store(_) | EngineError::Internal(_) => "internal",
        }
    }
}

impl From<InterestError> for EngineError {
    fn from(e: InterestError) -> Self {
        match e {
            InterestError::WeightOutOfRange(_) | InterestError::InvalidRating(_) | InterestError::OutOfOrder { .. } => {
                EngineError::Contract(e.to_string())
            }
            InterestError::EmptyKeyword | InterestError::EmptyProfile => EngineError::BadRequest(e.to_string()),
            InterestError::UnknownTarget(_) => EngineError::NotFound(e.to_string()),
            InterestError::UserMismatch { .. } | InterestError::NotVisible(_) => EngineError::Forbidden(e.to_string()),
        }
    }
}

impl From<QueryError> for EngineError {
    fn from(e: QueryError) -> Self {
        EngineError::Contract(e.to_string())
    }
}

impl From<SourceError> for EngineError {
    fn from(e: SourceError) -> Self {
        EngineError::BadRequest(e.to_string())
    }
}

impl From<RecommendError> for EngineError {
    fn from(e: RecommendError) -> Self {
        match e {
            RecommendError::EmptyMatrix => EngineError::Unavailable(e.to_string()),
            RecommendError::UnknownUser(_) | RecommendError::VersionMismatch(..) => {
                EngineError::Unavailable(format!("rebuild required: {e}"))
            }
            RecommendError::ZeroVector => EngineError::Contract(e.to_string()),
            RecommendError::Svd(_) | RecommendError::BadBlob(_) => EngineError::Internal(e.to_string()),
        }
    }
}

pub type Result<T, E = EngineError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub token: String,
    pub user_id: String,
    pub expires_at: DateTime<Utc>,
}

/// Remembered outcome of an on-demand fetch for a keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordAssociation {
    pub keyword: String,
    pub categories: Vec<String>,
    pub found: bool,
    pub checked_at: DateTime<Utc>,
    /// Negative results expire; positive ones do not.
    #[serde(default)]
    pub expires_at: Option<DateTime<Utc>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registration {
    pub user_id: String,
    pub token: String,
    pub expires_at: DateTime<Utc>,
}

/// An interest entry with its derived tier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestView {
    pub keyword: String,
    pub weight: f64,
    pub tier: Tier,
    pub origin: Origin,
    pub visibility: Visibility,
    pub last_touched: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterestUpdate {
    pub keyword: String,
    pub weight: f64,
    #[serde(default)]
    pub visibility: Option<Visibility>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventOutcome {
    pub seq: u64,
    pub changes: Vec<WeightChange>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub user_id: String,
    pub event_count: u64,
    pub percent: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub items: Vec<ContentItem>,
    /// Present when the search triggered a re-ingest of all sources.
    pub fetched: Option<IngestReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserSummary {
    pub profile: UserProfile,
    pub interests: Vec<InterestView>,
    pub saved: usize,
    pub ratings: usize,
    pub events: usize,
    pub progress: u8,
}

const MODEL_KEY: &str = "current";
const SECRET_KEY: &str = "token_secret";
const SESSION_COUNTER_KEY: &str = "session_counter";

fn pair_key(user: &str, sub: &str) -> String {
    format!("{user}/{sub}")
}

fn user_prefix(user: &str) -> String {
    format!("{user}/")
}

/// Stable user id for an email address.
pub fn user_id_for(email: &str) -> String {
    let digest = Sha256::digest(email.trim().to_lowercase().as_bytes());
    format!("u{}", &hex::encode(digest)[..12])
}

fn valid_email(email: &str) -> bool {
    let email = email.trim();
    match email.split_once('@') {
        Some((local, domain)) => {
            !local.is_empty() && !domain.is_empty() && !domain.contains('@') && !email.contains(char::is_whitespace)
        }
        None => false,
    }
}

fn load_profile(r: &impl Reader, user: &str) -> Result<UserProfile> {
    if user.contains('/') {
        return Err(EngineError::NotFound(format!("unknown user {user:?}")));
    }
    r.read_as(Namespace::Users, user)?
        .ok_or_else(|| EngineError::NotFound(format!("unknown user {user:?}")))
}

fn load_interests(r: &impl Reader, user: &str) -> Result<UserInterests> {
    Ok(r.scan_as::<InterestEntry>(Namespace::Interests, &user_prefix(user))?
        .into_iter()
        .map(|e| (e.keyword.clone(), e))
        .collect())
}

fn load_content(r: &impl Reader, id: &str) -> Result<ContentItem> {
    r.read_as(Namespace::Contents, id)?
        .ok_or_else(|| EngineError::NotFound(format!("unknown content {id:?}")))
}

/// Writes the entries of `after` that differ from `before` and deletes the
/// ones that disappeared.
fn write_interest_diff(tx: &mut Tx<'_>, user: &str, before: &UserInterests, after: &UserInterests) -> Result<()> {
    for (k, e) in after {
        if before.get(k) != Some(e) {
            tx.put_as(Namespace::Interests, &pair_key(user, k), e)?;
        }
    }
    for k in before.keys().filter(|k| !after.contains_key(*k)) {
        tx.delete(Namespace::Interests, &pair_key(user, k))?;
    }
    Ok(())
}

fn all_profiles(r: &impl Reader) -> Result<BTreeMap<String, UserInterests>> {
    let mut out: BTreeMap<String, UserInterests> = r
        .scan_as::<UserProfile>(Namespace::Users, "")?
        .into_iter()
        .map(|p| (p.user_id, UserInterests::new()))
        .collect();
    for (key, value) in r.scan(Namespace::Interests, "") {
        let entry: InterestEntry = serde_json::from_value(value).map_err(StoreError::from)?;
        let user = key.split_once('/').map_or(key.as_str(), |(u, _)| u);
        if let Some(map) = out.get_mut(user) {
            map.insert(entry.keyword.clone(), entry);
        }
    }
    Ok(out)
}

fn view(e: &InterestEntry, cfg: &EngineConfig) -> InterestView {
    InterestView {
        keyword: e.keyword.clone(),
        weight: e.weight,
        tier: e.tier(&cfg.interest),
        origin: e.origin,
        visibility: e.visibility,
        last_touched: e.last_touched,
    }
}

fn ranked_views(interests: &UserInterests, cfg: &EngineConfig) -> Vec<InterestView> {
    interest::ranked_keywords(interests)
        .iter()
        .map(|k| view(&interests[k], cfg))
        .collect()
}

pub struct Engine {
    store: Store,
    config: EngineConfig,
    fetcher: Fetcher,
    clock: Arc<dyn Clock>,
    rebuild_lock: Mutex<()>,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine").field("store", &self.store).finish_non_exhaustive()
    }
}

impl Engine {
    pub fn new(store: Store, config: EngineConfig) -> Self {
        Self::with_clock(store, config, Arc::new(SystemClock))
    }

    pub fn with_clock(store: Store, config: EngineConfig, clock: Arc<dyn Clock>) -> Self {
        let fetcher = Fetcher::new(std::time::Duration::from_secs(config.ingest.fetch_timeout_secs));
        Self {
            store,
            config,
            fetcher,
            clock,
            rebuild_lock: Mutex::new(()),
        }
    }

    pub fn store(&self) -> &Store {
        &self.store
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.clock.now()
    }

    fn ingest_context(&self) -> IngestContext<'_> {
        IngestContext {
            taxonomy: &self.config.taxonomy,
            video_hosts: &self.config.ingest.video_hosts,
        }
    }

    // ---- users and sessions ----

    pub fn register(&self, email: &str) -> Result<Registration> {
        if !valid_email(email) {
            return Err(EngineError::BadRequest(format!("invalid email address {email:?}")));
        }
        let now = self.now();
        let user_id = user_id_for(email);
        self.store.transact(|tx| {
            if tx.contains(Namespace::Users, &user_id) {
                return Err(EngineError::Conflict(format!("{} is already registered", email.trim())));
            }
            let profile = UserProfile::new(&user_id, &email.trim().to_lowercase(), now);
            tx.put_as(Namespace::Users, &user_id, &profile)?;
            let session = self.issue_session(tx, &user_id, now)?;
            Ok(Registration {
                user_id: user_id.clone(),
                token: session.token,
                expires_at: session.expires_at,
            })
        })
    }

    fn issue_session(&self, tx: &mut Tx<'_>, user: &str, now: DateTime<Utc>) -> Result<Session> {
        let secret = match tx.read_as::<String>(Namespace::Meta, SECRET_KEY)? {
            Some(s) => s,
            None => {
                let bytes: [u8; 32] = rand::rng().random();
                let s = hex::encode(bytes);
                tx.put_as(Namespace::Meta, SECRET_KEY, &s)?;
                s
            }
        };
        let counter = tx.read_as::<u64>(Namespace::Meta, SESSION_COUNTER_KEY)?.unwrap_or(0) + 1;
        tx.put_as(Namespace::Meta, SESSION_COUNTER_KEY, &counter)?;
        let mut hasher = Sha256::new();
        hasher.update(secret.as_bytes());
        hasher.update(user.as_bytes());
        hasher.update(counter.to_be_bytes());
        let session = Session {
            token: hex::encode(hasher.finalize()),
            user_id: user.to_string(),
            expires_at: now + Duration::hours(self.config.session_ttl_hours),
        };
        tx.put_as(Namespace::Sessions, &session.token, &session)?;
        Ok(session)
    }

    /// Issues an additional token for an existing user.
    pub fn new_session(&self, user: &str) -> Result<Session> {
        let now = self.now();
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            self.issue_session(tx, user, now)
        })
    }

    pub fn authenticate(&self, token: &str) -> Result<Session> {
        let session: Session = self
            .store
            .snapshot()
            .read_as(Namespace::Sessions, token)?
            .ok_or(EngineError::Unauthorized)?;
        if session.expires_at <= self.now() {
            return Err(EngineError::Unauthorized);
        }
        Ok(session)
    }

    pub fn user(&self, user: &str) -> Result<UserProfile> {
        load_profile(&self.store.snapshot(), user)
    }

    pub fn user_show(&self, user: &str) -> Result<UserSummary> {
        let snap = self.store.snapshot();
        let profile = load_profile(&snap, user)?;
        let interests = load_interests(&snap, user)?;
        Ok(UserSummary {
            progress: interest::progress(profile.event_count, &self.config.interest),
            interests: ranked_views(&interests, &self.config),
            saved: snap.scan(Namespace::Saved, &user_prefix(user)).len(),
            ratings: snap.scan(Namespace::Ratings, &user_prefix(user)).len(),
            events: snap.events(user).len(),
            profile,
        })
    }

    pub fn events(&self, user: &str) -> Vec<LoggedEvent> {
        self.store.snapshot().events(user).to_vec()
    }

    pub fn progress(&self, user: &str) -> Result<Progress> {
        let profile = self.user(user)?;
        Ok(Progress {
            percent: interest::progress(profile.event_count, &self.config.interest),
            event_count: profile.event_count,
            user_id: profile.user_id,
        })
    }

    // ---- interests ----

    pub fn import_profile(&self, user: &str, doc: &ProfileDocument) -> Result<Vec<InterestView>> {
        if doc.user_id.trim().is_empty() {
            return Err(InterestError::EmptyProfile.into());
        }
        if doc.user_id != user {
            return Err(EngineError::BadRequest(format!(
                "profile document is for {:?}, not {user:?}",
                doc.user_id
            )));
        }
        let now = self.now();
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            let before = load_interests(tx, user)?;
            let mut after = before.clone();
            let entries = interest::import_profile(&mut after, doc, &self.config.taxonomy, now, &self.config.interest);
            write_interest_diff(tx, user, &before, &after)?;
            Ok(entries.iter().map(|e| view(e, &self.config)).collect())
        })
    }

    pub fn interests(&self, user: &str) -> Result<Vec<InterestView>> {
        let snap = self.store.snapshot();
        load_profile(&snap, user)?;
        Ok(ranked_views(&load_interests(&snap, user)?, &self.config))
    }

    pub fn set_interest(&self, user: &str, keyword: &str, weight: f64, visibility: Option<Visibility>) -> Result<InterestView> {
        let update = InterestUpdate {
            keyword: keyword.to_string(),
            weight,
            visibility,
        };
        Ok(self.set_interests(user, &[update])?.remove(0))
    }

    /// Applies all updates or none.
    pub fn set_interests(&self, user: &str, updates: &[InterestUpdate]) -> Result<Vec<InterestView>> {
        let now = self.now();
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            let before = load_interests(tx, user)?;
            let mut after = before.clone();
            let mut out = Vec::with_capacity(updates.len());
            for u in updates {
                let e = interest::set_interest(&mut after, &u.keyword, u.weight, u.visibility, now)?;
                out.push(view(&e, &self.config));
            }
            write_interest_diff(tx, user, &before, &after)?;
            Ok(out)
        })
    }

    /// Removes one keyword; `false` when it was not there.
    pub fn remove_interest(&self, user: &str, keyword: &str) -> Result<bool> {
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            let before = load_interests(tx, user)?;
            let mut after = before.clone();
            let removed = interest::remove_interest(&mut after, keyword);
            write_interest_diff(tx, user, &before, &after)?;
            Ok(removed)
        })
    }

    /// Removes every keyword; returns how many there were.
    pub fn clear_interests(&self, user: &str) -> Result<usize> {
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            let before = load_interests(tx, user)?;
            write_interest_diff(tx, user, &before, &UserInterests::new())?;
            Ok(before.len())
        })
    }

    /// Sets the list visibility and/or per-keyword visibility.
    pub fn set_visibility(
        &self,
        user: &str,
        list: Option<ListVisibility>,
        keywords: &BTreeMap<String, Visibility>,
    ) -> Result<UserProfile> {
        self.store.transact(|tx| {
            let mut profile = load_profile(tx, user)?;
            if let Some(list) = list {
                profile.list_visibility = list;
                tx.put_as(Namespace::Users, user, &profile)?;
            }
            let before = load_interests(tx, user)?;
            let mut after = before.clone();
            for (raw, vis) in keywords {
                let k = crate::text::normalize_keyword(raw).ok_or(InterestError::EmptyKeyword)?;
                let entry = after
                    .get_mut(&k)
                    .ok_or_else(|| EngineError::NotFound(format!("{user} has no interest {k:?}")))?;
                entry.visibility = *vis;
            }
            write_interest_diff(tx, user, &before, &after)?;
            Ok(profile)
        })
    }

    pub fn visible_interests(&self, owner: &str, viewer: &str) -> Result<Vec<(String, f64)>> {
        let snap = self.store.snapshot();
        let profile = load_profile(&snap, owner)?;
        let interests = load_interests(&snap, owner)?;
        Ok(interest::visible_interests(&profile, &interests, viewer))
    }

    pub fn follow(&self, viewer: &str, owner: &str, selection: &FollowSelection) -> Result<Vec<InterestView>> {
        if viewer == owner {
            return Err(EngineError::BadRequest("users cannot follow themselves".into()));
        }
        let now = self.now();
        self.store.transact(|tx| {
            load_profile(tx, viewer)?;
            let owner_profile = load_profile(tx, owner)?;
            let owner_interests = load_interests(tx, owner)?;
            let before = load_interests(tx, viewer)?;
            let mut after = before.clone();
            let entries = interest::follow_keywords(
                &mut after,
                viewer,
                &owner_profile,
                &owner_interests,
                selection,
                now,
                &self.config.interest,
            )?;
            write_interest_diff(tx, viewer, &before, &after)?;
            Ok(entries.iter().map(|e| view(e, &self.config)).collect())
        })
    }

    /// Decays and flushes every user's interests.
    pub fn decay_and_flush_all(&self) -> Result<BTreeMap<String, FlushReport>> {
        let now = self.now();
        let users: Vec<UserProfile> = self.store.snapshot().scan_as(Namespace::Users, "")?;
        let mut out = BTreeMap::new();
        for p in users {
            let report = self.store.transact(|tx| {
                let before = load_interests(tx, &p.user_id)?;
                let mut after = before.clone();
                let report = interest::decay_and_flush(&mut after, now, &self.config.interest);
                write_interest_diff(tx, &p.user_id, &before, &after)?;
                Ok::<_, EngineError>(report)
            })?;
            out.insert(p.user_id, report);
        }
        Ok(out)
    }

    // ---- behavior events ----

    /// Applies and logs a client-reported event.
    ///
    /// An event identical to one already logged is a conflict; an event
    /// older than the user's last one is a contract violation.
    pub fn record_event(&self, event: BehaviorEvent) -> Result<EventOutcome> {
        self.store.transact(|tx| self.apply_logged(tx, event))
    }

    fn apply_logged(&self, tx: &mut Tx<'_>, event: BehaviorEvent) -> Result<EventOutcome> {
        let user = event.user_id.clone();
        let mut profile = load_profile(tx, &user)?;
        if is_logged(tx, &event) {
            return Err(EngineError::Conflict("event already recorded".into()));
        }
        let keywords: Option<BTreeSet<String>> = if event.kind.targets_content() {
            Some(load_content(tx, &event.target)?.keywords)
        } else {
            None
        };
        let before = load_interests(tx, &user)?;
        let mut after = before.clone();
        let changes = interest::apply_event(&mut profile, &mut after, &event, keywords.as_ref(), &self.config.interest)?;
        write_interest_diff(tx, &user, &before, &after)?;
        tx.put_as(Namespace::Users, &user, &profile)?;

        let key = pair_key(&user, &event.target);
        match event.kind {
            EventKind::Save => {
                if !tx.contains(Namespace::Saved, &key) {
                    let rating = tx.read_as::<Rating>(Namespace::Ratings, &key)?.map(|r| r.value);
                    let saved = SavedItem {
                        user_id: user.clone(),
                        content_id: event.target.clone(),
                        saved_at: event.at,
                        rating,
                    };
                    tx.put_as(Namespace::Saved, &key, &saved)?;
                }
            }
            EventKind::Unsave => {
                if tx.contains(Namespace::Saved, &key) {
                    tx.delete(Namespace::Saved, &key)?;
                }
            }
            EventKind::Rate(value) => {
                let rating = Rating::new(&user, &event.target, value, event.at)?;
                tx.put_as(Namespace::Ratings, &key, &rating)?;
                if let Some(mut saved) = tx.read_as::<SavedItem>(Namespace::Saved, &key)? {
                    saved.rating = Some(value);
                    tx.put_as(Namespace::Saved, &key, &saved)?;
                }
            }
            _ => {}
        }
        let seq = tx.append_event(&user, event)?;
        Ok(EventOutcome { seq, changes })
    }

    /// Logs a server-originated event at the current time (or right at the
    /// user's last event, if that is later). Re-emitting an identical event
    /// is a no-op.
    fn emit(&self, tx: &mut Tx<'_>, user: &str, kind: EventKind, target: &str) -> Result<Option<EventOutcome>> {
        let profile = load_profile(tx, user)?;
        let now = self.now();
        let at = profile.last_event_at.map_or(now, |last| last.max(now));
        let event = BehaviorEvent {
            user_id: user.to_string(),
            kind,
            target: target.to_string(),
            at,
        };
        if is_logged(tx, &event) {
            return Ok(None);
        }
        self.apply_logged(tx, event).map(Some)
    }

    // ---- magazine, search, saved items ----

    pub fn content(&self, id: &str) -> Result<ContentItem> {
        load_content(&self.store.snapshot(), id)
    }

    pub fn magazine(&self, user: &str, page_size: Option<usize>) -> Result<Magazine> {
        let page_size = page_size.unwrap_or(self.config.magazine.page_size);
        if page_size == 0 {
            return Err(EngineError::BadRequest("page_size must be at least 1".into()));
        }
        let snap = self.store.snapshot();
        load_profile(&snap, user)?;
        let interests = load_interests(&snap, user)?;
        let items: Vec<ContentItem> = snap.scan_as(Namespace::Contents, "")?;
        Ok(magazine::build_magazine(
            &items,
            &interests,
            self.now(),
            page_size,
            &self.config.interest,
            &self.config.magazine,
        ))
    }

    /// Keyword search. When nothing at all matches the keyword and no
    /// remembered association says otherwise, every enabled source is
    /// re-ingested first. A known `user` gets a search event.
    pub async fn search(&self, query: &SearchQuery, user: Option<&str>) -> Result<SearchOutcome> {
        query.validate()?;
        if let Some(u) = user {
            self.user(u)?;
        }
        let keyword = query.keyword.trim().to_lowercase();
        let bare = SearchQuery::new(&keyword);
        let snap = self.store.snapshot();
        let items: Vec<ContentItem> = snap.scan_as(Namespace::Contents, "")?;
        let mut fetched = None;
        if !items.iter().any(|i| bare.matches(i)) {
            let now = self.now();
            let cached = snap.read_as::<KeywordAssociation>(Namespace::KeywordCategoryCache, &keyword)?;
            let fresh = cached.is_some_and(|a| a.expires_at.is_none_or(|e| e > now));
            if !fresh {
                fetched = Some(self.fetch_on_demand(&keyword).await?);
            }
        }

        let mut query = query.clone();
        if query.limit.is_none() {
            query.limit = Some(self.config.magazine.search_limit);
        }
        let items: Vec<ContentItem> = self.store.snapshot().scan_as(Namespace::Contents, "")?;
        let hits = magazine::search(&items, &query)?;
        if let Some(u) = user {
            self.store.transact(|tx| self.emit(tx, u, EventKind::Search, &keyword))?;
        }
        Ok(SearchOutcome { items: hits, fetched })
    }

    /// Re-ingests every enabled source and remembers whether `keyword`
    /// turned up, and in which categories.
    pub async fn fetch_on_demand(&self, keyword: &str) -> Result<IngestReport> {
        let reports = self.ingest_all().await?;
        let report = IngestReport::merge(&reports, "on-demand");
        let bare = SearchQuery::new(keyword);
        let items: Vec<ContentItem> = self.store.snapshot().scan_as(Namespace::Contents, "")?;
        let categories: BTreeSet<String> = items
            .iter()
            .filter(|i| bare.matches(i))
            .map(|i| i.category.clone())
            .collect();
        let now = self.now();
        let found = !categories.is_empty();
        let association = KeywordAssociation {
            keyword: keyword.to_string(),
            categories: categories.into_iter().collect(),
            found,
            checked_at: now,
            expires_at: (!found).then(|| now + Duration::hours(self.config.magazine.negative_cache_hours)),
        };
        self.store.transact(|tx| {
            tx.put_as(Namespace::KeywordCategoryCache, keyword, &association)?;
            Ok::<_, EngineError>(())
        })?;
        Ok(report)
    }

    /// Saves an item; saving it again returns the existing record.
    pub fn save(&self, user: &str, content_id: &str) -> Result<SavedItem> {
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            load_content(tx, content_id)?;
            let key = pair_key(user, content_id);
            if let Some(existing) = tx.read_as::<SavedItem>(Namespace::Saved, &key)? {
                return Ok(existing);
            }
            self.emit(tx, user, EventKind::Save, content_id)?;
            tx.read_as::<SavedItem>(Namespace::Saved, &key)?
                .ok_or_else(|| EngineError::Internal("save event did not store the item".into()))
        })
    }

    /// `false` when the item was not saved.
    pub fn unsave(&self, user: &str, content_id: &str) -> Result<bool> {
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            if !tx.contains(Namespace::Saved, &pair_key(user, content_id)) {
                return Ok(false);
            }
            self.emit(tx, user, EventKind::Unsave, content_id)?;
            Ok(true)
        })
    }

    pub fn saved(&self, user: &str, sort: SavedSort, filter: &ItemFilter) -> Result<Vec<SavedEntry>> {
        let snap = self.store.snapshot();
        load_profile(&snap, user)?;
        let mut entries = Vec::new();
        for saved in snap.scan_as::<SavedItem>(Namespace::Saved, &user_prefix(user))? {
            // items are never deleted, but a dump could be edited by hand
            let Some(content) = snap.read_as::<ContentItem>(Namespace::Contents, &saved.content_id)? else {
                continue;
            };
            entries.push(SavedEntry { saved, content });
        }
        Ok(magazine::list_saved(entries, sort, filter)?)
    }

    /// Stores a rating. Repeating the current rating changes nothing.
    pub fn rate(&self, user: &str, content_id: &str, value: u8) -> Result<Rating> {
        Rating::new(user, content_id, value, self.now())?;
        self.store.transact(|tx| {
            load_profile(tx, user)?;
            load_content(tx, content_id)?;
            let key = pair_key(user, content_id);
            if let Some(existing) = tx.read_as::<Rating>(Namespace::Ratings, &key)? {
                if existing.value == value {
                    return Ok(existing);
                }
            }
            self.emit(tx, user, EventKind::Rate(value), content_id)?;
            tx.read_as::<Rating>(Namespace::Ratings, &key)?
                .ok_or_else(|| EngineError::Internal("rate event did not store the rating".into()))
        })
    }

    /// Builds a share payload and logs a share (or mail) event. Nothing is
    /// sent anywhere.
    pub fn share(&self, user: &str, content_id: &str, channel: Channel) -> Result<SharePayload> {
        self.store.transact(|tx| {
            let item = load_content(tx, content_id)?;
            self.emit(tx, user, channel.event_kind(), content_id)?;
            Ok(magazine::share_payload(&item, channel))
        })
    }

    // ---- recommendations ----

    pub fn model(&self) -> Result<Option<LsiModel>> {
        let blob: Option<DecompositionBlob> = self.store.snapshot().read_as(Namespace::DecompositionBlobs, MODEL_KEY)?;
        Ok(blob.map(LsiModel::from_blob).transpose()?)
    }

    /// Recomputes the model from all current interests; returns the new
    /// version.
    pub fn rebuild(&self) -> Result<u64> {
        let _exclusive = self.rebuild_lock.lock().expect("rebuild lock poisoned");
        let snap = self.store.snapshot();
        let profiles = all_profiles(&snap)?;
        let previous = snap
            .read_as::<DecompositionBlob>(Namespace::DecompositionBlobs, MODEL_KEY)?
            .map_or(0, |b| b.version);
        let model = recommender::rebuild(&profiles, &self.config.recommender, previous)?;
        self.store.transact(|tx| {
            tx.put_as(Namespace::DecompositionBlobs, MODEL_KEY, &model.to_blob())?;
            Ok::<_, EngineError>(())
        })?;
        tracing::info!(version = model.version, users = model.users.len(), keywords = model.keywords.len(), "model rebuilt");
        Ok(model.version)
    }

    /// Keyword recommendations for `user`. Without a model that knows the
    /// user this fails with "rebuild required", unless `rebuild_if_needed`
    /// is set.
    pub fn recommendations(&self, user: &str, rebuild_if_needed: bool) -> Result<Vec<Recommendation>> {
        self.user(user)?;
        let mut model = self.model()?;
        let known = model.as_ref().is_some_and(|m| m.users.iter().any(|u| u == user));
        if !known {
            if !rebuild_if_needed {
                return Err(EngineError::Unavailable("rebuild required".into()));
            }
            match self.rebuild() {
                Ok(_) => model = self.model()?,
                Err(EngineError::Unavailable(_)) => return Ok(Vec::new()),
                Err(e) => return Err(e),
            }
        }
        let model = model.ok_or_else(|| EngineError::Unavailable("rebuild required".into()))?;
        let profiles = all_profiles(&self.store.snapshot())?;
        Ok(recommender::recommend_keywords(
            user,
            &profiles,
            &model,
            &self.config.recommender,
            &self.config.interest,
        )?)
    }

    // ---- sources and ingestion ----

    /// Registers a source. Re-adding an identical one is a no-op; a
    /// different source under an existing id is a conflict.
    pub fn add_source(&self, source: FeedSource) -> Result<FeedSource> {
        source.validate(&self.config.taxonomy)?;
        self.store.transact(|tx| {
            if let Some(existing) = tx.read_as::<FeedSource>(Namespace::Sources, &source.id)? {
                let same = existing.url == source.url && existing.category == source.category;
                return if same {
                    Ok(existing)
                } else {
                    Err(EngineError::Conflict(format!("source {:?} already exists", source.id)))
                };
            }
            tx.put_as(Namespace::Sources, &source.id, &source)?;
            Ok(source.clone())
        })
    }

    pub fn sources(&self) -> Result<Vec<FeedSource>> {
        Ok(self.store.snapshot().scan_as(Namespace::Sources, "")?)
    }

    pub fn source(&self, id: &str) -> Result<FeedSource> {
        self.store
            .snapshot()
            .read_as(Namespace::Sources, id)?
            .ok_or_else(|| EngineError::NotFound(format!("unknown source {id:?}")))
    }

    pub fn disable_source(&self, id: &str) -> Result<FeedSource> {
        self.store.transact(|tx| {
            let mut source: FeedSource = tx
                .read_as(Namespace::Sources, id)?
                .ok_or_else(|| EngineError::NotFound(format!("unknown source {id:?}")))?;
            if source.enabled {
                source.enabled = false;
                tx.put_as(Namespace::Sources, id, &source)?;
            }
            Ok(source)
        })
    }

    pub async fn ingest_source(&self, id: &str) -> Result<IngestReport> {
        let source = self.source(id)?;
        let ctx = self.ingest_context();
        Ok(ingest::ingest_source(&self.store, &self.fetcher, &source, &ctx, self.now()).await)
    }

    /// Ingests all enabled sources concurrently; one report per source.
    pub async fn ingest_all(&self) -> Result<Vec<IngestReport>> {
        let sources: Vec<FeedSource> = self.sources()?.into_iter().filter(|s| s.enabled).collect();
        let ctx = self.ingest_context();
        let now = self.now();
        let runs = sources
            .iter()
            .map(|s| ingest::ingest_source(&self.store, &self.fetcher, s, &ctx, now));
        Ok(futures::future::join_all(runs).await)
    }

    /// Ingests a feed document that was obtained some other way.
    pub fn ingest_document(&self, source_id: &str, xml: &str) -> Result<IngestReport> {
        let source = self.source(source_id)?;
        let ctx = self.ingest_context();
        Ok(ingest::ingest_document(&self.store, xml, &source, &ctx, self.now()))
    }

    // ---- fixtures ----

    pub fn dump(&self) -> Dump {
        self.store.dump()
    }

    pub fn load(&self, dump: Dump) -> Result<()> {
        Ok(self.store.load(dump)?)
    }
}

/// Whether an identical event is already in the user's log. The log is
/// time-ordered, so only its tail needs checking.
fn is_logged(tx: &Tx<'_>, event: &BehaviorEvent) -> bool {
    tx.events(&event.user_id)
        .iter()
        .rev()
        .take_while(|l| l.event.at >= event.at)
        .any(|l| &l.event == event)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn t0() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 5, 1, 12, 0, 0).unwrap()
    }

    fn engine() -> (Engine, Arc<FixedClock>) {
        let clock = Arc::new(FixedClock::new(t0()));
        let engine = Engine::with_clock(Store::in_memory(), EngineConfig::default(), clock.clone());
        (engine, clock)
    }

    const FEED: &str = r#"<rss><channel>
        <item><title>Sachin Tendulkar scores again</title><link>https://news.example/1</link>
          <description>&lt;p&gt;A cricket story&lt;/p&gt;</description>
          <pubDate>Wed, 01 May 2024 10:00:00 GMT</pubDate></item>
        <item><title>New smartphone launched</title><link>https://news.example/2</link>
          <description>An android phone</description>
          <pubDate>Wed, 01 May 2024 09:00:00 GMT</pubDate></item>
    </channel></rss>"#;

    fn seeded() -> (Engine, Arc<FixedClock>, String) {
        let (e, c) = engine();
        e.add_source(FeedSource::new("news", "https://news.example/rss", "sports", &e.config().taxonomy).unwrap())
            .unwrap();
        let report = e.ingest_document("news", FEED).unwrap();
        assert_eq!(report.new, 2);
        let user = e.register("reader@example.com").unwrap().user_id;
        (e, c, user)
    }

    fn cricket_item(e: &Engine) -> String {
        let snap = e.store().snapshot();
        let items: Vec<ContentItem> = snap.scan_as(Namespace::Contents, "").unwrap();
        items.into_iter().find(|i| i.keywords.contains("cricket")).unwrap().id
    }

    #[test]
    fn registration_and_sessions() {
        let (e, clock) = engine();
        let r = e.register("Reader@Example.com").unwrap();
        assert_eq!(r.user_id, user_id_for("reader@example.com"));
        assert!(matches!(e.register("reader@example.com"), Err(EngineError::Conflict(_))));
        assert!(matches!(e.register("nope"), Err(EngineError::BadRequest(_))));
        assert_eq!(e.authenticate(&r.token).unwrap().user_id, r.user_id);
        assert!(matches!(e.authenticate("bogus"), Err(EngineError::Unauthorized)));
        clock.advance(Duration::hours(e.config().session_ttl_hours));
        assert!(matches!(e.authenticate(&r.token), Err(EngineError::Unauthorized)));
        let s = e.new_session(&r.user_id).unwrap();
        assert_ne!(s.token, r.token);
    }

    #[test]
    fn cold_start_then_magazine() {
        let (e, _, user) = seeded();
        assert!(e.magazine(&user, None).unwrap().cold_start);
        e.set_interest(&user, "cricket", 0.8, None).unwrap();
        let m = e.magazine(&user, None).unwrap();
        assert!(!m.cold_start);
        assert_eq!(m.total_items, 1);
        assert_eq!(m.pages[0].slots[0].matched_keywords, ["cricket"]);
    }

    #[test]
    fn events_are_idempotent_and_ordered() {
        let (e, clock, user) = seeded();
        let item = cricket_item(&e);
        e.set_interest(&user, "cricket", 0.5, None).unwrap();
        let ev = BehaviorEvent {
            user_id: user.clone(),
            kind: EventKind::Save,
            target: item.clone(),
            at: t0(),
        };
        let out = e.record_event(ev.clone()).unwrap();
        assert_eq!(out.seq, 1);
        let cricket = out.changes.iter().find(|c| c.keyword == "cricket").unwrap();
        assert_eq!(cricket.new_weight, 0.65);
        assert!(matches!(e.record_event(ev.clone()), Err(EngineError::Conflict(_))));
        let older = BehaviorEvent {
            at: t0() - Duration::hours(1),
            kind: EventKind::Click,
            ..ev.clone()
        };
        assert!(matches!(e.record_event(older), Err(EngineError::Contract(_))));
        let unknown = BehaviorEvent {
            target: "missing".into(),
            ..ev
        };
        assert!(matches!(e.record_event(unknown), Err(EngineError::NotFound(_))));
        // the save event also created the saved item
        assert_eq!(e.saved(&user, SavedSort::SavedAt, &ItemFilter::default()).unwrap().len(), 1);
        clock.advance(Duration::minutes(1));
        assert_eq!(e.save(&user, &item).unwrap().saved_at, t0());
        assert_eq!(e.events(&user).len(), 1);
    }

    #[test]
    fn saved_rating_and_share() {
        let (e, _, user) = seeded();
        let item = cricket_item(&e);
        e.save(&user, &item).unwrap();
        e.save(&user, &item).unwrap();
        assert_eq!(e.events(&user).len(), 1);
        assert!(matches!(e.save(&user, "nope"), Err(EngineError::NotFound(_))));
        assert!(matches!(e.rate(&user, &item, 0), Err(EngineError::Contract(_))));
        assert_eq!(e.rate(&user, &item, 5).unwrap().value, 5);
        assert_eq!(e.rate(&user, &item, 2).unwrap().value, 2);
        assert_eq!(e.saved(&user, SavedSort::SavedAt, &ItemFilter::default()).unwrap()[0].saved.rating, Some(2));
        let p = e.share(&user, &item, Channel::Mail).unwrap();
        assert_eq!(p.channel, Channel::Mail);
        assert_eq!(e.events(&user).last().unwrap().event.kind, EventKind::Mail);
        assert!(e.unsave(&user, &item).unwrap());
        assert!(!e.unsave(&user, &item).unwrap());
        assert_eq!(e.progress(&user).unwrap().event_count, 5);
    }

    #[tokio::test]
    async fn search_emits_event_and_caches_misses() {
        let (e, clock, user) = seeded();
        let out = e.search(&SearchQuery::new("Cricket"), Some(&user)).await.unwrap();
        assert_eq!(out.items.len(), 1);
        assert!(out.fetched.is_none());
        assert_eq!(e.interests(&user).unwrap()[0].keyword, "cricket");

        // the only source is unreachable (no network in tests), so the miss is remembered
        e.disable_source("news").unwrap();
        let miss = e.search(&SearchQuery::new("curling"), None).await.unwrap();
        assert!(miss.items.is_empty());
        assert!(miss.fetched.is_some());
        let again = e.search(&SearchQuery::new("curling"), None).await.unwrap();
        assert!(again.fetched.is_none());
        clock.advance(Duration::hours(25));
        assert!(e.search(&SearchQuery::new("curling"), None).await.unwrap().fetched.is_some());
    }

    #[test]
    fn recommendations_need_a_model() {
        let (e, _, a) = seeded();
        let b = e.register("other@example.com").unwrap().user_id;
        assert!(matches!(e.recommendations(&a, false), Err(EngineError::Unavailable(_))));
        e.set_interests(&a, &[
            InterestUpdate { keyword: "cricket".into(), weight: 0.9, visibility: None },
            InterestUpdate { keyword: "tech".into(), weight: 0.8, visibility: None },
        ])
        .unwrap();
        e.set_interests(&b, &[
            InterestUpdate { keyword: "cricket".into(), weight: 0.9, visibility: None },
            InterestUpdate { keyword: "tech".into(), weight: 0.8, visibility: None },
            InterestUpdate { keyword: "sachin tendulkar".into(), weight: 0.7, visibility: None },
        ])
        .unwrap();
        assert_eq!(e.rebuild().unwrap(), 1);
        let recs = e.recommendations(&a, false).unwrap();
        assert_eq!(recs[0].keyword, "sachin tendulkar");
        let c = e.register("third@example.com").unwrap().user_id;
        assert!(e.recommendations(&c, false).is_err());
        assert!(e.recommendations(&c, true).unwrap().is_empty());
        assert_eq!(e.model().unwrap().unwrap().version, 2);
    }

    #[test]
    fn follow_and_visibility() {
        let (e, _, a) = seeded();
        let b = e.register("other@example.com").unwrap().user_id;
        e.set_interest(&b, "golf", 0.9, Some(Visibility::Private)).unwrap();
        e.set_interest(&b, "tennis", 0.8, None).unwrap();
        e.set_visibility(&b, Some(ListVisibility::Partial), &BTreeMap::new()).unwrap();
        assert_eq!(e.visible_interests(&b, &a).unwrap(), [("tennis".to_string(), 0.8)]);
        assert!(matches!(
            e.follow(&a, &b, &FollowSelection::Keywords(vec!["golf".into()])),
            Err(EngineError::Forbidden(_))
        ));
        let got = e.follow(&a, &b, &FollowSelection::All).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].origin, Origin::Followed);
    }

    #[test]
    fn decay_over_all_users() {
        let (e, clock, user) = seeded();
        e.set_interest(&user, "golf", 0.5, None).unwrap();
        clock.advance(Duration::days(10));
        let reports = e.decay_and_flush_all().unwrap();
        assert_eq!(reports[&user].decayed, 1);
        let w = e.interests(&user).unwrap()[0].weight;
        assert!((w - 0.452_191_037_504_402_245).abs() < 1e-12);
    }

    #[test]
    fn dump_load_roundtrip() {
        let (e, _, user) = seeded();
        e.set_interest(&user, "cricket", 0.7, None).unwrap();
        let dump = e.dump();
        let (f, _) = engine();
        f.load(dump.clone()).unwrap();
        assert_eq!(f.dump(), dump);
        assert_eq!(f.magazine(&user, None).unwrap(), e.magazine(&user, None).unwrap());
    }
}
