use std::collections::BTreeMap;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::IntoResponse;
use axum::Json;
use emag_core::engine::{EventOutcome, InterestUpdate, InterestView, Progress, Registration, UserSummary};
use emag_core::ingest::{ContentItem, FeedSource, IngestReport};
use emag_core::interest::{BehaviorEvent, FlushReport, ProfileDocument};
use emag_core::magazine::{ItemFilter, Rating, SavedItem, SavedSort, SearchQuery, SharePayload};
use emag_core::recommender::Recommendation;
use emag_core::store::Dump;
use emag_core::EngineError;
use serde_json::json;

use crate::auth::Principal;
use crate::error::{ApiError, ApiJson, ApiPath, ApiQuery, ApiResult};
use crate::views::*;
use crate::AppState;

pub async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

// ---- users ----

pub async fn register(
    State(state): State<AppState>,
    ApiJson(body): ApiJson<RegisterRequest>,
) -> ApiResult<(StatusCode, Json<Registration>)> {
    Ok((StatusCode::CREATED, Json(state.engine.register(&body.email)?)))
}

pub async fn user_show(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
) -> ApiResult<Json<UserSummary>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.user_show(&id)?))
}

pub async fn profile_import(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiJson(doc): ApiJson<ProfileDocument>,
) -> ApiResult<Json<Vec<InterestView>>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.import_profile(&id, &doc)?))
}

pub async fn progress(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
) -> ApiResult<Json<Progress>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.progress(&id)?))
}

// ---- magazine, search, content ----

pub async fn magazine(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiQuery(params): ApiQuery<PageParams>,
) -> ApiResult<Json<MagazineView>> {
    who.require_user(&id)?;
    let page = params.page.unwrap_or(1);
    if page == 0 {
        return Err(ApiError::bad_request("pages are numbered from 1"));
    }
    let page_size = params.page_size.unwrap_or(state.engine.config().magazine.page_size);
    let magazine = state.engine.magazine(&id, Some(page_size))?;
    let total_pages = magazine.pages.len();
    if page > total_pages.max(1) {
        return Err(EngineError::NotFound(format!("page {page} of {total_pages}")).into());
    }
    let snap = state.engine.store().snapshot();
    let (slots, generated_at) = match magazine.pages.get(page - 1) {
        Some(p) => {
            let mut slots = Vec::with_capacity(p.slots.len());
            for s in &p.slots {
                let item: ContentItem = snap
                    .get_as(emag_core::store::Namespace::Contents, &s.content_id)
                    .map_err(EngineError::from)?
                    .ok_or_else(|| EngineError::Internal(format!("slot refers to missing {}", s.content_id)))?;
                slots.push(MagazineSlotView {
                    content_id: s.content_id.clone(),
                    score: s.score,
                    matched_keywords: s.matched_keywords.clone(),
                    content: ContentSummary::from(&item),
                });
            }
            (slots, p.generated_at)
        }
        None => (Vec::new(), state.engine.now()),
    };
    Ok(Json(MagazineView {
        user_id: id,
        page,
        page_size,
        total_pages,
        total_items: magazine.total_items,
        cold_start: magazine.cold_start,
        generated_at,
        slots,
    }))
}

fn item_filter(params: &FilterParams) -> ItemFilter {
    ItemFilter {
        media: params.media,
        from: params.from,
        to: params.to,
        source_id: params.source.clone(),
    }
}

/// Anonymous searches are allowed; an authenticated reader's search is
/// also recorded as a behavior event.
pub async fn search(
    State(state): State<AppState>,
    who: Option<Principal>,
    ApiQuery(params): ApiQuery<FilterParams>,
) -> ApiResult<Json<SearchView>> {
    let keyword = params
        .keyword
        .clone()
        .ok_or_else(|| ApiError::bad_request("missing query parameter `keyword`"))?;
    let query = SearchQuery {
        keyword,
        filter: item_filter(&params),
        limit: params.limit,
    };
    let user = who.as_ref().and_then(Principal::user_id);
    let outcome = state.engine.search(&query, user).await?;
    Ok(Json(SearchView {
        items: outcome.items.iter().map(ContentSummary::from).collect(),
        fetched: outcome.fetched,
    }))
}

pub async fn content(
    State(state): State<AppState>,
    _who: Principal,
    ApiPath(id): ApiPath<String>,
) -> ApiResult<Json<ContentItem>> {
    Ok(Json(state.engine.content(&id)?))
}

// ---- events ----

pub async fn post_event(
    State(state): State<AppState>,
    who: Principal,
    ApiJson(event): ApiJson<BehaviorEvent>,
) -> ApiResult<(StatusCode, Json<EventOutcome>)> {
    who.require_user(&event.user_id)?;
    Ok((StatusCode::CREATED, Json(state.engine.record_event(event)?)))
}

// ---- interests ----

pub async fn interests(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
) -> ApiResult<Json<Vec<InterestView>>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.interests(&id)?))
}

pub async fn put_interests(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiJson(updates): ApiJson<Vec<InterestUpdate>>,
) -> ApiResult<Json<Vec<InterestView>>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.set_interests(&id, &updates)?))
}

pub async fn clear_interests(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
) -> ApiResult<Json<Removed>> {
    who.require_user(&id)?;
    Ok(Json(Removed {
        removed: state.engine.clear_interests(&id)?,
    }))
}

pub async fn interest(
    State(state): State<AppState>,
    who: Principal,
    ApiPath((id, keyword)): ApiPath<(String, String)>,
) -> ApiResult<Json<InterestView>> {
    who.require_user(&id)?;
    let wanted = emag_core::text::normalize_keyword(&keyword).unwrap_or_default();
    state
        .engine
        .interests(&id)?
        .into_iter()
        .find(|v| v.keyword == wanted)
        .map(Json)
        .ok_or_else(|| EngineError::NotFound(format!("{id} has no interest {wanted:?}")).into())
}

pub async fn put_interest(
    State(state): State<AppState>,
    who: Principal,
    ApiPath((id, keyword)): ApiPath<(String, String)>,
    ApiJson(body): ApiJson<WeightRequest>,
) -> ApiResult<Json<InterestView>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.set_interest(&id, &keyword, body.weight, body.visibility)?))
}

/// Succeeds whether or not the keyword was there.
pub async fn delete_interest(
    State(state): State<AppState>,
    who: Principal,
    ApiPath((id, keyword)): ApiPath<(String, String)>,
) -> ApiResult<StatusCode> {
    who.require_user(&id)?;
    state.engine.remove_interest(&id, &keyword)?;
    Ok(StatusCode::NO_CONTENT)
}

pub async fn put_visibility(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiJson(body): ApiJson<VisibilityRequest>,
) -> ApiResult<Json<VisibilityView>> {
    who.require_user(&id)?;
    let profile = state.engine.set_visibility(&id, body.list, &body.keywords)?;
    Ok(Json(VisibilityView {
        user_id: profile.user_id,
        list_visibility: profile.list_visibility,
    }))
}

/// The owner's list as the viewer is allowed to see it. Readers can only
/// look as themselves.
pub async fn visible_interests(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(owner): ApiPath<String>,
    ApiQuery(params): ApiQuery<ViewerParams>,
) -> ApiResult<Json<Vec<VisibleInterest>>> {
    let viewer = match (&who, params.viewer) {
        (Principal::User(s), None) => s.user_id.clone(),
        (_, Some(v)) => {
            who.require_user(&v)?;
            v
        }
        (Principal::Admin, None) => return Err(ApiError::bad_request("missing query parameter `viewer`")),
    };
    let list = state.engine.visible_interests(&owner, &viewer)?;
    Ok(Json(
        list.into_iter()
            .map(|(keyword, weight)| VisibleInterest { keyword, weight })
            .collect(),
    ))
}

pub async fn follow(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiJson(body): ApiJson<FollowRequest>,
) -> ApiResult<Json<Vec<InterestView>>> {
    who.require_user(&id)?;
    Ok(Json(state.engine.follow(&id, &body.owner, &body.keywords)?))
}

// ---- recommendations ----

/// Rebuilds the model first when it does not know the user yet, unless
/// `rebuild=false` is given.
pub async fn recommendations(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiQuery(params): ApiQuery<RecommendParams>,
) -> ApiResult<Json<Vec<Recommendation>>> {
    who.require_user(&id)?;
    let rebuild = params.rebuild.unwrap_or(true);
    let engine = state.engine.clone();
    let recs = tokio::task::spawn_blocking(move || engine.recommendations(&id, rebuild))
        .await
        .map_err(|e| EngineError::Internal(e.to_string()))??;
    Ok(Json(recs))
}

// ---- saved items, ratings, sharing ----

pub async fn save(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiJson(body): ApiJson<SaveRequest>,
) -> ApiResult<(StatusCode, Json<SavedItem>)> {
    who.require_user(&id)?;
    Ok((StatusCode::CREATED, Json(state.engine.save(&id, &body.content_id)?)))
}

pub async fn saved(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
    ApiQuery(params): ApiQuery<FilterParams>,
) -> ApiResult<Json<Vec<SavedView>>> {
    who.require_user(&id)?;
    let sort = match params.sort.as_deref() {
        None => SavedSort::default(),
        Some(s) => s.parse::<SavedSort>().map_err(ApiError::bad_request)?,
    };
    let entries = state.engine.saved(&id, sort, &item_filter(&params))?;
    Ok(Json(entries.iter().map(SavedView::from).collect()))
}

pub async fn unsave(
    State(state): State<AppState>,
    who: Principal,
    ApiPath((id, content_id)): ApiPath<(String, String)>,
) -> ApiResult<StatusCode> {
    who.require_user(&id)?;
    state.engine.unsave(&id, &content_id)?;
    Ok(StatusCode::NO_CONTENT)
}

fn session_user(who: &Principal) -> ApiResult<&str> {
    who.user_id()
        .ok_or_else(|| EngineError::Forbidden("this action needs a reader token".into()).into())
}

pub async fn rate(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(content_id): ApiPath<String>,
    ApiJson(body): ApiJson<RatingRequest>,
) -> ApiResult<Json<Rating>> {
    let user = session_user(&who)?;
    let value = u8::try_from(body.value)
        .ok()
        .filter(|v| (1..=5).contains(v))
        .ok_or_else(|| EngineError::Contract(format!("rating must be between 1 and 5, got {}", body.value)))?;
    Ok(Json(state.engine.rate(user, &content_id, value)?))
}

pub async fn share(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(content_id): ApiPath<String>,
    ApiJson(body): ApiJson<ShareRequest>,
) -> ApiResult<Json<SharePayload>> {
    let user = session_user(&who)?;
    Ok(Json(state.engine.share(user, &content_id, body.channel)?))
}

// ---- operator routes ----

pub async fn sources(State(state): State<AppState>, who: Principal) -> ApiResult<Json<Vec<FeedSource>>> {
    who.require_admin()?;
    Ok(Json(state.engine.sources()?))
}

pub async fn add_source(
    State(state): State<AppState>,
    who: Principal,
    ApiJson(body): ApiJson<SourceRequest>,
) -> ApiResult<(StatusCode, Json<FeedSource>)> {
    who.require_admin()?;
    let source = FeedSource::new(&body.id, &body.url, &body.category, &state.engine.config().taxonomy)
        .map_err(EngineError::from)?;
    Ok((StatusCode::CREATED, Json(state.engine.add_source(source)?)))
}

pub async fn disable_source(
    State(state): State<AppState>,
    who: Principal,
    ApiPath(id): ApiPath<String>,
) -> ApiResult<Json<FeedSource>> {
    who.require_admin()?;
    Ok(Json(state.engine.disable_source(&id)?))
}

pub async fn ingest(
    State(state): State<AppState>,
    who: Principal,
    ApiJson(body): ApiJson<IngestRequest>,
) -> ApiResult<Json<Vec<IngestReport>>> {
    who.require_admin()?;
    let reports = match body.source {
        Some(id) => vec![state.engine.ingest_source(&id).await?],
        None => state.engine.ingest_all().await?,
    };
    Ok(Json(reports))
}

pub async fn decay_flush(
    State(state): State<AppState>,
    who: Principal,
) -> ApiResult<Json<BTreeMap<String, FlushReport>>> {
    who.require_admin()?;
    Ok(Json(state.engine.decay_and_flush_all()?))
}

pub async fn rebuild(State(state): State<AppState>, who: Principal) -> ApiResult<Json<Rebuilt>> {
    who.require_admin()?;
    let engine = state.engine.clone();
    let version = tokio::task::spawn_blocking(move || engine.rebuild())
        .await
        .map_err(|e| EngineError::Internal(e.to_string()))??;
    Ok(Json(Rebuilt { version }))
}

pub async fn dump(State(state): State<AppState>, who: Principal) -> ApiResult<Json<Dump>> {
    who.require_admin()?;
    Ok(Json(state.engine.dump()))
}

pub async fn load(
    State(state): State<AppState>,
    who: Principal,
    ApiJson(dump): ApiJson<Dump>,
) -> ApiResult<impl IntoResponse> {
    who.require_admin()?;
    state.engine.load(dump)?;
    Ok(StatusCode::NO_CONTENT)
}
