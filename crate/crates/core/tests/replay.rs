//! Replaying the logged event stream rebuilds exactly the live interest state.

use std::collections::BTreeSet;
use std::sync::Arc;

use chrono::{Duration, TimeZone, Utc};
use emag_core::ingest::FeedSource;
use emag_core::interest::{replay, BehaviorEvent, EventKind, InterestEntry, UserInterests, UserProfile};
use emag_core::store::Namespace;
use emag_core::{Engine, EngineConfig, EngineError, FixedClock, Store};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FEED: &str = include_str!("fixtures/scrape/feed-01-three-items.xml");

fn random_kind(rng: &mut ChaCha8Rng) -> EventKind {
    match rng.random_range(0..8) {
        0 => EventKind::Click,
        1 => EventKind::Save,
        2 => EventKind::Unsave,
        3 => EventKind::Rate(rng.random_range(1..=5)),
        4 => EventKind::Share,
        5 => EventKind::Mail,
        6 => EventKind::Search,
        _ => EventKind::SliderSet(rng.random_range(0..=100) as f64 / 100.0),
    }
}

fn live_interests(engine: &Engine, user: &str) -> UserInterests {
    engine
        .store()
        .snapshot()
        .scan_prefix_as::<InterestEntry>(Namespace::Interests, &format!("{user}/"))
        .unwrap()
        .into_iter()
        .map(|(_, e)| (e.keyword.clone(), e))
        .collect()
}

#[test]
fn five_hundred_events_replay_to_the_live_state() {
    let start = Utc.with_ymd_and_hms(2024, 5, 7, 9, 0, 0).unwrap();
    let clock = Arc::new(FixedClock::new(start));
    let engine = Engine::with_clock(Store::in_memory(), EngineConfig::default(), clock.clone());
    let taxonomy = engine.config().taxonomy.clone();
    engine
        .add_source(FeedSource::new("desk", "https://sports.example/rss", "sports", &taxonomy).unwrap())
        .unwrap();
    engine.ingest_document("desk", FEED).unwrap();
    let items: Vec<String> = engine.store().snapshot().scan_prefix(Namespace::Contents, "").into_iter().map(|(k, _)| k).collect();
    assert_eq!(items.len(), 3);
    let keywords = ["cricket", "golf", "tennis", "sachin tendulkar", "chess"];

    let reg = engine.register("reader@example.com").unwrap();
    let user = reg.user_id;
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut at = start;
    let mut recorded = 0;
    while recorded < 500 {
        at += Duration::minutes(rng.random_range(0..90));
        let kind = random_kind(&mut rng);
        let target = if kind.targets_content() {
            items[rng.random_range(0..items.len())].clone()
        } else {
            keywords[rng.random_range(0..keywords.len())].to_string()
        };
        let event = BehaviorEvent { user_id: user.clone(), kind, target, at };
        match engine.record_event(event) {
            Ok(_) => recorded += 1,
            Err(EngineError::Conflict(_)) => {}
            Err(e) => panic!("unexpected {e:?}"),
        }
    }

    let profile = engine.user(&user).unwrap();
    let live = live_interests(&engine, &user);
    let events: Vec<BehaviorEvent> = engine.events(&user).into_iter().map(|l| l.event).collect();
    assert_eq!(events.len(), 500);
    assert_eq!(profile.event_count, 500);

    let lookup = |id: &str| -> Option<BTreeSet<String>> { engine.content(id).ok().map(|c| c.keywords) };
    let empty = UserProfile::new(&user, &profile.email, profile.created_at);
    let cfg = &engine.config().interest;
    let first = replay(empty.clone(), UserInterests::new(), &events, lookup, cfg).unwrap();
    let second = replay(empty, UserInterests::new(), &events, lookup, cfg).unwrap();

    assert_eq!(first, second);
    assert_eq!(first.1, live);
    assert_eq!(first.0, profile);
}

#[test]
fn out_of_order_and_duplicate_events_are_rejected() {
    let start = Utc.with_ymd_and_hms(2024, 5, 7, 9, 0, 0).unwrap();
    let engine = Engine::with_clock(Store::in_memory(), EngineConfig::default(), Arc::new(FixedClock::new(start)));
    let user = engine.register("a@example.com").unwrap().user_id;
    let event = |minutes: i64| BehaviorEvent {
        user_id: user.clone(),
        kind: EventKind::Search,
        target: "golf".into(),
        at: start + Duration::minutes(minutes),
    };
    engine.record_event(event(10)).unwrap();
    assert!(matches!(engine.record_event(event(10)), Err(EngineError::Conflict(_))));
    let err = engine.record_event(event(5)).unwrap_err();
    assert_eq!(err.status(), 422);
    assert_eq!(engine.user(&user).unwrap().event_count, 1);
}
