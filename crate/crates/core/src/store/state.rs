use std::collections::{BTreeMap, BTreeSet};
use std::ops::Bound;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{LoggedEvent, Namespace, StoreError};
use crate::engine::{KeywordAssociation, Session};
use crate::ingest::{ContentItem, FeedSource};
use crate::interest::{BehaviorEvent, InterestEntry, UserProfile};
use crate::magazine::{Rating, SavedItem};
use crate::recommender::DecompositionBlob;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub(crate) enum Op {
    Put { ns: Namespace, key: String, value: Value },
    Delete { ns: Namespace, key: String },
    Event { user: String, seq: u64, event: BehaviorEvent },
}

/// Portable image of the whole store. The category index is derived and
/// therefore not part of it.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dump {
    pub namespaces: BTreeMap<Namespace, BTreeMap<String, Value>>,
    pub events: BTreeMap<String, Vec<LoggedEvent>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub(crate) struct State {
    namespaces: BTreeMap<Namespace, BTreeMap<String, Value>>,
    events: BTreeMap<String, Vec<LoggedEvent>>,
}

/// Checks that `value` has the record shape its namespace stores.
pub(crate) fn validate(ns: Namespace, value: &Value) -> Result<(), StoreError> {
    fn check<T: serde::de::DeserializeOwned>(ns: Namespace, value: &Value) -> Result<(), StoreError> {
        T::deserialize(value).map(drop).map_err(|e| StoreError::Schema {
            ns,
            message: e.to_string(),
        })
    }
    match ns {
        Namespace::Sources => check::<FeedSource>(ns, value),
        Namespace::Contents => check::<ContentItem>(ns, value),
        Namespace::ContentsByCategory => Err(StoreError::DerivedNamespace(ns)),
        Namespace::Users => check::<UserProfile>(ns, value),
        Namespace::Interests => check::<InterestEntry>(ns, value),
        Namespace::Saved => check::<SavedItem>(ns, value),
        Namespace::Ratings => check::<Rating>(ns, value),
        Namespace::DecompositionBlobs => check::<DecompositionBlob>(ns, value),
        Namespace::KeywordCategoryCache => check::<KeywordAssociation>(ns, value),
        Namespace::Sessions => check::<Session>(ns, value),
        Namespace::Meta => Ok(()),
    }
}

fn category_of(value: &Value) -> Option<&str> {
    value.get("category").and_then(Value::as_str)
}

impl State {
    pub fn get(&self, ns: Namespace, key: &str) -> Option<&Value> {
        self.namespaces.get(&ns)?.get(key)
    }

    pub fn range<'a>(&'a self, ns: Namespace, prefix: &'a str) -> impl Iterator<Item = (&'a String, &'a Value)> + 'a {
        self.namespaces
            .get(&ns)
            .into_iter()
            .flat_map(move |m| m.range::<str, _>((Bound::Included(prefix), Bound::Unbounded)))
            .take_while(move |(k, _)| k.starts_with(prefix))
    }

    pub fn len(&self, ns: Namespace) -> usize {
        self.namespaces.get(&ns).map_or(0, BTreeMap::len)
    }

    pub fn events(&self, user: &str) -> &[LoggedEvent] {
        self.events.get(user).map_or(&[], Vec::as_slice)
    }

    pub fn event_users(&self) -> impl Iterator<Item = &String> {
        self.events.keys()
    }

    pub fn apply(&mut self, op: Op) {
        match op {
            Op::Put { ns, key, value } => {
                if ns == Namespace::Contents {
                    let old = self.get(ns, &key).and_then(category_of).map(str::to_string);
                    let new = category_of(&value).map(str::to_string);
                    if old != new {
                        if let Some(old) = old {
                            self.unindex(&old, &key);
                        }
                        if let Some(new) = new {
                            self.index(&new, &key);
                        }
                    }
                }
                self.namespaces.entry(ns).or_default().insert(key, value);
            }
            Op::Delete { ns, key } => {
                let removed = self.namespaces.get_mut(&ns).and_then(|m| m.remove(&key));
                if ns == Namespace::Contents {
                    if let Some(cat) = removed.as_ref().and_then(category_of) {
                        let cat = cat.to_string();
                        self.unindex(&cat, &key);
                    }
                }
            }
            Op::Event { user, seq, event } => {
                self.events.entry(user).or_default().push(LoggedEvent { seq, event });
            }
        }
    }

    fn index_ids(&self, category: &str) -> BTreeSet<String> {
        self.get(Namespace::ContentsByCategory, category)
            .and_then(|v| serde_json::from_value(v.clone()).ok())
            .unwrap_or_default()
    }

    fn index(&mut self, category: &str, id: &str) {
        let mut ids = self.index_ids(category);
        ids.insert(id.to_string());
        self.set_index(category, ids);
    }

    fn unindex(&mut self, category: &str, id: &str) {
        let mut ids = self.index_ids(category);
        ids.remove(id);
        self.set_index(category, ids);
    }

    fn set_index(&mut self, category: &str, ids: BTreeSet<String>) {
        let map = self.namespaces.entry(Namespace::ContentsByCategory).or_default();
        if ids.is_empty() {
            map.remove(category);
        } else {
            map.insert(category.to_string(), serde_json::to_value(ids).expect("string set"));
        }
    }

    pub fn to_dump(&self) -> Dump {
        let namespaces = self
            .namespaces
            .iter()
            .filter(|(ns, m)| **ns != Namespace::ContentsByCategory && !m.is_empty())
            .map(|(ns, m)| (*ns, m.clone()))
            .collect();
        Dump {
            namespaces,
            events: self.events.clone(),
        }
    }

    pub fn from_dump(dump: Dump) -> Result<Self, StoreError> {
        let mut state = State::default();
        for (ns, records) in dump.namespaces {
            if ns == Namespace::ContentsByCategory {
                continue;
            }
            for (key, value) in records {
                validate(ns, &value)?;
                state.apply(Op::Put { ns, key, value });
            }
        }
        for (user, events) in dump.events {
            let ordered = events.windows(2).all(|w| w[0].seq < w[1].seq);
            if !ordered {
                return Err(StoreError::Corrupt(format!("event log of {user} is not strictly ordered")));
            }
            state.events.insert(user, events);
        }
        Ok(state)
    }
}
