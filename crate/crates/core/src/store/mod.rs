//! Embedded, file-backed record store.
//!
//! Records are JSON values grouped into namespaces. All writes go through
//! [`Store::transact`], which holds the single writer lock, appends the
//! batch to the write-ahead log and only then publishes a new immutable
//! state. Readers take a [`Snapshot`], an `Arc` of the published state that
//! later writes never touch.
//!
//! Composite keys are `/`-joined, user id first (`user/keyword`,
//! `user/content_id`), so all records of one user form a key range.

mod state;
mod wal;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::interest::BehaviorEvent;
pub use state::Dump;
use state::{Op, State};
use wal::{Batch, Wal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Namespace {
    Sources,
    Contents,
    /// Derived index: category path → sorted content ids. Read-only.
    ContentsByCategory,
    Users,
    Interests,
    Saved,
    Ratings,
    DecompositionBlobs,
    KeywordCategoryCache,
    Sessions,
    Meta,
}

impl Namespace {
    pub const ALL: [Namespace; 11] = [
        Namespace::Sources,
        Namespace::Contents,
        Namespace::ContentsByCategory,
        Namespace::Users,
        Namespace::Interests,
        Namespace::Saved,
        Namespace::Ratings,
        Namespace::DecompositionBlobs,
        Namespace::KeywordCategoryCache,
        Namespace::Sessions,
        Namespace::Meta,
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub event: BehaviorEvent,
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("record does not fit namespace {ns:?}: {message}")]
    Schema { ns: Namespace, message: String },
    #[error("namespace {0:?} is derived and cannot be written")]
    DerivedNamespace(Namespace),
    #[error("encoding record: {0}")]
    Codec(#[from] serde_json::Error),
    #[error("corrupt store: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone)]
pub struct StoreOptions {
    /// fsync after every committed batch.
    pub sync: bool,
    /// Write a snapshot and empty the log after this many batches.
    pub compact_every: u64,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self {
            sync: true,
            compact_every: 1000,
        }
    }
}

struct Writer {
    wal: Option<Wal>,
    next_seq: u64,
    since_checkpoint: u64,
    options: StoreOptions,
}

pub struct Store {
    dir: Option<PathBuf>,
    truncated_on_open: u64,
    writer: Mutex<Writer>,
    current: RwLock<Arc<State>>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl Store {
    /// Opens (or creates) a store in `dir`, recovering from the latest
    /// snapshot and the log.
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        Self::open_with(dir, StoreOptions::default())
    }

    pub fn open_with(dir: &Path, options: StoreOptions) -> Result<Self, StoreError> {
        let (wal, recovered) = Wal::open(dir, options.sync)?;
        Ok(Self {
            dir: Some(dir.to_path_buf()),
            truncated_on_open: recovered.truncated_bytes,
            writer: Mutex::new(Writer {
                wal: Some(wal),
                next_seq: recovered.last_seq + 1,
                since_checkpoint: 0,
                options,
            }),
            current: RwLock::new(Arc::new(recovered.state)),
        })
    }

    /// A store that lives only in memory.
    pub fn in_memory() -> Self {
        Self {
            dir: None,
            truncated_on_open: 0,
            writer: Mutex::new(Writer {
                wal: None,
                next_seq: 1,
                since_checkpoint: 0,
                options: StoreOptions::default(),
            }),
            current: RwLock::new(Arc::new(State::default())),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    /// Bytes of torn log tail discarded when the store was opened.
    pub fn truncated_on_open(&self) -> u64 {
        self.truncated_on_open
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            state: self.current.read().expect("store lock poisoned").clone(),
        }
    }

    /// Runs `f` as one atomic write. Its writes become visible (and
    /// durable) together when it returns `Ok`; on `Err` nothing is written.
    pub fn transact<T, E>(&self, f: impl FnOnce(&mut Tx<'_>) -> Result<T, E>) -> Result<T, E>
    where
        E: From<StoreError>,
    {
        let mut writer = self.writer.lock().expect("store writer poisoned");
        let base = self.snapshot();
        let mut tx = Tx::new(&base.state);
        let out = f(&mut tx)?;
        let ops = tx.ops;
        if ops.is_empty() {
            return Ok(out);
        }

        let batch = Batch {
            seq: writer.next_seq,
            ops,
        };
        if let Some(wal) = writer.wal.as_mut() {
            wal.append(&batch).map_err(StoreError::from)?;
        }
        writer.next_seq += 1;
        writer.since_checkpoint += 1;
        drop(base);

        let mut current = self.current.write().expect("store lock poisoned");
        let state = Arc::make_mut(&mut current);
        for op in batch.ops {
            state.apply(op);
        }
        if writer.since_checkpoint >= writer.options.compact_every {
            let seq = writer.next_seq - 1;
            if let Some(wal) = writer.wal.as_mut() {
                // a failed checkpoint leaves the log intact, so it is not fatal
                match wal.checkpoint(state, seq) {
                    Ok(()) => writer.since_checkpoint = 0,
                    Err(e) => tracing::warn!("checkpoint failed: {e}"),
                }
            }
        }
        Ok(out)
    }

    /// Writes a snapshot and empties the log now.
    pub fn compact(&self) -> Result<(), StoreError> {
        let mut writer = self.writer.lock().expect("store writer poisoned");
        let seq = writer.next_seq - 1;
        let state = self.snapshot();
        if let Some(wal) = writer.wal.as_mut() {
            wal.checkpoint(&state.state, seq)?;
        }
        writer.since_checkpoint = 0;
        Ok(())
    }

    pub fn put(&self, ns: Namespace, key: &str, value: Value) -> Result<(), StoreError> {
        self.transact(|tx| tx.put(ns, key, value))
    }

    /// Latest committed value, `None` when absent.
    pub fn get(&self, ns: Namespace, key: &str) -> Option<Value> {
        self.snapshot().get(ns, key).cloned()
    }

    pub fn delete(&self, ns: Namespace, key: &str) -> Result<(), StoreError> {
        self.transact(|tx| tx.delete(ns, key))
    }

    pub fn append_event(&self, user: &str, event: BehaviorEvent) -> Result<u64, StoreError> {
        self.transact(|tx| tx.append_event(user, event))
    }

    pub fn dump(&self) -> Dump {
        self.snapshot().dump()
    }

    /// Replaces the whole content of the store with `dump`.
    pub fn load(&self, dump: Dump) -> Result<(), StoreError> {
        let state = State::from_dump(dump)?;
        let mut writer = self.writer.lock().expect("store writer poisoned");
        let seq = writer.next_seq;
        if let Some(wal) = writer.wal.as_mut() {
            wal.checkpoint(&state, seq)?;
        }
        writer.next_seq += 1;
        writer.since_checkpoint = 0;
        *self.current.write().expect("store lock poisoned") = Arc::new(state);
        Ok(())
    }
}

/// Read access shared by [`Snapshot`] and [`Tx`].
pub trait Reader {
    fn read(&self, ns: Namespace, key: &str) -> Option<Value>;

    /// Records whose key starts with `prefix`, in key order.
    fn scan(&self, ns: Namespace, prefix: &str) -> Vec<(String, Value)>;

    fn read_as<T: DeserializeOwned>(&self, ns: Namespace, key: &str) -> Result<Option<T>, StoreError> {
        self.read(ns, key)
            .map(|v| serde_json::from_value(v).map_err(StoreError::from))
            .transpose()
    }

    fn scan_as<T: DeserializeOwned>(&self, ns: Namespace, prefix: &str) -> Result<Vec<T>, StoreError> {
        self.scan(ns, prefix)
            .into_iter()
            .map(|(_, v)| serde_json::from_value(v).map_err(StoreError::from))
            .collect()
    }
}

impl Reader for Snapshot {
    fn read(&self, ns: Namespace, key: &str) -> Option<Value> {
        self.get(ns, key).cloned()
    }

    fn scan(&self, ns: Namespace, prefix: &str) -> Vec<(String, Value)> {
        self.scan_prefix(ns, prefix)
    }
}

impl Reader for Tx<'_> {
    fn read(&self, ns: Namespace, key: &str) -> Option<Value> {
        self.get(ns, key)
    }

    fn scan(&self, ns: Namespace, prefix: &str) -> Vec<(String, Value)> {
        self.scan_prefix(ns, prefix)
    }
}

/// Immutable view of the store at one point in time.
#[derive(Clone)]
pub struct Snapshot {
    state: Arc<State>,
}

impl Snapshot {
    pub fn get(&self, ns: Namespace, key: &str) -> Option<&Value> {
        self.state.get(ns, key)
    }

    pub fn get_as<T: DeserializeOwned>(&self, ns: Namespace, key: &str) -> Result<Option<T>, StoreError> {
        self.get(ns, key)
            .map(|v| T::deserialize(v).map_err(StoreError::from))
            .transpose()
    }

    pub fn contains(&self, ns: Namespace, key: &str) -> bool {
        self.get(ns, key).is_some()
    }

    /// Records whose key starts with `prefix`, in key order.
    pub fn scan_prefix(&self, ns: Namespace, prefix: &str) -> Vec<(String, Value)> {
        self.state
            .range(ns, prefix)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect()
    }

    pub fn scan_prefix_as<T: DeserializeOwned>(&self, ns: Namespace, prefix: &str) -> Result<Vec<(String, T)>, StoreError> {
        self.state
            .range(ns, prefix)
            .map(|(k, v)| Ok((k.clone(), T::deserialize(v)?)))
            .collect()
    }

    pub fn values_as<T: DeserializeOwned>(&self, ns: Namespace) -> Result<Vec<T>, StoreError> {
        self.state
            .range(ns, "")
            .map(|(_, v)| T::deserialize(v).map_err(StoreError::from))
            .collect()
    }

    pub fn len(&self, ns: Namespace) -> usize {
        self.state.len(ns)
    }

    pub fn is_empty(&self) -> bool {
        Namespace::ALL.iter().all(|ns| self.len(*ns) == 0) && self.state.event_users().next().is_none()
    }

    pub fn events(&self, user: &str) -> &[LoggedEvent] {
        self.state.events(user)
    }

    pub fn dump(&self) -> Dump {
        self.state.to_dump()
    }
}

/// Pending writes of one [`Store::transact`] call. Reads see the
/// committed state with this transaction's own writes layered on top.
pub struct Tx<'a> {
    base: &'a State,
    overlay: BTreeMap<(Namespace, String), Option<Value>>,
    new_events: BTreeMap<String, Vec<LoggedEvent>>,
    ops: Vec<Op>,
}

impl<'a> Tx<'a> {
    fn new(base: &'a State) -> Self {
        Self {
            base,
            overlay: BTreeMap::new(),
            new_events: BTreeMap::new(),
            ops: Vec::new(),
        }
    }

    pub fn get(&self, ns: Namespace, key: &str) -> Option<Value> {
        match self.overlay.get(&(ns, key.to_string())) {
            Some(v) => v.clone(),
            None => self.base.get(ns, key).cloned(),
        }
    }

    pub fn get_as<T: DeserializeOwned>(&self, ns: Namespace, key: &str) -> Result<Option<T>, StoreError> {
        self.get(ns, key)
            .map(|v| serde_json::from_value(v).map_err(StoreError::from))
            .transpose()
    }

    pub fn contains(&self, ns: Namespace, key: &str) -> bool {
        self.get(ns, key).is_some()
    }

    pub fn scan_prefix(&self, ns: Namespace, prefix: &str) -> Vec<(String, Value)> {
        let mut merged: BTreeMap<String, Value> = self
            .base
            .range(ns, prefix)
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for ((_, key), value) in self
            .overlay
            .range((ns, prefix.to_string())..)
            .take_while(|((n, k), _)| *n == ns && k.starts_with(prefix))
        {
            match value {
                Some(v) => merged.insert(key.clone(), v.clone()),
                None => merged.remove(key),
            };
        }
        merged.into_iter().collect()
    }

    pub fn scan_prefix_as<T: DeserializeOwned>(&self, ns: Namespace, prefix: &str) -> Result<Vec<(String, T)>, StoreError> {
        self.scan_prefix(ns, prefix)
            .into_iter()
            .map(|(k, v)| Ok((k, serde_json::from_value(v)?)))
            .collect()
    }

    pub fn put(&mut self, ns: Namespace, key: &str, value: Value) -> Result<(), StoreError> {
        state::validate(ns, &value)?;
        self.overlay.insert((ns, key.to_string()), Some(value.clone()));
        self.ops.push(Op::Put {
            ns,
            key: key.to_string(),
            value,
        });
        Ok(())
    }

    pub fn put_as<T: Serialize>(&mut self, ns: Namespace, key: &str, record: &T) -> Result<(), StoreError> {
        self.put(ns, key, serde_json::to_value(record)?)
    }

    pub fn delete(&mut self, ns: Namespace, key: &str) -> Result<(), StoreError> {
        if ns == Namespace::ContentsByCategory {
            return Err(StoreError::DerivedNamespace(ns));
        }
        self.overlay.insert((ns, key.to_string()), None);
        self.ops.push(Op::Delete {
            ns,
            key: key.to_string(),
        });
        Ok(())
    }

    /// Appends to `user`'s event log; returns the new sequence number.
    pub fn append_event(&mut self, user: &str, event: BehaviorEvent) -> Result<u64, StoreError> {
        let seq = self.last_event_seq(user) + 1;
        let logged = LoggedEvent {
            seq,
            event: event.clone(),
        };
        self.new_events.entry(user.to_string()).or_default().push(logged);
        self.ops.push(Op::Event {
            user: user.to_string(),
            seq,
            event,
        });
        Ok(seq)
    }

    fn last_event_seq(&self, user: &str) -> u64 {
        self.new_events
            .get(user)
            .and_then(|v| v.last())
            .or_else(|| self.base.events(user).last())
            .map_or(0, |e| e.seq)
    }

    /// `user`'s event log including events appended in this transaction.
    pub fn events(&self, user: &str) -> Vec<LoggedEvent> {
        let mut out = self.base.events(user).to_vec();
        if let Some(new) = self.new_events.get(user) {
            out.extend(new.iter().cloned());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn put_get_delete() {
        let store = Store::in_memory();
        store.put(Namespace::Meta, "k", json!({"a": 1})).unwrap();
        assert_eq!(store.get(Namespace::Meta, "k"), Some(json!({"a": 1})));
        assert_eq!(store.get(Namespace::Meta, "missing"), None);
        store.delete(Namespace::Meta, "k").unwrap();
        assert_eq!(store.get(Namespace::Meta, "k"), None);
    }

    #[test]
    fn schema_checked_on_put() {
        let store = Store::in_memory();
        let err = store.put(Namespace::Contents, "x", json!({"title": 3})).unwrap_err();
        assert!(matches!(err, StoreError::Schema { ns: Namespace::Contents, .. }));
        let err = store.put(Namespace::ContentsByCategory, "x", json!([])).unwrap_err();
        assert!(matches!(err, StoreError::DerivedNamespace(_)));
    }

    #[test]
    fn snapshot_isolation() {
        let store = Store::in_memory();
        let empty = store.snapshot();
        assert!(empty.is_empty());
        store.put(Namespace::Meta, "a", json!(1)).unwrap();
        let first = store.snapshot();
        store.put(Namespace::Meta, "a", json!(2)).unwrap();
        store.put(Namespace::Meta, "b", json!(3)).unwrap();
        let second = store.snapshot();
        assert!(empty.get(Namespace::Meta, "a").is_none());
        assert_eq!(first.get(Namespace::Meta, "a"), Some(&json!(1)));
        assert!(first.get(Namespace::Meta, "b").is_none());
        assert_eq!(second.get(Namespace::Meta, "a"), Some(&json!(2)));
    }

    #[test]
    fn failed_transaction_writes_nothing() {
        let store = Store::in_memory();
        let r: Result<(), StoreError> = store.transact(|tx| {
            tx.put(Namespace::Meta, "a", json!(1))?;
            Err(StoreError::Corrupt("abort".into()))
        });
        assert!(r.is_err());
        assert!(store.get(Namespace::Meta, "a").is_none());
    }

    #[test]
    fn tx_reads_its_own_writes() {
        let store = Store::in_memory();
        store.put(Namespace::Meta, "u/a", json!(1)).unwrap();
        store.put(Namespace::Meta, "u/b", json!(2)).unwrap();
        store.put(Namespace::Meta, "v/a", json!(9)).unwrap();
        store
            .transact(|tx| {
                tx.put(Namespace::Meta, "u/c", json!(3))?;
                tx.delete(Namespace::Meta, "u/a")?;
                let keys: Vec<_> = tx.scan_prefix(Namespace::Meta, "u/").into_iter().map(|(k, _)| k).collect();
                assert_eq!(keys, ["u/b", "u/c"]);
                Ok::<_, StoreError>(())
            })
            .unwrap();
    }
}
