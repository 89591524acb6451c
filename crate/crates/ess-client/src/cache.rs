//! Capacity-bounded LRU cache for object metadata. Entries are only ever
//! replaced by same-or-newer versions, so a racing stale fetch can never
//! clobber fresher metadata.

use std::collections::HashMap;

use ess_proto::clock::Timestamp;
use ess_proto::{ObjectMetadata, ObjectName};
use parking_lot::Mutex;

struct Entry {
    meta: ObjectMetadata,
    #[allow(dead_code)]
    fetched_at: Timestamp,
    last_used: u64,
}

struct Inner {
    entries: HashMap<ObjectName, Entry>,
    tick: u64,
}

pub struct MetadataCache {
    capacity: usize,
    inner: Mutex<Inner>,
}

impl MetadataCache {
    pub fn new(capacity: usize) -> MetadataCache {
        assert!(capacity > 0, "cache capacity must be positive");
        MetadataCache {
            capacity,
            inner: Mutex::new(Inner {
                entries: HashMap::new(),
                tick: 0,
            }),
        }
    }

    pub fn get(&self, name: &ObjectName) -> Option<ObjectMetadata> {
        let mut inner = self.inner.lock();
        inner.tick += 1;
        let tick = inner.tick;
        let entry = inner.entries.get_mut(name)?;
        entry.last_used = tick;
        Some(entry.meta.clone())
    }

    /// Inserts unless a strictly newer version is already cached
    /// (last-writer-wins on equal versions).
    pub fn insert(&self, meta: ObjectMetadata, now: Timestamp) {
        let mut inner = self.inner.lock();
        inner.tick += 1;
        let tick = inner.tick;
        if let Some(existing) = inner.entries.get(&meta.name) {
            if existing.meta.version > meta.version {
                return;
            }
        }
        inner.entries.insert(
            meta.name.clone(),
            Entry {
                meta,
                fetched_at: now,
                last_used: tick,
            },
        );
        if inner.entries.len() > self.capacity {
            if let Some(victim) = inner
                .entries
                .iter()
                .min_by_key(|(_, e)| e.last_used)
                .map(|(name, _)| name.clone())
            {
                inner.entries.remove(&victim);
            }
        }
    }

    /// Drops the entry; absent entries are a no-op.
    pub fn invalidate(&self, name: &ObjectName) {
        self.inner.lock().entries.remove(name);
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(name: &str, version: u64) -> ObjectMetadata {
        ObjectMetadata {
            name: ObjectName::new(name).unwrap(),
            size: 0,
            version,
            blocks: vec![],
        }
    }

    fn t(n: u64) -> Timestamp {
        Timestamp::from_nanos(n)
    }

    #[test]
    fn newer_version_wins_older_ignored() {
        let cache = MetadataCache::new(8);
        let name = ObjectName::new("a").unwrap();
        cache.insert(meta("a", 5), t(0));
        cache.insert(meta("a", 3), t(1));
        assert_eq!(cache.get(&name).unwrap().version, 5);
        cache.insert(meta("a", 6), t(2));
        assert_eq!(cache.get(&name).unwrap().version, 6);
        // Equal version: last writer wins.
        cache.insert(meta("a", 6), t(3));
        assert_eq!(cache.get(&name).unwrap().version, 6);
    }

    #[test]
    fn invalidate_absent_is_noop() {
        let cache = MetadataCache::new(8);
        cache.invalidate(&ObjectName::new("missing").unwrap());
        assert!(cache.is_empty());
    }

    #[test]
    fn lru_eviction_at_capacity() {
        let cache = MetadataCache::new(2);
        cache.insert(meta("a", 1), t(0));
        cache.insert(meta("b", 1), t(1));
        // Touch "a" so "b" is the LRU victim.
        cache.get(&ObjectName::new("a").unwrap());
        cache.insert(meta("c", 1), t(2));
        assert_eq!(cache.len(), 2);
        assert!(cache.get(&ObjectName::new("a").unwrap()).is_some());
        assert!(cache.get(&ObjectName::new("b").unwrap()).is_none());
        assert!(cache.get(&ObjectName::new("c").unwrap()).is_some());
    }
}
