use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::mapref::entry::Entry;
use dashmap::DashMap;
use log::warn;

use crate::error::{Error, Result};

struct Slot {
    bytes: Arc<[u8]>,
    refcount: u64,
}

/// Whole-file cache keyed by path. An entry lives exactly as long as at
/// least one descriptor on this node has the file open.
pub struct FileCache {
    entries: DashMap<String, Slot>,
    bytes: AtomicU64,
    capacity: Option<u64>,
    unmatched_releases: AtomicU64,
}

impl FileCache {
    pub fn new(capacity: Option<u64>) -> FileCache {
        FileCache {
            entries: DashMap::new(),
            bytes: AtomicU64::new(0),
            capacity,
            unmatched_releases: AtomicU64::new(0),
        }
    }

    /// Takes another reference to a cached file.
    pub fn acquire(&self, path: &str) -> Option<Arc<[u8]>> {
        self.entries.get_mut(path).map(|mut s| {
            s.refcount += 1;
            Arc::clone(&s.bytes)
        })
    }

    /// Inserts freshly loaded content with one reference. If another opener
    /// got there first, its entry is shared and `content` is dropped.
    pub fn insert_or_acquire(&self, path: &str, content: Vec<u8>) -> Result<Arc<[u8]>> {
        match self.entries.entry(path.to_string()) {
            Entry::Occupied(mut o) => {
                let slot = o.get_mut();
                slot.refcount += 1;
                Ok(Arc::clone(&slot.bytes))
            }
            Entry::Vacant(v) => {
                let len = content.len() as u64;
                let total = self.bytes.fetch_add(len, Ordering::AcqRel) + len;
                if let Some(cap) = self.capacity {
                    if total > cap {
                        self.bytes.fetch_sub(len, Ordering::AcqRel);
                        return Err(Error::ResourceExhausted(format!(
                            "caching {path} needs {len} bytes, cache cap is {cap}"
                        )));
                    }
                }
                let bytes: Arc<[u8]> = content.into();
                v.insert(Slot {
                    bytes: Arc::clone(&bytes),
                    refcount: 1,
                });
                Ok(bytes)
            }
        }
    }

    /// Drops one reference; the entry is evicted when none remain.
    pub fn release(&self, path: &str) {
        match self.entries.entry(path.to_string()) {
            Entry::Occupied(mut o) => {
                if o.get().refcount <= 1 {
                    let slot = o.remove();
                    self.bytes.fetch_sub(slot.bytes.len() as u64, Ordering::AcqRel);
                } else {
                    o.get_mut().refcount -= 1;
                }
            }
            Entry::Vacant(_) => {
                self.unmatched_releases.fetch_add(1, Ordering::Relaxed);
                warn!("release of uncached {path}");
            }
        }
    }

    pub fn refcount(&self, path: &str) -> u64 {
        self.entries.get(path).map_or(0, |s| s.refcount)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.entries.contains_key(path)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cached_bytes(&self) -> u64 {
        self.bytes.load(Ordering::Acquire)
    }

    /// (path, refcount) for every entry; for inspection and tests.
    pub fn snapshot(&self) -> Vec<(String, u64)> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .map(|e| (e.key().clone(), e.refcount))
            .collect();
        v.sort();
        v
    }

    pub fn unmatched_releases(&self) -> u64 {
        self.unmatched_releases.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn evicts_at_zero() {
        let c = FileCache::new(None);
        c.insert_or_acquire("a", vec![1, 2, 3]).unwrap();
        assert!(c.acquire("a").is_some());
        assert_eq!(c.refcount("a"), 2);
        assert_eq!(c.cached_bytes(), 3);
        c.release("a");
        assert!(c.contains("a"));
        c.release("a");
        assert!(!c.contains("a"));
        assert_eq!(c.cached_bytes(), 0);
    }

    #[test]
    fn second_insert_shares_first_entry() {
        let c = FileCache::new(None);
        let a = c.insert_or_acquire("p", vec![1]).unwrap();
        let b = c.insert_or_acquire("p", vec![2]).unwrap();
        assert!(Arc::ptr_eq(&a, &b));
        assert_eq!(c.refcount("p"), 2);
        assert_eq!(c.cached_bytes(), 1);
    }

    #[test]
    fn capacity_is_enforced() {
        let c = FileCache::new(Some(4));
        c.insert_or_acquire("a", vec![0; 3]).unwrap();
        assert!(matches!(
            c.insert_or_acquire("b", vec![0; 2]),
            Err(Error::ResourceExhausted(_))
        ));
        assert_eq!(c.cached_bytes(), 3);
        c.release("a");
        c.insert_or_acquire("b", vec![0; 4]).unwrap();
    }

    #[test]
    fn unmatched_release_is_counted() {
        let c = FileCache::new(None);
        c.release("ghost");
        assert_eq!(c.unmatched_releases(), 1);
    }
}
