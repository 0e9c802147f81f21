//! File bytes: local extraction, remote fetch, the refcounted cache and
//! the buffered write path.
//!
//! An open reads the whole file once (locally, or with a single fetch from
//! a peer), decompresses it and parks it in the cache; reads are then
//! slices of the cached bytes. Writes are buffered in memory and become
//! visible only when `close_write` has committed the metadata at the
//! output's owner node.

mod cache;
mod store;

pub use cache::FileCache;
pub use store::{flat_name, LocalStore};

use std::io::Write;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use dashmap::DashSet;
use log::debug;
use rand::seq::SliceRandom;

use crate::codec::Codec;
use crate::error::{Error, Result};
use crate::metadata::{MetadataService, NodeId};
use crate::partition::{self, FileMeta, S_IFMT, S_IFREG};
use crate::transport::{FetchReply, PeerPool};

/// Sequential reader over a cached file. Dropping an open handle releases
/// its cache reference.
pub struct ReadHandle {
    path: String,
    bytes: Arc<[u8]>,
    cursor: usize,
    cache: Option<Arc<FileCache>>,
}

impl std::fmt::Debug for ReadHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ReadHandle")
            .field("path", &self.path)
            .field("len", &self.bytes.len())
            .field("cursor", &self.cursor)
            .field("open", &self.cache.is_some())
            .finish()
    }
}

impl ReadHandle {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn len(&self) -> u64 {
        self.bytes.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn position(&self) -> u64 {
        self.cursor as u64
    }

    pub fn is_open(&self) -> bool {
        self.cache.is_some()
    }

    fn check_open(&self) -> Result<()> {
        if self.cache.is_none() {
            return Err(Error::InvalidArgument(format!("{} is closed", self.path)));
        }
        Ok(())
    }

    /// Up to `len` bytes from the cursor; empty at end of file.
    pub fn read(&mut self, len: usize) -> Result<&[u8]> {
        self.check_open()?;
        let start = self.cursor;
        let end = start.saturating_add(len).min(self.bytes.len());
        self.cursor = end;
        Ok(&self.bytes[start..end])
    }

    /// Positional read; leaves the cursor alone.
    pub fn read_at(&self, offset: u64, len: usize) -> Result<&[u8]> {
        self.check_open()?;
        let size = self.bytes.len();
        let start = usize::try_from(offset).unwrap_or(usize::MAX).min(size);
        let end = start.saturating_add(len).min(size);
        Ok(&self.bytes[start..end])
    }

    /// Releases the cache reference. Returns false if already closed.
    pub fn close(&mut self) -> bool {
        match self.cache.take() {
            Some(c) => {
                c.release(&self.path);
                true
            }
            None => false,
        }
    }
}

impl Drop for ReadHandle {
    fn drop(&mut self) {
        self.close();
    }
}

/// Append-only buffer for a new output file.
#[derive(Debug)]
pub struct WriteHandle {
    path: String,
    buffer: Vec<u8>,
    closed: bool,
}

impl WriteHandle {
    pub fn path(&self) -> &str {
        &self.path
    }

    pub fn bytes_written(&self) -> u64 {
        self.buffer.len() as u64
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    pub fn write(&mut self, bytes: &[u8]) -> Result<usize> {
        if self.closed {
            return Err(Error::InvalidArgument(format!("{} is closed", self.path)));
        }
        self.buffer.extend_from_slice(bytes);
        Ok(bytes.len())
    }
}

#[derive(Debug, Default)]
pub struct DataCounters {
    pub opens: AtomicU64,
    pub cache_hits: AtomicU64,
    pub local_reads: AtomicU64,
    pub remote_fetches: AtomicU64,
    pub double_closes: AtomicU64,
    pub fetches_served: AtomicU64,
    pub commits: AtomicU64,
}

impl DataCounters {
    /// Share of opens that needed no network fetch.
    pub fn local_hit_fraction(&self) -> f64 {
        let opens = self.opens.load(Ordering::Relaxed);
        if opens == 0 {
            return 1.0;
        }
        let remote = self.remote_fetches.load(Ordering::Relaxed);
        (opens - remote) as f64 / opens as f64
    }
}

enum Source {
    Local(Vec<u8>),
    Remote(Vec<u8>),
}

pub struct DataPlane {
    node_id: NodeId,
    meta: Arc<MetadataService>,
    store: LocalStore,
    cache: Arc<FileCache>,
    peers: Arc<PeerPool>,
    codec: Arc<dyn Codec>,
    /// Outputs whose bytes live here, added just before the commit is sent.
    local_outputs: DashSet<String>,
    pub counters: DataCounters,
}

impl DataPlane {
    pub fn new(
        meta: Arc<MetadataService>,
        store: LocalStore,
        peers: Arc<PeerPool>,
        codec: Arc<dyn Codec>,
        cache_capacity: Option<u64>,
    ) -> DataPlane {
        DataPlane {
            node_id: meta.node_id(),
            meta,
            store,
            cache: Arc::new(FileCache::new(cache_capacity)),
            peers,
            codec,
            local_outputs: DashSet::new(),
            counters: DataCounters::default(),
        }
    }

    pub fn cache(&self) -> &Arc<FileCache> {
        &self.cache
    }

    pub fn store(&self) -> &LocalStore {
        &self.store
    }

    pub fn open_read(&self, path: &str) -> Result<ReadHandle> {
        if self.meta.index().is_dir(path) {
            return Err(Error::IsADirectory(path.to_string()));
        }
        self.counters.opens.fetch_add(1, Ordering::Relaxed);
        if let Some(bytes) = self.cache.acquire(path) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(self.handle(path, bytes));
        }
        let content = match self.load(path) {
            Ok(Source::Local(c)) => {
                self.counters.local_reads.fetch_add(1, Ordering::Relaxed);
                c
            }
            Ok(Source::Remote(c)) => {
                self.counters.remote_fetches.fetch_add(1, Ordering::Relaxed);
                c
            }
            Err(e) => {
                self.counters.opens.fetch_sub(1, Ordering::Relaxed);
                return Err(e);
            }
        };
        let bytes = self.cache.insert_or_acquire(path, content)?;
        Ok(self.handle(path, bytes))
    }

    fn handle(&self, path: &str, bytes: Arc<[u8]>) -> ReadHandle {
        ReadHandle {
            path: path.to_string(),
            bytes,
            cursor: 0,
            cache: Some(Arc::clone(&self.cache)),
        }
    }

    /// Idempotent; a second close only bumps `double_closes`.
    pub fn close_read(&self, handle: &mut ReadHandle) {
        if !handle.close() {
            self.counters.double_closes.fetch_add(1, Ordering::Relaxed);
        }
    }

    fn load(&self, path: &str) -> Result<Source> {
        if let Some(rec) = self.meta.index().file(path) {
            let loc = &rec.location;
            let size = rec.meta.size_bytes;
            if self.store.holds(loc.partition_id) {
                let (stored, entry) = self.store.read_stored(loc.partition_id, path)?;
                return partition::restore(stored, entry.compressed_size, size, self.codec.as_ref())
                    .map(Source::Local);
            }
            if loc.replicated_everywhere && self.store.has_broadcast(path) {
                let stored = self.store.read_broadcast(path)?;
                return partition::restore(stored, loc.compressed_size(), size, self.codec.as_ref())
                    .map(Source::Local);
            }
            let reply = self.fetch_from_any(path, &loc.owner_nodes)?;
            return self.restore_reply(reply, &rec.meta).map(Source::Remote);
        }

        let out = self.meta.locate_output(path)?;
        if out.writer == self.node_id {
            return self.store.read_output(path).map(Source::Local);
        }
        let reply = self.peers.fetch(out.writer, path)?;
        self.restore_reply(reply, &out.meta).map(Source::Remote)
    }

    fn restore_reply(&self, reply: FetchReply, expected: &FileMeta) -> Result<Vec<u8>> {
        if reply.meta.size_bytes != expected.size_bytes {
            return Err(Error::Corrupt(format!(
                "peer reports {} bytes, index says {}",
                reply.meta.size_bytes, expected.size_bytes
            )));
        }
        partition::restore(reply.data, reply.compressed_size, expected.size_bytes, self.codec.as_ref())
    }

    /// Tries the owners in random order, moving on only for retriable errors.
    pub fn fetch_from_any(&self, path: &str, owners: &[NodeId]) -> Result<FetchReply> {
        let mut candidates: Vec<NodeId> = owners.iter().copied().filter(|&n| n != self.node_id).collect();
        candidates.shuffle(&mut rand::thread_rng());
        let mut last = Error::Unavailable(format!("no remote owner for {path}"));
        for node in candidates {
            match self.peers.fetch(node, path) {
                Ok(r) => return Ok(r),
                Err(e) if e.is_retriable() => {
                    debug!("fetch {path} from node {node} failed: {e}");
                    last = e;
                }
                Err(e) => return Err(e),
            }
        }
        Err(last)
    }

    /// Serves FETCH_FILE: stored bytes as kept here, never decompressed.
    pub fn serve_fetch(&self, path: &str) -> Result<FetchReply> {
        self.counters.fetches_served.fetch_add(1, Ordering::Relaxed);
        if let Some(rec) = self.meta.index().file(path) {
            let loc = &rec.location;
            let data = if self.store.holds(loc.partition_id) {
                self.store.read_stored(loc.partition_id, path)?.0
            } else if self.store.has_broadcast(path) {
                self.store.read_broadcast(path)?
            } else {
                return Err(Error::NotOwner {
                    node: self.node_id,
                    path: path.to_string(),
                });
            };
            return Ok(FetchReply {
                meta: rec.meta,
                compressed_size: loc.compressed_size(),
                data,
            });
        }
        if self.meta.index().is_dir(path) {
            return Err(Error::IsADirectory(path.to_string()));
        }
        if !self.local_outputs.contains(path) {
            return Err(Error::NotFound(path.to_string()));
        }
        let data = self.store.read_output(path)?;
        let mut meta = FileMeta::from_std(&std::fs::metadata(self.store.output_path(path))?);
        meta.size_bytes = data.len() as u64;
        Ok(FetchReply {
            meta,
            compressed_size: 0,
            data,
        })
    }

    /// Copies broadcast-directory files this node does not already hold.
    pub fn replicate_broadcast(&self) -> Result<usize> {
        let mut pulled = 0;
        let index = Arc::clone(self.meta.index());
        let mut wanted: Vec<_> = index
            .files()
            .filter(|(_, r)| r.location.replicated_everywhere && !self.store.holds(r.location.partition_id))
            .collect();
        wanted.sort_by(|a, b| a.0.cmp(b.0));
        for (path, rec) in wanted {
            if self.store.has_broadcast(path) {
                continue;
            }
            let reply = self.fetch_from_any(path, &rec.location.owner_nodes)?;
            if reply.compressed_size != rec.location.compressed_size() {
                return Err(Error::Corrupt(format!("{path}: broadcast copy disagrees with index")));
            }
            self.store.put_broadcast(path, &reply.data)?;
            pulled += 1;
        }
        Ok(pulled)
    }

    pub fn open_write(&self, path: &str) -> Result<WriteHandle> {
        if path.is_empty() || self.meta.index().contains(path) {
            return Err(Error::AlreadyExists(path.to_string()));
        }
        match self.meta.locate_output(path) {
            Ok(_) => return Err(Error::AlreadyExists(path.to_string())),
            Err(Error::NotFound(_)) => {}
            Err(e) => return Err(e),
        }
        Ok(WriteHandle {
            path: path.to_string(),
            buffer: Vec::new(),
            closed: false,
        })
    }

    /// Persists the buffer locally, then commits the metadata at the owner.
    /// Nothing is visible anywhere unless this returns `Ok`.
    pub fn close_write(&self, handle: &mut WriteHandle) -> Result<()> {
        if handle.closed {
            return Err(Error::InvalidArgument(format!("{} is closed", handle.path)));
        }
        handle.closed = true;
        let buffer = std::mem::take(&mut handle.buffer);
        let path = handle.path.as_str();

        let (mut file, local) = self.store.create_output(path)?;
        let written = file.write_all(&buffer).and_then(|_| file.metadata());
        let md = match written {
            Ok(md) => md,
            Err(e) => {
                self.store.remove_output(path);
                return Err(e.into());
            }
        };
        drop(file);
        let mut meta = FileMeta::from_std(&md);
        meta.size_bytes = buffer.len() as u64;
        meta.mode = (meta.mode & !S_IFMT) | S_IFREG;

        self.local_outputs.insert(path.to_string());
        if let Err(e) = self.meta.commit_output(path, meta) {
            self.local_outputs.remove(path);
            self.store.remove_output(path);
            debug!("commit of {} failed, removed {}", path, local.display());
            return Err(e);
        }
        self.counters.commits.fetch_add(1, Ordering::Relaxed);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle(content: &[u8]) -> (ReadHandle, Arc<FileCache>) {
        let cache = Arc::new(FileCache::new(None));
        let bytes = cache.insert_or_acquire("f", content.to_vec()).unwrap();
        (
            ReadHandle {
                path: "f".into(),
                bytes,
                cursor: 0,
                cache: Some(Arc::clone(&cache)),
            },
            cache,
        )
    }

    #[test]
    fn sequential_reads_and_eof() {
        let (mut h, _c) = handle(b"abcdefghij");
        assert_eq!(h.read(4).unwrap(), b"abcd");
        assert_eq!(h.read(100).unwrap(), b"efghij");
        assert_eq!(h.position(), 10);
        assert!(h.read(1).unwrap().is_empty());
    }

    #[test]
    fn positional_reads_leave_cursor() {
        let (mut h, _c) = handle(b"abcdefghij");
        assert_eq!(h.read_at(5, 3).unwrap(), b"fgh");
        assert_eq!(h.read_at(0, 10).unwrap(), b"abcdefghij");
        assert!(h.read_at(10, 3).unwrap().is_empty());
        assert!(h.read_at(u64::MAX, 3).unwrap().is_empty());
        assert_eq!(h.read(2).unwrap(), b"ab");
    }

    #[test]
    fn close_releases_and_is_idempotent() {
        let (mut h, c) = handle(b"x");
        assert!(c.contains("f"));
        assert!(h.close());
        assert!(!c.contains("f"));
        assert!(!h.close());
        assert!(h.read(1).is_err());
        assert!(h.read_at(0, 1).is_err());
    }

    #[test]
    fn drop_releases() {
        let (h, c) = handle(b"x");
        drop(h);
        assert!(c.is_empty());
    }

    #[test]
    fn write_handle_appends() {
        let mut w = WriteHandle {
            path: "o".into(),
            buffer: Vec::new(),
            closed: false,
        };
        assert_eq!(w.write(b"").unwrap(), 0);
        w.write(b"a").unwrap();
        w.write(b"b").unwrap();
        w.write(b"c").unwrap();
        assert_eq!(w.buffer, b"abc");
        assert_eq!(w.bytes_written(), 3);
    }
}
