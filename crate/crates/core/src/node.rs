//! The per-node daemon: metadata service, data plane and the transport
//! endpoint that peers and co-located clients talk to.

use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, Weak};

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::data_plane::{DataPlane, ReadHandle, WriteHandle};
use crate::error::{Error, Result};
use crate::metadata::{MetadataService, NodeId};
use crate::partition::FileMeta;
use crate::transport::frame::{self, u64_at};
use crate::transport::{ConnId, Frame, Handler, Opcode, PeerPool, Server};

/// Counters and identity reported by NODE_STATS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeStats {
    pub node_id: NodeId,
    pub ready: bool,
    pub namespace_digest: String,
    pub manifest_digest: String,
    pub files: usize,
    pub dirs: usize,
    pub held_partitions: Vec<u32>,
    pub opens: u64,
    pub cache_hits: u64,
    pub local_reads: u64,
    pub remote_fetches: u64,
    pub fetches_served: u64,
    pub commits: u64,
    pub double_closes: u64,
    pub peer_calls: u64,
    pub cached_files: usize,
    pub cached_bytes: u64,
    pub open_handles: usize,
}

impl NodeStats {
    pub fn local_hit_fraction(&self) -> f64 {
        if self.opens == 0 {
            1.0
        } else {
            (self.opens - self.remote_fetches) as f64 / self.opens as f64
        }
    }
}

enum OpenFile {
    Read(ReadHandle),
    Write(WriteHandle),
}

pub struct Node {
    id: NodeId,
    manifest_digest: [u8; 32],
    namespace_digest: [u8; 32],
    meta: Arc<MetadataService>,
    data: DataPlane,
    peers: Arc<PeerPool>,
    ready: AtomicBool,
    handles: DashMap<u64, (ConnId, OpenFile)>,
    next_handle: AtomicU64,
    server: Mutex<Option<Server>>,
}

impl Node {
    pub(crate) fn new(
        meta: Arc<MetadataService>,
        data: DataPlane,
        peers: Arc<PeerPool>,
        manifest_digest: [u8; 32],
    ) -> Node {
        Node {
            id: meta.node_id(),
            namespace_digest: meta.index().digest(),
            manifest_digest,
            meta,
            data,
            peers,
            ready: AtomicBool::new(false),
            handles: DashMap::new(),
            next_handle: AtomicU64::new(1),
            server: Mutex::new(None),
        }
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn metadata(&self) -> &Arc<MetadataService> {
        &self.meta
    }

    pub fn data(&self) -> &DataPlane {
        &self.data
    }

    pub fn peers(&self) -> &Arc<PeerPool> {
        &self.peers
    }

    pub fn is_ready(&self) -> bool {
        self.ready.load(Ordering::Acquire)
    }

    pub(crate) fn set_ready(&self) {
        self.ready.store(true, Ordering::Release);
    }

    pub(crate) fn attach_server(&self, server: Server) {
        *self.server.lock().unwrap() = Some(server);
    }

    pub fn listen_addr(&self) -> Option<std::net::SocketAddr> {
        self.server.lock().unwrap().as_ref().map(Server::local_addr)
    }

    /// Stops serving. Dropping the last `Arc<Node>` does the same.
    pub fn shutdown(&self) {
        if let Some(mut s) = self.server.lock().unwrap().take() {
            s.shutdown();
        }
    }

    pub fn namespace_digest(&self) -> [u8; 32] {
        self.namespace_digest
    }

    pub fn stat(&self, path: &str) -> Result<FileMeta> {
        self.meta.stat(path)
    }

    pub fn readdir(&self, path: &str) -> Result<Vec<String>> {
        self.meta.readdir(path)
    }

    pub fn stats(&self) -> NodeStats {
        let c = &self.data.counters;
        NodeStats {
            node_id: self.id,
            ready: self.is_ready(),
            namespace_digest: hex::encode(self.namespace_digest),
            manifest_digest: hex::encode(self.manifest_digest),
            files: self.meta.index().file_count(),
            dirs: self.meta.index().dir_count(),
            held_partitions: self.data.store().held_partitions(),
            opens: c.opens.load(Ordering::Relaxed),
            cache_hits: c.cache_hits.load(Ordering::Relaxed),
            local_reads: c.local_reads.load(Ordering::Relaxed),
            remote_fetches: c.remote_fetches.load(Ordering::Relaxed),
            fetches_served: c.fetches_served.load(Ordering::Relaxed),
            commits: c.commits.load(Ordering::Relaxed),
            double_closes: c.double_closes.load(Ordering::Relaxed),
            peer_calls: self.peers.data_calls(),
            cached_files: self.data.cache().len(),
            cached_bytes: self.data.cache().cached_bytes(),
            open_handles: self.handles.len(),
        }
    }

    fn check_ready(&self) -> Result<()> {
        if self.is_ready() {
            Ok(())
        } else {
            Err(Error::NotReady)
        }
    }

    fn register(&self, conn: ConnId, file: OpenFile) -> u64 {
        let h = self.next_handle.fetch_add(1, Ordering::Relaxed);
        self.handles.insert(h, (conn, file));
        h
    }

    fn dispatch(&self, conn: ConnId, req: Frame) -> Result<Frame> {
        let reply = |op: Opcode, payload: Vec<u8>| Ok(Frame::new(op, "", payload));
        match req.opcode {
            Opcode::Ping => reply(Opcode::Ping, vec![self.is_ready() as u8]),
            Opcode::FetchFile => reply(Opcode::FetchOk, self.data.serve_fetch(&req.path)?.encode()),
            Opcode::StatOutput => {
                let r = self.meta.stat_output_local(&req.path)?;
                reply(Opcode::StatOk, frame::encode_output_record(&r))
            }
            Opcode::CommitMeta => {
                let r = frame::decode_output_record(&req.payload, NodeId::MAX)?;
                if r.writer == NodeId::MAX {
                    return Err(Error::InvalidArgument("commit without writer node".into()));
                }
                self.meta.commit_local(&req.path, r)?;
                reply(Opcode::CommitOk, Vec::new())
            }
            Opcode::NodeStats => {
                let json = serde_json::to_vec(&self.stats()).map_err(|e| Error::Corrupt(e.to_string()))?;
                reply(Opcode::StatsOk, json)
            }
            Opcode::Stat => {
                self.check_ready()?;
                reply(Opcode::StatOk, self.meta.stat(&req.path)?.to_bytes().to_vec())
            }
            Opcode::Readdir => {
                self.check_ready()?;
                reply(Opcode::Names, frame::encode_names(&self.meta.readdir(&req.path)?))
            }
            Opcode::OpenRead => {
                self.check_ready()?;
                let h = self.data.open_read(&req.path)?;
                let size = h.len();
                let id = self.register(conn, OpenFile::Read(h));
                let mut p = id.to_le_bytes().to_vec();
                p.extend_from_slice(&size.to_le_bytes());
                reply(Opcode::OpenOk, p)
            }
            Opcode::OpenWrite => {
                self.check_ready()?;
                let h = self.data.open_write(&req.path)?;
                let id = self.register(conn, OpenFile::Write(h));
                let mut p = id.to_le_bytes().to_vec();
                p.extend_from_slice(&0u64.to_le_bytes());
                reply(Opcode::OpenOk, p)
            }
            Opcode::ReadAt => {
                let id = u64_at(&req.payload, 0)?;
                let offset = u64_at(&req.payload, 8)?;
                let len = u64_at(&req.payload, 16)?;
                let entry = self.handles.get(&id).ok_or(Error::BadDescriptor(id))?;
                match &entry.1 {
                    OpenFile::Read(h) => reply(Opcode::Data, h.read_at(offset, len as usize)?.to_vec()),
                    OpenFile::Write(_) => Err(Error::BadDescriptor(id)),
                }
            }
            Opcode::Write => {
                let id = u64_at(&req.payload, 0)?;
                let mut entry = self.handles.get_mut(&id).ok_or(Error::BadDescriptor(id))?;
                match &mut entry.1 {
                    OpenFile::Write(h) => {
                        let n = h.write(&req.payload[8..])?;
                        reply(Opcode::Done, (n as u64).to_le_bytes().to_vec())
                    }
                    OpenFile::Read(_) => Err(Error::BadDescriptor(id)),
                }
            }
            Opcode::Close | Opcode::CloseWrite => {
                let id = u64_at(&req.payload, 0)?;
                let (_, (_, file)) = self.handles.remove(&id).ok_or(Error::BadDescriptor(id))?;
                match file {
                    OpenFile::Read(mut h) => self.data.close_read(&mut h),
                    OpenFile::Write(mut h) => self.data.close_write(&mut h)?,
                }
                reply(Opcode::Done, Vec::new())
            }
            Opcode::FetchOk
            | Opcode::StatOk
            | Opcode::CommitOk
            | Opcode::Err
            | Opcode::OpenOk
            | Opcode::Data
            | Opcode::Done
            | Opcode::Names
            | Opcode::StatsOk => Err(Error::Malformed(format!("{:?} is not a request", req.opcode))),
        }
    }

    /// Drops read handles a vanished client left open. Unfinished writes
    /// are discarded without becoming visible.
    fn release_connection(&self, conn: ConnId) {
        let ids: Vec<u64> = self
            .handles
            .iter()
            .filter(|e| e.value().0 == conn)
            .map(|e| *e.key())
            .collect();
        for id in ids {
            if let Some((_, (_, OpenFile::Read(mut h)))) = self.handles.remove(&id) {
                self.data.close_read(&mut h);
            }
        }
    }
}

/// Transport adapter; holds the node weakly so dropping the node stops it.
pub(crate) struct NodeHandler(pub(crate) Weak<Node>);

impl Handler for NodeHandler {
    fn handle(&self, conn: ConnId, request: Frame) -> Result<Frame> {
        let node = self.0.upgrade().ok_or(Error::NotReady)?;
        node.dispatch(conn, request)
    }

    fn disconnected(&self, conn: ConnId) {
        if let Some(node) = self.0.upgrade() {
            node.release_connection(conn);
        }
    }
}
