use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::net::{Shutdown, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use log::{debug, warn};

use super::frame::{self, read_frame, FetchReply, Frame, Opcode, ReadError};
use super::{TransportOptions, WireStats};
use crate::error::{Error, Result};
use crate::metadata::{NodeId, OutputRecord};

type Pending = Arc<Mutex<HashMap<u64, mpsc::SyncSender<Result<Frame>>>>>;

/// One multiplexed stream. Any number of threads may have calls in flight;
/// responses are matched back to callers by request id.
pub struct Connection {
    peer: String,
    writer: Mutex<TcpStream>,
    pending: Pending,
    next_id: AtomicU64,
    alive: Arc<AtomicBool>,
    stats: Arc<WireStats>,
    timeout: Duration,
}

impl Connection {
    pub fn connect(addr: &str, opts: &TransportOptions) -> Result<Arc<Connection>> {
        let sock = addr
            .to_socket_addrs()
            .map_err(|e| Error::Unavailable(format!("{addr}: {e}")))?
            .next()
            .ok_or_else(|| Error::Unavailable(format!("{addr}: no address")))?;
        let stream = TcpStream::connect_timeout(&sock, opts.connect_timeout)
            .map_err(|e| Error::Unavailable(format!("{addr}: {e}")))?;
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;

        let pending: Pending = Arc::default();
        let alive = Arc::new(AtomicBool::new(true));
        let stats = Arc::new(WireStats::default());
        {
            let pending = Arc::clone(&pending);
            let alive = Arc::clone(&alive);
            let stats = Arc::clone(&stats);
            let max = opts.max_frame;
            let peer = addr.to_string();
            std::thread::Builder::new()
                .name(format!("fans-conn-{peer}"))
                .spawn(move || reader_loop(read_half, pending, alive, stats, max, peer))?;
        }
        Ok(Arc::new(Connection {
            peer: addr.to_string(),
            writer: Mutex::new(stream),
            pending,
            next_id: AtomicU64::new(1),
            alive,
            stats,
            timeout: opts.timeout,
        }))
    }

    pub fn is_alive(&self) -> bool {
        self.alive.load(Ordering::Acquire)
    }

    pub fn stats(&self) -> &WireStats {
        &self.stats
    }

    pub fn peer(&self) -> &str {
        &self.peer
    }

    /// One request/response round trip. ERR responses come back as `Err`.
    pub fn call(&self, mut request: Frame) -> Result<Frame> {
        if !self.is_alive() {
            return Err(Error::Unavailable(format!("{}: connection closed", self.peer)));
        }
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        request.request_id = id;
        let bytes = request.encode()?;
        let (tx, rx) = mpsc::sync_channel(1);
        self.pending.lock().unwrap().insert(id, tx);

        let sent = {
            let mut w = self.writer.lock().unwrap();
            w.write_all(&bytes)
        };
        if let Err(e) = sent {
            self.pending.lock().unwrap().remove(&id);
            self.alive.store(false, Ordering::Release);
            return Err(Error::Unavailable(format!("{}: {e}", self.peer)));
        }
        self.stats.record_sent(bytes.len());

        match rx.recv_timeout(self.timeout) {
            Ok(reply) => reply?.into_result(),
            Err(RecvTimeoutError::Timeout) => {
                self.pending.lock().unwrap().remove(&id);
                Err(Error::Timeout(self.timeout))
            }
            Err(RecvTimeoutError::Disconnected) => {
                Err(Error::Unavailable(format!("{}: connection reset", self.peer)))
            }
        }
    }
}

impl Drop for Connection {
    fn drop(&mut self) {
        if let Ok(w) = self.writer.lock() {
            let _ = w.shutdown(Shutdown::Both);
        }
    }
}

fn reader_loop(
    stream: TcpStream,
    pending: Pending,
    alive: Arc<AtomicBool>,
    stats: Arc<WireStats>,
    max: u64,
    peer: String,
) {
    let mut reader = BufReader::with_capacity(256 << 10, stream);
    loop {
        match read_frame(&mut reader, max) {
            Ok(f) => {
                stats.record_received(f.encoded_len());
                match pending.lock().unwrap().remove(&f.request_id) {
                    Some(tx) => {
                        let _ = tx.send(Ok(f));
                    }
                    None => debug!("{peer}: response for unknown request {}", f.request_id),
                }
            }
            Err(ReadError::Bad { request_id, error }) => {
                warn!("{peer}: unusable response frame: {error}");
                if let Some(tx) = pending.lock().unwrap().remove(&request_id) {
                    let _ = tx.send(Err(error));
                }
            }
            Err(ReadError::Closed) | Err(ReadError::Io(_)) => break,
        }
    }
    alive.store(false, Ordering::Release);
    for (_, tx) in pending.lock().unwrap().drain() {
        let _ = tx.send(Err(Error::Unavailable(format!("{peer}: connection reset"))));
    }
}

/// Counters for node-to-node traffic.
#[derive(Debug, Default)]
pub struct PeerCounters {
    pub calls: AtomicU64,
    pub fetches: AtomicU64,
    pub output_stats: AtomicU64,
    pub commits: AtomicU64,
    pub pings: AtomicU64,
}

/// Lazily connected, reused connections to the other nodes.
pub struct PeerPool {
    addrs: Vec<String>,
    conns: Mutex<HashMap<NodeId, Arc<Connection>>>,
    options: TransportOptions,
    pub counters: PeerCounters,
}

impl PeerPool {
    pub fn new(addrs: Vec<String>, options: TransportOptions) -> PeerPool {
        PeerPool {
            addrs,
            conns: Mutex::default(),
            options,
            counters: PeerCounters::default(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.addrs.len()
    }

    pub fn connection(&self, node: NodeId) -> Result<Arc<Connection>> {
        let addr = self
            .addrs
            .get(node as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {node}")))?;
        let mut conns = self.conns.lock().unwrap();
        if let Some(c) = conns.get(&node) {
            if c.is_alive() {
                return Ok(Arc::clone(c));
            }
        }
        let c = Connection::connect(addr, &self.options)?;
        conns.insert(node, Arc::clone(&c));
        Ok(c)
    }

    fn call(&self, node: NodeId, request: Frame) -> Result<Frame> {
        self.counters.calls.fetch_add(1, Ordering::Relaxed);
        self.connection(node)?.call(request)
    }

    pub fn fetch(&self, node: NodeId, path: &str) -> Result<FetchReply> {
        self.counters.fetches.fetch_add(1, Ordering::Relaxed);
        let f = self
            .call(node, Frame::new(Opcode::FetchFile, path, Vec::new()))?
            .expect(Opcode::FetchOk)?;
        FetchReply::decode(f.payload)
    }

    pub fn stat_output(&self, node: NodeId, path: &str) -> Result<OutputRecord> {
        self.counters.output_stats.fetch_add(1, Ordering::Relaxed);
        let f = self
            .call(node, Frame::new(Opcode::StatOutput, path, Vec::new()))?
            .expect(Opcode::StatOk)?;
        frame::decode_output_record(&f.payload, node)
    }

    pub fn commit(&self, node: NodeId, path: &str, record: &OutputRecord) -> Result<()> {
        self.counters.commits.fetch_add(1, Ordering::Relaxed);
        let payload = frame::encode_output_record(record);
        self.call(node, Frame::new(Opcode::CommitMeta, path, payload))?
            .expect(Opcode::CommitOk)
            .map(drop)
    }

    /// True once the peer reports readiness.
    pub fn ping(&self, node: NodeId) -> Result<bool> {
        self.counters.pings.fetch_add(1, Ordering::Relaxed);
        let f = self
            .connection(node)?
            .call(Frame::new(Opcode::Ping, "", Vec::new()))?
            .expect(Opcode::Ping)?;
        Ok(f.payload.first() == Some(&1))
    }

    /// Peer calls made for data or metadata (pings excluded).
    pub fn data_calls(&self) -> u64 {
        self.counters.calls.load(Ordering::Relaxed)
    }
}
