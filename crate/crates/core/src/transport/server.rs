use std::collections::HashMap;
use std::io::{BufReader, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, info, warn};

use super::frame::{read_frame, Frame, ReadError};
use super::{TransportOptions, WireStats};
use crate::error::{Error, Result};

pub type ConnId = u64;

/// Request dispatch. Called concurrently from many threads.
pub trait Handler: Send + Sync + 'static {
    fn handle(&self, conn: ConnId, request: Frame) -> Result<Frame>;

    /// Called once a connection has closed and its in-flight requests are done.
    fn disconnected(&self, _conn: ConnId) {}
}

struct Shared {
    handler: Arc<dyn Handler>,
    stopping: AtomicBool,
    stats: WireStats,
    open: Mutex<HashMap<ConnId, TcpStream>>,
    next_conn: AtomicU64,
    max_frame: u64,
}

/// A running transport endpoint. Stops when dropped.
pub struct Server {
    addr: SocketAddr,
    shared: Arc<Shared>,
    acceptor: Option<thread::JoinHandle<()>>,
}

pub fn serve(addr: &str, handler: Arc<dyn Handler>, opts: &TransportOptions) -> Result<Server> {
    let listener = TcpListener::bind(addr)?;
    serve_listener(listener, handler, opts)
}

pub fn serve_listener(
    listener: TcpListener,
    handler: Arc<dyn Handler>,
    opts: &TransportOptions,
) -> Result<Server> {
    let addr = listener.local_addr()?;
    let shared = Arc::new(Shared {
        handler,
        stopping: AtomicBool::new(false),
        stats: WireStats::default(),
        open: Mutex::default(),
        next_conn: AtomicU64::new(1),
        max_frame: opts.max_frame,
    });
    let acceptor = {
        let shared = Arc::clone(&shared);
        thread::Builder::new()
            .name(format!("fans-accept-{}", addr.port()))
            .spawn(move || accept_loop(listener, shared))?
    };
    info!("serving on {addr}");
    Ok(Server {
        addr,
        shared,
        acceptor: Some(acceptor),
    })
}

impl Server {
    pub fn local_addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stats(&self) -> &WireStats {
        &self.shared.stats
    }

    pub fn shutdown(&mut self) {
        if self.shared.stopping.swap(true, Ordering::SeqCst) {
            return;
        }
        // wake the blocking accept
        let _ = TcpStream::connect_timeout(&self.addr, Duration::from_millis(200));
        for (_, s) in self.shared.open.lock().unwrap().drain() {
            let _ = s.shutdown(Shutdown::Both);
        }
        if let Some(h) = self.acceptor.take() {
            let _ = h.join();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn accept_loop(listener: TcpListener, shared: Arc<Shared>) {
    for stream in listener.incoming() {
        if shared.stopping.load(Ordering::SeqCst) {
            break;
        }
        let stream = match stream {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let conn = shared.next_conn.fetch_add(1, Ordering::Relaxed);
        let shared = Arc::clone(&shared);
        let spawned = thread::Builder::new()
            .name(format!("fans-serve-{conn}"))
            .spawn(move || {
                if let Err(e) = connection_loop(conn, stream, &shared) {
                    debug!("connection {conn} ended: {e}");
                }
            });
        if let Err(e) = spawned {
            warn!("cannot spawn connection thread: {e}");
        }
    }
}

fn connection_loop(conn: ConnId, stream: TcpStream, shared: &Arc<Shared>) -> Result<()> {
    stream.set_nodelay(true)?;
    let writer = Arc::new(Mutex::new(stream.try_clone()?));
    shared.open.lock().unwrap().insert(conn, stream.try_clone()?);
    let inflight = Arc::new(());
    let mut reader = BufReader::with_capacity(256 << 10, stream);

    let result = loop {
        let request = match read_frame(&mut reader, shared.max_frame) {
            Ok(f) => f,
            Err(ReadError::Bad { request_id, error }) => {
                warn!("connection {conn}: {error}");
                respond(shared, &writer, Frame::error(request_id, &error));
                continue;
            }
            Err(ReadError::Closed) => break Ok(()),
            Err(ReadError::Io(e)) => break Err(Error::Io(e)),
        };
        shared.stats.record_received(request.encoded_len());

        let shared_c = Arc::clone(shared);
        let writer_c = Arc::clone(&writer);
        let guard = Arc::clone(&inflight);
        thread::spawn(move || {
            let id = request.request_id;
            let mut reply = match shared_c.handler.handle(conn, request) {
                Ok(f) => f,
                Err(e) => Frame::error(id, &e),
            };
            reply.request_id = id;
            respond(&shared_c, &writer_c, reply);
            drop(guard);
        });
    };

    while Arc::strong_count(&inflight) > 1 {
        thread::sleep(Duration::from_millis(1));
    }
    shared.open.lock().unwrap().remove(&conn);
    shared.handler.disconnected(conn);
    result
}

fn respond(shared: &Shared, writer: &Mutex<TcpStream>, reply: Frame) {
    let bytes = match reply.encode() {
        Ok(b) => b,
        Err(e) => match Frame::error(reply.request_id, &e).encode() {
            Ok(b) => b,
            Err(_) => return,
        },
    };
    let mut w = writer.lock().unwrap();
    match w.write_all(&bytes) {
        Ok(()) => shared.stats.record_sent(bytes.len()),
        Err(e) => debug!("dropping reply {}: {e}", reply.request_id),
    }
}
