use std::sync::Arc;

use crate::data_plane::{ReadHandle, WriteHandle};
use crate::error::{Error, Result};
use crate::node::{Node, NodeStats};
use crate::partition::{FileMeta, META_LEN};
use crate::transport::frame::{decode_names, u64_at};
use crate::transport::{Connection, Frame, Opcode, TransportOptions};

/// Byte source behind an open read descriptor.
pub trait ReadSource: Send {
    fn len(&self) -> u64;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    fn read_at(&self, offset: u64, len: usize) -> Result<Vec<u8>>;
    fn close(self: Box<Self>) -> Result<()>;
}

/// Byte sink behind an open write descriptor.
pub trait WriteSink: Send {
    fn write(&mut self, bytes: &[u8]) -> Result<usize>;
    /// Makes the output visible cluster-wide.
    fn close(self: Box<Self>) -> Result<()>;
}

/// What the facade needs from a node: either a node in this process or
/// a daemon reached over its transport port.
pub trait Backend: Send + Sync {
    fn stat(&self, path: &str) -> Result<FileMeta>;
    fn readdir(&self, path: &str) -> Result<Vec<String>>;
    fn open_read(&self, path: &str) -> Result<Box<dyn ReadSource>>;
    fn open_write(&self, path: &str) -> Result<Box<dyn WriteSink>>;
    fn stats(&self) -> Result<NodeStats>;
}

struct NodeReader {
    node: Arc<Node>,
    handle: ReadHandle,
}

impl ReadSource for NodeReader {
    fn len(&self) -> u64 {
        self.handle.len()
    }

    fn read_at(&self, offset: u64, len: usize) -> Result<Vec<u8>> {
        self.handle.read_at(offset, len).map(<[u8]>::to_vec)
    }

    fn close(mut self: Box<Self>) -> Result<()> {
        self.node.data().close_read(&mut self.handle);
        Ok(())
    }
}

struct NodeWriter {
    node: Arc<Node>,
    handle: WriteHandle,
}

impl WriteSink for NodeWriter {
    fn write(&mut self, bytes: &[u8]) -> Result<usize> {
        self.handle.write(bytes)
    }

    fn close(mut self: Box<Self>) -> Result<()> {
        self.node.data().close_write(&mut self.handle)
    }
}

impl Backend for Arc<Node> {
    fn stat(&self, path: &str) -> Result<FileMeta> {
        if !self.is_ready() {
            return Err(Error::NotReady);
        }
        Node::stat(self, path)
    }

    fn readdir(&self, path: &str) -> Result<Vec<String>> {
        if !self.is_ready() {
            return Err(Error::NotReady);
        }
        Node::readdir(self, path)
    }

    fn open_read(&self, path: &str) -> Result<Box<dyn ReadSource>> {
        if !self.is_ready() {
            return Err(Error::NotReady);
        }
        let handle = self.data().open_read(path)?;
        Ok(Box::new(NodeReader {
            node: Arc::clone(self),
            handle,
        }))
    }

    fn open_write(&self, path: &str) -> Result<Box<dyn WriteSink>> {
        if !self.is_ready() {
            return Err(Error::NotReady);
        }
        let handle = self.data().open_write(path)?;
        Ok(Box::new(NodeWriter {
            node: Arc::clone(self),
            handle,
        }))
    }

    fn stats(&self) -> Result<NodeStats> {
        Ok(Node::stats(self))
    }
}

/// RPC client for a co-located node daemon.
#[derive(Clone)]
pub struct DaemonClient {
    conn: Arc<Connection>,
}

impl DaemonClient {
    pub fn connect(addr: &str, options: &TransportOptions) -> Result<DaemonClient> {
        Ok(DaemonClient {
            conn: Connection::connect(addr, options)?,
        })
    }

    pub fn connection(&self) -> &Arc<Connection> {
        &self.conn
    }

    /// True once the daemon has finished bootstrapping.
    pub fn ping(&self) -> Result<bool> {
        let reply = self.call(Opcode::Ping, "", Vec::new(), Opcode::Ping)?;
        Ok(reply.payload.first() == Some(&1))
    }

    fn call(&self, op: Opcode, path: &str, payload: Vec<u8>, expect: Opcode) -> Result<Frame> {
        self.conn.call(Frame::new(op, path, payload))?.expect(expect)
    }

    fn open(&self, op: Opcode, path: &str) -> Result<(u64, u64)> {
        let reply = self.call(op, path, Vec::new(), Opcode::OpenOk)?;
        Ok((u64_at(&reply.payload, 0)?, u64_at(&reply.payload, 8)?))
    }
}

struct RemoteReader {
    client: DaemonClient,
    handle: u64,
    size: u64,
}

impl ReadSource for RemoteReader {
    fn len(&self) -> u64 {
        self.size
    }

    fn read_at(&self, offset: u64, len: usize) -> Result<Vec<u8>> {
        let mut p = Vec::with_capacity(24);
        p.extend_from_slice(&self.handle.to_le_bytes());
        p.extend_from_slice(&offset.to_le_bytes());
        p.extend_from_slice(&(len as u64).to_le_bytes());
        Ok(self.client.call(Opcode::ReadAt, "", p, Opcode::Data)?.payload)
    }

    fn close(self: Box<Self>) -> Result<()> {
        self.client
            .call(Opcode::Close, "", self.handle.to_le_bytes().to_vec(), Opcode::Done)
            .map(drop)
    }
}

struct RemoteWriter {
    client: DaemonClient,
    handle: u64,
}

impl WriteSink for RemoteWriter {
    fn write(&mut self, bytes: &[u8]) -> Result<usize> {
        let mut p = Vec::with_capacity(8 + bytes.len());
        p.extend_from_slice(&self.handle.to_le_bytes());
        p.extend_from_slice(bytes);
        let reply = self.client.call(Opcode::Write, "", p, Opcode::Done)?;
        Ok(u64_at(&reply.payload, 0)? as usize)
    }

    fn close(self: Box<Self>) -> Result<()> {
        self.client
            .call(Opcode::CloseWrite, "", self.handle.to_le_bytes().to_vec(), Opcode::Done)
            .map(drop)
    }
}

impl Backend for DaemonClient {
    fn stat(&self, path: &str) -> Result<FileMeta> {
        let reply = self.call(Opcode::Stat, path, Vec::new(), Opcode::StatOk)?;
        let bytes = reply
            .payload
            .get(..META_LEN)
            .ok_or_else(|| Error::Malformed("short STAT reply".into()))?;
        FileMeta::from_bytes(bytes)
    }

    fn readdir(&self, path: &str) -> Result<Vec<String>> {
        decode_names(&self.call(Opcode::Readdir, path, Vec::new(), Opcode::Names)?.payload)
    }

    fn open_read(&self, path: &str) -> Result<Box<dyn ReadSource>> {
        let (handle, size) = self.open(Opcode::OpenRead, path)?;
        Ok(Box::new(RemoteReader {
            client: self.clone(),
            handle,
            size,
        }))
    }

    fn open_write(&self, path: &str) -> Result<Box<dyn WriteSink>> {
        let (handle, _) = self.open(Opcode::OpenWrite, path)?;
        Ok(Box::new(RemoteWriter {
            client: self.clone(),
            handle,
        }))
    }

    fn stats(&self) -> Result<NodeStats> {
        let reply = self.call(Opcode::NodeStats, "", Vec::new(), Opcode::StatsOk)?;
        serde_json::from_slice(&reply.payload).map_err(|e| Error::Malformed(format!("node stats: {e}")))
    }
}
