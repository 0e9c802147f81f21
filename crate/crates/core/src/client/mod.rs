//! POSIX-like facade: mount-prefix translation, a descriptor table, and
//! dispatch between managed paths and the host filesystem.

mod backend;

pub use backend::{Backend, DaemonClient, ReadSource, WriteSink};

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{Read, Write};
use std::os::unix::fs::FileExt;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use crate::cluster::ClusterConfig;
use crate::error::{Error, Result};
use crate::node::NodeStats;
use crate::partition::FileMeta;
use crate::path;

pub const ENV_MOUNT: &str = "FANSTORE_MOUNT";
pub const ENV_NODE: &str = "FANSTORE_NODE";
pub const ENV_CONFIG: &str = "FANSTORE_CONFIG";

/// First descriptor handed out; keeps clear of host descriptors.
pub const FD_BASE: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolved {
    /// Canonical path relative to the dataset root.
    Managed(String),
    Passthrough(PathBuf),
}

/// Rewrites `<prefix>/<rel>` to the packed relative path `<rel>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MountMap {
    prefix: String,
}

impl MountMap {
    pub fn new(prefix: &str) -> Result<MountMap> {
        if !prefix.starts_with('/') {
            return Err(Error::InvalidArgument(format!("mount prefix {prefix:?} is not absolute")));
        }
        let canon = path::normalize(prefix)?;
        if canon.is_empty() {
            return Err(Error::InvalidArgument("mount prefix cannot be /".into()));
        }
        Ok(MountMap {
            prefix: format!("/{canon}"),
        })
    }

    /// `/fanstore/$USER`, falling back to `/fanstore/anonymous`.
    pub fn default_for_user() -> MountMap {
        let user = std::env::var("USER").ok().filter(|u| !u.is_empty() && !u.contains('/'));
        MountMap::new(&format!("/fanstore/{}", user.as_deref().unwrap_or("anonymous")))
            .expect("default prefix is valid")
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn resolve(&self, p: &str) -> Result<Resolved> {
        let rest = match p.strip_prefix(self.prefix.as_str()) {
            Some("") => "",
            Some(r) if r.starts_with('/') => r,
            _ => return Ok(Resolved::Passthrough(PathBuf::from(p))),
        };
        Ok(Resolved::Managed(path::normalize(rest)?))
    }

    pub fn to_mounted(&self, rel: &str) -> String {
        if rel.is_empty() {
            self.prefix.clone()
        } else {
            format!("{}/{rel}", self.prefix)
        }
    }
}

/// Where a client finds its mount prefix and node daemon.
/// Explicit fields win over `FANSTORE_*` variables, which win over defaults.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ClientOptions {
    pub mount: Option<String>,
    /// `host:port`, or a node id looked up in the cluster config.
    pub node: Option<String>,
    pub config: Option<PathBuf>,
}

impl ClientOptions {
    /// Fills unset fields from the environment.
    pub fn with_env(self) -> ClientOptions {
        self.with_lookup(|k| std::env::var(k).ok())
    }

    pub fn with_lookup(self, env: impl Fn(&str) -> Option<String>) -> ClientOptions {
        ClientOptions {
            mount: self.mount.or_else(|| env(ENV_MOUNT)),
            node: self.node.or_else(|| env(ENV_NODE)),
            config: self.config.or_else(|| env(ENV_CONFIG).map(PathBuf::from)),
        }
    }

    /// Mount map and daemon address after applying defaults: the config's
    /// mount prefix, then `/fanstore/$USER`; node 0 of the config.
    pub fn resolve(&self) -> Result<(MountMap, String)> {
        let config = self.config.as_deref().map(ClusterConfig::load).transpose()?;
        let mount = match (&self.mount, config.as_ref().and_then(|c| c.mount_prefix.as_ref())) {
            (Some(m), _) | (None, Some(m)) => MountMap::new(m)?,
            (None, None) => MountMap::default_for_user(),
        };
        let addr = match (&self.node, &config) {
            (Some(n), Some(c)) if n.parse::<u32>().is_ok() => c.node(n.parse().unwrap())?.address(),
            (Some(n), _) if n.parse::<u32>().is_ok() => {
                return Err(Error::InvalidArgument(format!(
                    "node id {n} given without a cluster config"
                )))
            }
            (Some(n), _) => n.clone(),
            (None, Some(c)) => c.node(0)?.address(),
            (None, None) => {
                return Err(Error::InvalidArgument(format!(
                    "no node daemon: set {ENV_NODE} or {ENV_CONFIG}"
                )))
            }
        };
        Ok((mount, addr))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OpenMode {
    Read,
    Write,
}

type Slot = Arc<Mutex<Option<Descriptor>>>;

enum Descriptor {
    Read { src: Box<dyn ReadSource>, pos: u64 },
    Write(Box<dyn WriteSink>),
    Host { file: File, writable: bool },
}

/// Process-wide file API over one node backend.
pub struct FanStore {
    mount: MountMap,
    backend: Arc<dyn Backend>,
    table: RwLock<HashMap<u64, Slot>>,
    next_fd: AtomicU64,
}

impl FanStore {
    pub fn new(mount: MountMap, backend: Arc<dyn Backend>) -> FanStore {
        FanStore {
            mount,
            backend,
            table: RwLock::new(HashMap::new()),
            next_fd: AtomicU64::new(FD_BASE),
        }
    }

    /// Connects to a daemon as described by `options` and the environment.
    pub fn connect(options: ClientOptions) -> Result<FanStore> {
        let options = options.with_env();
        let (mount, addr) = options.resolve()?;
        let transport = match &options.config {
            Some(c) => ClusterConfig::load(c)?.transport_options(),
            None => Default::default(),
        };
        let client = DaemonClient::connect(&addr, &transport)?;
        Ok(FanStore::new(mount, Arc::new(client)))
    }

    pub fn mount(&self) -> &MountMap {
        &self.mount
    }

    pub fn backend(&self) -> &Arc<dyn Backend> {
        &self.backend
    }

    pub fn node_stats(&self) -> Result<NodeStats> {
        self.backend.stats()
    }

    pub fn open_descriptors(&self) -> usize {
        self.table.read().unwrap().len()
    }

    pub fn fs_open(&self, p: &str, mode: OpenMode) -> Result<u64> {
        let d = match (self.mount.resolve(p)?, mode) {
            (Resolved::Managed(rel), OpenMode::Read) => Descriptor::Read {
                src: self.backend.open_read(&rel)?,
                pos: 0,
            },
            (Resolved::Managed(rel), OpenMode::Write) => Descriptor::Write(self.backend.open_write(&rel)?),
            (Resolved::Passthrough(host), OpenMode::Read) => {
                if fs::metadata(&host)?.is_dir() {
                    return Err(Error::IsADirectory(host.display().to_string()));
                }
                Descriptor::Host {
                    file: File::open(host)?,
                    writable: false,
                }
            }
            (Resolved::Passthrough(host), OpenMode::Write) => Descriptor::Host {
                file: File::create(host)?,
                writable: true,
            },
        };
        let fd = self.next_fd.fetch_add(1, Ordering::Relaxed);
        self.table.write().unwrap().insert(fd, Arc::new(Mutex::new(Some(d))));
        Ok(fd)
    }

    fn descriptor(&self, fd: u64) -> Result<Slot> {
        self.table
            .read()
            .unwrap()
            .get(&fd)
            .cloned()
            .ok_or(Error::BadDescriptor(fd))
    }

    /// Reads up to `len` bytes at the current position; empty at EOF.
    pub fn fs_read(&self, fd: u64, len: usize) -> Result<Vec<u8>> {
        let d = self.descriptor(fd)?;
        let mut d = d.lock().unwrap();
        match d.as_mut().ok_or(Error::BadDescriptor(fd))? {
            Descriptor::Read { src, pos } => {
                let out = src.read_at(*pos, len)?;
                *pos += out.len() as u64;
                Ok(out)
            }
            Descriptor::Host { file, writable: false } => {
                let mut out = Vec::with_capacity(len.min(1 << 20));
                file.take(len as u64).read_to_end(&mut out)?;
                Ok(out)
            }
            _ => Err(Error::BadDescriptor(fd)),
        }
    }

    /// Positional read; leaves the descriptor position alone.
    pub fn fs_pread(&self, fd: u64, offset: u64, len: usize) -> Result<Vec<u8>> {
        let d = self.descriptor(fd)?;
        let d = d.lock().unwrap();
        match d.as_ref().ok_or(Error::BadDescriptor(fd))? {
            Descriptor::Read { src, .. } => src.read_at(offset, len),
            Descriptor::Host { file, writable: false } => {
                let mut out = vec![0u8; len];
                let mut got = 0;
                while got < len {
                    match file.read_at(&mut out[got..], offset + got as u64)? {
                        0 => break,
                        n => got += n,
                    }
                }
                out.truncate(got);
                Ok(out)
            }
            _ => Err(Error::BadDescriptor(fd)),
        }
    }

    /// Reads from the current position to end of file.
    pub fn fs_read_all(&self, fd: u64) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        loop {
            let chunk = self.fs_read(fd, 8 << 20)?;
            if chunk.is_empty() {
                return Ok(out);
            }
            out.extend_from_slice(&chunk);
        }
    }

    pub fn fs_write(&self, fd: u64, bytes: &[u8]) -> Result<usize> {
        let d = self.descriptor(fd)?;
        let mut d = d.lock().unwrap();
        match d.as_mut().ok_or(Error::BadDescriptor(fd))? {
            Descriptor::Write(sink) => sink.write(bytes),
            Descriptor::Host { file, writable: true } => {
                file.write_all(bytes)?;
                Ok(bytes.len())
            }
            _ => Err(Error::BadDescriptor(fd)),
        }
    }

    /// Releases the descriptor even when the close itself fails; closing a
    /// managed write descriptor is what publishes the output.
    pub fn fs_close(&self, fd: u64) -> Result<()> {
        let d = self
            .table
            .write()
            .unwrap()
            .remove(&fd)
            .ok_or(Error::BadDescriptor(fd))?;
        let d = d.lock().unwrap().take().ok_or(Error::BadDescriptor(fd))?;
        match d {
            Descriptor::Read { src, .. } => src.close(),
            Descriptor::Write(sink) => sink.close(),
            Descriptor::Host { mut file, writable } => {
                if writable {
                    file.flush()?;
                }
                Ok(())
            }
        }
    }

    pub fn fs_stat(&self, p: &str) -> Result<FileMeta> {
        match self.mount.resolve(p)? {
            Resolved::Managed(rel) => self.backend.stat(&rel),
            Resolved::Passthrough(host) => Ok(FileMeta::from_std(&fs::metadata(host)?)),
        }
    }

    /// Entry names, sorted.
    pub fn fs_readdir(&self, p: &str) -> Result<Vec<String>> {
        match self.mount.resolve(p)? {
            Resolved::Managed(rel) => self.backend.readdir(&rel),
            Resolved::Passthrough(host) => {
                if !fs::metadata(&host)?.is_dir() {
                    return Err(Error::NotADirectory(host.display().to_string()));
                }
                let mut names = Vec::new();
                for e in fs::read_dir(host)? {
                    names.push(e?.file_name().to_string_lossy().into_owned());
                }
                names.sort();
                Ok(names)
            }
        }
    }

    /// Convenience: open, read everything, close.
    pub fn read_file(&self, p: &str) -> Result<Vec<u8>> {
        let fd = self.fs_open(p, OpenMode::Read)?;
        let out = self.fs_read_all(fd);
        let closed = self.fs_close(fd);
        let out = out?;
        closed?;
        Ok(out)
    }

    /// Convenience: open for write, write everything, close (commit).
    pub fn write_file(&self, p: &str, bytes: &[u8]) -> Result<()> {
        let fd = self.fs_open(p, OpenMode::Write)?;
        if let Err(e) = self.fs_write(fd, bytes) {
            let _ = self.fs_close(fd);
            return Err(e);
        }
        self.fs_close(fd)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_examples() {
        let m = MountMap::new("/fanstore/u1/").unwrap();
        assert_eq!(
            m.resolve("/fanstore/u1/train/cat/1.jpg").unwrap(),
            Resolved::Managed("train/cat/1.jpg".into())
        );
        assert_eq!(m.resolve("/etc/hosts").unwrap(), Resolved::Passthrough("/etc/hosts".into()));
        assert_eq!(m.resolve("/fanstore/u1").unwrap(), Resolved::Managed(String::new()));
        assert_eq!(m.resolve("/fanstore/u1/").unwrap(), Resolved::Managed(String::new()));
        assert_eq!(
            m.resolve("/fanstore/u10/x").unwrap(),
            Resolved::Passthrough("/fanstore/u10/x".into())
        );
        assert!(m.resolve("/fanstore/u1/../etc").is_err());
        assert_eq!(m.to_mounted("a/b"), "/fanstore/u1/a/b");
    }

    #[test]
    fn prefix_must_be_absolute() {
        assert!(MountMap::new("fanstore").is_err());
        assert!(MountMap::new("/").is_err());
    }

    #[test]
    fn explicit_beats_env_beats_default() {
        let env = |k: &str| match k {
            ENV_MOUNT => Some("/env/mount".to_string()),
            ENV_NODE => Some("10.0.0.1:1".to_string()),
            _ => None,
        };
        let o = ClientOptions {
            mount: Some("/explicit".into()),
            ..Default::default()
        }
        .with_lookup(env);
        assert_eq!(o.mount.as_deref(), Some("/explicit"));
        assert_eq!(o.node.as_deref(), Some("10.0.0.1:1"));
        let (m, addr) = o.resolve().unwrap();
        assert_eq!(m.prefix(), "/explicit");
        assert_eq!(addr, "10.0.0.1:1");

        let o = ClientOptions {
            node: Some("h:2".into()),
            ..Default::default()
        }
        .with_lookup(|_| None);
        let (m, _) = o.resolve().unwrap();
        assert!(m.prefix().starts_with("/fanstore/"));
    }

    #[test]
    fn missing_daemon_is_an_error() {
        assert!(ClientOptions::default().with_lookup(|_| None).resolve().is_err());
    }
}
