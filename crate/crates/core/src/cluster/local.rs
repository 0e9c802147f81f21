use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use super::{bootstrap_with_listener, BootstrapOptions, ClusterConfig, NodeConfig};
use crate::client::{Backend, DaemonClient, FanStore, MountMap};
use crate::error::{Error, Result};
use crate::node::{Node, NodeStats};

/// Shape of a localhost test cluster.
#[derive(Debug, Clone)]
pub struct ClusterSetup {
    pub nodes: u32,
    pub replication: u32,
    pub replicated_dirs: Vec<String>,
    pub full_broadcast: bool,
    pub cache_capacity_bytes: Option<u64>,
    pub timeout_secs: f64,
    pub mount_prefix: String,
    pub ready_timeout: Duration,
}

impl ClusterSetup {
    pub fn new(nodes: u32) -> ClusterSetup {
        ClusterSetup {
            nodes,
            replication: 1,
            replicated_dirs: Vec::new(),
            full_broadcast: false,
            cache_capacity_bytes: None,
            timeout_secs: 30.0,
            mount_prefix: "/fanstore/local".into(),
            ready_timeout: Duration::from_secs(60),
        }
    }

    pub fn replication(mut self, r: u32) -> Self {
        self.replication = r;
        self
    }

    pub fn replicate_dir(mut self, dir: &str) -> Self {
        self.replicated_dirs.push(dir.to_string());
        self
    }

    pub fn full_broadcast(mut self, on: bool) -> Self {
        self.full_broadcast = on;
        self
    }

    fn config(&self, work_dir: &Path, ports: &[u16]) -> ClusterConfig {
        let nodes = ports
            .iter()
            .enumerate()
            .map(|(i, &port)| NodeConfig {
                id: i as u32,
                host: "127.0.0.1".into(),
                port,
                root: work_dir.join(format!("node{i}")),
            })
            .collect();
        let mut c = ClusterConfig::new(nodes);
        c.replication = self.replication;
        c.replicated_dirs = self.replicated_dirs.clone();
        c.full_broadcast = self.full_broadcast;
        c.cache_capacity_bytes = self.cache_capacity_bytes;
        c.timeout_secs = self.timeout_secs;
        c.mount_prefix = Some(self.mount_prefix.clone());
        c
    }
}

pub enum ClusterHandle {
    InProcess(Arc<Node>),
    Process { child: Child, client: DaemonClient },
}

/// A cluster on 127.0.0.1, either as threads of this process or as one
/// `fanstored` child process per node.
pub struct LocalCluster {
    config: ClusterConfig,
    config_path: PathBuf,
    manifest: PathBuf,
    mount: MountMap,
    handles: Vec<ClusterHandle>,
}

impl LocalCluster {
    /// Boots every node inside this process, in parallel.
    pub fn start_in_process(setup: &ClusterSetup, manifest: &Path, work_dir: &Path) -> Result<LocalCluster> {
        fs::create_dir_all(work_dir)?;
        let listeners: Vec<TcpListener> = (0..setup.nodes)
            .map(|_| TcpListener::bind("127.0.0.1:0"))
            .collect::<std::io::Result<_>>()?;
        let ports: Vec<u16> = listeners
            .iter()
            .map(|l| l.local_addr().map(|a| a.port()))
            .collect::<std::io::Result<_>>()?;
        let config = setup.config(work_dir, &ports);
        config.validate()?;
        let config_path = work_dir.join("cluster.toml");
        config.save(&config_path)?;

        let options = BootstrapOptions {
            peer_wait: setup.ready_timeout,
            ..Default::default()
        };
        let nodes: Vec<Result<Arc<Node>>> = std::thread::scope(|s| {
            let joins: Vec<_> = listeners
                .into_iter()
                .enumerate()
                .map(|(i, l)| {
                    let (config, options) = (&config, &options);
                    s.spawn(move || bootstrap_with_listener(config, i as u32, manifest, l, options))
                })
                .collect();
            joins.into_iter().map(|j| j.join().expect("bootstrap panicked")).collect()
        });
        let handles = nodes
            .into_iter()
            .map(|n| n.map(ClusterHandle::InProcess))
            .collect::<Result<_>>()?;
        Ok(LocalCluster {
            mount: MountMap::new(&setup.mount_prefix)?,
            config,
            config_path,
            manifest: manifest.to_path_buf(),
            handles,
        })
    }

    /// Spawns one `daemon` process per node and waits for all to be ready.
    pub fn spawn_processes(
        setup: &ClusterSetup,
        manifest: &Path,
        work_dir: &Path,
        daemon: &Path,
    ) -> Result<LocalCluster> {
        fs::create_dir_all(work_dir)?;
        let ports = free_ports(setup.nodes as usize)?;
        let config = setup.config(work_dir, &ports);
        config.validate()?;
        let config_path = work_dir.join("cluster.toml");
        config.save(&config_path)?;

        let mut children = Vec::new();
        for i in 0..setup.nodes {
            let log = fs::File::create(work_dir.join(format!("node{i}.log")))?;
            let child = Command::new(daemon)
                .arg("--config")
                .arg(&config_path)
                .arg("--node-id")
                .arg(i.to_string())
                .arg("--manifest")
                .arg(manifest)
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(log)
                .spawn()?;
            children.push(child);
        }

        let mut cluster = LocalCluster {
            mount: MountMap::new(&setup.mount_prefix)?,
            config,
            config_path,
            manifest: manifest.to_path_buf(),
            handles: Vec::new(),
        };
        let deadline = Instant::now() + setup.ready_timeout;
        let transport = cluster.config.transport_options();
        let mut pending: Vec<Option<Child>> = children.into_iter().map(Some).collect();
        let mut clients: Vec<Option<DaemonClient>> = vec![None; pending.len()];
        let result = (|| {
            while clients.iter().any(Option::is_none) {
                for (i, slot) in clients.iter_mut().enumerate() {
                    if slot.is_some() {
                        continue;
                    }
                    let child = pending[i].as_mut().expect("child present");
                    if let Some(status) = child.try_wait()? {
                        return Err(Error::Unavailable(format!(
                            "node {i} exited during bootstrap ({status}); see {}",
                            work_dir.join(format!("node{i}.log")).display()
                        )));
                    }
                    let addr = cluster.config.nodes[i].address();
                    if let Ok(c) = DaemonClient::connect(&addr, &transport) {
                        if c.ping().unwrap_or(false) {
                            *slot = Some(c);
                        }
                    }
                }
                if Instant::now() > deadline {
                    return Err(Error::Timeout(setup.ready_timeout));
                }
                std::thread::sleep(Duration::from_millis(50));
            }
            Ok(())
        })();
        if let Err(e) = result {
            for c in pending.iter_mut().flatten() {
                let _ = c.kill();
                let _ = c.wait();
            }
            return Err(e);
        }
        cluster.handles = pending
            .into_iter()
            .zip(clients)
            .map(|(child, client)| ClusterHandle::Process {
                child: child.expect("child present"),
                client: client.expect("client ready"),
            })
            .collect();
        Ok(cluster)
    }

    pub fn config(&self) -> &ClusterConfig {
        &self.config
    }

    pub fn config_path(&self) -> &Path {
        &self.config_path
    }

    pub fn manifest_path(&self) -> &Path {
        &self.manifest
    }

    pub fn mount(&self) -> &MountMap {
        &self.mount
    }

    pub fn node_count(&self) -> usize {
        self.handles.len()
    }

    pub fn address(&self, i: usize) -> String {
        self.config.nodes[i].address()
    }

    /// The in-process node, if this cluster runs in-process.
    pub fn node(&self, i: usize) -> Option<&Arc<Node>> {
        match &self.handles[i] {
            ClusterHandle::InProcess(n) => Some(n),
            ClusterHandle::Process { .. } => None,
        }
    }

    pub fn backend(&self, i: usize) -> Arc<dyn Backend> {
        match &self.handles[i] {
            ClusterHandle::InProcess(n) => Arc::new(Arc::clone(n)),
            ClusterHandle::Process { client, .. } => Arc::new(client.clone()),
        }
    }

    /// A facade bound to node `i`, as a co-located application would use.
    pub fn client(&self, i: usize) -> FanStore {
        FanStore::new(self.mount.clone(), self.backend(i))
    }

    pub fn stats(&self, i: usize) -> Result<NodeStats> {
        self.backend(i).stats()
    }

    pub fn shutdown(&mut self) {
        for h in self.handles.drain(..) {
            match h {
                ClusterHandle::InProcess(n) => n.shutdown(),
                ClusterHandle::Process { mut child, .. } => {
                    let _ = child.kill();
                    let _ = child.wait();
                }
            }
        }
    }
}

impl Drop for LocalCluster {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn free_ports(n: usize) -> Result<Vec<u16>> {
    // hold all listeners at once so the ports are distinct
    let held: Vec<TcpListener> = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<std::io::Result<_>>()?;
    held.iter()
        .map(|l| Ok(l.local_addr()?.port()))
        .collect()
}
