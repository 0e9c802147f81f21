//! Node bootstrap: partition placement, local staging, namespace load,
//! serving and readiness.

mod config;
mod local;

pub use config::{ClusterConfig, NodeConfig, CONFIG_VERSION};
pub use local::{ClusterHandle, ClusterSetup, LocalCluster};

use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::codec::CodecRegistry;
use crate::data_plane::{DataPlane, LocalStore};
use crate::error::{Error, Result};
use crate::metadata::{load_namespace, MetadataService, NodeId};
use crate::node::{Node, NodeHandler};
use crate::partition::PartitionManifest;
use crate::transport::{self, PeerPool};

/// Owners of each partition: partition `i` goes to nodes
/// `(i + k * (M / R)) mod M` for `k` in `0..R`, duplicates dropped.
pub fn assign_partitions(partitions: u32, nodes: u32, replication: u32) -> Result<Vec<Vec<NodeId>>> {
    if nodes == 0 || replication == 0 || replication > nodes {
        return Err(Error::InvalidArgument(format!(
            "replication {replication} must lie in 1..={nodes}"
        )));
    }
    let stride = nodes / replication;
    Ok((0..partitions)
        .map(|i| {
            let mut owners: Vec<NodeId> = Vec::with_capacity(replication as usize);
            for k in 0..replication {
                let n = ((u64::from(i) + u64::from(k) * u64::from(stride)) % u64::from(nodes)) as NodeId;
                if !owners.contains(&n) {
                    owners.push(n);
                }
            }
            owners
        })
        .collect())
}

#[derive(Clone)]
pub struct BootstrapOptions {
    /// Where partitions missing from the node's store are copied from.
    /// Defaults to the manifest's directory.
    pub partition_source: Option<PathBuf>,
    /// How long to keep retrying peers while pulling broadcast files.
    pub peer_wait: Duration,
    pub codecs: CodecRegistry,
}

impl Default for BootstrapOptions {
    fn default() -> Self {
        BootstrapOptions {
            partition_source: None,
            peer_wait: Duration::from_secs(60),
            codecs: CodecRegistry::default(),
        }
    }
}

/// Brings one node up and returns it once ready.
pub fn bootstrap(
    config: &ClusterConfig,
    node_id: NodeId,
    manifest_path: &Path,
    options: &BootstrapOptions,
) -> Result<Arc<Node>> {
    let listener = TcpListener::bind(config.node(node_id)?.address())?;
    bootstrap_with_listener(config, node_id, manifest_path, listener, options)
}

pub fn bootstrap_with_listener(
    config: &ClusterConfig,
    node_id: NodeId,
    manifest_path: &Path,
    listener: TcpListener,
    options: &BootstrapOptions,
) -> Result<Arc<Node>> {
    config.validate()?;
    let me = config.node(node_id)?;
    let manifest = PartitionManifest::load(manifest_path)?;
    let codec = options.codecs.get(manifest.codec)?;

    let node_count = config.node_count();
    let assignment = assign_partitions(manifest.partition_count, node_count, config.effective_replication())?;
    let mine: Vec<u32> = assignment
        .iter()
        .enumerate()
        .filter(|(_, owners)| owners.contains(&node_id))
        .map(|(p, _)| p as u32)
        .collect();

    let source = options
        .partition_source
        .clone()
        .or_else(|| manifest_path.parent().map(Path::to_path_buf));
    let store = LocalStore::open(&me.root, &mine, source.as_deref(), &manifest)?;
    let index = Arc::new(load_namespace(&manifest, &assignment, &config.replicated_dirs)?);
    info!(
        "node {node_id}: {} files, {} dirs, holding partitions {:?}",
        index.file_count(),
        index.dir_count(),
        mine
    );

    let transport_opts = config.transport_options();
    let peers = Arc::new(PeerPool::new(config.addresses(), transport_opts.clone()));
    let meta = Arc::new(MetadataService::new(node_id, node_count, index, Arc::clone(&peers)));
    let data = DataPlane::new(
        Arc::clone(&meta),
        store,
        Arc::clone(&peers),
        codec,
        config.cache_capacity_bytes,
    );
    let node = Arc::new(Node::new(meta, data, peers, manifest.digest()));
    let server = transport::serve_listener(
        listener,
        Arc::new(NodeHandler(Arc::downgrade(&node))),
        &transport_opts,
    )?;
    node.attach_server(server);

    // Peers may still be starting; keep retrying until the deadline.
    let deadline = Instant::now() + options.peer_wait;
    loop {
        match node.data().replicate_broadcast() {
            Ok(n) => {
                if n > 0 {
                    info!("node {node_id}: pulled {n} broadcast files");
                }
                break;
            }
            Err(e) if e.is_retriable() && Instant::now() < deadline => {
                warn!("node {node_id}: broadcast pull incomplete ({e}), retrying");
                std::thread::sleep(Duration::from_millis(100));
            }
            Err(e) => return Err(e),
        }
    }
    node.set_ready();
    info!("node {node_id}: ready");
    Ok(node)
}
