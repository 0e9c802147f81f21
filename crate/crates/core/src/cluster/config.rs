use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metadata::NodeId;
use crate::transport::TransportOptions;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeConfig {
    pub id: NodeId,
    pub host: String,
    pub port: u16,
    /// Node-local storage directory.
    pub root: PathBuf,
}

impl NodeConfig {
    pub fn address(&self) -> String {
        format!("{}:{}", self.host, self.port)
    }
}

/// Static cluster description, one TOML file shared by every node.
///
/// ```toml
/// version = 1
/// replication = 2
/// replicated_dirs = ["val"]
///
/// [[nodes]]
/// id = 0
/// host = "127.0.0.1"
/// port = 7400
/// root = "/tmp/fanstore/node0"
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub version: u32,
    #[serde(default = "one")]
    pub replication: u32,
    #[serde(default)]
    pub replicated_dirs: Vec<String>,
    #[serde(default)]
    pub full_broadcast: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mount_prefix: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_capacity_bytes: Option<u64>,
    pub nodes: Vec<NodeConfig>,
}

fn one() -> u32 {
    1
}

fn default_timeout() -> f64 {
    30.0
}

impl ClusterConfig {
    pub fn new(nodes: Vec<NodeConfig>) -> ClusterConfig {
        ClusterConfig {
            version: CONFIG_VERSION,
            replication: 1,
            replicated_dirs: Vec::new(),
            full_broadcast: false,
            mount_prefix: None,
            timeout_secs: default_timeout(),
            cache_capacity_bytes: None,
            nodes,
        }
    }

    pub fn node_count(&self) -> u32 {
        self.nodes.len() as u32
    }

    /// Replicas per partition once full broadcast is taken into account.
    pub fn effective_replication(&self) -> u32 {
        if self.full_broadcast {
            self.node_count()
        } else {
            self.replication
        }
    }

    pub fn node(&self, id: NodeId) -> Result<&NodeConfig> {
        self.nodes
            .get(id as usize)
            .ok_or_else(|| Error::InvalidArgument(format!("no node {id} in cluster config")))
    }

    pub fn addresses(&self) -> Vec<String> {
        self.nodes.iter().map(NodeConfig::address).collect()
    }

    pub fn transport_options(&self) -> TransportOptions {
        TransportOptions {
            timeout: Duration::from_secs_f64(self.timeout_secs),
            ..TransportOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::InvalidArgument(format!(
                "cluster config version {} (supported: {CONFIG_VERSION})",
                self.version
            )));
        }
        if self.nodes.is_empty() {
            return Err(Error::InvalidArgument("cluster has no nodes".into()));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id as usize != i {
                return Err(Error::InvalidArgument(format!(
                    "node ids must be dense and ordered: position {i} has id {}",
                    n.id
                )));
            }
        }
        if self.replication == 0 || self.replication > self.node_count() {
            return Err(Error::InvalidArgument(format!(
                "replication {} outside 1..={}",
                self.replication,
                self.node_count()
            )));
        }
        if self.timeout_secs.is_nan() || self.timeout_secs <= 0.0 {
            return Err(Error::InvalidArgument("timeout must be positive".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<ClusterConfig> {
        let cfg: ClusterConfig =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("cluster config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(file: &Path) -> Result<ClusterConfig> {
        Self::parse(&std::fs::read_to_string(file)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("cluster config serializes")
    }

    pub fn save(&self, file: &Path) -> Result<()> {
        std::fs::write(file, self.to_toml())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nodes(n: u32) -> Vec<NodeConfig> {
        (0..n)
            .map(|id| NodeConfig {
                id,
                host: "127.0.0.1".into(),
                port: 7000 + id as u16,
                root: format!("/tmp/n{id}").into(),
            })
            .collect()
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ClusterConfig::new(nodes(3));
        c.replication = 2;
        c.replicated_dirs = vec!["val".into()];
        let back = ClusterConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn minimal_file_gets_defaults() {
        let c = ClusterConfig::parse(
            "version = 1\n[[nodes]]\nid = 0\nhost = \"localhost\"\nport = 1\nroot = \"/x\"\n",
        )
        .unwrap();
        assert_eq!(c.replication, 1);
        assert!(!c.full_broadcast);
        assert_eq!(c.timeout_secs, 30.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ClusterConfig::new(nodes(2));
        c.replication = 3;
        assert!(c.validate().is_err());
        let mut c = ClusterConfig::new(nodes(2));
        c.nodes[1].id = 5;
        assert!(c.validate().is_err());
        let mut c = ClusterConfig::new(nodes(1));
        c.version = 2;
        assert!(c.validate().is_err());
    }

    #[test]
    fn full_broadcast_means_every_node() {
        let mut c = ClusterConfig::new(nodes(4));
        c.full_broadcast = true;
        assert_eq!(c.effective_replication(), 4);
    }
}
