//! A transient distributed file store for deep-learning datasets.
//!
//! A dataset is packed once into partitions plus a manifest. Each node of a
//! cluster loads its share of the partitions onto local storage, keeps the
//! whole namespace in memory, and serves file contents to its peers.
//! Applications read and write through [`client::FanStore`], a POSIX-like
//! facade over a mount prefix.
//!
//! ```no_run
//! use fanstore::cluster::{ClusterSetup, LocalCluster};
//! use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};
//! # fn main() -> fanstore::Result<()> {
//! let files = ["train/a.jpg", "train/b.jpg"];
//! pack_dataset(&files, "data".as_ref(), 4, &PackOptions::default(), "packed".as_ref())?;
//! let cluster = LocalCluster::start_in_process(
//!     &ClusterSetup::new(2),
//!     &std::path::Path::new("packed").join(MANIFEST_FILE_NAME),
//!     "work".as_ref(),
//! )?;
//! let fs = cluster.client(0);
//! let bytes = fs.read_file("/fanstore/local/train/a.jpg")?;
//! # let _ = bytes; Ok(()) }
//! ```

pub mod bench;
pub mod client;
pub mod cluster;
pub mod codec;
pub mod data_plane;
pub mod error;
pub mod hash;
pub mod metadata;
pub mod node;
pub mod partition;
pub mod path;
pub mod transport;

pub use client::{ClientOptions, FanStore, MountMap, OpenMode};
pub use error::{Error, Result};
pub use node::{Node, NodeStats};
