//! Replicated input namespace and hash-placed output metadata.
//!
//! Input metadata is loaded identically on every node from the manifest and
//! never changes, so `stat` and `readdir` on input paths are answered from
//! local memory. Output metadata has exactly one home, the node chosen by
//! [`owner_of_output`], and only appears there once the writer has closed.

use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use dashmap::mapref::entry::Entry;
use dashmap::DashMap;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::partition::{FileMeta, PartitionManifest};
use crate::path;
use crate::transport::PeerPool;

pub type NodeId = u32;

/// Where the bytes of an input file live.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileLocation {
    pub partition_id: u32,
    pub owner_nodes: Vec<NodeId>,
    pub data_offset: u64,
    pub stored_size: u64,
    pub uncompressed_size: u64,
    pub compressed: bool,
    /// Set for files under a broadcast directory (or full broadcast): every
    /// node keeps a local copy regardless of `owner_nodes`.
    pub replicated_everywhere: bool,
}

impl FileLocation {
    pub fn compressed_size(&self) -> u64 {
        if self.compressed {
            self.stored_size
        } else {
            0
        }
    }

    pub fn is_local_to(&self, node: NodeId) -> bool {
        self.replicated_everywhere || self.owner_nodes.contains(&node)
    }
}

#[derive(Debug, Clone)]
pub struct FileRecord {
    pub meta: FileMeta,
    pub location: FileLocation,
}

/// Global path to metadata map plus precomputed directory listings.
#[derive(Debug, Clone, Default)]
pub struct NamespaceIndex {
    files: HashMap<String, FileRecord>,
    dirs: HashMap<String, Vec<String>>,
}

impl NamespaceIndex {
    pub fn file(&self, path: &str) -> Option<&FileRecord> {
        self.files.get(path)
    }

    pub fn is_dir(&self, path: &str) -> bool {
        self.dirs.contains_key(path)
    }

    pub fn contains(&self, path: &str) -> bool {
        self.files.contains_key(path) || self.dirs.contains_key(path)
    }

    /// Input-only lookup; `None` means the path may be an output.
    pub fn stat(&self, path: &str) -> Option<FileMeta> {
        if let Some(r) = self.files.get(path) {
            Some(r.meta)
        } else if self.dirs.contains_key(path) {
            Some(FileMeta::directory())
        } else {
            None
        }
    }

    pub fn readdir(&self, path: &str) -> Result<&[String]> {
        match self.dirs.get(path) {
            Some(children) => Ok(children),
            None if self.files.contains_key(path) => Err(Error::NotADirectory(path.to_string())),
            None => Err(Error::NotFound(path.to_string())),
        }
    }

    pub fn files(&self) -> impl Iterator<Item = (&str, &FileRecord)> {
        self.files.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn file_count(&self) -> usize {
        self.files.len()
    }

    pub fn dir_count(&self) -> usize {
        self.dirs.len()
    }

    /// SHA-256 over a canonical, sorted serialization of the whole index.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let files: BTreeMap<_, _> = self.files.iter().collect();
        for (p, r) in files {
            h.update(b"F");
            h.update((p.len() as u64).to_le_bytes());
            h.update(p.as_bytes());
            h.update(r.meta.to_bytes());
            let l = &r.location;
            h.update(l.partition_id.to_le_bytes());
            h.update((l.owner_nodes.len() as u64).to_le_bytes());
            for n in &l.owner_nodes {
                h.update(n.to_le_bytes());
            }
            h.update(l.data_offset.to_le_bytes());
            h.update(l.stored_size.to_le_bytes());
            h.update(l.uncompressed_size.to_le_bytes());
            h.update([l.compressed as u8, l.replicated_everywhere as u8]);
        }
        let dirs: BTreeMap<_, _> = self.dirs.iter().collect();
        for (d, children) in dirs {
            h.update(b"D");
            h.update((d.len() as u64).to_le_bytes());
            h.update(d.as_bytes());
            h.update((children.len() as u64).to_le_bytes());
            for c in children {
                h.update((c.len() as u64).to_le_bytes());
                h.update(c.as_bytes());
            }
        }
        h.finalize().into()
    }
}

/// Builds the replicated index. `assignment[p]` lists the nodes holding
/// partition `p`.
pub fn load_namespace(
    manifest: &PartitionManifest,
    assignment: &[Vec<NodeId>],
    replicated_dirs: &[String],
) -> Result<NamespaceIndex> {
    if assignment.len() != manifest.partition_count as usize {
        return Err(Error::InvalidArgument(format!(
            "assignment covers {} partitions, manifest has {}",
            assignment.len(),
            manifest.partition_count
        )));
    }
    if let Some(p) = assignment.iter().position(Vec::is_empty) {
        return Err(Error::InvalidArgument(format!("partition {p} has no owner")));
    }
    let replicated: Vec<String> = replicated_dirs
        .iter()
        .map(|d| path::normalize(d))
        .collect::<Result<_>>()?;

    let mut dirs: HashMap<String, Vec<String>> = HashMap::new();
    for d in &manifest.directories {
        dirs.entry(d.clone()).or_default();
    }
    dirs.entry(String::new()).or_default();

    let mut files = HashMap::with_capacity(manifest.entries.len());
    for e in &manifest.entries {
        let location = FileLocation {
            partition_id: e.partition_id,
            owner_nodes: assignment[e.partition_id as usize].clone(),
            data_offset: e.data_offset,
            stored_size: if e.compressed_size == 0 {
                e.meta.size_bytes
            } else {
                e.compressed_size
            },
            uncompressed_size: e.meta.size_bytes,
            compressed: e.compressed_size != 0,
            replicated_everywhere: replicated.iter().any(|d| path::is_within(&e.path, d)),
        };
        files.insert(
            e.path.clone(),
            FileRecord {
                meta: e.meta,
                location,
            },
        );
        for a in path::ancestors(&e.path) {
            dirs.entry(a.to_string()).or_default();
        }
    }
    // children from every known path
    let all: Vec<String> = files.keys().chain(dirs.keys()).cloned().collect();
    for p in all {
        if let Some(parent) = path::parent(&p) {
            dirs.get_mut(parent)
                .expect("ancestor closure")
                .push(path::file_name(&p).to_string());
        }
    }
    for children in dirs.values_mut() {
        children.sort();
        children.dedup();
    }
    Ok(NamespaceIndex { files, dirs })
}

/// Node holding the metadata of output `path` in a cluster of `node_count`.
pub fn owner_of_output(path: &str, node_count: u32) -> NodeId {
    assert!(node_count >= 1, "node count must be positive");
    (fnv1a64(path.as_bytes()) % u64::from(node_count)) as NodeId
}

/// Committed output metadata plus the node that keeps the bytes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OutputRecord {
    pub meta: FileMeta,
    pub writer: NodeId,
}

#[derive(Debug, Default)]
pub struct OutputMetaTable {
    entries: DashMap<String, OutputRecord>,
}

impl OutputMetaTable {
    pub fn commit(&self, path: &str, record: OutputRecord) -> Result<()> {
        match self.entries.entry(path.to_string()) {
            Entry::Occupied(_) => Err(Error::AlreadyExists(path.to_string())),
            Entry::Vacant(v) => {
                v.insert(record);
                Ok(())
            }
        }
    }

    pub fn get(&self, path: &str) -> Option<OutputRecord> {
        self.entries.get(path).map(|r| *r)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Per-node metadata front end: local index, local output table, and
/// routing of output lookups and commits to their owner.
pub struct MetadataService {
    node_id: NodeId,
    node_count: u32,
    index: Arc<NamespaceIndex>,
    outputs: OutputMetaTable,
    peers: Arc<PeerPool>,
}

impl MetadataService {
    pub fn new(node_id: NodeId, node_count: u32, index: Arc<NamespaceIndex>, peers: Arc<PeerPool>) -> Self {
        MetadataService {
            node_id,
            node_count,
            index,
            outputs: OutputMetaTable::default(),
            peers,
        }
    }

    pub fn index(&self) -> &Arc<NamespaceIndex> {
        &self.index
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn outputs(&self) -> &OutputMetaTable {
        &self.outputs
    }

    pub fn stat(&self, path: &str) -> Result<FileMeta> {
        match self.index.stat(path) {
            Some(meta) => Ok(meta),
            None => self.locate_output(path).map(|r| r.meta),
        }
    }

    pub fn readdir(&self, path: &str) -> Result<Vec<String>> {
        self.index.readdir(path).map(<[String]>::to_vec)
    }

    pub fn output_owner(&self, path: &str) -> NodeId {
        owner_of_output(path, self.node_count)
    }

    /// Finds a committed output, asking its owner when that is not us.
    pub fn locate_output(&self, path: &str) -> Result<OutputRecord> {
        let owner = self.output_owner(path);
        if owner == self.node_id {
            self.outputs
                .get(path)
                .ok_or_else(|| Error::NotFound(path.to_string()))
        } else {
            self.peers.stat_output(owner, path)
        }
    }

    /// Owner-side lookup serving a remote STAT_OUTPUT.
    pub fn stat_output_local(&self, path: &str) -> Result<OutputRecord> {
        self.check_owner(path)?;
        self.outputs
            .get(path)
            .ok_or_else(|| Error::NotFound(path.to_string()))
    }

    /// Owner-side insert serving a local close or a remote COMMIT_META.
    pub fn commit_local(&self, path: &str, record: OutputRecord) -> Result<()> {
        self.check_owner(path)?;
        if self.index.contains(path) {
            return Err(Error::AlreadyExists(path.to_string()));
        }
        self.outputs.commit(path, record)
    }

    /// Forwards a finished output's metadata to its owner.
    pub fn commit_output(&self, path: &str, meta: FileMeta) -> Result<()> {
        let record = OutputRecord {
            meta,
            writer: self.node_id,
        };
        let owner = self.output_owner(path);
        if owner == self.node_id {
            self.commit_local(path, record)
        } else {
            self.peers.commit(owner, path, &record)
        }
    }

    fn check_owner(&self, path: &str) -> Result<()> {
        if self.output_owner(path) != self.node_id {
            return Err(Error::NotOwner {
                node: self.node_id,
                path: path.to_string(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::ManifestEntry;

    fn entry(path: &str, pid: u32, size: u64) -> ManifestEntry {
        ManifestEntry {
            path: path.into(),
            meta: FileMeta {
                size_bytes: size,
                ..FileMeta::default()
            },
            partition_id: pid,
            data_offset: 412,
            compressed_size: 0,
        }
    }

    fn manifest(entries: Vec<ManifestEntry>, partitions: u32) -> PartitionManifest {
        let mut directories: Vec<String> = entries
            .iter()
            .flat_map(|e| path::ancestors(&e.path).map(str::to_string))
            .collect();
        directories.push(String::new());
        directories.sort();
        directories.dedup();
        PartitionManifest {
            partition_count: partitions,
            codec: crate::codec::CodecId::IDENTITY,
            codec_level: 0,
            entries,
            directories,
        }
    }

    #[test]
    fn single_node_listing() {
        let m = manifest(vec![entry("d/b", 0, 1), entry("d/a", 0, 2)], 1);
        let idx = load_namespace(&m, &[vec![0]], &[]).unwrap();
        assert_eq!(idx.readdir("d").unwrap(), ["a", "b"]);
        assert_eq!(idx.readdir("").unwrap(), ["d"]);
        let mut dirs: Vec<_> = idx.dirs.keys().cloned().collect();
        dirs.sort();
        assert_eq!(dirs, ["", "d"]);
        assert!(matches!(idx.readdir("d/a"), Err(Error::NotADirectory(_))));
        assert!(matches!(idx.readdir("nope"), Err(Error::NotFound(_))));
        assert!(idx.stat("d").unwrap().is_dir());
        assert_eq!(idx.stat("d/a").unwrap().size_bytes, 2);
    }

    #[test]
    fn empty_manifest_has_empty_root() {
        let m = manifest(vec![], 1);
        let idx = load_namespace(&m, &[vec![0]], &[]).unwrap();
        assert!(idx.readdir("").unwrap().is_empty());
    }

    #[test]
    fn owners_follow_assignment() {
        let entries = (0..8).map(|i| entry(&format!("f{i}"), i % 4, 1)).collect();
        let m = manifest(entries, 4);
        let assignment: Vec<Vec<u32>> = (0..4).map(|i| vec![i % 2]).collect();
        let idx = load_namespace(&m, &assignment, &[]).unwrap();
        for (p, r) in idx.files() {
            let pid: u32 = p[1..].parse::<u32>().unwrap() % 4;
            assert_eq!(r.location.owner_nodes, vec![pid % 2]);
        }
    }

    #[test]
    fn replicated_dirs_are_flagged() {
        let m = manifest(vec![entry("val/x", 0, 1), entry("train/y", 0, 1), entry("valley/z", 0, 1)], 1);
        let idx = load_namespace(&m, &[vec![0]], &["val".into()]).unwrap();
        assert!(idx.file("val/x").unwrap().location.replicated_everywhere);
        assert!(!idx.file("train/y").unwrap().location.replicated_everywhere);
        assert!(!idx.file("valley/z").unwrap().location.replicated_everywhere);
    }

    #[test]
    fn assignment_mismatch_is_rejected() {
        let m = manifest(vec![entry("a", 1, 1)], 2);
        assert!(load_namespace(&m, &[vec![0]], &[]).is_err());
        assert!(load_namespace(&m, &[vec![0], vec![]], &[]).is_err());
    }

    #[test]
    fn digest_is_order_independent() {
        let a = manifest(vec![entry("x/1", 0, 1), entry("y/2", 0, 2)], 1);
        let b = manifest(vec![entry("y/2", 0, 2), entry("x/1", 0, 1)], 1);
        let ia = load_namespace(&a, &[vec![0]], &[]).unwrap();
        let ib = load_namespace(&b, &[vec![0]], &[]).unwrap();
        assert_eq!(ia.digest(), ib.digest());
        let ic = load_namespace(&a, &[vec![0]], &["x".into()]).unwrap();
        assert_ne!(ia.digest(), ic.digest());
    }

    #[test]
    fn single_node_owns_every_output() {
        for p in ["a", "checkpoint_epoch_7.h5", ""] {
            assert_eq!(owner_of_output(p, 1), 0);
        }
    }

    #[test]
    fn output_table_rejects_second_commit() {
        let t = OutputMetaTable::default();
        let r = OutputRecord {
            meta: FileMeta::default(),
            writer: 0,
        };
        assert!(t.get("ckpt").is_none());
        t.commit("ckpt", r).unwrap();
        assert!(matches!(t.commit("ckpt", r), Err(Error::AlreadyExists(_))));
        assert_eq!(t.get("ckpt"), Some(r));
    }
}
