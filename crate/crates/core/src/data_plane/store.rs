//! Node-local storage.
//!
//! ```text
//! <root>/parts/part.<id>    partitions assigned to this node, verbatim
//! <root>/bcast/<name>       stored bytes of broadcast-directory files
//! <root>/out/<name>         output files written on this node
//! ```
//!
//! `<name>` is the 16 hex digit FNV-1a hash of the canonical path, `_`, and
//! the path with `%` and `/` percent-encoded. Paths whose encoding exceeds
//! 200 bytes use the hex SHA-256 of the path instead of the encoding.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use dashmap::DashSet;
use log::info;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::hash::fnv1a64;
use crate::partition::{self, PartitionEntry, PartitionManifest};

struct StoredPartition {
    file: File,
    entries: HashMap<String, PartitionEntry>,
}

pub struct LocalStore {
    root: PathBuf,
    partitions: HashMap<u32, StoredPartition>,
    broadcast: DashSet<String>,
}

pub fn flat_name(path: &str) -> String {
    let mut enc = String::with_capacity(path.len());
    for c in path.chars() {
        match c {
            '%' => enc.push_str("%25"),
            '/' => enc.push_str("%2F"),
            c => enc.push(c),
        }
    }
    let hash = fnv1a64(path.as_bytes());
    if enc.len() > 200 {
        format!("{hash:016x}_{}", hex::encode(Sha256::digest(path.as_bytes())))
    } else {
        format!("{hash:016x}_{enc}")
    }
}

impl LocalStore {
    /// Prepares `root` holding `partitions`. A partition missing from
    /// `root/parts` is copied in from `source_dir` when given. Every held
    /// partition is scanned and must agree with the manifest.
    pub fn open(
        root: &Path,
        partitions: &[u32],
        source_dir: Option<&Path>,
        manifest: &PartitionManifest,
    ) -> Result<LocalStore> {
        let parts = root.join("parts");
        for d in [&parts, &root.join("bcast"), &root.join("out")] {
            fs::create_dir_all(d)?;
        }
        let mut held = HashMap::new();
        for &pid in partitions {
            let local = partition::partition_path(&parts, pid);
            if !local.exists() {
                let src = source_dir
                    .map(|d| partition::partition_path(d, pid))
                    .filter(|p| p.exists())
                    .ok_or_else(|| Error::NotFound(format!("partition file {}", local.display())))?;
                let tmp = local.with_extension("staging");
                fs::copy(&src, &tmp)?;
                fs::rename(&tmp, &local)?;
                info!("staged {} -> {}", src.display(), local.display());
            }
            let scanned = partition::read_partition_index(&local)?;
            verify_against_manifest(&local, pid, &scanned, manifest)?;
            held.insert(
                pid,
                StoredPartition {
                    file: File::open(&local)?,
                    entries: scanned.into_iter().map(|e| (e.file_name.clone(), e)).collect(),
                },
            );
        }
        Ok(LocalStore {
            root: root.to_path_buf(),
            partitions: held,
            broadcast: DashSet::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn holds(&self, pid: u32) -> bool {
        self.partitions.contains_key(&pid)
    }

    pub fn held_partitions(&self) -> Vec<u32> {
        let mut v: Vec<u32> = self.partitions.keys().copied().collect();
        v.sort();
        v
    }

    /// Stored bytes and the entry describing them.
    pub fn read_stored(&self, pid: u32, path: &str) -> Result<(Vec<u8>, &PartitionEntry)> {
        let p = self
            .partitions
            .get(&pid)
            .ok_or_else(|| Error::NotFound(format!("partition {pid} is not held here")))?;
        let entry = p
            .entries
            .get(path)
            .ok_or_else(|| Error::NotFound(path.to_string()))?;
        Ok((partition::read_stored(&p.file, entry)?, entry))
    }

    fn bcast_path(&self, path: &str) -> PathBuf {
        self.root.join("bcast").join(flat_name(path))
    }

    pub fn put_broadcast(&self, path: &str, stored: &[u8]) -> Result<()> {
        let target = self.bcast_path(path);
        let tmp = target.with_extension("partial");
        fs::write(&tmp, stored)?;
        fs::rename(&tmp, &target)?;
        self.broadcast.insert(path.to_string());
        Ok(())
    }

    pub fn has_broadcast(&self, path: &str) -> bool {
        self.broadcast.contains(path)
    }

    pub fn read_broadcast(&self, path: &str) -> Result<Vec<u8>> {
        if !self.has_broadcast(path) {
            return Err(Error::NotFound(path.to_string()));
        }
        Ok(fs::read(self.bcast_path(path))?)
    }

    pub fn output_path(&self, path: &str) -> PathBuf {
        self.root.join("out").join(flat_name(path))
    }

    /// Creates the output file, failing if this node already has one.
    pub fn create_output(&self, path: &str) -> Result<(File, PathBuf)> {
        let target = self.output_path(path);
        match OpenOptions::new().write(true).create_new(true).open(&target) {
            Ok(f) => Ok((f, target)),
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(Error::AlreadyExists(path.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn read_output(&self, path: &str) -> Result<Vec<u8>> {
        match fs::read(self.output_path(path)) {
            Ok(b) => Ok(b),
            Err(e) if e.kind() == ErrorKind::NotFound => Err(Error::NotFound(path.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn remove_output(&self, path: &str) {
        let _ = fs::remove_file(self.output_path(path));
    }
}

fn verify_against_manifest(
    local: &Path,
    pid: u32,
    scanned: &[PartitionEntry],
    manifest: &PartitionManifest,
) -> Result<()> {
    let expected: Vec<_> = manifest.entries_in(pid).collect();
    if expected.len() != scanned.len() {
        return Err(Error::corrupt_partition(
            local,
            scanned.len().min(expected.len()) as u32,
            format!(
                "manifest lists {} entries, partition holds {}",
                expected.len(),
                scanned.len()
            ),
        ));
    }
    for (i, (m, s)) in expected.iter().zip(scanned).enumerate() {
        if m.path != s.file_name
            || m.meta != s.meta
            || m.data_offset != s.data_offset
            || m.compressed_size != s.compressed_size
        {
            return Err(Error::corrupt_partition(
                local,
                i as u32,
                format!("entry {} disagrees with manifest", s.file_name),
            ));
        }
    }
    Ok(())
}
