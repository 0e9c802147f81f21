//! Manifest sidecar written next to the partitions.
//!
//! Line oriented UTF-8, one record per line, fields separated by a single
//! space. The path is always the last field so it may contain spaces.
//!
//! ```text
//! FANSMAN1
//! codec <codec id> <level>
//! partitions <count>
//! dir <path>                                              (one per directory, root is empty)
//! file <partition> <data offset> <compressed size> <288 hex chars of FileMeta> <path>
//! end <sha256 hex of every preceding byte>
//! ```

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::FileMeta;
use crate::codec::CodecId;
use crate::error::{Error, Result};
use crate::path;

pub const MANIFEST_MAGIC: &str = "FANSMAN1";
pub const MANIFEST_FILE_NAME: &str = "fanstore.manifest";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: String,
    pub meta: FileMeta,
    pub partition_id: u32,
    pub data_offset: u64,
    pub compressed_size: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionManifest {
    pub partition_count: u32,
    pub codec: CodecId,
    pub codec_level: u8,
    pub entries: Vec<ManifestEntry>,
    pub directories: Vec<String>,
}

impl PartitionManifest {
    /// Text without the trailing `end` line.
    fn body(&self) -> String {
        let mut s = String::new();
        writeln!(s, "{MANIFEST_MAGIC}").unwrap();
        writeln!(s, "codec {} {}", self.codec.0, self.codec_level).unwrap();
        writeln!(s, "partitions {}", self.partition_count).unwrap();
        for d in &self.directories {
            writeln!(s, "dir {d}").unwrap();
        }
        for e in &self.entries {
            writeln!(
                s,
                "file {} {} {} {} {}",
                e.partition_id,
                e.data_offset,
                e.compressed_size,
                hex::encode(e.meta.to_bytes()),
                e.path
            )
            .unwrap();
        }
        s
    }

    pub fn encode(&self) -> String {
        let mut body = self.body();
        let digest = hex::encode(Sha256::digest(body.as_bytes()));
        writeln!(body, "end {digest}").unwrap();
        body
    }

    /// SHA-256 of the manifest body; identifies a packed dataset.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.body().as_bytes()).into()
    }

    pub fn parse(text: &str) -> Result<PartitionManifest> {
        let bad = |line: usize, why: &str| Error::Corrupt(format!("manifest line {}: {why}", line + 1));

        let end_at = text
            .rfind("\nend ")
            .ok_or_else(|| Error::Corrupt("manifest has no end record".into()))?
            + 1;
        let body = &text[..end_at];
        let claimed = text[end_at + 4..].trim_end_matches('\n');
        if hex::encode(Sha256::digest(body.as_bytes())) != claimed {
            return Err(Error::Corrupt("manifest digest mismatch".into()));
        }

        let mut lines = body.lines().enumerate();
        match lines.next() {
            Some((_, MANIFEST_MAGIC)) => {}
            _ => return Err(Error::Corrupt("missing FANSMAN1 magic".into())),
        }
        let mut codec = None;
        let mut partition_count = None;
        let mut entries = Vec::new();
        let mut directories = Vec::new();
        for (n, line) in lines {
            let (tag, rest) = line.split_once(' ').unwrap_or((line, ""));
            match tag {
                "codec" => {
                    let (id, level) = rest.split_once(' ').ok_or_else(|| bad(n, "codec"))?;
                    codec = Some((
                        id.parse::<u8>().map_err(|_| bad(n, "codec id"))?,
                        level.parse::<u8>().map_err(|_| bad(n, "codec level"))?,
                    ));
                }
                "partitions" => {
                    partition_count = Some(rest.parse::<u32>().map_err(|_| bad(n, "count"))?)
                }
                "dir" => directories.push(rest.to_string()),
                "file" => {
                    let mut f = rest.splitn(5, ' ');
                    let mut next = || f.next().ok_or_else(|| bad(n, "short file record"));
                    let partition_id = next()?.parse().map_err(|_| bad(n, "partition id"))?;
                    let data_offset = next()?.parse().map_err(|_| bad(n, "data offset"))?;
                    let compressed_size = next()?.parse().map_err(|_| bad(n, "compressed size"))?;
                    let meta_hex = hex::decode(next()?).map_err(|_| bad(n, "meta hex"))?;
                    let meta = FileMeta::from_bytes(&meta_hex)?;
                    let path = next()?.to_string();
                    entries.push(ManifestEntry {
                        path,
                        meta,
                        partition_id,
                        data_offset,
                        compressed_size,
                    });
                }
                _ => return Err(bad(n, "unknown record")),
            }
        }
        let (id, level) = codec.ok_or_else(|| Error::Corrupt("manifest lacks codec".into()))?;
        let manifest = PartitionManifest {
            partition_count: partition_count
                .ok_or_else(|| Error::Corrupt("manifest lacks partition count".into()))?,
            codec: CodecId(id),
            codec_level: level,
            entries,
            directories,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    /// Checks exclusivity of entries and closure of the directory list.
    pub fn validate(&self) -> Result<()> {
        let dirs: HashSet<&str> = self.directories.iter().map(String::as_str).collect();
        let mut seen = HashSet::with_capacity(self.entries.len());
        for e in &self.entries {
            if e.partition_id >= self.partition_count {
                return Err(Error::Corrupt(format!(
                    "{} assigned to partition {} of {}",
                    e.path, e.partition_id, self.partition_count
                )));
            }
            if !seen.insert(e.path.as_str()) {
                return Err(Error::Corrupt(format!("{} listed twice", e.path)));
            }
            if let Some(missing) = path::ancestors(&e.path).find(|a| !dirs.contains(a)) {
                return Err(Error::Corrupt(format!(
                    "directory {missing:?} of {} missing from manifest",
                    e.path
                )));
            }
        }
        Ok(())
    }

    pub fn entries_in(&self, partition_id: u32) -> impl Iterator<Item = &ManifestEntry> {
        self.entries
            .iter()
            .filter(move |e| e.partition_id == partition_id)
    }

    pub fn write_to(&self, file: &Path) -> Result<()> {
        std::fs::write(file, self.encode())?;
        Ok(())
    }

    pub fn load(file: &Path) -> Result<PartitionManifest> {
        let text = std::fs::read_to_string(file)?;
        Self::parse(&text)
    }
}
