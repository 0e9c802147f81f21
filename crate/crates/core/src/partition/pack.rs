use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;

use super::{
    encode_name, partition_path, FileMeta, ManifestEntry, PartitionManifest, ENTRY_HEADER_LEN,
    MANIFEST_FILE_NAME,
};
use crate::codec::{Codec, CodecId, CodecRegistry};
use crate::error::{Error, Result};
use crate::path;

#[derive(Clone, Default)]
pub struct PackOptions {
    /// `None` stores every file raw and records the identity codec.
    pub codec: Option<CodecId>,
    /// Defaults to the codec's own default level.
    pub level: Option<u8>,
    pub registry: CodecRegistry,
    /// Partitions written concurrently; 0 picks the available parallelism.
    pub workers: usize,
}

impl PackOptions {
    pub fn compressed(codec: CodecId) -> Self {
        PackOptions {
            codec: Some(codec),
            ..Default::default()
        }
    }
}

struct Source {
    rel: String,
    abs: PathBuf,
}

/// Packs `file_list` (paths relative to `root`, or absolute paths below it)
/// into `partition_count` partitions in `out_dir`, assigning files
/// round-robin in list order, and writes the manifest alongside.
pub fn pack_dataset<P: AsRef<Path>>(
    file_list: &[P],
    root: &Path,
    partition_count: u32,
    options: &PackOptions,
    out_dir: &Path,
) -> Result<PartitionManifest> {
    if partition_count == 0 {
        return Err(Error::InvalidArgument("partition count must be at least 1".into()));
    }
    let (codec, level) = match options.codec {
        Some(id) => {
            let codec = options.registry.get(id)?;
            let level = options.level.unwrap_or_else(|| codec.default_level());
            codec.check_level(level)?;
            (Some(codec), level)
        }
        None => (None, 0),
    };

    let mut sources = Vec::with_capacity(file_list.len());
    for p in file_list {
        let p = p.as_ref();
        let rel = if p.is_absolute() {
            p.strip_prefix(root).map_err(|_| {
                Error::InvalidArgument(format!("{} is outside {}", p.display(), root.display()))
            })?
        } else {
            p
        };
        let rel_str = rel
            .to_str()
            .ok_or_else(|| Error::InvalidArgument(format!("non UTF-8 path {}", rel.display())))?;
        let rel = path::normalize(rel_str)?;
        if rel.is_empty() || rel.contains('\n') {
            return Err(Error::InvalidArgument(format!("unusable file path {rel_str:?}")));
        }
        encode_name(&rel)?;
        sources.push(Source {
            abs: root.join(&rel),
            rel,
        });
    }

    fs::create_dir_all(out_dir)?;

    let mut per_partition: Vec<Vec<usize>> = vec![Vec::new(); partition_count as usize];
    for i in 0..sources.len() {
        per_partition[i % partition_count as usize].push(i);
    }

    let workers = match options.workers {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
    .min(partition_count as usize)
    .max(1);

    let next = AtomicU32::new(0);
    let codec = codec.as_ref().map(|c| (Arc::clone(c), level));
    let results: Vec<Result<Vec<(usize, ManifestEntry)>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|_| {
                s.spawn(|| {
                    let mut done = Vec::new();
                    loop {
                        let pid = next.fetch_add(1, Ordering::Relaxed);
                        if pid >= partition_count {
                            break;
                        }
                        let members = &per_partition[pid as usize];
                        done.extend(write_partition(
                            &partition_path(out_dir, pid),
                            pid,
                            members.iter().map(|&i| (i, &sources[i])),
                            codec.as_ref().map(|(c, l)| (c.as_ref(), *l)),
                        )?);
                    }
                    Ok(done)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("pack worker panicked")).collect()
    });

    let mut indexed = Vec::with_capacity(sources.len());
    for r in results {
        indexed.extend(r?);
    }
    indexed.sort_by_key(|(i, _)| *i);
    let entries: Vec<ManifestEntry> = indexed.into_iter().map(|(_, e)| e).collect();

    let mut directories: Vec<String> = entries
        .iter()
        .flat_map(|e| path::ancestors(&e.path).map(str::to_string))
        .collect();
    if directories.is_empty() {
        directories.push(String::new());
    }
    directories.sort();
    directories.dedup();

    let manifest = PartitionManifest {
        partition_count,
        codec: codec.as_ref().map_or(CodecId::IDENTITY, |(c, _)| c.id()),
        codec_level: level,
        entries,
        directories,
    };
    manifest.validate()?;
    manifest.write_to(&out_dir.join(MANIFEST_FILE_NAME))?;
    Ok(manifest)
}

fn write_partition<'a>(
    target: &Path,
    pid: u32,
    members: impl ExactSizeIterator<Item = (usize, &'a Source)>,
    codec: Option<(&dyn Codec, u8)>,
) -> Result<Vec<(usize, ManifestEntry)>> {
    let mut out = BufWriter::new(File::create(target)?);
    let count = u32::try_from(members.len())
        .map_err(|_| Error::InvalidArgument("too many files for one partition".into()))?;
    out.write_all(&count.to_le_bytes())?;
    let mut pos = super::COUNT_LEN;

    let mut entries = Vec::with_capacity(count as usize);
    for (index, src) in members {
        let md = fs::metadata(&src.abs)?;
        if !md.is_file() {
            return Err(Error::InvalidArgument(format!(
                "{} is not a regular file",
                src.abs.display()
            )));
        }
        let data = fs::read(&src.abs)?;
        let mut meta = FileMeta::from_std(&md);
        meta.size_bytes = data.len() as u64;
        // reading the source moves atime; pin it so repacking is reproducible
        meta.atime_sec = meta.mtime_sec;
        meta.atime_nsec = meta.mtime_nsec;

        let compressed = match codec {
            Some((c, level)) => Some(c.compress(&data, level)?).filter(|z| z.len() < data.len()),
            None => None,
        };
        let (stored, compressed_size) = match &compressed {
            Some(z) => (z.as_slice(), z.len() as u64),
            None => (data.as_slice(), 0),
        };

        out.write_all(&encode_name(&src.rel)?)?;
        out.write_all(&meta.to_bytes())?;
        out.write_all(&compressed_size.to_le_bytes())?;
        out.write_all(stored)?;

        let data_offset = pos + ENTRY_HEADER_LEN;
        pos = data_offset + stored.len() as u64;
        entries.push((
            index,
            ManifestEntry {
                path: src.rel.clone(),
                meta,
                partition_id: pid,
                data_offset,
                compressed_size,
            },
        ));
    }
    out.flush()?;
    Ok(entries)
}
