//! On-disk partition layout.
//!
//! A partition is a 4-byte little-endian entry count followed by entries
//! laid out back to back:
//!
//! ```text
//! offset (relative to entry)  size  field
//! 0                           256   file name, NUL terminated and NUL padded
//! 256                         144   FileMeta
//! 400                         8     compressed_size (0 = stored raw)
//! 408                         n     data
//! ```
//!
//! For the first entry that puts the name at bytes 4..=259, the stat record
//! at 260..=403, compressed_size at 404..=411 and the data from byte 412.

mod manifest;
mod pack;

pub use manifest::{ManifestEntry, PartitionManifest, MANIFEST_FILE_NAME, MANIFEST_MAGIC};
pub use pack::{pack_dataset, PackOptions};

use std::fs::File;
use std::io::{BufReader, Read, Seek, SeekFrom};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use crate::codec::Codec;
use crate::error::{Error, Result};

pub const COUNT_LEN: u64 = 4;
pub const NAME_LEN: usize = 256;
pub const META_LEN: usize = 144;
pub const ENTRY_HEADER_LEN: u64 = (NAME_LEN + META_LEN + 8) as u64;
/// Longest relative path that fits the name field with its terminator.
pub const MAX_PATH_LEN: usize = NAME_LEN - 1;

pub const S_IFMT: u32 = 0o170000;
pub const S_IFDIR: u32 = 0o040000;
pub const S_IFREG: u32 = 0o100000;

pub fn partition_file_name(id: u32) -> String {
    format!("part.{id}")
}

/// Portable stat record stored with every file.
///
/// Serialized as the fields in declaration order, little-endian, followed by
/// zero padding up to [`META_LEN`] bytes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct FileMeta {
    pub size_bytes: u64,
    pub mode: u32,
    pub uid: u32,
    pub gid: u32,
    pub atime_sec: i64,
    pub mtime_sec: i64,
    pub ctime_sec: i64,
    pub atime_nsec: i64,
    pub mtime_nsec: i64,
    pub ctime_nsec: i64,
    pub ino: u64,
    pub dev: u64,
    pub nlink: u64,
    pub rdev: u64,
    pub blksize: u64,
    pub blocks: u64,
}

/// Bytes actually used by the fields; the rest of the record is padding.
const META_USED: usize = 8 + 4 * 3 + 8 * 12;

impl FileMeta {
    pub fn to_bytes(&self) -> [u8; META_LEN] {
        let mut out = [0u8; META_LEN];
        let mut w = &mut out[..];
        let mut put = |bytes: &[u8]| {
            w[..bytes.len()].copy_from_slice(bytes);
            w = &mut std::mem::take(&mut w)[bytes.len()..];
        };
        put(&self.size_bytes.to_le_bytes());
        put(&self.mode.to_le_bytes());
        put(&self.uid.to_le_bytes());
        put(&self.gid.to_le_bytes());
        for v in [
            self.atime_sec,
            self.mtime_sec,
            self.ctime_sec,
            self.atime_nsec,
            self.mtime_nsec,
            self.ctime_nsec,
        ] {
            put(&v.to_le_bytes());
        }
        for v in [
            self.ino,
            self.dev,
            self.nlink,
            self.rdev,
            self.blksize,
            self.blocks,
        ] {
            put(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<FileMeta> {
        if bytes.len() != META_LEN {
            return Err(Error::Corrupt(format!(
                "stat record is {} bytes, expected {META_LEN}",
                bytes.len()
            )));
        }
        if bytes[META_USED..].iter().any(|&b| b != 0) {
            return Err(Error::Corrupt("non-zero stat padding".into()));
        }
        let mut pos = 0;
        let mut take = |n: usize| {
            let s = &bytes[pos..pos + n];
            pos += n;
            s
        };
        let u64_ = |s: &[u8]| u64::from_le_bytes(s.try_into().unwrap());
        let i64_ = |s: &[u8]| i64::from_le_bytes(s.try_into().unwrap());
        let u32_ = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
        let meta = FileMeta {
            size_bytes: u64_(take(8)),
            mode: u32_(take(4)),
            uid: u32_(take(4)),
            gid: u32_(take(4)),
            atime_sec: i64_(take(8)),
            mtime_sec: i64_(take(8)),
            ctime_sec: i64_(take(8)),
            atime_nsec: i64_(take(8)),
            mtime_nsec: i64_(take(8)),
            ctime_nsec: i64_(take(8)),
            ino: u64_(take(8)),
            dev: u64_(take(8)),
            nlink: u64_(take(8)),
            rdev: u64_(take(8)),
            blksize: u64_(take(8)),
            blocks: u64_(take(8)),
        };
        for ns in [meta.atime_nsec, meta.mtime_nsec, meta.ctime_nsec] {
            if !(0..1_000_000_000).contains(&ns) {
                return Err(Error::Corrupt(format!("nanosecond field out of range: {ns}")));
            }
        }
        Ok(meta)
    }

    pub fn from_std(md: &std::fs::Metadata) -> FileMeta {
        use std::os::unix::fs::MetadataExt;
        FileMeta {
            size_bytes: md.size(),
            mode: md.mode(),
            uid: md.uid(),
            gid: md.gid(),
            atime_sec: md.atime(),
            mtime_sec: md.mtime(),
            ctime_sec: md.ctime(),
            atime_nsec: md.atime_nsec(),
            mtime_nsec: md.mtime_nsec(),
            ctime_nsec: md.ctime_nsec(),
            ino: md.ino(),
            dev: md.dev(),
            nlink: md.nlink(),
            rdev: md.rdev(),
            blksize: md.blksize(),
            blocks: md.blocks(),
        }
    }

    /// Synthetic record for a namespace directory.
    pub fn directory() -> FileMeta {
        FileMeta {
            size_bytes: 4096,
            mode: S_IFDIR | 0o755,
            nlink: 2,
            blksize: 4096,
            blocks: 8,
            ..FileMeta::default()
        }
    }

    pub fn is_dir(&self) -> bool {
        self.mode & S_IFMT == S_IFDIR
    }
}

/// One entry of a partition, as found by [`read_partition_index`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartitionEntry {
    pub file_name: String,
    pub meta: FileMeta,
    pub compressed_size: u64,
    pub data_offset: u64,
}

impl PartitionEntry {
    pub fn stored_len(&self) -> u64 {
        if self.compressed_size == 0 {
            self.meta.size_bytes
        } else {
            self.compressed_size
        }
    }

    pub fn is_compressed(&self) -> bool {
        self.compressed_size != 0
    }
}

pub(crate) fn encode_name(path: &str) -> Result<[u8; NAME_LEN]> {
    let bytes = path.as_bytes();
    if bytes.len() > MAX_PATH_LEN {
        return Err(Error::PathTooLong {
            path: path.to_string(),
            len: bytes.len(),
            max: MAX_PATH_LEN,
        });
    }
    let mut field = [0u8; NAME_LEN];
    field[..bytes.len()].copy_from_slice(bytes);
    Ok(field)
}

fn decode_name(field: &[u8]) -> std::result::Result<String, String> {
    let end = field
        .iter()
        .position(|&b| b == 0)
        .ok_or_else(|| "file name is not NUL terminated".to_string())?;
    if field[end..].iter().any(|&b| b != 0) {
        return Err("garbage in file name padding".into());
    }
    String::from_utf8(field[..end].to_vec()).map_err(|_| "file name is not UTF-8".into())
}

/// Walks the entry headers of a partition without loading file data.
pub fn read_partition_index(partition: &Path) -> Result<Vec<PartitionEntry>> {
    let file = File::open(partition)?;
    let file_len = file.metadata()?.len();
    let mut reader = BufReader::new(file);

    if file_len < COUNT_LEN {
        return Err(Error::corrupt_partition(partition, 0, "missing entry count"));
    }
    let mut count_buf = [0u8; 4];
    reader.read_exact(&mut count_buf)?;
    let count = u32::from_le_bytes(count_buf);

    let mut entries = Vec::with_capacity(count.min(1 << 16) as usize);
    let mut pos = COUNT_LEN;
    let mut header = [0u8; ENTRY_HEADER_LEN as usize];
    for i in 0..count {
        if pos + ENTRY_HEADER_LEN > file_len {
            return Err(Error::corrupt_partition(partition, i, "truncated entry header"));
        }
        reader.read_exact(&mut header)?;
        let file_name = decode_name(&header[..NAME_LEN])
            .map_err(|r| Error::corrupt_partition(partition, i, r))?;
        let meta = FileMeta::from_bytes(&header[NAME_LEN..NAME_LEN + META_LEN])
            .map_err(|e| Error::corrupt_partition(partition, i, e.to_string()))?;
        let compressed_size =
            u64::from_le_bytes(header[NAME_LEN + META_LEN..].try_into().unwrap());
        let entry = PartitionEntry {
            file_name,
            meta,
            compressed_size,
            data_offset: pos + ENTRY_HEADER_LEN,
        };
        let end = entry
            .data_offset
            .checked_add(entry.stored_len())
            .filter(|&end| end <= file_len)
            .ok_or_else(|| Error::corrupt_partition(partition, i, "truncated data region"))?;
        reader.seek(SeekFrom::Start(end))?;
        pos = end;
        entries.push(entry);
    }
    if pos != file_len {
        return Err(Error::corrupt_partition(
            partition,
            count,
            format!("{} trailing bytes after last entry", file_len - pos),
        ));
    }
    Ok(entries)
}

/// Reads the stored (possibly compressed) bytes of one entry.
pub fn read_stored(file: &File, entry: &PartitionEntry) -> Result<Vec<u8>> {
    let mut buf = vec![0u8; entry.stored_len() as usize];
    file.read_exact_at(&mut buf, entry.data_offset)?;
    Ok(buf)
}

/// Returns the original file content of `entry`.
pub fn extract_file(partition: &Path, entry: &PartitionEntry, codec: &dyn Codec) -> Result<Vec<u8>> {
    let file = File::open(partition)?;
    let stored = read_stored(&file, entry)?;
    restore(stored, entry.compressed_size, entry.meta.size_bytes, codec)
}

/// Turns stored bytes back into file content, checking the length.
pub fn restore(stored: Vec<u8>, compressed_size: u64, size: u64, codec: &dyn Codec) -> Result<Vec<u8>> {
    let data = if compressed_size == 0 {
        stored
    } else {
        if stored.len() as u64 != compressed_size {
            return Err(Error::Corrupt(format!(
                "stored length {} does not match compressed size {compressed_size}",
                stored.len()
            )));
        }
        codec.decompress(&stored, size as usize)?
    };
    if data.len() as u64 != size {
        return Err(Error::Corrupt(format!(
            "content length {} does not match recorded size {size}",
            data.len()
        )));
    }
    Ok(data)
}

pub fn partition_path(dir: &Path, id: u32) -> PathBuf {
    dir.join(partition_file_name(id))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_meta() -> FileMeta {
        FileMeta {
            size_bytes: 10,
            mode: S_IFREG | 0o644,
            uid: 1000,
            gid: 100,
            atime_sec: -5,
            mtime_sec: 1_600_000_000,
            ctime_sec: 1_600_000_001,
            atime_nsec: 1,
            mtime_nsec: 999_999_999,
            ctime_nsec: 0,
            ino: 42,
            dev: 7,
            nlink: 1,
            rdev: 0,
            blksize: 4096,
            blocks: 8,
        }
    }

    #[test]
    fn meta_is_144_bytes_with_fields_in_order() {
        let m = sample_meta();
        let b = m.to_bytes();
        assert_eq!(b.len(), 144);
        assert_eq!(&b[0..8], &10u64.to_le_bytes());
        assert_eq!(&b[8..12], &(S_IFREG | 0o644).to_le_bytes());
        assert_eq!(&b[12..16], &1000u32.to_le_bytes());
        assert_eq!(&b[16..20], &100u32.to_le_bytes());
        assert_eq!(&b[20..28], &(-5i64).to_le_bytes());
        assert_eq!(&b[68..76], &42u64.to_le_bytes());
        assert_eq!(&b[108..116], &8u64.to_le_bytes());
        assert!(b[116..].iter().all(|&x| x == 0));
        assert_eq!(FileMeta::from_bytes(&b).unwrap(), m);
    }

    #[test]
    fn meta_rejects_bad_nsec_and_padding() {
        let mut m = sample_meta();
        m.mtime_nsec = 1_000_000_000;
        assert!(FileMeta::from_bytes(&m.to_bytes()).is_err());
        let mut b = sample_meta().to_bytes();
        b[143] = 1;
        assert!(FileMeta::from_bytes(&b).is_err());
    }

    #[test]
    fn name_field_limits() {
        assert!(encode_name(&"x".repeat(255)).is_ok());
        assert!(matches!(
            encode_name(&"x".repeat(256)),
            Err(Error::PathTooLong { len: 256, .. })
        ));
        let f = encode_name("a/b.bin").unwrap();
        assert_eq!(decode_name(&f).unwrap(), "a/b.bin");
        let mut f2 = f;
        f2[200] = 0x80;
        assert!(decode_name(&f2).is_err());
    }

    #[test]
    fn directory_meta_is_a_directory() {
        assert!(FileMeta::directory().is_dir());
        assert!(!sample_meta().is_dir());
    }
}
