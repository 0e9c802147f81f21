use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use super::{BenchSpec, SizeClass};
use crate::error::{Error, Result};
use crate::hash::fnv1a64;

/// Sidecar written next to the generated files; never packed.
pub const DIGEST_FILE: &str = "fanstore-digests.txt";

pub const VAL_DIR: &str = "val";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetFile {
    pub path: String,
    pub size: u64,
    pub sha256: [u8; 32],
}

/// A generated corpus: its root and the expected digest of every file.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub root: PathBuf,
    files: BTreeMap<String, DatasetFile>,
}

impl GeneratedDataset {
    pub fn files(&self) -> impl Iterator<Item = &DatasetFile> {
        self.files.values()
    }

    pub fn file(&self, path: &str) -> Option<&DatasetFile> {
        self.files.get(path)
    }

    pub fn len(&self) -> usize {
        self.files.len()
    }

    pub fn is_empty(&self) -> bool {
        self.files.is_empty()
    }

    pub fn paths(&self) -> Vec<String> {
        self.files.keys().cloned().collect()
    }

    /// Files of one size class, in name order.
    pub fn class_files(&self, class: &str) -> Vec<&DatasetFile> {
        let prefix = format!("{class}/");
        self.files.values().filter(|f| f.path.starts_with(&prefix)).collect()
    }

    /// Size classes present, inferred from top-level directories other
    /// than `val/`. Sizes come from the first file of each class.
    pub fn classes(&self) -> Vec<SizeClass> {
        let mut out: Vec<SizeClass> = Vec::new();
        for f in self.files.values() {
            let Some((dir, _)) = f.path.split_once('/') else { continue };
            if dir == VAL_DIR {
                continue;
            }
            match out.iter_mut().find(|c| c.name == dir) {
                Some(c) => c.count += 1,
                None => out.push(SizeClass::new(dir, f.size, 1)),
            }
        }
        out.sort_by_key(|c| (c.size, c.name.clone()));
        out
    }

    pub fn training_files(&self) -> Vec<&DatasetFile> {
        let prefix = format!("{VAL_DIR}/");
        self.files.values().filter(|f| !f.path.starts_with(&prefix)).collect()
    }

    pub fn validation_files(&self) -> Vec<&DatasetFile> {
        self.class_files(VAL_DIR)
    }

    pub fn total_bytes(&self) -> u64 {
        self.files.values().map(|f| f.size).sum()
    }

    /// Checks `bytes` against the recorded digest of `path`.
    pub fn verify(&self, path: &str, bytes: &[u8]) -> Result<()> {
        let f = self
            .files
            .get(path)
            .ok_or_else(|| Error::Corrupt(format!("integrity: {path} is not in the dataset")))?;
        if bytes.len() as u64 != f.size || Sha256::digest(bytes).as_slice() != f.sha256 {
            return Err(Error::Corrupt(format!(
                "integrity: {path} read back {} bytes with a different digest",
                bytes.len()
            )));
        }
        Ok(())
    }

    /// Reads the digest sidecar of a previously generated dataset.
    pub fn load(root: &Path) -> Result<GeneratedDataset> {
        let text = fs::read_to_string(root.join(DIGEST_FILE))?;
        let mut files = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.splitn(3, ' ');
            let (Some(hex_digest), Some(size), Some(path)) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Corrupt(format!("{DIGEST_FILE} line {}: malformed", n + 1)));
            };
            let mut sha256 = [0u8; 32];
            hex::decode_to_slice(hex_digest, &mut sha256)
                .map_err(|e| Error::Corrupt(format!("{DIGEST_FILE} line {}: {e}", n + 1)))?;
            let size = size
                .parse()
                .map_err(|e| Error::Corrupt(format!("{DIGEST_FILE} line {}: {e}", n + 1)))?;
            files.insert(
                path.to_string(),
                DatasetFile {
                    path: path.to_string(),
                    size,
                    sha256,
                },
            );
        }
        Ok(GeneratedDataset {
            root: root.to_path_buf(),
            files,
        })
    }
}

/// Deterministic content for one file: ChaCha8 keyed by the seed and path.
pub fn file_content(seed: u64, path: &str, size: u64) -> Vec<u8> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(path.as_bytes()));
    let mut buf = vec![0u8; size as usize];
    rng.fill_bytes(&mut buf);
    buf
}

pub fn class_file_name(class: &SizeClass, index: u32) -> String {
    format!("{}/f{index:06}.bin", class.name)
}

/// Writes `<class>/fNNNNNN.bin` for every class, `val/fNNNNNN.bin` when
/// the spec asks for a validation set, and the digest sidecar.
pub fn gen_dataset(spec: &BenchSpec, out: &Path) -> Result<GeneratedDataset> {
    spec.validate()?;
    fs::create_dir_all(out)?;
    let mut plan: Vec<(String, u64)> = Vec::new();
    for class in &spec.classes {
        for i in 0..class.count {
            plan.push((class_file_name(class, i), class.size));
        }
    }
    if spec.val_files > 0 {
        let val = SizeClass {
            name: VAL_DIR.into(),
            size: spec.val_file_size(),
            count: spec.val_files,
        };
        for i in 0..val.count {
            plan.push((class_file_name(&val, i), val.size));
        }
    }

    let mut files = BTreeMap::new();
    for (path, size) in plan {
        let bytes = file_content(spec.seed, &path, size);
        let target = out.join(&path);
        if let Some(dir) = target.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(&target, &bytes)?;
        let sha256: [u8; 32] = Sha256::digest(&bytes).into();
        files.insert(path.clone(), DatasetFile { path, size, sha256 });
    }

    let mut w = BufWriter::new(fs::File::create(out.join(DIGEST_FILE))?);
    for f in files.values() {
        writeln!(w, "{} {} {}", hex::encode(f.sha256), f.size, f.path)?;
    }
    w.flush()?;
    Ok(GeneratedDataset {
        root: out.to_path_buf(),
        files,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(seed: u64) -> BenchSpec {
        BenchSpec {
            classes: vec![SizeClass::new("128K", 128 * 1024, 1), SizeClass::new("1K", 1024, 3)],
            seed,
            ..BenchSpec::default()
        }
    }

    #[test]
    fn sizes_and_counts_are_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_dataset(&tiny(1), dir.path()).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(fs::metadata(dir.path().join("128K/f000000.bin")).unwrap().len(), 131072);
        assert_eq!(ds.class_files("1K").len(), 3);
        assert_eq!(
            ds.classes(),
            vec![SizeClass::new("1K", 1024, 3), SizeClass::new("128K", 131072, 1)]
        );
    }

    #[test]
    fn same_seed_same_digests() {
        let (a, b, c) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let x = gen_dataset(&tiny(7), a.path()).unwrap();
        let y = gen_dataset(&tiny(7), b.path()).unwrap();
        let z = gen_dataset(&tiny(8), c.path()).unwrap();
        let d = |g: &GeneratedDataset| g.files().map(|f| f.sha256).collect::<Vec<_>>();
        assert_eq!(d(&x), d(&y));
        assert_ne!(d(&x), d(&z));
    }

    #[test]
    fn sidecar_round_trips_and_verifies() {
        let dir = tempfile::tempdir().unwrap();
        let ds = gen_dataset(&tiny(3), dir.path()).unwrap();
        let back = GeneratedDataset::load(dir.path()).unwrap();
        assert_eq!(back.paths(), ds.paths());
        let bytes = fs::read(dir.path().join("1K/f000002.bin")).unwrap();
        back.verify("1K/f000002.bin", &bytes).unwrap();
        assert!(back.verify("1K/f000001.bin", &bytes).is_err());
    }
}
