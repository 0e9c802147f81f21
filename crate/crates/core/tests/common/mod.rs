#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use fanstore::codec::CodecId;
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub fn daemon() -> PathBuf {
    PathBuf::from(env!("CARGO_BIN_EXE_fanstored"))
}

pub fn sha(bytes: &[u8]) -> [u8; 32] {
    Sha256::digest(bytes).into()
}

const WORDS: &[&str] = &[
    "neuron", "tensor", "gradient", "batch", "epoch", "kernel", "stride", "pool", "relu", "loss",
];

/// Random nested tree of `n` files averaging `mean_size` bytes. Half the
/// files are random bytes, half are word soup that compresses well.
/// Returns relative path -> content digest.
pub fn random_tree(root: &Path, n: usize, mean_size: usize, seed: u64) -> BTreeMap<String, [u8; 32]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = BTreeMap::new();
    while out.len() < n {
        let depth = rng.gen_range(1..=3);
        let mut rel: Vec<String> = (0..depth).map(|_| format!("d{}", rng.gen_range(0..6))).collect();
        rel.push(format!("f{}.bin", rng.gen_range(0..1_000_000)));
        let rel = rel.join("/");
        if out.contains_key(&rel) || out.keys().any(|k: &String| rel.starts_with(&format!("{k}/"))) {
            continue;
        }
        let size = rng.gen_range(0..=2 * mean_size);
        let mut data = vec![0u8; size];
        if out.len() % 2 == 0 {
            rng.fill_bytes(&mut data);
        } else {
            let mut soup = Vec::with_capacity(size + 16);
            while soup.len() < size {
                soup.extend_from_slice(WORDS[rng.gen_range(0..WORDS.len())].as_bytes());
                soup.push(b' ');
            }
            soup.truncate(size);
            data = soup;
        }
        let target = root.join(&rel);
        fs::create_dir_all(target.parent().unwrap()).unwrap();
        fs::write(&target, &data).unwrap();
        out.insert(rel, sha(&data));
    }
    out
}

/// Packs `files` (relative to `src`) and returns the manifest path.
pub fn pack(src: &Path, files: &[String], partitions: u32, compress: bool, out: &Path) -> PathBuf {
    let options = if compress {
        PackOptions::compressed(CodecId::LZSS)
    } else {
        PackOptions::default()
    };
    pack_dataset(files, src, partitions, &options, out).unwrap();
    out.join(MANIFEST_FILE_NAME)
}

/// Same-size files of random bytes named `data/fNNNN`.
pub fn flat_tree(root: &Path, n: usize, size: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let rel = format!("data/f{i:04}");
            let mut data = vec![0u8; size];
            rng.fill_bytes(&mut data);
            let target = root.join(&rel);
            fs::create_dir_all(target.parent().unwrap()).unwrap();
            fs::write(target, data).unwrap();
            rel
        })
        .collect()
}
