//! Pack a small tree into partitions and walk the result.
//!
//! cargo run --example pack_and_inspect

use std::fs;

use fanstore::codec::CodecId;
use fanstore::partition::{self, pack_dataset, PackOptions};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let src = dir.path().join("src");
    fs::create_dir_all(src.join("images"))?;
    let mut files = Vec::new();
    for i in 0..6 {
        let rel = format!("images/img{i}.txt");
        fs::write(src.join(&rel), format!("image {i} ").repeat(40 * (i + 1)))?;
        files.push(rel);
    }

    let out = dir.path().join("packed");
    let manifest = pack_dataset(&files, &src, 3, &PackOptions::compressed(CodecId::LZSS), &out)?;
    println!("manifest digest {}", hex::encode(manifest.digest()));

    for p in 0..manifest.partition_count {
        let path = partition::partition_path(&out, p);
        println!("{} ({} bytes)", path.display(), fs::metadata(&path)?.len());
        for e in partition::read_partition_index(&path)? {
            println!(
                "  {:<20} size {:>5} stored {:>5} at offset {}",
                e.file_name,
                e.meta.size_bytes,
                e.stored_len(),
                e.data_offset
            );
        }
    }
    Ok(())
}
