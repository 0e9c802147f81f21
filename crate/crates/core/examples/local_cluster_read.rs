//! Start a three-node cluster in this process and read through each node.
//!
//! cargo run --example local_cluster_read

use std::fs;

use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let src = dir.path().join("src");
    fs::create_dir_all(src.join("train"))?;
    let files: Vec<String> = (0..12).map(|i| format!("train/sample{i:02}.bin")).collect();
    for (i, f) in files.iter().enumerate() {
        fs::write(src.join(f), vec![i as u8; 4096])?;
    }
    pack_dataset(&files, &src, 6, &PackOptions::default(), &dir.path().join("packed"))?;

    let cluster = LocalCluster::start_in_process(
        &ClusterSetup::new(3),
        &dir.path().join("packed").join(MANIFEST_FILE_NAME),
        &dir.path().join("nodes"),
    )?;
    for i in 0..cluster.node_count() {
        let fs = cluster.client(i);
        let listing = fs.fs_readdir(&fs.mount().to_mounted("train"))?;
        let mut bytes = 0;
        for name in &listing {
            bytes += fs.read_file(&fs.mount().to_mounted(&format!("train/{name}")))?.len();
        }
        let s = fs.node_stats()?;
        println!(
            "node {i}: {} files, {bytes} bytes, partitions {:?}, local-hit {:.2}",
            listing.len(),
            s.held_partitions,
            s.local_hit_fraction()
        );
    }
    Ok(())
}
