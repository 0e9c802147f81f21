//! An output becomes visible on other nodes only once its writer closes it.
//!
//! cargo run --example checkpoint_visibility

use std::fs;

use fanstore::client::OpenMode;
use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let src = dir.path().join("src");
    fs::create_dir_all(&src)?;
    fs::write(src.join("input.bin"), b"input")?;
    pack_dataset(&["input.bin"], &src, 1, &PackOptions::default(), &dir.path().join("packed"))?;
    let cluster = LocalCluster::start_in_process(
        &ClusterSetup::new(2),
        &dir.path().join("packed").join(MANIFEST_FILE_NAME),
        &dir.path().join("nodes"),
    )?;

    let (writer, reader) = (cluster.client(0), cluster.client(1));
    let path = writer.mount().to_mounted("ckpt/model.ckpt");
    let fd = writer.fs_open(&path, OpenMode::Write)?;
    writer.fs_write(fd, &[1u8; 1024])?;
    println!("before close: {:?}", reader.fs_stat(&path).map(|m| m.size_bytes));
    writer.fs_close(fd)?;
    println!("after close:  {:?}", reader.fs_stat(&path).map(|m| m.size_bytes));
    println!("rewrite:      {:?}", reader.fs_open(&path, OpenMode::Write).err());
    Ok(())
}
