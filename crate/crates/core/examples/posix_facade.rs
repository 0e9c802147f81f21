//! Descriptor-level calls: managed paths go to the store, others to the host.
//!
//! cargo run --example posix_facade

use std::fs;

use fanstore::client::OpenMode;
use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let src = dir.path().join("src");
    fs::create_dir_all(src.join("data"))?;
    fs::write(src.join("data/labels.csv"), "id,label\n0,cat\n1,dog\n")?;
    pack_dataset(&["data/labels.csv"], &src, 1, &PackOptions::default(), &dir.path().join("packed"))?;
    let cluster = LocalCluster::start_in_process(
        &ClusterSetup::new(1),
        &dir.path().join("packed").join(MANIFEST_FILE_NAME),
        &dir.path().join("nodes"),
    )?;
    let fs = cluster.client(0);
    println!("mount {}", fs.mount().prefix());

    let labels = fs.mount().to_mounted("data/labels.csv");
    let fd = fs.fs_open(&labels, OpenMode::Read)?;
    println!("fd {fd}, header {:?}", String::from_utf8_lossy(&fs.fs_read(fd, 9)?));
    println!("rest {:?}", String::from_utf8_lossy(&fs.fs_read_all(fd)?));
    fs.fs_close(fd)?;
    println!("stat {:?}", fs.fs_stat(&labels)?.size_bytes);
    println!("readdir {:?}", fs.fs_readdir(&fs.mount().to_mounted("data"))?);
    println!("missing {:?}", fs.fs_stat(&fs.mount().to_mounted("nope")).err());

    let host = dir.path().join("host-note.txt");
    fs.write_file(host.to_str().unwrap(), b"on the host")?;
    println!("host file {:?}", fs::read_to_string(&host)?);
    Ok(())
}
