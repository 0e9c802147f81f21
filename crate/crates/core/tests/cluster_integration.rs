mod common;

use std::fs;

use fanstore::client::{FanStore, OpenMode, FD_BASE};
use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::Error;

fn small_cluster(setup: &ClusterSetup, n_files: usize) -> (tempfile::TempDir, LocalCluster, Vec<String>) {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    let files = common::flat_tree(&src, n_files, 2048, 5);
    let val: Vec<String> = (0..4)
        .map(|i| {
            let rel = format!("val/v{i}");
            fs::create_dir_all(src.join("val")).unwrap();
            fs::write(src.join(&rel), format!("validation {i}")).unwrap();
            rel
        })
        .collect();
    let all: Vec<String> = files.iter().chain(&val).cloned().collect();
    let manifest = common::pack(&src, &all, 8, true, &dir.path().join("packed"));
    let cluster = LocalCluster::start_in_process(setup, &manifest, &dir.path().join("nodes")).unwrap();
    (dir, cluster, all)
}

fn mounted(fs: &FanStore, rel: &str) -> String {
    fs.mount().to_mounted(rel)
}

#[test]
fn facade_reads_match_sources_on_every_node() {
    let (dir, cluster, files) = small_cluster(&ClusterSetup::new(3), 24);
    for i in 0..3 {
        let c = cluster.client(i);
        for f in &files {
            let got = c.read_file(&mounted(&c, f)).unwrap();
            assert_eq!(got, fs::read(dir.path().join("src").join(f)).unwrap(), "{f} on node {i}");
        }
    }
}

#[test]
fn posix_errors() {
    let (_dir, cluster, files) = small_cluster(&ClusterSetup::new(2), 8);
    let c = cluster.client(0);
    let input = mounted(&c, &files[0]);
    assert!(matches!(c.fs_open(&input, OpenMode::Write), Err(Error::AlreadyExists(_))));
    assert!(matches!(c.fs_readdir(&input), Err(Error::NotADirectory(_))));
    assert!(matches!(c.fs_open(&mounted(&c, "data"), OpenMode::Read), Err(Error::IsADirectory(_))));
    assert!(matches!(c.fs_stat(&mounted(&c, "missing")), Err(Error::NotFound(_))));
    assert!(matches!(c.fs_read(42, 1), Err(Error::BadDescriptor(42))));
    let root = c.fs_stat(c.mount().prefix()).unwrap();
    assert!(root.is_dir());
    assert_eq!(c.fs_readdir(c.mount().prefix()).unwrap(), ["data", "val"]);
}

#[test]
fn descriptors_start_high_and_are_never_reused() {
    let (_dir, cluster, files) = small_cluster(&ClusterSetup::new(1), 4);
    let c = cluster.client(0);
    let p = mounted(&c, &files[0]);
    let a = c.fs_open(&p, OpenMode::Read).unwrap();
    assert!(a >= FD_BASE);
    c.fs_close(a).unwrap();
    let b = c.fs_open(&p, OpenMode::Read).unwrap();
    assert_ne!(a, b);
    assert!(matches!(c.fs_close(a), Err(Error::BadDescriptor(_))));
    c.fs_close(b).unwrap();
    assert_eq!(c.open_descriptors(), 0);
}

#[test]
fn sequential_and_positional_reads() {
    let (dir, cluster, files) = small_cluster(&ClusterSetup::new(2), 4);
    let c = cluster.client(1);
    let want = fs::read(dir.path().join("src").join(&files[0])).unwrap();
    let fd = c.fs_open(&mounted(&c, &files[0]), OpenMode::Read).unwrap();
    assert_eq!(c.fs_read(fd, 100).unwrap(), want[..100]);
    assert_eq!(c.fs_pread(fd, 1000, 10).unwrap(), want[1000..1010]);
    assert_eq!(c.fs_read(fd, 100).unwrap(), want[100..200]);
    assert_eq!(c.fs_read_all(fd).unwrap(), want[200..]);
    assert!(c.fs_read(fd, 10).unwrap().is_empty());
    c.fs_close(fd).unwrap();
}

#[test]
fn passthrough_matches_host_filesystem() {
    let (_dir, cluster, _) = small_cluster(&ClusterSetup::new(1), 2);
    let c = cluster.client(0);
    let host = tempfile::tempdir().unwrap();
    let p = host.path().join("note.txt");
    let ps = p.to_str().unwrap();
    c.write_file(ps, b"plain file").unwrap();
    assert_eq!(fs::read(&p).unwrap(), b"plain file");
    assert_eq!(c.read_file(ps).unwrap(), b"plain file");
    assert_eq!(c.fs_stat(ps).unwrap().size_bytes, 10);
    assert_eq!(c.fs_readdir(host.path().to_str().unwrap()).unwrap(), ["note.txt"]);
    assert!(matches!(c.fs_stat("/definitely/not/here"), Err(Error::Io(_))));
}

#[test]
fn outputs_are_readable_cluster_wide() {
    let (_dir, cluster, _) = small_cluster(&ClusterSetup::new(3), 4);
    let writer = cluster.client(2);
    let p = mounted(&writer, "ckpt/epoch1.h5");
    writer.write_file(&p, b"weights").unwrap();
    for i in 0..3 {
        let c = cluster.client(i);
        assert_eq!(c.fs_stat(&p).unwrap().size_bytes, 7);
        assert_eq!(c.read_file(&p).unwrap(), b"weights");
    }
    assert!(matches!(cluster.client(0).fs_open(&p, OpenMode::Write), Err(Error::AlreadyExists(_))));
}

#[test]
fn replicated_dir_reads_are_local() {
    let setup = ClusterSetup::new(4).replicate_dir("val");
    let (_dir, cluster, files) = small_cluster(&setup, 8);
    for i in 0..4 {
        let c = cluster.client(i);
        let before = c.node_stats().unwrap();
        for f in files.iter().filter(|f| f.starts_with("val/")) {
            c.read_file(&mounted(&c, f)).unwrap();
        }
        let after = c.node_stats().unwrap();
        assert_eq!(after.remote_fetches, before.remote_fetches, "node {i}");
        assert_eq!(after.opens - before.opens, 4);
    }
}

#[test]
fn full_broadcast_never_fetches() {
    let setup = ClusterSetup::new(3).full_broadcast(true);
    let (_dir, cluster, files) = small_cluster(&setup, 12);
    for i in 0..3 {
        let c = cluster.client(i);
        for f in &files {
            c.read_file(&mounted(&c, f)).unwrap();
        }
        let s = c.node_stats().unwrap();
        assert_eq!(s.remote_fetches, 0);
        assert_eq!(s.peer_calls, 0);
        assert_eq!(s.held_partitions.len(), 8);
    }
}

#[test]
fn single_node_has_no_network_activity() {
    let (_dir, cluster, files) = small_cluster(&ClusterSetup::new(1), 6);
    let c = cluster.client(0);
    for f in &files {
        c.read_file(&mounted(&c, f)).unwrap();
    }
    c.write_file(&mounted(&c, "out/x"), b"x").unwrap();
    let s = c.node_stats().unwrap();
    assert_eq!(s.peer_calls, 0);
    assert_eq!(s.remote_fetches, 0);
    assert_eq!(s.local_hit_fraction(), 1.0);
}

#[test]
fn with_two_replicas_one_dead_node_loses_nothing() {
    let (dir, mut cluster, files) = small_cluster(&ClusterSetup::new(4).replication(2), 16);
    cluster.node(3).unwrap().shutdown();
    let c = cluster.client(0);
    for f in &files {
        let got = c.read_file(&mounted(&c, f)).unwrap();
        assert_eq!(got, fs::read(dir.path().join("src").join(f)).unwrap());
    }
    cluster.shutdown();
}

#[test]
fn bootstrap_refuses_a_tampered_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    let files = common::flat_tree(&src, 4, 100, 1);
    let manifest = common::pack(&src, &files, 2, false, &dir.path().join("packed"));
    let text = fs::read_to_string(&manifest).unwrap().replace("partitions 2", "partitions 3");
    fs::write(&manifest, text).unwrap();
    let r = LocalCluster::start_in_process(&ClusterSetup::new(1), &manifest, &dir.path().join("nodes"));
    assert!(r.is_err());
}

#[test]
fn bootstrap_refuses_a_missing_partition() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    let files = common::flat_tree(&src, 4, 100, 1);
    let manifest = common::pack(&src, &files, 2, false, &dir.path().join("packed"));
    fs::remove_file(dir.path().join("packed/part.1")).unwrap();
    let r = LocalCluster::start_in_process(&ClusterSetup::new(1), &manifest, &dir.path().join("nodes"));
    assert!(r.is_err());
}

#[test]
fn daemon_processes_serve_the_facade() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src");
    let files = common::flat_tree(&src, 10, 5000, 9);
    let manifest = common::pack(&src, &files, 4, true, &dir.path().join("packed"));
    let cluster =
        LocalCluster::spawn_processes(&ClusterSetup::new(2), &manifest, &dir.path().join("nodes"), &common::daemon())
            .unwrap();
    let c = cluster.client(1);
    for f in &files {
        assert_eq!(c.read_file(&mounted(&c, f)).unwrap(), fs::read(src.join(f)).unwrap());
    }
    c.write_file(&mounted(&c, "out/model"), &[7u8; 100]).unwrap();
    let other = cluster.client(0);
    assert_eq!(other.read_file(&mounted(&other, "out/model")).unwrap(), [7u8; 100]);
    let s = other.node_stats().unwrap();
    assert!(s.ready);
    assert_eq!(s.open_handles, 0);
}
