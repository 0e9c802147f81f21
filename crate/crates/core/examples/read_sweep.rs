//! Read sweep over small size classes on a four-node cluster; prints CSV.
//!
//! cargo run --release --example read_sweep

use fanstore::bench::{self, BenchSpec, SizeClass};
use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let spec = BenchSpec {
        classes: vec![SizeClass::new("16K", 16 << 10, 256), SizeClass::new("256K", 256 << 10, 32)],
        ..BenchSpec::default()
    };
    let ds = bench::gen_dataset(&spec, &dir.path().join("ds"))?;
    pack_dataset(&ds.paths(), &ds.root, 16, &PackOptions::default(), &dir.path().join("packed"))?;
    let cluster = LocalCluster::start_in_process(
        &ClusterSetup::new(4),
        &dir.path().join("packed").join(MANIFEST_FILE_NAME),
        &dir.path().join("nodes"),
    )?;
    let clients: Vec<_> = (0..4).map(|i| cluster.client(i)).collect();
    print!("{}", bench::run_read_sweep(&spec, &ds, &clients)?.to_csv());
    Ok(())
}
