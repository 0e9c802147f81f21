//! Two epochs of emulated training with a replicated validation set.
//!
//! cargo run --release --example training_emulation

use std::time::Duration;

use fanstore::bench::{self, BenchSpec, SizeClass};
use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::codec::CodecId;
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let spec = BenchSpec {
        classes: vec![SizeClass::new("train", 32 << 10, 400)],
        val_files: 40,
        epochs: 2,
        batch: 16,
        compute_delay: Duration::from_millis(5),
        checkpoint_bytes: 256 << 10,
        ..BenchSpec::default()
    };
    let ds = bench::gen_dataset(&spec, &dir.path().join("ds"))?;
    let packed = dir.path().join("packed");
    pack_dataset(&ds.paths(), &ds.root, 8, &PackOptions::compressed(CodecId::LZSS), &packed)?;
    let cluster = LocalCluster::start_in_process(
        &ClusterSetup::new(4).replicate_dir("val"),
        &packed.join(MANIFEST_FILE_NAME),
        &dir.path().join("nodes"),
    )?;
    let clients: Vec<_> = (0..4).map(|i| cluster.client(i)).collect();
    let report = bench::run_training_emulation(&spec, &ds, &clients)?;
    print!("{}", report.to_csv());
    if let Some(t) = &report.training {
        println!("{}", serde_json::to_string_pretty(t).unwrap());
    }
    Ok(())
}
