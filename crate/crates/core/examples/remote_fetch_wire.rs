//! Fetch a file from a peer by hand and count the frames and bytes.
//!
//! cargo run --example remote_fetch_wire

use std::fs;

use fanstore::cluster::{ClusterSetup, LocalCluster};
use fanstore::partition::{pack_dataset, PackOptions, MANIFEST_FILE_NAME};
use fanstore::transport::{Connection, Frame, Opcode, TransportOptions};

fn main() -> fanstore::Result<()> {
    let dir = tempfile::tempdir()?;
    let src = dir.path().join("src");
    fs::create_dir_all(&src)?;
    fs::write(src.join("weights.bin"), vec![7u8; 1 << 20])?;
    pack_dataset(&["weights.bin"], &src, 1, &PackOptions::default(), &dir.path().join("packed"))?;
    let cluster = LocalCluster::start_in_process(
        &ClusterSetup::new(1),
        &dir.path().join("packed").join(MANIFEST_FILE_NAME),
        &dir.path().join("nodes"),
    )?;

    let conn = Connection::connect(&cluster.address(0), &TransportOptions::default())?;
    let before = conn.stats().snapshot();
    let reply = conn.call(Frame::new(Opcode::FetchFile, "weights.bin", Vec::new()))?;
    let d = conn.stats().snapshot().since(&before);
    println!("reply {:?} with {} payload bytes", reply.opcode, reply.payload.len());
    println!(
        "frames sent {} received {}, bytes sent {} received {}",
        d.frames_sent, d.frames_received, d.bytes_sent, d.bytes_received
    );
    Ok(())
}
