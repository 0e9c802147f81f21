//! Which node owns the metadata of each output path.
//!
//! cargo run --example output_ownership

use fanstore::metadata::owner_of_output;

fn main() {
    let nodes = 4;
    let mut counts = vec![0u32; nodes as usize];
    for epoch in 0..20 {
        let path = format!("ckpt/epoch{epoch:03}.ckpt");
        let owner = owner_of_output(&path, nodes);
        counts[owner as usize] += 1;
        println!("{path} -> node {owner}");
    }
    println!("per node: {counts:?}");
}
