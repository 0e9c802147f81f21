//! Compression ratio of the LZSS codec at each level.
//!
//! cargo run --example codec_ratio

use fanstore::codec::{Codec, Lzss};
use rand::{RngCore, SeedableRng};

fn main() -> fanstore::Result<()> {
    let text = "the quick brown fox jumps over the lazy dog. ".repeat(2000);
    let mut noise = vec![0u8; 64 * 1024];
    rand_chacha::ChaCha8Rng::seed_from_u64(1).fill_bytes(&mut noise);
    let codec = Lzss;
    for (name, input) in [("text", text.as_bytes()), ("noise", &noise[..])] {
        for level in codec.levels() {
            let packed = codec.compress(input, level)?;
            assert_eq!(codec.decompress(&packed, input.len())?, input);
            println!(
                "{name:<6} level {level}: {:>6} -> {:>6} bytes ({:.3})",
                input.len(),
                packed.len(),
                packed.len() as f64 / input.len() as f64
            );
        }
    }
    Ok(())
}
