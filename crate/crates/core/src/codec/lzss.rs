//! LZSS with a 4 KiB sliding window.
//!
//! The stream is a sequence of groups: one flag byte followed by up to eight
//! items, flag bit `k` (LSB first) describing item `k`. A clear bit is a
//! literal byte. A set bit is a two byte back-reference:
//!
//! ```text
//! byte 0: low 8 bits of (distance - 1)
//! byte 1: high 4 bits of (distance - 1) << 4 | length code
//! ```
//!
//! Length codes 0..=14 mean lengths 3..=17. Code 15 means 18 plus an
//! extension: a run of 0xFF bytes each adding 255, closed by one byte < 255.
//! The extension lets periodic data collapse to a handful of tokens.

use std::ops::RangeInclusive;

use super::{Codec, CodecId};
use crate::error::{Error, Result};

const WINDOW: usize = 4096;
const MIN_MATCH: usize = 3;
const SHORT_MAX: usize = MIN_MATCH + 14;
const EXT_BASE: usize = SHORT_MAX + 1;
const HASH_BITS: u32 = 15;

#[derive(Debug, Default, Clone, Copy)]
pub struct Lzss;

/// Hash-chain depth per level; higher levels search harder for longer matches.
fn chain_depth(level: u8) -> usize {
    1usize << (level.saturating_sub(1).min(8))
}

fn hash3(b: &[u8]) -> usize {
    let v = u32::from(b[0]) << 16 | u32::from(b[1]) << 8 | u32::from(b[2]);
    (v.wrapping_mul(2_654_435_761) >> (32 - HASH_BITS)) as usize
}

struct Matcher {
    head: Vec<i64>,
    prev: Vec<i64>,
}

impl Matcher {
    fn new() -> Self {
        Matcher {
            head: vec![-1; 1 << HASH_BITS],
            prev: vec![-1; WINDOW],
        }
    }

    fn insert(&mut self, input: &[u8], pos: usize) {
        if pos + MIN_MATCH > input.len() {
            return;
        }
        let h = hash3(&input[pos..]);
        self.prev[pos % WINDOW] = self.head[h];
        self.head[h] = pos as i64;
    }

    /// Longest earlier match for `pos` as (distance, length).
    fn find(&self, input: &[u8], pos: usize, depth: usize) -> Option<(usize, usize)> {
        if pos + MIN_MATCH > input.len() {
            return None;
        }
        let limit = input.len() - pos;
        let mut best: Option<(usize, usize)> = None;
        let mut cand = self.head[hash3(&input[pos..])];
        let mut last = pos as i64;
        for _ in 0..depth {
            if cand < 0 || cand >= last {
                break;
            }
            let c = cand as usize;
            let dist = pos - c;
            if dist > WINDOW {
                break;
            }
            let len = input[c..]
                .iter()
                .zip(&input[pos..pos + limit])
                .take_while(|(a, b)| a == b)
                .count();
            if len >= MIN_MATCH && best.is_none_or(|(_, l)| len > l) {
                best = Some((dist, len));
                if len == limit {
                    break;
                }
            }
            last = cand;
            cand = self.prev[c % WINDOW];
        }
        best
    }
}

impl Codec for Lzss {
    fn id(&self) -> CodecId {
        CodecId::LZSS
    }

    fn name(&self) -> &'static str {
        "lzss"
    }

    fn levels(&self) -> RangeInclusive<u8> {
        1..=9
    }

    fn default_level(&self) -> u8 {
        6
    }

    fn compress(&self, input: &[u8], level: u8) -> Result<Vec<u8>> {
        self.check_level(level)?;
        let depth = chain_depth(level);
        let mut out = Vec::with_capacity(input.len() / 2 + 16);
        let mut m = Matcher::new();
        let mut pos = 0;
        while pos < input.len() {
            let flag_at = out.len();
            out.push(0u8);
            let mut flags = 0u8;
            for bit in 0..8 {
                if pos >= input.len() {
                    break;
                }
                match m.find(input, pos, depth) {
                    Some((dist, len)) => {
                        flags |= 1 << bit;
                        let d = dist - 1;
                        let code = if len <= SHORT_MAX { len - MIN_MATCH } else { 15 };
                        out.push((d & 0xFF) as u8);
                        out.push(((d >> 8) << 4) as u8 | code as u8);
                        if code == 15 {
                            let mut rest = len - EXT_BASE;
                            while rest >= 255 {
                                out.push(255);
                                rest -= 255;
                            }
                            out.push(rest as u8);
                        }
                        for p in pos..pos + len {
                            m.insert(input, p);
                        }
                        pos += len;
                    }
                    None => {
                        out.push(input[pos]);
                        m.insert(input, pos);
                        pos += 1;
                    }
                }
            }
            out[flag_at] = flags;
        }
        Ok(out)
    }

    fn decompress(&self, input: &[u8], expected_len: usize) -> Result<Vec<u8>> {
        let corrupt = |why: &str| Error::Corrupt(format!("lzss: {why}"));
        let mut out: Vec<u8> = Vec::with_capacity(expected_len);
        let mut i = 0;
        while i < input.len() {
            let flags = input[i];
            i += 1;
            for bit in 0..8 {
                if i >= input.len() {
                    if flags >> bit != 0 {
                        return Err(corrupt("stream ends inside a group"));
                    }
                    break;
                }
                if flags & (1 << bit) == 0 {
                    out.push(input[i]);
                    i += 1;
                } else {
                    let (b0, b1) = match input.get(i..i + 2) {
                        Some(t) => (t[0] as usize, t[1] as usize),
                        None => return Err(corrupt("truncated back-reference")),
                    };
                    i += 2;
                    let dist = ((b1 >> 4) << 8 | b0) + 1;
                    let code = b1 & 0x0F;
                    let len = if code < 15 {
                        code + MIN_MATCH
                    } else {
                        let mut len = EXT_BASE;
                        loop {
                            let b = *input.get(i).ok_or_else(|| corrupt("truncated length"))?;
                            i += 1;
                            len += b as usize;
                            if b != 255 {
                                break;
                            }
                        }
                        len
                    };
                    if dist > out.len() {
                        return Err(corrupt("back-reference before start of output"));
                    }
                    if out.len() + len > expected_len {
                        return Err(corrupt("output longer than expected"));
                    }
                    let start = out.len() - dist;
                    for k in 0..len {
                        let b = out[start + k];
                        out.push(b);
                    }
                }
                if out.len() > expected_len {
                    return Err(corrupt("output longer than expected"));
                }
            }
        }
        if out.len() != expected_len {
            return Err(Error::Corrupt(format!(
                "lzss: decoded {} bytes, expected {expected_len}",
                out.len()
            )));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};

    fn round_trip(data: &[u8], level: u8) -> Vec<u8> {
        let z = Lzss.compress(data, level).unwrap();
        assert_eq!(Lzss.decompress(&z, data.len()).unwrap(), data);
        z
    }

    #[test]
    fn empty_input() {
        assert!(round_trip(b"", 6).is_empty());
        assert_eq!(Lzss.decompress(b"", 0).unwrap(), b"");
    }

    #[test]
    fn periodic_megabyte_shrinks_below_ten_percent() {
        let pattern: Vec<u8> = (0..64u8).map(|i| i.wrapping_mul(37)).collect();
        let data: Vec<u8> = pattern.iter().copied().cycle().take(1 << 20).collect();
        let z = round_trip(&data, 6);
        assert!(z.len() * 10 < data.len(), "ratio too low: {}", z.len());
    }

    #[test]
    fn random_megabyte_does_not_shrink() {
        let mut data = vec![0u8; 1 << 20];
        rand_chacha::ChaCha20Rng::seed_from_u64(7).fill_bytes(&mut data);
        let z = round_trip(&data, 6);
        assert!(z.len() >= data.len());
    }

    #[test]
    fn zero_filled_file() {
        let z = round_trip(&vec![0u8; 65536], 6);
        assert!(z.len() < 65536);
    }

    #[test]
    fn deterministic_output() {
        let data: Vec<u8> = b"the quick brown fox ".iter().copied().cycle().take(5000).collect();
        assert_eq!(Lzss.compress(&data, 4).unwrap(), Lzss.compress(&data, 4).unwrap());
    }

    #[test]
    fn level_out_of_range() {
        assert!(Lzss.compress(b"abc", 0).is_err());
        assert!(Lzss.compress(b"abc", 10).is_err());
    }

    #[test]
    fn length_and_corruption_checks() {
        let z = Lzss.compress(b"abcabcabcabcabc", 6).unwrap();
        assert!(Lzss.decompress(&z, 14).is_err());
        assert!(Lzss.decompress(&z, 16).is_err());
        // back-reference with nothing decoded yet
        assert!(Lzss.decompress(&[0x01, 0x00, 0x00], 3).is_err());
        assert!(Lzss.decompress(&[0x01, 0x00], 3).is_err());
    }

    #[test]
    fn long_extension_lengths() {
        for n in [17usize, 18, 19, 272, 273, 274, 10_000] {
            let data = vec![b'x'; n + 1];
            round_trip(&data, 1);
        }
    }

    proptest! {
        #[test]
        fn lossless_on_fuzzed_inputs(
            data in prop::collection::vec(prop_oneof![Just(0u8), Just(1u8), any::<u8>()], 0..6000),
            level in 1u8..=9,
        ) {
            let z = Lzss.compress(&data, level).unwrap();
            prop_assert_eq!(Lzss.decompress(&z, data.len()).unwrap(), data);
        }
    }
}
