//! Whole-file lossless codecs.
//!
//! A packed dataset records one codec id in its manifest. Id 0 is the
//! identity codec, id 1 the built-in LZSS codec.

mod lzss;

pub use lzss::Lzss;

use std::fmt;
use std::ops::RangeInclusive;
use std::sync::Arc;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CodecId(pub u8);

impl CodecId {
    pub const IDENTITY: CodecId = CodecId(0);
    pub const LZSS: CodecId = CodecId(1);
}

impl fmt::Display for CodecId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

pub trait Codec: Send + Sync {
    fn id(&self) -> CodecId;

    fn name(&self) -> &'static str;

    fn levels(&self) -> RangeInclusive<u8>;

    fn default_level(&self) -> u8;

    fn compress(&self, input: &[u8], level: u8) -> Result<Vec<u8>>;

    /// Fails unless the stream decodes to exactly `expected_len` bytes.
    fn decompress(&self, input: &[u8], expected_len: usize) -> Result<Vec<u8>>;

    fn check_level(&self, level: u8) -> Result<()> {
        if self.levels().contains(&level) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} level {level} outside {:?}",
                self.name(),
                self.levels()
            )))
        }
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct Identity;

impl Codec for Identity {
    fn id(&self) -> CodecId {
        CodecId::IDENTITY
    }

    fn name(&self) -> &'static str {
        "identity"
    }

    fn levels(&self) -> RangeInclusive<u8> {
        0..=u8::MAX
    }

    fn default_level(&self) -> u8 {
        0
    }

    fn compress(&self, input: &[u8], _level: u8) -> Result<Vec<u8>> {
        Ok(input.to_vec())
    }

    fn decompress(&self, input: &[u8], expected_len: usize) -> Result<Vec<u8>> {
        if input.len() != expected_len {
            return Err(Error::Corrupt(format!(
                "identity stream is {} bytes, expected {expected_len}",
                input.len()
            )));
        }
        Ok(input.to_vec())
    }
}

/// Codec lookup by id. Unknown ids are a hard error.
#[derive(Clone)]
pub struct CodecRegistry {
    codecs: Vec<Arc<dyn Codec>>,
}

impl Default for CodecRegistry {
    fn default() -> Self {
        CodecRegistry {
            codecs: vec![Arc::new(Identity), Arc::new(Lzss)],
        }
    }
}

impl CodecRegistry {
    pub fn register(&mut self, codec: Arc<dyn Codec>) {
        self.codecs.retain(|c| c.id() != codec.id());
        self.codecs.push(codec);
    }

    pub fn get(&self, id: CodecId) -> Result<Arc<dyn Codec>> {
        self.codecs
            .iter()
            .find(|c| c.id() == id)
            .cloned()
            .ok_or_else(|| Error::InvalidArgument(format!("unknown codec id {id}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_knows_builtins_and_rejects_unknown() {
        let r = CodecRegistry::default();
        assert_eq!(r.get(CodecId::IDENTITY).unwrap().name(), "identity");
        assert_eq!(r.get(CodecId::LZSS).unwrap().name(), "lzss");
        assert!(r.get(CodecId(9)).is_err());
    }

    #[test]
    fn identity_checks_length() {
        assert_eq!(Identity.decompress(b"abc", 3).unwrap(), b"abc");
        assert!(Identity.decompress(b"abc", 4).is_err());
    }
}
