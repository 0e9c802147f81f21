//! Wire frames.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "FANS"
//! 4       1     version (1)
//! 5       1     opcode
//! 6       8     request id, echoed by the response
//! 14      2     path length P
//! 16      P     path, UTF-8
//! 16+P    4     payload length N
//! 20+P    N     payload
//! ```
//!
//! All integers are little-endian.

use std::io::{self, Read};

use crate::error::{Error, Result};
use crate::metadata::{NodeId, OutputRecord};
use crate::partition::{FileMeta, META_LEN};

pub const MAGIC: [u8; 4] = *b"FANS";
pub const VERSION: u8 = 1;
pub const FIXED_HEADER_LEN: usize = 16;
/// Header bytes of a frame with an empty path.
pub const HEADER_LEN: usize = FIXED_HEADER_LEN + 4;
pub const DEFAULT_MAX_FRAME: u64 = 256 << 20;
/// FETCH_OK payload bytes in front of the stored data.
pub const FETCH_PREFIX_LEN: usize = META_LEN + 8;

macro_rules! opcodes {
    ($($name:ident = $val:expr),* $(,)?) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        #[repr(u8)]
        pub enum Opcode { $($name = $val),* }

        impl Opcode {
            pub const ALL: &'static [Opcode] = &[$(Opcode::$name),*];

            pub fn from_u8(v: u8) -> Option<Opcode> {
                match v { $($val => Some(Opcode::$name),)* _ => None }
            }
        }
    };
}

opcodes! {
    // readiness probe; response payload is one byte, 1 when ready
    Ping = 0,
    FetchFile = 1,
    FetchOk = 2,
    StatOutput = 3,
    StatOk = 4,
    CommitMeta = 5,
    CommitOk = 6,
    Err = 7,
    // client facade <-> co-located daemon
    OpenRead = 16,
    OpenOk = 17,
    ReadAt = 18,
    Data = 19,
    Close = 20,
    Done = 21,
    Stat = 22,
    Readdir = 23,
    Names = 24,
    OpenWrite = 25,
    Write = 26,
    CloseWrite = 27,
    NodeStats = 28,
    StatsOk = 29,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Frame {
    pub opcode: Opcode,
    pub request_id: u64,
    pub path: String,
    pub payload: Vec<u8>,
}

impl Frame {
    pub fn new(opcode: Opcode, path: impl Into<String>, payload: Vec<u8>) -> Frame {
        Frame {
            opcode,
            request_id: 0,
            path: path.into(),
            payload,
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.path.len() + self.payload.len()
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let path_len = u16::try_from(self.path.len())
            .map_err(|_| Error::InvalidArgument(format!("path of {} bytes", self.path.len())))?;
        let payload_len = u32::try_from(self.payload.len()).map_err(|_| Error::FrameTooLarge {
            len: self.payload.len() as u64,
            max: u32::MAX as u64,
        })?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.opcode as u8);
        out.extend_from_slice(&self.request_id.to_le_bytes());
        out.extend_from_slice(&path_len.to_le_bytes());
        out.extend_from_slice(self.path.as_bytes());
        out.extend_from_slice(&payload_len.to_le_bytes());
        out.extend_from_slice(&self.payload);
        Ok(out)
    }

    /// Decodes one frame from the front of `bytes`, returning it with the
    /// number of bytes consumed.
    pub fn decode(bytes: &[u8], max: u64) -> Result<(Frame, usize)> {
        let mut cursor = bytes;
        match read_frame(&mut cursor, max) {
            Ok(f) => Ok((f, bytes.len() - cursor.len())),
            Err(ReadError::Io(e)) if e.kind() == io::ErrorKind::UnexpectedEof => {
                Err(Error::Malformed("truncated frame".into()))
            }
            Err(ReadError::Io(e)) => Err(e.into()),
            Err(ReadError::Closed) => Err(Error::Malformed("empty input".into())),
            Err(ReadError::Bad { error, .. }) => Err(error),
        }
    }

    pub fn error(request_id: u64, err: &Error) -> Frame {
        let msg = err.to_string();
        let mut payload = Vec::with_capacity(2 + msg.len());
        payload.extend_from_slice(&err.wire_code().to_le_bytes());
        payload.extend_from_slice(msg.as_bytes());
        Frame {
            opcode: Opcode::Err,
            request_id,
            path: String::new(),
            payload,
        }
    }

    /// Converts an ERR frame into the matching error; other frames pass.
    pub fn into_result(self) -> Result<Frame> {
        if self.opcode != Opcode::Err {
            return Ok(self);
        }
        if self.payload.len() < 2 {
            return Err(Error::Malformed("short ERR payload".into()));
        }
        let code = u16::from_le_bytes([self.payload[0], self.payload[1]]);
        let msg = String::from_utf8_lossy(&self.payload[2..]).into_owned();
        Err(Error::from_wire(code, msg))
    }

    pub fn expect(self, op: Opcode) -> Result<Frame> {
        let f = self.into_result()?;
        if f.opcode != op {
            return Err(Error::Malformed(format!("expected {op:?}, got {:?}", f.opcode)));
        }
        Ok(f)
    }
}

#[derive(Debug)]
pub enum ReadError {
    /// The stream ended cleanly before a new frame started.
    Closed,
    Io(io::Error),
    /// The frame was consumed from the stream but is unusable; the
    /// connection stays in sync and can answer with an ERR.
    Bad { request_id: u64, error: Error },
}

impl From<io::Error> for ReadError {
    fn from(e: io::Error) -> Self {
        ReadError::Io(e)
    }
}

fn discard<R: Read>(r: &mut R, n: u64) -> io::Result<()> {
    let copied = io::copy(&mut r.take(n), &mut io::sink())?;
    if copied != n {
        return Err(io::ErrorKind::UnexpectedEof.into());
    }
    Ok(())
}

pub fn read_frame<R: Read>(r: &mut R, max: u64) -> std::result::Result<Frame, ReadError> {
    let mut fixed = [0u8; FIXED_HEADER_LEN];
    let mut got = 0;
    while got < FIXED_HEADER_LEN {
        match r.read(&mut fixed[got..]) {
            Ok(0) if got == 0 => return Err(ReadError::Closed),
            Ok(0) => return Err(ReadError::Io(io::ErrorKind::UnexpectedEof.into())),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let request_id = u64::from_le_bytes(fixed[6..14].try_into().unwrap());
    let path_len = u16::from_le_bytes([fixed[14], fixed[15]]) as usize;
    let mut path = vec![0u8; path_len];
    r.read_exact(&mut path)?;
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let payload_len = u32::from_le_bytes(len_buf) as u64;

    let total = (HEADER_LEN + path_len) as u64 + payload_len;
    if total > max {
        discard(r, payload_len)?;
        return Err(ReadError::Bad {
            request_id,
            error: Error::FrameTooLarge { len: total, max },
        });
    }
    let mut payload = vec![0u8; payload_len as usize];
    r.read_exact(&mut payload)?;

    let bad = |why: String| ReadError::Bad {
        request_id,
        error: Error::Malformed(why),
    };
    if fixed[..4] != MAGIC {
        return Err(bad(format!("bad magic {:02x?}", &fixed[..4])));
    }
    if fixed[4] != VERSION {
        return Err(bad(format!("unsupported version {}", fixed[4])));
    }
    let opcode = Opcode::from_u8(fixed[5]).ok_or_else(|| bad(format!("unknown opcode {}", fixed[5])))?;
    let path = String::from_utf8(path).map_err(|_| bad("path is not UTF-8".into()))?;
    Ok(Frame {
        opcode,
        request_id,
        path,
        payload,
    })
}

/// FETCH_OK body: stat record, compressed size (0 = raw), stored bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchReply {
    pub meta: FileMeta,
    pub compressed_size: u64,
    pub data: Vec<u8>,
}

impl FetchReply {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(FETCH_PREFIX_LEN + self.data.len());
        out.extend_from_slice(&self.meta.to_bytes());
        out.extend_from_slice(&self.compressed_size.to_le_bytes());
        out.extend_from_slice(&self.data);
        out
    }

    pub fn decode(mut payload: Vec<u8>) -> Result<FetchReply> {
        if payload.len() < FETCH_PREFIX_LEN {
            return Err(Error::Malformed("short FETCH_OK payload".into()));
        }
        let meta = FileMeta::from_bytes(&payload[..META_LEN])?;
        let compressed_size = u64::from_le_bytes(payload[META_LEN..FETCH_PREFIX_LEN].try_into().unwrap());
        let data = payload.split_off(FETCH_PREFIX_LEN);
        let expected = if compressed_size == 0 {
            meta.size_bytes
        } else {
            compressed_size
        };
        if data.len() as u64 != expected {
            return Err(Error::Corrupt(format!(
                "fetched {} stored bytes, expected {expected}",
                data.len()
            )));
        }
        Ok(FetchReply {
            meta,
            compressed_size,
            data,
        })
    }
}

/// COMMIT_META and output STAT_OK body: stat record, then the writer node.
pub fn encode_output_record(r: &OutputRecord) -> Vec<u8> {
    let mut out = Vec::with_capacity(META_LEN + 4);
    out.extend_from_slice(&r.meta.to_bytes());
    out.extend_from_slice(&r.writer.to_le_bytes());
    out
}

/// Accepts a bare 144-byte stat record too; the writer then defaults to
/// `sender`.
pub fn decode_output_record(payload: &[u8], sender: NodeId) -> Result<OutputRecord> {
    let meta = FileMeta::from_bytes(payload.get(..META_LEN).ok_or_else(|| {
        Error::Malformed(format!("output record of {} bytes", payload.len()))
    })?)?;
    let writer = match &payload[META_LEN..] {
        [] => sender,
        [a, b, c, d] => u32::from_le_bytes([*a, *b, *c, *d]),
        _ => return Err(Error::Malformed("output record trailer".into())),
    };
    Ok(OutputRecord { meta, writer })
}

pub fn encode_names(names: &[String]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(names.len() as u32).to_le_bytes());
    for n in names {
        out.extend_from_slice(&(n.len() as u16).to_le_bytes());
        out.extend_from_slice(n.as_bytes());
    }
    out
}

pub fn decode_names(payload: &[u8]) -> Result<Vec<String>> {
    let short = || Error::Malformed("short NAMES payload".into());
    let count = u32::from_le_bytes(payload.get(..4).ok_or_else(short)?.try_into().unwrap());
    let mut pos = 4;
    let mut names = Vec::with_capacity(count.min(1 << 16) as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(payload.get(pos..pos + 2).ok_or_else(short)?.try_into().unwrap()) as usize;
        pos += 2;
        let name = payload.get(pos..pos + len).ok_or_else(short)?;
        names.push(String::from_utf8(name.to_vec()).map_err(|_| Error::Malformed("name not UTF-8".into()))?);
        pos += len;
    }
    Ok(names)
}

pub(crate) fn u64_at(payload: &[u8], at: usize) -> Result<u64> {
    payload
        .get(at..at + 8)
        .map(|s| u64::from_le_bytes(s.try_into().unwrap()))
        .ok_or_else(|| Error::Malformed(format!("payload too short for u64 at {at}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn golden_fetch_frame() {
        let f = Frame {
            opcode: Opcode::FetchFile,
            request_id: 0x0102030405060708,
            path: "a/b".into(),
            payload: vec![],
        };
        let bytes = f.encode().unwrap();
        assert_eq!(
            bytes,
            [
                b'F', b'A', b'N', b'S', 1, 1, //
                8, 7, 6, 5, 4, 3, 2, 1, //
                3, 0, b'a', b'/', b'b', //
                0, 0, 0, 0
            ]
        );
        assert_eq!(Frame::decode(&bytes, DEFAULT_MAX_FRAME).unwrap(), (f, bytes.len()));
    }

    #[test]
    fn error_frames_carry_codes() {
        let f = Frame::error(9, &Error::NotFound("x".into()));
        assert_eq!(&f.payload[..2], &[2, 0]);
        assert!(matches!(f.into_result(), Err(Error::NotFound(_))));
    }

    #[test]
    fn oversized_frame_is_skipped_not_fatal() {
        let big = Frame::new(Opcode::Write, "p", vec![7; 100]).encode().unwrap();
        let next = Frame::new(Opcode::Ping, "", vec![]).encode().unwrap();
        let stream: Vec<u8> = big.iter().chain(&next).copied().collect();
        let mut r = stream.as_slice();
        assert!(matches!(
            read_frame(&mut r, 64),
            Err(ReadError::Bad {
                error: Error::FrameTooLarge { .. },
                ..
            })
        ));
        assert_eq!(read_frame(&mut r, 64).unwrap().opcode, Opcode::Ping);
    }

    #[test]
    fn bad_magic_and_opcode_keep_stream_in_sync() {
        let mut bad = Frame::new(Opcode::Ping, "x", vec![1, 2]).encode().unwrap();
        bad[0] = b'X';
        let mut bad_op = Frame::new(Opcode::Ping, "", vec![]).encode().unwrap();
        bad_op[5] = 200;
        let good = Frame::new(Opcode::Stat, "ok", vec![]).encode().unwrap();
        let stream: Vec<u8> = [bad, bad_op, good].concat();
        let mut r = stream.as_slice();
        assert!(matches!(read_frame(&mut r, DEFAULT_MAX_FRAME), Err(ReadError::Bad { .. })));
        assert!(matches!(read_frame(&mut r, DEFAULT_MAX_FRAME), Err(ReadError::Bad { .. })));
        assert_eq!(read_frame(&mut r, DEFAULT_MAX_FRAME).unwrap().path, "ok");
        assert!(matches!(read_frame(&mut r, DEFAULT_MAX_FRAME), Err(ReadError::Closed)));
    }

    #[test]
    fn fetch_reply_layout() {
        let reply = FetchReply {
            meta: FileMeta {
                size_bytes: 10,
                ..FileMeta::default()
            },
            compressed_size: 0,
            data: b"0123456789".to_vec(),
        };
        let payload = reply.encode();
        assert_eq!(payload.len(), 144 + 8 + 10);
        assert_eq!(FetchReply::decode(payload).unwrap(), reply);
    }

    #[test]
    fn output_record_accepts_bare_meta() {
        let meta = FileMeta {
            size_bytes: 5,
            ..FileMeta::default()
        };
        let r = decode_output_record(&meta.to_bytes(), 3).unwrap();
        assert_eq!(r, OutputRecord { meta, writer: 3 });
        let full = encode_output_record(&OutputRecord { meta, writer: 1 });
        assert_eq!(decode_output_record(&full, 3).unwrap().writer, 1);
    }

    proptest! {
        #[test]
        fn names_round_trip(names in prop::collection::vec("[a-z0-9._-]{0,20}", 0..20)) {
            prop_assert_eq!(decode_names(&encode_names(&names)).unwrap(), names);
        }
    }
}
