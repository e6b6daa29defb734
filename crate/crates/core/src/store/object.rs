//! Object layout: `BOLTOBJ1`, u32 version, then entries
//! `[u64 log][u32 length][payload]`, big-endian. Record references point at
//! payload bytes, never at entry headers.

use crate::codec::{Decoder, Encoder};
use crate::error::{EngineError, Result};
use crate::types::LogId;

pub const OBJECT_MAGIC: &[u8; 8] = b"BOLTOBJ1";
const OBJECT_VERSION: u32 = 1;
pub const OBJECT_HEADER_LEN: usize = 12;
const ENTRY_HEADER_LEN: usize = 12;

#[derive(Debug)]
pub struct ObjectBuilder {
    buf: Encoder,
    entries: usize,
}

impl Default for ObjectBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl ObjectBuilder {
    pub fn new() -> Self {
        let mut buf = Encoder::new();
        buf.raw(OBJECT_MAGIC).u32(OBJECT_VERSION);
        ObjectBuilder { buf, entries: 0 }
    }

    /// Append one entry and return the byte offset of its payload.
    pub fn push(&mut self, log: LogId, payload: &[u8]) -> u64 {
        self.buf.u64(log.0).u32(payload.len() as u32);
        let offset = self.buf.len() as u64;
        self.buf.raw(payload);
        self.entries += 1;
        offset
    }

    pub fn entries(&self) -> usize {
        self.entries
    }

    pub fn size(&self) -> usize {
        self.buf.len()
    }

    /// Bytes a further entry of `payload_len` bytes would add.
    pub fn entry_cost(payload_len: usize) -> usize {
        ENTRY_HEADER_LEN + payload_len
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf.finish()
    }
}

/// Entries of an object as `(log, payload offset, payload length)`.
pub fn parse_object(bytes: &[u8]) -> Result<Vec<(LogId, u64, u32)>> {
    let mut d = Decoder::new(bytes);
    if d.raw(8)? != OBJECT_MAGIC {
        return Err(EngineError::protocol("not an object (bad magic)"));
    }
    let version = d.u32()?;
    if version != OBJECT_VERSION {
        return Err(EngineError::protocol(format!("unsupported object version {version}")));
    }
    let mut out = Vec::new();
    while d.remaining() > 0 {
        let log = LogId(d.u64()?);
        let len = d.u32()?;
        let offset = d.position() as u64;
        d.raw(len as usize)?;
        out.push((log, offset, len));
    }
    Ok(out)
}
