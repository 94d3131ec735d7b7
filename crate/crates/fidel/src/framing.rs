//! Shared outer layout of the binary files: 4 magic bytes, a `u16` format
//! version, a `u32` header length, a UTF-8 JSON header, then the payload.
//! All integers are little-endian.

use crate::error::{Error, Result};

pub const PRELUDE: usize = 4 + 2 + 4;

pub fn encode(magic: &[u8; 4], version: u16, header: &[u8], payload: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(PRELUDE + header.len() + payload.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header);
    out.extend_from_slice(payload);
    out
}

pub struct Frame<'a> {
    pub header: &'a [u8],
    pub payload: &'a [u8],
    /// Absolute offset of the first payload byte.
    pub payload_offset: u64,
}

pub fn decode<'a>(bytes: &'a [u8], magic: &[u8; 4], version: u16, what: &'static str) -> Result<Frame<'a>> {
    if bytes.len() < 4 {
        return Err(Error::format(what, bytes.len() as u64, "file ends inside the magic bytes"));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(
            what,
            0,
            format!("bad magic {:?}, expected {:?}", String::from_utf8_lossy(&bytes[..4]), String::from_utf8_lossy(magic)),
        ));
    }
    if bytes.len() < 6 {
        return Err(Error::format(what, bytes.len() as u64, "file ends inside the version field"));
    }
    let found = u16::from_le_bytes([bytes[4], bytes[5]]);
    if found != version {
        return Err(Error::format(what, 4, format!("unsupported version {found}, expected {version}")));
    }
    if bytes.len() < PRELUDE {
        return Err(Error::format(what, bytes.len() as u64, "file ends inside the header length"));
    }
    let len = u32::from_le_bytes([bytes[6], bytes[7], bytes[8], bytes[9]]) as usize;
    let end = PRELUDE + len;
    if bytes.len() < end {
        return Err(Error::format(
            what,
            bytes.len() as u64,
            format!("truncated header: {len} bytes declared, {} present", bytes.len() - PRELUDE),
        ));
    }
    Ok(Frame {
        header: &bytes[PRELUDE..end],
        payload: &bytes[end..],
        payload_offset: end as u64,
    })
}

pub fn parse_header<T: serde::de::DeserializeOwned>(header: &[u8], what: &'static str) -> Result<T> {
    serde_json::from_slice(header).map_err(|e| Error::format(what, (PRELUDE + e.column().saturating_sub(1)) as u64, format!("header: {e}")))
}

/// Bounds-checked view of `len` bytes at `offset` within the payload.
pub fn slice<'a>(frame: &Frame<'a>, offset: u64, len: u64, what: &'static str, name: &str) -> Result<&'a [u8]> {
    let end = offset.checked_add(len);
    match end {
        Some(end) if end <= frame.payload.len() as u64 => Ok(&frame.payload[offset as usize..end as usize]),
        _ => Err(Error::format(
            what,
            frame.payload_offset + frame.payload.len() as u64,
            format!(
                "array {name:?} needs bytes {}..{} of the payload but only {} are present",
                offset,
                offset.saturating_add(len),
                frame.payload.len()
            ),
        )),
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    hex::encode(Sha256::digest(bytes))
}
