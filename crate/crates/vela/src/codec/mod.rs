//! Bit-exact encoding/decoding of every persisted key and value.
//!
//! All graph records live in one ordered byte keyspace. The leading
//! kind byte splits it into data (0x01), index (0x02), edge-write lock
//! (0x03), and system (0x04) regions; within the data region every
//! record of a vertex shares the prefix `0x01 ‖ part ‖ vid`, so one
//! prefix scan returns the vertex marker, its tag rows, its out-edges,
//! and its in-edges contiguously in that order.
//!
//! Byte layouts are documented in `docs/key-format.md`. They are the
//! on-disk and wire contract: bytewise key order equals the documented
//! tuple order for every kind.

mod keys;
mod row;

pub use keys::*;
pub use row::*;

use serde::{Deserialize, Serialize};
use std::fmt;

pub type SpaceId = u32;
pub type PartId = u32;
pub type TagId = u32;
pub type EdgeTypeId = u32;
pub type IndexId = u32;

/// Default VID byte length when a space does not configure one.
pub const DEFAULT_VID_LEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("vid of {len} bytes exceeds configured vid_len {vid_len}")]
    VidTooLong { len: usize, vid_len: usize },
    #[error("cannot index a null value: indexed properties are NOT NULL")]
    NullInIndex,
    #[error("indexed value of {0} bytes exceeds the 65535-byte cap")]
    IndexValueTooLong(usize),
    #[error("property '{property}' expects {expected}, got {actual}")]
    TypeMismatch {
        property: String,
        expected: String,
        actual: String,
    },
    #[error("property '{0}' is NOT NULL but no value was supplied")]
    UnexpectedNull(String),
    #[error("malformed key: {0}")]
    MalformedKey(String),
    #[error("malformed row value: {0}")]
    MalformedRow(String),
    #[error("row written under unknown schema version {0}")]
    UnknownSchemaVersion(u32),
}

/// Fixed-length vertex identifier. The raw user string is right-padded
/// with 0x00 to the space's configured `vid_len`; comparison is bytewise.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Vid {
    bytes: Vec<u8>,
}

impl Vid {
    pub fn new(raw: &str, vid_len: usize) -> Result<Vid, CodecError> {
        Self::from_bytes(raw.as_bytes(), vid_len)
    }

    pub fn from_bytes(raw: &[u8], vid_len: usize) -> Result<Vid, CodecError> {
        if raw.len() > vid_len {
            return Err(CodecError::VidTooLong { len: raw.len(), vid_len });
        }
        let mut bytes = raw.to_vec();
        bytes.resize(vid_len, 0);
        Ok(Vid { bytes })
    }

    /// Wraps bytes already padded to vid_len (e.g. sliced out of a key).
    pub fn from_padded(bytes: Vec<u8>) -> Vid {
        Vid { bytes }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    /// The user-visible form: padding stripped.
    pub fn display_string(&self) -> String {
        let end = self
            .bytes
            .iter()
            .rposition(|&b| b != 0)
            .map_or(0, |p| p + 1);
        String::from_utf8_lossy(&self.bytes[..end]).into_owned()
    }
}

impl fmt::Debug for Vid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Vid({:?})", self.display_string())
    }
}

impl fmt::Display for Vid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.display_string())
    }
}

/// Immutable user-assigned 64-bit signed edge rank. Encoded with the
/// sign bit flipped so bytewise order equals numeric order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Rank(pub i64);

impl Rank {
    pub fn biased(self) -> u64 {
        (self.0 as u64) ^ (1 << 63)
    }

    pub fn from_biased(b: u64) -> Rank {
        Rank((b ^ (1 << 63)) as i64)
    }
}

impl fmt::Display for Rank {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
