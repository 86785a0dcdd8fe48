//! Key construction, prefixes, and decoding for all four key kinds.

use super::{CodecError, EdgeTypeId, IndexId, PartId, Rank, TagId, Vid};
use crate::value::PropertyValue;
use serde::{Deserialize, Serialize};

pub const KIND_DATA: u8 = 0x01;
pub const KIND_INDEX: u8 = 0x02;
pub const KIND_LOCK: u8 = 0x03;
pub const KIND_SYSTEM: u8 = 0x04;

/// Record discriminator after the vid inside a data key. Ordering of the
/// constants fixes the scan order: marker, tags, out-edges, in-edges.
pub const RECORD_VERTEX: u8 = 0x00;
pub const RECORD_TAG: u8 = 0x01;
pub const RECORD_OUT_EDGE: u8 = 0x02;
pub const RECORD_IN_EDGE: u8 = 0x03;

/// Reserved trailing byte on edge keys; written as zero, never read.
pub const MVCC_PLACEHOLDER: u8 = 0x00;

/// System sub-keys (kind 0x04).
pub const SYS_APPLIED_INDEX: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    Out,
    In,
}

impl Direction {
    pub fn record_kind(self) -> u8 {
        match self {
            Direction::Out => RECORD_OUT_EDGE,
            Direction::In => RECORD_IN_EDGE,
        }
    }
}

fn header(kind: u8, part: PartId, cap: usize) -> Vec<u8> {
    let mut k = Vec::with_capacity(5 + cap);
    k.push(kind);
    k.extend_from_slice(&part.to_be_bytes());
    k
}

/// `0x01 ‖ part ‖ vid ‖ 0x00`; the value part is empty.
pub fn encode_vertex_key(part: PartId, vid: &Vid) -> Vec<u8> {
    let mut k = header(KIND_DATA, part, vid.len() + 1);
    k.extend_from_slice(vid.as_bytes());
    k.push(RECORD_VERTEX);
    k
}

/// `0x01 ‖ part ‖ vid ‖ 0x01 ‖ tag_id`; value carries the tag's row.
pub fn encode_tag_key(part: PartId, vid: &Vid, tag_id: TagId) -> Vec<u8> {
    let mut k = header(KIND_DATA, part, vid.len() + 5);
    k.extend_from_slice(vid.as_bytes());
    k.push(RECORD_TAG);
    k.extend_from_slice(&tag_id.to_be_bytes());
    k
}

/// `0x01 ‖ part ‖ first ‖ kind ‖ edge_type ‖ biased_rank ‖ other ‖ 0x00`.
/// For `Out` keys `first` is the source vid; for `In` keys the positions
/// are swapped and `first` is the destination.
pub fn encode_edge_key(
    part: PartId,
    first: &Vid,
    direction: Direction,
    edge_type: EdgeTypeId,
    rank: Rank,
    other: &Vid,
) -> Vec<u8> {
    let mut k = header(KIND_DATA, part, first.len() * 2 + 14);
    k.extend_from_slice(first.as_bytes());
    k.push(direction.record_kind());
    k.extend_from_slice(&edge_type.to_be_bytes());
    k.extend_from_slice(&rank.biased().to_be_bytes());
    k.extend_from_slice(other.as_bytes());
    k.push(MVCC_PLACEHOLDER);
    k
}

/// Out-key on the source partition and its reverse twin on the
/// destination partition.
pub fn edge_key_pair(
    src_part: PartId,
    dst_part: PartId,
    src: &Vid,
    dst: &Vid,
    edge_type: EdgeTypeId,
    rank: Rank,
) -> (Vec<u8>, Vec<u8>) {
    (
        encode_edge_key(src_part, src, Direction::Out, edge_type, rank, dst),
        encode_edge_key(dst_part, dst, Direction::In, edge_type, rank, src),
    )
}

/// Order-preserving encoding of one indexed value. Returns the number of
/// bytes written, which goes into the key's length segment.
pub fn encode_index_value(value: &PropertyValue, out: &mut Vec<u8>) -> Result<u16, CodecError> {
    let start = out.len();
    match value {
        PropertyValue::Null => return Err(CodecError::NullInIndex),
        PropertyValue::Bool(b) => out.push(*b as u8),
        PropertyValue::Int64(v) => {
            out.extend_from_slice(&((*v as u64) ^ (1 << 63)).to_be_bytes())
        }
        PropertyValue::Float64(v) => {
            // Standard sign-flip/complement transform: negative floats
            // invert all bits, non-negative flip the sign bit.
            let bits = v.to_bits();
            let mapped = if bits & (1 << 63) != 0 { !bits } else { bits | (1 << 63) };
            out.extend_from_slice(&mapped.to_be_bytes());
        }
        PropertyValue::Str(s) => {
            if s.len() > u16::MAX as usize {
                return Err(CodecError::IndexValueTooLong(s.len()));
            }
            out.extend_from_slice(s.as_bytes());
        }
        PropertyValue::Date(d) => {
            out.extend_from_slice(&d.year.to_be_bytes());
            out.push(d.month);
            out.push(d.day);
        }
        PropertyValue::DateTime(dt) => {
            out.extend_from_slice(&dt.date.year.to_be_bytes());
            out.extend_from_slice(&[dt.date.month, dt.date.day, dt.hour, dt.minute, dt.second]);
        }
    }
    Ok((out.len() - start) as u16)
}

/// Concatenated order-preserving encodings plus the per-value lengths.
pub fn encode_index_binary(values: &[PropertyValue]) -> Result<(Vec<u8>, Vec<u16>), CodecError> {
    let mut binary = Vec::new();
    let mut lengths = Vec::with_capacity(values.len());
    for v in values {
        lengths.push(encode_index_value(v, &mut binary)?);
    }
    Ok((binary, lengths))
}

/// `0x02 ‖ part ‖ index_id ‖ index_binary ‖ lengths ‖ vid`; value empty.
/// The length segment disambiguates splits like "ab"+"cd" vs "abc"+"d".
pub fn encode_index_key(
    part: PartId,
    index_id: IndexId,
    values: &[PropertyValue],
    vid: &Vid,
) -> Result<Vec<u8>, CodecError> {
    let (binary, lengths) = encode_index_binary(values)?;
    let mut k = header(KIND_INDEX, part, 4 + binary.len() + lengths.len() * 2 + vid.len());
    k.extend_from_slice(&index_id.to_be_bytes());
    k.extend_from_slice(&binary);
    for l in &lengths {
        k.extend_from_slice(&l.to_be_bytes());
    }
    k.extend_from_slice(vid.as_bytes());
    Ok(k)
}

/// Edge-index variant: the trailing ref is `src ‖ biased_rank ‖ dst`
/// instead of a single vid, identifying the out-edge exactly.
pub fn encode_edge_index_key(
    part: PartId,
    index_id: IndexId,
    values: &[PropertyValue],
    src: &Vid,
    rank: Rank,
    dst: &Vid,
) -> Result<Vec<u8>, CodecError> {
    let (binary, lengths) = encode_index_binary(values)?;
    let mut k = header(
        KIND_INDEX,
        part,
        4 + binary.len() + lengths.len() * 2 + src.len() * 2 + 8,
    );
    k.extend_from_slice(&index_id.to_be_bytes());
    k.extend_from_slice(&binary);
    for l in &lengths {
        k.extend_from_slice(&l.to_be_bytes());
    }
    k.extend_from_slice(src.as_bytes());
    k.extend_from_slice(&rank.biased().to_be_bytes());
    k.extend_from_slice(dst.as_bytes());
    Ok(k)
}

/// `0x03 ‖ part ‖ src ‖ edge_type ‖ biased_rank`; the value carries the
/// serialized pending edge write ([`PendingEdge`]).
pub fn encode_lock_key(part: PartId, src: &Vid, edge_type: EdgeTypeId, rank: Rank) -> Vec<u8> {
    let mut k = header(KIND_LOCK, part, src.len() + 12);
    k.extend_from_slice(src.as_bytes());
    k.extend_from_slice(&edge_type.to_be_bytes());
    k.extend_from_slice(&rank.biased().to_be_bytes());
    k
}

/// `0x04 ‖ part ‖ sub`; per-partition bookkeeping such as the applied
/// Raft index.
pub fn encode_system_key(part: PartId, sub: u8) -> Vec<u8> {
    let mut k = header(KIND_SYSTEM, part, 1);
    k.push(sub);
    k
}

// ---------------------------------------------------------------------------
// Prefixes for scans
// ---------------------------------------------------------------------------

/// Every record of `vid` (marker, tags, out-edges, in-edges) shares this.
pub fn vertex_prefix(part: PartId, vid: &Vid) -> Vec<u8> {
    let mut k = header(KIND_DATA, part, vid.len());
    k.extend_from_slice(vid.as_bytes());
    k
}

pub fn record_kind_prefix(part: PartId, vid: &Vid, record_kind: u8) -> Vec<u8> {
    let mut k = vertex_prefix(part, vid);
    k.push(record_kind);
    k
}

pub fn edge_type_prefix(part: PartId, vid: &Vid, direction: Direction, etype: EdgeTypeId) -> Vec<u8> {
    let mut k = record_kind_prefix(part, vid, direction.record_kind());
    k.extend_from_slice(&etype.to_be_bytes());
    k
}

pub fn part_prefix(kind: u8, part: PartId) -> Vec<u8> {
    header(kind, part, 0)
}

pub fn index_prefix(part: PartId, index_id: IndexId) -> Vec<u8> {
    let mut k = header(KIND_INDEX, part, 4);
    k.extend_from_slice(&index_id.to_be_bytes());
    k
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

/// A decoded key. Index keys keep their body raw here because splitting
/// binary from lengths needs the index's declared value count; use
/// [`decode_index_key`] / [`decode_edge_index_key`] for that.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphKey {
    Vertex {
        part: PartId,
        vid: Vid,
    },
    Tag {
        part: PartId,
        vid: Vid,
        tag_id: TagId,
    },
    Edge {
        part: PartId,
        first: Vid,
        direction: Direction,
        edge_type: EdgeTypeId,
        rank: Rank,
        other: Vid,
    },
    Index {
        part: PartId,
        index_id: IndexId,
        body: Vec<u8>,
    },
    Lock {
        part: PartId,
        src: Vid,
        edge_type: EdgeTypeId,
        rank: Rank,
    },
    System {
        part: PartId,
        sub: u8,
    },
}

fn need(bytes: &[u8], n: usize) -> Result<(), CodecError> {
    if bytes.len() < n {
        return Err(CodecError::MalformedKey(format!(
            "need {} bytes, have {}",
            n,
            bytes.len()
        )));
    }
    Ok(())
}

fn be_u32(bytes: &[u8]) -> u32 {
    u32::from_be_bytes(bytes[..4].try_into().unwrap())
}

fn be_u64(bytes: &[u8]) -> u64 {
    u64::from_be_bytes(bytes[..8].try_into().unwrap())
}

impl GraphKey {
    pub fn decode(bytes: &[u8], vid_len: usize) -> Result<GraphKey, CodecError> {
        need(bytes, 5)?;
        let kind = bytes[0];
        let part = be_u32(&bytes[1..]);
        let body = &bytes[5..];
        match kind {
            KIND_DATA => Self::decode_data(part, body, vid_len),
            KIND_INDEX => {
                need(body, 4)?;
                Ok(GraphKey::Index {
                    part,
                    index_id: be_u32(body),
                    body: body[4..].to_vec(),
                })
            }
            KIND_LOCK => {
                need(body, vid_len + 12)?;
                let src = Vid::from_padded(body[..vid_len].to_vec());
                let edge_type = be_u32(&body[vid_len..]);
                let rank = Rank::from_biased(be_u64(&body[vid_len + 4..]));
                Ok(GraphKey::Lock { part, src, edge_type, rank })
            }
            KIND_SYSTEM => {
                need(body, 1)?;
                Ok(GraphKey::System { part, sub: body[0] })
            }
            other => Err(CodecError::MalformedKey(format!("unknown kind byte {:#04x}", other))),
        }
    }

    fn decode_data(part: PartId, body: &[u8], vid_len: usize) -> Result<GraphKey, CodecError> {
        need(body, vid_len + 1)?;
        let vid = Vid::from_padded(body[..vid_len].to_vec());
        let record_kind = body[vid_len];
        let rest = &body[vid_len + 1..];
        match record_kind {
            RECORD_VERTEX => {
                if !rest.is_empty() {
                    return Err(CodecError::MalformedKey("trailing bytes on vertex key".into()));
                }
                Ok(GraphKey::Vertex { part, vid })
            }
            RECORD_TAG => {
                need(rest, 4)?;
                Ok(GraphKey::Tag { part, vid, tag_id: be_u32(rest) })
            }
            RECORD_OUT_EDGE | RECORD_IN_EDGE => {
                need(rest, 12 + vid_len + 1)?;
                let edge_type = be_u32(rest);
                let rank = Rank::from_biased(be_u64(&rest[4..]));
                let other = Vid::from_padded(rest[12..12 + vid_len].to_vec());
                let direction = if record_kind == RECORD_OUT_EDGE {
                    Direction::Out
                } else {
                    Direction::In
                };
                Ok(GraphKey::Edge { part, first: vid, direction, edge_type, rank, other })
            }
            other => Err(CodecError::MalformedKey(format!(
                "unknown record kind {:#04x}",
                other
            ))),
        }
    }
}

/// Decoded index key for a vertex index with `value_count` properties.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexKeyParts {
    pub part: PartId,
    pub index_id: IndexId,
    /// Per-value encoded segments, in declared property order.
    pub segments: Vec<Vec<u8>>,
    pub lengths: Vec<u16>,
    pub vid: Vid,
}

fn split_index_body(
    body: &[u8],
    value_count: usize,
    tail_len: usize,
) -> Result<(Vec<Vec<u8>>, Vec<u16>, &[u8]), CodecError> {
    let fixed = value_count * 2 + tail_len;
    if body.len() < fixed {
        return Err(CodecError::MalformedKey("index key too short".into()));
    }
    let binary_len = body.len() - fixed;
    let binary = &body[..binary_len];
    let mut lengths = Vec::with_capacity(value_count);
    for i in 0..value_count {
        let at = binary_len + i * 2;
        lengths.push(u16::from_be_bytes([body[at], body[at + 1]]));
    }
    if lengths.iter().map(|&l| l as usize).sum::<usize>() != binary_len {
        return Err(CodecError::MalformedKey(
            "index lengths do not cover the binary segment".into(),
        ));
    }
    let mut segments = Vec::with_capacity(value_count);
    let mut off = 0;
    for &l in &lengths {
        segments.push(binary[off..off + l as usize].to_vec());
        off += l as usize;
    }
    Ok((segments, lengths, &body[body.len() - tail_len..]))
}

pub fn decode_index_key(
    bytes: &[u8],
    vid_len: usize,
    value_count: usize,
) -> Result<IndexKeyParts, CodecError> {
    need(bytes, 9)?;
    if bytes[0] != KIND_INDEX {
        return Err(CodecError::MalformedKey("not an index key".into()));
    }
    let part = be_u32(&bytes[1..]);
    let index_id = be_u32(&bytes[5..]);
    let (segments, lengths, tail) = split_index_body(&bytes[9..], value_count, vid_len)?;
    Ok(IndexKeyParts {
        part,
        index_id,
        segments,
        lengths,
        vid: Vid::from_padded(tail.to_vec()),
    })
}

/// Decoded edge-index key: the tail identifies the out-edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeIndexKeyParts {
    pub part: PartId,
    pub index_id: IndexId,
    pub segments: Vec<Vec<u8>>,
    pub lengths: Vec<u16>,
    pub src: Vid,
    pub rank: Rank,
    pub dst: Vid,
}

pub fn decode_edge_index_key(
    bytes: &[u8],
    vid_len: usize,
    value_count: usize,
) -> Result<EdgeIndexKeyParts, CodecError> {
    need(bytes, 9)?;
    if bytes[0] != KIND_INDEX {
        return Err(CodecError::MalformedKey("not an index key".into()));
    }
    let part = be_u32(&bytes[1..]);
    let index_id = be_u32(&bytes[5..]);
    let (segments, lengths, tail) = split_index_body(&bytes[9..], value_count, vid_len * 2 + 8)?;
    Ok(EdgeIndexKeyParts {
        part,
        index_id,
        segments,
        lengths,
        src: Vid::from_padded(tail[..vid_len].to_vec()),
        rank: Rank::from_biased(be_u64(&tail[vid_len..])),
        dst: Vid::from_padded(tail[vid_len + 8..].to_vec()),
    })
}

// ---------------------------------------------------------------------------
// Lock values
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PendingOp {
    Put,
    Delete,
}

/// The pending edge write carried in a lock record's value. The lock key
/// already names (src, edge_type, rank); this adds the destination and,
/// for puts, the serialized property row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingEdge {
    pub op: PendingOp,
    pub dst: Vid,
    pub row: Vec<u8>,
}

impl PendingEdge {
    pub fn encode(&self) -> Vec<u8> {
        let mut v = Vec::with_capacity(1 + self.dst.len() + self.row.len());
        v.push(match self.op {
            PendingOp::Put => 0,
            PendingOp::Delete => 1,
        });
        v.extend_from_slice(self.dst.as_bytes());
        v.extend_from_slice(&self.row);
        v
    }

    pub fn decode(bytes: &[u8], vid_len: usize) -> Result<PendingEdge, CodecError> {
        if bytes.len() < 1 + vid_len {
            return Err(CodecError::MalformedRow("pending edge too short".into()));
        }
        let op = match bytes[0] {
            0 => PendingOp::Put,
            1 => PendingOp::Delete,
            other => {
                return Err(CodecError::MalformedRow(format!("bad pending op {}", other)))
            }
        };
        Ok(PendingEdge {
            op,
            dst: Vid::from_padded(bytes[1..1 + vid_len].to_vec()),
            row: bytes[1 + vid_len..].to_vec(),
        })
    }
}

/// Successor of `prefix` in byte order: the smallest byte string greater
/// than every string starting with `prefix`. Used as an exclusive scan
/// upper bound; `None` means "to the end of the keyspace".
pub fn prefix_upper_bound(prefix: &[u8]) -> Option<Vec<u8>> {
    let mut end = prefix.to_vec();
    while let Some(&last) = end.last() {
        if last == 0xff {
            end.pop();
        } else {
            *end.last_mut().unwrap() += 1;
            return Some(end);
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::PropertyValue as V;

    const VID_LEN: usize = 8;

    fn vid(s: &str) -> Vid {
        Vid::new(s, VID_LEN).unwrap()
    }

    #[test]
    fn vertex_key_decomposes_like_the_worked_example() {
        // PartId 100, VertexId "50", empty value.
        let key = encode_vertex_key(100, &vid("50"));
        assert_eq!(key[0], KIND_DATA);
        match GraphKey::decode(&key, VID_LEN).unwrap() {
            GraphKey::Vertex { part, vid } => {
                assert_eq!(part, 100);
                assert_eq!(vid.display_string(), "50");
            }
            other => panic!("decoded {:?}", other),
        }
    }

    #[test]
    fn tag_keys_distinguish_part_and_vid() {
        let a = encode_tag_key(100, &vid("50"), 11);
        let b = encode_tag_key(101, &vid("60"), 11);
        assert_ne!(a, b);
        match GraphKey::decode(&a, VID_LEN).unwrap() {
            GraphKey::Tag { part, vid, tag_id } => {
                assert_eq!((part, tag_id), (100, 11));
                assert_eq!(vid.display_string(), "50");
            }
            other => panic!("decoded {:?}", other),
        }
    }

    #[test]
    fn tag_ids_order_bytewise() {
        let v = vid("50");
        assert!(encode_tag_key(100, &v, 1) < encode_tag_key(100, &v, 2));
    }

    #[test]
    fn edge_twins_start_with_their_own_endpoint() {
        let (out, inn) = edge_key_pair(3, 9, &vid("a"), &vid("b"), 7, Rank(0));
        match GraphKey::decode(&out, VID_LEN).unwrap() {
            GraphKey::Edge { part, first, direction, other, .. } => {
                assert_eq!(part, 3);
                assert_eq!(direction, Direction::Out);
                assert_eq!(first.display_string(), "a");
                assert_eq!(other.display_string(), "b");
            }
            other => panic!("decoded {:?}", other),
        }
        match GraphKey::decode(&inn, VID_LEN).unwrap() {
            GraphKey::Edge { part, first, direction, other, .. } => {
                assert_eq!(part, 9);
                assert_eq!(direction, Direction::In);
                assert_eq!(first.display_string(), "b");
                assert_eq!(other.display_string(), "a");
            }
            other => panic!("decoded {:?}", other),
        }
    }

    #[test]
    fn rank_bias_keeps_numeric_order() {
        let v = vid("a");
        let o = vid("b");
        let neg = encode_edge_key(1, &v, Direction::Out, 1, Rank(-1), &o);
        let zero = encode_edge_key(1, &v, Direction::Out, 1, Rank(0), &o);
        assert!(neg < zero);
        assert_eq!(Rank::from_biased(Rank(i64::MIN).biased()), Rank(i64::MIN));
    }

    #[test]
    fn index_key_matches_table_layout() {
        // i-a on (pa-1, pa-2): binary "ta-1ta-2", lengths 4,4, vid 50.
        let key = encode_index_key(
            100,
            1,
            &[V::Str("ta-1".into()), V::Str("ta-2".into())],
            &vid("50"),
        )
        .unwrap();
        let parts = decode_index_key(&key, VID_LEN, 2).unwrap();
        assert_eq!(parts.part, 100);
        assert_eq!(parts.index_id, 1);
        assert_eq!(parts.segments, vec![b"ta-1".to_vec(), b"ta-2".to_vec()]);
        assert_eq!(parts.lengths, vec![4, 4]);
        assert_eq!(parts.vid.display_string(), "50");
    }

    #[test]
    fn length_segment_disambiguates_equal_binary() {
        let v = vid("x");
        let a = encode_index_key(1, 1, &[V::Str("ab".into()), V::Str("cd".into())], &v).unwrap();
        let b = encode_index_key(1, 1, &[V::Str("abc".into()), V::Str("d".into())], &v).unwrap();
        // same concatenated binary, different keys
        assert_ne!(a, b);
        assert_eq!(&a[9..13], &b[9..13]);
    }

    #[test]
    fn null_in_index_is_rejected() {
        let err = encode_index_key(1, 1, &[V::Null], &vid("x")).unwrap_err();
        assert_eq!(err, CodecError::NullInIndex);
    }

    #[test]
    fn numeric_index_encodings_preserve_order() {
        let samples = [-3.5_f64, -0.0, 0.0, 1.25, 1e18];
        let mut encoded: Vec<Vec<u8>> = samples
            .iter()
            .map(|f| {
                let mut out = Vec::new();
                encode_index_value(&V::Float64(*f), &mut out).unwrap();
                out
            })
            .collect();
        let sorted = encoded.clone();
        encoded.sort();
        assert_eq!(encoded, sorted);

        let ints = [i64::MIN, -1, 0, 1, i64::MAX];
        let mut keys: Vec<Vec<u8>> = ints
            .iter()
            .map(|i| {
                let mut out = Vec::new();
                encode_index_value(&V::Int64(*i), &mut out).unwrap();
                out
            })
            .collect();
        let sorted = keys.clone();
        keys.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn lock_keys_are_deterministic_and_rank_scoped() {
        let a = encode_lock_key(4, &vid("s"), 2, Rank(5));
        let b = encode_lock_key(4, &vid("s"), 2, Rank(5));
        let c = encode_lock_key(4, &vid("s"), 2, Rank(6));
        assert_eq!(a, b);
        assert_ne!(a, c);
        match GraphKey::decode(&a, VID_LEN).unwrap() {
            GraphKey::Lock { part, src, edge_type, rank } => {
                assert_eq!((part, edge_type, rank), (4, 2, Rank(5)));
                assert_eq!(src.display_string(), "s");
            }
            other => panic!("decoded {:?}", other),
        }
    }

    #[test]
    fn pending_edge_round_trips() {
        let p = PendingEdge { op: PendingOp::Put, dst: vid("d"), row: vec![1, 2, 3] };
        assert_eq!(PendingEdge::decode(&p.encode(), VID_LEN).unwrap(), p);
        let d = PendingEdge { op: PendingOp::Delete, dst: vid("d"), row: vec![] };
        assert_eq!(PendingEdge::decode(&d.encode(), VID_LEN).unwrap(), d);
    }

    #[test]
    fn adjacency_records_share_the_vertex_prefix_in_order() {
        let v = vid("50");
        let prefix = vertex_prefix(100, &v);
        let marker = encode_vertex_key(100, &v);
        let tag = encode_tag_key(100, &v, 3);
        let out = encode_edge_key(100, &v, Direction::Out, 1, Rank(0), &vid("60"));
        let inn = encode_edge_key(100, &v, Direction::In, 1, Rank(0), &vid("60"));
        for k in [&marker, &tag, &out, &inn] {
            assert!(k.starts_with(&prefix));
        }
        assert!(marker < tag && tag < out && out < inn);
    }

    #[test]
    fn prefix_upper_bound_covers_edge_cases() {
        assert_eq!(prefix_upper_bound(&[1, 2]), Some(vec![1, 3]));
        assert_eq!(prefix_upper_bound(&[1, 0xff]), Some(vec![2]));
        assert_eq!(prefix_upper_bound(&[0xff, 0xff]), None);
    }
}
