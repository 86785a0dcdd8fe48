//! Storage-side reads: neighbor scans with pushed-down filters/limits,
//! point property lookups, index scans, and full scans.
//!
//! All functions work on one partition's immutable store view; the
//! cluster layer fans out across partitions and joins results.

use super::{decode_row, StorageError};
use crate::codec::{
    self, Direction, EdgeTypeId, PartId, Rank, TagId, Vid,
};
use crate::expr::{EdgeAccessor, EvalContext, Expr};
use crate::kv::PartitionStore;
use crate::meta::{IndexDef, SchemaDef};
use crate::value::PropertyValue;
use std::collections::BTreeMap;

/// One edge type to traverse, with its schema for value decodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTypeSpec {
    pub id: EdgeTypeId,
    pub name: String,
    pub schema: SchemaDef,
}

/// A neighbor expansion request against one partition.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborsSpec {
    pub directions: Vec<Direction>,
    pub edge_types: Vec<EdgeTypeSpec>,
    /// Edge properties to return, as (edge type name, property name).
    pub return_props: Vec<(String, String)>,
    pub filter: Option<Expr>,
    /// Max rows per input vid, applied after the filter.
    pub limit: Option<usize>,
}

impl NeighborsSpec {
    fn needs_values(&self) -> bool {
        if !self.return_props.is_empty() {
            return true;
        }
        match &self.filter {
            None => false,
            Some(f) => {
                let mut refs = Vec::new();
                f.prop_refs(&mut refs);
                !refs.is_empty()
            }
        }
    }
}

/// One traversed edge, in logical orientation (src -> dst as inserted).
/// `neighbor` is the far end relative to the scanned vid, which is what
/// a breadth-first frontier advances on.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborRow {
    pub src: Vid,
    pub edge_type: EdgeTypeId,
    pub type_name: String,
    pub rank: Rank,
    pub dst: Vid,
    pub neighbor: Vid,
    pub props: Vec<PropertyValue>,
}

struct EdgeRowCtx<'a> {
    src: &'a Vid,
    dst: &'a Vid,
    rank: Rank,
    type_name: &'a str,
    props: &'a BTreeMap<String, PropertyValue>,
}

impl EvalContext for EdgeRowCtx<'_> {
    fn input_col(&self, _: &str) -> Option<PropertyValue> {
        None
    }

    fn prop(&self, owner: &str, name: &str) -> Option<PropertyValue> {
        if owner == self.type_name {
            self.props.get(name).cloned()
        } else {
            None
        }
    }

    fn edge(&self, acc: EdgeAccessor) -> Option<PropertyValue> {
        Some(match acc {
            EdgeAccessor::Src => PropertyValue::Str(self.src.display_string()),
            EdgeAccessor::Dst => PropertyValue::Str(self.dst.display_string()),
            EdgeAccessor::Rank => PropertyValue::Int64(self.rank.0),
            EdgeAccessor::TypeName => PropertyValue::Str(self.type_name.to_string()),
        })
    }

    fn vertex_id(&self) -> Option<PropertyValue> {
        None
    }
}

/// Prefix-scans one vid's edges on its partition. Structure-only
/// requests never materialize values (and so never touch the value
/// tier); the filter and limit run here, storage-side.
pub fn get_neighbors_part(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
    vid: &Vid,
    spec: &NeighborsSpec,
) -> Result<Vec<NeighborRow>, StorageError> {
    let mut rows = Vec::new();
    let needs_values = spec.needs_values();
    'outer: for dir in &spec.directions {
        for et in &spec.edge_types {
            let prefix = codec::edge_type_prefix(part, vid, *dir, et.id);
            let entries: Vec<(Vec<u8>, Option<Vec<u8>>)> = if needs_values {
                store
                    .scan_prefix(&prefix, None)
                    .into_iter()
                    .map(|(k, v)| (k, Some(v)))
                    .collect()
            } else {
                store.scan_prefix_keys(&prefix, None).into_iter().map(|k| (k, None)).collect()
            };
            for (key, value) in entries {
                let decoded = codec::GraphKey::decode(&key, vid_len)
                    .map_err(|e| StorageError::Codec(e.to_string()))?;
                let codec::GraphKey::Edge { first, direction, edge_type, rank, other, .. } =
                    decoded
                else {
                    continue;
                };
                let (src, dst, neighbor) = match direction {
                    Direction::Out => (first, other.clone(), other),
                    Direction::In => (other.clone(), first, other),
                };
                let props: BTreeMap<String, PropertyValue> = match &value {
                    Some(bytes) if !bytes.is_empty() => {
                        let values = decode_row(&et.schema, bytes)?;
                        et.schema
                            .current()
                            .iter()
                            .map(|p| p.name.clone())
                            .zip(values)
                            .collect()
                    }
                    _ => BTreeMap::new(),
                };
                if let Some(filter) = &spec.filter {
                    let ctx = EdgeRowCtx {
                        src: &src,
                        dst: &dst,
                        rank,
                        type_name: &et.name,
                        props: &props,
                    };
                    if !filter.eval_bool(&ctx) {
                        continue;
                    }
                }
                let selected = spec
                    .return_props
                    .iter()
                    .map(|(owner, name)| {
                        if owner == &et.name {
                            props.get(name).cloned().unwrap_or(PropertyValue::Null)
                        } else {
                            PropertyValue::Null
                        }
                    })
                    .collect();
                rows.push(NeighborRow {
                    src,
                    edge_type,
                    type_name: et.name.clone(),
                    rank,
                    dst,
                    neighbor,
                    props: selected,
                });
                if let Some(l) = spec.limit {
                    if rows.len() >= l {
                        break 'outer;
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Point lookup of one tag row; absent refs yield None, not an error.
pub fn get_vertex_tag(
    store: &PartitionStore,
    part: PartId,
    vid: &Vid,
    tag_id: TagId,
    schema: &SchemaDef,
) -> Result<Option<Vec<PropertyValue>>, StorageError> {
    match store.get(&codec::encode_tag_key(part, vid, tag_id)) {
        Some(bytes) => Ok(Some(decode_row(schema, &bytes)?)),
        None => Ok(None),
    }
}

pub fn vertex_exists(store: &PartitionStore, part: PartId, vid: &Vid) -> bool {
    store.contains(&codec::encode_vertex_key(part, vid))
}

pub fn get_edge_props(
    store: &PartitionStore,
    part: PartId,
    src: &Vid,
    edge_type: EdgeTypeId,
    rank: Rank,
    dst: &Vid,
    schema: &SchemaDef,
) -> Result<Option<Vec<PropertyValue>>, StorageError> {
    let key = codec::encode_edge_key(part, src, Direction::Out, edge_type, rank, dst);
    match store.get(&key) {
        Some(bytes) => Ok(Some(decode_row(schema, &bytes)?)),
        None => Ok(None),
    }
}

// ---------------------------------------------------------------------------
// Index scans
// ---------------------------------------------------------------------------

/// What an index scan matched: a vertex or an out-edge reference.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum IndexRef {
    Vertex(Vid),
    Edge { src: Vid, rank: Rank, dst: Vid },
}

/// Normalized scan shapes, in the optimizer's rule order: full equality
/// on all indexed props, prefix equality on leading props, or a range on
/// the first non-equal prop.
#[derive(Debug, Clone, PartialEq)]
pub enum ScanSpec {
    FullEquality(Vec<PropertyValue>),
    PrefixEquality(Vec<PropertyValue>),
    Range {
        equals: Vec<PropertyValue>,
        low: Option<(PropertyValue, bool)>,
        high: Option<(PropertyValue, bool)>,
    },
}

fn encode_one(value: &PropertyValue) -> Result<Vec<u8>, StorageError> {
    let mut out = Vec::new();
    codec::encode_index_value(value, &mut out)?;
    Ok(out)
}

/// Scans one partition's range of `index`, verifying each candidate
/// key's exact per-property segmentation (the computed byte range can
/// admit impostor splits for variable-length strings).
pub fn index_scan_part(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
    index: &IndexDef,
    spec: &ScanSpec,
) -> Result<Vec<IndexRef>, StorageError> {
    let base = codec::index_prefix(part, index.index_id);
    let n = index.props.len();
    let is_edge = matches!(index.target, crate::meta::IndexTarget::Edge(_));

    let (equals, low, high) = match spec {
        ScanSpec::FullEquality(values) => {
            if values.len() != n {
                return Err(StorageError::Internal(
                    "full equality needs every indexed property".into(),
                ));
            }
            (values.as_slice(), None, None)
        }
        ScanSpec::PrefixEquality(values) => (values.as_slice(), None, None),
        ScanSpec::Range { equals, low, high } => {
            (equals.as_slice(), low.as_ref(), high.as_ref())
        }
    };
    if equals.len() > n || (equals.len() == n && low.is_some()) {
        return Err(StorageError::Internal("scan spec wider than the index".into()));
    }

    let mut eq_bytes = Vec::new();
    let mut eq_encoded: Vec<Vec<u8>> = Vec::new();
    for v in equals {
        let b = encode_one(v)?;
        eq_bytes.extend_from_slice(&b);
        eq_encoded.push(b);
    }

    // conservative byte bounds; exact per-segment verification below
    let mut start = base.clone();
    start.extend_from_slice(&eq_bytes);
    let mut end = codec::prefix_upper_bound(&start);
    if let Some((lo, _incl)) = low {
        start.extend_from_slice(&encode_one(lo)?);
    }
    if let Some((hi, incl)) = high {
        let mut e = base.clone();
        e.extend_from_slice(&eq_bytes);
        let hb = encode_one(hi)?;
        e.extend_from_slice(&hb);
        end = if *incl { codec::prefix_upper_bound(&e) } else { Some(e) };
    }

    let mut out = Vec::new();
    for key in store.scan_range_keys(&start, end.as_deref()) {
        let (segments, refv) = if is_edge {
            let parts = codec::decode_edge_index_key(&key, vid_len, n)?;
            (parts.segments, IndexRef::Edge { src: parts.src, rank: parts.rank, dst: parts.dst })
        } else {
            let parts = codec::decode_index_key(&key, vid_len, n)?;
            (parts.segments, IndexRef::Vertex(parts.vid))
        };
        // verify equality prefix
        if eq_encoded.iter().zip(&segments).any(|(want, got)| want != got) {
            continue;
        }
        // verify the range segment
        let k = eq_encoded.len();
        if low.is_some() || high.is_some() {
            let Some(seg) = segments.get(k) else { continue };
            if let Some((lo, incl)) = low {
                let lb = encode_one(lo)?;
                let ok = if *incl { seg >= &lb } else { seg > &lb };
                if !ok {
                    continue;
                }
            }
            if let Some((hi, incl)) = high {
                let hb = encode_one(hi)?;
                let ok = if *incl { seg <= &hb } else { seg < &hb };
                if !ok {
                    continue;
                }
            }
        }
        out.push(refv);
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Full scans
// ---------------------------------------------------------------------------

/// Every vertex on the partition carrying `tag_id`, with decoded rows.
pub fn full_scan_tag(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
    tag_id: TagId,
    schema: &SchemaDef,
) -> Result<Vec<(Vid, Vec<PropertyValue>)>, StorageError> {
    let mut out = Vec::new();
    for (key, value) in store.scan_prefix(&codec::part_prefix(codec::KIND_DATA, part), None) {
        if let Ok(codec::GraphKey::Tag { vid, tag_id: t, .. }) =
            codec::GraphKey::decode(&key, vid_len)
        {
            if t == tag_id {
                out.push((vid, decode_row(schema, &value)?));
            }
        }
    }
    Ok(out)
}

/// Every out-edge of `edge_type` on the partition.
pub fn full_scan_edges(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
    edge_type: EdgeTypeId,
    schema: &SchemaDef,
) -> Result<Vec<(Vid, Rank, Vid, Vec<PropertyValue>)>, StorageError> {
    let mut out = Vec::new();
    for (key, value) in store.scan_prefix(&codec::part_prefix(codec::KIND_DATA, part), None) {
        if let Ok(codec::GraphKey::Edge {
            first, direction: Direction::Out, edge_type: et, rank, other, ..
        }) = codec::GraphKey::decode(&key, vid_len)
        {
            if et == edge_type {
                out.push((first, rank, other, decode_row(schema, &value)?));
            }
        }
    }
    Ok(out)
}

/// All vids that exist on the partition (vertex markers).
pub fn scan_vertices(store: &PartitionStore, part: PartId, vid_len: usize) -> Vec<Vid> {
    store
        .scan_prefix_keys(&codec::part_prefix(codec::KIND_DATA, part), None)
        .into_iter()
        .filter_map(|k| match codec::GraphKey::decode(&k, vid_len) {
            Ok(codec::GraphKey::Vertex { vid, .. }) => Some(vid),
            _ => None,
        })
        .collect()
}

/// The classified records of one vertex, in scan order, for
/// adjacency-prefix audits.
pub fn vertex_records(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
    vid: &Vid,
) -> Vec<codec::GraphKey> {
    store
        .scan_prefix_keys(&codec::vertex_prefix(part, vid), None)
        .into_iter()
        .filter_map(|k| codec::GraphKey::decode(&k, vid_len).ok())
        .collect()
}
