//! The Storage Service: graph-level mutations and reads over the
//! partitioned key-value store, replicated per partition through Raft.
//!
//! Every mutation is a [`PartitionCommand`] proposed on one partition's
//! Raft group; applying a command turns it into a single atomic
//! write-batch (data keys, index maintenance, and the applied-index
//! bookkeeping together). Commands embed the schema and index
//! definitions they need, so application is deterministic across
//! replicas regardless of later DDL.

pub mod reads;
pub mod toss;

use crate::codec::{
    self, EdgeTypeId, IndexId, PartId, PendingEdge, PendingOp, Rank, TagId, Vid,
};
use crate::kv::{PartitionStore, WriteOp};
use crate::meta::{HostId, IndexDef, IndexTarget, SchemaDef};
use crate::raft::LogIndex;
use crate::value::PropertyValue;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error, Serialize, Deserialize)]
pub enum StorageError {
    #[error("type error: {0}")]
    TypeError(String),
    #[error("unknown tag '{0}'")]
    UnknownTag(String),
    #[error("unknown edge type '{0}'")]
    UnknownEdgeType(String),
    #[error("unknown index '{0}'")]
    UnknownIndex(String),
    #[error("partition {0} not found")]
    PartNotFound(PartId),
    #[error("not the leader (hint {hint:?})")]
    NotLeader { hint: Option<HostId> },
    #[error("retryable: {0}")]
    Retryable(String),
    #[error("query killed")]
    Killed,
    #[error("codec: {0}")]
    Codec(String),
    #[error("storage: {0}")]
    Internal(String),
}

impl From<codec::CodecError> for StorageError {
    fn from(e: codec::CodecError) -> Self {
        StorageError::Codec(e.to_string())
    }
}

impl From<crate::kv::KvError> for StorageError {
    fn from(e: crate::kv::KvError) -> Self {
        StorageError::Internal(e.to_string())
    }
}

/// One tag row in an InsertVertex, with everything apply needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagWrite {
    pub tag_id: TagId,
    /// Row serialized under `schema.current()` at propose time.
    pub row: Vec<u8>,
    pub schema: SchemaDef,
    pub indexes: Vec<IndexDef>,
}

/// Context for removing one tag's records during DeleteVertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagContext {
    pub tag_id: TagId,
    pub schema: SchemaDef,
    pub indexes: Vec<IndexDef>,
}

/// The replicated log payload of one partition group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PartitionCommand {
    InsertVertex {
        vid: Vid,
        tags: Vec<TagWrite>,
        ignore_existed_index: bool,
    },
    DeleteVertex {
        vid: Vid,
        tags: Vec<TagContext>,
    },
    /// TOSS step 1: the out-partition records the pending edge write.
    TossLock {
        src: Vid,
        edge_type: EdgeTypeId,
        rank: Rank,
        pending: PendingEdge,
    },
    /// TOSS step 2, proposed on the in-partition.
    WriteInEdge {
        dst: Vid,
        src: Vid,
        edge_type: EdgeTypeId,
        rank: Rank,
        pending: PendingEdge,
    },
    /// TOSS step 3: out-key write plus lock delete, atomically.
    TossCommit {
        src: Vid,
        edge_type: EdgeTypeId,
        rank: Rank,
        pending: PendingEdge,
        schema: SchemaDef,
        indexes: Vec<IndexDef>,
    },
    RebuildIndex {
        index: IndexDef,
        schema: SchemaDef,
    },
    /// Raw writes for partition moves and snapshot install.
    RawBatch { ops: Vec<WriteOp> },
}

/// A proposal envelope: the op id lets coordinators find their result
/// after retries and lets state machines deduplicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Proposal<C> {
    pub op_id: u64,
    pub cmd: C,
}

impl<C: Serialize + for<'a> Deserialize<'a>> Proposal<C> {
    pub fn encode(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("proposal serializes")
    }

    pub fn decode(bytes: &[u8]) -> Option<Proposal<C>> {
        serde_json::from_slice(bytes).ok()
    }
}

/// Decodes a stored row into current-version values.
pub fn decode_row(schema: &SchemaDef, bytes: &[u8]) -> Result<Vec<PropertyValue>, StorageError> {
    Ok(codec::deserialize_row(&schema.versions, schema.schema_version(), bytes)?)
}

/// Picks the indexed property values (by name, from current-version
/// row values) in the index's declared order.
pub fn index_values(
    index: &IndexDef,
    schema: &SchemaDef,
    values: &[PropertyValue],
) -> Result<Vec<PropertyValue>, StorageError> {
    index
        .props
        .iter()
        .map(|p| {
            schema
                .prop_position(p)
                .and_then(|i| values.get(i).cloned())
                .ok_or_else(|| StorageError::Internal(format!("index property '{}' missing", p)))
        })
        .collect()
}

fn tag_index_ops(
    part: PartId,
    vid: &Vid,
    schema: &SchemaDef,
    indexes: &[IndexDef],
    old_row: Option<&[u8]>,
    new_values: Option<&[PropertyValue]>,
    ops: &mut Vec<WriteOp>,
) -> Result<(), StorageError> {
    if indexes.is_empty() {
        return Ok(());
    }
    // read old index, delete old index, write new index
    if let Some(bytes) = old_row {
        let old_values = decode_row(schema, bytes)?;
        for index in indexes {
            let vals = index_values(index, schema, &old_values)?;
            let key = codec::encode_index_key(part, index.index_id, &vals, vid)?;
            ops.push(WriteOp::Delete { key });
        }
    }
    if let Some(values) = new_values {
        for index in indexes {
            let vals = index_values(index, schema, values)?;
            let key = codec::encode_index_key(part, index.index_id, &vals, vid)?;
            ops.push(WriteOp::Put { key, value: Vec::new() });
        }
    }
    Ok(())
}

fn edge_index_ops(
    part: PartId,
    src: &Vid,
    rank: Rank,
    dst: &Vid,
    schema: &SchemaDef,
    indexes: &[IndexDef],
    old_row: Option<&[u8]>,
    new_row: Option<&[u8]>,
    ops: &mut Vec<WriteOp>,
) -> Result<(), StorageError> {
    if indexes.is_empty() {
        return Ok(());
    }
    if let Some(bytes) = old_row {
        let old_values = decode_row(schema, bytes)?;
        for index in indexes {
            let vals = index_values(index, schema, &old_values)?;
            let key =
                codec::encode_edge_index_key(part, index.index_id, &vals, src, rank, dst)?;
            ops.push(WriteOp::Delete { key });
        }
    }
    if let Some(bytes) = new_row {
        let new_values = decode_row(schema, bytes)?;
        for index in indexes {
            let vals = index_values(index, schema, &new_values)?;
            let key =
                codec::encode_edge_index_key(part, index.index_id, &vals, src, rank, dst)?;
            ops.push(WriteOp::Put { key, value: Vec::new() });
        }
    }
    Ok(())
}

/// Applies one committed command to the partition store as a single
/// atomic batch, recording the Raft index under the system key so replay
/// after restart is exactly-once.
pub fn apply_command(
    store: &mut PartitionStore,
    part: PartId,
    vid_len: usize,
    raft_index: LogIndex,
    cmd: &PartitionCommand,
) -> Result<(), StorageError> {
    let mut ops: Vec<WriteOp> = Vec::new();
    match cmd {
        PartitionCommand::InsertVertex { vid, tags, ignore_existed_index } => {
            ops.push(WriteOp::Put { key: codec::encode_vertex_key(part, vid), value: Vec::new() });
            for tw in tags {
                let tag_key = codec::encode_tag_key(part, vid, tw.tag_id);
                if !ignore_existed_index {
                    let old = store.get(&tag_key);
                    let new_values = decode_row(&tw.schema, &tw.row)?;
                    tag_index_ops(
                        part,
                        vid,
                        &tw.schema,
                        &tw.indexes,
                        old.as_deref(),
                        Some(&new_values),
                        &mut ops,
                    )?;
                }
                ops.push(WriteOp::Put { key: tag_key, value: tw.row.clone() });
            }
        }
        PartitionCommand::DeleteVertex { vid, tags } => {
            for ctx in tags {
                let tag_key = codec::encode_tag_key(part, vid, ctx.tag_id);
                if let Some(old) = store.get(&tag_key) {
                    tag_index_ops(
                        part,
                        vid,
                        &ctx.schema,
                        &ctx.indexes,
                        Some(&old),
                        None,
                        &mut ops,
                    )?;
                    ops.push(WriteOp::Delete { key: tag_key });
                }
            }
            ops.push(WriteOp::Delete { key: codec::encode_vertex_key(part, vid) });
        }
        PartitionCommand::TossLock { src, edge_type, rank, pending } => {
            let key = codec::encode_lock_key(part, src, *edge_type, *rank);
            ops.push(WriteOp::Put { key, value: pending.encode() });
        }
        PartitionCommand::WriteInEdge { dst, src, edge_type, rank, pending } => {
            let key =
                codec::encode_edge_key(part, dst, codec::Direction::In, *edge_type, *rank, src);
            match pending.op {
                PendingOp::Put => ops.push(WriteOp::Put { key, value: pending.row.clone() }),
                PendingOp::Delete => ops.push(WriteOp::Delete { key }),
            }
        }
        PartitionCommand::TossCommit { src, edge_type, rank, pending, schema, indexes } => {
            let out_key = codec::encode_edge_key(
                part,
                src,
                codec::Direction::Out,
                *edge_type,
                *rank,
                &pending.dst,
            );
            let old = store.get(&out_key);
            match pending.op {
                PendingOp::Put => {
                    edge_index_ops(
                        part,
                        src,
                        *rank,
                        &pending.dst,
                        schema,
                        indexes,
                        old.as_deref(),
                        Some(&pending.row),
                        &mut ops,
                    )?;
                    ops.push(WriteOp::Put { key: out_key, value: pending.row.clone() });
                }
                PendingOp::Delete => {
                    edge_index_ops(
                        part,
                        src,
                        *rank,
                        &pending.dst,
                        schema,
                        indexes,
                        old.as_deref(),
                        None,
                        &mut ops,
                    )?;
                    ops.push(WriteOp::Delete { key: out_key });
                }
            }
            ops.push(WriteOp::Delete {
                key: codec::encode_lock_key(part, src, *edge_type, *rank),
            });
        }
        PartitionCommand::RebuildIndex { index, schema } => {
            rebuild_index_ops(store, part, vid_len, index, schema, &mut ops)?;
        }
        PartitionCommand::RawBatch { ops: raw } => {
            ops.extend(raw.iter().cloned());
        }
    }
    ops.push(WriteOp::Put {
        key: codec::encode_system_key(part, codec::SYS_APPLIED_INDEX),
        value: raft_index.to_be_bytes().to_vec(),
    });
    store.apply_batch(&ops)?;
    Ok(())
}

/// Drops the index's key range and rewrites it from a sequential scan of
/// the data records; the result is byte-identical to incremental
/// maintenance.
fn rebuild_index_ops(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
    index: &IndexDef,
    schema: &SchemaDef,
    ops: &mut Vec<WriteOp>,
) -> Result<(), StorageError> {
    for key in store.scan_prefix_keys(&codec::index_prefix(part, index.index_id), None) {
        ops.push(WriteOp::Delete { key });
    }
    let data = store.scan_prefix(&codec::part_prefix(codec::KIND_DATA, part), None);
    for (key, value) in data {
        let decoded = codec::GraphKey::decode(&key, vid_len)
            .map_err(|e| StorageError::Codec(e.to_string()))?;
        match (&index.target, decoded) {
            (IndexTarget::Tag(tid), codec::GraphKey::Tag { vid, tag_id, .. }) if tag_id == *tid => {
                let values = decode_row(schema, &value)?;
                let vals = index_values(index, schema, &values)?;
                let ikey = codec::encode_index_key(part, index.index_id, &vals, &vid)?;
                ops.push(WriteOp::Put { key: ikey, value: Vec::new() });
            }
            (
                IndexTarget::Edge(eid),
                codec::GraphKey::Edge {
                    first, direction: codec::Direction::Out, edge_type, rank, other, ..
                },
            ) if edge_type == *eid => {
                let values = decode_row(schema, &value)?;
                let vals = index_values(index, schema, &values)?;
                let ikey = codec::encode_edge_index_key(
                    part,
                    index.index_id,
                    &vals,
                    &first,
                    rank,
                    &other,
                )?;
                ops.push(WriteOp::Put { key: ikey, value: Vec::new() });
            }
            _ => {}
        }
    }
    Ok(())
}

/// Reads the durable applied index (for restart replay dedup).
pub fn applied_index(store: &PartitionStore, part: PartId) -> LogIndex {
    store
        .get(&codec::encode_system_key(part, codec::SYS_APPLIED_INDEX))
        .and_then(|v| v.try_into().ok().map(u64::from_be_bytes))
        .unwrap_or(0)
}

/// All surviving lock records of a partition, for roll-forward recovery.
pub fn surviving_locks(
    store: &PartitionStore,
    part: PartId,
    vid_len: usize,
) -> Vec<(Vid, EdgeTypeId, Rank, PendingEdge)> {
    let mut out = Vec::new();
    for (key, value) in store.scan_prefix(&codec::part_prefix(codec::KIND_LOCK, part), None) {
        if let (Ok(codec::GraphKey::Lock { src, edge_type, rank, .. }), Ok(pending)) = (
            codec::GraphKey::decode(&key, vid_len),
            PendingEdge::decode(&value, vid_len),
        ) {
            out.push((src, edge_type, rank, pending));
        }
    }
    out
}

/// Full byte-level hash of one index's key range (for bulk-load
/// equivalence checks).
pub fn index_range_hash(store: &PartitionStore, part: PartId, index_id: IndexId) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for key in store.scan_prefix_keys(&codec::index_prefix(part, index_id), None) {
        key.hash(&mut h);
    }
    h.finish()
}

/// Convenience: serialize property values for a tag/edge row under the
/// schema's current version, with full type checking.
pub fn make_row(schema: &SchemaDef, values: &[PropertyValue]) -> Result<Vec<u8>, StorageError> {
    Ok(codec::serialize_row(schema.schema_version(), schema.current(), values)?)
}

/// Maps named values onto the schema's current property order, filling
/// gaps with defaults (or Null when nullable).
pub fn row_from_named(
    schema: &SchemaDef,
    names: &[String],
    values: &[PropertyValue],
) -> Result<Vec<PropertyValue>, StorageError> {
    if names.len() != values.len() {
        return Err(StorageError::TypeError(format!(
            "{} property names but {} values",
            names.len(),
            values.len()
        )));
    }
    for n in names {
        if schema.prop_position(n).is_none() {
            return Err(StorageError::TypeError(format!(
                "property '{}' not defined on '{}'",
                n, schema.name
            )));
        }
    }
    schema
        .current()
        .iter()
        .map(|def| {
            match names.iter().position(|n| n == &def.name) {
                Some(i) => {
                    let v = values[i].clone();
                    if !v.conforms_to(def.ty, def.nullable) {
                        return Err(StorageError::TypeError(format!(
                            "property '{}' expects {}, got {}",
                            def.name, def.ty, v
                        )));
                    }
                    Ok(v)
                }
                None => match (&def.default, def.nullable) {
                    (Some(d), _) => Ok(d.clone()),
                    (None, true) => Ok(PropertyValue::Null),
                    (None, false) => Err(StorageError::TypeError(format!(
                        "property '{}' is NOT NULL and has no default",
                        def.name
                    ))),
                },
            }
        })
        .collect()
}
