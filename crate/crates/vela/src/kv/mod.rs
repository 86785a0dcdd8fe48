//! Ordered per-partition key-value store with write-ahead logging,
//! snapshots, and prefix scans.
//!
//! An in-process ordered map plus WAL stands in for an embedded LSM
//! library; upper layers only see the contracts here, so the engine can
//! be swapped without touching them. Directory layout for file-backed
//! stores is `data/<space>/<part>/{wal,snap}`.

mod partition;
mod wal;

pub use partition::{PartitionStore, Snapshot, StoreCounters};
pub use wal::{FileWal, MemWal, Wal, WalBackend};

use crate::codec::PartId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, thiserror::Error)]
pub enum KvError {
    #[error("partition {0} not found")]
    PartNotFound(PartId),
    #[error("checksum mismatch")]
    Checksum,
    #[error("corrupt record: {0}")]
    Corrupt(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for KvError {
    fn from(e: std::io::Error) -> Self {
        KvError::Io(e.to_string())
    }
}

/// One mutation inside an atomic batch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum WriteOp {
    Put { key: Vec<u8>, value: Vec<u8> },
    Delete { key: Vec<u8> },
}

impl WriteOp {
    pub fn key(&self) -> &[u8] {
        match self {
            WriteOp::Put { key, .. } | WriteOp::Delete { key } => key,
        }
    }
}

/// The partitions a node hosts for one space.
#[derive(Default)]
pub struct PartitionSet {
    parts: BTreeMap<PartId, PartitionStore>,
}

impl PartitionSet {
    pub fn new() -> PartitionSet {
        PartitionSet::default()
    }

    pub fn add(&mut self, store: PartitionStore) {
        self.parts.insert(store.part_id, store);
    }

    pub fn remove(&mut self, part: PartId) -> Option<PartitionStore> {
        self.parts.remove(&part)
    }

    pub fn contains(&self, part: PartId) -> bool {
        self.parts.contains_key(&part)
    }

    pub fn get(&self, part: PartId) -> Result<&PartitionStore, KvError> {
        self.parts.get(&part).ok_or(KvError::PartNotFound(part))
    }

    pub fn get_mut(&mut self, part: PartId) -> Result<&mut PartitionStore, KvError> {
        self.parts.get_mut(&part).ok_or(KvError::PartNotFound(part))
    }

    pub fn ids(&self) -> Vec<PartId> {
        self.parts.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&PartId, &PartitionStore)> {
        self.parts.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&PartId, &mut PartitionStore)> {
        self.parts.iter_mut()
    }
}
