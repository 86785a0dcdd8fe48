//! Roll-forward driver for storage-side edge transactions.
//!
//! One edge insert (or delete) touches two partitions: the out-edge key
//! on the source's partition and the reverse in-edge key on the
//! destination's. The out-partition leader drives three steps, each a
//! Raft commit: (1) a lock record carrying the pending write, (2) the
//! in-edge write on the in-partition, (3) the out-edge write plus the
//! lock delete, atomically. There is no rollback: on leader change the
//! new leader rescans surviving lock records and drives every one
//! forward to completion, however many times that takes.
//!
//! The driver's in-memory table is leader-local and disposable; lock
//! records in the replicated store are the durable protocol state.

use crate::codec::{EdgeTypeId, PendingEdge, Rank, SpaceId, PartId, Vid};
use crate::meta::{IndexDef, SchemaDef};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, VecDeque};

/// Spin/backoff policy: base 1 tick, doubling, capped at 64 ticks.
pub const BACKOFF_BASE: u64 = 1;
pub const BACKOFF_CAP: u64 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TossStage {
    /// Lock proposed, waiting for it to commit+apply locally.
    WaitLockApplied,
    /// Lock durable; the in-edge write must be forwarded.
    NeedForward,
    /// Forward RPC in flight; resend on timeout.
    AwaitInAck { rpc_id: u64 },
    /// In-partition acknowledged; propose the commit batch.
    NeedCommit,
    /// Commit proposed, waiting for local apply.
    WaitCommitApplied,
}

#[derive(Debug, Clone)]
pub struct TossEntry {
    pub space: SpaceId,
    pub part: PartId,
    pub in_part: PartId,
    pub src: Vid,
    pub edge_type: EdgeTypeId,
    pub rank: Rank,
    pub pending: PendingEdge,
    pub schema: SchemaDef,
    pub indexes: Vec<IndexDef>,
    pub stage: TossStage,
    /// Client op to notify on completion; recovered entries have none.
    pub op_id: Option<u64>,
    pub next_action: u64,
    pub backoff: u64,
}

impl TossEntry {
    pub fn bump_backoff(&mut self, now: u64) {
        self.next_action = now + self.backoff;
        self.backoff = (self.backoff * 2).min(BACKOFF_CAP);
    }
}

/// An edge write parked behind an existing lock on the same
/// (src, edge_type, rank); retried with backoff until the lock clears
/// or the client-visible timeout expires.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpinWaiter {
    pub op_id: u64,
    pub deadline: u64,
}

#[derive(Default)]
pub struct TossDriver {
    entries: BTreeMap<Vec<u8>, TossEntry>,
    waiters: BTreeMap<Vec<u8>, VecDeque<SpinWaiter>>,
}

impl TossDriver {
    pub fn new() -> TossDriver {
        TossDriver::default()
    }

    pub fn is_locked(&self, lock_key: &[u8]) -> bool {
        self.entries.contains_key(lock_key)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, lock_key: Vec<u8>, entry: TossEntry) {
        self.entries.insert(lock_key, entry);
    }

    pub fn get_mut(&mut self, lock_key: &[u8]) -> Option<&mut TossEntry> {
        self.entries.get_mut(lock_key)
    }

    pub fn remove(&mut self, lock_key: &[u8]) -> Option<TossEntry> {
        self.entries.remove(lock_key)
    }

    /// Entries whose next action is due, in key order.
    pub fn due(&mut self, now: u64) -> Vec<Vec<u8>> {
        self.entries
            .iter()
            .filter(|(_, e)| {
                matches!(e.stage, TossStage::NeedForward | TossStage::NeedCommit)
                    || matches!(e.stage, TossStage::AwaitInAck { .. }) && e.next_action <= now
            })
            .map(|(k, _)| k.clone())
            .collect()
    }

    /// Matches an in-partition ack back to its entry by rpc id.
    pub fn entry_for_rpc(&mut self, rpc_id: u64) -> Option<&mut TossEntry> {
        self.entries
            .values_mut()
            .find(|e| matches!(e.stage, TossStage::AwaitInAck { rpc_id: r } if r == rpc_id))
    }

    pub fn park_waiter(&mut self, lock_key: Vec<u8>, waiter: SpinWaiter) {
        self.waiters.entry(lock_key).or_default().push_back(waiter);
    }

    pub fn take_waiters(&mut self, lock_key: &[u8]) -> VecDeque<SpinWaiter> {
        self.waiters.remove(lock_key).unwrap_or_default()
    }

    /// Drops leader-local state; the replicated lock records remain and
    /// recovery rebuilds from them.
    pub fn clear(&mut self) -> Vec<SpinWaiter> {
        self.entries.clear();
        let orphans = self.waiters.values().flatten().cloned().collect();
        self.waiters.clear();
        orphans
    }

    pub fn waiter_keys(&self) -> Vec<Vec<u8>> {
        self.waiters.keys().cloned().collect()
    }

    pub fn expire_waiters(&mut self, now: u64) -> Vec<SpinWaiter> {
        let mut expired = Vec::new();
        for q in self.waiters.values_mut() {
            q.retain(|w| {
                if w.deadline <= now {
                    expired.push(w.clone());
                    false
                } else {
                    true
                }
            });
        }
        self.waiters.retain(|_, q| !q.is_empty());
        expired
    }
}
