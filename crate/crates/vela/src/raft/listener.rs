//! Listener delivery feed: committed entries flow to a sink
//! at-least-once, in order, with progress persisted in the listener's
//! own WAL so a restart resumes from the last durable offset.

use super::{LogEntry, LogIndex, RaftNode};
use crate::kv::{KvError, MemWal, WalBackend};

/// Receives committed entries. Returning `false` (or crashing before
/// returning) leaves progress unacked, so the entry is redelivered.
pub trait ListenerSink: Send {
    fn deliver(&mut self, lsn: u64, payload: &[u8]) -> bool;
}

pub struct ListenerFeed {
    progress: Box<dyn WalBackend>,
    acked: LogIndex,
    /// Count of non-noop entries at or below `acked`; the dense lsn
    /// handed to sinks.
    dense: u64,
}

impl ListenerFeed {
    pub fn new(progress: Box<dyn WalBackend>) -> Result<ListenerFeed, KvError> {
        let mut feed = ListenerFeed { progress, acked: 0, dense: 0 };
        feed.acked = feed.replay_progress()?;
        Ok(feed)
    }

    pub fn in_memory() -> ListenerFeed {
        ListenerFeed::new(Box::new(MemWal::default())).expect("mem progress log")
    }

    fn replay_progress(&self) -> Result<LogIndex, KvError> {
        let bytes = self.progress.durable_bytes()?;
        let mut acked = 0;
        let mut pos = 0;
        while pos + 12 <= bytes.len() {
            let idx = u64::from_be_bytes(bytes[pos..pos + 8].try_into().unwrap());
            let crc = u32::from_be_bytes(bytes[pos + 8..pos + 12].try_into().unwrap());
            if crc32fast::hash(&bytes[pos..pos + 8]) != crc {
                break;
            }
            acked = idx;
            pos += 12;
        }
        Ok(acked)
    }

    pub fn acked(&self) -> LogIndex {
        self.acked
    }

    pub fn dense_lsn(&self) -> u64 {
        self.dense
    }

    /// Resumes after a restart: recompute the dense counter by walking
    /// the durable log up to the durable ack offset.
    pub fn resume(&mut self, node: &RaftNode) {
        self.dense = (1..=self.acked)
            .filter(|&i| node.entry_at(i).map_or(false, |e| !e.payload.is_empty()))
            .count() as u64;
    }

    /// Committed entries past the ack offset, oldest first.
    pub fn pending<'a>(&self, node: &'a RaftNode, max: usize) -> Vec<&'a LogEntry> {
        let mut out = Vec::new();
        let mut idx = self.acked + 1;
        while idx <= node.commit_index() && out.len() < max {
            if let Some(e) = node.entry_at(idx) {
                out.push(e);
            }
            idx += 1;
        }
        out
    }

    /// Durably advances the ack offset through `index`.
    pub fn ack_to(&mut self, index: LogIndex, node: &RaftNode) -> Result<(), KvError> {
        while self.acked < index {
            self.acked += 1;
            if node.entry_at(self.acked).map_or(false, |e| !e.payload.is_empty()) {
                self.dense += 1;
            }
        }
        let mut rec = Vec::with_capacity(12);
        rec.extend_from_slice(&self.acked.to_be_bytes());
        rec.extend_from_slice(&crc32fast::hash(&self.acked.to_be_bytes()).to_be_bytes());
        self.progress.append(&rec);
        self.progress.flush()
    }

    /// Drives deliveries until the sink nacks or the feed catches up.
    /// Noop entries are skipped but still advance the ack offset.
    pub fn pump(&mut self, node: &RaftNode, sink: &mut dyn ListenerSink) -> Result<usize, KvError> {
        let mut delivered = 0;
        loop {
            let next = self.acked + 1;
            if next > node.commit_index() {
                return Ok(delivered);
            }
            let Some(entry) = node.entry_at(next) else { return Ok(delivered) };
            if entry.payload.is_empty() {
                self.ack_to(next, node)?;
                continue;
            }
            let lsn = self.dense + 1;
            let payload = entry.payload.clone();
            if sink.deliver(lsn, &payload) {
                self.ack_to(next, node)?;
                delivered += 1;
            } else {
                return Ok(delivered);
            }
        }
    }
}
