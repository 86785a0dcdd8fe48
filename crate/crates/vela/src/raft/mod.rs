//! Simplified Raft: leader election, log replication, and a non-voting
//! listener role, designed to run under a deterministic tick-driven
//! simulation.
//!
//! Nodes are pure state machines: inputs are `tick` and `handle(msg)`,
//! outputs are messages to send. All timing is in abstract ticks
//! (heartbeat every tick, election timeout uniform in [10, 20)); all
//! randomness comes from a per-node seed. Listeners replicate the log
//! and apply commits but never request or grant votes and never count
//! toward quorum.

mod listener;
mod node;
pub mod sim;

pub use listener::{ListenerFeed, ListenerSink};
pub use node::{GroupConfig, RaftNode};

use serde::{Deserialize, Serialize};

pub type NodeId = u32;
pub type Term = u64;
pub type LogIndex = u64;

#[derive(Debug, Clone, thiserror::Error, PartialEq, Eq)]
pub enum RaftError {
    #[error("not the leader (hint: {hint:?})")]
    NotLeader { hint: Option<NodeId> },
    #[error("node {0} is not a voter")]
    NotVoter(NodeId),
    #[error("leadership transfer to {0} timed out")]
    TransferTimeout(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Leader,
    Follower,
    Candidate,
    Listener,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub term: Term,
    pub index: LogIndex,
    /// Empty payload = leader no-op; state machines skip it.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Message {
    RequestVote {
        term: Term,
        last_log_index: LogIndex,
        last_log_term: Term,
    },
    Vote {
        term: Term,
        granted: bool,
    },
    Append {
        term: Term,
        prev_index: LogIndex,
        prev_term: Term,
        entries: Vec<LogEntry>,
        leader_commit: LogIndex,
    },
    AppendResp {
        term: Term,
        success: bool,
        /// On success: highest replicated index. On failure: a hint for
        /// where the leader should back up to.
        match_hint: LogIndex,
    },
    /// Leadership transfer: target times out immediately.
    TimeoutNow {
        term: Term,
    },
}

/// A message addressed to a peer in the same group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutMsg {
    pub to: NodeId,
    pub msg: Message,
}
