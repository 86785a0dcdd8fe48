//! Desk-scale distributed property-graph database.
//!
//! A graph is stored as ordered key-value pairs partitioned by a static
//! vid hash; partitions replicate through a simplified Raft with
//! non-voting listeners; edges are written atomically across two
//! partitions by a roll-forward storage-side transaction; queries run
//! through a parse / validate / plan / optimize / execute pipeline with
//! a rule-based cascades optimizer.

pub mod cluster;
pub mod codec;
pub mod expr;
pub mod kv;
pub mod meta;
pub mod query;
pub mod raft;
pub mod replication;
pub mod storage;
pub mod value;
