//! Cross-cluster synchronization: data- and meta-listeners subscribe to
//! the primary cluster's committed Raft logs and ship logical operations
//! to a drainer, which applies them to a secondary cluster through the
//! ordinary client API. Transport is at-least-once; the drainer's lsn
//! watermarks make application idempotent. Because shipped operations
//! are name-based (never raw keys), the secondary's partition count,
//! replica factor, and id assignment may all differ.

use crate::cluster::sim::{ClusterError, SimCluster};
use crate::codec::{PartId, Rank, SpaceId};
use crate::meta::{Catalog, HostId, MetaCommand, SchemaKind};
use crate::raft::LogIndex;
use crate::storage::{decode_row, PartitionCommand, Proposal};
use crate::value::PropertyValue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// A logical operation shipped between clusters. Name-based so the
/// receiving cluster resolves its own ids and placement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ShipOp {
    CreateSpace { name: String, partition_num: u32, replica_factor: u32, vid_len: u32 },
    DropSpace { name: String },
    CreateSchema {
        space: String,
        kind: SchemaKind,
        name: String,
        props: Vec<crate::codec::PropertyDef>,
    },
    AlterSchema {
        space: String,
        kind: SchemaKind,
        name: String,
        add: Vec<crate::codec::PropertyDef>,
        drop: Vec<String>,
    },
    DropSchema { space: String, kind: SchemaKind, name: String },
    CreateIndex { space: String, kind: SchemaKind, name: String, target: String, props: Vec<String> },
    DropIndex { space: String, name: String },
    RebuildIndex { space: String, name: String },
    InsertVertex {
        space: String,
        vid: String,
        tags: Vec<(String, Vec<String>, Vec<PropertyValue>)>,
        ignore_existed_index: bool,
    },
    DeleteVertex { space: String, vid: String },
    UpsertEdge {
        space: String,
        etype: String,
        src: String,
        dst: String,
        rank: i64,
        names: Vec<String>,
        values: Vec<PropertyValue>,
        delete: bool,
    },
}

/// Maps a committed meta command to its shippable form. Placement and
/// control-plane commands (hosts, balance, users, slow queries) stay
/// local to the cluster.
pub fn translate_meta(catalog: &Catalog, cmd: &MetaCommand) -> Option<ShipOp> {
    let space_name = |id: &SpaceId| catalog.space(*id).map(|s| s.def.name.clone());
    match cmd {
        MetaCommand::CreateSpace { name, partition_num, replica_factor, vid_len, .. } => {
            Some(ShipOp::CreateSpace {
                name: name.clone(),
                partition_num: *partition_num,
                replica_factor: *replica_factor,
                vid_len: *vid_len,
            })
        }
        MetaCommand::DropSpace { name } => Some(ShipOp::DropSpace { name: name.clone() }),
        MetaCommand::CreateSchema { space, kind, name, props, .. } => Some(ShipOp::CreateSchema {
            space: space_name(space)?,
            kind: *kind,
            name: name.clone(),
            props: props.clone(),
        }),
        MetaCommand::AlterSchema { space, kind, name, add, drop } => Some(ShipOp::AlterSchema {
            space: space_name(space)?,
            kind: *kind,
            name: name.clone(),
            add: add.clone(),
            drop: drop.clone(),
        }),
        MetaCommand::DropSchema { space, kind, name } => Some(ShipOp::DropSchema {
            space: space_name(space)?,
            kind: *kind,
            name: name.clone(),
        }),
        MetaCommand::CreateIndex { space, kind, name, target, props, .. } => {
            Some(ShipOp::CreateIndex {
                space: space_name(space)?,
                kind: *kind,
                name: name.clone(),
                target: target.clone(),
                props: props.clone(),
            })
        }
        MetaCommand::DropIndex { space, name } => {
            Some(ShipOp::DropIndex { space: space_name(space)?, name: name.clone() })
        }
        _ => None,
    }
}

/// Maps a committed partition command to its shippable form. Only the
/// out-edge commit ships for TOSS (the in-edge write is the mirror
/// half); raw batches are placement-local.
pub fn translate_part(catalog: &Catalog, space: SpaceId, cmd: &PartitionCommand) -> Option<ShipOp> {
    let space_name = catalog.space(space)?.def.name.clone();
    match cmd {
        PartitionCommand::InsertVertex { vid, tags, ignore_existed_index } => {
            let mut shipped = Vec::with_capacity(tags.len());
            for tw in tags {
                let values = decode_row(&tw.schema, &tw.row).ok()?;
                let names = tw.schema.current().iter().map(|p| p.name.clone()).collect();
                shipped.push((tw.schema.name.clone(), names, values));
            }
            Some(ShipOp::InsertVertex {
                space: space_name,
                vid: vid.display_string(),
                tags: shipped,
                ignore_existed_index: *ignore_existed_index,
            })
        }
        PartitionCommand::DeleteVertex { vid, .. } => {
            Some(ShipOp::DeleteVertex { space: space_name, vid: vid.display_string() })
        }
        PartitionCommand::TossCommit { src, rank, pending, schema, .. } => {
            let (names, values, delete) = match pending.op {
                crate::codec::PendingOp::Put => {
                    let values = decode_row(schema, &pending.row).ok()?;
                    let names = schema.current().iter().map(|p| p.name.clone()).collect();
                    (names, values, false)
                }
                crate::codec::PendingOp::Delete => (Vec::new(), Vec::new(), true),
            };
            Some(ShipOp::UpsertEdge {
                space: space_name,
                etype: schema.name.clone(),
                src: src.display_string(),
                dst: pending.dst.display_string(),
                rank: rank.0,
                names,
                values,
                delete,
            })
        }
        PartitionCommand::RebuildIndex { index, .. } => {
            Some(ShipOp::RebuildIndex { space: space_name, name: index.name.clone() })
        }
        PartitionCommand::TossLock { .. }
        | PartitionCommand::WriteInEdge { .. }
        | PartitionCommand::RawBatch { .. } => None,
    }
}

/// Applies one shipped op to a cluster through the client API. Errors
/// signal "retry later" (for cross-lane ordering, e.g. an insert racing
/// its CREATE TAG), except genuinely idempotent no-ops which succeed.
pub fn apply_ship_op(
    cluster: &mut SimCluster,
    op: &ShipOp,
    partition_override: Option<u32>,
) -> Result<(), ClusterError> {
    match op {
        ShipOp::CreateSpace { name, partition_num, replica_factor, vid_len } => {
            let parts = partition_override.unwrap_or(*partition_num);
            let rf = (*replica_factor).min(cluster.hosts.len() as u32);
            cluster.meta_op(MetaCommand::CreateSpace {
                name: name.clone(),
                partition_num: parts,
                replica_factor: rf,
                vid_len: *vid_len,
                if_not_exists: true,
            })?;
            cluster.wait_space_leaders(cluster.space_id(name).unwrap(), 2_000);
            Ok(())
        }
        ShipOp::DropSpace { name } => {
            if cluster.space_id(name).is_none() {
                return Ok(());
            }
            cluster.meta_op(MetaCommand::DropSpace { name: name.clone() })?;
            Ok(())
        }
        ShipOp::CreateSchema { space, kind, name, props } => {
            let id = need_space(cluster, space)?;
            cluster.meta_op(MetaCommand::CreateSchema {
                space: id,
                kind: *kind,
                name: name.clone(),
                props: props.clone(),
                if_not_exists: true,
            })?;
            Ok(())
        }
        ShipOp::AlterSchema { space, kind, name, add, drop } => {
            let id = need_space(cluster, space)?;
            // idempotence: skip if the target version already has them
            let applied = cluster
                .catalog()
                .space(id)
                .and_then(|s| match kind {
                    SchemaKind::Tag => s.tag_by_name(name),
                    SchemaKind::Edge => s.edge_by_name(name),
                })
                .map(|d| {
                    add.iter().all(|p| d.prop_position(&p.name).is_some())
                        && drop.iter().all(|p| d.prop_position(p).is_none())
                })
                .unwrap_or(false);
            if applied {
                return Ok(());
            }
            cluster.meta_op(MetaCommand::AlterSchema {
                space: id,
                kind: *kind,
                name: name.clone(),
                add: add.clone(),
                drop: drop.clone(),
            })?;
            Ok(())
        }
        ShipOp::DropSchema { space, kind, name } => {
            let id = need_space(cluster, space)?;
            let missing = cluster
                .catalog()
                .space(id)
                .map(|s| match kind {
                    SchemaKind::Tag => s.tag_by_name(name).is_none(),
                    SchemaKind::Edge => s.edge_by_name(name).is_none(),
                })
                .unwrap_or(true);
            if missing {
                return Ok(());
            }
            cluster.meta_op(MetaCommand::DropSchema { space: id, kind: *kind, name: name.clone() })?;
            Ok(())
        }
        ShipOp::CreateIndex { space, kind, name, target, props } => {
            let id = need_space(cluster, space)?;
            cluster.meta_op(MetaCommand::CreateIndex {
                space: id,
                kind: *kind,
                name: name.clone(),
                target: target.clone(),
                props: props.clone(),
                if_not_exists: true,
            })?;
            Ok(())
        }
        ShipOp::DropIndex { space, name } => {
            let id = need_space(cluster, space)?;
            if cluster.catalog().space(id).and_then(|s| s.index_by_name(name)).is_none() {
                return Ok(());
            }
            cluster.meta_op(MetaCommand::DropIndex { space: id, name: name.clone() })?;
            Ok(())
        }
        ShipOp::RebuildIndex { space, name } => {
            let id = need_space(cluster, space)?;
            cluster.rebuild_index(id, name)
        }
        ShipOp::InsertVertex { space, vid, tags, ignore_existed_index } => {
            let id = need_space(cluster, space)?;
            cluster.insert_vertex(id, vid, tags, *ignore_existed_index)
        }
        ShipOp::DeleteVertex { space, vid } => {
            let id = need_space(cluster, space)?;
            cluster.delete_vertex(id, vid, false)
        }
        ShipOp::UpsertEdge { space, etype, src, dst, rank, names, values, delete } => {
            let id = need_space(cluster, space)?;
            if *delete {
                cluster.delete_edge(id, etype, src, dst, Rank(*rank))
            } else {
                cluster.insert_edge(id, etype, src, dst, Rank(*rank), names, values, false)
            }
        }
    }
}

fn need_space(cluster: &SimCluster, name: &str) -> Result<SpaceId, ClusterError> {
    cluster
        .space_id(name)
        .ok_or_else(|| ClusterError::Storage(crate::storage::StorageError::Retryable(
            format!("space '{name}' not replicated yet"),
        )))
}

/// One replication source: the meta log or one partition's log.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum LaneSource {
    Meta,
    Part(SpaceId, PartId),
}

impl LaneSource {
    pub fn key(&self) -> String {
        match self {
            LaneSource::Meta => "meta".into(),
            LaneSource::Part(s, p) => format!("data/{s}/{p}"),
        }
    }
}

/// The drainer: buffers shipped entries durably, applies them in lsn
/// order per source, and advances watermarks only after apply.
#[derive(Default)]
pub struct Drainer {
    pub received: BTreeMap<String, u64>,
    pub applied: BTreeMap<String, u64>,
    buffer: BTreeMap<String, Vec<(u64, ShipOp)>>,
    /// Override for CreateSpace partition counts on the secondary
    /// (heterogeneous deployments).
    pub partition_override: Option<u32>,
    pub apply_failures: u64,
}

impl Drainer {
    pub fn new(partition_override: Option<u32>) -> Drainer {
        Drainer { partition_override, ..Drainer::default() }
    }

    /// Ingests a batch; duplicates and gaps are dropped. Returns the
    /// durable receipt watermark for the source.
    pub fn receive(&mut self, source: &str, batch: Vec<(u64, ShipOp)>) -> u64 {
        let high = self.received.entry(source.to_string()).or_insert(0);
        let buf = self.buffer.entry(source.to_string()).or_default();
        for (lsn, op) in batch {
            if lsn == *high + 1 {
                buf.push((lsn, op));
                *high += 1;
            }
        }
        *high
    }

    /// Applies buffered entries in order; stops a lane at the first
    /// entry that fails (retried on the next call).
    pub fn apply(&mut self, secondary: &mut SimCluster) {
        let sources: Vec<String> = self.buffer.keys().cloned().collect();
        for source in sources {
            loop {
                let Some((lsn, op)) = self
                    .buffer
                    .get(&source)
                    .and_then(|b| b.first())
                    .cloned()
                else {
                    break;
                };
                let watermark = self.applied.entry(source.clone()).or_insert(0);
                if lsn <= *watermark {
                    self.buffer.get_mut(&source).unwrap().remove(0);
                    continue;
                }
                match apply_ship_op(secondary, &op, self.partition_override) {
                    Ok(()) => {
                        *watermark = lsn;
                        self.buffer.get_mut(&source).unwrap().remove(0);
                    }
                    Err(_) => {
                        self.apply_failures += 1;
                        break;
                    }
                }
            }
        }
    }

    pub fn backlog(&self) -> usize {
        self.buffer.values().map(|b| b.len()).sum()
    }
}

/// Shipping state for one lane (one source through one listener to one
/// drainer).
pub struct Lane {
    pub source: LaneSource,
    pub listener: HostId,
    pub drainer: usize,
    /// Ship lsn of the last translated entry at or below the feed ack.
    shipped: u64,
    synced_to: LogIndex,
}

/// Plumbs listeners to drainers with M-to-N round-robin and pumps
/// batches with injectable faults. The primary's listener feeds and the
/// drainer state are durable; anything in flight can be dropped.
pub struct ReplicationLink {
    pub lanes: Vec<Lane>,
    pub drainers: Vec<Drainer>,
    pub drainer_up: Vec<bool>,
    rng: ChaCha8Rng,
    pub drop_prob: f64,
}

impl ReplicationLink {
    /// Reads the primary's catalog and builds lanes for every listener
    /// assignment plus the meta listener.
    pub fn from_catalog(primary: &SimCluster, n_drainers: usize, seed: u64) -> ReplicationLink {
        let catalog = primary.catalog();
        let mut lanes = Vec::new();
        let mut i = 0usize;
        if let Some(host) = catalog.meta_listener {
            lanes.push(Lane {
                source: LaneSource::Meta,
                listener: host,
                drainer: 0,
                shipped: 0,
                synced_to: 0,
            });
            i += 1;
        }
        for (space, parts) in &catalog.listener_assignment {
            for (part, hosts) in parts {
                for host in hosts {
                    lanes.push(Lane {
                        source: LaneSource::Part(*space, *part),
                        listener: *host,
                        // listener-to-drainer round robin
                        drainer: i % n_drainers.max(1),
                        shipped: 0,
                        synced_to: 0,
                    });
                    i += 1;
                }
            }
        }
        ReplicationLink {
            lanes,
            drainers: (0..n_drainers.max(1)).map(|_| Drainer::new(None)).collect(),
            drainer_up: vec![true; n_drainers.max(1)],
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7265706c),
            drop_prob: 0.0,
        }
    }

    /// Ships pending entries on every healthy lane, then applies drained
    /// buffers to the secondary.
    pub fn pump(&mut self, primary: &mut SimCluster, secondary: &mut SimCluster) {
        for li in 0..self.lanes.len() {
            let (listener, drainer_idx, source) = {
                let lane = &self.lanes[li];
                (lane.listener, lane.drainer, lane.source)
            };
            if !primary.is_up(listener) || !self.drainer_up[drainer_idx] {
                continue;
            }
            if self.drop_prob > 0.0 && self.rng.gen_bool(self.drop_prob) {
                continue; // batch lost in flight; retried next pump
            }
            let host = primary.host(listener);
            let catalog = host.catalog.clone();
            // raft node + feed for the lane's source
            let batch: Vec<(LogIndex, Option<ShipOp>)> = match source {
                LaneSource::Meta => {
                    let Some(feed) = &host.meta_feed else { continue };
                    let raft = &host.meta_raft;
                    Self::resync(&mut self.lanes[li], raft, feed, |e| {
                        Proposal::<MetaCommand>::decode(&e.payload)
                            .and_then(|p| translate_meta(&catalog, &p.cmd))
                    });
                    feed.pending(raft, 64)
                        .into_iter()
                        .map(|e| {
                            (
                                e.index,
                                Proposal::<MetaCommand>::decode(&e.payload)
                                    .and_then(|p| translate_meta(&catalog, &p.cmd)),
                            )
                        })
                        .collect()
                }
                LaneSource::Part(space, part) => {
                    let Some(group) = host.groups.get(&(space, part)) else { continue };
                    let Some(feed) = &group.feed else { continue };
                    let raft = &group.raft;
                    Self::resync(&mut self.lanes[li], raft, feed, |e| {
                        Proposal::<PartitionCommand>::decode(&e.payload)
                            .and_then(|p| translate_part(&catalog, space, &p.cmd))
                    });
                    feed.pending(raft, 64)
                        .into_iter()
                        .map(|e| {
                            (
                                e.index,
                                Proposal::<PartitionCommand>::decode(&e.payload)
                                    .and_then(|p| translate_part(&catalog, space, &p.cmd)),
                            )
                        })
                        .collect()
                }
            };
            if batch.is_empty() {
                continue;
            }
            let lane = &mut self.lanes[li];
            let mut ship: Vec<(u64, ShipOp)> = Vec::new();
            let mut next_lsn = lane.shipped;
            let last_index = batch.last().unwrap().0;
            for (_, op) in &batch {
                if let Some(op) = op {
                    next_lsn += 1;
                    ship.push((next_lsn, op.clone()));
                }
            }
            let receipt = self.drainers[drainer_idx].receive(&lane.source.key(), ship);
            debug_assert!(receipt >= lane.shipped);
            // durable receipt covers the batch: advance the feed ack
            lane.shipped = next_lsn;
            lane.synced_to = last_index;
            let host = primary.host_mut(listener);
            match source {
                LaneSource::Meta => host.ack_meta_feed(last_index),
                LaneSource::Part(space, part) => {
                    if let Some(group) = host.groups.get_mut(&(space, part)) {
                        group.ack_feed(last_index);
                    }
                }
            }
        }
        for (di, up) in self.drainer_up.clone().iter().enumerate() {
            if *up {
                self.drainers[di].apply(secondary);
            }
        }
    }

    /// After a listener restart the lane's ship-lsn counter is rebuilt
    /// from the durable log and ack offset.
    fn resync<F>(lane: &mut Lane, raft: &crate::raft::RaftNode, feed: &crate::raft::ListenerFeed, translate: F)
    where
        F: Fn(&crate::raft::LogEntry) -> Option<ShipOp>,
    {
        if lane.synced_to == feed.acked() {
            return;
        }
        let mut shipped = 0u64;
        for i in 1..=feed.acked() {
            if let Some(e) = raft.entry_at(i) {
                if !e.payload.is_empty() && translate(e).is_some() {
                    shipped += 1;
                }
            }
        }
        lane.shipped = shipped;
        lane.synced_to = feed.acked();
    }

    pub fn backlog(&self) -> usize {
        self.drainers.iter().map(|d| d.backlog()).sum()
    }

    /// True when every lane's feed has acked through its group's commit
    /// index and no drainer holds unapplied entries.
    pub fn caught_up(&self, primary: &SimCluster) -> bool {
        if self.backlog() > 0 {
            return false;
        }
        self.lanes.iter().all(|lane| {
            if !primary.is_up(lane.listener) {
                return false;
            }
            let host = primary.host(lane.listener);
            match lane.source {
                LaneSource::Meta => host
                    .meta_feed
                    .as_ref()
                    .map_or(false, |f| f.acked() == host.meta_raft.commit_index()),
                LaneSource::Part(space, part) => host
                    .groups
                    .get(&(space, part))
                    .and_then(|g| g.feed.as_ref().map(|f| f.acked() == g.raft.commit_index()))
                    .unwrap_or(false),
            }
        })
    }
}

// ---------------------------------------------------------------------------
// Convergence verification
// ---------------------------------------------------------------------------

/// Placement-independent digest of one space's logical content:
/// schema names/props, vertices with named tag rows, and edges.
pub fn logical_space_digest(cluster: &SimCluster, space_name: &str) -> u64 {
    use std::hash::{Hash, Hasher};
    let mut entries = logical_entries(cluster, space_name);
    entries.sort();
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for e in entries {
        e.hash(&mut h);
    }
    h.finish()
}

/// Canonical line-per-record form of a space's content, for digests and
/// divergence reports.
pub fn logical_entries(cluster: &SimCluster, space_name: &str) -> Vec<String> {
    let mut out = Vec::new();
    let catalog = cluster.catalog().clone();
    let Some(s) = catalog.space_by_name(space_name) else { return out };
    let id = s.def.space_id;
    for tag in s.tags.values() {
        let props: Vec<String> =
            tag.current().iter().map(|p| format!("{}:{}", p.name, p.ty)).collect();
        out.push(format!("tag/{}/{}", tag.name, props.join(",")));
        if let Ok(rows) = cluster.full_scan_tag(id, &tag.name) {
            for (vid, values) in rows {
                let vals: Vec<String> = tag
                    .current()
                    .iter()
                    .zip(values)
                    .map(|(p, v)| format!("{}={}", p.name, v))
                    .collect();
                out.push(format!("v/{}/{}/{}", vid.display_string(), tag.name, vals.join(",")));
            }
        }
    }
    for edge in s.edges.values() {
        let props: Vec<String> =
            edge.current().iter().map(|p| format!("{}:{}", p.name, p.ty)).collect();
        out.push(format!("edge/{}/{}", edge.name, props.join(",")));
        if let Ok(rows) = cluster.full_scan_edges(id, &edge.name) {
            for (src, rank, dst, values) in rows {
                let vals: Vec<String> = edge
                    .current()
                    .iter()
                    .zip(values)
                    .map(|(p, v)| format!("{}={}", p.name, v))
                    .collect();
                out.push(format!(
                    "e/{}/{}/{}/{}/{}",
                    edge.name,
                    src.display_string(),
                    rank.0,
                    dst.display_string(),
                    vals.join(",")
                ));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceReport {
    pub converged: bool,
    /// Records present on one side only, capped at 32 per side.
    pub only_primary: Vec<String>,
    pub only_secondary: Vec<String>,
}

/// Compares full logical content per space; write traffic must be
/// stopped first.
pub fn verify_convergence(primary: &SimCluster, secondary: &SimCluster) -> ConvergenceReport {
    let mut report = ConvergenceReport { converged: true, ..Default::default() };
    let names: Vec<String> =
        primary.catalog().spaces.values().map(|s| s.def.name.clone()).collect();
    for name in names {
        let mut a = logical_entries(primary, &name);
        let mut b = logical_entries(secondary, &name);
        a.sort();
        b.sort();
        if a != b {
            report.converged = false;
            let bs: std::collections::BTreeSet<_> = b.iter().collect();
            let as_: std::collections::BTreeSet<_> = a.iter().collect();
            report
                .only_primary
                .extend(a.iter().filter(|e| !bs.contains(e)).take(32).cloned());
            report
                .only_secondary
                .extend(b.iter().filter(|e| !as_.contains(e)).take(32).cloned());
        }
    }
    report
}
