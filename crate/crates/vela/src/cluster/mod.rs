//! Cluster composition: one [`Host`] runs a meta replica, its share of
//! partition Raft groups, the TOSS edge-write driver, and a coordinator
//! for client operations. Hosts are pure tick/receive state machines;
//! a container (the in-process simulator or a networked server) moves
//! [`ClusterMsg`] envelopes between them.

pub mod sim;

use crate::codec::{self, EdgeTypeId, PartId, PendingEdge, PendingOp, Rank, SpaceId, Vid};
use crate::kv::PartitionStore;
use crate::meta::{
    Catalog, HostId, IndexDef, IndexTarget, MetaCommand, MetaError, MetaResponse, SchemaDef,
};
use crate::raft::{GroupConfig, ListenerFeed, LogEntry, RaftNode};
use crate::storage::toss::{SpinWaiter, TossDriver, TossEntry, TossStage, BACKOFF_BASE};
use crate::storage::{self, PartitionCommand, Proposal, StorageError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub type Tick = u64;

/// How long a parked edge write spins on a busy lock before the client
/// sees a retryable timeout.
pub const SPIN_TIMEOUT: Tick = 512;
/// Coordinator resend interval for unanswered RPCs.
pub const RPC_RETRY: Tick = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupId {
    Meta,
    Part(SpaceId, PartId),
}

/// An edge write (or delete) as routed to the out-partition leader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeOpSpec {
    pub space: SpaceId,
    pub out_part: PartId,
    pub in_part: PartId,
    pub src: Vid,
    pub edge_type: EdgeTypeId,
    pub rank: Rank,
    pub pending: PendingEdge,
    pub schema: SchemaDef,
    pub indexes: Vec<IndexDef>,
    pub if_not_exists: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RpcRequest {
    ProposeMeta { op_id: u64, cmd: MetaCommand },
    ProposePart { op_id: u64, space: SpaceId, part: PartId, cmd: PartitionCommand },
    EdgeWrite { op_id: u64, spec: EdgeOpSpec },
    /// TOSS step 2: write the in-edge on its partition.
    TossForward {
        space: SpaceId,
        part: PartId,
        dst: Vid,
        src: Vid,
        edge_type: EdgeTypeId,
        rank: Rank,
        pending: PendingEdge,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RpcResponse {
    MetaDone { op_id: u64, result: Result<MetaResponse, MetaError> },
    PartDone { op_id: u64, result: Result<(), StorageError> },
    EdgeDone { op_id: u64, result: Result<(), StorageError> },
    InEdgeAck,
    NotLeader { group: GroupId, hint: Option<HostId> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClusterMsg {
    Raft { group: GroupId, msg: crate::raft::Message },
    Rpc { rpc_id: u64, req: RpcRequest },
    RpcResp { rpc_id: u64, resp: RpcResponse },
}

/// A client operation submitted to a coordinator host.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ClientOp {
    Meta(MetaCommand),
    Part { space: SpaceId, part: PartId, cmd: PartitionCommand },
    Edge(EdgeOpSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OpResult {
    Meta(Result<MetaResponse, MetaError>),
    Part(Result<(), StorageError>),
    Edge(Result<(), StorageError>),
}

struct CoordState {
    op: ClientOp,
    target: Option<HostId>,
    retry_at: Tick,
}

struct ParkedEdge {
    rpc_id: u64,
    from: HostId,
    spec: EdgeOpSpec,
}

/// One partition's replica on this host.
pub struct PartGroup {
    pub space: SpaceId,
    pub part: PartId,
    pub vid_len: usize,
    pub raft: RaftNode,
    pub store: PartitionStore,
    pub toss: TossDriver,
    pub feed: Option<ListenerFeed>,
    part_results: BTreeMap<u64, Result<(), StorageError>>,
    was_leader: bool,
    /// Locks re-driven by the last leadership takeover.
    pub last_recovered: u64,
}

impl PartGroup {
    pub fn leader_hint(&self) -> Option<HostId> {
        self.raft.leader_hint()
    }

    pub fn ack_feed(&mut self, index: crate::raft::LogIndex) {
        if let Some(feed) = &mut self.feed {
            let _ = feed.ack_to(index, &self.raft);
        }
    }
}

pub struct Host {
    pub id: HostId,
    pub now: Tick,
    pub meta_raft: RaftNode,
    pub catalog: Catalog,
    pub groups: BTreeMap<(SpaceId, PartId), PartGroup>,
    /// Ship feed over the meta log when this host is the meta-listener.
    pub meta_feed: Option<ListenerFeed>,
    pub kv_separation: bool,
    seed: u64,
    next_rpc: u64,
    next_op: u64,
    coord: BTreeMap<u64, CoordState>,
    coord_rpc: BTreeMap<u64, u64>,
    results: BTreeMap<u64, OpResult>,
    pending_meta_resp: BTreeMap<u64, (u64, HostId)>,
    pending_part_resp: BTreeMap<u64, (u64, HostId)>,
    pending_in_acks: BTreeMap<u64, (u64, HostId)>,
    edge_resp: BTreeMap<u64, (u64, HostId)>,
    parked_edges: BTreeMap<u64, ParkedEdge>,
    leader_cache: BTreeMap<GroupId, HostId>,
    outbox: Vec<(HostId, ClusterMsg)>,
}

impl Host {
    pub fn new(id: HostId, meta_members: Vec<HostId>, seed: u64, kv_separation: bool) -> Host {
        let config = GroupConfig::voters_only(meta_members);
        Host {
            id,
            now: 0,
            meta_raft: RaftNode::new(id, config, seed ^ 0x6d657461),
            catalog: Catalog::new(),
            groups: BTreeMap::new(),
            meta_feed: None,
            kv_separation,
            seed,
            next_rpc: 0,
            next_op: 0,
            coord: BTreeMap::new(),
            coord_rpc: BTreeMap::new(),
            results: BTreeMap::new(),
            pending_meta_resp: BTreeMap::new(),
            pending_part_resp: BTreeMap::new(),
            pending_in_acks: BTreeMap::new(),
            edge_resp: BTreeMap::new(),
            parked_edges: BTreeMap::new(),
            leader_cache: BTreeMap::new(),
            outbox: Vec::new(),
        }
    }

    pub fn catalog(&self) -> &Catalog {
        &self.catalog
    }

    pub fn ack_meta_feed(&mut self, index: crate::raft::LogIndex) {
        if let Some(feed) = &mut self.meta_feed {
            let _ = feed.ack_to(index, &self.meta_raft);
        }
    }

    fn fresh_rpc(&mut self) -> u64 {
        self.next_rpc += 1;
        ((self.id as u64) << 40) | self.next_rpc
    }

    fn fresh_op(&mut self) -> u64 {
        self.next_op += 1;
        ((self.id as u64) << 40) | self.next_op
    }

    fn send(&mut self, to: HostId, msg: ClusterMsg) {
        self.outbox.push((to, msg));
    }

    /// Submits a client operation this host will coordinate. Poll
    /// [`Host::take_result`] with the returned id.
    pub fn submit(&mut self, op: ClientOp) -> u64 {
        let op_id = self.fresh_op();
        self.coord.insert(op_id, CoordState { op, target: None, retry_at: 0 });
        op_id
    }

    pub fn take_result(&mut self, op_id: u64) -> Option<OpResult> {
        self.results.remove(&op_id)
    }

    pub fn results_contains(&self, op_id: u64) -> bool {
        self.results.contains_key(&op_id)
    }

    pub fn has_pending_ops(&self) -> bool {
        !self.coord.is_empty()
    }

    /// Simulated crash/restart. Durable state (raft logs, partition
    /// stores, listener progress) survives; coordination state and the
    /// catalog are rebuilt (the catalog by replaying the meta log).
    pub fn restart(&mut self) {
        self.catalog = Catalog::new();
        self.meta_raft.restart(0);
        self.coord.clear();
        self.coord_rpc.clear();
        self.pending_meta_resp.clear();
        self.pending_part_resp.clear();
        self.pending_in_acks.clear();
        self.edge_resp.clear();
        self.parked_edges.clear();
        self.leader_cache.clear();
        self.outbox.clear();
        for group in self.groups.values_mut() {
            let applied = storage::applied_index(&group.store, group.part);
            group.raft.restart(applied);
            group.toss = TossDriver::new();
            group.was_leader = false;
            group.part_results.clear();
            if let Some(feed) = &mut group.feed {
                feed.resume(&group.raft);
            }
        }
        if let Some(feed) = &mut self.meta_feed {
            feed.resume(&self.meta_raft);
        }
        // Replay the meta log to rebuild the catalog and groups.
        self.apply_meta_commits();
    }

    // -- main loop ----------------------------------------------------------

    pub fn tick(&mut self) -> Vec<(HostId, ClusterMsg)> {
        self.now += 1;
        // raft heartbeats/elections
        let outs = self.meta_raft.tick();
        for o in outs {
            self.send(o.to, ClusterMsg::Raft { group: GroupId::Meta, msg: o.msg });
        }
        let keys: Vec<(SpaceId, PartId)> = self.groups.keys().copied().collect();
        for key in &keys {
            let group = self.groups.get_mut(key).unwrap();
            let outs = group.raft.tick();
            let gid = GroupId::Part(key.0, key.1);
            for o in outs {
                self.outbox.push((o.to, ClusterMsg::Raft { group: gid, msg: o.msg }));
            }
        }
        // state machines
        self.apply_meta_commits();
        for key in &keys {
            if self.groups.contains_key(key) {
                self.apply_group_commits(*key);
            }
        }
        // leadership transitions + TOSS driving
        for key in &keys {
            if self.groups.contains_key(key) {
                self.observe_leadership(*key);
                self.drive_toss(*key);
            }
        }
        self.drive_coord();
        std::mem::take(&mut self.outbox)
    }

    pub fn receive(&mut self, from: HostId, msg: ClusterMsg) {
        match msg {
            ClusterMsg::Raft { group, msg } => match group {
                GroupId::Meta => {
                    let outs = self.meta_raft.handle(from, msg);
                    for o in outs {
                        self.send(o.to, ClusterMsg::Raft { group: GroupId::Meta, msg: o.msg });
                    }
                }
                GroupId::Part(space, part) => {
                    if let Some(g) = self.groups.get_mut(&(space, part)) {
                        let outs = g.raft.handle(from, msg);
                        for o in outs {
                            self.outbox.push((
                                o.to,
                                ClusterMsg::Raft { group: GroupId::Part(space, part), msg: o.msg },
                            ));
                        }
                    }
                }
            },
            ClusterMsg::Rpc { rpc_id, req } => self.handle_rpc(from, rpc_id, req),
            ClusterMsg::RpcResp { rpc_id, resp } => self.handle_resp(from, rpc_id, resp),
        }
    }

    // -- meta state machine ---------------------------------------------------

    fn apply_meta_commits(&mut self) {
        let entries: Vec<LogEntry> = self.meta_raft.take_applied();
        if entries.is_empty() {
            return;
        }
        for entry in &entries {
            if entry.payload.is_empty() {
                continue;
            }
            let Some(prop) = Proposal::<MetaCommand>::decode(&entry.payload) else { continue };
            let result = match self.catalog.op_results.get(&prop.op_id) {
                Some(cached) => cached.clone(),
                None => {
                    let r = self.catalog.apply(&prop.cmd);
                    self.catalog.op_results.insert(prop.op_id, r.clone());
                    r
                }
            };
            if let Some((rpc_id, to)) = self.pending_meta_resp.remove(&prop.op_id) {
                self.send(
                    to,
                    ClusterMsg::RpcResp {
                        rpc_id,
                        resp: RpcResponse::MetaDone { op_id: prop.op_id, result },
                    },
                );
            }
        }
        if self.catalog.meta_listener == Some(self.id) && self.meta_feed.is_none() {
            self.meta_feed = Some(crate::raft::ListenerFeed::in_memory());
        }
        self.sync_groups();
    }

    /// Reconciles hosted partition groups with the catalog's placement:
    /// creates replicas assigned here, rebuilds Raft instances whose
    /// member set changed (stop-copy restart with the durable log), and
    /// drops groups that moved away.
    fn sync_groups(&mut self) {
        let mut want: BTreeMap<(SpaceId, PartId), (GroupConfig, usize, bool)> = BTreeMap::new();
        for (sid, s) in &self.catalog.spaces {
            for (part, replicas) in &s.parts {
                let assigned: Vec<HostId> = self
                    .catalog
                    .listener_assignment
                    .get(sid)
                    .and_then(|m| m.get(part))
                    .cloned()
                    .unwrap_or_default();
                // a host already voting in the group subscribes through
                // its own replica; only non-voters join as Raft listeners
                let listeners: Vec<HostId> =
                    assigned.iter().copied().filter(|h| !replicas.contains(h)).collect();
                if replicas.contains(&self.id) || listeners.contains(&self.id) {
                    want.insert(
                        (*sid, *part),
                        (
                            GroupConfig { voters: replicas.clone(), listeners },
                            s.def.vid_len as usize,
                            assigned.contains(&self.id),
                        ),
                    );
                }
            }
        }
        let existing: Vec<(SpaceId, PartId)> = self.groups.keys().copied().collect();
        for key in existing {
            match want.get(&key) {
                None => {
                    self.groups.remove(&key);
                }
                Some((cfg, _, wants_feed)) => {
                    let group = self.groups.get_mut(&key).unwrap();
                    if group.raft.config() != cfg {
                        let applied = storage::applied_index(&group.store, group.part);
                        group.raft.reconfigure(cfg.clone(), applied);
                        group.toss = TossDriver::new();
                        group.was_leader = false;
                    }
                    if *wants_feed && group.feed.is_none() {
                        group.feed = Some(ListenerFeed::in_memory());
                    }
                }
            }
        }
        for (key, (cfg, vid_len, wants_feed)) in want {
            if self.groups.contains_key(&key) {
                continue;
            }
            let (space, part) = key;
            let is_listener = wants_feed;
            let seed = self
                .seed
                .wrapping_mul(31)
                .wrapping_add((space as u64) << 32 | part as u64)
                .wrapping_add(self.id as u64);
            let group = PartGroup {
                space,
                part,
                vid_len,
                raft: RaftNode::new(self.id, cfg, seed),
                store: PartitionStore::new_in_memory(part, self.kv_separation),
                toss: TossDriver::new(),
                feed: is_listener.then(ListenerFeed::in_memory),
                part_results: BTreeMap::new(),
                was_leader: false,
                last_recovered: 0,
            };
            self.groups.insert(key, group);
        }
    }

    // -- partition state machines ----------------------------------------------

    fn apply_group_commits(&mut self, key: (SpaceId, PartId)) {
        let group = self.groups.get_mut(&key).unwrap();
        let entries = group.raft.take_applied();
        if entries.is_empty() {
            return;
        }
        let is_leader = group.raft.is_leader();
        for entry in &entries {
            if entry.payload.is_empty() {
                continue;
            }
            let Some(prop) = Proposal::<PartitionCommand>::decode(&entry.payload) else {
                continue;
            };
            let group = self.groups.get_mut(&key).unwrap();
            let result = storage::apply_command(
                &mut group.store,
                group.part,
                group.vid_len,
                entry.index,
                &prop.cmd,
            );
            group.part_results.insert(prop.op_id, result.clone());
            match &prop.cmd {
                PartitionCommand::TossLock { src, edge_type, rank, .. } => {
                    if is_leader {
                        let lock_key =
                            codec::encode_lock_key(group.part, src, *edge_type, *rank);
                        if let Some(e) = group.toss.get_mut(&lock_key) {
                            if e.stage == TossStage::WaitLockApplied {
                                e.stage = TossStage::NeedForward;
                            }
                        }
                    }
                }
                PartitionCommand::TossCommit { src, edge_type, rank, .. } => {
                    let lock_key = codec::encode_lock_key(group.part, src, *edge_type, *rank);
                    let done = group.toss.remove(&lock_key);
                    let waiters = group.toss.take_waiters(&lock_key);
                    if let Some(client_op) = done.and_then(|e| e.op_id) {
                        if let Some((rpc_id, to)) = self.edge_resp.remove(&client_op) {
                            self.send(
                                to,
                                ClusterMsg::RpcResp {
                                    rpc_id,
                                    resp: RpcResponse::EdgeDone {
                                        op_id: client_op,
                                        result: Ok(()),
                                    },
                                },
                            );
                        }
                    }
                    for w in waiters {
                        if let Some(parked) = self.parked_edges.remove(&w.op_id) {
                            self.handle_edge_write(
                                parked.from,
                                parked.rpc_id,
                                w.op_id,
                                parked.spec,
                            );
                        }
                    }
                }
                PartitionCommand::WriteInEdge { .. } => {
                    if let Some((rpc_id, to)) = self.pending_in_acks.remove(&prop.op_id) {
                        self.send(
                            to,
                            ClusterMsg::RpcResp { rpc_id, resp: RpcResponse::InEdgeAck },
                        );
                    }
                }
                _ => {}
            }
            if let Some((rpc_id, to)) = self.pending_part_resp.remove(&prop.op_id) {
                self.send(
                    to,
                    ClusterMsg::RpcResp {
                        rpc_id,
                        resp: RpcResponse::PartDone { op_id: prop.op_id, result },
                    },
                );
            }
            // listener shipping is pumped by the replication layer
        }
    }

    /// On gaining a partition's leadership, re-drive every surviving
    /// lock record to completion; on losing it, drop driver state.
    fn observe_leadership(&mut self, key: (SpaceId, PartId)) {
        let group = self.groups.get_mut(&key).unwrap();
        let is_leader = group.raft.is_leader();
        if is_leader && !group.was_leader {
            group.was_leader = true;
            let recovered = self.recover_toss(key);
            self.groups.get_mut(&key).unwrap().last_recovered = recovered;
        } else if !is_leader && group.was_leader {
            group.was_leader = false;
            let orphans = group.toss.clear();
            let hint = group.raft.leader_hint();
            let space_part = GroupId::Part(key.0, key.1);
            for w in orphans {
                if let Some(parked) = self.parked_edges.remove(&w.op_id) {
                    self.send(
                        parked.from,
                        ClusterMsg::RpcResp {
                            rpc_id: parked.rpc_id,
                            resp: RpcResponse::NotLeader { group: space_part, hint },
                        },
                    );
                }
            }
        }
    }

    /// Scans surviving lock records and queues each for roll-forward.
    /// Returns how many were recovered; idempotent.
    pub fn recover_toss(&mut self, key: (SpaceId, PartId)) -> u64 {
        let (space, part) = key;
        let locks = {
            let group = self.groups.get(&key).unwrap();
            storage::surviving_locks(&group.store, group.part, group.vid_len)
        };
        let mut recovered = 0;
        for (src, edge_type, rank, pending) in locks {
            let lock_key = codec::encode_lock_key(part, &src, edge_type, rank);
            if self.groups[&key].toss.is_locked(&lock_key) {
                continue;
            }
            let Some((schema, indexes)) = self.edge_schema(space, edge_type) else { continue };
            let Some(in_part) = self.catalog.partition_for_vid(space, &pending.dst) else {
                continue;
            };
            let entry = TossEntry {
                space,
                part: key.1,
                in_part,
                src,
                edge_type,
                rank,
                pending,
                schema,
                indexes,
                stage: TossStage::NeedForward,
                op_id: None,
                next_action: 0,
                backoff: BACKOFF_BASE,
            };
            self.groups.get_mut(&key).unwrap().toss.insert(lock_key, entry);
            recovered += 1;
        }
        recovered
    }

    fn edge_schema(
        &self,
        space: SpaceId,
        edge_type: EdgeTypeId,
    ) -> Option<(SchemaDef, Vec<IndexDef>)> {
        let s = self.catalog.space(space)?;
        let schema = s.edges.get(&edge_type)?.clone();
        let indexes = s
            .indexes_for(IndexTarget::Edge(edge_type))
            .into_iter()
            .cloned()
            .collect();
        Some((schema, indexes))
    }

    // -- TOSS driving -----------------------------------------------------------

    fn drive_toss(&mut self, key: (SpaceId, PartId)) {
        let now = self.now;
        let group = self.groups.get_mut(&key).unwrap();
        if !group.raft.is_leader() {
            return;
        }
        // expire spinning writers
        for w in group.toss.expire_waiters(now) {
            if let Some(parked) = self.parked_edges.remove(&w.op_id) {
                self.send(
                    parked.from,
                    ClusterMsg::RpcResp {
                        rpc_id: parked.rpc_id,
                        resp: RpcResponse::EdgeDone {
                            op_id: w.op_id,
                            result: Err(StorageError::Retryable(
                                "spin timeout on edge lock".into(),
                            )),
                        },
                    },
                );
            }
        }
        enum Action {
            Forward { req: RpcRequest, in_group: GroupId },
            Commit { cmd: PartitionCommand },
        }
        let due = self.groups.get_mut(&key).unwrap().toss.due(now);
        for lock_key in due {
            let action = {
                let group = self.groups.get_mut(&key).unwrap();
                let Some(entry) = group.toss.get_mut(&lock_key) else { continue };
                match entry.stage {
                    TossStage::NeedForward | TossStage::AwaitInAck { .. } => {
                        if matches!(entry.stage, TossStage::AwaitInAck { .. })
                            && entry.next_action > now
                        {
                            continue;
                        }
                        entry.bump_backoff(now);
                        Action::Forward {
                            req: RpcRequest::TossForward {
                                space: entry.space,
                                part: entry.in_part,
                                dst: entry.pending.dst.clone(),
                                src: entry.src.clone(),
                                edge_type: entry.edge_type,
                                rank: entry.rank,
                                pending: entry.pending.clone(),
                            },
                            in_group: GroupId::Part(entry.space, entry.in_part),
                        }
                    }
                    TossStage::NeedCommit => {
                        entry.stage = TossStage::WaitCommitApplied;
                        Action::Commit {
                            cmd: PartitionCommand::TossCommit {
                                src: entry.src.clone(),
                                edge_type: entry.edge_type,
                                rank: entry.rank,
                                pending: entry.pending.clone(),
                                schema: entry.schema.clone(),
                                indexes: entry.indexes.clone(),
                            },
                        }
                    }
                    TossStage::WaitLockApplied | TossStage::WaitCommitApplied => continue,
                }
            };
            match action {
                Action::Forward { req, in_group } => {
                    let rpc_id = self.fresh_rpc();
                    if let Some(e) = self.groups.get_mut(&key).unwrap().toss.get_mut(&lock_key) {
                        e.stage = TossStage::AwaitInAck { rpc_id };
                    }
                    let target = self.resolve_leader(in_group);
                    self.send(target, ClusterMsg::Rpc { rpc_id, req });
                }
                Action::Commit { cmd } => {
                    let op_id = self.fresh_op();
                    let group = self.groups.get_mut(&key).unwrap();
                    let _ = group.raft.propose(Proposal { op_id, cmd }.encode());
                }
            }
        }
    }

    /// Best-known leader host for a group; falls back to any replica.
    pub fn resolve_leader(&self, group: GroupId) -> HostId {
        match group {
            GroupId::Meta => self.meta_raft.leader_hint().unwrap_or(self.id),
            GroupId::Part(space, part) => {
                if let Some(g) = self.groups.get(&(space, part)) {
                    if let Some(h) = g.raft.leader_hint() {
                        return h;
                    }
                }
                if let Some(&cached) = self.leader_cache.get(&group) {
                    return cached;
                }
                self.catalog
                    .space(space)
                    .and_then(|s| s.parts.get(&part))
                    .and_then(|hosts| hosts.first().copied())
                    .unwrap_or(self.id)
            }
        }
    }

    // -- RPC handling -----------------------------------------------------------

    fn handle_rpc(&mut self, from: HostId, rpc_id: u64, req: RpcRequest) {
        match req {
            RpcRequest::ProposeMeta { op_id, cmd } => {
                if !self.meta_raft.is_leader() {
                    let hint = self.meta_raft.leader_hint();
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::NotLeader { group: GroupId::Meta, hint },
                        },
                    );
                    return;
                }
                if let Some(result) = self.catalog.op_results.get(&op_id) {
                    let result = result.clone();
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::MetaDone { op_id, result },
                        },
                    );
                    return;
                }
                let payload = Proposal { op_id, cmd }.encode();
                if self.meta_raft.propose(payload).is_ok() {
                    self.pending_meta_resp.insert(op_id, (rpc_id, from));
                }
            }
            RpcRequest::ProposePart { op_id, space, part, cmd } => {
                let gid = GroupId::Part(space, part);
                let Some(group) = self.groups.get_mut(&(space, part)) else {
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::NotLeader { group: gid, hint: None },
                        },
                    );
                    return;
                };
                if !group.raft.is_leader() {
                    let hint = group.raft.leader_hint();
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::NotLeader { group: gid, hint },
                        },
                    );
                    return;
                }
                if let Some(result) = group.part_results.get(&op_id) {
                    let result = result.clone();
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::PartDone { op_id, result },
                        },
                    );
                    return;
                }
                let payload = Proposal { op_id, cmd }.encode();
                if group.raft.propose(payload).is_ok() {
                    self.pending_part_resp.insert(op_id, (rpc_id, from));
                }
            }
            RpcRequest::EdgeWrite { op_id, spec } => {
                self.handle_edge_write(from, rpc_id, op_id, spec);
            }
            RpcRequest::TossForward { space, part, dst, src, edge_type, rank, pending } => {
                let gid = GroupId::Part(space, part);
                let Some(group) = self.groups.get_mut(&(space, part)) else {
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::NotLeader { group: gid, hint: None },
                        },
                    );
                    return;
                };
                if !group.raft.is_leader() {
                    let hint = group.raft.leader_hint();
                    self.send(
                        from,
                        ClusterMsg::RpcResp {
                            rpc_id,
                            resp: RpcResponse::NotLeader { group: gid, hint },
                        },
                    );
                    return;
                }
                let cmd = PartitionCommand::WriteInEdge { dst, src, edge_type, rank, pending };
                let op_id = self.fresh_op();
                let group = self.groups.get_mut(&(space, part)).unwrap();
                if group.raft.propose(Proposal { op_id, cmd }.encode()).is_ok() {
                    self.pending_in_acks.insert(op_id, (rpc_id, from));
                }
            }
        }
    }

    /// Out-partition entry point of the TOSS protocol. Spins (parks)
    /// behind an existing lock on the same (src, edge_type, rank).
    fn handle_edge_write(&mut self, from: HostId, rpc_id: u64, op_id: u64, spec: EdgeOpSpec) {
        let key = (spec.space, spec.out_part);
        let gid = GroupId::Part(spec.space, spec.out_part);
        let Some(group) = self.groups.get_mut(&key) else {
            self.send(
                from,
                ClusterMsg::RpcResp {
                    rpc_id,
                    resp: RpcResponse::NotLeader { group: gid, hint: None },
                },
            );
            return;
        };
        if !group.raft.is_leader() {
            let hint = group.raft.leader_hint();
            self.send(
                from,
                ClusterMsg::RpcResp { rpc_id, resp: RpcResponse::NotLeader { group: gid, hint } },
            );
            return;
        }
        let lock_key =
            codec::encode_lock_key(spec.out_part, &spec.src, spec.edge_type, spec.rank);
        let busy = group.toss.is_locked(&lock_key) || group.store.contains(&lock_key);
        if !busy && spec.if_not_exists && spec.pending.op == PendingOp::Put {
            let out_key = codec::encode_edge_key(
                spec.out_part,
                &spec.src,
                codec::Direction::Out,
                spec.edge_type,
                spec.rank,
                &spec.pending.dst,
            );
            if group.store.contains(&out_key) {
                self.send(
                    from,
                    ClusterMsg::RpcResp {
                        rpc_id,
                        resp: RpcResponse::EdgeDone { op_id, result: Ok(()) },
                    },
                );
                return;
            }
        }
        if busy {
            let deadline = self.now + SPIN_TIMEOUT;
            group.toss.park_waiter(lock_key, SpinWaiter { op_id, deadline });
            self.parked_edges.insert(op_id, ParkedEdge { rpc_id, from, spec });
            return;
        }
        let entry = TossEntry {
            space: spec.space,
            part: spec.out_part,
            in_part: spec.in_part,
            src: spec.src.clone(),
            edge_type: spec.edge_type,
            rank: spec.rank,
            pending: spec.pending.clone(),
            schema: spec.schema.clone(),
            indexes: spec.indexes.clone(),
            stage: TossStage::WaitLockApplied,
            op_id: Some(op_id),
            next_action: 0,
            backoff: BACKOFF_BASE,
        };
        let cmd = PartitionCommand::TossLock {
            src: spec.src,
            edge_type: spec.edge_type,
            rank: spec.rank,
            pending: spec.pending,
        };
        let lock_prop = self.fresh_op();
        let group = self.groups.get_mut(&key).unwrap();
        if group.raft.propose(Proposal { op_id: lock_prop, cmd }.encode()).is_ok() {
            group.toss.insert(lock_key, entry);
            self.edge_resp.insert(op_id, (rpc_id, from));
        } else {
            let hint = group.raft.leader_hint();
            self.send(
                from,
                ClusterMsg::RpcResp { rpc_id, resp: RpcResponse::NotLeader { group: gid, hint } },
            );
        }
    }

    fn handle_resp(&mut self, _from: HostId, rpc_id: u64, resp: RpcResponse) {
        match resp {
            RpcResponse::MetaDone { op_id, result } => {
                if self.coord.remove(&op_id).is_some() {
                    self.results.insert(op_id, OpResult::Meta(result));
                }
            }
            RpcResponse::PartDone { op_id, result } => {
                if self.coord.remove(&op_id).is_some() {
                    self.results.insert(op_id, OpResult::Part(result));
                }
            }
            RpcResponse::EdgeDone { op_id, result } => {
                if self.coord.remove(&op_id).is_some() {
                    self.results.insert(op_id, OpResult::Edge(result));
                }
            }
            RpcResponse::InEdgeAck => {
                for group in self.groups.values_mut() {
                    if let Some(entry) = group.toss.entry_for_rpc(rpc_id) {
                        entry.stage = TossStage::NeedCommit;
                        entry.backoff = BACKOFF_BASE;
                        return;
                    }
                }
            }
            RpcResponse::NotLeader { group, hint } => {
                if let Some(h) = hint {
                    self.leader_cache.insert(group, h);
                } else {
                    self.leader_cache.remove(&group);
                }
                // a TOSS forward bounced: retry toward the hint
                for g in self.groups.values_mut() {
                    if let Some(entry) = g.toss.entry_for_rpc(rpc_id) {
                        entry.stage = TossStage::NeedForward;
                        return;
                    }
                }
                // a coordinated op bounced: retarget and resend soon
                if let Some(&op_id) = self.coord_rpc.get(&rpc_id) {
                    if let Some(c) = self.coord.get_mut(&op_id) {
                        c.target = hint;
                        c.retry_at = self.now + 2;
                    }
                }
            }
        }
    }

    /// Sends or resends RPCs for coordinated client ops.
    fn drive_coord(&mut self) {
        let due: Vec<u64> = self
            .coord
            .iter()
            .filter(|(_, c)| c.retry_at <= self.now)
            .map(|(id, _)| *id)
            .collect();
        for op_id in due {
            let Some(c) = self.coord.get(&op_id) else { continue };
            let (group, req) = match &c.op {
                ClientOp::Meta(cmd) => (
                    GroupId::Meta,
                    RpcRequest::ProposeMeta { op_id, cmd: cmd.clone() },
                ),
                ClientOp::Part { space, part, cmd } => (
                    GroupId::Part(*space, *part),
                    RpcRequest::ProposePart {
                        op_id,
                        space: *space,
                        part: *part,
                        cmd: cmd.clone(),
                    },
                ),
                ClientOp::Edge(spec) => (
                    GroupId::Part(spec.space, spec.out_part),
                    RpcRequest::EdgeWrite { op_id, spec: spec.clone() },
                ),
            };
            // a NotLeader hint pins the next attempt; otherwise re-resolve
            // every resend so crashed leaders don't wedge the op
            let target = c.target.unwrap_or_else(|| self.resolve_leader(group));
            let rpc_id = self.fresh_rpc();
            self.coord_rpc.insert(rpc_id, op_id);
            if let Some(c) = self.coord.get_mut(&op_id) {
                c.retry_at = self.now + RPC_RETRY;
                c.target = None;
            }
            self.send(target, ClusterMsg::Rpc { rpc_id, req });
        }
        if self.coord_rpc.len() > 4096 {
            let live: std::collections::BTreeSet<u64> = self.coord.keys().copied().collect();
            self.coord_rpc.retain(|_, v| live.contains(v));
        }
    }
}

// ---------------------------------------------------------------------------
// Client-side request builders: catalog + user values -> routed commands
// ---------------------------------------------------------------------------

fn space_catalog(
    catalog: &Catalog,
    space: SpaceId,
) -> Result<&crate::meta::SpaceCatalog, StorageError> {
    catalog
        .space(space)
        .ok_or_else(|| StorageError::Internal(format!("unknown space #{space}")))
}

/// Builds an InsertVertex command routed to the vid's partition.
/// `tags` entries are (tag name, property names, values).
pub fn build_insert_vertex(
    catalog: &Catalog,
    space: SpaceId,
    vid_str: &str,
    tags: &[(String, Vec<String>, Vec<crate::value::PropertyValue>)],
    ignore_existed_index: bool,
) -> Result<(PartId, PartitionCommand), StorageError> {
    let s = space_catalog(catalog, space)?;
    let vid = Vid::new(vid_str, s.def.vid_len as usize)?;
    let part = catalog.partition_for_vid(space, &vid).unwrap();
    let mut writes = Vec::with_capacity(tags.len());
    for (tag_name, names, values) in tags {
        let schema = s
            .tag_by_name(tag_name)
            .ok_or_else(|| StorageError::UnknownTag(tag_name.clone()))?;
        let row_vals = storage::row_from_named(schema, names, values)?;
        let row = storage::make_row(schema, &row_vals)?;
        let indexes = s
            .indexes_for(IndexTarget::Tag(schema.id))
            .into_iter()
            .cloned()
            .collect();
        writes.push(storage::TagWrite {
            tag_id: schema.id,
            row,
            schema: schema.clone(),
            indexes,
        });
    }
    Ok((part, PartitionCommand::InsertVertex { vid, tags: writes, ignore_existed_index }))
}

/// Builds a DeleteVertex command carrying decode context for every tag.
pub fn build_delete_vertex(
    catalog: &Catalog,
    space: SpaceId,
    vid_str: &str,
) -> Result<(PartId, PartitionCommand), StorageError> {
    let s = space_catalog(catalog, space)?;
    let vid = Vid::new(vid_str, s.def.vid_len as usize)?;
    let part = catalog.partition_for_vid(space, &vid).unwrap();
    let tags = s
        .tags
        .values()
        .map(|schema| storage::TagContext {
            tag_id: schema.id,
            schema: schema.clone(),
            indexes: s
                .indexes_for(IndexTarget::Tag(schema.id))
                .into_iter()
                .cloned()
                .collect(),
        })
        .collect();
    Ok((part, PartitionCommand::DeleteVertex { vid, tags }))
}

/// Builds an edge write (or delete) spec routed to the out-partition.
#[allow(clippy::too_many_arguments)]
pub fn build_edge_op(
    catalog: &Catalog,
    space: SpaceId,
    etype_name: &str,
    src_str: &str,
    dst_str: &str,
    rank: Rank,
    names: &[String],
    values: &[crate::value::PropertyValue],
    if_not_exists: bool,
    delete: bool,
) -> Result<EdgeOpSpec, StorageError> {
    let s = space_catalog(catalog, space)?;
    let schema = s
        .edge_by_name(etype_name)
        .ok_or_else(|| StorageError::UnknownEdgeType(etype_name.to_string()))?;
    let vid_len = s.def.vid_len as usize;
    let src = Vid::new(src_str, vid_len)?;
    let dst = Vid::new(dst_str, vid_len)?;
    let out_part = catalog.partition_for_vid(space, &src).unwrap();
    let in_part = catalog.partition_for_vid(space, &dst).unwrap();
    let pending = if delete {
        PendingEdge { op: PendingOp::Delete, dst: dst.clone(), row: Vec::new() }
    } else {
        let row_vals = storage::row_from_named(schema, names, values)?;
        let row = storage::make_row(schema, &row_vals)?;
        PendingEdge { op: PendingOp::Put, dst: dst.clone(), row }
    };
    let indexes = s
        .indexes_for(IndexTarget::Edge(schema.id))
        .into_iter()
        .cloned()
        .collect();
    Ok(EdgeOpSpec {
        space,
        out_part,
        in_part,
        src,
        edge_type: schema.id,
        rank,
        pending,
        schema: schema.clone(),
        indexes,
        if_not_exists,
    })
}

/// One RebuildIndex command per partition of the space.
pub fn build_rebuild_index(
    catalog: &Catalog,
    space: SpaceId,
    index_name: &str,
) -> Result<Vec<(PartId, PartitionCommand)>, StorageError> {
    let s = space_catalog(catalog, space)?;
    let index = s
        .index_by_name(index_name)
        .ok_or_else(|| StorageError::UnknownIndex(index_name.to_string()))?;
    let schema = s
        .schema_for_target(index.target)
        .ok_or_else(|| StorageError::Internal("index target schema missing".into()))?;
    Ok(s
        .parts
        .keys()
        .map(|&part| {
            (
                part,
                PartitionCommand::RebuildIndex { index: index.clone(), schema: schema.clone() },
            )
        })
        .collect())
}
