//! Deterministic in-process cluster: all hosts in one event loop, with
//! a fault-injectable transport. This is both the test harness for the
//! distributed machinery and the engine behind the embedded all-in-one
//! server.

use super::{ClientOp, ClusterMsg, Host, OpResult, Tick};
use crate::codec::{PartId, Rank, SpaceId, Vid};
use crate::kv::PartitionStore;
use crate::meta::{Catalog, HostId, MetaCommand, MetaError, MetaResponse};
use crate::storage::reads::{self, IndexRef, NeighborRow, NeighborsSpec, ScanSpec};
use crate::storage::StorageError;
use crate::value::PropertyValue;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum ClusterError {
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("cluster operation timed out: {0}")]
    Timeout(String),
}

/// In-flight cluster messages with seeded delay/drop and host partitions.
pub struct ClusterTransport {
    rng: ChaCha8Rng,
    queue: BTreeMap<(Tick, u64), (HostId, HostId, ClusterMsg)>,
    seq: u64,
    pub drop_prob: f64,
    pub min_delay: Tick,
    pub max_delay: Tick,
    sides: Vec<BTreeSet<HostId>>,
    pub sent: u64,
    pub dropped: u64,
}

impl ClusterTransport {
    fn new(seed: u64) -> ClusterTransport {
        ClusterTransport {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x636c7573746572),
            queue: BTreeMap::new(),
            seq: 0,
            drop_prob: 0.0,
            min_delay: 1,
            max_delay: 2,
            sides: Vec::new(),
            sent: 0,
            dropped: 0,
        }
    }

    fn linked(&self, a: HostId, b: HostId) -> bool {
        if self.sides.is_empty() || a == b {
            return true;
        }
        self.sides.iter().any(|s| s.contains(&a) && s.contains(&b))
    }

    pub fn set_partition(&mut self, sides: &[Vec<HostId>]) {
        self.sides = sides.iter().map(|s| s.iter().copied().collect()).collect();
    }

    pub fn heal(&mut self) {
        self.sides.clear();
    }

    fn send(&mut self, now: Tick, from: HostId, to: HostId, msg: ClusterMsg) {
        self.sent += 1;
        // local delivery is a function call: never dropped
        if from != to
            && (!self.linked(from, to)
                || (self.drop_prob > 0.0 && self.rng.gen_bool(self.drop_prob)))
        {
            self.dropped += 1;
            return;
        }
        let delay = self.rng.gen_range(self.min_delay..=self.max_delay);
        self.seq += 1;
        self.queue.insert((now + delay, self.seq), (from, to, msg));
    }

    fn take_due(&mut self, now: Tick) -> Vec<(HostId, HostId, ClusterMsg)> {
        let mut due = Vec::new();
        while let Some((&(at, seq), _)) = self.queue.iter().next() {
            if at > now {
                break;
            }
            due.push(self.queue.remove(&(at, seq)).unwrap());
        }
        due
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }
}

pub struct HostSlot {
    pub host: Host,
    pub up: bool,
    pub down_until: Tick,
}

pub struct SimCluster {
    pub hosts: BTreeMap<HostId, HostSlot>,
    pub transport: ClusterTransport,
    pub now: Tick,
    pub seed: u64,
    /// Set on secondary clusters: client writes through the query layer
    /// are rejected (the drainer writes through the cluster API).
    pub read_only: bool,
}

impl SimCluster {
    pub fn new(n_hosts: u32, seed: u64) -> SimCluster {
        Self::with_options(n_hosts, seed, false)
    }

    pub fn with_options(n_hosts: u32, seed: u64, kv_separation: bool) -> SimCluster {
        let members: Vec<HostId> = (1..=n_hosts).collect();
        let mut hosts = BTreeMap::new();
        for id in 1..=n_hosts {
            hosts.insert(
                id,
                HostSlot {
                    host: Host::new(
                        id,
                        members.clone(),
                        seed.wrapping_add(id as u64),
                        kv_separation,
                    ),
                    up: true,
                    down_until: 0,
                },
            );
        }
        SimCluster { hosts, transport: ClusterTransport::new(seed), now: 0, seed, read_only: false }
    }

    /// Elects the meta leader and registers every host in the roster.
    pub fn bootstrap(&mut self) -> Result<(), ClusterError> {
        let ids: Vec<HostId> = self.hosts.keys().copied().collect();
        for id in ids {
            self.meta_op(MetaCommand::AddHost { host: id })?;
        }
        Ok(())
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[&id].host
    }

    pub fn host_mut(&mut self, id: HostId) -> &mut Host {
        &mut self.hosts.get_mut(&id).unwrap().host
    }

    /// Brings a new host into the cluster: it joins the meta group as a
    /// non-voting listener (so it replicates the catalog) and registers
    /// in the roster for placement.
    pub fn add_host(&mut self, id: HostId) -> Result<(), ClusterError> {
        let any = self.hosts.values().next().expect("cluster has hosts");
        let mut config = any.host.meta_raft.config().clone();
        if !config.voters.contains(&id) && !config.listeners.contains(&id) {
            config.listeners.push(id);
        }
        let kv_separation = self.hosts.values().next().unwrap().host.kv_separation;
        let mut host = Host::new(id, config.voters.clone(), self.seed.wrapping_add(id as u64), kv_separation);
        host.meta_raft.reconfigure(config.clone(), 0);
        self.hosts.insert(id, HostSlot { host, up: true, down_until: 0 });
        for (hid, slot) in self.hosts.iter_mut() {
            if *hid == id {
                continue;
            }
            let applied = slot.host.meta_raft.applied_index();
            slot.host.meta_raft.reconfigure(config.clone(), applied);
        }
        self.meta_op(MetaCommand::AddHost { host: id })?;
        // wait for the newcomer's catalog to catch up
        let caught = self.run_until(4_000, |c| {
            c.hosts[&id].host.catalog.hosts.contains_key(&id)
        });
        if !caught {
            return Err(ClusterError::Timeout("host catalog catch-up".into()));
        }
        Ok(())
    }

    pub fn crash_host(&mut self, id: HostId, down_for: Tick) {
        let slot = self.hosts.get_mut(&id).unwrap();
        slot.up = false;
        slot.down_until = self.now + down_for;
    }

    pub fn is_up(&self, id: HostId) -> bool {
        self.hosts[&id].up
    }

    pub fn step(&mut self) {
        self.now += 1;
        // restarts
        let ids: Vec<HostId> = self.hosts.keys().copied().collect();
        for id in &ids {
            let slot = self.hosts.get_mut(id).unwrap();
            if !slot.up && slot.down_until > 0 && self.now >= slot.down_until {
                slot.up = true;
                slot.down_until = 0;
                slot.host.restart();
            }
        }
        // deliver due messages
        for (from, to, msg) in self.transport.take_due(self.now) {
            let Some(slot) = self.hosts.get_mut(&to) else { continue };
            if slot.up {
                slot.host.receive(from, msg);
            }
        }
        // tick hosts in id order
        for id in &ids {
            let slot = self.hosts.get_mut(id).unwrap();
            if !slot.up {
                continue;
            }
            let out = slot.host.tick();
            for (to, msg) in out {
                self.transport.send(self.now, *id, to, msg);
            }
        }
    }

    pub fn run_ticks(&mut self, n: Tick) {
        for _ in 0..n {
            self.step();
        }
    }

    pub fn run_until(&mut self, max: Tick, mut pred: impl FnMut(&SimCluster) -> bool) -> bool {
        for _ in 0..max {
            if pred(self) {
                return true;
            }
            self.step();
        }
        pred(self)
    }

    fn first_up_host(&self) -> Option<HostId> {
        self.hosts.iter().find(|(_, s)| s.up).map(|(&id, _)| id)
    }

    /// Submits an operation on a live coordinator and steps until it
    /// completes, resubmitting if the coordinator crashes.
    pub fn run_op(&mut self, op: ClientOp, max: Tick) -> Result<OpResult, ClusterError> {
        let deadline = self.now + max;
        'outer: while self.now < deadline {
            let Some(coord) = self.first_up_host() else {
                self.step();
                continue;
            };
            let op_id = self.host_mut(coord).submit(op.clone());
            while self.now < deadline {
                self.step();
                let slot = self.hosts.get_mut(&coord).unwrap();
                if !slot.up {
                    continue 'outer;
                }
                if let Some(result) = slot.host.take_result(op_id) {
                    return Ok(result);
                }
            }
        }
        Err(ClusterError::Timeout(format!("{:?}", op)))
    }

    /// Submits many operations (pipelined) and steps until all complete.
    pub fn run_ops(
        &mut self,
        ops: Vec<ClientOp>,
        max: Tick,
    ) -> Result<Vec<OpResult>, ClusterError> {
        let deadline = self.now + max;
        let coord = self.first_up_host().expect("a live host");
        let ids: Vec<u64> = ops.into_iter().map(|op| self.host_mut(coord).submit(op)).collect();
        let mut results: BTreeMap<u64, OpResult> = BTreeMap::new();
        while self.now < deadline && results.len() < ids.len() {
            self.step();
            let slot = self.hosts.get_mut(&coord).unwrap();
            for id in &ids {
                if !results.contains_key(id) {
                    if let Some(r) = slot.host.take_result(*id) {
                        results.insert(*id, r);
                    }
                }
            }
        }
        if results.len() < ids.len() {
            return Err(ClusterError::Timeout("bulk ops".into()));
        }
        Ok(ids.into_iter().map(|id| results.remove(&id).unwrap()).collect())
    }

    pub fn meta_op(&mut self, cmd: MetaCommand) -> Result<MetaResponse, ClusterError> {
        match self.run_op(ClientOp::Meta(cmd), 2_000)? {
            OpResult::Meta(r) => Ok(r?),
            other => panic!("meta op returned {:?}", other),
        }
    }

    pub fn create_space(
        &mut self,
        name: &str,
        partition_num: u32,
        replica_factor: u32,
        vid_len: u32,
    ) -> Result<SpaceId, ClusterError> {
        let resp = self.meta_op(MetaCommand::CreateSpace {
            name: name.into(),
            partition_num,
            replica_factor,
            vid_len,
            if_not_exists: false,
        })?;
        let MetaResponse::SpaceId(id) = resp else { panic!("unexpected {:?}", resp) };
        self.wait_space_leaders(id, 2_000);
        Ok(id)
    }

    pub fn wait_space_leaders(&mut self, space: SpaceId, max: Tick) -> bool {
        self.run_until(max, |c| {
            let Some(s) = c.catalog().space(space) else { return false };
            s.parts.keys().all(|&p| c.leader_of(space, p).is_some())
        })
    }

    /// The most advanced catalog copy (the meta leader's when there is
    /// one).
    pub fn catalog(&self) -> &Catalog {
        let leader = self
            .hosts
            .values()
            .filter(|s| s.up && s.host.meta_raft.is_leader())
            .max_by_key(|s| s.host.meta_raft.term());
        match leader {
            Some(slot) => &slot.host.catalog,
            None => {
                &self
                    .hosts
                    .values()
                    .max_by_key(|s| s.host.catalog.op_results.len())
                    .expect("hosts exist")
                    .host
                    .catalog
            }
        }
    }

    pub fn space_id(&self, name: &str) -> Option<SpaceId> {
        self.catalog().space_by_name(name).map(|s| s.def.space_id)
    }

    pub fn leader_of(&self, space: SpaceId, part: PartId) -> Option<HostId> {
        self.hosts
            .values()
            .filter(|s| {
                s.up
                    && s.host
                        .groups
                        .get(&(space, part))
                        .map_or(false, |g| g.raft.is_leader())
            })
            .max_by_key(|s| s.host.groups[&(space, part)].raft.term())
            .map(|s| s.host.id)
    }

    pub fn leader_store(
        &self,
        space: SpaceId,
        part: PartId,
    ) -> Result<&PartitionStore, StorageError> {
        let host = self
            .leader_of(space, part)
            .ok_or_else(|| StorageError::Retryable(format!("part {part} has no leader")))?;
        Ok(&self.hosts[&host].host.groups[&(space, part)].store)
    }

    pub fn partition_of(&self, space: SpaceId, vid: &Vid) -> PartId {
        self.catalog().partition_for_vid(space, vid).expect("space exists")
    }

    pub fn vid(&self, space: SpaceId, s: &str) -> Vid {
        let vid_len = self.catalog().space(space).expect("space").def.vid_len as usize;
        Vid::new(s, vid_len).expect("vid fits")
    }

    // -- high-level mutations -------------------------------------------------

    pub fn insert_vertex(
        &mut self,
        space: SpaceId,
        vid: &str,
        tags: &[(String, Vec<String>, Vec<PropertyValue>)],
        ignore_existed_index: bool,
    ) -> Result<(), ClusterError> {
        let (part, cmd) =
            super::build_insert_vertex(self.catalog(), space, vid, tags, ignore_existed_index)?;
        match self.run_op(ClientOp::Part { space, part, cmd }, 2_000)? {
            OpResult::Part(r) => Ok(r?),
            other => panic!("{:?}", other),
        }
    }

    pub fn delete_vertex(
        &mut self,
        space: SpaceId,
        vid_str: &str,
        with_edges: bool,
    ) -> Result<(), ClusterError> {
        if with_edges {
            let vid = self.vid(space, vid_str);
            let edges = self.incident_edges(space, &vid)?;
            for (etype_name, src, rank, dst) in edges {
                self.delete_edge(
                    space,
                    &etype_name,
                    &src.display_string(),
                    &dst.display_string(),
                    rank,
                )?;
            }
        }
        let (part, cmd) = super::build_delete_vertex(self.catalog(), space, vid_str)?;
        match self.run_op(ClientOp::Part { space, part, cmd }, 2_000)? {
            OpResult::Part(r) => Ok(r?),
            other => panic!("{:?}", other),
        }
    }

    /// Logical incident edges of a vid: out-edges plus in-edges (the
    /// latter reported with their true src on the far side).
    fn incident_edges(
        &self,
        space: SpaceId,
        vid: &Vid,
    ) -> Result<Vec<(String, Vid, Rank, Vid)>, ClusterError> {
        let s = self.catalog().space(space).expect("space");
        let spec = NeighborsSpec {
            directions: vec![crate::codec::Direction::Out, crate::codec::Direction::In],
            edge_types: s
                .edges
                .values()
                .map(|e| reads::EdgeTypeSpec { id: e.id, name: e.name.clone(), schema: e.clone() })
                .collect(),
            return_props: Vec::new(),
            filter: None,
            limit: None,
        };
        let rows = self.get_neighbors(space, std::slice::from_ref(vid), &spec)?;
        Ok(rows.into_iter().map(|r| (r.type_name, r.src, r.rank, r.dst)).collect())
    }

    #[allow(clippy::too_many_arguments)]
    pub fn insert_edge(
        &mut self,
        space: SpaceId,
        etype: &str,
        src: &str,
        dst: &str,
        rank: Rank,
        names: &[String],
        values: &[PropertyValue],
        if_not_exists: bool,
    ) -> Result<(), ClusterError> {
        let spec = super::build_edge_op(
            self.catalog(),
            space,
            etype,
            src,
            dst,
            rank,
            names,
            values,
            if_not_exists,
            false,
        )?;
        match self.run_op(ClientOp::Edge(spec), 4_000)? {
            OpResult::Edge(r) => Ok(r?),
            other => panic!("{:?}", other),
        }
    }

    pub fn delete_edge(
        &mut self,
        space: SpaceId,
        etype: &str,
        src: &str,
        dst: &str,
        rank: Rank,
    ) -> Result<(), ClusterError> {
        let spec = super::build_edge_op(
            self.catalog(),
            space,
            etype,
            src,
            dst,
            rank,
            &[],
            &[],
            false,
            true,
        )?;
        match self.run_op(ClientOp::Edge(spec), 4_000)? {
            OpResult::Edge(r) => Ok(r?),
            other => panic!("{:?}", other),
        }
    }

    pub fn rebuild_index(&mut self, space: SpaceId, index: &str) -> Result<(), ClusterError> {
        let cmds = super::build_rebuild_index(self.catalog(), space, index)?;
        let ops =
            cmds.into_iter().map(|(part, cmd)| ClientOp::Part { space, part, cmd }).collect();
        for r in self.run_ops(ops, 4_000)? {
            match r {
                OpResult::Part(r) => r?,
                other => panic!("{:?}", other),
            };
        }
        Ok(())
    }

    // -- reads ------------------------------------------------------------------

    pub fn get_neighbors(
        &self,
        space: SpaceId,
        vids: &[Vid],
        spec: &NeighborsSpec,
    ) -> Result<Vec<NeighborRow>, ClusterError> {
        use rayon::prelude::*;
        let catalog = self.catalog();
        let with_parts: Vec<(&Vid, PartId)> = vids
            .iter()
            .map(|v| (v, catalog.partition_for_vid(space, v).unwrap()))
            .collect();
        let vid_len = catalog.space(space).expect("space").def.vid_len as usize;
        // resolve leader stores up front; the parallel fan-out below only reads
        let mut stores: BTreeMap<PartId, &PartitionStore> = BTreeMap::new();
        for (_, part) in &with_parts {
            if !stores.contains_key(part) {
                stores.insert(*part, self.leader_store(space, *part)?);
            }
        }
        let per_vid: Result<Vec<Vec<NeighborRow>>, StorageError> = with_parts
            .par_iter()
            .map(|(vid, part)| reads::get_neighbors_part(stores[part], *part, vid_len, vid, spec))
            .collect();
        Ok(per_vid?.into_iter().flatten().collect())
    }

    pub fn get_vertex_tag(
        &self,
        space: SpaceId,
        vid: &Vid,
        tag_name: &str,
    ) -> Result<Option<Vec<PropertyValue>>, ClusterError> {
        let catalog = self.catalog();
        let s = catalog.space(space).expect("space");
        let schema = s
            .tag_by_name(tag_name)
            .ok_or_else(|| StorageError::UnknownTag(tag_name.into()))?;
        let part = catalog.partition_for_vid(space, vid).unwrap();
        let store = self.leader_store(space, part)?;
        Ok(reads::get_vertex_tag(store, part, vid, schema.id, schema)?)
    }

    pub fn get_edge_props(
        &self,
        space: SpaceId,
        etype: &str,
        src: &Vid,
        rank: Rank,
        dst: &Vid,
    ) -> Result<Option<Vec<PropertyValue>>, ClusterError> {
        let catalog = self.catalog();
        let s = catalog.space(space).expect("space");
        let schema = s
            .edge_by_name(etype)
            .ok_or_else(|| StorageError::UnknownEdgeType(etype.into()))?;
        let part = catalog.partition_for_vid(space, src).unwrap();
        let store = self.leader_store(space, part)?;
        Ok(reads::get_edge_props(store, part, src, schema.id, rank, dst, schema)?)
    }

    /// Index scan across every partition of the space.
    pub fn index_scan(
        &self,
        space: SpaceId,
        index_name: &str,
        spec: &ScanSpec,
    ) -> Result<Vec<IndexRef>, ClusterError> {
        let catalog = self.catalog();
        let s = catalog.space(space).expect("space");
        let index = s
            .index_by_name(index_name)
            .ok_or_else(|| StorageError::UnknownIndex(index_name.into()))?;
        let vid_len = s.def.vid_len as usize;
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = self.leader_store(space, part)?;
            out.extend(reads::index_scan_part(store, part, vid_len, index, spec)?);
        }
        Ok(out)
    }

    pub fn full_scan_tag(
        &self,
        space: SpaceId,
        tag_name: &str,
    ) -> Result<Vec<(Vid, Vec<PropertyValue>)>, ClusterError> {
        let catalog = self.catalog();
        let s = catalog.space(space).expect("space");
        let schema = s
            .tag_by_name(tag_name)
            .ok_or_else(|| StorageError::UnknownTag(tag_name.into()))?;
        let vid_len = s.def.vid_len as usize;
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = self.leader_store(space, part)?;
            out.extend(reads::full_scan_tag(store, part, vid_len, schema.id, schema)?);
        }
        Ok(out)
    }

    pub fn full_scan_edges(
        &self,
        space: SpaceId,
        etype_name: &str,
    ) -> Result<Vec<(Vid, Rank, Vid, Vec<PropertyValue>)>, ClusterError> {
        let catalog = self.catalog();
        let s = catalog.space(space).expect("space");
        let schema = s
            .edge_by_name(etype_name)
            .ok_or_else(|| StorageError::UnknownEdgeType(etype_name.into()))?;
        let vid_len = s.def.vid_len as usize;
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = self.leader_store(space, part)?;
            out.extend(reads::full_scan_edges(store, part, vid_len, schema.id, schema)?);
        }
        Ok(out)
    }

    pub fn vertex_exists(&self, space: SpaceId, vid: &Vid) -> Result<bool, ClusterError> {
        let part = self.partition_of(space, vid);
        let store = self.leader_store(space, part)?;
        Ok(reads::vertex_exists(store, part, vid))
    }

    // -- audits -----------------------------------------------------------------

    /// Steps until no coordinator has pending ops, no leader has live
    /// TOSS entries, and every group's log is fully committed and
    /// applied on all live hosts (heartbeats keep flowing; they don't
    /// count as activity).
    pub fn quiesce(&mut self, max: Tick) -> bool {
        let mut calm = 0;
        for _ in 0..max {
            self.step();
            let busy = self.hosts.values().any(|s| {
                s.up
                    && (s.host.has_pending_ops()
                        || s.host.meta_raft.commit_index() != s.host.meta_raft.last_index()
                        || s.host.groups.values().any(|g| {
                            !g.toss.is_empty()
                                || g.raft.commit_index() != g.raft.last_index()
                        }))
            });
            if busy {
                calm = 0;
            } else {
                calm += 1;
                if calm >= 8 {
                    return true;
                }
            }
        }
        false
    }

    /// Count of lock records left anywhere in the space (zero at
    /// quiescence).
    pub fn lock_residue(&self, space: SpaceId) -> usize {
        let catalog = self.catalog();
        let Some(s) = catalog.space(space) else { return 0 };
        let vid_len = s.def.vid_len as usize;
        let mut count = 0;
        for &part in s.parts.keys() {
            if let Ok(store) = self.leader_store(space, part) {
                count += crate::storage::surviving_locks(store, part, vid_len).len();
            }
        }
        count
    }

    /// Full-store content hash (data + index keys) across all partitions
    /// of a space.
    pub fn space_data_hash(&self, space: SpaceId) -> u64 {
        use std::hash::{Hash, Hasher};
        let catalog = self.catalog();
        let Some(s) = catalog.space(space) else { return 0 };
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for &part in s.parts.keys() {
            if let Ok(store) = self.leader_store(space, part) {
                for (k, v) in store.scan_prefix(&[], None) {
                    if k.first() == Some(&crate::codec::KIND_DATA)
                        || k.first() == Some(&crate::codec::KIND_INDEX)
                    {
                        k.hash(&mut h);
                        v.hash(&mut h);
                    }
                }
            }
        }
        h.finish()
    }

    /// Executes BALANCE DATA: plans moves, restarts affected groups with
    /// the new member sets, and commits the map changes through meta.
    pub fn balance_data(&mut self) -> Result<usize, ClusterError> {
        self.meta_op(MetaCommand::BalanceBegin)?;
        let plan = crate::meta::compute_balance_plan(self.catalog());
        let count = plan.len();
        for mv in plan {
            // stop-copy: snapshot the replica's store and log before the
            // map change drops it from the source host
            self.quiesce(2_000);
            let copied = self.hosts.get_mut(&mv.from).and_then(|slot| {
                slot.host.groups.get_mut(&(mv.space, mv.part)).map(|g| {
                    let snap = g.store.checkpoint().expect("checkpoint");
                    let (term, log) = g.raft.durable_state();
                    let applied = crate::storage::applied_index(&g.store, g.part);
                    (snap, term, log, applied, g.vid_len)
                })
            });
            let (space, part, to) = (mv.space, mv.part, mv.to);
            self.meta_op(MetaCommand::ApplyBalanceMove { mv })?;
            self.quiesce(2_000);
            // install the copy on the target (sync_groups made the shell)
            if let Some((snap, term, log, applied, _vid_len)) = copied {
                let seed = self.seed.wrapping_add(to as u64 * 977);
                if let Some(slot) = self.hosts.get_mut(&to) {
                    if let Some(g) = slot.host.groups.get_mut(&(space, part)) {
                        g.store.restore(&snap).expect("restore snapshot");
                        let config = g.raft.config().clone();
                        g.raft = crate::raft::RaftNode::from_durable(
                            to, config, seed, term, log, applied,
                        );
                    }
                }
            }
            // let the reshaped group elect and catch up before the next move
            self.quiesce(2_000);
        }
        self.meta_op(MetaCommand::BalanceEnd)?;
        let spaces: Vec<SpaceId> = self.catalog().spaces.keys().copied().collect();
        for s in spaces {
            self.wait_space_leaders(s, 4_000);
        }
        Ok(count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{self, Direction, GraphKey};
    use crate::meta::SchemaKind;
    use crate::value::{PropertyType as T, PropertyValue as V};

    fn strings(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn cluster_with_space(hosts: u32, parts: u32, rf: u32, seed: u64) -> (SimCluster, SpaceId) {
        let mut c = SimCluster::new(hosts, seed);
        c.bootstrap().unwrap();
        let space = c.create_space("g", parts, rf, 8).unwrap();
        // tag-a (pa-1, pa-2, pa-3), tag-b (pb-1, pb-2), edge likes(weight)
        c.meta_op(MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "tag-a".into(),
            props: vec![
                codec::PropertyDef::new("pa-1", T::String),
                codec::PropertyDef::new("pa-2", T::String),
                codec::PropertyDef::new("pa-3", T::String),
            ],
            if_not_exists: false,
        })
        .unwrap();
        c.meta_op(MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "tag-b".into(),
            props: vec![
                codec::PropertyDef::new("pb-1", T::String),
                codec::PropertyDef::new("pb-2", T::String),
            ],
            if_not_exists: false,
        })
        .unwrap();
        c.meta_op(MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Edge,
            name: "likes".into(),
            props: vec![codec::PropertyDef::new("weight", T::Int64)],
            if_not_exists: false,
        })
        .unwrap();
        (c, space)
    }

    fn insert_table_vertices(c: &mut SimCluster, space: SpaceId) {
        c.insert_vertex(
            space,
            "50",
            &[(
                "tag-a".into(),
                strings(&["pa-1", "pa-2", "pa-3"]),
                vec![V::Str("ta-1".into()), V::Str("ta-2".into()), V::Str("ta-3".into())],
            )],
            false,
        )
        .unwrap();
        c.insert_vertex(
            space,
            "50",
            &[(
                "tag-b".into(),
                strings(&["pb-1", "pb-2"]),
                vec![V::Str("tb-1".into()), V::Str("tb-2".into())],
            )],
            false,
        )
        .unwrap();
        c.insert_vertex(
            space,
            "60",
            &[(
                "tag-b".into(),
                strings(&["pb-1", "pb-2"]),
                vec![V::Str("tb-1".into()), V::Str("tb-2".into())],
            )],
            false,
        )
        .unwrap();
    }

    /// All data keys across all partitions, decoded.
    fn all_data_keys(c: &SimCluster, space: SpaceId) -> Vec<GraphKey> {
        let s = c.catalog().space(space).unwrap().clone();
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = c.leader_store(space, part).unwrap();
            for k in store.scan_prefix_keys(&codec::part_prefix(codec::KIND_DATA, part), None) {
                out.push(GraphKey::decode(&k, s.def.vid_len as usize).unwrap());
            }
        }
        out
    }

    #[test]
    fn create_space_elects_all_partition_leaders() {
        let (c, space) = cluster_with_space(3, 4, 3, 1);
        let s = c.catalog().space(space).unwrap();
        assert_eq!(s.parts.len(), 4);
        for &p in s.parts.keys() {
            assert!(c.leader_of(space, p).is_some());
        }
    }

    #[test]
    fn worked_example_inserts_make_five_data_rows() {
        let (mut c, space) = cluster_with_space(3, 4, 3, 2);
        insert_table_vertices(&mut c, space);
        c.quiesce(500);
        let keys = all_data_keys(&c, space);
        // 2 vertex markers + 3 tag rows
        let markers = keys.iter().filter(|k| matches!(k, GraphKey::Vertex { .. })).count();
        let tags = keys.iter().filter(|k| matches!(k, GraphKey::Tag { .. })).count();
        assert_eq!((markers, tags), (2, 3), "{keys:?}");

        // vid 50 carries tag-a and tag-b rows; values round-trip
        let row = c.get_vertex_tag(space, &c.vid(space, "50"), "tag-a").unwrap().unwrap();
        assert_eq!(
            row,
            vec![V::Str("ta-1".into()), V::Str("ta-2".into()), V::Str("ta-3".into())]
        );
        // re-insert same row is idempotent
        insert_table_vertices(&mut c, space);
        c.quiesce(500);
        assert_eq!(all_data_keys(&c, space).len(), 5);
    }

    #[test]
    fn edge_insert_writes_both_twins_atomically() {
        let (mut c, space) = cluster_with_space(3, 4, 3, 3);
        c.insert_edge(space, "likes", "a", "b", Rank(0), &strings(&["weight"]), &[V::Int64(7)], false)
            .unwrap();
        assert!(c.quiesce(1_000));
        assert_eq!(c.lock_residue(space), 0);

        let vid_a = c.vid(space, "a");
        let vid_b = c.vid(space, "b");
        let (pa, pb) = (c.partition_of(space, &vid_a), c.partition_of(space, &vid_b));
        let out_key = codec::encode_edge_key(pa, &vid_a, Direction::Out, 1, Rank(0), &vid_b);
        let in_key = codec::encode_edge_key(pb, &vid_b, Direction::In, 1, Rank(0), &vid_a);
        let out_val = c.leader_store(space, pa).unwrap().get(&out_key).expect("out twin");
        let in_val = c.leader_store(space, pb).unwrap().get(&in_key).expect("in twin");
        assert_eq!(out_val, in_val);

        // reverse traversal sees it
        let s = c.catalog().space(space).unwrap();
        let likes = s.edge_by_name("likes").unwrap().clone();
        let spec = NeighborsSpec {
            directions: vec![Direction::In],
            edge_types: vec![reads::EdgeTypeSpec { id: likes.id, name: "likes".into(), schema: likes }],
            return_props: vec![],
            filter: None,
            limit: None,
        };
        let rows = c.get_neighbors(space, &[vid_b], &spec).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].src.display_string(), "a");
        assert_eq!(rows[0].dst.display_string(), "b");
        assert_eq!(rows[0].neighbor.display_string(), "a");
    }

    #[test]
    fn same_partition_edge_still_completes() {
        let (mut c, space) = cluster_with_space(2, 1, 2, 4);
        c.insert_edge(space, "likes", "x", "y", Rank(5), &strings(&["weight"]), &[V::Int64(1)], false)
            .unwrap();
        assert!(c.quiesce(1_000));
        assert_eq!(c.lock_residue(space), 0);
        let vx = c.vid(space, "x");
        let vy = c.vid(space, "y");
        let p = c.partition_of(space, &vx);
        assert_eq!(p, c.partition_of(space, &vy)); // single partition space
        let store = c.leader_store(space, p).unwrap();
        let out_key = codec::encode_edge_key(p, &vx, Direction::Out, 1, Rank(5), &vy);
        let in_key = codec::encode_edge_key(p, &vy, Direction::In, 1, Rank(5), &vx);
        assert!(store.contains(&out_key) && store.contains(&in_key));
    }

    #[test]
    fn insert_edge_if_not_exists_short_circuits() {
        let (mut c, space) = cluster_with_space(2, 2, 2, 5);
        for _ in 0..2 {
            c.insert_edge(
                space,
                "likes",
                "p",
                "q",
                Rank(0),
                &strings(&["weight"]),
                &[V::Int64(1)],
                true,
            )
            .unwrap();
        }
        c.quiesce(500);
        let edges = c.full_scan_edges(space, "likes").unwrap();
        assert_eq!(edges.len(), 1);
    }

    #[test]
    fn deletes_remove_both_directions_and_markers() {
        let (mut c, space) = cluster_with_space(2, 4, 2, 6);
        c.insert_vertex(space, "v1", &[], false).unwrap();
        c.insert_vertex(space, "v2", &[], false).unwrap();
        c.insert_edge(space, "likes", "v1", "v2", Rank(0), &strings(&["weight"]), &[V::Int64(2)], false)
            .unwrap();
        c.quiesce(500);
        c.delete_edge(space, "likes", "v1", "v2", Rank(0)).unwrap();
        c.quiesce(500);
        assert!(c.full_scan_edges(space, "likes").unwrap().is_empty());
        assert_eq!(c.lock_residue(space), 0);

        // delete absent edge is a no-op success
        c.delete_edge(space, "likes", "v1", "v2", Rank(0)).unwrap();

        c.delete_vertex(space, "v1", false).unwrap();
        c.quiesce(500);
        assert!(!c.vertex_exists(space, &c.vid(space, "v1")).unwrap());
    }

    #[test]
    fn vertex_update_refreshes_index_entries() {
        let (mut c, space) = cluster_with_space(2, 2, 2, 7);
        c.meta_op(MetaCommand::CreateIndex {
            space,
            kind: SchemaKind::Tag,
            name: "i-b".into(),
            target: "tag-b".into(),
            props: vec!["pb-2".into()],
            if_not_exists: false,
        })
        .unwrap();
        let tagb = |v: &str| {
            (
                "tag-b".to_string(),
                strings(&["pb-1", "pb-2"]),
                vec![V::Str("x".into()), V::Str(v.into())],
            )
        };
        c.insert_vertex(space, "50", &[tagb("old")], false).unwrap();
        c.quiesce(300);
        let hits = c
            .index_scan(space, "i-b", &ScanSpec::FullEquality(vec![V::Str("old".into())]))
            .unwrap();
        assert_eq!(hits.len(), 1);

        c.insert_vertex(space, "50", &[tagb("new")], false).unwrap();
        c.quiesce(300);
        let old_hits = c
            .index_scan(space, "i-b", &ScanSpec::FullEquality(vec![V::Str("old".into())]))
            .unwrap();
        let new_hits = c
            .index_scan(space, "i-b", &ScanSpec::FullEquality(vec![V::Str("new".into())]))
            .unwrap();
        assert!(old_hits.is_empty());
        assert_eq!(new_hits, vec![IndexRef::Vertex(c.vid(space, "50"))]);
    }

    fn lock_present_anywhere(c: &SimCluster, space: SpaceId, lock_key: &[u8]) -> bool {
        c.hosts.values().any(|s| {
            s.host
                .groups
                .iter()
                .any(|((sp, _), g)| *sp == space && g.store.contains(lock_key))
        })
    }

    #[test]
    fn crash_after_lock_rolls_forward() {
        let (mut c, space) = cluster_with_space(3, 4, 3, 8);
        let vid_a = c.vid(space, "a");
        let vid_b = c.vid(space, "b");
        let out_part = c.partition_of(space, &vid_a);
        let in_part = c.partition_of(space, &vid_b);
        let lock_key = codec::encode_lock_key(out_part, &vid_a, 1, Rank(0));

        let spec = super::super::build_edge_op(
            c.catalog(),
            space,
            "likes",
            "a",
            "b",
            Rank(0),
            &strings(&["weight"]),
            &[V::Int64(9)],
            false,
            false,
        )
        .unwrap();
        // coordinate from a host that will survive the crash
        let leader_now = c.leader_of(space, out_part).unwrap();
        let coord = (1..=3).find(|&h| h != leader_now).unwrap();
        let op_id = c.host_mut(coord).submit(ClientOp::Edge(spec));

        // run until the lock record is durable, then kill the out-leader
        assert!(c.run_until(2_000, |c| lock_present_anywhere(c, space, &lock_key)));
        let leader = c.leader_of(space, out_part).unwrap();
        if leader == coord {
            // leadership moved onto the coordinator; crash it anyway and
            // drive the check on store state only
            c.crash_host(leader, 400);
            assert!(c.run_until(8_000, |c| c.lock_residue(space) == 0));
            return;
        }
        c.crash_host(leader, 400);

        // the client op eventually succeeds (retries through recovery)
        let done = c.run_until(8_000, |c| {
            c.hosts[&coord].host.results_contains(op_id)
        });
        assert!(done, "edge op never completed");
        assert!(c.quiesce(2_000));
        assert_eq!(c.lock_residue(space), 0);
        let out_key = codec::encode_edge_key(out_part, &vid_a, Direction::Out, 1, Rank(0), &vid_b);
        let in_key = codec::encode_edge_key(in_part, &vid_b, Direction::In, 1, Rank(0), &vid_a);
        let out_val = c.leader_store(space, out_part).unwrap().get(&out_key).expect("out twin");
        let in_val = c.leader_store(space, in_part).unwrap().get(&in_key).expect("in twin");
        assert_eq!(out_val, in_val);
    }

    #[test]
    fn crash_after_in_write_rolls_forward() {
        let (mut c, space) = cluster_with_space(3, 4, 3, 9);
        let vid_a = c.vid(space, "a");
        let vid_b = c.vid(space, "b");
        let out_part = c.partition_of(space, &vid_a);
        let in_part = c.partition_of(space, &vid_b);
        let in_key = codec::encode_edge_key(in_part, &vid_b, Direction::In, 1, Rank(0), &vid_a);

        let spec = super::super::build_edge_op(
            c.catalog(),
            space,
            "likes",
            "a",
            "b",
            Rank(0),
            &strings(&["weight"]),
            &[V::Int64(3)],
            false,
            false,
        )
        .unwrap();
        let leader_now = c.leader_of(space, out_part).unwrap();
        let coord = (1..=3).find(|&h| h != leader_now).unwrap();
        let op_id = c.host_mut(coord).submit(ClientOp::Edge(spec));

        // wait for TOSS step 2 (in-edge durable), then kill the out-leader
        let in_written = c.run_until(2_000, |c| {
            c.hosts.values().any(|s| {
                s.host
                    .groups
                    .get(&(space, in_part))
                    .map_or(false, |g| g.store.contains(&in_key))
            })
        });
        assert!(in_written);
        let leader = c.leader_of(space, out_part).unwrap();
        if leader == coord {
            c.crash_host(leader, 400);
            assert!(c.run_until(8_000, |c| c.lock_residue(space) == 0));
            return;
        }
        c.crash_host(leader, 400);

        let done = c.run_until(8_000, |c| c.hosts[&coord].host.results_contains(op_id));
        assert!(done, "edge op never completed");
        assert!(c.quiesce(2_000));
        assert_eq!(c.lock_residue(space), 0);
        let out_key = codec::encode_edge_key(out_part, &vid_a, Direction::Out, 1, Rank(0), &vid_b);
        assert!(c.leader_store(space, out_part).unwrap().contains(&out_key));
        assert!(c.leader_store(space, in_part).unwrap().contains(&in_key));
    }

    #[test]
    fn concurrent_same_lock_inserts_serialize() {
        let (mut c, space) = cluster_with_space(2, 2, 2, 10);
        // same (src, edge type, rank), two destinations: they serialize
        // through the lock and both edges land
        let mk = |c: &SimCluster, dst: &str| {
            super::super::build_edge_op(
                c.catalog(),
                space,
                "likes",
                "hub",
                dst,
                Rank(0),
                &strings(&["weight"]),
                &[V::Int64(1)],
                false,
                false,
            )
            .unwrap()
        };
        let spec1 = mk(&c, "d1");
        let spec2 = mk(&c, "d2");
        let op1 = c.host_mut(1).submit(ClientOp::Edge(spec1));
        let op2 = c.host_mut(1).submit(ClientOp::Edge(spec2));
        let done = c.run_until(6_000, |c| {
            c.hosts[&1].host.results_contains(op1) && c.hosts[&1].host.results_contains(op2)
        });
        assert!(done);
        assert!(c.quiesce(1_000));
        let edges = c.full_scan_edges(space, "likes").unwrap();
        assert_eq!(edges.len(), 2);
        assert_eq!(c.lock_residue(space), 0);
    }

    #[test]
    fn balance_levels_part_counts_and_preserves_data() {
        let (mut c, space) = cluster_with_space(3, 12, 1, 11);
        insert_table_vertices(&mut c, space);
        for i in 0..20 {
            c.insert_vertex(space, &format!("v{i}"), &[], false).unwrap();
        }
        c.quiesce(500);
        let before = c.space_data_hash(space);

        // a fourth host joins; balance should land at 3 parts each
        c.add_host(4).unwrap();
        let moves = c.balance_data().unwrap();
        assert!(moves > 0);
        let counts = c.catalog().part_counts(space);
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![3, 3, 3, 3]);
        assert_eq!(c.space_data_hash(space), before);
    }

    #[test]
    fn restarted_host_rebuilds_catalog_from_meta_log() {
        let (mut c, space) = cluster_with_space(3, 2, 3, 12);
        c.crash_host(3, 300);
        c.meta_op(MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "late".into(),
            props: vec![codec::PropertyDef::new("p", T::Int64)],
            if_not_exists: false,
        })
        .unwrap();
        c.run_ticks(400);
        assert!(c.is_up(3));
        assert!(c.quiesce(2_000));
        assert!(c.host(3).catalog.space(space).unwrap().tag_by_name("late").is_some());
    }

    #[test]
    fn alter_keeps_old_rows_readable() {
        let (mut c, space) = cluster_with_space(2, 2, 2, 13);
        c.insert_vertex(
            space,
            "old-row",
            &[(
                "tag-b".into(),
                strings(&["pb-1", "pb-2"]),
                vec![V::Str("1".into()), V::Str("2".into())],
            )],
            false,
        )
        .unwrap();
        c.meta_op(MetaCommand::AlterSchema {
            space,
            kind: SchemaKind::Tag,
            name: "tag-b".into(),
            add: vec![codec::PropertyDef::nullable("pb-3", T::Int64)],
            drop: vec![],
        })
        .unwrap();
        c.quiesce(300);
        let row = c.get_vertex_tag(space, &c.vid(space, "old-row"), "tag-b").unwrap().unwrap();
        assert_eq!(row, vec![V::Str("1".into()), V::Str("2".into()), V::Null]);
    }
}
