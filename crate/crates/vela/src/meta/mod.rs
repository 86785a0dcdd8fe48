//! The Meta Service state machine: schema catalog, index catalog,
//! space/partition map, users, and cluster administration, replicated
//! through a single Raft group.
//!
//! `Catalog::apply` is the deterministic state-machine transition; the
//! cluster layer proposes `MetaCommand`s through the meta Raft group and
//! reads leader-local state. Validation errors surface in the proposal
//! response; the catalog never half-applies a command.

mod catalog;

pub use catalog::{
    fnv1a64, Catalog, HostId, HostInfo, HostStatus, IndexDef, IndexTarget, SchemaDef,
    SlowQueryEntry, SpaceCatalog, SpaceDef, UserInfo, UserRole,
};

use crate::codec::{PartId, PropertyDef, SpaceId};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error, Serialize, Deserialize)]
pub enum MetaError {
    #[error("name '{0}' already exists")]
    DuplicateName(String),
    #[error("space '{0}' not found")]
    UnknownSpace(String),
    #[error("tag '{0}' not found")]
    UnknownTag(String),
    #[error("edge type '{0}' not found")]
    UnknownEdge(String),
    #[error("index '{0}' not found")]
    UnknownIndex(String),
    #[error("host {0} not found")]
    UnknownHost(HostId),
    #[error("user '{0}' not found")]
    UnknownUser(String),
    #[error("query {0} is not running")]
    UnknownQueryId(u64),
    #[error("index '{0}' depends on this schema")]
    DependentIndexExists(String),
    #[error("host {0} still holds the only replica of a partition")]
    HostNotEmpty(HostId),
    #[error("a balance operation is already in progress")]
    BalanceInProgress,
    #[error("replica factor {rf} exceeds online hosts {hosts}")]
    NotEnoughHosts { rf: u32, hosts: u32 },
    #[error("{0}")]
    TypeError(String),
    #[error("property '{0}' not found")]
    UnknownProperty(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SchemaKind {
    Tag,
    Edge,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceMove {
    pub space: SpaceId,
    pub part: PartId,
    pub from: HostId,
    pub to: HostId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetaCommand {
    AddHost { host: HostId },
    RemoveHost { host: HostId },
    SetHostStatus { host: HostId, status: HostStatus },
    CreateSpace {
        name: String,
        partition_num: u32,
        replica_factor: u32,
        vid_len: u32,
        if_not_exists: bool,
    },
    DropSpace { name: String },
    CreateSchema {
        space: SpaceId,
        kind: SchemaKind,
        name: String,
        props: Vec<PropertyDef>,
        if_not_exists: bool,
    },
    AlterSchema {
        space: SpaceId,
        kind: SchemaKind,
        name: String,
        add: Vec<PropertyDef>,
        drop: Vec<String>,
    },
    DropSchema { space: SpaceId, kind: SchemaKind, name: String },
    CreateIndex {
        space: SpaceId,
        kind: SchemaKind,
        name: String,
        target: String,
        props: Vec<String>,
        if_not_exists: bool,
    },
    DropIndex { space: SpaceId, name: String },
    RecordSlowQuery { entry: SlowQueryEntry },
    KillQuery { id: u64 },
    CreateUser { name: String, password: String, role: UserRole },
    DropUser { name: String },
    GrantRole { user: String, role: UserRole },
    RevokeRole { user: String },
    BalanceBegin,
    ApplyBalanceMove { mv: BalanceMove },
    BalanceEnd,
    RegisterSnapshot { name: String },
    /// Round-robin partition-to-listener assignment for one space.
    AttachListeners { space: SpaceId, listeners: Vec<HostId> },
    SetMetaListener { host: HostId },
    RegisterDrainer { endpoint: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MetaResponse {
    Ack,
    SpaceId(SpaceId),
    SchemaId(u32),
    IndexId(u32),
}

impl Catalog {
    pub fn apply(&mut self, cmd: &MetaCommand) -> Result<MetaResponse, MetaError> {
        use MetaCommand::*;
        match cmd {
            AddHost { host } => {
                self.hosts
                    .insert(*host, HostInfo { id: *host, status: HostStatus::Online });
                Ok(MetaResponse::Ack)
            }
            RemoveHost { host } => self.remove_host(*host),
            SetHostStatus { host, status } => {
                let h = self.hosts.get_mut(host).ok_or(MetaError::UnknownHost(*host))?;
                h.status = *status;
                Ok(MetaResponse::Ack)
            }
            CreateSpace { name, partition_num, replica_factor, vid_len, if_not_exists } => self
                .create_space(name, *partition_num, *replica_factor, *vid_len, *if_not_exists),
            DropSpace { name } => {
                let id = self
                    .space_by_name(name)
                    .map(|s| s.def.space_id)
                    .ok_or_else(|| MetaError::UnknownSpace(name.clone()))?;
                self.spaces.remove(&id);
                Ok(MetaResponse::Ack)
            }
            CreateSchema { space, kind, name, props, if_not_exists } => {
                self.create_schema(*space, *kind, name, props, *if_not_exists)
            }
            AlterSchema { space, kind, name, add, drop } => {
                self.alter_schema(*space, *kind, name, add, drop)
            }
            DropSchema { space, kind, name } => self.drop_schema(*space, *kind, name),
            CreateIndex { space, kind, name, target, props, if_not_exists } => {
                self.create_index(*space, *kind, name, target, props, *if_not_exists)
            }
            DropIndex { space, name } => {
                let s = self.space_mut(*space)?;
                let id = s
                    .index_by_name(name)
                    .map(|i| i.index_id)
                    .ok_or_else(|| MetaError::UnknownIndex(name.clone()))?;
                s.indexes.remove(&id);
                Ok(MetaResponse::Ack)
            }
            RecordSlowQuery { entry } => {
                self.slow_queries.push(entry.clone());
                Ok(MetaResponse::Ack)
            }
            KillQuery { id } => {
                self.killed_queries.insert(*id);
                Ok(MetaResponse::Ack)
            }
            CreateUser { name, password, role } => {
                if self.users.contains_key(name) {
                    return Err(MetaError::DuplicateName(name.clone()));
                }
                self.users.insert(
                    name.clone(),
                    UserInfo { name: name.clone(), password: password.clone(), role: *role },
                );
                Ok(MetaResponse::Ack)
            }
            DropUser { name } => {
                self.users.remove(name).ok_or_else(|| MetaError::UnknownUser(name.clone()))?;
                Ok(MetaResponse::Ack)
            }
            GrantRole { user, role } => {
                let u =
                    self.users.get_mut(user).ok_or_else(|| MetaError::UnknownUser(user.clone()))?;
                u.role = *role;
                Ok(MetaResponse::Ack)
            }
            RevokeRole { user } => {
                let u =
                    self.users.get_mut(user).ok_or_else(|| MetaError::UnknownUser(user.clone()))?;
                u.role = UserRole::User;
                Ok(MetaResponse::Ack)
            }
            BalanceBegin => {
                if self.balance_in_progress {
                    return Err(MetaError::BalanceInProgress);
                }
                self.balance_in_progress = true;
                Ok(MetaResponse::Ack)
            }
            ApplyBalanceMove { mv } => {
                let s = self.space_mut(mv.space)?;
                let hosts = s
                    .parts
                    .get_mut(&mv.part)
                    .ok_or_else(|| MetaError::UnknownSpace(format!("part {}", mv.part)))?;
                if let Some(pos) = hosts.iter().position(|&h| h == mv.from) {
                    hosts[pos] = mv.to;
                }
                Ok(MetaResponse::Ack)
            }
            BalanceEnd => {
                self.balance_in_progress = false;
                Ok(MetaResponse::Ack)
            }
            RegisterSnapshot { name } => {
                self.snapshots.push(name.clone());
                Ok(MetaResponse::Ack)
            }
            AttachListeners { space, listeners } => {
                let parts: Vec<PartId> = self
                    .spaces
                    .get(space)
                    .ok_or_else(|| MetaError::UnknownSpace(format!("#{space}")))?
                    .parts
                    .keys()
                    .copied()
                    .collect();
                let mut assignment: BTreeMap<PartId, Vec<HostId>> = BTreeMap::new();
                if !listeners.is_empty() {
                    for (i, part) in parts.iter().enumerate() {
                        assignment.insert(*part, vec![listeners[i % listeners.len()]]);
                    }
                }
                self.listener_assignment.insert(*space, assignment);
                Ok(MetaResponse::Ack)
            }
            SetMetaListener { host } => {
                if !self.hosts.contains_key(host) {
                    return Err(MetaError::UnknownHost(*host));
                }
                self.meta_listener = Some(*host);
                Ok(MetaResponse::Ack)
            }
            RegisterDrainer { endpoint } => {
                if !self.drainers.contains(endpoint) {
                    self.drainers.push(endpoint.clone());
                }
                Ok(MetaResponse::Ack)
            }
        }
    }

    fn space_mut(&mut self, id: SpaceId) -> Result<&mut SpaceCatalog, MetaError> {
        self.spaces.get_mut(&id).ok_or_else(|| MetaError::UnknownSpace(format!("#{id}")))
    }

    fn create_space(
        &mut self,
        name: &str,
        partition_num: u32,
        replica_factor: u32,
        vid_len: u32,
        if_not_exists: bool,
    ) -> Result<MetaResponse, MetaError> {
        if let Some(existing) = self.space_by_name(name) {
            if if_not_exists {
                return Ok(MetaResponse::SpaceId(existing.def.space_id));
            }
            return Err(MetaError::DuplicateName(name.into()));
        }
        let online = self.online_hosts();
        if (online.len() as u32) < replica_factor || online.is_empty() {
            return Err(MetaError::NotEnoughHosts {
                rf: replica_factor,
                hosts: online.len() as u32,
            });
        }
        let space_id = self.next_space_id;
        self.next_space_id += 1;
        // round-robin placement over online hosts
        let mut parts = BTreeMap::new();
        for part in 1..=partition_num {
            let mut replicas = Vec::with_capacity(replica_factor as usize);
            for j in 0..replica_factor {
                replicas.push(online[((part - 1 + j) as usize) % online.len()]);
            }
            parts.insert(part as PartId, replicas);
        }
        self.spaces.insert(
            space_id,
            SpaceCatalog {
                def: SpaceDef {
                    name: name.into(),
                    space_id,
                    partition_num,
                    replica_factor,
                    vid_len,
                },
                tags: BTreeMap::new(),
                edges: BTreeMap::new(),
                indexes: BTreeMap::new(),
                parts,
                next_tag_id: 1,
                next_edge_id: 1,
                next_index_id: 1,
            },
        );
        Ok(MetaResponse::SpaceId(space_id))
    }

    fn remove_host(&mut self, host: HostId) -> Result<MetaResponse, MetaError> {
        if !self.hosts.contains_key(&host) {
            return Err(MetaError::UnknownHost(host));
        }
        for s in self.spaces.values() {
            for replicas in s.parts.values() {
                if replicas.len() == 1 && replicas[0] == host {
                    return Err(MetaError::HostNotEmpty(host));
                }
            }
        }
        for s in self.spaces.values_mut() {
            for replicas in s.parts.values_mut() {
                replicas.retain(|&h| h != host);
            }
        }
        self.hosts.remove(&host);
        Ok(MetaResponse::Ack)
    }

    fn validate_props(props: &[PropertyDef]) -> Result<(), MetaError> {
        let mut seen = std::collections::BTreeSet::new();
        for p in props {
            if !seen.insert(&p.name) {
                return Err(MetaError::DuplicateName(p.name.clone()));
            }
            if let Some(d) = &p.default {
                if !d.conforms_to(p.ty, p.nullable) {
                    return Err(MetaError::TypeError(format!(
                        "default for '{}' does not match {}",
                        p.name, p.ty
                    )));
                }
            }
        }
        Ok(())
    }

    fn create_schema(
        &mut self,
        space: SpaceId,
        kind: SchemaKind,
        name: &str,
        props: &[PropertyDef],
        if_not_exists: bool,
    ) -> Result<MetaResponse, MetaError> {
        Self::validate_props(props)?;
        let s = self.space_mut(space)?;
        // one namespace across tags and edge types keeps LOOKUP/FETCH
        // target resolution unambiguous
        if let Some(existing) = s.tag_by_name(name) {
            return if if_not_exists && kind == SchemaKind::Tag {
                Ok(MetaResponse::SchemaId(existing.id))
            } else {
                Err(MetaError::DuplicateName(name.into()))
            };
        }
        if let Some(existing) = s.edge_by_name(name) {
            return if if_not_exists && kind == SchemaKind::Edge {
                Ok(MetaResponse::SchemaId(existing.id))
            } else {
                Err(MetaError::DuplicateName(name.into()))
            };
        }
        let id = match kind {
            SchemaKind::Tag => {
                let id = s.next_tag_id;
                s.next_tag_id += 1;
                s.tags.insert(id, SchemaDef::new(name, id, props.to_vec()));
                id
            }
            SchemaKind::Edge => {
                let id = s.next_edge_id;
                s.next_edge_id += 1;
                s.edges.insert(id, SchemaDef::new(name, id, props.to_vec()));
                id
            }
        };
        Ok(MetaResponse::SchemaId(id))
    }

    fn alter_schema(
        &mut self,
        space: SpaceId,
        kind: SchemaKind,
        name: &str,
        add: &[PropertyDef],
        drop: &[String],
    ) -> Result<MetaResponse, MetaError> {
        Self::validate_props(add)?;
        let s = self.space_mut(space)?;
        let indexes: Vec<IndexDef> = s.indexes.values().cloned().collect();
        let def = match kind {
            SchemaKind::Tag => s
                .tags
                .values_mut()
                .find(|t| t.name == name)
                .ok_or_else(|| MetaError::UnknownTag(name.into()))?,
            SchemaKind::Edge => s
                .edges
                .values_mut()
                .find(|e| e.name == name)
                .ok_or_else(|| MetaError::UnknownEdge(name.into()))?,
        };
        let mut next = def.current().to_vec();
        for dropped in drop {
            let pos = next
                .iter()
                .position(|p| &p.name == dropped)
                .ok_or_else(|| MetaError::UnknownProperty(dropped.clone()))?;
            let target = match kind {
                SchemaKind::Tag => IndexTarget::Tag(def.id),
                SchemaKind::Edge => IndexTarget::Edge(def.id),
            };
            if let Some(idx) = indexes
                .iter()
                .find(|i| i.target == target && i.props.contains(dropped))
            {
                return Err(MetaError::DependentIndexExists(idx.name.clone()));
            }
            next.remove(pos);
        }
        for p in add {
            if next.iter().any(|q| q.name == p.name) {
                return Err(MetaError::DuplicateName(p.name.clone()));
            }
            if !p.nullable && p.default.is_none() {
                return Err(MetaError::TypeError(format!(
                    "added property '{}' must be nullable or carry a default",
                    p.name
                )));
            }
            next.push(p.clone());
        }
        def.versions.push(next);
        Ok(MetaResponse::SchemaId(def.id))
    }

    fn drop_schema(
        &mut self,
        space: SpaceId,
        kind: SchemaKind,
        name: &str,
    ) -> Result<MetaResponse, MetaError> {
        let s = self.space_mut(space)?;
        match kind {
            SchemaKind::Tag => {
                let id = s
                    .tag_by_name(name)
                    .map(|t| t.id)
                    .ok_or_else(|| MetaError::UnknownTag(name.into()))?;
                if let Some(idx) =
                    s.indexes.values().find(|i| i.target == IndexTarget::Tag(id))
                {
                    return Err(MetaError::DependentIndexExists(idx.name.clone()));
                }
                s.tags.remove(&id);
            }
            SchemaKind::Edge => {
                let id = s
                    .edge_by_name(name)
                    .map(|e| e.id)
                    .ok_or_else(|| MetaError::UnknownEdge(name.into()))?;
                if let Some(idx) =
                    s.indexes.values().find(|i| i.target == IndexTarget::Edge(id))
                {
                    return Err(MetaError::DependentIndexExists(idx.name.clone()));
                }
                s.edges.remove(&id);
            }
        }
        Ok(MetaResponse::Ack)
    }

    fn create_index(
        &mut self,
        space: SpaceId,
        kind: SchemaKind,
        name: &str,
        target_name: &str,
        props: &[String],
        if_not_exists: bool,
    ) -> Result<MetaResponse, MetaError> {
        let s = self.space_mut(space)?;
        if let Some(existing) = s.index_by_name(name) {
            if if_not_exists {
                return Ok(MetaResponse::IndexId(existing.index_id));
            }
            return Err(MetaError::DuplicateName(name.into()));
        }
        let (target, schema) = match kind {
            SchemaKind::Tag => {
                let t = s
                    .tag_by_name(target_name)
                    .ok_or_else(|| MetaError::UnknownTag(target_name.into()))?;
                (IndexTarget::Tag(t.id), t.clone())
            }
            SchemaKind::Edge => {
                let e = s
                    .edge_by_name(target_name)
                    .ok_or_else(|| MetaError::UnknownEdge(target_name.into()))?;
                (IndexTarget::Edge(e.id), e.clone())
            }
        };
        for p in props {
            let def = schema
                .current()
                .iter()
                .find(|d| &d.name == p)
                .ok_or_else(|| MetaError::UnknownProperty(p.clone()))?;
            if def.nullable {
                return Err(MetaError::TypeError(format!(
                    "indexed property '{}' must be NOT NULL",
                    p
                )));
            }
        }
        let id = s.next_index_id;
        s.next_index_id += 1;
        s.indexes.insert(
            id,
            IndexDef { name: name.into(), index_id: id, target, props: props.to_vec() },
        );
        Ok(MetaResponse::IndexId(id))
    }
}

/// Rebalancing plan: moves whole partitions until per-host counts differ
/// by at most one per space. Pure over the catalog, so leader and tests
/// agree on the plan.
pub fn compute_balance_plan(catalog: &Catalog) -> Vec<BalanceMove> {
    let mut moves = Vec::new();
    let online: Vec<HostId> = catalog.online_hosts();
    if online.is_empty() {
        return moves;
    }
    for (space_id, s) in &catalog.spaces {
        let mut counts: BTreeMap<HostId, Vec<PartId>> =
            online.iter().map(|&h| (h, Vec::new())).collect();
        for (&part, hosts) in &s.parts {
            for h in hosts {
                counts.entry(*h).or_default().push(part);
            }
        }
        loop {
            let (&max_host, _) = counts.iter().max_by_key(|(_, v)| v.len()).unwrap();
            let (&min_host, _) = counts.iter().min_by_key(|(_, v)| v.len()).unwrap();
            if counts[&max_host].len() - counts[&min_host].len() <= 1 {
                break;
            }
            let candidate = counts[&max_host]
                .iter()
                .copied()
                .find(|p| !counts[&min_host].contains(p));
            let Some(part) = candidate else { break };
            counts.get_mut(&max_host).unwrap().retain(|&p| p != part);
            counts.get_mut(&min_host).unwrap().push(part);
            moves.push(BalanceMove { space: *space_id, part, from: max_host, to: min_host });
        }
    }
    moves
}

/// Kill flags for running queries; server-local control plane, not part
/// of the replicated catalog.
#[derive(Default, Clone)]
pub struct QueryRegistry {
    inner: Arc<Mutex<BTreeMap<u64, Arc<AtomicBool>>>>,
}

impl QueryRegistry {
    pub fn new() -> QueryRegistry {
        QueryRegistry::default()
    }

    pub fn register(&self, query_id: u64) -> Arc<AtomicBool> {
        let flag = Arc::new(AtomicBool::new(false));
        self.inner.lock().unwrap().insert(query_id, flag.clone());
        flag
    }

    pub fn finish(&self, query_id: u64) {
        self.inner.lock().unwrap().remove(&query_id);
    }

    pub fn kill(&self, query_id: u64) -> Result<(), MetaError> {
        match self.inner.lock().unwrap().get(&query_id) {
            Some(flag) => {
                flag.store(true, Ordering::SeqCst);
                Ok(())
            }
            None => Err(MetaError::UnknownQueryId(query_id)),
        }
    }

    pub fn is_running(&self, query_id: u64) -> bool {
        self.inner.lock().unwrap().contains_key(&query_id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::PropertyType as T;

    fn catalog_with_hosts(n: u32) -> Catalog {
        let mut c = Catalog::new();
        for h in 1..=n {
            c.apply(&MetaCommand::AddHost { host: h }).unwrap();
        }
        c
    }

    fn create_space(c: &mut Catalog, name: &str, parts: u32, rf: u32) -> SpaceId {
        match c
            .apply(&MetaCommand::CreateSpace {
                name: name.into(),
                partition_num: parts,
                replica_factor: rf,
                vid_len: 16,
                if_not_exists: false,
            })
            .unwrap()
        {
            MetaResponse::SpaceId(id) => id,
            other => panic!("{:?}", other),
        }
    }

    #[test]
    fn create_space_makes_all_partitions() {
        let mut c = catalog_with_hosts(3);
        let id = create_space(&mut c, "big", 120, 1);
        assert_eq!(c.space(id).unwrap().parts.len(), 120);
    }

    #[test]
    fn rf_equal_to_hosts_puts_every_part_everywhere() {
        let mut c = catalog_with_hosts(3);
        let id = create_space(&mut c, "s", 12, 3);
        for hosts in c.space(id).unwrap().parts.values() {
            let mut sorted = hosts.clone();
            sorted.sort();
            assert_eq!(sorted, vec![1, 2, 3]);
        }
    }

    #[test]
    fn duplicate_space_errors_unless_if_not_exists() {
        let mut c = catalog_with_hosts(1);
        create_space(&mut c, "s", 4, 1);
        let err = c
            .apply(&MetaCommand::CreateSpace {
                name: "s".into(),
                partition_num: 4,
                replica_factor: 1,
                vid_len: 16,
                if_not_exists: false,
            })
            .unwrap_err();
        assert!(matches!(err, MetaError::DuplicateName(_)));
        let ok = c.apply(&MetaCommand::CreateSpace {
            name: "s".into(),
            partition_num: 4,
            replica_factor: 1,
            vid_len: 16,
            if_not_exists: true,
        });
        assert!(ok.is_ok());
    }

    #[test]
    fn drop_then_lookup_is_unknown_space() {
        let mut c = catalog_with_hosts(1);
        create_space(&mut c, "gone", 2, 1);
        c.apply(&MetaCommand::DropSpace { name: "gone".into() }).unwrap();
        assert!(c.space_by_name("gone").is_none());
    }

    #[test]
    fn create_edge_with_date_property() {
        let mut c = catalog_with_hosts(1);
        let space = create_space(&mut c, "s", 2, 1);
        c.apply(&MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Edge,
            name: "write_paper".into(),
            props: vec![PropertyDef::new("wtime", T::Date)],
            if_not_exists: false,
        })
        .unwrap();
        let s = c.space(space).unwrap();
        let e = s.edge_by_name("write_paper").unwrap();
        assert_eq!(e.current().len(), 1);
        assert_eq!(e.current()[0].ty, T::Date);
        // identical CREATE IF NOT EXISTS is a no-op success
        let again = c.apply(&MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Edge,
            name: "write_paper".into(),
            props: vec![PropertyDef::new("wtime", T::Date)],
            if_not_exists: true,
        });
        assert!(again.is_ok());
    }

    #[test]
    fn alter_bumps_schema_version() {
        let mut c = catalog_with_hosts(1);
        let space = create_space(&mut c, "s", 2, 1);
        c.apply(&MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "person".into(),
            props: vec![PropertyDef::new("name", T::String)],
            if_not_exists: false,
        })
        .unwrap();
        c.apply(&MetaCommand::AlterSchema {
            space,
            kind: SchemaKind::Tag,
            name: "person".into(),
            add: vec![PropertyDef::nullable("age", T::Int64)],
            drop: vec![],
        })
        .unwrap();
        let t = c.space(space).unwrap().tag_by_name("person").unwrap();
        assert_eq!(t.schema_version(), 1);
        assert_eq!(t.current().len(), 2);
    }

    #[test]
    fn dropping_indexed_tag_is_refused() {
        let mut c = catalog_with_hosts(1);
        let space = create_space(&mut c, "s", 2, 1);
        c.apply(&MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "t".into(),
            props: vec![PropertyDef::new("p", T::String)],
            if_not_exists: false,
        })
        .unwrap();
        c.apply(&MetaCommand::CreateIndex {
            space,
            kind: SchemaKind::Tag,
            name: "i".into(),
            target: "t".into(),
            props: vec!["p".into()],
            if_not_exists: false,
        })
        .unwrap();
        let err = c
            .apply(&MetaCommand::DropSchema { space, kind: SchemaKind::Tag, name: "t".into() })
            .unwrap_err();
        assert!(matches!(err, MetaError::DependentIndexExists(_)));
    }

    #[test]
    fn indexing_nullable_property_is_refused() {
        let mut c = catalog_with_hosts(1);
        let space = create_space(&mut c, "s", 2, 1);
        c.apply(&MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "t".into(),
            props: vec![PropertyDef::nullable("p", T::String)],
            if_not_exists: false,
        })
        .unwrap();
        let err = c
            .apply(&MetaCommand::CreateIndex {
                space,
                kind: SchemaKind::Tag,
                name: "i".into(),
                target: "t".into(),
                props: vec!["p".into()],
                if_not_exists: false,
            })
            .unwrap_err();
        assert!(matches!(err, MetaError::TypeError(_)));
    }

    #[test]
    fn balance_plan_levels_counts() {
        let mut c = catalog_with_hosts(3);
        let id = create_space(&mut c, "s", 12, 1);
        // skew everything onto host 1
        let s = c.spaces.get_mut(&id).unwrap();
        for hosts in s.parts.values_mut() {
            *hosts = vec![1];
        }
        let moves = compute_balance_plan(&c);
        for mv in &moves {
            c.apply(&MetaCommand::ApplyBalanceMove { mv: mv.clone() }).unwrap();
        }
        let counts = c.part_counts(id);
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![4, 4, 4]);

        // add a host and rebalance: 12 parts over 4 hosts -> 3 each
        c.apply(&MetaCommand::AddHost { host: 4 }).unwrap();
        let moves = compute_balance_plan(&c);
        for mv in &moves {
            c.apply(&MetaCommand::ApplyBalanceMove { mv: mv.clone() }).unwrap();
        }
        let counts = c.part_counts(id);
        assert_eq!(counts.values().copied().collect::<Vec<_>>(), vec![3, 3, 3, 3]);
    }

    #[test]
    fn remove_host_refuses_sole_replicas() {
        let mut c = catalog_with_hosts(2);
        create_space(&mut c, "s", 4, 1);
        let err = c.apply(&MetaCommand::RemoveHost { host: 1 }).unwrap_err();
        assert!(matches!(err, MetaError::HostNotEmpty(1)));
    }

    #[test]
    fn second_balance_while_running_is_refused() {
        let mut c = catalog_with_hosts(1);
        c.apply(&MetaCommand::BalanceBegin).unwrap();
        let err = c.apply(&MetaCommand::BalanceBegin).unwrap_err();
        assert!(matches!(err, MetaError::BalanceInProgress));
        c.apply(&MetaCommand::BalanceEnd).unwrap();
        assert!(c.apply(&MetaCommand::BalanceBegin).is_ok());
    }

    #[test]
    fn kill_registry_flags_running_queries_only() {
        let reg = QueryRegistry::new();
        let flag = reg.register(42);
        assert!(reg.kill(42).is_ok());
        assert!(flag.load(Ordering::SeqCst));
        reg.finish(42);
        assert!(matches!(reg.kill(42), Err(MetaError::UnknownQueryId(42))));
        assert!(matches!(reg.kill(7), Err(MetaError::UnknownQueryId(7))));
    }

    #[test]
    fn catalog_dumps_and_loads_as_json() {
        let mut c = catalog_with_hosts(2);
        let space = create_space(&mut c, "s", 4, 2);
        c.apply(&MetaCommand::CreateSchema {
            space,
            kind: SchemaKind::Tag,
            name: "t".into(),
            props: vec![PropertyDef::new("p", T::Int64)],
            if_not_exists: false,
        })
        .unwrap();
        let json = c.dump_json();
        let back = Catalog::load_json(&json).unwrap();
        assert_eq!(back, c);
    }
}
