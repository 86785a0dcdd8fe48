//! The replicated catalog: spaces, tag/edge schemas, indexes, partition
//! map, hosts, users, and the slow-query table.

use crate::codec::{EdgeTypeId, IndexId, PartId, PropertyDef, SpaceId, TagId, Vid};
use crate::raft::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

pub type HostId = NodeId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpaceDef {
    pub name: String,
    pub space_id: SpaceId,
    /// Fixed once the space is created; placement depends on it.
    pub partition_num: u32,
    pub replica_factor: u32,
    pub vid_len: u32,
}

/// A tag or edge-type schema with its full version history; rows name
/// the version they were written under.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDef {
    pub name: String,
    pub id: u32,
    pub versions: Vec<Vec<PropertyDef>>,
}

impl SchemaDef {
    pub fn new(name: &str, id: u32, props: Vec<PropertyDef>) -> SchemaDef {
        SchemaDef { name: name.into(), id, versions: vec![props] }
    }

    pub fn schema_version(&self) -> u32 {
        self.versions.len() as u32 - 1
    }

    pub fn current(&self) -> &[PropertyDef] {
        self.versions.last().expect("at least one version")
    }

    pub fn prop_position(&self, name: &str) -> Option<usize> {
        self.current().iter().position(|p| p.name == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexTarget {
    Tag(TagId),
    Edge(EdgeTypeId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexDef {
    pub name: String,
    pub index_id: IndexId,
    pub target: IndexTarget,
    /// Indexed property names, in declared order; all NOT NULL.
    pub props: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HostStatus {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HostInfo {
    pub id: HostId,
    pub status: HostStatus,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UserRole {
    Admin,
    User,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserInfo {
    pub name: String,
    pub password: String,
    pub role: UserRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlowQueryEntry {
    pub query_id: u64,
    pub session_id: u64,
    pub statement: String,
    pub duration_us: u64,
    pub at_us: u64,
}

/// Everything the catalog knows about one space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceCatalog {
    pub def: SpaceDef,
    pub tags: BTreeMap<TagId, SchemaDef>,
    pub edges: BTreeMap<EdgeTypeId, SchemaDef>,
    pub indexes: BTreeMap<IndexId, IndexDef>,
    /// part -> replica hosts (first entry is the initial leader hint).
    pub parts: BTreeMap<PartId, Vec<HostId>>,
    pub next_tag_id: u32,
    pub next_edge_id: u32,
    pub next_index_id: u32,
}

impl SpaceCatalog {
    pub fn tag_by_name(&self, name: &str) -> Option<&SchemaDef> {
        self.tags.values().find(|t| t.name == name)
    }

    pub fn edge_by_name(&self, name: &str) -> Option<&SchemaDef> {
        self.edges.values().find(|e| e.name == name)
    }

    pub fn index_by_name(&self, name: &str) -> Option<&IndexDef> {
        self.indexes.values().find(|i| i.name == name)
    }

    pub fn indexes_for(&self, target: IndexTarget) -> Vec<&IndexDef> {
        self.indexes.values().filter(|i| i.target == target).collect()
    }

    pub fn schema_for_target(&self, target: IndexTarget) -> Option<&SchemaDef> {
        match target {
            IndexTarget::Tag(id) => self.tags.get(&id),
            IndexTarget::Edge(id) => self.edges.get(&id),
        }
    }
}

/// FNV-1a 64 over the padded vid bytes; the placement hash, fixed
/// forever because data location depends on it.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub spaces: BTreeMap<SpaceId, SpaceCatalog>,
    pub hosts: BTreeMap<HostId, HostInfo>,
    pub users: BTreeMap<String, UserInfo>,
    pub slow_queries: Vec<SlowQueryEntry>,
    pub snapshots: Vec<String>,
    pub next_space_id: u32,
    pub balance_in_progress: bool,
    /// Query ids flagged for termination.
    pub killed_queries: BTreeSet<u64>,
    /// space -> part -> listener hosts subscribed to that group's log.
    pub listener_assignment: BTreeMap<SpaceId, BTreeMap<PartId, Vec<HostId>>>,
    /// Host whose meta-log feed ships DDL to the drainer.
    pub meta_listener: Option<HostId>,
    /// Registered drainer endpoints (cross-cluster sinks).
    pub drainers: Vec<String>,
    /// Per-op results, which also deduplicate re-proposed commands.
    pub op_results: BTreeMap<u64, Result<super::MetaResponse, super::MetaError>>,
}

impl Catalog {
    pub fn new() -> Catalog {
        let mut c = Catalog { next_space_id: 1, ..Catalog::default() };
        c.users.insert(
            "root".into(),
            UserInfo { name: "root".into(), password: String::new(), role: UserRole::Admin },
        );
        c
    }

    pub fn space_by_name(&self, name: &str) -> Option<&SpaceCatalog> {
        self.spaces.values().find(|s| s.def.name == name)
    }

    pub fn space(&self, id: SpaceId) -> Option<&SpaceCatalog> {
        self.spaces.get(&id)
    }

    pub fn online_hosts(&self) -> Vec<HostId> {
        self.hosts
            .values()
            .filter(|h| h.status == HostStatus::Online)
            .map(|h| h.id)
            .collect()
    }

    /// Static vid hashing: `(fnv1a64(padded vid) mod partition_num) + 1`.
    pub fn partition_for_vid(&self, space: SpaceId, vid: &Vid) -> Option<PartId> {
        let s = self.spaces.get(&space)?;
        Some((fnv1a64(vid.as_bytes()) % s.def.partition_num as u64) as PartId + 1)
    }

    /// Hosts per space, for balance audits.
    pub fn part_counts(&self, space: SpaceId) -> BTreeMap<HostId, usize> {
        let mut counts: BTreeMap<HostId, usize> =
            self.hosts.keys().map(|&h| (h, 0)).collect();
        if let Some(s) = self.spaces.get(&space) {
            for hosts in s.parts.values() {
                for h in hosts {
                    *counts.entry(*h).or_insert(0) += 1;
                }
            }
        }
        counts
    }

    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("catalog serializes")
    }

    pub fn load_json(json: &str) -> Result<Catalog, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::DEFAULT_VID_LEN;

    #[test]
    fn fnv_hash_is_the_pinned_function() {
        // Reference values for the frozen placement hash.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn placement_is_stable_and_balanced() {
        let mut c = Catalog::new();
        c.hosts.insert(1, HostInfo { id: 1, status: HostStatus::Online });
        let def = SpaceDef {
            name: "s".into(),
            space_id: 1,
            partition_num: 120,
            replica_factor: 1,
            vid_len: DEFAULT_VID_LEN as u32,
        };
        c.spaces.insert(
            1,
            SpaceCatalog {
                def,
                tags: BTreeMap::new(),
                edges: BTreeMap::new(),
                indexes: BTreeMap::new(),
                parts: BTreeMap::new(),
                next_tag_id: 1,
                next_edge_id: 1,
                next_index_id: 1,
            },
        );
        let vid = Vid::new("v-42", DEFAULT_VID_LEN).unwrap();
        let p1 = c.partition_for_vid(1, &vid).unwrap();
        let p2 = c.partition_for_vid(1, &vid).unwrap();
        assert_eq!(p1, p2);
        assert!((1..=120).contains(&p1));

        // balance audit: 100k random vids over 120 parts
        let mut buckets = vec![0u32; 121];
        for i in 0..100_000 {
            let vid = Vid::new(&format!("vid-{i}"), DEFAULT_VID_LEN).unwrap();
            buckets[c.partition_for_vid(1, &vid).unwrap() as usize] += 1;
        }
        let max = *buckets[1..].iter().max().unwrap() as f64;
        let min = *buckets[1..].iter().min().unwrap() as f64;
        assert!(min > 0.0 && max / min < 1.3, "max {} min {}", max, min);
    }
}
