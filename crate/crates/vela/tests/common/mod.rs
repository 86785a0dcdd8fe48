//! Shared fixtures: an embedded cluster with a small social-style graph
//! and brute-force oracles the storage/query paths are checked against.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use vela::cluster::sim::SimCluster;
use vela::codec::SpaceId;
use vela::meta::UserRole;
use vela::query::{self, QueryBackend, Session, StatementOutcome};
use vela::value::{DataSet, PropertyValue};

pub fn admin_session() -> Session {
    Session::new(1, "root", UserRole::Admin)
}

/// Runs one statement, panicking on error (tests that expect failure
/// call `query::run_statement` directly).
pub fn run(c: &mut SimCluster, session: &mut Session, text: &str) -> StatementOutcome {
    query::run_statement(c, session, text, None)
        .unwrap_or_else(|e| panic!("statement failed: {text}\n  error: {e}"))
}

pub fn run_err(c: &mut SimCluster, session: &mut Session, text: &str) -> query::QueryError {
    match query::run_statement(c, session, text, None) {
        Ok(_) => panic!("statement unexpectedly succeeded: {text}"),
        Err(e) => e,
    }
}

/// 2 hosts, rf=2, 4 partitions; schema: person(name, age), likes(weight),
/// follows(since) — empty of data.
pub fn social_cluster(seed: u64) -> (SimCluster, Session, SpaceId) {
    let mut c = SimCluster::new(2, seed);
    c.bootstrap().unwrap();
    let mut s = admin_session();
    run(&mut c, &mut s, "CREATE SPACE social (partition_num = 4, replica_factor = 2, vid_len = 16)");
    run(&mut c, &mut s, "USE social");
    run(&mut c, &mut s, "CREATE TAG person (name STRING, age INT64)");
    run(&mut c, &mut s, "CREATE EDGE likes (weight INT64)");
    run(&mut c, &mut s, "CREATE EDGE follows (since INT64)");
    let space = c.space_id("social").unwrap();
    (c, s, space)
}

/// Deterministic random graph: `n` person vertices and `m` edges split
/// between likes/follows with random weights/ranks.
pub fn random_graph(c: &mut SimCluster, s: &mut Session, n: usize, m: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::default();
    for i in 0..n {
        let vid = format!("p{i}");
        run(
            c,
            s,
            &format!(
                "INSERT VERTEX person (name, age) VALUES \"{vid}\": (\"name-{i}\", {})",
                rng.gen_range(1..90)
            ),
        );
        g.vertices.push(vid);
    }
    let mut seen = std::collections::BTreeSet::new();
    for _ in 0..m {
        let src = format!("p{}", rng.gen_range(0..n));
        let dst = format!("p{}", rng.gen_range(0..n));
        let etype = if rng.gen_bool(0.7) { "likes" } else { "follows" };
        let rank: i64 = rng.gen_range(0..3);
        let weight: i64 = rng.gen_range(-5..50);
        if !seen.insert((etype, src.clone(), dst.clone(), rank)) {
            continue; // duplicate edge key would overwrite, skewing oracles
        }
        let prop = if etype == "likes" { "weight" } else { "since" };
        run(
            c,
            s,
            &format!(
                "INSERT EDGE {etype} ({prop}) VALUES \"{src}\" -> \"{dst}\" @{rank}: ({weight})"
            ),
        );
        g.edges.push(EdgeRec {
            src: src.clone(),
            dst: dst.clone(),
            etype: etype.into(),
            rank,
            weight,
        });
    }
    c.quiesce(3_000);
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRec {
    pub src: String,
    pub dst: String,
    pub etype: String,
    pub rank: i64,
    pub weight: i64,
}

#[derive(Debug, Clone, Default)]
pub struct Graph {
    pub vertices: Vec<String>,
    pub edges: Vec<EdgeRec>,
}

impl Graph {
    /// Walk-endpoint multiset after exactly `steps` expansions from the
    /// seeds: every walk contributes one endpoint per path, matching GO
    /// semantics (duplicates preserved).
    pub fn go_oracle(
        &self,
        seeds: &[&str],
        steps: usize,
        etypes: &[&str],
        out: bool,
        inn: bool,
    ) -> Vec<String> {
        let mut frontier: BTreeMap<String, u64> = BTreeMap::new();
        for s in seeds {
            *frontier.entry(s.to_string()).or_insert(0) += 1;
        }
        if steps == 0 {
            let mut result = Vec::new();
            for (v, count) in frontier {
                for _ in 0..count {
                    result.push(v.clone());
                }
            }
            result.sort();
            return result;
        }
        for _ in 0..steps.saturating_sub(1) {
            let mut next: BTreeMap<String, u64> = BTreeMap::new();
            for e in &self.edges {
                if !etypes.contains(&e.etype.as_str()) {
                    continue;
                }
                if out {
                    if let Some(&c) = frontier.get(&e.src) {
                        *next.entry(e.dst.clone()).or_insert(0) += c;
                    }
                }
                if inn {
                    if let Some(&c) = frontier.get(&e.dst) {
                        *next.entry(e.src.clone()).or_insert(0) += c;
                    }
                }
            }
            frontier = next;
        }
        // final step emits one endpoint per traversed edge per walk
        let mut result = Vec::new();
        for e in &self.edges {
            if !etypes.contains(&e.etype.as_str()) {
                continue;
            }
            if out {
                if let Some(&c) = frontier.get(&e.src) {
                    for _ in 0..c {
                        result.push(e.dst.clone());
                    }
                }
            }
            if inn {
                if let Some(&c) = frontier.get(&e.dst) {
                    for _ in 0..c {
                        result.push(e.src.clone());
                    }
                }
            }
        }
        result.sort();
        result
    }
}

/// Extracts one string column as a sorted multiset.
pub fn column_strings(ds: &DataSet, col: &str) -> Vec<String> {
    let idx = ds.column_index(col).unwrap_or_else(|| panic!("no column {col} in {:?}", ds.columns));
    let mut out: Vec<String> = ds
        .rows
        .iter()
        .map(|r| match &r[idx] {
            PropertyValue::Str(s) => s.clone(),
            other => other.to_string(),
        })
        .collect();
    out.sort();
    out
}

pub fn single_int(ds: &DataSet) -> i64 {
    assert_eq!(ds.rows.len(), 1, "{ds:?}");
    ds.rows[0][0].as_int().unwrap_or_else(|| panic!("not an int: {:?}", ds.rows[0]))
}
