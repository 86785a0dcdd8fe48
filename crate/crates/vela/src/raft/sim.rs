//! Deterministic single-group Raft simulation with fault injection and
//! safety checkers.
//!
//! Everything is driven by abstract ticks and a seeded RNG: per-link
//! delays, drops, partitions, and crash/restart schedules replay
//! identically for a given scenario. Scenario files are JSON
//! (see `docs/simulation.md`); traces come out as JSON lines.

use super::{
    GroupConfig, ListenerFeed, ListenerSink, LogIndex, Message, NodeId, RaftNode, Role, Term,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrashSpec {
    pub node: NodeId,
    pub at: u64,
    pub down_for: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub at: u64,
    pub heal_at: u64,
    pub sides: Vec<Vec<NodeId>>,
}

fn default_delay_max() -> u64 {
    3
}

/// A simulation scenario; serializable so fault schedules can live in
/// JSON files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub voters: u32,
    #[serde(default)]
    pub listeners: u32,
    pub seed: u64,
    pub ticks: u64,
    #[serde(default)]
    pub drop_prob: f64,
    #[serde(default)]
    pub min_delay: u64,
    #[serde(default = "default_delay_max")]
    pub max_delay: u64,
    /// Propose a payload at the current leader every N ticks.
    #[serde(default)]
    pub propose_every: u64,
    #[serde(default)]
    pub crashes: Vec<CrashSpec>,
    #[serde(default)]
    pub partitions: Vec<PartitionSpec>,
}

impl Scenario {
    pub fn basic(voters: u32, seed: u64, ticks: u64) -> Scenario {
        Scenario {
            name: String::new(),
            voters,
            listeners: 0,
            seed,
            ticks,
            drop_prob: 0.0,
            min_delay: 1,
            max_delay: 3,
            propose_every: 5,
            crashes: Vec::new(),
            partitions: Vec::new(),
        }
    }

    /// Random fault schedule derived entirely from the seed.
    pub fn random(seed: u64, ticks: u64) -> Scenario {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfau64.rotate_left(32));
        let voters = *[3u32, 3, 5].get(rng.gen_range(0..3)).unwrap();
        let listeners = rng.gen_range(0..2);
        let n = voters + listeners;
        let mut crashes = Vec::new();
        for _ in 0..rng.gen_range(0..6) {
            crashes.push(CrashSpec {
                node: rng.gen_range(1..=n),
                at: rng.gen_range(1..ticks),
                down_for: rng.gen_range(20..200),
            });
        }
        let mut partitions = Vec::new();
        for _ in 0..rng.gen_range(0..4) {
            let at = rng.gen_range(1..ticks);
            let heal_at = (at + rng.gen_range(30..300)).min(ticks);
            let mut side_a = Vec::new();
            let mut side_b = Vec::new();
            for id in 1..=n {
                if rng.gen_bool(0.5) {
                    side_a.push(id);
                } else {
                    side_b.push(id);
                }
            }
            partitions.push(PartitionSpec { at, heal_at, sides: vec![side_a, side_b] });
        }
        Scenario {
            name: format!("random-{seed}"),
            voters,
            listeners,
            seed,
            ticks,
            drop_prob: rng.gen_range(0.0..0.15),
            min_delay: 1,
            max_delay: rng.gen_range(2..5),
            propose_every: rng.gen_range(3..10),
            crashes,
            partitions,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TraceEvent {
    pub tick: u64,
    pub node: NodeId,
    pub kind: &'static str,
    pub term: Term,
    pub detail: u64,
}

/// In-memory transport with per-link delay, drops, and partitions.
/// Deterministic under the scenario seed; delivers at most once per send.
pub struct SimTransport {
    rng: ChaCha8Rng,
    queue: BTreeMap<(u64, u64), (NodeId, NodeId, Message)>,
    seq: u64,
    pub drop_prob: f64,
    pub min_delay: u64,
    pub max_delay: u64,
    sides: Vec<BTreeSet<NodeId>>,
    pub sent: u64,
    pub dropped: u64,
}

impl SimTransport {
    pub fn new(seed: u64, drop_prob: f64, min_delay: u64, max_delay: u64) -> SimTransport {
        SimTransport {
            rng: ChaCha8Rng::seed_from_u64(seed ^ 0x7261667473696d), // "raftsim"
            queue: BTreeMap::new(),
            seq: 0,
            drop_prob,
            min_delay: min_delay.max(1),
            max_delay: max_delay.max(min_delay.max(1)),
            sides: Vec::new(),
            sent: 0,
            dropped: 0,
        }
    }

    fn linked(&self, a: NodeId, b: NodeId) -> bool {
        if self.sides.is_empty() {
            return true;
        }
        self.sides.iter().any(|s| s.contains(&a) && s.contains(&b))
    }

    pub fn set_partition(&mut self, sides: &[Vec<NodeId>]) {
        self.sides = sides.iter().map(|s| s.iter().copied().collect()).collect();
    }

    pub fn heal(&mut self) {
        self.sides.clear();
    }

    pub fn send(&mut self, now: u64, from: NodeId, to: NodeId, msg: Message) {
        self.sent += 1;
        if !self.linked(from, to) || (self.drop_prob > 0.0 && self.rng.gen_bool(self.drop_prob)) {
            self.dropped += 1;
            return;
        }
        let delay = self.rng.gen_range(self.min_delay..=self.max_delay);
        self.seq += 1;
        self.queue.insert((now + delay, self.seq), (from, to, msg));
    }

    pub fn take_due(&mut self, now: u64) -> Vec<(NodeId, NodeId, Message)> {
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

/// Sink that records deliveries and can be told to nack periodically.
#[derive(Default)]
pub struct RecordingSink {
    pub delivered: Vec<(u64, Vec<u8>)>,
    pub fail_every: u64,
    attempts: u64,
}

impl ListenerSink for RecordingSink {
    fn deliver(&mut self, lsn: u64, payload: &[u8]) -> bool {
        self.attempts += 1;
        if self.fail_every > 0 && self.attempts % self.fail_every == 0 {
            return false;
        }
        self.delivered.push((lsn, payload.to_vec()));
        true
    }
}

struct SimNode {
    raft: RaftNode,
    up: bool,
    down_until: u64,
    applied_index: LogIndex,
    applied_payloads: Vec<Vec<u8>>,
    feed: Option<ListenerFeed>,
    sink: Option<RecordingSink>,
    last_role: Role,
    last_term: Term,
}

/// Single-group simulation harness with online safety checking.
pub struct RaftSim {
    pub scenario: Scenario,
    nodes: BTreeMap<NodeId, SimNode>,
    pub transport: SimTransport,
    now: u64,
    leaders_by_term: BTreeMap<Term, NodeId>,
    committed: BTreeMap<LogIndex, (Term, Vec<u8>)>,
    pub violations: Vec<String>,
    pub trace: Vec<TraceEvent>,
    next_payload: u64,
    pub proposed: u64,
}

impl RaftSim {
    pub fn new(scenario: Scenario) -> RaftSim {
        let voters: Vec<NodeId> = (1..=scenario.voters).collect();
        let listeners: Vec<NodeId> =
            (scenario.voters + 1..=scenario.voters + scenario.listeners).collect();
        let config = GroupConfig { voters, listeners: listeners.clone() };
        let mut nodes = BTreeMap::new();
        for id in 1..=scenario.voters + scenario.listeners {
            let raft = RaftNode::new(id, config.clone(), scenario.seed.wrapping_add(id as u64));
            let is_listener = listeners.contains(&id);
            nodes.insert(
                id,
                SimNode {
                    last_role: raft.role(),
                    last_term: raft.term(),
                    raft,
                    up: true,
                    down_until: 0,
                    applied_index: 0,
                    applied_payloads: Vec::new(),
                    feed: is_listener.then(ListenerFeed::in_memory),
                    sink: is_listener.then(RecordingSink::default),
                },
            );
        }
        let transport = SimTransport::new(
            scenario.seed,
            scenario.drop_prob,
            scenario.min_delay,
            scenario.max_delay,
        );
        RaftSim {
            scenario,
            nodes,
            transport,
            now: 0,
            leaders_by_term: BTreeMap::new(),
            committed: BTreeMap::new(),
            violations: Vec::new(),
            trace: Vec::new(),
            next_payload: 0,
            proposed: 0,
        }
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn current_leader(&self) -> Option<NodeId> {
        self.nodes
            .values()
            .filter(|n| n.up && n.raft.is_leader())
            .map(|n| n.raft.id)
            .max_by_key(|&id| self.nodes[&id].raft.term())
    }

    pub fn node(&self, id: NodeId) -> &RaftNode {
        &self.nodes[&id].raft
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut RaftNode {
        &mut self.nodes.get_mut(&id).unwrap().raft
    }

    pub fn is_up(&self, id: NodeId) -> bool {
        self.nodes[&id].up
    }

    pub fn crash(&mut self, id: NodeId, down_for: u64) {
        let n = self.nodes.get_mut(&id).unwrap();
        n.up = false;
        n.down_until = self.now + down_for;
    }

    pub fn propose_at_leader(&mut self, payload: Vec<u8>) -> Option<LogIndex> {
        let leader = self.current_leader()?;
        let idx = self.nodes.get_mut(&leader).unwrap().raft.propose(payload).ok()?;
        self.proposed += 1;
        Some(idx)
    }

    fn route(&mut self, from: NodeId, outs: Vec<super::OutMsg>) {
        for out in outs {
            self.transport.send(self.now, from, out.to, out.msg);
        }
    }

    pub fn step(&mut self) {
        self.now += 1;

        // fault schedule
        let crashes: Vec<CrashSpec> =
            self.scenario.crashes.iter().filter(|c| c.at == self.now).cloned().collect();
        for c in crashes {
            if let Some(n) = self.nodes.get_mut(&c.node) {
                n.up = false;
                n.down_until = self.now + c.down_for.max(1);
            }
        }
        let parts: Vec<PartitionSpec> = self.scenario.partitions.clone();
        for p in &parts {
            if p.at == self.now {
                self.transport.set_partition(&p.sides);
            }
            if p.heal_at == self.now {
                self.transport.heal();
            }
        }
        // restarts
        let ids: Vec<NodeId> = self.nodes.keys().copied().collect();
        for id in &ids {
            let n = self.nodes.get_mut(id).unwrap();
            if !n.up && self.now >= n.down_until && n.down_until > 0 {
                n.up = true;
                n.down_until = 0;
                let applied = n.applied_index;
                n.raft.restart(applied);
                if let Some(feed) = &mut n.feed {
                    feed.resume(&n.raft);
                }
            }
        }

        // deliver due messages
        for (from, to, msg) in self.transport.take_due(self.now) {
            let Some(n) = self.nodes.get_mut(&to) else { continue };
            if !n.up {
                continue;
            }
            let outs = n.raft.handle(from, msg);
            self.route(to, outs);
            self.observe(to);
        }

        // workload
        if self.scenario.propose_every > 0 && self.now % self.scenario.propose_every == 0 {
            let payload = self.next_payload.to_be_bytes().to_vec();
            if self.propose_at_leader(payload).is_some() {
                self.next_payload += 1;
            }
        }

        // tick nodes in id order
        for id in &ids {
            let n = self.nodes.get_mut(id).unwrap();
            if !n.up {
                continue;
            }
            let outs = n.raft.tick();
            self.route(*id, outs);
            self.observe(*id);
        }

        // apply commits and pump listener feeds
        for id in &ids {
            let n = self.nodes.get_mut(id).unwrap();
            if !n.up {
                continue;
            }
            for entry in n.raft.take_applied() {
                n.applied_index = entry.index;
                if entry.payload.is_empty() {
                    continue;
                }
                n.applied_payloads.push(entry.payload.clone());
                let seat = self.committed.entry(entry.index).or_insert_with(|| {
                    (entry.term, entry.payload.clone())
                });
                if seat.1 != entry.payload {
                    self.violations.push(format!(
                        "divergent commit at index {}: two different payloads applied",
                        entry.index
                    ));
                }
            }
            if let (Some(feed), Some(sink)) = (&mut n.feed, &mut n.sink) {
                let _ = feed.pump(&n.raft, sink);
            }
        }
    }

    fn observe(&mut self, id: NodeId) {
        let n = self.nodes.get_mut(&id).unwrap();
        let (role, term) = (n.raft.role(), n.raft.term());
        if (role, term) == (n.last_role, n.last_term) {
            return;
        }
        n.last_role = role;
        n.last_term = term;
        if matches!(role, Role::Leader | Role::Candidate) && !n.raft.config().is_voter(id) {
            self.violations.push(format!("listener {} took role {:?}", id, role));
        }
        self.trace.push(TraceEvent {
            tick: self.now,
            node: id,
            kind: match role {
                Role::Leader => "leader",
                Role::Follower => "follower",
                Role::Candidate => "candidate",
                Role::Listener => "listener",
            },
            term,
            detail: 0,
        });
        if role == Role::Leader {
            if let Some(&prev) = self.leaders_by_term.get(&term) {
                if prev != id {
                    self.violations.push(format!(
                        "election safety: term {} has leaders {} and {}",
                        term, prev, id
                    ));
                }
            } else {
                self.leaders_by_term.insert(term, id);
            }
        }
    }

    /// Runs the full scenario, then settles: faults done, partitions
    /// healed, messages drained.
    pub fn run(&mut self) {
        for _ in 0..self.scenario.ticks {
            self.step();
        }
        self.settle(2_000);
        self.check_final();
    }

    /// Extra fault-free ticks until in-flight traffic drains and all up
    /// nodes converge on the same commit index.
    pub fn settle(&mut self, max_ticks: u64) {
        self.transport.heal();
        self.scenario.crashes.clear();
        self.scenario.partitions.clear();
        self.scenario.propose_every = 0;
        let saved_drop = self.transport.drop_prob;
        self.transport.drop_prob = 0.0;
        for _ in 0..max_ticks {
            self.step();
            let commits: BTreeSet<LogIndex> = self
                .nodes
                .values()
                .filter(|n| n.up)
                .map(|n| n.raft.commit_index())
                .collect();
            let lasts: BTreeSet<LogIndex> =
                self.nodes.values().filter(|n| n.up).map(|n| n.raft.last_index()).collect();
            if commits.len() == 1 && lasts.len() == 1 && commits == lasts && self.transport.in_flight() == 0
            {
                break;
            }
        }
        self.transport.drop_prob = saved_drop;
    }

    /// End-of-run safety checks over final logs, applied sequences, and
    /// listener sinks.
    pub fn check_final(&mut self) {
        // Log matching: any (index, term) pair maps to one payload.
        let mut seen: BTreeMap<(LogIndex, Term), Vec<u8>> = BTreeMap::new();
        for (id, n) in &self.nodes {
            for i in 1..=n.raft.last_index() {
                let e = n.raft.entry_at(i).unwrap();
                match seen.get(&(i, e.term)) {
                    Some(p) if p != &e.payload => {
                        self.violations.push(format!(
                            "log matching violated at ({}, {}) on node {}",
                            i, e.term, id
                        ));
                    }
                    None => {
                        seen.insert((i, e.term), e.payload.clone());
                    }
                    _ => {}
                }
            }
        }
        // State-machine safety: applied sequences are prefix-compatible.
        let mut longest: &[Vec<u8>] = &[];
        for n in self.nodes.values() {
            if n.applied_payloads.len() > longest.len() {
                longest = &n.applied_payloads;
            }
        }
        let longest = longest.to_vec();
        for (id, n) in &self.nodes {
            if n.applied_payloads[..] != longest[..n.applied_payloads.len()] {
                self.violations
                    .push(format!("node {} applied a non-prefix payload sequence", id));
            }
        }
        // Committed entries survive: every committed payload is applied
        // by every up-to-date voter after settle.
        let max_applied = self.nodes.values().map(|n| n.applied_payloads.len()).max().unwrap_or(0);
        if self.committed.len() > max_applied {
            self.violations.push(format!(
                "committed {} entries but longest applied sequence is {}",
                self.committed.len(),
                max_applied
            ));
        }
        // Listener sinks: dedup'd lsn sequence is exactly 1..n in order.
        for (id, n) in &self.nodes {
            let Some(sink) = &n.sink else { continue };
            let mut expected = 1u64;
            for (lsn, _) in &sink.delivered {
                if *lsn == expected {
                    expected += 1;
                } else if *lsn >= expected {
                    self.violations
                        .push(format!("listener {} sink gap: got lsn {}, expected {}", id, lsn, expected));
                    break;
                }
            }
        }
    }

    pub fn sink(&self, id: NodeId) -> Option<&RecordingSink> {
        self.nodes[&id].sink.as_ref()
    }

    pub fn trace_jsonl(&self) -> String {
        let mut s = String::new();
        for ev in &self.trace {
            s.push_str(&serde_json::to_string(ev).unwrap());
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_voters_elect_exactly_one_leader_quickly() {
        for seed in 0..20 {
            let mut sim = RaftSim::new(Scenario { propose_every: 0, ..Scenario::basic(3, seed, 0) });
            // 10x the max election timeout
            let mut elected_at = None;
            for t in 0..200 {
                sim.step();
                if sim.current_leader().is_some() {
                    elected_at = Some(t);
                    break;
                }
            }
            assert!(elected_at.is_some(), "no leader with seed {}", seed);
            assert!(sim.violations.is_empty(), "{:?}", sim.violations);
        }
    }

    #[test]
    fn commit_with_one_of_three_crashed() {
        let mut sim = RaftSim::new(Scenario { propose_every: 0, ..Scenario::basic(3, 1, 0) });
        for _ in 0..100 {
            sim.step();
            if sim.current_leader().is_some() {
                break;
            }
        }
        let leader = sim.current_leader().unwrap();
        let crashed = (1..=3).find(|&n| n != leader).unwrap();
        sim.crash(crashed, u64::MAX / 2);
        let idx = sim.propose_at_leader(b"with-two".to_vec()).unwrap();
        for _ in 0..50 {
            sim.step();
        }
        assert!(sim.node(leader).commit_index() >= idx);
    }

    #[test]
    fn no_commit_with_two_of_three_crashed() {
        let mut sim = RaftSim::new(Scenario { propose_every: 0, ..Scenario::basic(3, 2, 0) });
        for _ in 0..100 {
            sim.step();
            if sim.current_leader().is_some() {
                break;
            }
        }
        let leader = sim.current_leader().unwrap();
        let before = sim.node(leader).commit_index();
        for n in 1..=3 {
            if n != leader {
                sim.crash(n, u64::MAX / 2);
            }
        }
        let _ = sim.propose_at_leader(b"stuck".to_vec());
        for _ in 0..100 {
            sim.step();
        }
        assert_eq!(sim.node(leader).commit_index(), before);
    }

    #[test]
    fn listener_receives_all_entries_in_order_after_lag() {
        let mut sc = Scenario::basic(3, 7, 400);
        sc.listeners = 1;
        sc.propose_every = 3;
        sc.crashes = vec![CrashSpec { node: 4, at: 40, down_for: 150 }];
        let mut sim = RaftSim::new(sc);
        sim.run();
        assert!(sim.violations.is_empty(), "{:?}", sim.violations);
        let sink = sim.sink(4).unwrap();
        assert!(!sink.delivered.is_empty());
        // dense, in-order lsns starting at 1
        for (i, (lsn, _)) in sink.delivered.iter().enumerate() {
            assert_eq!(*lsn, i as u64 + 1);
        }
        assert_eq!(sink.delivered.len() as u64, sim.proposed);
    }

    #[test]
    fn flaky_sink_still_gets_everything() {
        let mut sc = Scenario::basic(3, 9, 300);
        sc.listeners = 1;
        sc.propose_every = 4;
        let mut sim = RaftSim::new(sc);
        // every 3rd delivery attempt is nacked
        sim.nodes.get_mut(&4).unwrap().sink.as_mut().unwrap().fail_every = 3;
        sim.run();
        assert!(sim.violations.is_empty(), "{:?}", sim.violations);
        let sink = sim.sink(4).unwrap();
        assert_eq!(sink.delivered.len() as u64, sim.proposed);
    }

    #[test]
    fn transfer_leader_moves_leadership() {
        let mut sim = RaftSim::new(Scenario { propose_every: 0, ..Scenario::basic(3, 3, 0) });
        for _ in 0..100 {
            sim.step();
            if sim.current_leader().is_some() {
                break;
            }
        }
        let leader = sim.current_leader().unwrap();
        let target = (1..=3).find(|&n| n != leader).unwrap();
        let outs = sim.node_mut(leader).transfer_leadership(target).unwrap();
        sim.route(leader, outs);
        for _ in 0..60 {
            sim.step();
            if sim.current_leader() == Some(target) {
                break;
            }
        }
        assert_eq!(sim.current_leader(), Some(target));
        assert!(sim.violations.is_empty(), "{:?}", sim.violations);

        // transfer to self is a no-op
        let outs = sim.node_mut(target).transfer_leadership(target).unwrap();
        assert!(outs.is_empty());
    }

    #[test]
    fn seeded_runs_are_deterministic() {
        let run = |seed| {
            let mut sim = RaftSim::new(Scenario::random(seed, 1500));
            sim.run();
            (sim.trace.len(), sim.proposed, sim.transport.sent, sim.violations.len())
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn random_fault_schedules_hold_safety() {
        for seed in 0..15 {
            let mut sim = RaftSim::new(Scenario::random(seed, 2000));
            sim.run();
            assert!(sim.violations.is_empty(), "seed {}: {:?}", seed, sim.violations);
        }
    }

    #[test]
    fn scenario_round_trips_through_json() {
        let sc = Scenario::random(5, 1000);
        let json = serde_json::to_string(&sc).unwrap();
        let back: Scenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back.seed, sc.seed);
        assert_eq!(back.crashes.len(), sc.crashes.len());
    }
}
