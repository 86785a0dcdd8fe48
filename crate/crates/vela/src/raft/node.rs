//! The per-node Raft state machine.

use super::{LogEntry, LogIndex, Message, NodeId, OutMsg, RaftError, Role, Term};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

const ELECTION_TIMEOUT_MIN: u64 = 10;
const ELECTION_TIMEOUT_MAX: u64 = 20;
/// Cap on entries per Append so catch-up traffic stays bounded.
const MAX_ENTRIES_PER_APPEND: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupConfig {
    pub voters: Vec<NodeId>,
    pub listeners: Vec<NodeId>,
}

impl GroupConfig {
    pub fn voters_only(voters: Vec<NodeId>) -> GroupConfig {
        GroupConfig { voters, listeners: Vec::new() }
    }

    pub fn is_voter(&self, id: NodeId) -> bool {
        self.voters.contains(&id)
    }

    pub fn peers_of(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.voters
            .iter()
            .chain(self.listeners.iter())
            .copied()
            .filter(move |&p| p != id)
    }

    pub fn quorum(&self) -> usize {
        self.voters.len() / 2 + 1
    }
}

pub struct RaftNode {
    pub id: NodeId,
    config: GroupConfig,
    // Durable state: survives restart.
    term: Term,
    voted_for: Option<NodeId>,
    log: Vec<LogEntry>,
    // Volatile state.
    role: Role,
    commit_index: LogIndex,
    last_applied: LogIndex,
    leader_hint: Option<NodeId>,
    votes: BTreeSet<NodeId>,
    next_index: BTreeMap<NodeId, LogIndex>,
    match_index: BTreeMap<NodeId, LogIndex>,
    now: u64,
    election_deadline: u64,
    rng: ChaCha8Rng,
    transfer_target: Option<NodeId>,
}

impl RaftNode {
    pub fn new(id: NodeId, config: GroupConfig, seed: u64) -> RaftNode {
        let is_voter = config.is_voter(id);
        let mut node = RaftNode {
            id,
            config,
            term: 0,
            voted_for: None,
            log: Vec::new(),
            role: if is_voter { Role::Follower } else { Role::Listener },
            commit_index: 0,
            last_applied: 0,
            leader_hint: None,
            votes: BTreeSet::new(),
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            now: 0,
            election_deadline: 0,
            rng: ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e3779b9).wrapping_add(id as u64)),
            transfer_target: None,
        };
        node.reset_election_deadline();
        node
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn term(&self) -> Term {
        self.term
    }

    pub fn is_leader(&self) -> bool {
        self.role == Role::Leader
    }

    pub fn leader_hint(&self) -> Option<NodeId> {
        if self.role == Role::Leader {
            Some(self.id)
        } else {
            self.leader_hint
        }
    }

    pub fn commit_index(&self) -> LogIndex {
        self.commit_index
    }

    pub fn applied_index(&self) -> LogIndex {
        self.last_applied
    }

    pub fn last_index(&self) -> LogIndex {
        self.log.len() as LogIndex
    }

    pub fn config(&self) -> &GroupConfig {
        &self.config
    }

    fn last_term(&self) -> Term {
        self.log.last().map_or(0, |e| e.term)
    }

    pub fn entry_at(&self, index: LogIndex) -> Option<&LogEntry> {
        if index == 0 {
            return None;
        }
        self.log.get(index as usize - 1)
    }

    fn term_at(&self, index: LogIndex) -> Term {
        self.entry_at(index).map_or(0, |e| e.term)
    }

    fn reset_election_deadline(&mut self) {
        let timeout = self.rng.gen_range(ELECTION_TIMEOUT_MIN..ELECTION_TIMEOUT_MAX);
        self.election_deadline = self.now + timeout;
    }

    /// Simulated crash/restart: durable state (term, vote, log) survives;
    /// volatile leadership state resets. The caller re-seeds
    /// `last_applied` from its durable state machine.
    pub fn restart(&mut self, last_applied: LogIndex) {
        self.role = if self.config.is_voter(self.id) { Role::Follower } else { Role::Listener };
        self.votes.clear();
        self.next_index.clear();
        self.match_index.clear();
        self.leader_hint = None;
        self.transfer_target = None;
        self.commit_index = last_applied;
        self.last_applied = last_applied;
        self.reset_election_deadline();
    }

    /// Swaps in a new member set (stop-copy restart path: the log stays,
    /// leadership state resets, commit re-discovers from the new quorum).
    pub fn reconfigure(&mut self, config: GroupConfig, last_applied: LogIndex) {
        self.config = config;
        self.restart(last_applied);
    }

    /// Rebuilds a node from copied durable state (partition moves).
    pub fn from_durable(
        id: NodeId,
        config: GroupConfig,
        seed: u64,
        term: Term,
        log: Vec<LogEntry>,
        last_applied: LogIndex,
    ) -> RaftNode {
        let mut node = RaftNode::new(id, config, seed);
        node.term = term;
        node.log = log;
        node.commit_index = last_applied;
        node.last_applied = last_applied;
        node
    }

    /// The durable half of this node's state, for stop-copy transfer.
    pub fn durable_state(&self) -> (Term, Vec<LogEntry>) {
        (self.term, self.log.clone())
    }

    /// Drains committed-but-unapplied entries, in log order, exactly once.
    pub fn take_applied(&mut self) -> Vec<LogEntry> {
        let mut out = Vec::new();
        while self.last_applied < self.commit_index {
            self.last_applied += 1;
            if let Some(e) = self.entry_at(self.last_applied) {
                out.push(e.clone());
            }
        }
        out
    }

    pub fn propose(&mut self, payload: Vec<u8>) -> Result<LogIndex, RaftError> {
        if self.role != Role::Leader {
            return Err(RaftError::NotLeader { hint: self.leader_hint() });
        }
        let index = self.last_index() + 1;
        self.log.push(LogEntry { term: self.term, index, payload });
        self.match_index.insert(self.id, index);
        // single-voter groups commit immediately
        self.advance_commit();
        Ok(index)
    }

    /// Asks `target` to start an immediate election.
    pub fn transfer_leadership(&mut self, target: NodeId) -> Result<Vec<OutMsg>, RaftError> {
        if self.role != Role::Leader {
            return Err(RaftError::NotLeader { hint: self.leader_hint() });
        }
        if !self.config.is_voter(target) {
            return Err(RaftError::NotVoter(target));
        }
        if target == self.id {
            return Ok(Vec::new());
        }
        self.transfer_target = Some(target);
        Ok(vec![OutMsg { to: target, msg: Message::TimeoutNow { term: self.term } }])
    }

    pub fn tick(&mut self) -> Vec<OutMsg> {
        self.now += 1;
        match self.role {
            Role::Leader => self.broadcast_append(),
            Role::Follower | Role::Candidate => {
                if self.now >= self.election_deadline {
                    self.start_election()
                } else {
                    Vec::new()
                }
            }
            Role::Listener => Vec::new(),
        }
    }

    fn start_election(&mut self) -> Vec<OutMsg> {
        self.term += 1;
        self.role = Role::Candidate;
        self.voted_for = Some(self.id);
        self.votes.clear();
        self.votes.insert(self.id);
        self.leader_hint = None;
        self.reset_election_deadline();
        if self.votes.len() >= self.config.quorum() {
            return self.become_leader();
        }
        let (last_log_index, last_log_term) = (self.last_index(), self.last_term());
        self.config
            .voters
            .clone()
            .into_iter()
            .filter(|&v| v != self.id)
            .map(|to| OutMsg {
                to,
                msg: Message::RequestVote { term: self.term, last_log_index, last_log_term },
            })
            .collect()
    }

    fn become_leader(&mut self) -> Vec<OutMsg> {
        self.role = Role::Leader;
        self.leader_hint = Some(self.id);
        self.transfer_target = None;
        let next = self.last_index() + 1;
        self.next_index.clear();
        self.match_index.clear();
        for peer in self.config.peers_of(self.id).collect::<Vec<_>>() {
            self.next_index.insert(peer, next);
            self.match_index.insert(peer, 0);
        }
        self.match_index.insert(self.id, self.last_index());
        // No-op commits prior-term entries once replicated this term.
        let index = self.last_index() + 1;
        self.log.push(LogEntry { term: self.term, index, payload: Vec::new() });
        self.match_index.insert(self.id, index);
        self.advance_commit();
        self.broadcast_append()
    }

    fn broadcast_append(&mut self) -> Vec<OutMsg> {
        let peers: Vec<NodeId> = self.config.peers_of(self.id).collect();
        peers.into_iter().map(|p| self.append_for(p)).collect()
    }

    fn append_for(&self, peer: NodeId) -> OutMsg {
        let next = *self.next_index.get(&peer).unwrap_or(&1);
        let prev_index = next - 1;
        let prev_term = self.term_at(prev_index);
        let from = next as usize - 1;
        let to = (from + MAX_ENTRIES_PER_APPEND).min(self.log.len());
        let entries = if from < self.log.len() { self.log[from..to].to_vec() } else { Vec::new() };
        OutMsg {
            to: peer,
            msg: Message::Append {
                term: self.term,
                prev_index,
                prev_term,
                entries,
                leader_commit: self.commit_index,
            },
        }
    }

    fn step_down(&mut self, term: Term) {
        self.term = term;
        self.voted_for = None;
        if self.config.is_voter(self.id) {
            self.role = Role::Follower;
        }
        self.votes.clear();
        self.transfer_target = None;
        self.reset_election_deadline();
    }

    pub fn handle(&mut self, from: NodeId, msg: Message) -> Vec<OutMsg> {
        match msg {
            Message::RequestVote { term, last_log_index, last_log_term } => {
                self.on_request_vote(from, term, last_log_index, last_log_term)
            }
            Message::Vote { term, granted } => self.on_vote(from, term, granted),
            Message::Append { term, prev_index, prev_term, entries, leader_commit } => {
                self.on_append(from, term, prev_index, prev_term, entries, leader_commit)
            }
            Message::AppendResp { term, success, match_hint } => {
                self.on_append_resp(from, term, success, match_hint)
            }
            Message::TimeoutNow { term } => self.on_timeout_now(term),
        }
    }

    fn on_request_vote(
        &mut self,
        from: NodeId,
        term: Term,
        last_log_index: LogIndex,
        last_log_term: Term,
    ) -> Vec<OutMsg> {
        // Listeners do not participate in elections at all.
        if self.role == Role::Listener {
            return Vec::new();
        }
        if term > self.term {
            self.step_down(term);
        }
        let up_to_date = (last_log_term, last_log_index) >= (self.last_term(), self.last_index());
        let granted = term == self.term
            && up_to_date
            && (self.voted_for.is_none() || self.voted_for == Some(from));
        if granted {
            self.voted_for = Some(from);
            self.reset_election_deadline();
        }
        vec![OutMsg { to: from, msg: Message::Vote { term: self.term, granted } }]
    }

    fn on_vote(&mut self, from: NodeId, term: Term, granted: bool) -> Vec<OutMsg> {
        if term > self.term {
            self.step_down(term);
            return Vec::new();
        }
        if self.role != Role::Candidate || term < self.term || !granted {
            return Vec::new();
        }
        self.votes.insert(from);
        if self.votes.len() >= self.config.quorum() {
            return self.become_leader();
        }
        Vec::new()
    }

    fn on_append(
        &mut self,
        from: NodeId,
        term: Term,
        prev_index: LogIndex,
        prev_term: Term,
        entries: Vec<LogEntry>,
        leader_commit: LogIndex,
    ) -> Vec<OutMsg> {
        if term < self.term {
            return vec![OutMsg {
                to: from,
                msg: Message::AppendResp { term: self.term, success: false, match_hint: 0 },
            }];
        }
        if term > self.term || self.role == Role::Candidate {
            self.step_down(term);
        }
        self.leader_hint = Some(from);
        self.reset_election_deadline();

        if prev_index > self.last_index() || self.term_at(prev_index) != prev_term {
            // Hint: back up to our last index (or below the mismatch).
            let hint = self.last_index().min(prev_index.saturating_sub(1));
            return vec![OutMsg {
                to: from,
                msg: Message::AppendResp { term: self.term, success: false, match_hint: hint },
            }];
        }

        let mut last_new = prev_index;
        for entry in entries {
            let idx = entry.index;
            debug_assert_eq!(idx, last_new + 1);
            match self.entry_at(idx) {
                Some(existing) if existing.term == entry.term => {}
                _ => {
                    // Conflict or new tail: truncate then append. Never
                    // touches committed entries.
                    self.log.truncate(idx as usize - 1);
                    self.log.push(entry);
                }
            }
            last_new = idx;
        }
        if leader_commit > self.commit_index {
            self.commit_index = leader_commit.min(last_new.max(self.commit_index));
        }
        vec![OutMsg {
            to: from,
            msg: Message::AppendResp { term: self.term, success: true, match_hint: last_new },
        }]
    }

    fn on_append_resp(
        &mut self,
        from: NodeId,
        term: Term,
        success: bool,
        match_hint: LogIndex,
    ) -> Vec<OutMsg> {
        if term > self.term {
            self.step_down(term);
            return Vec::new();
        }
        if self.role != Role::Leader || term < self.term {
            return Vec::new();
        }
        if success {
            let m = self.match_index.entry(from).or_insert(0);
            *m = (*m).max(match_hint);
            self.next_index.insert(from, *m + 1);
            self.advance_commit();
        } else {
            let next = self.next_index.entry(from).or_insert(1);
            *next = (*next - 1).max(1).min(match_hint + 1);
        }
        Vec::new()
    }

    fn on_timeout_now(&mut self, term: Term) -> Vec<OutMsg> {
        if term < self.term || !self.config.is_voter(self.id) || self.role == Role::Leader {
            return Vec::new();
        }
        self.start_election()
    }

    /// Commit rule: an entry from the current term replicated on a
    /// quorum of voters becomes committed; listeners never count.
    fn advance_commit(&mut self) {
        if self.role != Role::Leader {
            return;
        }
        let mut idx = self.last_index();
        while idx > self.commit_index {
            if self.term_at(idx) == self.term {
                let replicas = self
                    .config
                    .voters
                    .iter()
                    .filter(|v| self.match_index.get(v).copied().unwrap_or(0) >= idx)
                    .count();
                if replicas >= self.config.quorum() {
                    self.commit_index = idx;
                    break;
                }
            }
            idx -= 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_node_elects_itself_in_one_timeout() {
        let mut n = RaftNode::new(1, GroupConfig::voters_only(vec![1]), 0);
        for _ in 0..ELECTION_TIMEOUT_MAX {
            n.tick();
            if n.is_leader() {
                break;
            }
        }
        assert!(n.is_leader());
        assert!(n.term() >= 1);
    }

    #[test]
    fn listener_ticks_never_produce_vote_requests() {
        let config = GroupConfig { voters: vec![1, 2], listeners: vec![3] };
        let mut listener = RaftNode::new(3, config, 0);
        for _ in 0..100 {
            let out = listener.tick();
            assert!(out.is_empty());
        }
        assert_eq!(listener.role(), Role::Listener);
        // and it ignores vote requests entirely
        let out = listener.handle(
            1,
            Message::RequestVote { term: 5, last_log_index: 0, last_log_term: 0 },
        );
        assert!(out.is_empty());
    }

    #[test]
    fn propose_on_follower_reports_not_leader() {
        let mut n = RaftNode::new(2, GroupConfig::voters_only(vec![1, 2, 3]), 0);
        let err = n.propose(b"x".to_vec()).unwrap_err();
        assert!(matches!(err, RaftError::NotLeader { .. }));
    }
}
