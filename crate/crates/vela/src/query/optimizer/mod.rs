//! Rule-based cascades optimization.
//!
//! The plan is lifted into a memo of groups: each [`OptGroup`] holds
//! result-equivalent alternatives, each [`OptGroupNode`] is a plan node
//! whose children are groups (never nodes). Exploration applies every
//! rule's match/transform over the forest until a fixpoint, bounded by
//! a rule-application budget; extraction then picks per group the
//! alternative with the lowest node count, breaking ties toward more
//! pushed-down work.

pub mod index_choice;
pub mod rules;

pub use index_choice::{choose_index, IndexChoice};

use super::plan::{Plan, PlanKind};
use super::QueryError;
use crate::meta::SpaceCatalog;
use rules::{all_rules, OptContext};

/// Hard cap on rule applications per statement.
pub const RULE_BUDGET: usize = 256;

/// A plan node whose children point at groups.
#[derive(Debug, Clone, PartialEq)]
pub struct OptGroupNode {
    pub kind: PlanKind,
    pub columns: Vec<String>,
    /// Child groups: `[input]`, or `[input, loop body]` for Loop.
    pub children: Vec<u32>,
}

/// A set of result-equivalent alternatives.
#[derive(Debug, Clone)]
pub struct OptGroup {
    pub id: u32,
    pub alternatives: Vec<OptGroupNode>,
}

#[derive(Debug, Clone, Default)]
pub struct Memo {
    pub groups: Vec<OptGroup>,
}

impl Memo {
    pub fn add_group(&mut self, node: OptGroupNode) -> u32 {
        let id = self.groups.len() as u32;
        self.groups.push(OptGroup { id, alternatives: vec![node] });
        id
    }

    pub fn group(&self, id: u32) -> &OptGroup {
        &self.groups[id as usize]
    }

    /// Adds an alternative unless a structurally identical one is
    /// already present (group identities are ignored for the check, so
    /// re-fired rules creating fresh-but-equal child groups dedup).
    pub fn add_alternative(&mut self, group: u32, node: OptGroupNode) -> bool {
        let fp = self.fingerprint_node(&node);
        let exists = self.groups[group as usize]
            .alternatives
            .iter()
            .any(|a| self.fingerprint_node(a) == fp);
        if exists {
            return false;
        }
        self.groups[group as usize].alternatives.push(node);
        true
    }

    fn fingerprint_node(&self, node: &OptGroupNode) -> String {
        let children: Vec<String> =
            node.children.iter().map(|c| self.fingerprint_group(*c)).collect();
        format!("{:?}|{:?}|[{}]", node.kind, node.columns, children.join(","))
    }

    fn fingerprint_group(&self, gid: u32) -> String {
        let mut fps: Vec<String> = self
            .group(gid)
            .alternatives
            .iter()
            .map(|a| self.fingerprint_node(a))
            .collect();
        fps.sort();
        fps.join(";")
    }

    /// Lifts a plan into single-alternative groups, bottom-up.
    pub fn from_plan(plan: &Plan) -> (Memo, u32) {
        let mut memo = Memo::default();
        let mut group_of: Vec<Option<u32>> = vec![None; plan.nodes.len()];
        // nodes are created bottom-up by the planner, so a forward pass
        // resolves inputs and loop bodies alike
        for node in &plan.nodes {
            let mut children = Vec::new();
            if let Some(input) = node.input {
                children.push(group_of[input as usize].expect("input group built"));
            }
            let kind = match &node.kind {
                PlanKind::Loop { times, body_root } => {
                    let body_group = group_of[*body_root as usize].expect("body group built");
                    children.push(body_group);
                    PlanKind::Loop { times: *times, body_root: 0 }
                }
                other => other.clone(),
            };
            let gid = memo.add_group(OptGroupNode {
                kind,
                columns: node.columns.clone(),
                children,
            });
            group_of[node.id as usize] = Some(gid);
        }
        (memo, group_of[plan.root as usize].unwrap())
    }

    /// Chooses the best alternative per group and rebuilds a plan.
    pub fn extract(&self, root: u32) -> Plan {
        let mut plan = Plan::new();
        let root_id = self.extract_group(root, &mut plan);
        plan.root = root_id;
        plan
    }

    fn extract_group(&self, group: u32, plan: &mut Plan) -> u32 {
        let (alt, _) = self.best(group);
        let node = &self.group(group).alternatives[alt];
        let mut children: Vec<u32> = Vec::new();
        for &c in &node.children {
            children.push(self.extract_group(c, plan));
        }
        let kind = match &node.kind {
            PlanKind::Loop { times, .. } => {
                PlanKind::Loop { times: *times, body_root: children[1] }
            }
            other => other.clone(),
        };
        let input = children.first().copied();
        plan.add(kind, input, node.columns.clone())
    }

    /// (best alternative index, (node count, -pushdown score)).
    fn best(&self, group: u32) -> (usize, (u64, i64)) {
        let g = self.group(group);
        let mut best: Option<(usize, (u64, i64))> = None;
        for (i, alt) in g.alternatives.iter().enumerate() {
            let mut count = 1u64;
            let mut push = -pushdown_score(&alt.kind);
            for &c in &alt.children {
                let (_, (cc, cp)) = self.best(c);
                count += cc;
                push += cp;
            }
            let cost = (count, push);
            if best.map_or(true, |(_, b)| cost < b) {
                best = Some((i, cost));
            }
        }
        best.expect("group has alternatives")
    }
}

/// How much storage-side work an operator absorbs; higher is better.
fn pushdown_score(kind: &PlanKind) -> i64 {
    match kind {
        PlanKind::GetNeighbors { pushed_filter, pushed_limit, .. } => {
            pushed_filter.is_some() as i64 + pushed_limit.is_some() as i64
        }
        PlanKind::IndexScan { spec, .. } => {
            2 + match spec {
                crate::storage::reads::ScanSpec::FullEquality(_) => 2,
                crate::storage::reads::ScanSpec::PrefixEquality(v) if !v.is_empty() => 1,
                crate::storage::reads::ScanSpec::Range { .. } => 1,
                _ => 0,
            }
        }
        PlanKind::TopN { .. } => 1,
        _ => 0,
    }
}

/// Optimizes a plan: exploration to fixpoint under the budget, then
/// best-alternative extraction. On budget exhaustion the naive plan is
/// returned unchanged along with the diagnostic.
pub fn optimize(plan: &Plan, space: Option<&SpaceCatalog>) -> (Plan, Option<QueryError>) {
    let (mut memo, root) = Memo::from_plan(plan);
    let rules = all_rules();
    let ctx = OptContext { space };
    let mut applications = 0usize;
    loop {
        let mut changed = false;
        for gid in 0..memo.groups.len() as u32 {
            let mut alt = 0;
            while alt < memo.group(gid).alternatives.len() {
                for rule in &rules {
                    if applications >= RULE_BUDGET {
                        return (plan.clone(), Some(QueryError::RuleBudgetExceeded));
                    }
                    if let Some(new_nodes) = rule.apply(&mut memo, &ctx, gid, alt) {
                        let mut any = false;
                        for n in new_nodes {
                            any |= memo.add_alternative(gid, n);
                        }
                        if any {
                            applications += 1;
                            changed = true;
                        }
                    }
                }
                alt += 1;
            }
        }
        if !changed {
            break;
        }
    }
    (memo.extract(root), None)
}
