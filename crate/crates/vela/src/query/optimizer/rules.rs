//! The transformation rules. Every transform adds result-equivalent
//! alternatives to the matched group (possibly creating new child
//! groups); it never removes or edits existing ones, so exploration is
//! monotone and rule locality holds by construction.

use super::index_choice::choose_index;
use super::{Memo, OptGroupNode};
use crate::expr::{BinOp, Expr};
use crate::meta::SpaceCatalog;
use crate::query::plan::{scan_columns, PlanKind};
use crate::storage::reads::ScanSpec;

/// Matching shape over plan-node kinds: a root kind and optionally a
/// required kind in the first child group.
pub struct Pattern {
    pub root: &'static str,
    pub child: Option<&'static str>,
}

pub struct OptContext<'a> {
    pub space: Option<&'a SpaceCatalog>,
}

pub trait OptRule {
    fn name(&self) -> &'static str;
    fn pattern(&self) -> Pattern;
    /// If the alternative (and some child alternative) matches, returns
    /// replacement alternatives for the matched group.
    fn transform(
        &self,
        memo: &mut Memo,
        ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>>;

    fn apply(
        &self,
        memo: &mut Memo,
        ctx: &OptContext,
        group: u32,
        alt: usize,
    ) -> Option<Vec<OptGroupNode>> {
        let root = memo.group(group).alternatives[alt].clone();
        let pattern = self.pattern();
        if root.kind.name() != pattern.root {
            return None;
        }
        match pattern.child {
            None => self.transform(memo, ctx, &root, None),
            Some(child_kind) => {
                let child_group = *root.children.first()?;
                let candidates: Vec<OptGroupNode> = memo
                    .group(child_group)
                    .alternatives
                    .iter()
                    .filter(|a| a.kind.name() == child_kind)
                    .cloned()
                    .collect();
                for child in &candidates {
                    if let Some(out) = self.transform(memo, ctx, &root, Some(child)) {
                        return Some(out);
                    }
                }
                None
            }
        }
    }
}

pub fn all_rules() -> Vec<Box<dyn OptRule>> {
    vec![
        Box::new(PushFilterDownGetNeighbors),
        Box::new(PushFilterDownIndexScan),
        Box::new(PushLimitDownGetNeighbors),
        Box::new(MergeSortLimitToTopN),
        Box::new(CollapseAdjacentProjects),
        Box::new(RemoveNoopProject),
        Box::new(IndexScanSelection),
        Box::new(EliminateEmptyLoop),
    ]
}

fn and_all(mut conjuncts: Vec<Expr>) -> Option<Expr> {
    let mut result = conjuncts.pop()?;
    while let Some(c) = conjuncts.pop() {
        result = Expr::Binary { op: BinOp::And, lhs: Box::new(c), rhs: Box::new(result) };
    }
    Some(result)
}

/// Filter over GetNeighbors with edge-local predicates: the pushable
/// conjuncts move into the storage scan; any residual keeps a Filter.
struct PushFilterDownGetNeighbors;

impl OptRule for PushFilterDownGetNeighbors {
    fn name(&self) -> &'static str {
        "PushFilterDownGetNeighbors"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Filter", child: Some("GetNeighbors") }
    }

    fn transform(
        &self,
        memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Filter { expr } = &root.kind else { return None };
        let gn = child.unwrap();
        let PlanKind::GetNeighbors {
            space,
            from,
            directions,
            edges,
            props,
            pushed_filter: None,
            pushed_limit,
        } = &gn.kind
        else {
            return None;
        };
        let edge_names: Vec<String> = edges.iter().map(|e| e.name.clone()).collect();
        let (pushable, residual): (Vec<Expr>, Vec<Expr>) = expr
            .conjuncts()
            .into_iter()
            .cloned()
            .partition(|c| c.edge_local(&edge_names));
        if pushable.is_empty() {
            return None;
        }
        let pushed = OptGroupNode {
            kind: PlanKind::GetNeighbors {
                space: *space,
                from: from.clone(),
                directions: directions.clone(),
                edges: edges.clone(),
                props: props.clone(),
                pushed_filter: and_all(pushable),
                pushed_limit: *pushed_limit,
            },
            columns: gn.columns.clone(),
            children: gn.children.clone(),
        };
        if residual.is_empty() {
            return Some(vec![pushed]);
        }
        let pushed_group = memo.add_group(pushed);
        Some(vec![OptGroupNode {
            kind: PlanKind::Filter { expr: and_all(residual).unwrap() },
            columns: root.columns.clone(),
            children: vec![pushed_group],
        }])
    }
}

/// Filter over an unconstrained IndexScan: tighten the scan spec from
/// the filter's predicates, keeping uncovered conjuncts as residual.
struct PushFilterDownIndexScan;

impl OptRule for PushFilterDownIndexScan {
    fn name(&self) -> &'static str {
        "PushFilterDownIndexScan"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Filter", child: Some("IndexScan") }
    }

    fn transform(
        &self,
        memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Filter { expr } = &root.kind else { return None };
        let scan = child.unwrap();
        let PlanKind::IndexScan { space, index, target, spec, fetch_props } = &scan.kind else {
            return None;
        };
        if *spec != ScanSpec::PrefixEquality(Vec::new()) {
            return None; // already tightened
        }
        let conjuncts: Vec<Expr> = expr.conjuncts().into_iter().cloned().collect();
        let choice = choose_index(&conjuncts, &[index])?;
        let tightened = OptGroupNode {
            kind: PlanKind::IndexScan {
                space: *space,
                index: choice.index,
                target: target.clone(),
                spec: choice.spec,
                fetch_props: *fetch_props,
            },
            columns: scan.columns.clone(),
            children: scan.children.clone(),
        };
        if choice.residual.is_empty() {
            return Some(vec![tightened]);
        }
        let scan_group = memo.add_group(tightened);
        Some(vec![OptGroupNode {
            kind: PlanKind::Filter { expr: and_all(choice.residual).unwrap() },
            columns: root.columns.clone(),
            children: vec![scan_group],
        }])
    }
}

/// Limit over GetNeighbors: the per-scan row cap moves storage-side;
/// the outer Limit stays for exactness across vids.
struct PushLimitDownGetNeighbors;

impl OptRule for PushLimitDownGetNeighbors {
    fn name(&self) -> &'static str {
        "PushLimitDownGetNeighbors"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Limit", child: Some("GetNeighbors") }
    }

    fn transform(
        &self,
        memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Limit { count, offset } = &root.kind else { return None };
        let gn = child.unwrap();
        let PlanKind::GetNeighbors {
            space,
            from,
            directions,
            edges,
            props,
            pushed_filter,
            pushed_limit: None,
        } = &gn.kind
        else {
            return None;
        };
        let pushed = OptGroupNode {
            kind: PlanKind::GetNeighbors {
                space: *space,
                from: from.clone(),
                directions: directions.clone(),
                edges: edges.clone(),
                props: props.clone(),
                pushed_filter: pushed_filter.clone(),
                pushed_limit: Some(count + offset),
            },
            columns: gn.columns.clone(),
            children: gn.children.clone(),
        };
        let pushed_group = memo.add_group(pushed);
        Some(vec![OptGroupNode {
            kind: PlanKind::Limit { count: *count, offset: *offset },
            columns: root.columns.clone(),
            children: vec![pushed_group],
        }])
    }
}

/// Limit over Sort folds into a single TopN.
struct MergeSortLimitToTopN;

impl OptRule for MergeSortLimitToTopN {
    fn name(&self) -> &'static str {
        "MergeSortLimitToTopN"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Limit", child: Some("Sort") }
    }

    fn transform(
        &self,
        _memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Limit { count, offset } = &root.kind else { return None };
        let sort = child.unwrap();
        let PlanKind::Sort { keys } = &sort.kind else { return None };
        Some(vec![OptGroupNode {
            kind: PlanKind::TopN { keys: keys.clone(), count: *count, offset: *offset },
            columns: root.columns.clone(),
            children: sort.children.clone(),
        }])
    }
}

/// Project over Project composes into one Project.
struct CollapseAdjacentProjects;

fn substitute(expr: &Expr, bindings: &[(Expr, String)]) -> Option<Expr> {
    Some(match expr {
        Expr::InputCol(name) => {
            let (inner, _) = bindings.iter().find(|(_, n)| n == name)?;
            inner.clone()
        }
        Expr::Unary { op, expr } => {
            Expr::Unary { op: *op, expr: Box::new(substitute(expr, bindings)?) }
        }
        Expr::Binary { op, lhs, rhs } => Expr::Binary {
            op: *op,
            lhs: Box::new(substitute(lhs, bindings)?),
            rhs: Box::new(substitute(rhs, bindings)?),
        },
        // a nested Project's output has no live edge/vertex context, so
        // any other reference kind cannot be composed through it
        Expr::Literal(v) => Expr::Literal(v.clone()),
        _ => return None,
    })
}

impl OptRule for CollapseAdjacentProjects {
    fn name(&self) -> &'static str {
        "CollapseAdjacentProjects"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Project", child: Some("Project") }
    }

    fn transform(
        &self,
        _memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Project { items: outer } = &root.kind else { return None };
        let inner_node = child.unwrap();
        let PlanKind::Project { items: inner } = &inner_node.kind else { return None };
        let composed: Option<Vec<(Expr, String)>> = outer
            .iter()
            .map(|(e, n)| substitute(e, inner).map(|e2| (e2, n.clone())))
            .collect();
        let composed = composed?;
        Some(vec![OptGroupNode {
            kind: PlanKind::Project { items: composed },
            columns: root.columns.clone(),
            children: inner_node.children.clone(),
        }])
    }
}

/// A Project that renames nothing and keeps every input column in order
/// disappears.
struct RemoveNoopProject;

impl OptRule for RemoveNoopProject {
    fn name(&self) -> &'static str {
        "RemoveNoopProject"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Project", child: None }
    }

    fn transform(
        &self,
        memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        _child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Project { items } = &root.kind else { return None };
        let child_group = *root.children.first()?;
        let child_cols = memo.group(child_group).alternatives[0].columns.clone();
        if items.len() != child_cols.len() {
            return None;
        }
        let noop = items.iter().zip(&child_cols).all(|((e, out_name), in_name)| {
            out_name == in_name && matches!(e, Expr::InputCol(c) if c == in_name)
        });
        if !noop {
            return None;
        }
        Some(memo.group(child_group).alternatives.clone())
    }
}

/// FullScan under a Filter becomes a scan of the chosen index (rule
/// order: single-property comparison, single-property prefix, composite)
/// with the filter kept; PushFilterDownIndexScan then tightens the spec.
struct IndexScanSelection;

impl OptRule for IndexScanSelection {
    fn name(&self) -> &'static str {
        "IndexScanSelection"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Filter", child: Some("FullScan") }
    }

    fn transform(
        &self,
        memo: &mut Memo,
        ctx: &OptContext,
        root: &OptGroupNode,
        child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Filter { expr } = &root.kind else { return None };
        let scan = child.unwrap();
        let PlanKind::FullScan { space, target } = &scan.kind else { return None };
        let s = ctx.space?;
        let schema_id = target.schema().id;
        let index_target = if target.is_edge() {
            crate::meta::IndexTarget::Edge(schema_id)
        } else {
            crate::meta::IndexTarget::Tag(schema_id)
        };
        let indexes = s.indexes_for(index_target);
        if indexes.is_empty() {
            return None;
        }
        let conjuncts: Vec<Expr> = expr.conjuncts().into_iter().cloned().collect();
        let choice = choose_index(&conjuncts, &indexes)?;
        let index_scan = OptGroupNode {
            kind: PlanKind::IndexScan {
                space: *space,
                index: choice.index,
                target: target.clone(),
                // unconstrained; PushFilterDownIndexScan narrows it
                spec: ScanSpec::PrefixEquality(Vec::new()),
                fetch_props: true,
            },
            columns: scan_columns(target),
            children: scan.children.clone(),
        };
        let scan_group = memo.add_group(index_scan);
        Some(vec![OptGroupNode {
            kind: PlanKind::Filter { expr: expr.clone() },
            columns: root.columns.clone(),
            children: vec![scan_group],
        }])
    }
}

/// A Loop that runs zero times passes its input through.
struct EliminateEmptyLoop;

impl OptRule for EliminateEmptyLoop {
    fn name(&self) -> &'static str {
        "EliminateEmptyLoop"
    }

    fn pattern(&self) -> Pattern {
        Pattern { root: "Loop", child: None }
    }

    fn transform(
        &self,
        memo: &mut Memo,
        _ctx: &OptContext,
        root: &OptGroupNode,
        _child: Option<&OptGroupNode>,
    ) -> Option<Vec<OptGroupNode>> {
        let PlanKind::Loop { times: 0, .. } = &root.kind else { return None };
        let input_group = *root.children.first()?;
        Some(memo.group(input_group).alternatives.clone())
    }
}
