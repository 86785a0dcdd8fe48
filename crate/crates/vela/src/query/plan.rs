//! Logical/physical plan nodes. The planner emits the canonical naive
//! shape; the optimizer rewrites it.

use super::ast::AggFunc;
use crate::cluster::EdgeOpSpec;
use crate::codec::{Direction, PartId, Rank, SpaceId, Vid};
use crate::expr::Expr;
use crate::meta::{IndexDef, MetaCommand, SchemaDef};
use crate::storage::reads::ScanSpec;
use crate::storage::PartitionCommand;

/// One output item of an Aggregate node, in yield order.
#[derive(Debug, Clone, PartialEq)]
pub enum AggItem {
    Key(Expr, String),
    Agg(AggFunc, Option<Expr>, String),
}

impl AggItem {
    pub fn name(&self) -> &str {
        match self {
            AggItem::Key(_, n) | AggItem::Agg(_, _, n) => n,
        }
    }
}

/// Where a GetNeighbors node takes its frontier from.
#[derive(Debug, Clone, PartialEq)]
pub enum Frontier {
    /// The `_frontier` column of the input dataset.
    Column(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanTarget {
    Tag(SchemaDef),
    Edge(SchemaDef),
}

impl ScanTarget {
    pub fn schema(&self) -> &SchemaDef {
        match self {
            ScanTarget::Tag(s) | ScanTarget::Edge(s) => s,
        }
    }

    pub fn is_edge(&self) -> bool {
        matches!(self, ScanTarget::Edge(_))
    }
}

/// Resolved mutation statements, executed through the cluster client.
#[derive(Debug, Clone, PartialEq)]
pub enum MutationKind {
    InsertVertices { space: SpaceId, inserts: Vec<(PartId, PartitionCommand)> },
    InsertEdges { space: SpaceId, specs: Vec<EdgeOpSpec> },
    DeleteVertices { space: SpaceId, vids: Vec<String>, with_edge: bool },
    DeleteEdges { space: SpaceId, specs: Vec<EdgeOpSpec> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShowKind {
    Spaces,
    Tags,
    Edges,
    TagIndexes,
    EdgeIndexes,
    Hosts,
    Snapshots,
    SlowQueries,
    Users,
    DescribeTag,
    DescribeEdge,
}

/// Commands that execute as a single plan node.
#[derive(Debug, Clone, PartialEq)]
pub enum CommandKind {
    Meta { cmd: MetaCommand, admin_gated: bool },
    Mutation(MutationKind),
    Show { kind: ShowKind, name: Option<String>, space: Option<SpaceId> },
    Use { name: String },
    BalanceData,
    CreateSnapshot,
    KillQuery(u64),
    RebuildIndex { space: SpaceId, name: String },
}

impl CommandKind {
    /// The node name shown by EXPLAIN.
    pub fn node_name(&self) -> String {
        match self {
            CommandKind::Meta { cmd, .. } => match cmd {
                MetaCommand::CreateSpace { .. } => "CreateSpace".into(),
                MetaCommand::DropSpace { .. } => "DropSpace".into(),
                MetaCommand::CreateSchema { kind, .. } => match kind {
                    crate::meta::SchemaKind::Tag => "CreateTag".into(),
                    crate::meta::SchemaKind::Edge => "CreateEdge".into(),
                },
                MetaCommand::AlterSchema { .. } => "AlterSchema".into(),
                MetaCommand::DropSchema { .. } => "DropSchema".into(),
                MetaCommand::CreateIndex { .. } => "CreateIndex".into(),
                MetaCommand::DropIndex { .. } => "DropIndex".into(),
                MetaCommand::AddHost { .. } => "AddHost".into(),
                MetaCommand::RemoveHost { .. } => "RemoveHost".into(),
                MetaCommand::CreateUser { .. } => "CreateUser".into(),
                MetaCommand::DropUser { .. } => "DropUser".into(),
                MetaCommand::GrantRole { .. } => "GrantRole".into(),
                MetaCommand::RevokeRole { .. } => "RevokeRole".into(),
                other => format!("{:?}", std::mem::discriminant(other)),
            },
            CommandKind::Mutation(m) => match m {
                MutationKind::InsertVertices { .. } => "InsertVertex".into(),
                MutationKind::InsertEdges { .. } => "InsertEdge".into(),
                MutationKind::DeleteVertices { .. } => "DeleteVertex".into(),
                MutationKind::DeleteEdges { .. } => "DeleteEdge".into(),
            },
            CommandKind::Show { kind, .. } => format!("Show{:?}", kind),
            CommandKind::Use { .. } => "UseSpace".into(),
            CommandKind::BalanceData => "BalanceData".into(),
            CommandKind::CreateSnapshot => "CreateSnapshot".into(),
            CommandKind::KillQuery(_) => "KillQuery".into(),
            CommandKind::RebuildIndex { .. } => "RebuildIndex".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanKind {
    Start {
        /// Initial frontier vids (GO), or empty for a one-row constant
        /// input (plain YIELD).
        frontier: Vec<Vid>,
    },
    GetNeighbors {
        space: SpaceId,
        from: Frontier,
        directions: Vec<Direction>,
        edges: Vec<crate::storage::reads::EdgeTypeSpec>,
        /// Edge properties materialized into output columns.
        props: Vec<(String, String)>,
        pushed_filter: Option<Expr>,
        pushed_limit: Option<u64>,
    },
    GetVertexProps {
        space: SpaceId,
        tag: SchemaDef,
        vids: Vec<Vid>,
    },
    GetEdgeProps {
        space: SpaceId,
        edge: SchemaDef,
        refs: Vec<(Vid, Rank, Vid)>,
    },
    FullScan {
        space: SpaceId,
        target: ScanTarget,
    },
    IndexScan {
        space: SpaceId,
        index: IndexDef,
        target: ScanTarget,
        spec: ScanSpec,
        /// Whether data rows are fetched to materialize property columns.
        fetch_props: bool,
    },
    Filter {
        expr: Expr,
    },
    Project {
        items: Vec<(Expr, String)>,
    },
    Dedup,
    Sort {
        keys: Vec<(String, bool)>,
    },
    Limit {
        count: u64,
        offset: u64,
    },
    TopN {
        keys: Vec<(String, bool)>,
        count: u64,
        offset: u64,
    },
    Aggregate {
        group_keys: Vec<Expr>,
        items: Vec<AggItem>,
    },
    Loop {
        times: u64,
        body_root: u32,
    },
    DataCollect,
    Command(Box<CommandKind>),
}

impl PlanKind {
    pub fn name(&self) -> String {
        match self {
            PlanKind::Start { .. } => "Start".into(),
            PlanKind::GetNeighbors { .. } => "GetNeighbors".into(),
            PlanKind::GetVertexProps { .. } => "GetVertexProps".into(),
            PlanKind::GetEdgeProps { .. } => "GetEdgeProps".into(),
            PlanKind::FullScan { .. } => "FullScan".into(),
            PlanKind::IndexScan { .. } => "IndexScan".into(),
            PlanKind::Filter { .. } => "Filter".into(),
            PlanKind::Project { .. } => "Project".into(),
            PlanKind::Dedup => "Dedup".into(),
            PlanKind::Sort { .. } => "Sort".into(),
            PlanKind::Limit { .. } => "Limit".into(),
            PlanKind::TopN { .. } => "TopN".into(),
            PlanKind::Aggregate { .. } => "Aggregate".into(),
            PlanKind::Loop { .. } => "Loop".into(),
            PlanKind::DataCollect => "DataCollect".into(),
            PlanKind::Command(c) => c.node_name(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanNode {
    pub id: u32,
    pub kind: PlanKind,
    pub input: Option<u32>,
    pub columns: Vec<String>,
}

/// A plan arena. Node ids are indexes; chains link through `input`;
/// Loop bodies hang off `body_root` (the only back-reference).
#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub nodes: Vec<PlanNode>,
    pub root: u32,
}

impl Plan {
    pub fn new() -> Plan {
        Plan { nodes: Vec::new(), root: 0 }
    }

    pub fn add(&mut self, kind: PlanKind, input: Option<u32>, columns: Vec<String>) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(PlanNode { id, kind, input, columns });
        self.root = id;
        id
    }

    pub fn node(&self, id: u32) -> &PlanNode {
        &self.nodes[id as usize]
    }

    pub fn columns(&self) -> &[String] {
        &self.nodes[self.root as usize].columns
    }
}

impl Default for Plan {
    fn default() -> Self {
        Plan::new()
    }
}

// ---------------------------------------------------------------------------
// The planner: typed statements -> the canonical naive plan
// ---------------------------------------------------------------------------

use super::ast::YieldValue;
use super::validate::{GoFrom, LogicalQuery, LogicalStep, NamedYield, Typed};
use crate::expr::EdgeAccessor;

pub const FRONTIER_COL: &str = "_frontier";

fn gn_columns(edges: &[crate::storage::reads::EdgeTypeSpec], props: &[(String, String)]) -> Vec<String> {
    let _ = edges;
    let mut cols = vec![
        "_src".to_string(),
        "_type".to_string(),
        "_rank".to_string(),
        "_dst".to_string(),
        "_next".to_string(),
    ];
    for (owner, name) in props {
        cols.push(format!("{owner}.{name}"));
    }
    cols
}

pub fn scan_columns(target: &ScanTarget) -> Vec<String> {
    let mut cols = Vec::new();
    match target {
        ScanTarget::Tag(t) => {
            cols.push("_vid".to_string());
            for p in t.current() {
                cols.push(format!("{}.{}", t.name, p.name));
            }
        }
        ScanTarget::Edge(e) => {
            cols.push("_src".to_string());
            cols.push("_rank".to_string());
            cols.push("_dst".to_string());
            for p in e.current() {
                cols.push(format!("{}.{}", e.name, p.name));
            }
        }
    }
    cols
}

fn yields_to_items(yields: &[NamedYield]) -> Vec<(crate::expr::Expr, String)> {
    yields
        .iter()
        .map(|y| match &y.value {
            YieldValue::Expr(e) => (e.clone(), y.name.clone()),
            YieldValue::Agg(..) => unreachable!("aggregates are planned as Aggregate nodes"),
        })
        .collect()
}

/// Substitutes edge accessors for the zero-step GO case: DST(EDGE)
/// becomes the frontier vid itself, everything else edge-typed is Null.
fn zero_step_expr(e: &crate::expr::Expr) -> crate::expr::Expr {
    use crate::expr::Expr as E;
    match e {
        E::Edge(EdgeAccessor::Dst) | E::Edge(EdgeAccessor::Src) => E::InputCol(FRONTIER_COL.into()),
        E::Edge(_) | E::Prop { .. } => E::Literal(crate::value::PropertyValue::Null),
        E::Unary { op, expr } => E::Unary { op: *op, expr: Box::new(zero_step_expr(expr)) },
        E::Binary { op, lhs, rhs } => E::Binary {
            op: *op,
            lhs: Box::new(zero_step_expr(lhs)),
            rhs: Box::new(zero_step_expr(rhs)),
        },
        other => other.clone(),
    }
}

/// Builds the naive plan for a validated statement. No optimization
/// is applied here.
pub fn build_plan(typed: &Typed) -> Plan {
    match typed {
        Typed::Command(cmd) => {
            let mut plan = Plan::new();
            plan.add(PlanKind::Command(Box::new(cmd.clone())), None, Vec::new());
            plan
        }
        Typed::Explain { inner, .. } => build_plan(inner),
        Typed::Query(q) => build_query_plan(q),
    }
}

pub fn build_query_plan(q: &LogicalQuery) -> Plan {
    let mut plan = Plan::new();
    let mut current: Option<u32> = None;
    for step in &q.steps {
        current = Some(build_step(&mut plan, q.space, step, current));
    }
    let cols = current.map(|id| plan.node(id).columns.clone()).unwrap_or_default();
    plan.add(PlanKind::DataCollect, current, cols);
    plan
}

fn build_step(plan: &mut Plan, space: SpaceId, step: &LogicalStep, input: Option<u32>) -> u32 {
    match step {
        LogicalStep::Go { steps, from, edges, directions, filter, yields, props, distinct } => {
            // frontier source
            let mut cur = match from {
                GoFrom::Vids(vids) => plan.add(
                    PlanKind::Start { frontier: vids.clone() },
                    None,
                    vec![FRONTIER_COL.into()],
                ),
                GoFrom::Column(c) => plan.add(
                    PlanKind::Project {
                        items: vec![(Expr::InputCol(c.clone()), FRONTIER_COL.into())],
                    },
                    input,
                    vec![FRONTIER_COL.into()],
                ),
            };
            if *steps == 0 {
                // the loop body never runs; a rule later removes it
                let body_gn = plan.add(
                    PlanKind::GetNeighbors {
                        space,
                        from: Frontier::Column(FRONTIER_COL.into()),
                        directions: directions.clone(),
                        edges: edges.clone(),
                        props: Vec::new(),
                        pushed_filter: None,
                        pushed_limit: None,
                    },
                    None,
                    gn_columns(edges, &[]),
                );
                let body_root = plan.add(
                    PlanKind::Project {
                        items: vec![(Expr::InputCol("_next".into()), FRONTIER_COL.into())],
                    },
                    Some(body_gn),
                    vec![FRONTIER_COL.into()],
                );
                cur = plan.add(
                    PlanKind::Loop { times: 0, body_root },
                    Some(cur),
                    vec![FRONTIER_COL.into()],
                );
                let items: Vec<(Expr, String)> = yields
                    .iter()
                    .map(|y| match &y.value {
                        YieldValue::Expr(e) => (zero_step_expr(e), y.name.clone()),
                        YieldValue::Agg(..) => unreachable!(),
                    })
                    .collect();
                let cols = items.iter().map(|(_, n)| n.clone()).collect();
                let mut out = plan.add(PlanKind::Project { items }, Some(cur), cols);
                if *distinct {
                    let cols = plan.node(out).columns.clone();
                    out = plan.add(PlanKind::Dedup, Some(out), cols);
                }
                return out;
            }
            if *steps > 1 {
                let body_gn = plan.add(
                    PlanKind::GetNeighbors {
                        space,
                        from: Frontier::Column(FRONTIER_COL.into()),
                        directions: directions.clone(),
                        edges: edges.clone(),
                        props: Vec::new(),
                        pushed_filter: None,
                        pushed_limit: None,
                    },
                    None,
                    gn_columns(edges, &[]),
                );
                let body_root = plan.add(
                    PlanKind::Project {
                        items: vec![(Expr::InputCol("_next".into()), FRONTIER_COL.into())],
                    },
                    Some(body_gn),
                    vec![FRONTIER_COL.into()],
                );
                cur = plan.add(
                    PlanKind::Loop { times: steps - 1, body_root },
                    Some(cur),
                    vec![FRONTIER_COL.into()],
                );
            }
            // final expansion materializes the referenced properties
            cur = plan.add(
                PlanKind::GetNeighbors {
                    space,
                    from: Frontier::Column(FRONTIER_COL.into()),
                    directions: directions.clone(),
                    edges: edges.clone(),
                    props: props.clone(),
                    pushed_filter: None,
                    pushed_limit: None,
                },
                Some(cur),
                gn_columns(edges, props),
            );
            if let Some(f) = filter {
                let cols = plan.node(cur).columns.clone();
                cur = plan.add(PlanKind::Filter { expr: f.clone() }, Some(cur), cols);
            }
            let items = yields_to_items(yields);
            let cols: Vec<String> = items.iter().map(|(_, n)| n.clone()).collect();
            cur = plan.add(PlanKind::Project { items }, Some(cur), cols);
            if *distinct {
                let cols = plan.node(cur).columns.clone();
                cur = plan.add(PlanKind::Dedup, Some(cur), cols);
            }
            cur
        }
        LogicalStep::Lookup { target, filter, yields } => {
            let start = plan.add(PlanKind::Start { frontier: Vec::new() }, None, Vec::new());
            let mut cur = plan.add(
                PlanKind::FullScan { space, target: target.clone() },
                Some(start),
                scan_columns(target),
            );
            if let Some(f) = filter {
                let cols = plan.node(cur).columns.clone();
                cur = plan.add(PlanKind::Filter { expr: f.clone() }, Some(cur), cols);
            }
            let items = yields_to_items(yields);
            let cols: Vec<String> = items.iter().map(|(_, n)| n.clone()).collect();
            plan.add(PlanKind::Project { items }, Some(cur), cols)
        }
        LogicalStep::FetchVertex { tag, vids, yields } => {
            let start = plan.add(PlanKind::Start { frontier: Vec::new() }, None, Vec::new());
            let target = ScanTarget::Tag(tag.clone());
            let cur = plan.add(
                PlanKind::GetVertexProps { space, tag: tag.clone(), vids: vids.clone() },
                Some(start),
                scan_columns(&target),
            );
            let items = yields_to_items(yields);
            let cols: Vec<String> = items.iter().map(|(_, n)| n.clone()).collect();
            plan.add(PlanKind::Project { items }, Some(cur), cols)
        }
        LogicalStep::FetchEdge { edge, refs, yields } => {
            let start = plan.add(PlanKind::Start { frontier: Vec::new() }, None, Vec::new());
            let target = ScanTarget::Edge(edge.clone());
            let cur = plan.add(
                PlanKind::GetEdgeProps { space, edge: edge.clone(), refs: refs.clone() },
                Some(start),
                scan_columns(&target),
            );
            let items = yields_to_items(yields);
            let cols: Vec<String> = items.iter().map(|(_, n)| n.clone()).collect();
            plan.add(PlanKind::Project { items }, Some(cur), cols)
        }
        LogicalStep::Project { items, filter, distinct } => {
            let mut cur = match input {
                Some(id) => id,
                None => plan.add(PlanKind::Start { frontier: Vec::new() }, None, Vec::new()),
            };
            if let Some(f) = filter {
                let cols = plan.node(cur).columns.clone();
                cur = plan.add(PlanKind::Filter { expr: f.clone() }, Some(cur), cols);
            }
            let proj_items = yields_to_items(items);
            let cols: Vec<String> = proj_items.iter().map(|(_, n)| n.clone()).collect();
            cur = plan.add(PlanKind::Project { items: proj_items }, Some(cur), cols);
            if *distinct {
                let cols = plan.node(cur).columns.clone();
                cur = plan.add(PlanKind::Dedup, Some(cur), cols);
            }
            cur
        }
        LogicalStep::AggregateAll { aggs, filter } => {
            let mut cur = input.expect("aggregate needs input");
            if let Some(f) = filter {
                let cols = plan.node(cur).columns.clone();
                cur = plan.add(PlanKind::Filter { expr: f.clone() }, Some(cur), cols);
            }
            let items: Vec<AggItem> = aggs
                .iter()
                .map(|y| match &y.value {
                    YieldValue::Agg(f, e) => AggItem::Agg(*f, e.clone(), y.name.clone()),
                    YieldValue::Expr(e) => AggItem::Key(e.clone(), y.name.clone()),
                })
                .collect();
            let cols: Vec<String> = items.iter().map(|i| i.name().to_string()).collect();
            plan.add(
                PlanKind::Aggregate { group_keys: Vec::new(), items },
                Some(cur),
                cols,
            )
        }
        LogicalStep::GroupBy { keys, items } => {
            let cur = input.expect("group by needs input");
            let agg_items: Vec<AggItem> = items
                .iter()
                .map(|y| match &y.value {
                    YieldValue::Agg(f, e) => AggItem::Agg(*f, e.clone(), y.name.clone()),
                    YieldValue::Expr(e) => AggItem::Key(e.clone(), y.name.clone()),
                })
                .collect();
            let cols: Vec<String> = agg_items.iter().map(|i| i.name().to_string()).collect();
            plan.add(
                PlanKind::Aggregate { group_keys: keys.clone(), items: agg_items },
                Some(cur),
                cols,
            )
        }
        LogicalStep::OrderBy { keys } => {
            let cur = input.expect("order by needs input");
            let cols = plan.node(cur).columns.clone();
            plan.add(PlanKind::Sort { keys: keys.clone() }, Some(cur), cols)
        }
        LogicalStep::Limit { count, offset } => {
            let cur = input.expect("limit needs input");
            let cols = plan.node(cur).columns.clone();
            plan.add(PlanKind::Limit { count: *count, offset: *offset }, Some(cur), cols)
        }
    }
}
