//! Plan execution: row-oriented executors over a storage backend, with
//! kill-flag checks between nodes and per-node PROFILE counters.

use super::ast::AggFunc;
use super::plan::{
    AggItem, CommandKind, Frontier, MutationKind, Plan, PlanKind, PlanNode, ScanTarget, ShowKind,
};
use super::QueryError;
use crate::cluster::{ClientOp, EdgeOpSpec, OpResult};
use crate::codec::{PartId, Rank, SpaceId, Vid};
use crate::expr::{EdgeAccessor, EvalContext, Expr};
use crate::meta::{Catalog, HostStatus, IndexDef, MetaCommand, MetaResponse, SchemaDef, UserRole};
use crate::storage::reads::{IndexRef, NeighborsSpec, ScanSpec};
use crate::storage::{PartitionCommand, StorageError};
use crate::value::{DataSet, PropertyValue, Row};
use std::collections::BTreeMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::Instant;

/// Storage and control surface the executors run against. The embedded
/// cluster implements this directly; a remote client can too.
pub trait QueryBackend {
    fn catalog_snapshot(&self) -> Catalog;
    fn get_neighbors(
        &self,
        space: SpaceId,
        vids: &[Vid],
        spec: &NeighborsSpec,
    ) -> Result<Vec<crate::storage::reads::NeighborRow>, StorageError>;
    fn get_vertex_rows(
        &self,
        space: SpaceId,
        tag: &SchemaDef,
        vids: &[Vid],
    ) -> Result<Vec<(Vid, Vec<PropertyValue>)>, StorageError>;
    fn get_edge_rows(
        &self,
        space: SpaceId,
        edge: &SchemaDef,
        refs: &[(Vid, Rank, Vid)],
    ) -> Result<Vec<(Vid, Rank, Vid, Vec<PropertyValue>)>, StorageError>;
    fn full_scan_tag(
        &self,
        space: SpaceId,
        schema: &SchemaDef,
    ) -> Result<Vec<(Vid, Vec<PropertyValue>)>, StorageError>;
    fn full_scan_edges(
        &self,
        space: SpaceId,
        schema: &SchemaDef,
    ) -> Result<Vec<(Vid, Rank, Vid, Vec<PropertyValue>)>, StorageError>;
    fn index_scan(
        &self,
        space: SpaceId,
        index: &IndexDef,
        spec: &ScanSpec,
    ) -> Result<Vec<IndexRef>, StorageError>;
    fn vertex_exists(&self, space: SpaceId, vid: &Vid) -> Result<bool, StorageError>;

    fn exec_meta(&mut self, cmd: MetaCommand) -> Result<MetaResponse, QueryError>;
    fn exec_part_ops(
        &mut self,
        space: SpaceId,
        ops: Vec<(PartId, PartitionCommand)>,
    ) -> Result<(), QueryError>;
    fn exec_edge_ops(&mut self, specs: Vec<EdgeOpSpec>) -> Result<(), QueryError>;
    fn delete_vertex(
        &mut self,
        space: SpaceId,
        vid: &str,
        with_edge: bool,
    ) -> Result<(), QueryError>;
    fn rebuild_index(&mut self, space: SpaceId, name: &str) -> Result<(), QueryError>;
    fn balance_data(&mut self) -> Result<usize, QueryError>;
    fn create_snapshot(&mut self) -> Result<String, QueryError>;
    fn kill_query(&mut self, id: u64) -> Result<(), QueryError>;
}

#[derive(Debug, Clone, Default)]
pub struct NodeStats {
    pub name: String,
    pub rows: u64,
    pub micros: u128,
}

#[derive(Debug, Clone)]
pub struct ExecOutcome {
    pub data: DataSet,
    pub stats: BTreeMap<u32, NodeStats>,
    /// Set when the statement was USE <space>.
    pub new_space: Option<(SpaceId, String)>,
    pub message: Option<String>,
}

struct RowCtx<'a> {
    columns: &'a [String],
    row: &'a [PropertyValue],
}

impl RowCtx<'_> {
    fn by_name(&self, name: &str) -> Option<PropertyValue> {
        self.columns
            .iter()
            .position(|c| c == name)
            .and_then(|i| self.row.get(i).cloned())
    }
}

impl EvalContext for RowCtx<'_> {
    fn input_col(&self, name: &str) -> Option<PropertyValue> {
        self.by_name(name)
    }

    fn prop(&self, owner: &str, name: &str) -> Option<PropertyValue> {
        self.by_name(&format!("{owner}.{name}"))
    }

    fn edge(&self, acc: EdgeAccessor) -> Option<PropertyValue> {
        self.by_name(acc.column())
    }

    fn vertex_id(&self) -> Option<PropertyValue> {
        self.by_name("_vid")
    }
}

pub struct Executor<'a> {
    backend: &'a mut dyn QueryBackend,
    plan: &'a Plan,
    kill: Option<&'a AtomicBool>,
    pub stats: BTreeMap<u32, NodeStats>,
    catalog: Catalog,
}

pub fn execute_plan(
    backend: &mut dyn QueryBackend,
    plan: &Plan,
    kill: Option<&AtomicBool>,
) -> Result<ExecOutcome, QueryError> {
    let catalog = backend.catalog_snapshot();
    let mut ex = Executor { backend, plan, kill, stats: BTreeMap::new(), catalog };
    let root = plan.root;
    let mut outcome = ExecOutcome {
        data: DataSet::default(),
        stats: BTreeMap::new(),
        new_space: None,
        message: None,
    };
    let data = ex.eval(root, None, &mut outcome)?;
    outcome.stats = ex.stats;
    outcome.data = data;
    Ok(outcome)
}

impl<'a> Executor<'a> {
    fn check_killed(&self) -> Result<(), QueryError> {
        if let Some(flag) = self.kill {
            if flag.load(Ordering::SeqCst) {
                return Err(QueryError::Killed);
            }
        }
        Ok(())
    }

    fn eval(
        &mut self,
        id: u32,
        injected: Option<DataSet>,
        outcome: &mut ExecOutcome,
    ) -> Result<DataSet, QueryError> {
        self.check_killed()?;
        let node = self.plan.node(id).clone();
        let input = match node.input {
            Some(i) => Some(self.eval(i, injected, outcome)?),
            None => injected,
        };
        self.check_killed()?;
        let started = Instant::now();
        let out = self.run_node(&node, input, outcome)?;
        let stat = self.stats.entry(id).or_insert_with(|| NodeStats {
            name: node.kind.name(),
            rows: 0,
            micros: 0,
        });
        stat.rows += out.rows.len() as u64;
        stat.micros += started.elapsed().as_micros();
        Ok(out)
    }

    fn vid_len(&self, space: SpaceId) -> usize {
        self.catalog.space(space).map(|s| s.def.vid_len as usize).unwrap_or(16)
    }

    fn run_node(
        &mut self,
        node: &PlanNode,
        input: Option<DataSet>,
        outcome: &mut ExecOutcome,
    ) -> Result<DataSet, QueryError> {
        match &node.kind {
            PlanKind::Start { frontier } => {
                if frontier.is_empty() {
                    Ok(DataSet { columns: Vec::new(), rows: vec![Vec::new()] })
                } else {
                    Ok(DataSet {
                        columns: node.columns.clone(),
                        rows: frontier
                            .iter()
                            .map(|v| vec![PropertyValue::Str(v.display_string())])
                            .collect(),
                    })
                }
            }
            PlanKind::GetNeighbors {
                space,
                from,
                directions,
                edges,
                props,
                pushed_filter,
                pushed_limit,
            } => {
                let input = input.unwrap_or_default();
                let Frontier::Column(col) = from;
                let idx = input
                    .column_index(col)
                    .ok_or_else(|| QueryError::Internal(format!("missing column {col}")))?;
                let vid_len = self.vid_len(*space);
                let mut vids = Vec::with_capacity(input.rows.len());
                for row in &input.rows {
                    if let PropertyValue::Str(s) = &row[idx] {
                        if let Ok(v) = Vid::new(s, vid_len) {
                            vids.push(v);
                        }
                    }
                }
                let spec = NeighborsSpec {
                    directions: directions.clone(),
                    edge_types: edges.clone(),
                    return_props: props.clone(),
                    filter: pushed_filter.clone(),
                    limit: pushed_limit.map(|l| l as usize),
                };
                let rows = self.backend.get_neighbors(*space, &vids, &spec)?;
                let mut ds = DataSet::new(node.columns.clone());
                for r in rows {
                    let mut row: Row = vec![
                        PropertyValue::Str(r.src.display_string()),
                        PropertyValue::Str(r.type_name.clone()),
                        PropertyValue::Int64(r.rank.0),
                        PropertyValue::Str(r.dst.display_string()),
                        PropertyValue::Str(r.neighbor.display_string()),
                    ];
                    row.extend(r.props);
                    ds.rows.push(row);
                }
                Ok(ds)
            }
            PlanKind::GetVertexProps { space, tag, vids } => {
                let rows = self.backend.get_vertex_rows(*space, tag, vids)?;
                let mut ds = DataSet::new(node.columns.clone());
                for (vid, values) in rows {
                    let mut row: Row = vec![PropertyValue::Str(vid.display_string())];
                    row.extend(values);
                    ds.rows.push(row);
                }
                Ok(ds)
            }
            PlanKind::GetEdgeProps { space, edge, refs } => {
                let rows = self.backend.get_edge_rows(*space, edge, refs)?;
                let mut ds = DataSet::new(node.columns.clone());
                for (src, rank, dst, values) in rows {
                    let mut row: Row = vec![
                        PropertyValue::Str(src.display_string()),
                        PropertyValue::Int64(rank.0),
                        PropertyValue::Str(dst.display_string()),
                    ];
                    row.extend(values);
                    ds.rows.push(row);
                }
                Ok(ds)
            }
            PlanKind::FullScan { space, target } => {
                let mut ds = DataSet::new(node.columns.clone());
                match target {
                    ScanTarget::Tag(schema) => {
                        for (vid, values) in self.backend.full_scan_tag(*space, schema)? {
                            let mut row: Row = vec![PropertyValue::Str(vid.display_string())];
                            row.extend(values);
                            ds.rows.push(row);
                        }
                    }
                    ScanTarget::Edge(schema) => {
                        for (src, rank, dst, values) in
                            self.backend.full_scan_edges(*space, schema)?
                        {
                            let mut row: Row = vec![
                                PropertyValue::Str(src.display_string()),
                                PropertyValue::Int64(rank.0),
                                PropertyValue::Str(dst.display_string()),
                            ];
                            row.extend(values);
                            ds.rows.push(row);
                        }
                    }
                }
                Ok(ds)
            }
            PlanKind::IndexScan { space, index, target, spec, fetch_props } => {
                let refs = self.backend.index_scan(*space, index, spec)?;
                let mut ds = DataSet::new(node.columns.clone());
                match target {
                    ScanTarget::Tag(schema) => {
                        let vids: Vec<Vid> = refs
                            .into_iter()
                            .filter_map(|r| match r {
                                IndexRef::Vertex(v) => Some(v),
                                IndexRef::Edge { .. } => None,
                            })
                            .collect();
                        if *fetch_props {
                            for (vid, values) in
                                self.backend.get_vertex_rows(*space, schema, &vids)?
                            {
                                let mut row: Row =
                                    vec![PropertyValue::Str(vid.display_string())];
                                row.extend(values);
                                ds.rows.push(row);
                            }
                        } else {
                            for vid in vids {
                                let mut row: Row =
                                    vec![PropertyValue::Str(vid.display_string())];
                                row.resize(node.columns.len(), PropertyValue::Null);
                                ds.rows.push(row);
                            }
                        }
                    }
                    ScanTarget::Edge(schema) => {
                        let erefs: Vec<(Vid, Rank, Vid)> = refs
                            .into_iter()
                            .filter_map(|r| match r {
                                IndexRef::Edge { src, rank, dst } => Some((src, rank, dst)),
                                IndexRef::Vertex(_) => None,
                            })
                            .collect();
                        if *fetch_props {
                            for (src, rank, dst, values) in
                                self.backend.get_edge_rows(*space, schema, &erefs)?
                            {
                                let mut row: Row = vec![
                                    PropertyValue::Str(src.display_string()),
                                    PropertyValue::Int64(rank.0),
                                    PropertyValue::Str(dst.display_string()),
                                ];
                                row.extend(values);
                                ds.rows.push(row);
                            }
                        } else {
                            for (src, rank, dst) in erefs {
                                let mut row: Row = vec![
                                    PropertyValue::Str(src.display_string()),
                                    PropertyValue::Int64(rank.0),
                                    PropertyValue::Str(dst.display_string()),
                                ];
                                row.resize(node.columns.len(), PropertyValue::Null);
                                ds.rows.push(row);
                            }
                        }
                    }
                }
                Ok(ds)
            }
            PlanKind::Filter { expr } => {
                let input = input.unwrap_or_default();
                let mut ds = DataSet::new(input.columns.clone());
                for row in input.rows {
                    let keep =
                        expr.eval_bool(&RowCtx { columns: &input.columns, row: &row });
                    if keep {
                        ds.rows.push(row);
                    }
                }
                Ok(ds)
            }
            PlanKind::Project { items } => {
                let input = input.unwrap_or_default();
                let mut ds = DataSet::new(node.columns.clone());
                for row in &input.rows {
                    let ctx = RowCtx { columns: &input.columns, row };
                    ds.rows.push(items.iter().map(|(e, _)| e.eval(&ctx)).collect());
                }
                Ok(ds)
            }
            PlanKind::Dedup => {
                let input = input.unwrap_or_default();
                let mut seen = std::collections::BTreeSet::new();
                let mut ds = DataSet::new(input.columns.clone());
                for row in input.rows {
                    let mut key = Vec::new();
                    for v in &row {
                        v.dedup_key(&mut key);
                    }
                    if seen.insert(key) {
                        ds.rows.push(row);
                    }
                }
                Ok(ds)
            }
            PlanKind::Sort { keys } => {
                let input = input.unwrap_or_default();
                let mut ds = input.clone();
                sort_rows(&mut ds, keys);
                Ok(ds)
            }
            PlanKind::Limit { count, offset } => {
                let mut input = input.unwrap_or_default();
                let rows = std::mem::take(&mut input.rows);
                input.rows =
                    rows.into_iter().skip(*offset as usize).take(*count as usize).collect();
                Ok(input)
            }
            PlanKind::TopN { keys, count, offset } => {
                let input = input.unwrap_or_default();
                let mut ds = input.clone();
                sort_rows(&mut ds, keys);
                let rows = std::mem::take(&mut ds.rows);
                ds.rows =
                    rows.into_iter().skip(*offset as usize).take(*count as usize).collect();
                Ok(ds)
            }
            PlanKind::Aggregate { group_keys, items } => {
                let input = input.unwrap_or_default();
                Ok(aggregate(&input, group_keys, items, &node.columns))
            }
            PlanKind::Loop { times, body_root } => {
                let mut ds = input.unwrap_or_default();
                for _ in 0..*times {
                    ds = self.eval(*body_root, Some(ds), outcome)?;
                }
                Ok(ds)
            }
            PlanKind::DataCollect => Ok(input.unwrap_or_default()),
            PlanKind::Command(cmd) => self.run_command(cmd, outcome),
        }
    }

    fn run_command(
        &mut self,
        cmd: &CommandKind,
        outcome: &mut ExecOutcome,
    ) -> Result<DataSet, QueryError> {
        match cmd {
            CommandKind::Meta { cmd, .. } => {
                self.backend.exec_meta(cmd.clone())?;
                Ok(DataSet::default())
            }
            CommandKind::Use { name } => {
                let space = self
                    .catalog
                    .space_by_name(name)
                    .ok_or_else(|| {
                        QueryError::Meta(crate::meta::MetaError::UnknownSpace(name.clone()))
                    })?
                    .def
                    .space_id;
                outcome.new_space = Some((space, name.clone()));
                Ok(DataSet::default())
            }
            CommandKind::BalanceData => {
                let moves = self.backend.balance_data()?;
                outcome.message = Some(format!("moved {moves} partitions"));
                Ok(DataSet::default())
            }
            CommandKind::CreateSnapshot => {
                let name = self.backend.create_snapshot()?;
                outcome.message = Some(format!("snapshot {name}"));
                Ok(DataSet::default())
            }
            CommandKind::KillQuery(id) => {
                self.backend.kill_query(*id)?;
                Ok(DataSet::default())
            }
            CommandKind::RebuildIndex { space, name } => {
                self.backend.rebuild_index(*space, name)?;
                Ok(DataSet::default())
            }
            CommandKind::Mutation(m) => {
                self.run_mutation(m)?;
                Ok(DataSet::default())
            }
            CommandKind::Show { kind, name, space } => self.run_show(*kind, name.as_deref(), *space),
        }
    }

    fn run_mutation(&mut self, m: &MutationKind) -> Result<(), QueryError> {
        match m {
            MutationKind::InsertVertices { space, inserts } => {
                self.backend.exec_part_ops(*space, inserts.clone())
            }
            MutationKind::InsertEdges { space: _, specs } => {
                self.backend.exec_edge_ops(specs.clone())
            }
            MutationKind::DeleteVertices { space, vids, with_edge } => {
                for vid in vids {
                    self.backend.delete_vertex(*space, vid, *with_edge)?;
                }
                Ok(())
            }
            MutationKind::DeleteEdges { space: _, specs } => {
                self.backend.exec_edge_ops(specs.clone())
            }
        }
    }

    fn run_show(
        &mut self,
        kind: ShowKind,
        name: Option<&str>,
        space: Option<SpaceId>,
    ) -> Result<DataSet, QueryError> {
        let c = &self.catalog;
        let s = |v: &str| PropertyValue::Str(v.to_string());
        Ok(match kind {
            ShowKind::Spaces => DataSet {
                columns: vec!["Name".into()],
                rows: c.spaces.values().map(|sc| vec![s(&sc.def.name)]).collect(),
            },
            ShowKind::Hosts => DataSet {
                columns: vec!["Host".into(), "Status".into()],
                rows: c
                    .hosts
                    .values()
                    .map(|h| {
                        vec![
                            PropertyValue::Int64(h.id as i64),
                            s(match h.status {
                                HostStatus::Online => "ONLINE",
                                HostStatus::Offline => "OFFLINE",
                            }),
                        ]
                    })
                    .collect(),
            },
            ShowKind::Snapshots => DataSet {
                columns: vec!["Name".into()],
                rows: c.snapshots.iter().map(|n| vec![s(n)]).collect(),
            },
            ShowKind::SlowQueries => DataSet {
                columns: vec![
                    "QueryId".into(),
                    "Session".into(),
                    "DurationUs".into(),
                    "Statement".into(),
                ],
                rows: c
                    .slow_queries
                    .iter()
                    .map(|q| {
                        vec![
                            PropertyValue::Int64(q.query_id as i64),
                            PropertyValue::Int64(q.session_id as i64),
                            PropertyValue::Int64(q.duration_us as i64),
                            s(&q.statement),
                        ]
                    })
                    .collect(),
            },
            ShowKind::Users => DataSet {
                columns: vec!["User".into(), "Role".into()],
                rows: c
                    .users
                    .values()
                    .map(|u| {
                        vec![
                            s(&u.name),
                            s(match u.role {
                                UserRole::Admin => "admin",
                                UserRole::User => "user",
                            }),
                        ]
                    })
                    .collect(),
            },
            ShowKind::Tags | ShowKind::Edges => {
                let sc = space.and_then(|id| c.space(id)).ok_or(QueryError::NoSpaceSelected)?;
                let names: Vec<&SchemaDef> = if kind == ShowKind::Tags {
                    sc.tags.values().collect()
                } else {
                    sc.edges.values().collect()
                };
                DataSet {
                    columns: vec!["Name".into()],
                    rows: names.iter().map(|d| vec![s(&d.name)]).collect(),
                }
            }
            ShowKind::TagIndexes | ShowKind::EdgeIndexes => {
                let sc = space.and_then(|id| c.space(id)).ok_or(QueryError::NoSpaceSelected)?;
                let want_edge = kind == ShowKind::EdgeIndexes;
                DataSet {
                    columns: vec!["Name".into(), "Target".into(), "Props".into()],
                    rows: sc
                        .indexes
                        .values()
                        .filter(|i| {
                            matches!(i.target, crate::meta::IndexTarget::Edge(_)) == want_edge
                        })
                        .map(|i| {
                            let target = sc
                                .schema_for_target(i.target)
                                .map(|d| d.name.clone())
                                .unwrap_or_default();
                            vec![s(&i.name), s(&target), s(&i.props.join(", "))]
                        })
                        .collect(),
                }
            }
            ShowKind::DescribeTag | ShowKind::DescribeEdge => {
                let sc = space.and_then(|id| c.space(id)).ok_or(QueryError::NoSpaceSelected)?;
                let name = name.unwrap_or_default();
                let def = if kind == ShowKind::DescribeTag {
                    sc.tag_by_name(name)
                } else {
                    sc.edge_by_name(name)
                }
                .ok_or_else(|| QueryError::Meta(crate::meta::MetaError::UnknownTag(name.into())))?;
                DataSet {
                    columns: vec!["Field".into(), "Type".into(), "Null".into(), "Default".into()],
                    rows: def
                        .current()
                        .iter()
                        .map(|p| {
                            vec![
                                s(&p.name),
                                s(&p.ty.to_string()),
                                s(if p.nullable { "YES" } else { "NO" }),
                                p.default.clone().unwrap_or(PropertyValue::Null),
                            ]
                        })
                        .collect(),
                }
            }
        })
    }
}

fn sort_rows(ds: &mut DataSet, keys: &[(String, bool)]) {
    let idx: Vec<(usize, bool)> = keys
        .iter()
        .filter_map(|(name, asc)| ds.column_index(name).map(|i| (i, *asc)))
        .collect();
    ds.rows.sort_by(|a, b| {
        for (i, asc) in &idx {
            let ord = a[*i].total_cmp(&b[*i]);
            let ord = if *asc { ord } else { ord.reverse() };
            if ord != std::cmp::Ordering::Equal {
                return ord;
            }
        }
        std::cmp::Ordering::Equal
    });
}

#[derive(Default, Clone)]
struct AggState {
    count: u64,
    sum_i: i64,
    sum_f: f64,
    saw_float: bool,
    min: Option<PropertyValue>,
    max: Option<PropertyValue>,
}

impl AggState {
    fn update(&mut self, v: &PropertyValue) {
        if v.is_null() {
            return;
        }
        self.count += 1;
        match v {
            PropertyValue::Int64(i) => self.sum_i = self.sum_i.wrapping_add(*i),
            PropertyValue::Float64(f) => {
                self.sum_f += f;
                self.saw_float = true;
            }
            _ => {}
        }
        if self.min.as_ref().map_or(true, |m| v.total_cmp(m).is_lt()) {
            self.min = Some(v.clone());
        }
        if self.max.as_ref().map_or(true, |m| v.total_cmp(m).is_gt()) {
            self.max = Some(v.clone());
        }
    }

    fn finish(&self, func: AggFunc) -> PropertyValue {
        match func {
            AggFunc::Count => PropertyValue::Int64(self.count as i64),
            AggFunc::Sum => {
                if self.count == 0 {
                    PropertyValue::Null
                } else if self.saw_float {
                    PropertyValue::Float64(self.sum_f + self.sum_i as f64)
                } else {
                    PropertyValue::Int64(self.sum_i)
                }
            }
            AggFunc::Avg => {
                if self.count == 0 {
                    PropertyValue::Null
                } else {
                    PropertyValue::Float64(
                        (self.sum_f + self.sum_i as f64) / self.count as f64,
                    )
                }
            }
            AggFunc::Min => self.min.clone().unwrap_or(PropertyValue::Null),
            AggFunc::Max => self.max.clone().unwrap_or(PropertyValue::Null),
        }
    }
}

fn aggregate(
    input: &DataSet,
    group_keys: &[Expr],
    items: &[AggItem],
    columns: &[String],
) -> DataSet {
    struct Group {
        key_values: Vec<PropertyValue>,
        states: Vec<AggState>,
    }
    let agg_count = items.iter().filter(|i| matches!(i, AggItem::Agg(..))).count();
    let mut order: Vec<Vec<u8>> = Vec::new();
    let mut groups: BTreeMap<Vec<u8>, Group> = BTreeMap::new();
    for row in &input.rows {
        let ctx = RowCtx { columns: &input.columns, row };
        let key_values: Vec<PropertyValue> = group_keys.iter().map(|k| k.eval(&ctx)).collect();
        let mut key = Vec::new();
        for v in &key_values {
            v.dedup_key(&mut key);
        }
        if !groups.contains_key(&key) {
            order.push(key.clone());
            groups.insert(
                key.clone(),
                Group { key_values, states: vec![AggState::default(); agg_count] },
            );
        }
        let group = groups.get_mut(&key).unwrap();
        let mut agg_i = 0;
        for item in items {
            if let AggItem::Agg(func, arg, _) = item {
                match (func, arg) {
                    (AggFunc::Count, None) => group.states[agg_i].count += 1,
                    (_, Some(e)) => {
                        let v = e.eval(&ctx);
                        group.states[agg_i].update(&v);
                    }
                    (_, None) => {}
                }
                agg_i += 1;
            }
        }
    }
    // a keyless aggregate over empty input still yields one row
    if group_keys.is_empty() && groups.is_empty() {
        order.push(Vec::new());
        groups.insert(
            Vec::new(),
            Group { key_values: Vec::new(), states: vec![AggState::default(); agg_count] },
        );
    }
    let mut ds = DataSet::new(columns.to_vec());
    for key in order {
        let group = &groups[&key];
        let mut row = Vec::with_capacity(items.len());
        let mut agg_i = 0;
        for item in items {
            match item {
                AggItem::Key(expr, _) => {
                    let pos = group_keys.iter().position(|k| k == expr).unwrap_or(0);
                    row.push(group.key_values.get(pos).cloned().unwrap_or(PropertyValue::Null));
                }
                AggItem::Agg(func, _, _) => {
                    row.push(group.states[agg_i].finish(*func));
                    agg_i += 1;
                }
            }
        }
        ds.rows.push(row);
    }
    ds
}

// ---------------------------------------------------------------------------
// Backend implementation for the embedded cluster
// ---------------------------------------------------------------------------

impl QueryBackend for crate::cluster::sim::SimCluster {
    fn catalog_snapshot(&self) -> Catalog {
        self.catalog().clone()
    }

    fn get_neighbors(
        &self,
        space: SpaceId,
        vids: &[Vid],
        spec: &NeighborsSpec,
    ) -> Result<Vec<crate::storage::reads::NeighborRow>, StorageError> {
        match SimCluster::get_neighbors(self, space, vids, spec) {
            Ok(rows) => Ok(rows),
            Err(crate::cluster::sim::ClusterError::Storage(e)) => Err(e),
            Err(other) => Err(StorageError::Internal(other.to_string())),
        }
    }

    fn get_vertex_rows(
        &self,
        space: SpaceId,
        tag: &SchemaDef,
        vids: &[Vid],
    ) -> Result<Vec<(Vid, Vec<PropertyValue>)>, StorageError> {
        let mut out = Vec::new();
        for vid in vids {
            let part = self
                .catalog()
                .partition_for_vid(space, vid)
                .ok_or_else(|| StorageError::Internal("unknown space".into()))?;
            let store = self.leader_store(space, part)?;
            if let Some(values) =
                crate::storage::reads::get_vertex_tag(store, part, vid, tag.id, tag)?
            {
                out.push((vid.clone(), values));
            }
        }
        Ok(out)
    }

    fn get_edge_rows(
        &self,
        space: SpaceId,
        edge: &SchemaDef,
        refs: &[(Vid, Rank, Vid)],
    ) -> Result<Vec<(Vid, Rank, Vid, Vec<PropertyValue>)>, StorageError> {
        let mut out = Vec::new();
        for (src, rank, dst) in refs {
            let part = self
                .catalog()
                .partition_for_vid(space, src)
                .ok_or_else(|| StorageError::Internal("unknown space".into()))?;
            let store = self.leader_store(space, part)?;
            if let Some(values) = crate::storage::reads::get_edge_props(
                store, part, src, edge.id, *rank, dst, edge,
            )? {
                out.push((src.clone(), *rank, dst.clone(), values));
            }
        }
        Ok(out)
    }

    fn full_scan_tag(
        &self,
        space: SpaceId,
        schema: &SchemaDef,
    ) -> Result<Vec<(Vid, Vec<PropertyValue>)>, StorageError> {
        let s = self
            .catalog()
            .space(space)
            .ok_or_else(|| StorageError::Internal("unknown space".into()))?
            .clone();
        let vid_len = s.def.vid_len as usize;
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = self.leader_store(space, part)?;
            out.extend(crate::storage::reads::full_scan_tag(
                store, part, vid_len, schema.id, schema,
            )?);
        }
        Ok(out)
    }

    fn full_scan_edges(
        &self,
        space: SpaceId,
        schema: &SchemaDef,
    ) -> Result<Vec<(Vid, Rank, Vid, Vec<PropertyValue>)>, StorageError> {
        let s = self
            .catalog()
            .space(space)
            .ok_or_else(|| StorageError::Internal("unknown space".into()))?
            .clone();
        let vid_len = s.def.vid_len as usize;
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = self.leader_store(space, part)?;
            out.extend(crate::storage::reads::full_scan_edges(
                store, part, vid_len, schema.id, schema,
            )?);
        }
        Ok(out)
    }

    fn index_scan(
        &self,
        space: SpaceId,
        index: &IndexDef,
        spec: &ScanSpec,
    ) -> Result<Vec<IndexRef>, StorageError> {
        let s = self
            .catalog()
            .space(space)
            .ok_or_else(|| StorageError::Internal("unknown space".into()))?
            .clone();
        let vid_len = s.def.vid_len as usize;
        let mut out = Vec::new();
        for &part in s.parts.keys() {
            let store = self.leader_store(space, part)?;
            out.extend(crate::storage::reads::index_scan_part(
                store, part, vid_len, index, spec,
            )?);
        }
        Ok(out)
    }

    fn vertex_exists(&self, space: SpaceId, vid: &Vid) -> Result<bool, StorageError> {
        let part = self
            .catalog()
            .partition_for_vid(space, vid)
            .ok_or_else(|| StorageError::Internal("unknown space".into()))?;
        let store = self.leader_store(space, part)?;
        Ok(crate::storage::reads::vertex_exists(store, part, vid))
    }

    fn exec_meta(&mut self, cmd: MetaCommand) -> Result<MetaResponse, QueryError> {
        self.reject_if_read_only()?;
        Ok(self.meta_op(cmd)?)
    }

    fn exec_part_ops(
        &mut self,
        space: SpaceId,
        ops: Vec<(PartId, PartitionCommand)>,
    ) -> Result<(), QueryError> {
        self.reject_if_read_only()?;
        let ops: Vec<ClientOp> = ops
            .into_iter()
            .map(|(part, cmd)| ClientOp::Part { space, part, cmd })
            .collect();
        for r in self.run_ops(ops, 4_000).map_err(QueryError::from)? {
            match r {
                OpResult::Part(r) => r.map_err(QueryError::Storage)?,
                other => return Err(QueryError::Internal(format!("{other:?}"))),
            }
        }
        Ok(())
    }

    fn exec_edge_ops(&mut self, specs: Vec<EdgeOpSpec>) -> Result<(), QueryError> {
        self.reject_if_read_only()?;
        let ops: Vec<ClientOp> = specs.into_iter().map(ClientOp::Edge).collect();
        for r in self.run_ops(ops, 8_000).map_err(QueryError::from)? {
            match r {
                OpResult::Edge(r) => r.map_err(QueryError::Storage)?,
                other => return Err(QueryError::Internal(format!("{other:?}"))),
            }
        }
        Ok(())
    }

    fn delete_vertex(
        &mut self,
        space: SpaceId,
        vid: &str,
        with_edge: bool,
    ) -> Result<(), QueryError> {
        self.reject_if_read_only()?;
        SimCluster::delete_vertex(self, space, vid, with_edge).map_err(QueryError::from)
    }

    fn rebuild_index(&mut self, space: SpaceId, name: &str) -> Result<(), QueryError> {
        SimCluster::rebuild_index(self, space, name).map_err(QueryError::from)
    }

    fn balance_data(&mut self) -> Result<usize, QueryError> {
        SimCluster::balance_data(self).map_err(QueryError::from)
    }

    fn create_snapshot(&mut self) -> Result<String, QueryError> {
        let name = format!("snap-{}", self.now);
        // checkpoint every partition leader plus the catalog
        self.meta_op(MetaCommand::RegisterSnapshot { name: name.clone() })
            .map_err(QueryError::from)?;
        Ok(name)
    }

    fn kill_query(&mut self, _id: u64) -> Result<(), QueryError> {
        Err(QueryError::Internal(
            "kill is handled by the serving layer's query registry".into(),
        ))
    }
}

use crate::cluster::sim::SimCluster;

trait ReadOnlyGate {
    fn reject_if_read_only(&self) -> Result<(), QueryError>;
}

impl ReadOnlyGate for SimCluster {
    fn reject_if_read_only(&self) -> Result<(), QueryError> {
        if self.read_only {
            return Err(QueryError::Storage(StorageError::Internal(
                "cluster is a read-only secondary".into(),
            )));
        }
        Ok(())
    }
}
