//! Semantic validation: resolves names against the catalog snapshot,
//! checks types, expands `OVER *`, and produces the typed statement the
//! planner consumes.

use super::ast::*;
use super::parser::const_eval;
use super::plan::{CommandKind, MutationKind, ScanTarget, ShowKind};
use super::{QueryError, Session};
use crate::cluster;
use crate::codec::{Direction, Rank, SpaceId, Vid};
use crate::expr::{EdgeAccessor, Expr};
use crate::meta::{Catalog, MetaCommand, SchemaDef, SchemaKind, SpaceCatalog, UserRole};
use crate::storage::reads::EdgeTypeSpec;
use crate::storage::StorageError;

/// A fully named yield expression.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedYield {
    pub value: YieldValue,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GoFrom {
    Vids(Vec<Vid>),
    Column(String),
}

/// Typed pipeline steps; everything resolved to schemas and vids.
#[derive(Debug, Clone, PartialEq)]
pub enum LogicalStep {
    Go {
        steps: u64,
        from: GoFrom,
        edges: Vec<EdgeTypeSpec>,
        directions: Vec<Direction>,
        filter: Option<Expr>,
        yields: Vec<NamedYield>,
        props: Vec<(String, String)>,
        distinct: bool,
    },
    Lookup {
        target: ScanTarget,
        filter: Option<Expr>,
        yields: Vec<NamedYield>,
    },
    FetchVertex { tag: SchemaDef, vids: Vec<Vid>, yields: Vec<NamedYield> },
    FetchEdge { edge: SchemaDef, refs: Vec<(Vid, Rank, Vid)>, yields: Vec<NamedYield> },
    Project { items: Vec<NamedYield>, filter: Option<Expr>, distinct: bool },
    AggregateAll { aggs: Vec<NamedYield>, filter: Option<Expr> },
    GroupBy { keys: Vec<Expr>, items: Vec<NamedYield> },
    OrderBy { keys: Vec<(String, bool)> },
    Limit { count: u64, offset: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogicalQuery {
    pub space: SpaceId,
    pub steps: Vec<LogicalStep>,
}

/// A validated statement.
#[derive(Debug, Clone, PartialEq)]
pub enum Typed {
    Query(LogicalQuery),
    Command(CommandKind),
    Explain { profile: bool, inner: Box<Typed> },
}

fn item_name(item: &YieldItem) -> String {
    if let Some(a) = &item.alias {
        return a.clone();
    }
    match &item.value {
        YieldValue::Expr(e) => format!("{}", e),
        YieldValue::Agg(f, None) => format!("{}(*)", f.name()),
        YieldValue::Agg(f, Some(e)) => format!("{}({})", f.name(), e),
    }
}

fn named(items: &[YieldItem]) -> Vec<NamedYield> {
    items
        .iter()
        .map(|i| NamedYield { value: i.value.clone(), name: item_name(i) })
        .collect()
}

pub fn validate(
    stmt: &Statement,
    catalog: &Catalog,
    session: &Session,
) -> Result<Typed, QueryError> {
    let v = Validator { catalog, session };
    v.statement(stmt)
}

struct Validator<'a> {
    catalog: &'a Catalog,
    session: &'a Session,
}

impl<'a> Validator<'a> {
    fn space(&self) -> Result<(SpaceId, &'a SpaceCatalog), QueryError> {
        let id = self.session.space_id()?;
        let s = self
            .catalog
            .space(id)
            .ok_or_else(|| QueryError::Internal(format!("session space #{id} vanished")))?;
        Ok((id, s))
    }

    fn need_admin(&self, what: &str) -> Result<(), QueryError> {
        if self.session.role != UserRole::Admin {
            return Err(QueryError::PermissionDenied(what.into()));
        }
        Ok(())
    }

    fn statement(&self, stmt: &Statement) -> Result<Typed, QueryError> {
        use Statement as S;
        let zero = super::lexer::Span { line: 1, col: 1 };
        Ok(match stmt {
            S::Use { space } => {
                if self.catalog.space_by_name(space).is_none() {
                    return Err(QueryError::Meta(crate::meta::MetaError::UnknownSpace(
                        space.clone(),
                    )));
                }
                Typed::Command(CommandKind::Use { name: space.clone() })
            }
            S::CreateSpace { name, partition_num, replica_factor, vid_len, if_not_exists } => {
                self.need_admin("CREATE SPACE")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::CreateSpace {
                        name: name.clone(),
                        partition_num: *partition_num,
                        replica_factor: *replica_factor,
                        vid_len: *vid_len,
                        if_not_exists: *if_not_exists,
                    },
                    admin_gated: true,
                })
            }
            S::DropSpace { name } => {
                self.need_admin("DROP SPACE")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::DropSpace { name: name.clone() },
                    admin_gated: true,
                })
            }
            S::ShowSpaces => Typed::Command(CommandKind::Show {
                kind: ShowKind::Spaces,
                name: None,
                space: None,
            }),
            S::CreateSchema { kind, name, props, if_not_exists } => {
                let (space, _) = self.space()?;
                let props = props
                    .iter()
                    .map(|p| {
                        if let Some(d) = &p.default {
                            if !d.conforms_to(p.ty, p.nullable) {
                                return Err(QueryError::validate(
                                    format!("default for '{}' does not match {}", p.name, p.ty),
                                    zero,
                                ));
                            }
                        }
                        Ok(crate::codec::PropertyDef {
                            name: p.name.clone(),
                            ty: p.ty,
                            nullable: p.nullable,
                            default: p.default.clone(),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::CreateSchema {
                        space,
                        kind: *kind,
                        name: name.clone(),
                        props,
                        if_not_exists: *if_not_exists,
                    },
                    admin_gated: false,
                })
            }
            S::AlterSchema { kind, name, add, drop } => {
                let (space, s) = self.space()?;
                self.check_schema_exists(s, *kind, name)?;
                let add = add
                    .iter()
                    .map(|p| crate::codec::PropertyDef {
                        name: p.name.clone(),
                        ty: p.ty,
                        nullable: p.nullable,
                        default: p.default.clone(),
                    })
                    .collect();
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::AlterSchema {
                        space,
                        kind: *kind,
                        name: name.clone(),
                        add,
                        drop: drop.clone(),
                    },
                    admin_gated: false,
                })
            }
            S::DropSchema { kind, name } => {
                let (space, s) = self.space()?;
                self.check_schema_exists(s, *kind, name)?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::DropSchema { space, kind: *kind, name: name.clone() },
                    admin_gated: false,
                })
            }
            S::ShowSchemas { kind } => {
                let (space, _) = self.space()?;
                Typed::Command(CommandKind::Show {
                    kind: match kind {
                        SchemaKind::Tag => ShowKind::Tags,
                        SchemaKind::Edge => ShowKind::Edges,
                    },
                    name: None,
                    space: Some(space),
                })
            }
            S::DescribeSchema { kind, name } => {
                let (space, s) = self.space()?;
                self.check_schema_exists(s, *kind, name)?;
                Typed::Command(CommandKind::Show {
                    kind: match kind {
                        SchemaKind::Tag => ShowKind::DescribeTag,
                        SchemaKind::Edge => ShowKind::DescribeEdge,
                    },
                    name: Some(name.clone()),
                    space: Some(space),
                })
            }
            S::CreateIndex { kind, name, target, props, if_not_exists } => {
                let (space, s) = self.space()?;
                self.check_schema_exists(s, *kind, target)?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::CreateIndex {
                        space,
                        kind: *kind,
                        name: name.clone(),
                        target: target.clone(),
                        props: props.clone(),
                        if_not_exists: *if_not_exists,
                    },
                    admin_gated: false,
                })
            }
            S::DropIndex { kind: _, name } => {
                let (space, s) = self.space()?;
                if s.index_by_name(name).is_none() {
                    return Err(QueryError::Meta(crate::meta::MetaError::UnknownIndex(
                        name.clone(),
                    )));
                }
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::DropIndex { space, name: name.clone() },
                    admin_gated: false,
                })
            }
            S::ShowIndexes { kind } => {
                let (space, _) = self.space()?;
                Typed::Command(CommandKind::Show {
                    kind: match kind {
                        SchemaKind::Tag => ShowKind::TagIndexes,
                        SchemaKind::Edge => ShowKind::EdgeIndexes,
                    },
                    name: None,
                    space: Some(space),
                })
            }
            S::RebuildIndex { kind: _, name } => {
                let (space, s) = self.space()?;
                if s.index_by_name(name).is_none() {
                    return Err(QueryError::Meta(crate::meta::MetaError::UnknownIndex(
                        name.clone(),
                    )));
                }
                Typed::Command(CommandKind::RebuildIndex { space, name: name.clone() })
            }
            S::InsertVertices { tag, prop_names, rows, if_not_exists: _, ignore_existed_index } => {
                let (space, s) = self.space()?;
                if s.tag_by_name(tag).is_none() {
                    return Err(QueryError::Storage(StorageError::UnknownTag(tag.clone())));
                }
                let mut inserts = Vec::with_capacity(rows.len());
                for (vid, exprs) in rows {
                    let values = exprs
                        .iter()
                        .map(|e| const_eval(e, zero))
                        .collect::<Result<Vec<_>, _>>()?;
                    let built = cluster::build_insert_vertex(
                        self.catalog,
                        space,
                        vid,
                        &[(tag.clone(), prop_names.clone(), values)],
                        *ignore_existed_index,
                    )
                    .map_err(QueryError::Storage)?;
                    inserts.push(built);
                }
                Typed::Command(CommandKind::Mutation(MutationKind::InsertVertices {
                    space,
                    inserts,
                }))
            }
            S::InsertEdges { etype, prop_names, rows, if_not_exists } => {
                let (space, s) = self.space()?;
                if s.edge_by_name(etype).is_none() {
                    return Err(QueryError::Storage(StorageError::UnknownEdgeType(
                        etype.clone(),
                    )));
                }
                let mut specs = Vec::with_capacity(rows.len());
                for (er, exprs) in rows {
                    let values = exprs
                        .iter()
                        .map(|e| const_eval(e, zero))
                        .collect::<Result<Vec<_>, _>>()?;
                    let spec = cluster::build_edge_op(
                        self.catalog,
                        space,
                        etype,
                        &er.src,
                        &er.dst,
                        Rank(er.rank),
                        prop_names,
                        &values,
                        *if_not_exists,
                        false,
                    )
                    .map_err(QueryError::Storage)?;
                    specs.push(spec);
                }
                Typed::Command(CommandKind::Mutation(MutationKind::InsertEdges { space, specs }))
            }
            S::DeleteVertices { vids, with_edge } => {
                let (space, _) = self.space()?;
                Typed::Command(CommandKind::Mutation(MutationKind::DeleteVertices {
                    space,
                    vids: vids.clone(),
                    with_edge: *with_edge,
                }))
            }
            S::DeleteEdges { etype, refs } => {
                let (space, s) = self.space()?;
                if s.edge_by_name(etype).is_none() {
                    return Err(QueryError::Storage(StorageError::UnknownEdgeType(
                        etype.clone(),
                    )));
                }
                let mut specs = Vec::with_capacity(refs.len());
                for er in refs {
                    specs.push(
                        cluster::build_edge_op(
                            self.catalog,
                            space,
                            etype,
                            &er.src,
                            &er.dst,
                            Rank(er.rank),
                            &[],
                            &[],
                            false,
                            true,
                        )
                        .map_err(QueryError::Storage)?,
                    );
                }
                Typed::Command(CommandKind::Mutation(MutationKind::DeleteEdges { space, specs }))
            }
            S::Query(p) => {
                let (space, s) = self.space()?;
                Typed::Query(LogicalQuery { space, steps: self.pipeline(s, p)? })
            }
            S::ShowHosts => {
                Typed::Command(CommandKind::Show { kind: ShowKind::Hosts, name: None, space: None })
            }
            S::AddHost { host } => {
                self.need_admin("ADD HOST")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::AddHost { host: *host },
                    admin_gated: true,
                })
            }
            S::RemoveHost { host } => {
                self.need_admin("REMOVE HOST")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::RemoveHost { host: *host },
                    admin_gated: true,
                })
            }
            S::BalanceData => {
                self.need_admin("BALANCE DATA")?;
                Typed::Command(CommandKind::BalanceData)
            }
            S::CreateSnapshot => {
                self.need_admin("CREATE SNAPSHOT")?;
                Typed::Command(CommandKind::CreateSnapshot)
            }
            S::ShowSnapshots => Typed::Command(CommandKind::Show {
                kind: ShowKind::Snapshots,
                name: None,
                space: None,
            }),
            S::ShowSlowQueries => Typed::Command(CommandKind::Show {
                kind: ShowKind::SlowQueries,
                name: None,
                space: None,
            }),
            S::KillQuery { id } => Typed::Command(CommandKind::KillQuery(*id)),
            S::CreateUser { name, password } => {
                self.need_admin("CREATE USER")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::CreateUser {
                        name: name.clone(),
                        password: password.clone(),
                        role: UserRole::User,
                    },
                    admin_gated: true,
                })
            }
            S::DropUser { name } => {
                self.need_admin("DROP USER")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::DropUser { name: name.clone() },
                    admin_gated: true,
                })
            }
            S::GrantRole { role, user } => {
                self.need_admin("GRANT ROLE")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::GrantRole { user: user.clone(), role: *role },
                    admin_gated: true,
                })
            }
            S::RevokeRole { user } => {
                self.need_admin("REVOKE ROLE")?;
                Typed::Command(CommandKind::Meta {
                    cmd: MetaCommand::RevokeRole { user: user.clone() },
                    admin_gated: true,
                })
            }
            S::ShowUsers => {
                Typed::Command(CommandKind::Show { kind: ShowKind::Users, name: None, space: None })
            }
            S::Explain { profile, inner } => Typed::Explain {
                profile: *profile,
                inner: Box::new(self.statement(inner)?),
            },
        })
    }

    fn check_schema_exists(
        &self,
        s: &SpaceCatalog,
        kind: SchemaKind,
        name: &str,
    ) -> Result<(), QueryError> {
        let found = match kind {
            SchemaKind::Tag => s.tag_by_name(name).is_some(),
            SchemaKind::Edge => s.edge_by_name(name).is_some(),
        };
        if !found {
            return Err(match kind {
                SchemaKind::Tag => {
                    QueryError::Meta(crate::meta::MetaError::UnknownTag(name.into()))
                }
                SchemaKind::Edge => {
                    QueryError::Meta(crate::meta::MetaError::UnknownEdge(name.into()))
                }
            });
        }
        Ok(())
    }

    // -- pipelines ---------------------------------------------------------------

    fn pipeline(&self, s: &SpaceCatalog, p: &Pipeline) -> Result<Vec<LogicalStep>, QueryError> {
        let mut steps = Vec::with_capacity(p.steps.len());
        let mut input_cols: Option<Vec<String>> = None;
        for (i, step) in p.steps.iter().enumerate() {
            let first = i == 0;
            let (logical, out_cols) = self.step(s, step, first, input_cols.as_deref())?;
            steps.push(logical);
            input_cols = Some(out_cols);
        }
        Ok(steps)
    }

    fn step(
        &self,
        s: &SpaceCatalog,
        step: &Step,
        first: bool,
        input: Option<&[String]>,
    ) -> Result<(LogicalStep, Vec<String>), QueryError> {
        let span = step.span();
        match step {
            Step::Go(g) => self.go_step(s, g, first, input),
            Step::Lookup(l) => self.lookup_step(s, l),
            Step::Fetch(f) => self.fetch_step(s, f),
            Step::Yield(y) => self.yield_step(y, first, input),
            Step::OrderBy { keys, span } => {
                let input = input.ok_or_else(|| {
                    QueryError::validate("ORDER BY needs piped input", *span)
                })?;
                for (col, _) in keys {
                    if !input.contains(col) {
                        return Err(QueryError::validate(
                            format!("unknown column '{col}' in ORDER BY"),
                            *span,
                        ));
                    }
                }
                Ok((LogicalStep::OrderBy { keys: keys.clone() }, input.to_vec()))
            }
            Step::Limit { count, offset, span } => {
                let input = input
                    .ok_or_else(|| QueryError::validate("LIMIT needs piped input", *span))?;
                Ok((LogicalStep::Limit { count: *count, offset: *offset }, input.to_vec()))
            }
            Step::GroupBy { keys, yields, span } => {
                let input = input
                    .ok_or_else(|| QueryError::validate("GROUP BY needs piped input", *span))?;
                for k in keys {
                    self.check_input_refs(k, input, *span)?;
                }
                let items = named(yields);
                for item in &items {
                    match &item.value {
                        YieldValue::Agg(_, Some(e)) => self.check_input_refs(e, input, *span)?,
                        YieldValue::Agg(_, None) => {}
                        YieldValue::Expr(e) => {
                            if !keys.iter().any(|k| k == e) {
                                return Err(QueryError::validate(
                                    format!(
                                        "non-aggregate item '{}' must be a GROUP BY key",
                                        item.name
                                    ),
                                    *span,
                                ));
                            }
                        }
                    }
                }
                let cols = items.iter().map(|i| i.name.clone()).collect();
                Ok((LogicalStep::GroupBy { keys: keys.clone(), items }, cols))
            }
        }
        .map_err(|e| {
            let _ = span;
            e
        })
    }

    fn check_input_refs(
        &self,
        expr: &Expr,
        input: &[String],
        span: super::lexer::Span,
    ) -> Result<(), QueryError> {
        match expr {
            Expr::InputCol(c) => {
                if !input.contains(c) {
                    return Err(QueryError::validate(format!("unknown column '{c}'"), span));
                }
                Ok(())
            }
            Expr::Prop { owner, name } => Err(QueryError::validate(
                format!("property reference {owner}.{name} is not available here"),
                span,
            )),
            Expr::Unary { expr, .. } => self.check_input_refs(expr, input, span),
            Expr::Binary { lhs, rhs, .. } => {
                self.check_input_refs(lhs, input, span)?;
                self.check_input_refs(rhs, input, span)
            }
            _ => Ok(()),
        }
    }

    fn resolve_edges(
        &self,
        s: &SpaceCatalog,
        over: &OverSpec,
        span: super::lexer::Span,
    ) -> Result<Vec<EdgeTypeSpec>, QueryError> {
        let mut out = Vec::new();
        match over {
            OverSpec::All => {
                for e in s.edges.values() {
                    out.push(EdgeTypeSpec { id: e.id, name: e.name.clone(), schema: e.clone() });
                }
            }
            OverSpec::Types(names) => {
                for n in names {
                    let e = s.edge_by_name(n).ok_or_else(|| {
                        QueryError::validate(format!("unknown edge type '{n}'"), span)
                    })?;
                    out.push(EdgeTypeSpec { id: e.id, name: e.name.clone(), schema: e.clone() });
                }
            }
        }
        if out.is_empty() {
            return Err(QueryError::validate("no edge types to traverse", span));
        }
        Ok(out)
    }

    /// Property references must name one of the traversed edge types and
    /// an existing property on it.
    fn check_edge_expr(
        &self,
        expr: &Expr,
        edges: &[EdgeTypeSpec],
        span: super::lexer::Span,
        props: &mut Vec<(String, String)>,
    ) -> Result<(), QueryError> {
        match expr {
            Expr::Prop { owner, name } => {
                let Some(spec) = edges.iter().find(|e| &e.name == owner) else {
                    return Err(QueryError::validate(
                        format!("'{owner}' is not among the traversed edge types"),
                        span,
                    ));
                };
                if spec.schema.prop_position(name).is_none() {
                    return Err(QueryError::validate(
                        format!("edge type '{owner}' has no property '{name}'"),
                        span,
                    ));
                }
                if !props.contains(&(owner.clone(), name.clone())) {
                    props.push((owner.clone(), name.clone()));
                }
                Ok(())
            }
            Expr::InputCol(c) => Err(QueryError::validate(
                format!("input column '$-.{c}' is not available inside GO"),
                span,
            )),
            Expr::VertexId => {
                Err(QueryError::validate("id(VERTEX) is not available inside GO", span))
            }
            Expr::Unary { expr, .. } => self.check_edge_expr(expr, edges, span, props),
            Expr::Binary { lhs, rhs, .. } => {
                self.check_edge_expr(lhs, edges, span, props)?;
                self.check_edge_expr(rhs, edges, span, props)
            }
            _ => Ok(()),
        }
    }

    fn go_step(
        &self,
        s: &SpaceCatalog,
        g: &GoStep,
        first: bool,
        input: Option<&[String]>,
    ) -> Result<(LogicalStep, Vec<String>), QueryError> {
        let vid_len = s.def.vid_len as usize;
        let from = match &g.from {
            FromSpec::Vids(vids) => {
                let vids = vids
                    .iter()
                    .map(|v| {
                        Vid::new(v, vid_len).map_err(|e| {
                            QueryError::validate(e.to_string(), g.span)
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                GoFrom::Vids(vids)
            }
            FromSpec::InputCol(c) => {
                let input = input.ok_or_else(|| {
                    QueryError::validate("GO FROM $-.col needs piped input", g.span)
                })?;
                if first || !input.contains(c) {
                    return Err(QueryError::validate(
                        format!("unknown input column '{c}'"),
                        g.span,
                    ));
                }
                GoFrom::Column(c.clone())
            }
        };
        let edges = self.resolve_edges(s, &g.over, g.span)?;
        let directions = match g.direction {
            GoDirection::Out => vec![Direction::Out],
            GoDirection::Reversely => vec![Direction::In],
            GoDirection::Bidirect => vec![Direction::Out, Direction::In],
        };
        let mut props = Vec::new();
        if let Some(w) = &g.where_ {
            self.check_edge_expr(w, &edges, g.span, &mut props)?;
        }
        let yields = match &g.yields {
            None => vec![NamedYield {
                value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Dst)),
                name: "dst".into(),
            }],
            Some(items) => named(items),
        };
        for item in &yields {
            match &item.value {
                YieldValue::Agg(..) => {
                    return Err(QueryError::validate(
                        "aggregates are only allowed in a piped YIELD",
                        g.span,
                    ))
                }
                YieldValue::Expr(e) => self.check_edge_expr(e, &edges, g.span, &mut props)?,
            }
        }
        let cols = yields.iter().map(|y| y.name.clone()).collect();
        Ok((
            LogicalStep::Go {
                steps: g.steps,
                from,
                edges,
                directions,
                filter: g.where_.clone(),
                yields,
                props,
                distinct: g.distinct,
            },
            cols,
        ))
    }

    fn lookup_target(
        &self,
        s: &SpaceCatalog,
        name: &str,
        span: super::lexer::Span,
    ) -> Result<ScanTarget, QueryError> {
        if let Some(t) = s.tag_by_name(name) {
            return Ok(ScanTarget::Tag(t.clone()));
        }
        if let Some(e) = s.edge_by_name(name) {
            return Ok(ScanTarget::Edge(e.clone()));
        }
        Err(QueryError::validate(format!("unknown tag or edge type '{name}'"), span))
    }

    /// Property refs in LOOKUP/FETCH must belong to the target schema.
    fn check_target_expr(
        &self,
        expr: &Expr,
        target_name: &str,
        schema: &SchemaDef,
        is_edge: bool,
        span: super::lexer::Span,
    ) -> Result<(), QueryError> {
        match expr {
            Expr::Prop { owner, name } => {
                if owner != target_name {
                    return Err(QueryError::validate(
                        format!("'{owner}' is not the statement target '{target_name}'"),
                        span,
                    ));
                }
                if schema.prop_position(name).is_none() {
                    return Err(QueryError::validate(
                        format!("'{target_name}' has no property '{name}'"),
                        span,
                    ));
                }
                Ok(())
            }
            Expr::Edge(_) if !is_edge => {
                Err(QueryError::validate("edge accessors need an edge target", span))
            }
            Expr::VertexId if is_edge => {
                Err(QueryError::validate("id(VERTEX) needs a tag target", span))
            }
            Expr::InputCol(c) => {
                Err(QueryError::validate(format!("input column '$-.{c}' not available"), span))
            }
            Expr::Unary { expr, .. } => {
                self.check_target_expr(expr, target_name, schema, is_edge, span)
            }
            Expr::Binary { lhs, rhs, .. } => {
                self.check_target_expr(lhs, target_name, schema, is_edge, span)?;
                self.check_target_expr(rhs, target_name, schema, is_edge, span)
            }
            _ => Ok(()),
        }
    }

    fn lookup_step(
        &self,
        s: &SpaceCatalog,
        l: &LookupStep,
    ) -> Result<(LogicalStep, Vec<String>), QueryError> {
        let target = self.lookup_target(s, &l.target, l.span)?;
        let is_edge = target.is_edge();
        let schema = target.schema().clone();
        if let Some(w) = &l.where_ {
            self.check_target_expr(w, &l.target, &schema, is_edge, l.span)?;
        }
        let yields = match &l.yields {
            Some(items) => {
                let items = named(items);
                for item in &items {
                    match &item.value {
                        YieldValue::Agg(..) => {
                            return Err(QueryError::validate(
                                "aggregates are only allowed in a piped YIELD",
                                l.span,
                            ))
                        }
                        YieldValue::Expr(e) => {
                            self.check_target_expr(e, &l.target, &schema, is_edge, l.span)?
                        }
                    }
                }
                items
            }
            None => {
                if is_edge {
                    vec![
                        NamedYield {
                            value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Src)),
                            name: "src".into(),
                        },
                        NamedYield {
                            value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Dst)),
                            name: "dst".into(),
                        },
                        NamedYield {
                            value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Rank)),
                            name: "rank".into(),
                        },
                    ]
                } else {
                    vec![NamedYield { value: YieldValue::Expr(Expr::VertexId), name: "vid".into() }]
                }
            }
        };
        let cols = yields.iter().map(|y| y.name.clone()).collect();
        Ok((LogicalStep::Lookup { target, filter: l.where_.clone(), yields }, cols))
    }

    fn fetch_step(
        &self,
        s: &SpaceCatalog,
        f: &FetchStep,
    ) -> Result<(LogicalStep, Vec<String>), QueryError> {
        let vid_len = s.def.vid_len as usize;
        let target = self.lookup_target(s, &f.target, f.span)?;
        let schema = target.schema().clone();
        match (&target, &f.refs) {
            (ScanTarget::Tag(tag), FetchRefs::Vids(vids)) => {
                let vids = vids
                    .iter()
                    .map(|v| {
                        Vid::new(v, vid_len)
                            .map_err(|e| QueryError::validate(e.to_string(), f.span))
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let yields = match &f.yields {
                    Some(items) => {
                        let items = named(items);
                        for item in &items {
                            match &item.value {
                                YieldValue::Agg(..) => {
                                    return Err(QueryError::validate(
                                        "aggregates are only allowed in a piped YIELD",
                                        f.span,
                                    ))
                                }
                                YieldValue::Expr(e) => {
                                    self.check_target_expr(e, &f.target, &schema, false, f.span)?
                                }
                            }
                        }
                        items
                    }
                    None => {
                        let mut items = vec![NamedYield {
                            value: YieldValue::Expr(Expr::VertexId),
                            name: "vid".into(),
                        }];
                        for p in tag.current() {
                            items.push(NamedYield {
                                value: YieldValue::Expr(Expr::Prop {
                                    owner: f.target.clone(),
                                    name: p.name.clone(),
                                }),
                                name: p.name.clone(),
                            });
                        }
                        items
                    }
                };
                let cols = yields.iter().map(|y| y.name.clone()).collect();
                Ok((LogicalStep::FetchVertex { tag: tag.clone(), vids, yields }, cols))
            }
            (ScanTarget::Edge(edge), FetchRefs::Edges(refs)) => {
                let refs = refs
                    .iter()
                    .map(|er| {
                        Ok((
                            Vid::new(&er.src, vid_len)
                                .map_err(|e| QueryError::validate(e.to_string(), f.span))?,
                            Rank(er.rank),
                            Vid::new(&er.dst, vid_len)
                                .map_err(|e| QueryError::validate(e.to_string(), f.span))?,
                        ))
                    })
                    .collect::<Result<Vec<_>, QueryError>>()?;
                let yields = match &f.yields {
                    Some(items) => {
                        let items = named(items);
                        for item in &items {
                            match &item.value {
                                YieldValue::Agg(..) => {
                                    return Err(QueryError::validate(
                                        "aggregates are only allowed in a piped YIELD",
                                        f.span,
                                    ))
                                }
                                YieldValue::Expr(e) => {
                                    self.check_target_expr(e, &f.target, &schema, true, f.span)?
                                }
                            }
                        }
                        items
                    }
                    None => {
                        let mut items = vec![
                            NamedYield {
                                value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Src)),
                                name: "src".into(),
                            },
                            NamedYield {
                                value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Dst)),
                                name: "dst".into(),
                            },
                            NamedYield {
                                value: YieldValue::Expr(Expr::Edge(EdgeAccessor::Rank)),
                                name: "rank".into(),
                            },
                        ];
                        for p in edge.current() {
                            items.push(NamedYield {
                                value: YieldValue::Expr(Expr::Prop {
                                    owner: f.target.clone(),
                                    name: p.name.clone(),
                                }),
                                name: p.name.clone(),
                            });
                        }
                        items
                    }
                };
                let cols = yields.iter().map(|y| y.name.clone()).collect();
                Ok((LogicalStep::FetchEdge { edge: edge.clone(), refs, yields }, cols))
            }
            (ScanTarget::Tag(_), FetchRefs::Edges(_)) => Err(QueryError::validate(
                format!("'{}' is a tag; FETCH takes vid refs", f.target),
                f.span,
            )),
            (ScanTarget::Edge(_), FetchRefs::Vids(_)) => Err(QueryError::validate(
                format!("'{}' is an edge type; FETCH takes \"src\" -> \"dst\" refs", f.target),
                f.span,
            )),
        }
    }

    fn yield_step(
        &self,
        y: &YieldStep,
        first: bool,
        input: Option<&[String]>,
    ) -> Result<(LogicalStep, Vec<String>), QueryError> {
        let items = named(&y.items);
        let empty: Vec<String> = Vec::new();
        let cols_in: &[String] = input.unwrap_or(&empty);
        if let Some(w) = &y.where_ {
            if first {
                self.check_input_refs(w, &[], y.span)?;
            } else {
                self.check_input_refs(w, cols_in, y.span)?;
            }
        }
        let has_agg = items.iter().any(|i| matches!(i.value, YieldValue::Agg(..)));
        for item in &items {
            match &item.value {
                YieldValue::Agg(_, Some(e)) => self.check_input_refs(e, cols_in, y.span)?,
                YieldValue::Agg(_, None) => {
                    if first {
                        return Err(QueryError::validate(
                            "COUNT(*) needs piped input",
                            y.span,
                        ));
                    }
                }
                YieldValue::Expr(e) => {
                    if has_agg {
                        return Err(QueryError::validate(
                            format!(
                                "cannot mix '{}' with aggregates; use GROUP BY",
                                item.name
                            ),
                            y.span,
                        ));
                    }
                    self.check_input_refs(e, cols_in, y.span)?;
                }
            }
        }
        let cols: Vec<String> = items.iter().map(|i| i.name.clone()).collect();
        if has_agg {
            Ok((LogicalStep::AggregateAll { aggs: items, filter: y.where_.clone() }, cols))
        } else {
            Ok((
                LogicalStep::Project { items, filter: y.where_.clone(), distinct: y.distinct },
                cols,
            ))
        }
    }
}
