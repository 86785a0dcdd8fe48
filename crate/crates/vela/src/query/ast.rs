//! Abstract syntax trees with source spans and a pretty-printer whose
//! output re-parses to an equal tree.

use super::lexer::Span;
use crate::expr::Expr;
use crate::meta::{SchemaKind, UserRole};
use crate::value::PropertyType;
use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub struct PropDecl {
    pub name: String,
    pub ty: PropertyType,
    pub nullable: bool,
    pub default: Option<crate::value::PropertyValue>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggFunc {
    Count,
    Sum,
    Avg,
    Min,
    Max,
}

impl AggFunc {
    pub fn name(self) -> &'static str {
        match self {
            AggFunc::Count => "COUNT",
            AggFunc::Sum => "SUM",
            AggFunc::Avg => "AVG",
            AggFunc::Min => "MIN",
            AggFunc::Max => "MAX",
        }
    }
}

/// A YIELD item: a plain expression or an aggregate call.
#[derive(Debug, Clone, PartialEq)]
pub enum YieldValue {
    Expr(Expr),
    /// COUNT(*) has no argument.
    Agg(AggFunc, Option<Expr>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct YieldItem {
    pub value: YieldValue,
    pub alias: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoDirection {
    Out,
    Reversely,
    Bidirect,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FromSpec {
    Vids(Vec<String>),
    /// `FROM $-.col` in a piped GO.
    InputCol(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum OverSpec {
    All,
    Types(Vec<String>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoStep {
    pub steps: u64,
    pub from: FromSpec,
    pub over: OverSpec,
    pub direction: GoDirection,
    pub where_: Option<Expr>,
    pub yields: Option<Vec<YieldItem>>,
    pub distinct: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeRef {
    pub src: String,
    pub dst: String,
    pub rank: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FetchRefs {
    Vids(Vec<String>),
    Edges(Vec<EdgeRef>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchStep {
    pub target: String,
    pub refs: FetchRefs,
    pub yields: Option<Vec<YieldItem>>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupStep {
    pub target: String,
    pub where_: Option<Expr>,
    pub yields: Option<Vec<YieldItem>>,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub struct YieldStep {
    pub items: Vec<YieldItem>,
    pub where_: Option<Expr>,
    pub distinct: bool,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Step {
    Go(GoStep),
    Fetch(FetchStep),
    Lookup(LookupStep),
    Yield(YieldStep),
    OrderBy { keys: Vec<(String, bool)>, span: Span },
    Limit { count: u64, offset: u64, span: Span },
    GroupBy { keys: Vec<Expr>, yields: Vec<YieldItem>, span: Span },
}

impl Step {
    pub fn span(&self) -> Span {
        match self {
            Step::Go(g) => g.span,
            Step::Fetch(f) => f.span,
            Step::Lookup(l) => l.span,
            Step::Yield(y) => y.span,
            Step::OrderBy { span, .. } | Step::Limit { span, .. } | Step::GroupBy { span, .. } => {
                *span
            }
        }
    }
}

/// A `|`-chained read pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Statement {
    Use { space: String },
    CreateSpace {
        name: String,
        partition_num: u32,
        replica_factor: u32,
        vid_len: u32,
        if_not_exists: bool,
    },
    DropSpace { name: String },
    ShowSpaces,
    CreateSchema {
        kind: SchemaKind,
        name: String,
        props: Vec<PropDecl>,
        if_not_exists: bool,
    },
    AlterSchema { kind: SchemaKind, name: String, add: Vec<PropDecl>, drop: Vec<String> },
    DropSchema { kind: SchemaKind, name: String },
    ShowSchemas { kind: SchemaKind },
    DescribeSchema { kind: SchemaKind, name: String },
    CreateIndex {
        kind: SchemaKind,
        name: String,
        target: String,
        props: Vec<String>,
        if_not_exists: bool,
    },
    DropIndex { kind: SchemaKind, name: String },
    ShowIndexes { kind: SchemaKind },
    RebuildIndex { kind: SchemaKind, name: String },
    InsertVertices {
        tag: String,
        prop_names: Vec<String>,
        rows: Vec<(String, Vec<Expr>)>,
        if_not_exists: bool,
        ignore_existed_index: bool,
    },
    InsertEdges {
        etype: String,
        prop_names: Vec<String>,
        rows: Vec<(EdgeRef, Vec<Expr>)>,
        if_not_exists: bool,
    },
    DeleteVertices { vids: Vec<String>, with_edge: bool },
    DeleteEdges { etype: String, refs: Vec<EdgeRef> },
    Query(Pipeline),
    // admin
    ShowHosts,
    AddHost { host: u32 },
    RemoveHost { host: u32 },
    BalanceData,
    CreateSnapshot,
    ShowSnapshots,
    ShowSlowQueries,
    KillQuery { id: u64 },
    CreateUser { name: String, password: String },
    DropUser { name: String },
    GrantRole { role: UserRole, user: String },
    RevokeRole { user: String },
    ShowUsers,
    Explain { profile: bool, inner: Box<Statement> },
}

// ---------------------------------------------------------------------------
// Pretty-printing (parse(print(ast)) == ast)
// ---------------------------------------------------------------------------

fn fmt_items(items: &[YieldItem], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, item) in items.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        match &item.value {
            YieldValue::Expr(e) => write!(f, "{}", e)?,
            YieldValue::Agg(func, None) => write!(f, "{}(*)", func.name())?,
            YieldValue::Agg(func, Some(e)) => write!(f, "{}({})", func.name(), e)?,
        }
        if let Some(a) = &item.alias {
            write!(f, " AS {}", a)?;
        }
    }
    Ok(())
}

fn quote_list(vids: &[String], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    for (i, v) in vids.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "\"{}\"", v)?;
    }
    Ok(())
}

impl fmt::Display for EdgeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "\"{}\" -> \"{}\"", self.src, self.dst)?;
        if self.rank != 0 {
            write!(f, " @{}", self.rank)?;
        }
        Ok(())
    }
}

impl fmt::Display for Step {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Step::Go(g) => {
                write!(f, "GO {} STEPS FROM ", g.steps)?;
                match &g.from {
                    FromSpec::Vids(vids) => quote_list(vids, f)?,
                    FromSpec::InputCol(c) => write!(f, "$-.{}", c)?,
                }
                write!(f, " OVER ")?;
                match &g.over {
                    OverSpec::All => write!(f, "*")?,
                    OverSpec::Types(ts) => write!(f, "{}", ts.join(", "))?,
                }
                match g.direction {
                    GoDirection::Out => {}
                    GoDirection::Reversely => write!(f, " REVERSELY")?,
                    GoDirection::Bidirect => write!(f, " BIDIRECT")?,
                }
                if let Some(w) = &g.where_ {
                    write!(f, " WHERE {}", w)?;
                }
                if let Some(items) = &g.yields {
                    write!(f, " YIELD ")?;
                    if g.distinct {
                        write!(f, "DISTINCT ")?;
                    }
                    fmt_items(items, f)?;
                }
                Ok(())
            }
            Step::Fetch(s) => {
                write!(f, "FETCH PROP ON {} ", s.target)?;
                match &s.refs {
                    FetchRefs::Vids(vids) => quote_list(vids, f)?,
                    FetchRefs::Edges(es) => {
                        for (i, e) in es.iter().enumerate() {
                            if i > 0 {
                                write!(f, ", ")?;
                            }
                            write!(f, "{}", e)?;
                        }
                    }
                }
                if let Some(items) = &s.yields {
                    write!(f, " YIELD ")?;
                    fmt_items(items, f)?;
                }
                Ok(())
            }
            Step::Lookup(s) => {
                write!(f, "LOOKUP ON {}", s.target)?;
                if let Some(w) = &s.where_ {
                    write!(f, " WHERE {}", w)?;
                }
                if let Some(items) = &s.yields {
                    write!(f, " YIELD ")?;
                    fmt_items(items, f)?;
                }
                Ok(())
            }
            Step::Yield(s) => {
                write!(f, "YIELD ")?;
                if s.distinct {
                    write!(f, "DISTINCT ")?;
                }
                fmt_items(&s.items, f)?;
                if let Some(w) = &s.where_ {
                    write!(f, " WHERE {}", w)?;
                }
                Ok(())
            }
            Step::OrderBy { keys, .. } => {
                write!(f, "ORDER BY ")?;
                for (i, (col, asc)) in keys.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "$-.{}{}", col, if *asc { " ASC" } else { " DESC" })?;
                }
                Ok(())
            }
            Step::Limit { count, offset, .. } => {
                write!(f, "LIMIT {}", count)?;
                if *offset > 0 {
                    write!(f, " OFFSET {}", offset)?;
                }
                Ok(())
            }
            Step::GroupBy { keys, yields, .. } => {
                write!(f, "GROUP BY ")?;
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", k)?;
                }
                write!(f, " YIELD ")?;
                fmt_items(yields, f)
            }
        }
    }
}

impl fmt::Display for Pipeline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, step) in self.steps.iter().enumerate() {
            if i > 0 {
                write!(f, " | ")?;
            }
            write!(f, "{}", step)?;
        }
        Ok(())
    }
}

fn fmt_props(props: &[PropDecl], f: &mut fmt::Formatter<'_>) -> fmt::Result {
    write!(f, "(")?;
    for (i, p) in props.iter().enumerate() {
        if i > 0 {
            write!(f, ", ")?;
        }
        write!(f, "{} {}", p.name, p.ty)?;
        if p.nullable {
            write!(f, " NULL")?;
        } else {
            write!(f, " NOT NULL")?;
        }
        if let Some(d) = &p.default {
            write!(f, " DEFAULT {}", d)?;
        }
    }
    write!(f, ")")
}

fn kind_word(kind: SchemaKind) -> &'static str {
    match kind {
        SchemaKind::Tag => "TAG",
        SchemaKind::Edge => "EDGE",
    }
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statement::Use { space } => write!(f, "USE {}", space),
            Statement::CreateSpace { name, partition_num, replica_factor, vid_len, if_not_exists } => {
                write!(
                    f,
                    "CREATE SPACE {}{} (partition_num = {}, replica_factor = {}, vid_len = {})",
                    if *if_not_exists { "IF NOT EXISTS " } else { "" },
                    name,
                    partition_num,
                    replica_factor,
                    vid_len
                )
            }
            Statement::DropSpace { name } => write!(f, "DROP SPACE {}", name),
            Statement::ShowSpaces => write!(f, "SHOW SPACES"),
            Statement::CreateSchema { kind, name, props, if_not_exists } => {
                write!(
                    f,
                    "CREATE {} {}{} ",
                    kind_word(*kind),
                    if *if_not_exists { "IF NOT EXISTS " } else { "" },
                    name
                )?;
                fmt_props(props, f)
            }
            Statement::AlterSchema { kind, name, add, drop } => {
                write!(f, "ALTER {} {}", kind_word(*kind), name)?;
                let mut first = true;
                if !add.is_empty() {
                    write!(f, " ADD ")?;
                    fmt_props(add, f)?;
                    first = false;
                }
                if !drop.is_empty() {
                    if !first {
                        write!(f, ",")?;
                    }
                    write!(f, " DROP ({})", drop.join(", "))?;
                }
                Ok(())
            }
            Statement::DropSchema { kind, name } => {
                write!(f, "DROP {} {}", kind_word(*kind), name)
            }
            Statement::ShowSchemas { kind } => match kind {
                SchemaKind::Tag => write!(f, "SHOW TAGS"),
                SchemaKind::Edge => write!(f, "SHOW EDGES"),
            },
            Statement::DescribeSchema { kind, name } => {
                write!(f, "DESCRIBE {} {}", kind_word(*kind), name)
            }
            Statement::CreateIndex { kind, name, target, props, if_not_exists } => write!(
                f,
                "CREATE {} INDEX {}{} ON {} ({})",
                kind_word(*kind),
                if *if_not_exists { "IF NOT EXISTS " } else { "" },
                name,
                target,
                props.join(", ")
            ),
            Statement::DropIndex { kind, name } => {
                write!(f, "DROP {} INDEX {}", kind_word(*kind), name)
            }
            Statement::ShowIndexes { kind } => match kind {
                SchemaKind::Tag => write!(f, "SHOW TAG INDEXES"),
                SchemaKind::Edge => write!(f, "SHOW EDGE INDEXES"),
            },
            Statement::RebuildIndex { kind, name } => {
                write!(f, "REBUILD {} INDEX {}", kind_word(*kind), name)
            }
            Statement::InsertVertices { tag, prop_names, rows, if_not_exists, ignore_existed_index } => {
                write!(
                    f,
                    "INSERT VERTEX {}{}{} ({}) VALUES ",
                    if *if_not_exists { "IF NOT EXISTS " } else { "" },
                    if *ignore_existed_index { "IGNORE_EXISTED_INDEX " } else { "" },
                    tag,
                    prop_names.join(", ")
                )?;
                for (i, (vid, values)) in rows.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "\"{}\": (", vid)?;
                    for (j, v) in values.iter().enumerate() {
                        if j > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{}", v)?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
            Statement::InsertEdges { etype, prop_names, rows, if_not_exists } => {
                write!(
                    f,
                    "INSERT EDGE {}{} ({}) VALUES ",
                    if *if_not_exists { "IF NOT EXISTS " } else { "" },
                    etype,
                    prop_names.join(", ")
                )?;
                for (i, (er, values)) in rows.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}: (", er)?;
                    for (j, v) in values.iter().enumerate() {
                        if j > 0 {
                            write!(f, ", ")?;
                        }
                        write!(f, "{}", v)?;
                    }
                    write!(f, ")")?;
                }
                Ok(())
            }
            Statement::DeleteVertices { vids, with_edge } => {
                write!(f, "DELETE VERTEX ")?;
                quote_list(vids, f)?;
                if *with_edge {
                    write!(f, " WITH EDGE")?;
                }
                Ok(())
            }
            Statement::DeleteEdges { etype, refs } => {
                write!(f, "DELETE EDGE {} ", etype)?;
                for (i, e) in refs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{}", e)?;
                }
                Ok(())
            }
            Statement::Query(p) => write!(f, "{}", p),
            Statement::ShowHosts => write!(f, "SHOW HOSTS"),
            Statement::AddHost { host } => write!(f, "ADD HOST {}", host),
            Statement::RemoveHost { host } => write!(f, "REMOVE HOST {}", host),
            Statement::BalanceData => write!(f, "BALANCE DATA"),
            Statement::CreateSnapshot => write!(f, "CREATE SNAPSHOT"),
            Statement::ShowSnapshots => write!(f, "SHOW SNAPSHOTS"),
            Statement::ShowSlowQueries => write!(f, "SHOW SLOW QUERIES"),
            Statement::KillQuery { id } => write!(f, "KILL QUERY {}", id),
            Statement::CreateUser { name, password } => {
                write!(f, "CREATE USER {} WITH PASSWORD \"{}\"", name, password)
            }
            Statement::DropUser { name } => write!(f, "DROP USER {}", name),
            Statement::GrantRole { role, user } => write!(
                f,
                "GRANT ROLE {} TO {}",
                match role {
                    UserRole::Admin => "ADMIN",
                    UserRole::User => "USER",
                },
                user
            ),
            Statement::RevokeRole { user } => write!(f, "REVOKE ROLE FROM {}", user),
            Statement::ShowUsers => write!(f, "SHOW USERS"),
            Statement::Explain { profile, inner } => {
                write!(f, "{} {}", if *profile { "PROFILE" } else { "EXPLAIN" }, inner)
            }
        }
    }
}
