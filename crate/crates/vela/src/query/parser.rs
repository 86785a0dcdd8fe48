//! Recursive-descent parser. Errors carry line/column and the expected
//! token set.

use super::ast::*;
use super::lexer::{lex, Span, Tok, Token};
use super::QueryError;
use crate::expr::{BinOp, EdgeAccessor, Expr, UnOp};
use crate::meta::{SchemaKind, UserRole};
use crate::value::{Date, DateTime, PropertyType, PropertyValue};

pub struct Parser {
    tokens: Vec<Token>,
    pos: usize,
}

type PResult<T> = Result<T, QueryError>;

pub fn parse(text: &str) -> PResult<Vec<Statement>> {
    let mut p = Parser { tokens: lex(text)?, pos: 0 };
    let mut out = Vec::new();
    loop {
        while p.peek() == &Tok::Semi {
            p.bump();
        }
        if p.peek() == &Tok::Eof {
            break;
        }
        out.push(p.statement()?);
        if p.peek() != &Tok::Eof {
            p.expect(Tok::Semi, ";")?;
        }
    }
    if out.is_empty() {
        return Err(QueryError::syntax("empty statement", p.span(), &["statement"]));
    }
    Ok(out)
}

pub fn parse_one(text: &str) -> PResult<Statement> {
    let mut stmts = parse(text)?;
    if stmts.len() != 1 {
        return Err(QueryError::syntax(
            "expected exactly one statement",
            Span { line: 1, col: 1 },
            &[";"],
        ));
    }
    Ok(stmts.remove(0))
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn peek2(&self) -> &Tok {
        &self.tokens[(self.pos + 1).min(self.tokens.len() - 1)].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn bump(&mut self) -> Tok {
        let t = self.tokens[self.pos].tok.clone();
        if self.pos < self.tokens.len() - 1 {
            self.pos += 1;
        }
        t
    }

    fn expect(&mut self, t: Tok, what: &str) -> PResult<()> {
        if self.peek() == &t {
            self.bump();
            Ok(())
        } else {
            Err(QueryError::syntax(
                &format!("found {}", self.peek().describe()),
                self.span(),
                &[what],
            ))
        }
    }

    /// Case-insensitive keyword check without consuming.
    fn at_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    fn eat_kw(&mut self, kw: &str) -> bool {
        if self.at_kw(kw) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect_kw(&mut self, kw: &str) -> PResult<()> {
        if self.eat_kw(kw) {
            Ok(())
        } else {
            Err(QueryError::syntax(
                &format!("found {}", self.peek().describe()),
                self.span(),
                &[kw],
            ))
        }
    }

    fn ident(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(QueryError::syntax(
                &format!("found {}", other.describe()),
                self.span(),
                &[what],
            )),
        }
    }

    fn string(&mut self, what: &str) -> PResult<String> {
        match self.peek().clone() {
            Tok::Str(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(QueryError::syntax(
                &format!("found {}", other.describe()),
                self.span(),
                &[what],
            )),
        }
    }

    fn uint(&mut self, what: &str) -> PResult<u64> {
        match self.peek().clone() {
            Tok::Int(v) if v >= 0 => {
                self.bump();
                Ok(v as u64)
            }
            other => Err(QueryError::syntax(
                &format!("found {}", other.describe()),
                self.span(),
                &[what],
            )),
        }
    }

    fn int(&mut self) -> PResult<i64> {
        let neg = self.peek() == &Tok::Minus;
        if neg {
            self.bump();
        }
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(if neg { -v } else { v })
            }
            other => Err(QueryError::syntax(
                &format!("found {}", other.describe()),
                self.span(),
                &["integer"],
            )),
        }
    }

    fn schema_kind(&mut self) -> PResult<SchemaKind> {
        if self.eat_kw("TAG") {
            Ok(SchemaKind::Tag)
        } else if self.eat_kw("EDGE") {
            Ok(SchemaKind::Edge)
        } else {
            Err(QueryError::syntax(
                &format!("found {}", self.peek().describe()),
                self.span(),
                &["TAG", "EDGE"],
            ))
        }
    }

    // -- statements -----------------------------------------------------------

    fn statement(&mut self) -> PResult<Statement> {
        if self.at_kw("EXPLAIN") || self.at_kw("PROFILE") {
            let profile = self.at_kw("PROFILE");
            self.bump();
            let inner = self.statement()?;
            return Ok(Statement::Explain { profile, inner: Box::new(inner) });
        }
        if self.at_kw("USE") {
            self.bump();
            return Ok(Statement::Use { space: self.ident("space name")? });
        }
        if self.at_kw("CREATE") {
            return self.create_statement();
        }
        if self.at_kw("DROP") {
            return self.drop_statement();
        }
        if self.at_kw("ALTER") {
            return self.alter_statement();
        }
        if self.at_kw("SHOW") {
            return self.show_statement();
        }
        if self.at_kw("DESCRIBE") || self.at_kw("DESC") {
            self.bump();
            let kind = self.schema_kind()?;
            let name = self.ident("schema name")?;
            return Ok(Statement::DescribeSchema { kind, name });
        }
        if self.at_kw("REBUILD") {
            self.bump();
            let kind = self.schema_kind()?;
            self.expect_kw("INDEX")?;
            let name = self.ident("index name")?;
            return Ok(Statement::RebuildIndex { kind, name });
        }
        if self.at_kw("INSERT") {
            return self.insert_statement();
        }
        if self.at_kw("DELETE") {
            return self.delete_statement();
        }
        if self.at_kw("ADD") {
            self.bump();
            self.expect_kw("HOST")?;
            return Ok(Statement::AddHost { host: self.uint("host id")? as u32 });
        }
        if self.at_kw("REMOVE") {
            self.bump();
            self.expect_kw("HOST")?;
            return Ok(Statement::RemoveHost { host: self.uint("host id")? as u32 });
        }
        if self.at_kw("BALANCE") {
            self.bump();
            self.expect_kw("DATA")?;
            return Ok(Statement::BalanceData);
        }
        if self.at_kw("KILL") {
            self.bump();
            self.expect_kw("QUERY")?;
            return Ok(Statement::KillQuery { id: self.uint("query id")? });
        }
        if self.at_kw("GRANT") {
            self.bump();
            self.expect_kw("ROLE")?;
            let role = if self.eat_kw("ADMIN") {
                UserRole::Admin
            } else {
                self.expect_kw("USER")?;
                UserRole::User
            };
            self.expect_kw("TO")?;
            return Ok(Statement::GrantRole { role, user: self.ident("user")? });
        }
        if self.at_kw("REVOKE") {
            self.bump();
            self.expect_kw("ROLE")?;
            self.expect_kw("FROM")?;
            return Ok(Statement::RevokeRole { user: self.ident("user")? });
        }
        if self.at_kw("GO") || self.at_kw("FETCH") || self.at_kw("LOOKUP") || self.at_kw("YIELD") {
            return Ok(Statement::Query(self.pipeline()?));
        }
        Err(QueryError::syntax(
            &format!("found {}", self.peek().describe()),
            self.span(),
            &[
                "USE", "CREATE", "DROP", "ALTER", "SHOW", "DESCRIBE", "REBUILD", "INSERT",
                "DELETE", "GO", "FETCH", "LOOKUP", "YIELD", "EXPLAIN", "PROFILE",
            ],
        ))
    }

    fn if_not_exists(&mut self) -> PResult<bool> {
        if self.at_kw("IF") {
            self.bump();
            self.expect_kw("NOT")?;
            self.expect_kw("EXISTS")?;
            Ok(true)
        } else {
            Ok(false)
        }
    }

    fn create_statement(&mut self) -> PResult<Statement> {
        self.expect_kw("CREATE")?;
        if self.at_kw("SPACE") {
            self.bump();
            let if_not_exists = self.if_not_exists()?;
            let name = self.ident("space name")?;
            let (mut partition_num, mut replica_factor, mut vid_len) = (8u32, 1u32, 16u32);
            if self.peek() == &Tok::LParen {
                self.bump();
                loop {
                    let key = self.ident("space option")?;
                    self.expect(Tok::Assign, "=")?;
                    let value = self.uint("option value")? as u32;
                    match key.to_ascii_lowercase().as_str() {
                        "partition_num" => partition_num = value,
                        "replica_factor" => replica_factor = value,
                        "vid_len" => vid_len = value,
                        other => {
                            return Err(QueryError::syntax(
                                &format!("unknown space option '{other}'"),
                                self.span(),
                                &["partition_num", "replica_factor", "vid_len"],
                            ))
                        }
                    }
                    if self.peek() == &Tok::Comma {
                        self.bump();
                    } else {
                        break;
                    }
                }
                self.expect(Tok::RParen, ")")?;
            }
            return Ok(Statement::CreateSpace {
                name,
                partition_num,
                replica_factor,
                vid_len,
                if_not_exists,
            });
        }
        if self.at_kw("SNAPSHOT") {
            self.bump();
            return Ok(Statement::CreateSnapshot);
        }
        if self.at_kw("USER") {
            self.bump();
            let name = self.ident("user name")?;
            self.expect_kw("WITH")?;
            self.expect_kw("PASSWORD")?;
            let password = self.string("password")?;
            return Ok(Statement::CreateUser { name, password });
        }
        let kind = self.schema_kind()?;
        if self.at_kw("INDEX") {
            self.bump();
            let if_not_exists = self.if_not_exists()?;
            let name = self.ident("index name")?;
            self.expect_kw("ON")?;
            let target = self.ident("tag or edge type")?;
            self.expect(Tok::LParen, "(")?;
            let mut props = vec![self.ident("property")?];
            while self.peek() == &Tok::Comma {
                self.bump();
                props.push(self.ident("property")?);
            }
            self.expect(Tok::RParen, ")")?;
            return Ok(Statement::CreateIndex { kind, name, target, props, if_not_exists });
        }
        let if_not_exists = self.if_not_exists()?;
        let name = self.ident("schema name")?;
        let props = self.prop_decls()?;
        Ok(Statement::CreateSchema { kind, name, props, if_not_exists })
    }

    fn prop_decls(&mut self) -> PResult<Vec<PropDecl>> {
        self.expect(Tok::LParen, "(")?;
        let mut props = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                props.push(self.prop_decl()?);
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, ")")?;
        Ok(props)
    }

    fn prop_decl(&mut self) -> PResult<PropDecl> {
        let name = self.ident("property name")?;
        let ty_name = self.ident("type")?;
        let ty = match ty_name.to_ascii_uppercase().as_str() {
            "INT" | "INT64" => PropertyType::Int64,
            "FLOAT" | "DOUBLE" | "FLOAT64" => PropertyType::Float64,
            "STRING" => PropertyType::String,
            "BOOL" => PropertyType::Bool,
            "DATE" => PropertyType::Date,
            "DATETIME" => PropertyType::DateTime,
            other => {
                return Err(QueryError::syntax(
                    &format!("unknown type '{other}'"),
                    self.span(),
                    &["INT64", "FLOAT64", "STRING", "BOOL", "DATE", "DATETIME"],
                ))
            }
        };
        // properties default to NOT NULL so they are indexable
        let mut nullable = false;
        if self.at_kw("NOT") {
            self.bump();
            self.expect_kw("NULL")?;
        } else if self.eat_kw("NULL") {
            nullable = true;
        }
        let mut default = None;
        if self.eat_kw("DEFAULT") {
            let expr = self.expr()?;
            default = Some(const_eval(&expr, self.span())?);
        }
        Ok(PropDecl { name, ty, nullable, default })
    }

    fn drop_statement(&mut self) -> PResult<Statement> {
        self.expect_kw("DROP")?;
        if self.at_kw("SPACE") {
            self.bump();
            return Ok(Statement::DropSpace { name: self.ident("space name")? });
        }
        if self.at_kw("USER") {
            self.bump();
            return Ok(Statement::DropUser { name: self.ident("user name")? });
        }
        let kind = self.schema_kind()?;
        if self.at_kw("INDEX") {
            self.bump();
            return Ok(Statement::DropIndex { kind, name: self.ident("index name")? });
        }
        Ok(Statement::DropSchema { kind, name: self.ident("schema name")? })
    }

    fn alter_statement(&mut self) -> PResult<Statement> {
        self.expect_kw("ALTER")?;
        let kind = self.schema_kind()?;
        let name = self.ident("schema name")?;
        let mut add = Vec::new();
        let mut drop = Vec::new();
        loop {
            if self.eat_kw("ADD") {
                add.extend(self.prop_decls()?);
            } else if self.eat_kw("DROP") {
                self.expect(Tok::LParen, "(")?;
                drop.push(self.ident("property")?);
                while self.peek() == &Tok::Comma {
                    self.bump();
                    drop.push(self.ident("property")?);
                }
                self.expect(Tok::RParen, ")")?;
            } else {
                break;
            }
            if self.peek() == &Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        if add.is_empty() && drop.is_empty() {
            return Err(QueryError::syntax(
                "ALTER needs ADD or DROP",
                self.span(),
                &["ADD", "DROP"],
            ));
        }
        Ok(Statement::AlterSchema { kind, name, add, drop })
    }

    fn show_statement(&mut self) -> PResult<Statement> {
        self.expect_kw("SHOW")?;
        if self.at_kw("TAGS") {
            self.bump();
            return Ok(Statement::ShowSchemas { kind: SchemaKind::Tag });
        }
        if self.at_kw("EDGES") {
            self.bump();
            return Ok(Statement::ShowSchemas { kind: SchemaKind::Edge });
        }
        if self.at_kw("SPACES") {
            self.bump();
            return Ok(Statement::ShowSpaces);
        }
        if self.at_kw("HOSTS") {
            self.bump();
            return Ok(Statement::ShowHosts);
        }
        if self.at_kw("SNAPSHOTS") {
            self.bump();
            return Ok(Statement::ShowSnapshots);
        }
        if self.at_kw("USERS") {
            self.bump();
            return Ok(Statement::ShowUsers);
        }
        if self.at_kw("SLOW") {
            self.bump();
            self.expect_kw("QUERIES")?;
            return Ok(Statement::ShowSlowQueries);
        }
        if self.at_kw("TAG") || self.at_kw("EDGE") {
            let kind = self.schema_kind()?;
            self.expect_kw("INDEXES")?;
            return Ok(Statement::ShowIndexes { kind });
        }
        Err(QueryError::syntax(
            &format!("found {}", self.peek().describe()),
            self.span(),
            &["TAGS", "EDGES", "SPACES", "HOSTS", "TAG INDEXES", "EDGE INDEXES", "SLOW QUERIES"],
        ))
    }

    fn insert_statement(&mut self) -> PResult<Statement> {
        self.expect_kw("INSERT")?;
        if self.eat_kw("VERTEX") {
            let if_not_exists = self.if_not_exists()?;
            let ignore_existed_index = self.eat_kw("IGNORE_EXISTED_INDEX");
            let tag = self.ident("tag name")?;
            let prop_names = self.name_list()?;
            self.expect_kw("VALUES")?;
            let mut rows = Vec::new();
            loop {
                let vid = self.string("vid string")?;
                self.expect(Tok::Colon, ":")?;
                rows.push((vid, self.value_list()?));
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            return Ok(Statement::InsertVertices {
                tag,
                prop_names,
                rows,
                if_not_exists,
                ignore_existed_index,
            });
        }
        self.expect_kw("EDGE")?;
        let if_not_exists = self.if_not_exists()?;
        let etype = self.ident("edge type")?;
        let prop_names = self.name_list()?;
        self.expect_kw("VALUES")?;
        let mut rows = Vec::new();
        loop {
            let er = self.edge_ref()?;
            self.expect(Tok::Colon, ":")?;
            rows.push((er, self.value_list()?));
            if self.peek() == &Tok::Comma {
                self.bump();
            } else {
                break;
            }
        }
        Ok(Statement::InsertEdges { etype, prop_names, rows, if_not_exists })
    }

    fn name_list(&mut self) -> PResult<Vec<String>> {
        self.expect(Tok::LParen, "(")?;
        let mut names = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                names.push(self.ident("property name")?);
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, ")")?;
        Ok(names)
    }

    fn value_list(&mut self) -> PResult<Vec<Expr>> {
        self.expect(Tok::LParen, "(")?;
        let mut values = Vec::new();
        if self.peek() != &Tok::RParen {
            loop {
                values.push(self.expr()?);
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
        }
        self.expect(Tok::RParen, ")")?;
        Ok(values)
    }

    fn edge_ref(&mut self) -> PResult<EdgeRef> {
        let src = self.string("source vid")?;
        self.expect(Tok::Arrow, "->")?;
        let dst = self.string("destination vid")?;
        let mut rank = 0;
        if self.peek() == &Tok::At {
            self.bump();
            rank = self.int()?;
        }
        Ok(EdgeRef { src, dst, rank })
    }

    fn delete_statement(&mut self) -> PResult<Statement> {
        self.expect_kw("DELETE")?;
        if self.eat_kw("VERTEX") {
            let mut vids = vec![self.string("vid")?];
            while self.peek() == &Tok::Comma {
                self.bump();
                vids.push(self.string("vid")?);
            }
            let mut with_edge = false;
            if self.at_kw("WITH") {
                self.bump();
                self.expect_kw("EDGE")?;
                with_edge = true;
            }
            return Ok(Statement::DeleteVertices { vids, with_edge });
        }
        self.expect_kw("EDGE")?;
        let etype = self.ident("edge type")?;
        let mut refs = vec![self.edge_ref()?];
        while self.peek() == &Tok::Comma {
            self.bump();
            refs.push(self.edge_ref()?);
        }
        Ok(Statement::DeleteEdges { etype, refs })
    }

    // -- pipelines --------------------------------------------------------------

    fn pipeline(&mut self) -> PResult<Pipeline> {
        let mut steps = vec![self.step()?];
        while self.peek() == &Tok::Pipe {
            self.bump();
            steps.push(self.step()?);
        }
        Ok(Pipeline { steps })
    }

    fn step(&mut self) -> PResult<Step> {
        let span = self.span();
        if self.at_kw("GO") {
            return self.go_step(span);
        }
        if self.at_kw("FETCH") {
            return self.fetch_step(span);
        }
        if self.at_kw("LOOKUP") {
            return self.lookup_step(span);
        }
        if self.at_kw("YIELD") {
            self.bump();
            let distinct = self.eat_kw("DISTINCT");
            let items = self.yield_items()?;
            let where_ = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
            return Ok(Step::Yield(YieldStep { items, where_, distinct, span }));
        }
        if self.at_kw("ORDER") {
            self.bump();
            self.expect_kw("BY")?;
            let mut keys = Vec::new();
            loop {
                self.expect(Tok::DollarMinus, "$-")?;
                self.expect(Tok::Dot, ".")?;
                let col = self.ident("column")?;
                let asc = if self.eat_kw("DESC") {
                    false
                } else {
                    self.eat_kw("ASC");
                    true
                };
                keys.push((col, asc));
                if self.peek() == &Tok::Comma {
                    self.bump();
                } else {
                    break;
                }
            }
            return Ok(Step::OrderBy { keys, span });
        }
        if self.at_kw("LIMIT") {
            self.bump();
            let count = self.uint("row count")?;
            let mut offset = 0;
            if self.eat_kw("OFFSET") {
                offset = self.uint("offset")?;
            }
            return Ok(Step::Limit { count, offset, span });
        }
        if self.at_kw("GROUP") {
            self.bump();
            self.expect_kw("BY")?;
            let mut keys = vec![self.expr()?];
            while self.peek() == &Tok::Comma {
                self.bump();
                keys.push(self.expr()?);
            }
            self.expect_kw("YIELD")?;
            let yields = self.yield_items()?;
            return Ok(Step::GroupBy { keys, yields, span });
        }
        Err(QueryError::syntax(
            &format!("found {}", self.peek().describe()),
            span,
            &["GO", "FETCH", "LOOKUP", "YIELD", "ORDER BY", "LIMIT", "GROUP BY"],
        ))
    }

    fn go_step(&mut self, span: Span) -> PResult<Step> {
        self.expect_kw("GO")?;
        let mut steps = 1;
        if let Tok::Int(n) = self.peek() {
            let n = *n;
            if n < 0 {
                return Err(QueryError::syntax("negative step count", self.span(), &["STEPS"]));
            }
            self.bump();
            steps = n as u64;
            if !self.eat_kw("STEPS") {
                self.expect_kw("STEP")?;
            }
        }
        self.expect_kw("FROM")?;
        let from = if self.peek() == &Tok::DollarMinus {
            self.bump();
            self.expect(Tok::Dot, ".")?;
            FromSpec::InputCol(self.ident("column")?)
        } else {
            let mut vids = vec![self.string("vid")?];
            while self.peek() == &Tok::Comma {
                self.bump();
                vids.push(self.string("vid")?);
            }
            FromSpec::Vids(vids)
        };
        self.expect_kw("OVER")?;
        let over = if self.peek() == &Tok::Star {
            self.bump();
            OverSpec::All
        } else {
            let mut types = vec![self.ident("edge type")?];
            while self.peek() == &Tok::Comma {
                self.bump();
                types.push(self.ident("edge type")?);
            }
            OverSpec::Types(types)
        };
        let direction = if self.eat_kw("REVERSELY") {
            GoDirection::Reversely
        } else if self.eat_kw("BIDIRECT") {
            GoDirection::Bidirect
        } else {
            GoDirection::Out
        };
        let where_ = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let mut distinct = false;
        let yields = if self.eat_kw("YIELD") {
            distinct = self.eat_kw("DISTINCT");
            Some(self.yield_items()?)
        } else {
            None
        };
        Ok(Step::Go(GoStep { steps, from, over, direction, where_, yields, distinct, span }))
    }

    fn fetch_step(&mut self, span: Span) -> PResult<Step> {
        self.expect_kw("FETCH")?;
        self.expect_kw("PROP")?;
        self.expect_kw("ON")?;
        let target = self.ident("tag or edge type")?;
        // an edge ref starts with "src" ->; a vid list is just strings
        let first = self.string("vid")?;
        let refs = if self.peek() == &Tok::Arrow {
            self.pos -= 1; // back up over the consumed string
            let mut edges = vec![self.edge_ref()?];
            while self.peek() == &Tok::Comma {
                self.bump();
                edges.push(self.edge_ref()?);
            }
            FetchRefs::Edges(edges)
        } else {
            let mut vids = vec![first];
            while self.peek() == &Tok::Comma {
                self.bump();
                vids.push(self.string("vid")?);
            }
            FetchRefs::Vids(vids)
        };
        let yields = if self.eat_kw("YIELD") { Some(self.yield_items()?) } else { None };
        Ok(Step::Fetch(FetchStep { target, refs, yields, span }))
    }

    fn lookup_step(&mut self, span: Span) -> PResult<Step> {
        self.expect_kw("LOOKUP")?;
        self.expect_kw("ON")?;
        let target = self.ident("tag or edge type")?;
        let where_ = if self.eat_kw("WHERE") { Some(self.expr()?) } else { None };
        let yields = if self.eat_kw("YIELD") { Some(self.yield_items()?) } else { None };
        Ok(Step::Lookup(LookupStep { target, where_, yields, span }))
    }

    fn yield_items(&mut self) -> PResult<Vec<YieldItem>> {
        let mut items = vec![self.yield_item()?];
        while self.peek() == &Tok::Comma {
            self.bump();
            items.push(self.yield_item()?);
        }
        Ok(items)
    }

    fn yield_item(&mut self) -> PResult<YieldItem> {
        let value = if let Tok::Ident(name) = self.peek() {
            let agg = match name.to_ascii_uppercase().as_str() {
                "COUNT" => Some(AggFunc::Count),
                "SUM" => Some(AggFunc::Sum),
                "AVG" => Some(AggFunc::Avg),
                "MIN" => Some(AggFunc::Min),
                "MAX" => Some(AggFunc::Max),
                _ => None,
            };
            match agg {
                Some(func) if self.peek2() == &Tok::LParen => {
                    self.bump();
                    self.bump();
                    let arg = if self.peek() == &Tok::Star {
                        self.bump();
                        None
                    } else {
                        Some(self.expr()?)
                    };
                    self.expect(Tok::RParen, ")")?;
                    YieldValue::Agg(func, arg)
                }
                _ => YieldValue::Expr(self.expr()?),
            }
        } else {
            YieldValue::Expr(self.expr()?)
        };
        let alias = if self.eat_kw("AS") { Some(self.ident("alias")?) } else { None };
        Ok(YieldItem { value, alias })
    }

    // -- expressions --------------------------------------------------------------

    pub fn expr(&mut self) -> PResult<Expr> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.and_expr()?;
        while self.at_kw("OR") {
            self.bump();
            let rhs = self.and_expr()?;
            lhs = Expr::Binary { op: BinOp::Or, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.not_expr()?;
        while self.at_kw("AND") {
            self.bump();
            let rhs = self.not_expr()?;
            lhs = Expr::Binary { op: BinOp::And, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn not_expr(&mut self) -> PResult<Expr> {
        if self.at_kw("NOT") || self.peek() == &Tok::Bang {
            self.bump();
            let inner = self.not_expr()?;
            return Ok(Expr::Unary { op: UnOp::Not, expr: Box::new(inner) });
        }
        self.cmp_expr()
    }

    fn cmp_expr(&mut self) -> PResult<Expr> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::Eq => Some(BinOp::Eq),
            Tok::Ne => Some(BinOp::Ne),
            Tok::Lt => Some(BinOp::Lt),
            Tok::Le => Some(BinOp::Le),
            Tok::Gt => Some(BinOp::Gt),
            Tok::Ge => Some(BinOp::Ge),
            Tok::Ident(s) if s.eq_ignore_ascii_case("STARTS") => Some(BinOp::StartsWith),
            Tok::Ident(s) if s.eq_ignore_ascii_case("CONTAINS") => Some(BinOp::Contains),
            _ => None,
        };
        match op {
            None => Ok(lhs),
            Some(BinOp::StartsWith) => {
                self.bump();
                self.expect_kw("WITH")?;
                let rhs = self.add_expr()?;
                Ok(Expr::Binary { op: BinOp::StartsWith, lhs: Box::new(lhs), rhs: Box::new(rhs) })
            }
            Some(op) => {
                self.bump();
                let rhs = self.add_expr()?;
                Ok(Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) })
            }
        }
    }

    fn add_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                Tok::Percent => BinOp::Mod,
                _ => break,
            };
            self.bump();
            let rhs = self.unary_expr()?;
            lhs = Expr::Binary { op, lhs: Box::new(lhs), rhs: Box::new(rhs) };
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> PResult<Expr> {
        if self.peek() == &Tok::Minus {
            self.bump();
            let inner = self.unary_expr()?;
            // fold negative literals
            if let Expr::Literal(PropertyValue::Int64(v)) = inner {
                return Ok(Expr::Literal(PropertyValue::Int64(-v)));
            }
            if let Expr::Literal(PropertyValue::Float64(v)) = inner {
                return Ok(Expr::Literal(PropertyValue::Float64(-v)));
            }
            return Ok(Expr::Unary { op: UnOp::Neg, expr: Box::new(inner) });
        }
        self.primary()
    }

    fn primary(&mut self) -> PResult<Expr> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Int(v) => {
                self.bump();
                Ok(Expr::Literal(PropertyValue::Int64(v)))
            }
            Tok::Float(v) => {
                self.bump();
                Ok(Expr::Literal(PropertyValue::Float64(v)))
            }
            Tok::Str(s) => {
                self.bump();
                Ok(Expr::Literal(PropertyValue::Str(s)))
            }
            Tok::DollarMinus => {
                self.bump();
                self.expect(Tok::Dot, ".")?;
                Ok(Expr::InputCol(self.ident("column")?))
            }
            Tok::LParen => {
                self.bump();
                let e = self.expr()?;
                self.expect(Tok::RParen, ")")?;
                Ok(e)
            }
            Tok::Ident(name) => {
                self.bump();
                let upper = name.to_ascii_uppercase();
                if upper == "TRUE" {
                    return Ok(Expr::Literal(PropertyValue::Bool(true)));
                }
                if upper == "FALSE" {
                    return Ok(Expr::Literal(PropertyValue::Bool(false)));
                }
                if upper == "NULL" {
                    return Ok(Expr::Literal(PropertyValue::Null));
                }
                if self.peek() == &Tok::LParen {
                    self.bump();
                    let e = self.call(&upper, span)?;
                    self.expect(Tok::RParen, ")")?;
                    return Ok(e);
                }
                if self.peek() == &Tok::Dot {
                    self.bump();
                    let prop = self.ident("property")?;
                    return Ok(Expr::Prop { owner: name, name: prop });
                }
                // bare identifier: a column of the current row
                Ok(Expr::InputCol(name))
            }
            other => Err(QueryError::syntax(
                &format!("found {}", other.describe()),
                span,
                &["literal", "$-.column", "property reference", "("],
            )),
        }
    }

    fn call(&mut self, func: &str, span: Span) -> PResult<Expr> {
        match func {
            "DATE" => {
                let s = self.string("date string")?;
                let d = Date::parse(&s).ok_or_else(|| {
                    QueryError::syntax(&format!("bad date '{s}'"), span, &["YYYY-MM-DD"])
                })?;
                Ok(Expr::Literal(PropertyValue::Date(d)))
            }
            "DATETIME" => {
                let s = self.string("datetime string")?;
                let d = DateTime::parse(&s).ok_or_else(|| {
                    QueryError::syntax(
                        &format!("bad datetime '{s}'"),
                        span,
                        &["YYYY-MM-DDThh:mm:ss"],
                    )
                })?;
                Ok(Expr::Literal(PropertyValue::DateTime(d)))
            }
            "SRC" | "DST" | "RANK" | "TYPE" => {
                self.expect_kw("EDGE")?;
                Ok(Expr::Edge(match func {
                    "SRC" => EdgeAccessor::Src,
                    "DST" => EdgeAccessor::Dst,
                    "RANK" => EdgeAccessor::Rank,
                    _ => EdgeAccessor::TypeName,
                }))
            }
            "ID" => {
                self.expect_kw("VERTEX")?;
                Ok(Expr::VertexId)
            }
            "COUNT" | "SUM" | "AVG" | "MIN" | "MAX" => Err(QueryError::syntax(
                &format!("aggregate {func} is only allowed as a YIELD item"),
                span,
                &["YIELD"],
            )),
            other => Err(QueryError::syntax(
                &format!("unknown function '{other}'"),
                span,
                &["DATE", "DATETIME", "SRC", "DST", "RANK", "TYPE", "id"],
            )),
        }
    }
}

/// Evaluates a constant expression (literals and arithmetic only).
pub fn const_eval(expr: &Expr, span: Span) -> PResult<PropertyValue> {
    let v = expr.eval(&crate::expr::EmptyContext);
    match (&v, expr) {
        (PropertyValue::Null, Expr::Literal(PropertyValue::Null)) => Ok(v),
        (PropertyValue::Null, _) => Err(QueryError::syntax(
            "expected a constant value",
            span,
            &["literal"],
        )),
        _ => Ok(v),
    }
}
