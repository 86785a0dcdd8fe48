//! The Graph Service pipeline: parse, validate, plan, optimize with a
//! rule-based cascades pass, and execute, with EXPLAIN/PROFILE renderings.

pub mod ast;
pub mod execute;
pub mod explain;
pub mod lexer;
pub mod optimizer;
pub mod parser;
pub mod plan;
pub mod validate;

pub use execute::{ExecOutcome, NodeStats, QueryBackend};
pub use explain::render as render_plan;
pub use parser::{parse, parse_one};

use crate::meta::{MetaError, UserRole};
use crate::storage::StorageError;
use lexer::Span;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum QueryError {
    #[error("syntax error at {line}:{col}: {message} (expected {expected:?})")]
    Syntax { message: String, line: u32, col: u32, expected: Vec<String> },
    #[error("semantic error at {line}:{col}: {message}")]
    Validate { message: String, line: u32, col: u32 },
    #[error("no graph space selected; run USE <space> first")]
    NoSpaceSelected,
    #[error("permission denied: {0} requires the admin role")]
    PermissionDenied(String),
    #[error(transparent)]
    Meta(#[from] MetaError),
    #[error(transparent)]
    Storage(#[from] StorageError),
    #[error("query killed")]
    Killed,
    #[error("optimizer rule budget exceeded; fell back to the unoptimized plan")]
    RuleBudgetExceeded,
    #[error("{0}")]
    Internal(String),
}

impl QueryError {
    pub fn syntax(message: &str, span: Span, expected: &[&str]) -> QueryError {
        QueryError::Syntax {
            message: message.into(),
            line: span.line,
            col: span.col,
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(message: impl Into<String>, span: Span) -> QueryError {
        QueryError::Validate { message: message.into(), line: span.line, col: span.col }
    }

    /// Stable numeric code for the wire protocol.
    pub fn code(&self) -> u32 {
        match self {
            QueryError::Syntax { .. } => 1,
            QueryError::Validate { .. } => 2,
            QueryError::NoSpaceSelected => 3,
            QueryError::PermissionDenied(_) => 4,
            QueryError::Meta(_) => 5,
            QueryError::Storage(StorageError::Retryable(_)) => 7,
            QueryError::Storage(_) => 6,
            QueryError::Killed => 8,
            QueryError::RuleBudgetExceeded => 9,
            QueryError::Internal(_) => 10,
        }
    }
}

impl From<crate::cluster::sim::ClusterError> for QueryError {
    fn from(e: crate::cluster::sim::ClusterError) -> Self {
        match e {
            crate::cluster::sim::ClusterError::Meta(m) => QueryError::Meta(m),
            crate::cluster::sim::ClusterError::Storage(s) => QueryError::Storage(s),
            crate::cluster::sim::ClusterError::Timeout(t) => {
                QueryError::Storage(StorageError::Retryable(t))
            }
        }
    }
}

/// Per-connection query session state.
#[derive(Debug, Clone)]
pub struct Session {
    pub id: u64,
    pub user: String,
    pub role: UserRole,
    pub space: Option<(crate::codec::SpaceId, String)>,
    /// Statements slower than this are recorded in the meta service.
    pub slow_query_threshold_us: u64,
}

impl Session {
    pub fn new(id: u64, user: &str, role: UserRole) -> Session {
        Session {
            id,
            user: user.into(),
            role,
            space: None,
            slow_query_threshold_us: 50_000,
        }
    }

    pub fn space_id(&self) -> Result<crate::codec::SpaceId, QueryError> {
        self.space.as_ref().map(|(id, _)| *id).ok_or(QueryError::NoSpaceSelected)
    }
}

use execute::execute_plan;
use plan::{build_plan, Plan};
use std::collections::BTreeMap;
use std::sync::atomic::AtomicBool;
use validate::Typed;

/// What a statement produced: rows, an EXPLAIN rendering, or a message.
#[derive(Debug, Clone, Default)]
pub struct StatementOutcome {
    pub data: crate::value::DataSet,
    pub explain: Option<String>,
    pub message: Option<String>,
    pub stats: Option<BTreeMap<u32, NodeStats>>,
    /// Plan rendering of the executed statement (PROFILE keeps stats).
    pub profiled: bool,
}

/// Parses, validates, plans, optimizes, and executes one statement.
/// `USE <space>` updates the session in place.
pub fn run_statement(
    backend: &mut dyn QueryBackend,
    session: &mut Session,
    text: &str,
    kill: Option<&AtomicBool>,
) -> Result<StatementOutcome, QueryError> {
    let stmt = parse_one(text)?;
    let catalog = backend.catalog_snapshot();
    let typed = validate::validate(&stmt, &catalog, session)?;
    match typed {
        Typed::Explain { profile, inner } => {
            let (plan, _) = plan_and_optimize(&inner, &catalog, session)?;
            if profile {
                let mut outcome = execute_plan(backend, &plan, kill)?;
                apply_session_effects(&mut outcome, session);
                Ok(StatementOutcome {
                    explain: Some(explain::render(&plan, Some(&outcome.stats))),
                    data: outcome.data,
                    message: outcome.message,
                    stats: Some(outcome.stats),
                    profiled: true,
                })
            } else {
                Ok(StatementOutcome {
                    explain: Some(explain::render(&plan, None)),
                    ..StatementOutcome::default()
                })
            }
        }
        other => {
            let (plan, _) = plan_and_optimize(&other, &catalog, session)?;
            let mut outcome = execute_plan(backend, &plan, kill)?;
            apply_session_effects(&mut outcome, session);
            Ok(StatementOutcome {
                data: outcome.data,
                explain: None,
                message: outcome.message,
                stats: None,
                profiled: false,
            })
        }
    }
}

fn apply_session_effects(outcome: &mut ExecOutcome, session: &mut Session) {
    if let Some((id, name)) = outcome.new_space.take() {
        session.space = Some((id, name));
    }
}

/// Builds the naive plan and optimizes it. A rule-budget overflow falls
/// back to the naive plan (the error is reported as a diagnostic).
pub fn plan_and_optimize(
    typed: &Typed,
    catalog: &crate::meta::Catalog,
    session: &Session,
) -> Result<(Plan, Option<QueryError>), QueryError> {
    let naive = build_plan(typed);
    let space_cat = session.space.as_ref().and_then(|(id, _)| catalog.space(*id));
    let (optimized, diag) = optimizer::optimize(&naive, space_cat);
    Ok((optimized, diag))
}

/// The unoptimized plan, for optimizer-soundness comparisons.
pub fn plan_naive(typed: &Typed) -> Plan {
    build_plan(typed)
}
