//! Expression trees shared by the query pipeline and storage-side
//! pushed-down filters. One evaluator serves both, so a filter pushed
//! into a storage node computes exactly what the executor would have.

use crate::value::{PropertyValue, PropertyType};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
    Add,
    Sub,
    Mul,
    Div,
    Mod,
    StartsWith,
    Contains,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::And => "AND",
            BinOp::Or => "OR",
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Mod => "%",
            BinOp::StartsWith => "STARTS WITH",
            BinOp::Contains => "CONTAINS",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnOp {
    Not,
    Neg,
}

/// Built-in accessors over the current edge row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeAccessor {
    Src,
    Dst,
    Rank,
    TypeName,
}

impl EdgeAccessor {
    pub fn column(self) -> &'static str {
        match self {
            EdgeAccessor::Src => "_src",
            EdgeAccessor::Dst => "_dst",
            EdgeAccessor::Rank => "_rank",
            EdgeAccessor::TypeName => "_type",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Literal(PropertyValue),
    /// `$-.name`: a column of the piped-in result.
    InputCol(String),
    /// `owner.name`: a tag or edge-type property in the current context.
    Prop { owner: String, name: String },
    /// SRC(EDGE), DST(EDGE), RANK(EDGE), TYPE(EDGE).
    Edge(EdgeAccessor),
    /// id(VERTEX): the vid in a LOOKUP/FETCH row context.
    VertexId,
    Unary { op: UnOp, expr: Box<Expr> },
    Binary { op: BinOp, lhs: Box<Expr>, rhs: Box<Expr> },
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write!(f, "{}", v),
            Expr::InputCol(name) => write!(f, "$-.{}", name),
            Expr::Prop { owner, name } => write!(f, "{}.{}", owner, name),
            Expr::Edge(acc) => match acc {
                EdgeAccessor::Src => write!(f, "SRC(EDGE)"),
                EdgeAccessor::Dst => write!(f, "DST(EDGE)"),
                EdgeAccessor::Rank => write!(f, "RANK(EDGE)"),
                EdgeAccessor::TypeName => write!(f, "TYPE(EDGE)"),
            },
            Expr::VertexId => write!(f, "id(VERTEX)"),
            Expr::Unary { op, expr } => match op {
                UnOp::Not => write!(f, "!({})", expr),
                UnOp::Neg => write!(f, "-({})", expr),
            },
            Expr::Binary { op, lhs, rhs } => write!(f, "({} {} {})", lhs, op.symbol(), rhs),
        }
    }
}

/// Name resolution for one row being evaluated.
pub trait EvalContext {
    /// `$-.name`
    fn input_col(&self, name: &str) -> Option<PropertyValue>;
    /// `owner.name`
    fn prop(&self, owner: &str, name: &str) -> Option<PropertyValue>;
    fn edge(&self, acc: EdgeAccessor) -> Option<PropertyValue>;
    fn vertex_id(&self) -> Option<PropertyValue>;
}

/// Context with no bindings; constants only.
pub struct EmptyContext;

impl EvalContext for EmptyContext {
    fn input_col(&self, _: &str) -> Option<PropertyValue> {
        None
    }
    fn prop(&self, _: &str, _: &str) -> Option<PropertyValue> {
        None
    }
    fn edge(&self, _: EdgeAccessor) -> Option<PropertyValue> {
        None
    }
    fn vertex_id(&self) -> Option<PropertyValue> {
        None
    }
}

impl Expr {
    /// Evaluates to a value; unresolved names and type mismatches yield
    /// Null, and Null propagates through operators (except AND/OR which
    /// treat it as false).
    pub fn eval(&self, ctx: &dyn EvalContext) -> PropertyValue {
        use PropertyValue as V;
        match self {
            Expr::Literal(v) => v.clone(),
            Expr::InputCol(name) => ctx.input_col(name).unwrap_or(V::Null),
            Expr::Prop { owner, name } => ctx.prop(owner, name).unwrap_or(V::Null),
            Expr::Edge(acc) => ctx.edge(*acc).unwrap_or(V::Null),
            Expr::VertexId => ctx.vertex_id().unwrap_or(V::Null),
            Expr::Unary { op, expr } => {
                let v = expr.eval(ctx);
                match (op, v) {
                    (UnOp::Not, V::Bool(b)) => V::Bool(!b),
                    (UnOp::Neg, V::Int64(i)) => V::Int64(-i),
                    (UnOp::Neg, V::Float64(x)) => V::Float64(-x),
                    _ => V::Null,
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                // short-circuit booleans
                if matches!(op, BinOp::And | BinOp::Or) {
                    let l = lhs.eval(ctx).as_bool().unwrap_or(false);
                    return match op {
                        BinOp::And => {
                            if !l {
                                V::Bool(false)
                            } else {
                                V::Bool(rhs.eval(ctx).as_bool().unwrap_or(false))
                            }
                        }
                        BinOp::Or => {
                            if l {
                                V::Bool(true)
                            } else {
                                V::Bool(rhs.eval(ctx).as_bool().unwrap_or(false))
                            }
                        }
                        _ => unreachable!(),
                    };
                }
                let l = lhs.eval(ctx);
                let r = rhs.eval(ctx);
                if l.is_null() || r.is_null() {
                    return V::Null;
                }
                match op {
                    BinOp::Eq => V::Bool(compare(&l, &r) == Some(Ordering::Equal)),
                    BinOp::Ne => V::Bool(compare(&l, &r) != Some(Ordering::Equal)),
                    BinOp::Lt => cmp_bool(&l, &r, |o| o == Ordering::Less),
                    BinOp::Le => cmp_bool(&l, &r, |o| o != Ordering::Greater),
                    BinOp::Gt => cmp_bool(&l, &r, |o| o == Ordering::Greater),
                    BinOp::Ge => cmp_bool(&l, &r, |o| o != Ordering::Less),
                    BinOp::Add => arith(&l, &r, i64::checked_add, |a, b| a + b).unwrap_or(V::Null),
                    BinOp::Sub => arith(&l, &r, i64::checked_sub, |a, b| a - b).unwrap_or(V::Null),
                    BinOp::Mul => arith(&l, &r, i64::checked_mul, |a, b| a * b).unwrap_or(V::Null),
                    BinOp::Div => match (&l, &r) {
                        (V::Int64(_), V::Int64(0)) => V::Null,
                        _ => arith(&l, &r, i64::checked_div, |a, b| a / b).unwrap_or(V::Null),
                    },
                    BinOp::Mod => match (&l, &r) {
                        (V::Int64(a), V::Int64(b)) if *b != 0 => V::Int64(a % b),
                        _ => V::Null,
                    },
                    BinOp::StartsWith => match (&l, &r) {
                        (V::Str(a), V::Str(b)) => V::Bool(a.starts_with(b.as_str())),
                        _ => V::Null,
                    },
                    BinOp::Contains => match (&l, &r) {
                        (V::Str(a), V::Str(b)) => V::Bool(a.contains(b.as_str())),
                        _ => V::Null,
                    },
                    BinOp::And | BinOp::Or => unreachable!(),
                }
            }
        }
    }

    /// Filter semantics: Null and non-bool results reject the row.
    pub fn eval_bool(&self, ctx: &dyn EvalContext) -> bool {
        self.eval(ctx).as_bool().unwrap_or(false)
    }

    /// Splits a conjunctive filter into its AND'ed conjuncts.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        match self {
            Expr::Binary { op: BinOp::And, lhs, rhs } => {
                let mut out = lhs.conjuncts();
                out.extend(rhs.conjuncts());
                out
            }
            other => vec![other],
        }
    }

    /// Walks the tree collecting every property reference.
    pub fn prop_refs(&self, out: &mut Vec<(String, String)>) {
        match self {
            Expr::Prop { owner, name } => out.push((owner.clone(), name.clone())),
            Expr::Unary { expr, .. } => expr.prop_refs(out),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.prop_refs(out);
                rhs.prop_refs(out);
            }
            _ => {}
        }
    }

    /// True if the expression only touches edge-level bindings (edge
    /// accessors and properties of the named edge types), so it can be
    /// pushed into a GetNeighbors scan.
    pub fn edge_local(&self, edge_type_names: &[String]) -> bool {
        match self {
            Expr::Literal(_) => true,
            Expr::InputCol(_) => false,
            Expr::Prop { owner, .. } => edge_type_names.iter().any(|n| n == owner),
            Expr::Edge(_) => true,
            Expr::VertexId => false,
            Expr::Unary { expr, .. } => expr.edge_local(edge_type_names),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.edge_local(edge_type_names) && rhs.edge_local(edge_type_names)
            }
        }
    }

    /// Result type when statically known; drives validation.
    pub fn infer_type(&self) -> Option<PropertyType> {
        match self {
            Expr::Literal(v) => v.type_of(),
            Expr::Unary { op: UnOp::Not, .. } => Some(PropertyType::Bool),
            Expr::Binary { op, .. } => match op {
                BinOp::Eq
                | BinOp::Ne
                | BinOp::Lt
                | BinOp::Le
                | BinOp::Gt
                | BinOp::Ge
                | BinOp::And
                | BinOp::Or
                | BinOp::StartsWith
                | BinOp::Contains => Some(PropertyType::Bool),
                _ => None,
            },
            _ => None,
        }
    }
}

fn compare(l: &PropertyValue, r: &PropertyValue) -> Option<Ordering> {
    use PropertyValue as V;
    match (l, r) {
        (V::Int64(a), V::Float64(b)) => (*a as f64).partial_cmp(b),
        (V::Float64(a), V::Int64(b)) => a.partial_cmp(&(*b as f64)),
        _ if std::mem::discriminant(l) == std::mem::discriminant(r) => Some(l.total_cmp(r)),
        _ => None,
    }
}

fn cmp_bool(
    l: &PropertyValue,
    r: &PropertyValue,
    pred: impl Fn(Ordering) -> bool,
) -> PropertyValue {
    match compare(l, r) {
        Some(o) => PropertyValue::Bool(pred(o)),
        None => PropertyValue::Null,
    }
}

fn arith(
    l: &PropertyValue,
    r: &PropertyValue,
    int_op: impl Fn(i64, i64) -> Option<i64>,
    float_op: impl Fn(f64, f64) -> f64,
) -> Option<PropertyValue> {
    use PropertyValue as V;
    match (l, r) {
        (V::Int64(a), V::Int64(b)) => int_op(*a, *b).map(V::Int64),
        (V::Float64(a), V::Float64(b)) => Some(V::Float64(float_op(*a, *b))),
        (V::Int64(a), V::Float64(b)) => Some(V::Float64(float_op(*a as f64, *b))),
        (V::Float64(a), V::Int64(b)) => Some(V::Float64(float_op(*a, *b as f64))),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PropertyValue as V;

    fn lit(v: PropertyValue) -> Expr {
        Expr::Literal(v)
    }

    fn bin(op: BinOp, l: Expr, r: Expr) -> Expr {
        Expr::Binary { op, lhs: Box::new(l), rhs: Box::new(r) }
    }

    #[test]
    fn one_plus_one() {
        let e = bin(BinOp::Add, lit(V::Int64(1)), lit(V::Int64(1)));
        assert_eq!(e.eval(&EmptyContext), V::Int64(2));
    }

    #[test]
    fn null_rejects_in_filters() {
        let e = bin(BinOp::Lt, Expr::InputCol("missing".into()), lit(V::Int64(3)));
        assert!(!e.eval_bool(&EmptyContext));
    }

    #[test]
    fn conjunct_splitting() {
        let e = bin(
            BinOp::And,
            bin(BinOp::Eq, lit(V::Int64(1)), lit(V::Int64(1))),
            bin(
                BinOp::And,
                lit(V::Bool(true)),
                bin(BinOp::Gt, lit(V::Int64(2)), lit(V::Int64(1))),
            ),
        );
        assert_eq!(e.conjuncts().len(), 3);
    }

    #[test]
    fn division_by_zero_is_null() {
        let e = bin(BinOp::Div, lit(V::Int64(4)), lit(V::Int64(0)));
        assert!(e.eval(&EmptyContext).is_null());
    }

    #[test]
    fn display_is_stable() {
        let e = bin(
            BinOp::And,
            bin(
                BinOp::Ge,
                Expr::Prop { owner: "likes".into(), name: "weight".into() },
                lit(V::Int64(3)),
            ),
            Expr::Edge(EdgeAccessor::Dst),
        );
        assert_eq!(format!("{}", e), "((likes.weight >= 3) AND DST(EDGE))");
    }
}
