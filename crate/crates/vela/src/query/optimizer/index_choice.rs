//! Index selection for LOOKUP filters, in the fixed rule order:
//! (1) single-property comparison on a single-property index,
//! (2) single-property prefix comparison (STARTS WITH),
//! (3) multi-property composite-index comparison,
//! (4) full scan.
//! Ties inside a class break by longest equality prefix, then lowest
//! index id.

use crate::expr::{BinOp, Expr};
use crate::meta::IndexDef;
use crate::storage::reads::ScanSpec;
use crate::value::PropertyValue;

#[derive(Debug, Clone, PartialEq)]
pub struct IndexChoice {
    pub index: IndexDef,
    pub spec: ScanSpec,
    /// Conjuncts the scan does not fully cover; re-checked by a Filter.
    pub residual: Vec<Expr>,
    /// Which selection rule matched (1-3), for diagnostics and tests.
    pub rule_class: u8,
}

/// One normalized predicate over a target property.
#[derive(Debug, Clone, PartialEq)]
enum Pred {
    Eq(String, PropertyValue),
    Cmp(String, BinOp, PropertyValue),
    StartsWith(String, String),
}

fn normalize(conjunct: &Expr) -> Option<Pred> {
    let Expr::Binary { op, lhs, rhs } = conjunct else { return None };
    let (prop, value, op) = match (&**lhs, &**rhs) {
        (Expr::Prop { name, .. }, Expr::Literal(v)) => (name.clone(), v.clone(), *op),
        (Expr::Literal(v), Expr::Prop { name, .. }) => {
            // flip the comparison around the literal
            let flipped = match op {
                BinOp::Lt => BinOp::Gt,
                BinOp::Le => BinOp::Ge,
                BinOp::Gt => BinOp::Lt,
                BinOp::Ge => BinOp::Le,
                other => *other,
            };
            (name.clone(), v.clone(), flipped)
        }
        _ => return None,
    };
    if value.is_null() {
        return None;
    }
    match op {
        BinOp::Eq => Some(Pred::Eq(prop, value)),
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => Some(Pred::Cmp(prop, op, value)),
        BinOp::StartsWith => match value {
            PropertyValue::Str(s) => Some(Pred::StartsWith(prop, s)),
            _ => None,
        },
        _ => None,
    }
}

/// Lexicographic successor of a string prefix, if one exists in char
/// space (used as an exclusive upper bound for STARTS WITH scans).
fn prefix_successor(s: &str) -> Option<String> {
    let mut chars: Vec<char> = s.chars().collect();
    while let Some(&last) = chars.last() {
        if let Some(next) = char::from_u32(last as u32 + 1) {
            *chars.last_mut().unwrap() = next;
            return Some(chars.into_iter().collect());
        }
        chars.pop();
    }
    None
}

struct Candidate {
    choice: IndexChoice,
    eq_prefix: usize,
}

/// Examines one index against the conjunct set. Returns the scan spec
/// it supports plus which conjuncts it covers.
fn match_index(index: &IndexDef, preds: &[(usize, Pred)]) -> Option<Candidate> {
    let mut covered: Vec<usize> = Vec::new();
    let mut equals: Vec<PropertyValue> = Vec::new();
    // leading equality prefix
    for prop in &index.props {
        let hit = preds.iter().find(|(_, p)| matches!(p, Pred::Eq(n, _) if n == prop));
        match hit {
            Some((ci, Pred::Eq(_, v))) => {
                equals.push(v.clone());
                covered.push(*ci);
            }
            _ => break,
        }
    }
    let k = equals.len();
    // optional range or prefix on the first non-equal property
    let mut low: Option<(PropertyValue, bool)> = None;
    let mut high: Option<(PropertyValue, bool)> = None;
    let mut starts_with = false;
    if k < index.props.len() {
        let next_prop = &index.props[k];
        for (ci, p) in preds {
            match p {
                Pred::Cmp(n, op, v) if n == next_prop => {
                    match op {
                        BinOp::Gt | BinOp::Ge => {
                            if low.is_none() {
                                low = Some((v.clone(), *op == BinOp::Ge));
                                covered.push(*ci);
                            }
                        }
                        BinOp::Lt | BinOp::Le => {
                            if high.is_none() {
                                high = Some((v.clone(), *op == BinOp::Le));
                                covered.push(*ci);
                            }
                        }
                        _ => {}
                    }
                }
                Pred::StartsWith(n, s) if n == next_prop && low.is_none() && high.is_none() => {
                    low = Some((PropertyValue::Str(s.clone()), true));
                    high = prefix_successor(s).map(|t| (PropertyValue::Str(t), false));
                    starts_with = true;
                    // STARTS WITH stays in the residual: the byte range is
                    // conservative when the prefix has no successor
                }
                _ => {}
            }
        }
    }
    if k == 0 && low.is_none() && high.is_none() {
        return None;
    }
    let spec = if k == index.props.len() {
        ScanSpec::FullEquality(equals)
    } else if low.is_none() && high.is_none() {
        ScanSpec::PrefixEquality(equals)
    } else {
        ScanSpec::Range { equals, low, high }
    };
    let rule_class = if index.props.len() == 1 {
        if starts_with {
            2
        } else {
            1
        }
    } else {
        3
    };
    Some(Candidate {
        choice: IndexChoice { index: index.clone(), spec, residual: Vec::new(), rule_class },
        eq_prefix: k,
    })
}

/// Picks an index scan for a conjunctive filter, or None for full scan.
/// `conjuncts` are the AND'ed pieces of the WHERE clause; the returned
/// residual keeps every conjunct the scan does not exactly cover.
pub fn choose_index(conjuncts: &[Expr], indexes: &[&IndexDef]) -> Option<IndexChoice> {
    let preds: Vec<(usize, Pred)> = conjuncts
        .iter()
        .enumerate()
        .filter_map(|(i, c)| normalize(c).map(|p| (i, p)))
        .collect();
    if preds.is_empty() {
        return None;
    }
    let mut candidates: Vec<Candidate> = Vec::new();
    for index in indexes {
        if let Some(c) = match_index(index, &preds) {
            candidates.push(c);
        }
    }
    // rule class first, then longest equality prefix, then lowest id
    candidates.sort_by_key(|c| {
        (c.choice.rule_class, std::cmp::Reverse(c.eq_prefix), c.choice.index.index_id)
    });
    let mut best = candidates.into_iter().next()?;
    // residual: everything not exactly covered by the scan spec
    let covered = covered_set(&best.choice, conjuncts);
    best.choice.residual = conjuncts
        .iter()
        .enumerate()
        .filter(|(i, _)| !covered.contains(i))
        .map(|(_, c)| c.clone())
        .collect();
    Some(best.choice)
}

/// Conjunct indexes that the chosen spec covers exactly (equality and
/// plain range bounds; STARTS WITH is conservative so never covered).
fn covered_set(choice: &IndexChoice, conjuncts: &[Expr]) -> std::collections::BTreeSet<usize> {
    let mut covered = std::collections::BTreeSet::new();
    let (equals, low, high) = match &choice.spec {
        ScanSpec::FullEquality(eq) => (eq.clone(), None, None),
        ScanSpec::PrefixEquality(eq) => (eq.clone(), None, None),
        ScanSpec::Range { equals, low, high } => (equals.clone(), low.clone(), high.clone()),
    };
    for (i, c) in conjuncts.iter().enumerate() {
        let Some(p) = normalize(c) else { continue };
        match p {
            Pred::Eq(name, v) => {
                if let Some(pos) = choice.index.props.iter().position(|p| p == &name) {
                    if pos < equals.len() && equals[pos] == v {
                        covered.insert(i);
                    }
                }
            }
            Pred::Cmp(name, op, v) => {
                let is_next = choice.index.props.get(equals.len()) == Some(&name);
                if !is_next {
                    continue;
                }
                let matches_low = matches!((&low, op), (Some((lv, incl)), BinOp::Gt | BinOp::Ge)
                    if *lv == v && *incl == (op == BinOp::Ge));
                let matches_high = matches!((&high, op), (Some((hv, incl)), BinOp::Lt | BinOp::Le)
                    if *hv == v && *incl == (op == BinOp::Le));
                if matches_low || matches_high {
                    covered.insert(i);
                }
            }
            Pred::StartsWith(..) => {}
        }
    }
    covered
}
