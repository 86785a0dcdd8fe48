//! Deterministic plan renderings for EXPLAIN and PROFILE. Identical
//! (statement, catalog, rule set) inputs produce byte-identical text.

use super::execute::NodeStats;
use super::plan::{Plan, PlanKind};
use std::collections::BTreeMap;
use std::fmt::Write;

fn details(kind: &PlanKind) -> String {
    match kind {
        PlanKind::Start { frontier } => {
            if frontier.is_empty() {
                String::new()
            } else {
                format!(
                    "vids=[{}]",
                    frontier
                        .iter()
                        .map(|v| format!("\"{}\"", v.display_string()))
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            }
        }
        PlanKind::GetNeighbors { directions, edges, props, pushed_filter, pushed_limit, .. } => {
            let mut d = format!(
                "over=[{}], dirs={:?}",
                edges.iter().map(|e| e.name.clone()).collect::<Vec<_>>().join(", "),
                directions
            );
            if !props.is_empty() {
                let _ = write!(
                    d,
                    ", props=[{}]",
                    props
                        .iter()
                        .map(|(o, p)| format!("{o}.{p}"))
                        .collect::<Vec<_>>()
                        .join(", ")
                );
            }
            if let Some(f) = pushed_filter {
                let _ = write!(d, ", pushed_filter={f}");
            }
            if let Some(l) = pushed_limit {
                let _ = write!(d, ", pushed_limit={l}");
            }
            d
        }
        PlanKind::GetVertexProps { tag, vids, .. } => {
            format!("tag={}, refs={}", tag.name, vids.len())
        }
        PlanKind::GetEdgeProps { edge, refs, .. } => {
            format!("edge={}, refs={}", edge.name, refs.len())
        }
        PlanKind::FullScan { target, .. } => format!("target={}", target.schema().name),
        PlanKind::IndexScan { index, spec, fetch_props, .. } => {
            let spec_text = match spec {
                crate::storage::reads::ScanSpec::FullEquality(v) => {
                    format!("equality({})", v.len())
                }
                crate::storage::reads::ScanSpec::PrefixEquality(v) if v.is_empty() => {
                    "full-range".to_string()
                }
                crate::storage::reads::ScanSpec::PrefixEquality(v) => {
                    format!("prefix({})", v.len())
                }
                crate::storage::reads::ScanSpec::Range { equals, .. } => {
                    format!("range(eq={})", equals.len())
                }
            };
            format!("index={}, spec={}, fetch_props={}", index.name, spec_text, fetch_props)
        }
        PlanKind::Filter { expr } => format!("condition={expr}"),
        PlanKind::Project { items } => format!(
            "items=[{}]",
            items.iter().map(|(e, n)| format!("{e} AS {n}")).collect::<Vec<_>>().join(", ")
        ),
        PlanKind::Dedup => String::new(),
        PlanKind::Sort { keys } => format!("keys={:?}", keys),
        PlanKind::Limit { count, offset } => format!("count={count}, offset={offset}"),
        PlanKind::TopN { keys, count, offset } => {
            format!("keys={keys:?}, count={count}, offset={offset}")
        }
        PlanKind::Aggregate { group_keys, items } => format!(
            "keys=[{}], items=[{}]",
            group_keys.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(", "),
            items
                .iter()
                .map(|i| i.name().to_string())
                .collect::<Vec<_>>()
                .join(", ")
        ),
        PlanKind::Loop { times, body_root } => format!("times={times}, body={body_root}"),
        PlanKind::DataCollect => String::new(),
        PlanKind::Command(c) => format!("{:?}", c.node_name()),
    }
}

/// Renders the plan as a fixed-width table, root first.
pub fn render(plan: &Plan, stats: Option<&BTreeMap<u32, NodeStats>>) -> String {
    let mut rows: Vec<[String; 4]> = Vec::new();
    for node in plan.nodes.iter().rev() {
        let dep = match node.kind {
            PlanKind::Loop { body_root, .. } => match node.input {
                Some(i) => format!("{i},body:{body_root}"),
                None => format!("body:{body_root}"),
            },
            _ => node.input.map(|i| i.to_string()).unwrap_or_else(|| "-".into()),
        };
        let mut detail = details(&node.kind);
        if let Some(stats) = stats {
            if let Some(s) = stats.get(&node.id) {
                let prefix = format!("rows={}, time_us={}", s.rows, s.micros);
                detail = if detail.is_empty() {
                    prefix
                } else {
                    format!("{prefix} | {detail}")
                };
            }
        }
        rows.push([node.id.to_string(), node.kind.name(), dep, detail]);
    }
    let headers = ["id", "name", "dependencies", "details"];
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in &rows {
        for (i, cell) in r.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let sep = |out: &mut String, widths: &[usize]| {
        for w in widths {
            out.push('+');
            out.push_str(&"-".repeat(w + 2));
        }
        out.push_str("+\n");
    };
    sep(&mut out, &widths);
    out.push_str(&format!(
        "| {:1$} | {2:3$} | {4:5$} | {6:7$} |\n",
        headers[0], widths[0], headers[1], widths[1], headers[2], widths[2], headers[3], widths[3]
    ));
    sep(&mut out, &widths);
    for r in &rows {
        out.push_str(&format!(
            "| {:1$} | {2:3$} | {4:5$} | {6:7$} |\n",
            r[0], widths[0], r[1], widths[1], r[2], widths[2], r[3], widths[3]
        ));
    }
    sep(&mut out, &widths);
    out
}
