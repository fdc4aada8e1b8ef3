//! Rules over the dependency graph and formula text.

use std::collections::BTreeSet;

use super::{AuditContext, Emitter, Location, Suggestion};
use crate::formula::{Expr, UnaryOp};
use crate::graph::{is_backward, DependencyGraph, NodeKind};
use crate::model::CellAddress;

fn formula_nodes<'a>(
    ctx: &'a AuditContext<'_>,
) -> impl Iterator<Item = (&'a CellAddress, &'a Expr)> {
    ctx.graph
        .nodes()
        .filter_map(|n| n.formula.as_ref().map(|f| (&n.addr, f)))
}

fn same_sheet(a: &CellAddress, b: &CellAddress) -> bool {
    a.sheet.eq_ignore_ascii_case(&b.sheet)
}

pub(super) fn backward_reference(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    let exempt = ctx.config.r01_exempt_cells();
    let is_exempt = |a: &CellAddress| {
        exempt.iter().any(|e| {
            e.coord() == a.coord() && (e.sheet.is_empty() || e.sheet.eq_ignore_ascii_case(&a.sheet))
        })
    };
    for (addr, _) in formula_nodes(ctx) {
        if is_exempt(addr) {
            continue;
        }
        let refs = ctx.graph.references(addr);
        let offending: Vec<&str> = refs
            .iter()
            .filter(|r| r.cells.iter().any(|c| is_backward(c, addr)))
            .map(|r| r.text.as_str())
            .collect();
        if offending.is_empty() {
            continue;
        }
        let mut seen = BTreeSet::new();
        let listed: Vec<&str> = offending.into_iter().filter(|t| seen.insert(*t)).collect();
        let related: Vec<CellAddress> = ctx
            .graph
            .precedents(addr)
            .into_iter()
            .filter(|p| is_backward(p, addr))
            .cloned()
            .collect();
        let d = out.emit(
            Location::Cell(addr.clone()),
            format!(
                "backward reference: depends on {} later in reading order",
                listed.join(", ")
            ),
        );
        d.related = related;
        d.suggestion = Some(Suggestion::Hint {
            text: "move this formula below and to the right of its precedents".into(),
        });
    }
}

pub(super) fn long_arc(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    let limit = ctx.config.long_arc_distance;
    for (addr, _) in formula_nodes(ctx) {
        for r in ctx.graph.references(addr) {
            let longest = r
                .cells
                .iter()
                .filter_map(|c| DependencyGraph::arc_length(c, addr).map(|d| (d, c)))
                .max_by_key(|(d, _)| *d);
            if let Some((len, far)) = longest {
                if len > limit {
                    let d = out.emit(
                        Location::Cell(addr.clone()),
                        format!("long arc: {} is {len} cells away (limit {limit})", r.text),
                    );
                    d.related = vec![far.clone()];
                }
            }
        }
    }
}

pub(super) fn cross_sheet(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for (addr, _) in formula_nodes(ctx) {
        let refs = ctx.graph.references(addr);
        let foreign: Vec<&str> = refs
            .iter()
            .filter(|r| r.cells.iter().any(|c| !same_sheet(c, addr)))
            .map(|r| r.text.as_str())
            .collect();
        if foreign.is_empty() {
            continue;
        }
        let related: Vec<CellAddress> = ctx
            .graph
            .precedents(addr)
            .into_iter()
            .filter(|p| !same_sheet(p, addr))
            .cloned()
            .collect();
        let d = out.emit(
            Location::Cell(addr.clone()),
            format!("cross-sheet reference: {}", foreign.join(", ")),
        );
        d.related = related;
    }
}

pub(super) fn spurious(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for addr in ctx.classes.cells_where(|c| c.spurious) {
        let target = ctx.graph.references(addr)[0].cells[0].clone();
        let d = out.emit(
            Location::Cell(addr.clone()),
            format!("spurious cell: bare reference to {}", target.print_a1()),
        );
        d.related = vec![target];
    }
}

/// `IF` whose result branches are text: a cell restating another in words.
fn interprets_other_cell(ast: &Expr) -> bool {
    match ast.unparen() {
        Expr::Call { name, args } if name == "IF" && args.len() >= 2 => {
            args[1..].iter().any(Expr::returns_text)
        }
        _ => false,
    }
}

pub(super) fn dangling(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for node in ctx.graph.nodes() {
        let c = ctx.classes.get(&node.addr);
        if c.dangling {
            let interpreted = node.formula.as_ref().is_some_and(interprets_other_cell);
            let (subcode, message) = if interpreted {
                (
                    "interpreted-output",
                    "dangling cell: restates another cell in words and nothing uses it",
                )
            } else {
                (
                    "intermediate",
                    "dangling cell: numeric result that no formula uses",
                )
            };
            out.emit(Location::Cell(node.addr.clone()), message).subcode = Some(subcode);
        } else if c.unused_input {
            let d = out.emit(
                Location::Cell(node.addr.clone()),
                "dangling cell: input that no output depends on",
            );
            d.subcode = Some("unused-input");
            d.related = ctx
                .graph
                .dependents(&node.addr)
                .into_iter()
                .cloned()
                .collect();
        }
    }
}

pub(super) fn perverse(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for (addr, _) in formula_nodes(ctx) {
        let blanks: Vec<CellAddress> = ctx
            .graph
            .precedents(addr)
            .into_iter()
            .filter(|p| {
                ctx.graph.node(p).is_some_and(|n| n.blank)
                    && ctx.graph.arc(p, addr).is_some_and(|a| a.direct)
            })
            .cloned()
            .collect();
        if !blanks.is_empty() {
            let names: Vec<String> = blanks.iter().map(CellAddress::print_a1).collect();
            let d = out.emit(
                Location::Cell(addr.clone()),
                format!("refers to blank cell {}", names.join(", ")),
            );
            d.subcode = Some("blank-target");
            d.related = blanks;
        }
    }
    for (addr, r) in ctx.graph.unresolved() {
        let why = r
            .unresolved
            .as_ref()
            .map(ToString::to_string)
            .unwrap_or_default();
        out.emit(
            Location::Cell(addr.clone()),
            format!("unresolved reference: {why}"),
        )
        .subcode = Some("unresolved");
    }
}

fn literals(ast: &Expr, out: &mut Vec<(f64, String)>) {
    match ast {
        Expr::Number(n) => out.push((n.value, n.text.clone())),
        Expr::Unary {
            op: UnaryOp::Percent,
            operand,
        } => {
            if let Expr::Number(n) = operand.unparen() {
                out.push((n.value / 100.0, format!("{}%", n.text)));
            } else {
                literals(operand, out);
            }
        }
        Expr::Unary {
            op: UnaryOp::Neg,
            operand,
        } => {
            if let Expr::Number(n) = operand.unparen() {
                out.push((-n.value, format!("-{}", n.text)));
            } else {
                literals(operand, out);
            }
        }
        Expr::Unary { operand, .. } => literals(operand, out),
        Expr::Paren { inner, .. } => literals(inner, out),
        Expr::Binary { lhs, rhs, .. } => {
            literals(lhs, out);
            literals(rhs, out);
        }
        Expr::Call { args, .. } => args.iter().for_each(|a| literals(a, out)),
        _ => {}
    }
}

pub(super) fn constant_in_formula(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for (addr, ast) in formula_nodes(ctx) {
        if ctx.graph.references(addr).is_empty() {
            continue;
        }
        let mut found = Vec::new();
        literals(ast, &mut found);
        for (value, text) in found {
            if !ctx.config.is_allowed_constant(value) {
                let d = out.emit(
                    Location::Cell(addr.clone()),
                    format!("constant {text} in formula; put it in its own labelled cell"),
                );
                d.suggestion = Some(Suggestion::Hint {
                    text: format!("move {text} to an input cell and reference it"),
                });
            }
        }
    }
}

pub(super) fn circular(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for cycle in crate::graph::find_cycles(ctx.graph) {
        let names: Vec<String> = cycle.iter().map(CellAddress::print_a1).collect();
        let d = out.emit(
            Location::Cell(cycle[0].clone()),
            format!("circular reference among {}", names.join(", ")),
        );
        d.related = cycle[1..].to_vec();
    }
}

pub(super) fn inline_candidate(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for n in ctx.nests {
        let original = ctx.graph.formula_text(&n.target).unwrap_or_default();
        let d = out.emit(
            Location::Cell(n.source.clone()),
            format!(
                "only dependent is {}; nesting gives {}",
                n.target.print_a1(),
                n.formula
            ),
        );
        d.related = vec![n.target.clone()];
        d.suggestion = Some(Suggestion::Rewrite(crate::simplify::RewriteSuggestion {
            cell: n.target.clone(),
            char_delta: original.chars().count() as i64 - n.formula.chars().count() as i64,
            original,
            suggested: n.formula.clone(),
            kinds: n.kinds.clone(),
            verified: true,
        }));
    }
}

pub(super) fn simplifiable(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for s in ctx.suggestions {
        let d = out.emit(
            Location::Cell(s.cell.clone()),
            format!("can be simplified to {}", s.suggested),
        );
        d.suggestion = Some(Suggestion::Rewrite(s.clone()));
    }
}

pub(super) fn formula_depth(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    let (mut total, mut to_formulas) = (0usize, 0usize);
    for (addr, _) in formula_nodes(ctx) {
        for r in ctx.graph.references(addr) {
            for c in &r.cells {
                total += 1;
                if ctx
                    .graph
                    .node(c)
                    .is_some_and(|n| n.kind == NodeKind::Formula)
                {
                    to_formulas += 1;
                }
            }
        }
    }
    if to_formulas > 0 {
        out.emit(
            Location::Workbook,
            format!(
                "{to_formulas} of {total} referenced cells hold formulas ({:.1}%)",
                100.0 * to_formulas as f64 / total as f64
            ),
        );
    }
}

pub(super) fn misordered(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for (addr, _) in formula_nodes(ctx) {
        let firsts: Vec<(u32, u32)> = ctx
            .graph
            .references(addr)
            .iter()
            .filter_map(|r| r.cells.first())
            .filter(|c| same_sheet(c, addr))
            .map(|c| (c.row, c.col))
            .collect();
        if firsts.windows(2).any(|w| w[1] < w[0]) {
            out.emit(
                Location::Cell(addr.clone()),
                "references are not listed in reading order",
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use crate::rules::hits;

    #[test]
    fn backward_reference() {
        let book = "[sheet S]\nA1 formula =A2+B1\nA2 num 1\nB1 num 2\nA3 formula =A1+A2\n";
        assert_eq!(hits(book, "R01"), ["S!A1"]);
    }

    #[test]
    fn long_arc() {
        let book = "[sheet S]\nA1 num 1\nA40 formula =A1*2\nA41 formula =A40*2\n";
        assert_eq!(hits(book, "R02"), ["S!A40"]);
    }

    #[test]
    fn cross_sheet() {
        let book = "[sheet In]\nA1 num 1\n[sheet Out]\nA1 formula =In!A1+1\nA2 formula =A1+1\n";
        assert_eq!(hits(book, "R03"), ["Out!A1"]);
    }

    #[test]
    fn spurious_and_dangling() {
        let book = "[sheet S]\nA1 num 1\nA2 formula =A1\nA3 formula =A2*4\nA4 formula =A3+A1\nB1 num 9\nB2 formula =B1*2\nC1 formula =A4\n";
        assert_eq!(hits(book, "R04"), ["S!C1", "S!A2"]);
        // C1 covers more than half the numeric cells and becomes the bottom
        // line; B2 feeds nothing.
        assert_eq!(hits(book, "R05"), ["S!B1", "S!B2"]);
    }

    #[test]
    fn perverse_blank_and_unresolved() {
        let book = "[sheet S]\nA1 num 1\nA2 formula =A1+A9\nA3 formula =SUM(A1:A8)+Nope!A1\n";
        assert_eq!(hits(book, "R06"), ["S!A2", "S!A3"]);
    }

    #[test]
    fn constants_in_formulas() {
        let book = "[sheet S]\nA1 num 1\nA2 formula =A1*1.07-1\nA3 formula =5*3\n";
        assert_eq!(hits(book, "R07"), ["S!A2"]);
    }

    #[test]
    fn circular() {
        let book = "[sheet S]\nA1 num 1\nB1 formula =A1+C1\nC1 formula =B1*2\nD1 formula =D1\n";
        assert_eq!(hits(book, "R09"), ["S!B1", "S!D1"]);
    }

    #[test]
    fn inline_and_simplify() {
        let book = "[sheet S]\nA1 num 1\nA2 num 2\nA3 formula =A1*A2\nA4 formula =A3+A1\nA5 formula =(A4)\n";
        assert_eq!(hits(book, "R19"), ["S!A3", "S!A4"]);
        assert!(hits(book, "R20").contains(&"S!A5".to_string()));
    }

    #[test]
    fn misordered_references() {
        let book = "[sheet S]\nA1 num 1\nA2 num 2\nA3 formula =A2+A1\nA4 formula =A1+A2\n";
        assert_eq!(hits(book, "R24"), ["S!A3"]);
    }

    #[test]
    fn formula_depth_summary() {
        assert_eq!(
            hits(
                "[sheet S]\nA1 num 1\nA2 formula =A1*2\nA3 formula =A2+A1\n",
                "R23"
            ),
            ["workbook"]
        );
        assert!(hits("[sheet S]\nA1 num 1\nA2 formula =A1*2\n", "R23").is_empty());
    }
}
