//! Formula rewrites that keep the value and shorten or clarify the text,
//! plus single-dependent nesting.
//!
//! Every rewrite is checked by evaluating old and new formulas on random
//! inputs before it is offered.

use std::collections::{BTreeSet, HashMap};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::formula::{
    evaluate_in, parse_formula, print_formula, BinaryOp, CellRef, EvalError, Expr, RangeRef,
};
use crate::graph::{target_cells, DependencyGraph, GraphClassification};
use crate::model::{CellAddress, CellContent, Workbook};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RewriteKind {
    ParenRemoval,
    CommonFactor,
    RangeCollapse,
    DivisionLast,
    InlineNest,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RewriteSuggestion {
    pub cell: CellAddress,
    pub original: String,
    pub suggested: String,
    pub kinds: BTreeSet<RewriteKind>,
    pub verified: bool,
    /// Characters saved: original length minus suggested length.
    pub char_delta: i64,
}

pub const DEFAULT_TRIALS: usize = 100;
const TOLERANCE: f64 = 1e-9;
const SEED: u64 = 0x5EED_0FF0;

fn ratio_ok(a: f64, b: f64) -> bool {
    a == b || (a - b).abs() <= TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

fn referenced_cells(ast: &Expr, sheet: &str, out: &mut BTreeSet<CellAddress>) {
    for r in crate::formula::extract_references(ast) {
        out.extend(target_cells(&r.target, sheet));
    }
}

/// True when both formulas agree on `trials` random inputs. Inputs are
/// uniform in [-10, 10] with magnitudes below 1e-3 redrawn. Formulas the
/// evaluator cannot handle must be structurally identical instead.
pub fn verify_equivalence(original: &Expr, rewritten: &Expr, trials: usize, sheet: &str) -> bool {
    if original.structurally_eq(rewritten) {
        return true;
    }
    let mut cells = BTreeSet::new();
    referenced_cells(original, sheet, &mut cells);
    referenced_cells(rewritten, sheet, &mut cells);
    let mut rng = StdRng::seed_from_u64(SEED);
    let mut env: HashMap<CellAddress, f64> = HashMap::with_capacity(cells.len());
    for _ in 0..trials {
        env.clear();
        for c in &cells {
            let v = loop {
                let v: f64 = rng.random_range(-10.0..=10.0);
                if v.abs() >= 1e-3 {
                    break v;
                }
            };
            env.insert(c.clone(), v);
        }
        match (
            evaluate_in(original, sheet, &env),
            evaluate_in(rewritten, sheet, &env),
        ) {
            (Ok(a), Ok(b)) if ratio_ok(a, b) => {}
            (Err(EvalError::Domain(_)), Err(EvalError::Domain(_))) => {}
            _ => return false,
        }
    }
    true
}

type Pass = fn(&Expr) -> Option<Expr>;

const PASSES: [(RewriteKind, Pass); 4] = [
    (RewriteKind::DivisionLast, division_last),
    (RewriteKind::ParenRemoval, paren_removal),
    (RewriteKind::CommonFactor, common_factor),
    (RewriteKind::RangeCollapse, range_collapse),
];

/// Runs every pass until none fires. Returns the result and the passes
/// that changed something.
pub fn rewrite_to_fixpoint(ast: &Expr) -> (Expr, BTreeSet<RewriteKind>) {
    let mut cur = ast.clone();
    let mut kinds = BTreeSet::new();
    for _ in 0..32 {
        let mut changed = false;
        for (kind, pass) in PASSES {
            if let Some(next) = pass(&cur) {
                cur = next;
                kinds.insert(kind);
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    (cur, kinds)
}

/// Suggests a simpler equivalent of `ast`, the formula stored at `host`.
pub fn simplify(ast: &Expr, host: &CellAddress) -> Option<RewriteSuggestion> {
    let (rewritten, kinds) = rewrite_to_fixpoint(ast);
    if kinds.is_empty() {
        return None;
    }
    let original = print_formula(ast);
    let suggested = print_formula(&rewritten);
    if original == suggested || parse_formula(&suggested).is_err() {
        return None;
    }
    if !verify_equivalence(ast, &rewritten, DEFAULT_TRIALS, &host.sheet) {
        return None;
    }
    Some(RewriteSuggestion {
        cell: host.clone(),
        char_delta: original.chars().count() as i64 - suggested.chars().count() as i64,
        original,
        suggested,
        kinds,
        verified: true,
    })
}

fn open_parens(e: &Expr) -> usize {
    print_formula(e).matches('(').count()
}

/// Drops parentheses the printer would not need.
fn paren_removal(e: &Expr) -> Option<Expr> {
    let mut has_explicit = false;
    e.visit(&mut |n| has_explicit |= matches!(n, Expr::Paren { explicit: true, .. }));
    if !has_explicit {
        return None;
    }
    let stripped = e.strip_parens();
    // reparsing marks exactly the parentheses that precedence still needs
    let reparsed = parse_formula(&print_formula(&stripped)).ok()?;
    (open_parens(&reparsed) < open_parens(e)).then_some(reparsed)
}

fn chain_factors(e: &Expr, out: &mut Vec<(Expr, bool)>, divided: bool) {
    match e {
        Expr::Paren { inner, .. } if is_muldiv(inner) => chain_factors(inner, out, divided),
        Expr::Binary {
            op: op @ (BinaryOp::Mul | BinaryOp::Div),
            lhs,
            rhs,
        } if !divided => {
            chain_factors(lhs, out, false);
            if *op == BinaryOp::Mul {
                chain_factors(rhs, out, false);
            } else {
                out.push(((**rhs).clone(), true));
            }
        }
        other => out.push((other.clone(), divided)),
    }
}

fn is_muldiv(e: &Expr) -> bool {
    match e {
        Expr::Binary { op, .. } => matches!(op, BinaryOp::Mul | BinaryOp::Div),
        Expr::Paren { inner, .. } => is_muldiv(inner),
        _ => false,
    }
}

/// Applies `f` to the outermost nodes it accepts, recursing elsewhere.
fn top_down(e: &Expr, f: &dyn Fn(&Expr) -> Option<Expr>) -> Option<Expr> {
    if let Some(rewritten) = f(e) {
        return Some(rewritten);
    }
    let mut changed = false;
    let mut child = |c: &Expr| match top_down(c, f) {
        Some(n) => {
            changed = true;
            n
        }
        None => c.clone(),
    };
    let out = match e {
        Expr::Call { name, args } => Expr::Call {
            name: name.clone(),
            args: args.iter().map(&mut child).collect(),
        },
        Expr::Binary { op, lhs, rhs } => Expr::Binary {
            op: *op,
            lhs: Box::new(child(lhs)),
            rhs: Box::new(child(rhs)),
        },
        Expr::Unary { op, operand } => Expr::Unary {
            op: *op,
            operand: Box::new(child(operand)),
        },
        Expr::Paren { inner, explicit } => Expr::Paren {
            inner: Box::new(child(inner)),
            explicit: *explicit,
        },
        _ => return None,
    };
    changed.then_some(out)
}

fn product(factors: Vec<Expr>) -> Expr {
    let mut it = factors.into_iter();
    let first = it.next().expect("non-empty product");
    it.fold(first, |acc, f| Expr::binary(BinaryOp::Mul, acc, f))
}

/// Moves divisors behind all multipliers in a `*`/`/` chain.
fn division_last(e: &Expr) -> Option<Expr> {
    top_down(e, &|node| {
        if !matches!(
            node,
            Expr::Binary {
                op: BinaryOp::Mul | BinaryOp::Div,
                ..
            }
        ) {
            return None;
        }
        let mut factors = Vec::new();
        chain_factors(node, &mut factors, false);
        let first_div = factors.iter().position(|(_, d)| *d)?;
        if !factors[first_div..].iter().any(|(_, d)| !d) {
            return None;
        }
        let (divs, muls): (Vec<_>, Vec<_>) = factors.into_iter().partition(|(_, d)| *d);
        let mut out = product(muls.into_iter().map(|(f, _)| f).collect());
        for (d, _) in divs {
            out = Expr::binary(BinaryOp::Div, out, d);
        }
        Some(out)
    })
}

/// Terms of a `+`/`-` chain with their signs (true = subtracted).
fn sum_terms(e: &Expr, out: &mut Vec<(Expr, bool)>) {
    match e {
        Expr::Binary {
            op: op @ (BinaryOp::Add | BinaryOp::Sub),
            lhs,
            rhs,
        } => {
            sum_terms(lhs, out);
            out.push(((**rhs).clone(), *op == BinaryOp::Sub));
        }
        other => out.push((other.clone(), false)),
    }
}

fn rebuild_sum(terms: Vec<(Expr, bool)>) -> Expr {
    let mut it = terms.into_iter();
    let (first, _) = it.next().expect("non-empty sum");
    it.fold(first, |acc, (t, neg)| {
        Expr::binary(if neg { BinaryOp::Sub } else { BinaryOp::Add }, acc, t)
    })
}

fn mul_factors(e: &Expr) -> Option<Vec<Expr>> {
    match e.unparen() {
        Expr::Binary {
            op: BinaryOp::Mul,
            lhs,
            rhs,
        } => {
            let mut v = mul_factors(lhs)?;
            v.extend(mul_factors(rhs)?);
            Some(v)
        }
        Expr::Binary {
            op: BinaryOp::Div, ..
        } => None,
        other => Some(vec![other.strip_parens()]),
    }
}

/// `a*x + y*a + a*z` becomes `a*(x+y+z)`.
fn common_factor(e: &Expr) -> Option<Expr> {
    top_down(e, &|node| {
        if !matches!(
            node,
            Expr::Binary {
                op: BinaryOp::Add | BinaryOp::Sub,
                ..
            }
        ) {
            return None;
        }
        let mut terms = Vec::new();
        sum_terms(node, &mut terms);
        let factored: Vec<Vec<Expr>> = terms
            .iter()
            .map(|(t, _)| mul_factors(t).filter(|f| f.len() >= 2))
            .collect::<Option<_>>()?;
        let mut rests = factored.clone();
        let mut common = Vec::new();
        for f in &factored[0] {
            if rests.iter().all(|fs| fs.contains(f)) {
                for fs in &mut rests {
                    let at = fs.iter().position(|g| g == f).expect("common factor");
                    fs.remove(at);
                }
                common.push(f.clone());
            }
        }
        // a term consisting only of the common factor would need a literal 1
        if common.is_empty() || rests.iter().any(Vec::is_empty) {
            return None;
        }
        let inner: Vec<(Expr, bool)> = rests
            .into_iter()
            .zip(&terms)
            .map(|(fs, (_, neg))| (product(fs), *neg))
            .collect();
        Some(Expr::binary(
            BinaryOp::Mul,
            product(common),
            Expr::paren(rebuild_sum(inner)),
        ))
    })
}

fn same_sheet(a: &CellRef, b: &CellRef) -> bool {
    match (&a.sheet, &b.sheet) {
        (None, None) => true,
        (Some(x), Some(y)) => x.eq_ignore_ascii_case(y),
        _ => false,
    }
}

/// Cells forming one contiguous column or row segment, as a range.
fn contiguous_range(cells: &[CellRef]) -> Option<RangeRef> {
    let first = cells.first()?;
    if cells.iter().any(|c| !same_sheet(c, first)) {
        return None;
    }
    let vertical = cells.iter().all(|c| c.col == first.col);
    let horizontal = cells.iter().all(|c| c.row == first.row);
    let mut keys: Vec<u32> = match (vertical, horizontal) {
        (true, false) => cells.iter().map(|c| c.row).collect(),
        (false, true) => cells.iter().map(|c| c.col).collect(),
        _ => return None,
    };
    keys.sort_unstable();
    if keys.windows(2).any(|w| w[1] != w[0] + 1) {
        return None;
    }
    let lo = cells.iter().min_by_key(|c| (c.row, c.col))?.clone();
    let hi = cells.iter().max_by_key(|c| (c.row, c.col))?.clone();
    Some(RangeRef::normalized(lo, hi))
}

/// Directly stacked ranges merged into one, if `b` continues `a` below or
/// to the right.
fn stack(a: &RangeRef, b: &RangeRef) -> Option<(RangeRef, bool)> {
    if !same_sheet(&a.start, &b.start) {
        return None;
    }
    let merged = |end: &CellRef| RangeRef {
        start: a.start.clone(),
        end: end.clone(),
    };
    if a.start.col == b.start.col && a.end.col == b.end.col && b.start.row == a.end.row + 1 {
        return Some((merged(&b.end), true));
    }
    if a.start.row == b.start.row && a.end.row == b.end.row && b.start.col == a.end.col + 1 {
        return Some((merged(&b.end), false));
    }
    None
}

fn sumproduct_ranges(e: &Expr) -> Option<Vec<RangeRef>> {
    match e.unparen() {
        Expr::Call { name, args } if name == "SUMPRODUCT" && !args.is_empty() => args
            .iter()
            .map(|a| match a.unparen() {
                Expr::Range(r) => Some(r.clone()),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

/// Merges `SUMPRODUCT(X1,Y1)+SUMPRODUCT(X2,Y2)` when every X2/Y2 continues
/// X1/Y1 in the same direction.
fn merge_sumproducts(a: &[RangeRef], b: &[RangeRef]) -> Option<Vec<RangeRef>> {
    if a.len() != b.len() {
        return None;
    }
    let mut direction = None;
    let mut out = Vec::with_capacity(a.len());
    for (x, y) in a.iter().zip(b) {
        let (m, vertical) = stack(x, y)?;
        if *direction.get_or_insert(vertical) != vertical {
            return None;
        }
        out.push(m);
    }
    Some(out)
}

/// Parenthesized sums of three or more adjacent cells become `SUM(range)`;
/// stacked `SUMPRODUCT` terms are merged.
fn range_collapse(e: &Expr) -> Option<Expr> {
    top_down(e, &|node| match node {
        Expr::Paren {
            inner,
            explicit: true,
        } => {
            let mut terms = Vec::new();
            sum_terms(inner, &mut terms);
            if terms.len() < 3 || terms.iter().any(|(_, neg)| *neg) {
                return None;
            }
            let cells: Vec<CellRef> = terms
                .iter()
                .map(|(t, _)| match t.unparen() {
                    Expr::Ref(r) => Some(r.clone()),
                    _ => None,
                })
                .collect::<Option<_>>()?;
            let range = contiguous_range(&cells)?;
            (range.cell_count() == cells.len() as u64)
                .then(|| Expr::call("SUM", vec![Expr::Range(range)]))
        }
        Expr::Binary {
            op: BinaryOp::Add | BinaryOp::Sub,
            ..
        } => {
            let mut terms = Vec::new();
            sum_terms(node, &mut terms);
            let mut out: Vec<(Expr, bool)> = Vec::with_capacity(terms.len());
            let mut merged_any = false;
            for (t, neg) in terms {
                if let (Some((prev, false)), false) = (out.last(), neg) {
                    if let (Some(a), Some(b)) = (sumproduct_ranges(prev), sumproduct_ranges(&t)) {
                        if let Some(m) = merge_sumproducts(&a, &b) {
                            let call =
                                Expr::call("SUMPRODUCT", m.into_iter().map(Expr::Range).collect());
                            *out.last_mut().expect("previous term") = (call, false);
                            merged_any = true;
                            continue;
                        }
                    }
                }
                out.push((t, neg));
            }
            merged_any.then(|| rebuild_sum(out))
        }
        _ => None,
    })
}

/// Formula `source` folded into its only dependent `target`.
#[derive(Debug, Clone, PartialEq)]
pub struct NestCandidate {
    pub source: CellAddress,
    pub target: CellAddress,
    pub ast: Expr,
    pub formula: String,
    pub kinds: BTreeSet<RewriteKind>,
}

/// Sets `sheet` on every unqualified reference.
pub fn qualify(ast: &Expr, sheet: &str) -> Expr {
    ast.transform(&mut |e| match e {
        Expr::Ref(mut r) if r.sheet.is_none() => {
            r.sheet = Some(sheet.to_string());
            Expr::Ref(r)
        }
        Expr::Range(mut r) if r.start.sheet.is_none() => {
            r.start.sheet = Some(sheet.to_string());
            Expr::Range(r)
        }
        other => other,
    })
}

/// Replaces references to `source` inside `target_ast` with `source_ast`.
pub fn substitute(
    target_ast: &Expr,
    target_sheet: &str,
    source: &CellAddress,
    source_ast: &Expr,
) -> Expr {
    let inserted = if source.sheet.eq_ignore_ascii_case(target_sheet) {
        source_ast.clone()
    } else {
        qualify(source_ast, &source.sheet)
    };
    target_ast.transform(&mut |e| match e {
        Expr::Ref(r) => {
            let addr = r.resolve(target_sheet);
            if addr.sheet.eq_ignore_ascii_case(&source.sheet) && addr.coord() == source.coord() {
                Expr::Paren {
                    inner: Box::new(inserted.clone()),
                    explicit: false,
                }
            } else {
                Expr::Ref(r)
            }
        }
        other => other,
    })
}

/// Formula cells with exactly one dependent that can be folded into it
/// within `max_len` characters. Sources that are bottom lines, solver
/// constraints or on a cycle are skipped.
pub fn nest_candidates(
    graph: &DependencyGraph,
    classes: &GraphClassification,
    max_len: usize,
) -> Vec<NestCandidate> {
    let mut out = Vec::new();
    for node in graph.nodes() {
        let Some(source_ast) = &node.formula else {
            continue;
        };
        let c = classes.get(&node.addr);
        if c.bottom_line || c.solver_constraint || c.on_cycle {
            continue;
        }
        let deps = graph.dependents(&node.addr);
        let [target] = deps.as_slice() else { continue };
        let Some(info) = graph.arc(&node.addr, target) else {
            continue;
        };
        if info.via_range || !info.direct || classes.get(target).on_cycle {
            continue;
        }
        let Some(target_ast) = graph.node(target).and_then(|n| n.formula.as_ref()) else {
            continue;
        };
        let combined = substitute(target_ast, &target.sheet, &node.addr, source_ast);
        let (mut best, mut kinds) = (combined.clone(), BTreeSet::new());
        if let Some(s) = simplify(&combined, target) {
            if let Ok(ast) = parse_formula(&s.suggested) {
                best = ast;
                kinds = s.kinds;
            }
        }
        kinds.insert(RewriteKind::InlineNest);
        let formula = print_formula(&best);
        if formula.chars().count() > max_len {
            continue;
        }
        let Ok(ast) = parse_formula(&formula) else {
            continue;
        };
        out.push(NestCandidate {
            source: node.addr.clone(),
            target: (*target).clone(),
            ast,
            formula,
            kinds,
        });
    }
    out
}

/// Copy of `workbook` with `candidate.target` rewritten and the source
/// cell's content erased (formatting kept).
pub fn apply_nesting(workbook: &Workbook, candidate: &NestCandidate) -> Workbook {
    let mut out = workbook.clone();
    for sheet in &mut out.sheets {
        if sheet.name.eq_ignore_ascii_case(&candidate.target.sheet) {
            sheet.set_content(
                candidate.target.coord(),
                CellContent::Formula {
                    text: candidate.formula.clone(),
                    ast: Some(candidate.ast.clone()),
                },
            );
        }
    }
    for sheet in &mut out.sheets {
        if sheet.name.eq_ignore_ascii_case(&candidate.source.sheet) {
            sheet.set_content(candidate.source.coord(), CellContent::Empty);
            let coord = candidate.source.coord();
            if sheet
                .cells
                .get(&coord)
                .is_some_and(|c| c.format.is_default())
            {
                sheet.cells.remove(&coord);
            }
        }
    }
    out
}
