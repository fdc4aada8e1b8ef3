//! Generators and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::path::PathBuf;

use rand::rngs::StdRng;
use rand::Rng;
use sheetlint::formula::{
    extract_references, parse_formula, BinaryOp, CellRef, EvalError, Expr, RangeRef, UnaryOp,
};
use sheetlint::graph::{target_cells, AnchorOptions, ArcInfo, CellGraphClass};
use sheetlint::io::load;
use sheetlint::model::{
    col_to_letters, parse_a1, quote_sheet_name, CellAddress, CellContent, Coord, NameTarget, Sheet,
    Workbook,
};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

pub fn load_fixture(name: &str) -> Workbook {
    let path = fixture(name);
    load(&path, None).unwrap_or_else(|e| panic!("{e}"))
}

pub const FIXTURES: [&str; 9] = [
    "assign_v1.wb",
    "assign_v2.wb",
    "assign_v4.wb",
    "assign_final.wb",
    "clean.wb",
    "defect.wb",
    "pmt_friendly.wb",
    "pmt_unfriendly.wb",
    "relic.wb",
];

// ---------------------------------------------------------------- formulas

const SHEETS: [&str; 3] = ["Sheet1", "Data", "My Sheet"];

fn random_cell_ref(rng: &mut StdRng) -> CellRef {
    let mut r = CellRef::relative(rng.random_range(1..=12), rng.random_range(1..=6));
    r.row_abs = rng.random_bool(0.2);
    r.col_abs = rng.random_bool(0.2);
    if rng.random_bool(0.15) {
        r.sheet = Some(SHEETS[rng.random_range(1..SHEETS.len())].to_string());
    }
    r
}

fn random_literal(rng: &mut StdRng) -> Expr {
    match rng.random_range(0..4) {
        0 => Expr::num(rng.random_range(0..100) as f64),
        1 => Expr::num(rng.random_range(1..1000) as f64 / 8.0),
        2 => Expr::num([0.07, 0.5, 1.25, 12.0, 1e-3][rng.random_range(0..5)]),
        _ => Expr::num(rng.random_range(1..20) as f64),
    }
}

fn random_range(rng: &mut StdRng) -> Expr {
    let a = CellRef::relative(rng.random_range(1..=10), rng.random_range(1..=5));
    let b = CellRef::relative(rng.random_range(1..=10), rng.random_range(1..=5));
    Expr::Range(RangeRef::normalized(a, b))
}

/// Random formula over arithmetic, comparisons, unary operators and the
/// functions the evaluator understands.
pub fn random_expr(rng: &mut StdRng, depth: u32) -> Expr {
    if depth == 0 || rng.random_bool(0.25) {
        return if rng.random_bool(0.5) {
            random_literal(rng)
        } else {
            Expr::Ref(random_cell_ref(rng))
        };
    }
    match rng.random_range(0..10) {
        0..=4 => {
            let ops = [
                BinaryOp::Add,
                BinaryOp::Sub,
                BinaryOp::Mul,
                BinaryOp::Div,
                BinaryOp::Pow,
                BinaryOp::Add,
                BinaryOp::Mul,
                BinaryOp::Lt,
                BinaryOp::Ge,
                BinaryOp::Eq,
                BinaryOp::Ne,
            ];
            let op = ops[rng.random_range(0..ops.len())];
            Expr::binary(op, random_expr(rng, depth - 1), random_expr(rng, depth - 1))
        }
        5 => {
            let op = [UnaryOp::Neg, UnaryOp::Plus, UnaryOp::Percent][rng.random_range(0..3)];
            Expr::unary(op, random_expr(rng, depth - 1))
        }
        6 => Expr::paren(random_expr(rng, depth - 1)),
        7 => {
            let name = ["SUM", "MIN", "MAX"][rng.random_range(0..3)];
            let n = rng.random_range(1..=3);
            let args = (0..n)
                .map(|_| {
                    if rng.random_bool(0.4) {
                        random_range(rng)
                    } else {
                        random_expr(rng, depth - 1)
                    }
                })
                .collect();
            Expr::call(name, args)
        }
        8 => Expr::call("ABS", vec![random_expr(rng, depth - 1)]),
        _ => Expr::call(
            "IF",
            vec![
                random_expr(rng, depth - 1),
                random_expr(rng, depth - 1),
                random_expr(rng, depth - 1),
            ],
        ),
    }
}

/// Random values for every cell the formula reads, as seen from `sheet`.
pub fn env_for(ast: &Expr, sheet: &str, rng: &mut StdRng) -> HashMap<CellAddress, f64> {
    let mut env = HashMap::new();
    for r in extract_references(ast) {
        for a in target_cells(&r.target, sheet) {
            env.entry(a)
                .or_insert_with(|| rng.random_range(-10.0..10.0));
        }
    }
    env
}

/// Both results are the same number within `1e-9` relative, or both are
/// domain errors.
pub fn results_agree(a: &Result<f64, EvalError>, b: &Result<f64, EvalError>) -> bool {
    match (a, b) {
        (Ok(x), Ok(y)) => x == y || (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0),
        (Err(EvalError::Domain(_)), Err(EvalError::Domain(_))) => true,
        _ => false,
    }
}

// ---------------------------------------------------------------- workbooks

/// A workbook plus the arcs its formulas imply, computed while writing them.
pub struct GeneratedWorkbook {
    pub workbook: Workbook,
    pub arcs: BTreeMap<(CellAddress, CellAddress), ArcInfo>,
}

fn a1(rng: &mut StdRng, row: u32, col: u32) -> String {
    let c = if rng.random_bool(0.15) { "$" } else { "" };
    let r = if rng.random_bool(0.15) { "$" } else { "" };
    format!("{c}{}{r}{row}", col_to_letters(col))
}

fn set_formula(sheet: &mut Sheet, coord: Coord, text: String) {
    let ast = parse_formula(&text).unwrap_or_else(|e| panic!("generator wrote `{text}`: {e}"));
    sheet.set_content(
        coord,
        CellContent::Formula {
            text,
            ast: Some(ast),
        },
    );
}

fn random_constant(rng: &mut StdRng) -> CellContent {
    if rng.random_bool(0.75) {
        CellContent::Number(rng.random_range(1..100) as f64)
    } else {
        CellContent::Text(format!("label {}", rng.random_range(0..1000)))
    }
}

/// Up to two sheets of at most 10x10 cells with at most 30 formulas. Formulas
/// mix single references, ranges and cross-sheet references, so blanks,
/// self-references and cycles all occur.
pub fn random_workbook(rng: &mut StdRng) -> GeneratedWorkbook {
    let names: Vec<&str> = if rng.random_bool(0.5) {
        vec!["S1"]
    } else {
        vec!["S1", "Other Sheet"]
    };
    let dims: Vec<(u32, u32)> = names
        .iter()
        .map(|_| (rng.random_range(1..=10), rng.random_range(1..=10)))
        .collect();
    let mut sheets: Vec<Sheet> = names.iter().map(|n| Sheet::new(*n)).collect();
    for (s, &(rows, cols)) in sheets.iter_mut().zip(&dims) {
        for row in 1..=rows {
            for col in 1..=cols {
                if rng.random_bool(0.35) {
                    s.set_content(Coord::new(row, col), random_constant(rng));
                }
            }
        }
    }

    let mut arcs: BTreeMap<(CellAddress, CellAddress), ArcInfo> = BTreeMap::new();
    let n_formulas = rng.random_range(0..=30);
    let mut placed: BTreeSet<(usize, Coord)> = BTreeSet::new();
    for _ in 0..n_formulas {
        let si = rng.random_range(0..names.len());
        let (rows, cols) = dims[si];
        let host = Coord::new(rng.random_range(1..=rows), rng.random_range(1..=cols));
        if !placed.insert((si, host)) {
            continue;
        }
        let host_addr = CellAddress::at(names[si], host);
        let terms = rng.random_range(1..=4);
        let mut parts = Vec::new();
        for _ in 0..terms {
            let ti = rng.random_range(0..names.len());
            let (trows, tcols) = dims[ti];
            let prefix = if ti != si || rng.random_bool(0.1) {
                format!("{}!", quote_sheet_name(names[ti]))
            } else {
                String::new()
            };
            match rng.random_range(0..10) {
                0..=5 => {
                    let (r, c) = (rng.random_range(1..=trows), rng.random_range(1..=tcols));
                    parts.push(format!("{prefix}{}", a1(rng, r, c)));
                    let key = (CellAddress::new(names[ti], r, c), host_addr.clone());
                    arcs.entry(key).or_default().direct = true;
                }
                6..=8 => {
                    let (r1, r2) = (rng.random_range(1..=trows), rng.random_range(1..=trows));
                    let (c1, c2) = (rng.random_range(1..=tcols), rng.random_range(1..=tcols));
                    parts.push(format!(
                        "SUM({prefix}{}:{})",
                        a1(rng, r1, c1),
                        a1(rng, r2, c2)
                    ));
                    for r in r1.min(r2)..=r1.max(r2) {
                        for c in c1.min(c2)..=c1.max(c2) {
                            let key = (CellAddress::new(names[ti], r, c), host_addr.clone());
                            arcs.entry(key).or_default().via_range = true;
                        }
                    }
                }
                _ => parts.push(rng.random_range(1..50).to_string()),
            }
        }
        let op = if rng.random_bool(0.7) { "+" } else { "*" };
        set_formula(&mut sheets[si], host, format!("={}", parts.join(op)));
    }

    GeneratedWorkbook {
        workbook: Workbook {
            sheets,
            ..Workbook::default()
        },
        arcs,
    }
}

/// A single-sheet workbook where every formula reads only cells strictly
/// earlier in reading order.
pub fn row_major_workbook(rng: &mut StdRng) -> Workbook {
    let rows = rng.random_range(2..=12);
    let cols = rng.random_range(1..=8);
    let mut sheet = Sheet::new("Model");
    let mut filled: Vec<Coord> = Vec::new();
    for row in 1..=rows {
        for col in 1..=cols {
            let coord = Coord::new(row, col);
            let roll = rng.random_range(0..10);
            if roll < 3 {
                continue;
            }
            if roll < 6 || filled.is_empty() {
                sheet.set_content(coord, random_constant(rng));
            } else {
                let n = rng.random_range(1..=3);
                let mut parts = Vec::new();
                for _ in 0..n {
                    let earlier = filled[rng.random_range(0..filled.len())];
                    if rng.random_bool(0.3) {
                        // A range whose every cell precedes `coord`: it stays
                        // within rows above the current one.
                        if earlier.row < row {
                            let top = rng.random_range(1..=earlier.row);
                            parts.push(format!(
                                "SUM({}:{})",
                                a1(rng, top, earlier.col),
                                a1(rng, earlier.row, earlier.col)
                            ));
                            continue;
                        }
                    }
                    parts.push(a1(rng, earlier.row, earlier.col));
                }
                set_formula(&mut sheet, coord, format!("={}", parts.join("+")));
            }
            filled.push(coord);
        }
    }
    Workbook {
        sheets: vec![sheet],
        ..Workbook::default()
    }
}

// ---------------------------------------------------------------- oracle

/// Precedent sets rebuilt from each formula's own text, without the graph.
struct Scan {
    /// Every cell that is populated or referenced, in a stable order.
    cells: BTreeSet<CellAddress>,
    /// `(precedent, dependent) -> direct?` with `via_range` folded in.
    arcs: BTreeMap<(CellAddress, CellAddress), ArcInfo>,
    /// Per formula: resolved (cells, via_range) per reference occurrence.
    occurrences: BTreeMap<CellAddress, Vec<(Vec<CellAddress>, bool)>>,
}

fn canonical(wb: &Workbook, addr: CellAddress) -> Option<CellAddress> {
    let sheet = wb.canonical_sheet_name(&addr.sheet)?.to_string();
    Some(CellAddress { sheet, ..addr })
}

fn scan(wb: &Workbook) -> Scan {
    let mut cells = BTreeSet::new();
    let mut arcs: BTreeMap<(CellAddress, CellAddress), ArcInfo> = BTreeMap::new();
    let mut occurrences = BTreeMap::new();
    for sheet in &wb.sheets {
        for (coord, cell) in &sheet.cells {
            if cell.content.is_empty() {
                continue;
            }
            let host = CellAddress::at(sheet.name.clone(), *coord);
            cells.insert(host.clone());
            let Some(ast) = cell.content.formula_ast() else {
                continue;
            };
            let mut occ: Vec<(Vec<CellAddress>, bool)> = Vec::new();
            let mut visit = |e: &Expr| match e {
                Expr::Ref(r) => occ.push((
                    canonical(wb, r.resolve(&sheet.name)).into_iter().collect(),
                    false,
                )),
                Expr::Range(r) => {
                    let start = r.start.resolve(&sheet.name);
                    let within = r.cell_count() <= sheetlint::graph::MAX_RANGE_CELLS;
                    let listed = match wb.canonical_sheet_name(&start.sheet) {
                        Some(s) if within => r.cells().map(|c| CellAddress::at(s, c)).collect(),
                        _ => Vec::new(),
                    };
                    occ.push((listed, true));
                }
                Expr::Name(n) => match wb.name(n) {
                    Some(NameTarget::Cell(a)) => {
                        occ.push((canonical(wb, a.clone()).into_iter().collect(), false))
                    }
                    Some(NameTarget::Range(a, b)) => {
                        let mut v = Vec::new();
                        for row in a.row.min(b.row)..=a.row.max(b.row) {
                            for col in a.col.min(b.col)..=a.col.max(b.col) {
                                v.extend(canonical(
                                    wb,
                                    CellAddress::new(a.sheet.clone(), row, col),
                                ));
                            }
                        }
                        occ.push((v, true));
                    }
                    None => occ.push((Vec::new(), false)),
                },
                _ => {}
            };
            ast.visit(&mut visit);
            for (targets, via_range) in &occ {
                for t in targets {
                    cells.insert(t.clone());
                    let info = arcs.entry((t.clone(), host.clone())).or_default();
                    if *via_range {
                        info.via_range = true;
                    } else {
                        info.direct = true;
                    }
                }
            }
            occurrences.insert(host, occ);
        }
    }
    Scan {
        cells,
        arcs,
        occurrences,
    }
}

fn reachable(
    from: &CellAddress,
    next: &BTreeMap<CellAddress, Vec<CellAddress>>,
) -> BTreeSet<CellAddress> {
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<&CellAddress> = next.get(from).into_iter().flatten().collect();
    while let Some(a) = queue.pop_front() {
        if seen.insert(a.clone()) {
            queue.extend(next.get(a).into_iter().flatten());
        }
    }
    seen
}

/// Classification recomputed by a direct scan of every formula and plain
/// breadth-first searches. Quadratic, for small workbooks only.
pub fn brute_force_classes(
    wb: &Workbook,
    options: &AnchorOptions,
) -> BTreeMap<CellAddress, CellGraphClass> {
    let Scan {
        cells,
        arcs,
        occurrences,
    } = scan(wb);
    let mut deps: BTreeMap<CellAddress, Vec<CellAddress>> = BTreeMap::new();
    let mut precs: BTreeMap<CellAddress, Vec<CellAddress>> = BTreeMap::new();
    for (p, d) in arcs.keys() {
        deps.entry(p.clone()).or_default().push(d.clone());
        precs.entry(d.clone()).or_default().push(p.clone());
    }
    let content = |a: &CellAddress| wb.content(a).clone();
    let is_formula = |a: &CellAddress| content(a).is_formula();
    let is_number = |a: &CellAddress| matches!(content(a), CellContent::Number(_));
    let has_deps = |a: &CellAddress| deps.get(a).is_some_and(|v| !v.is_empty());

    let mut out: BTreeMap<CellAddress, CellGraphClass> = cells
        .iter()
        .map(|a| (a.clone(), CellGraphClass::default()))
        .collect();

    for a in &cells {
        let c = out.get_mut(a).unwrap();
        if let Some(ast) = content(a).formula_ast() {
            c.solver_constraint = options
                .solver_functions
                .iter()
                .any(|f| ast.calls_function(f));
            let bare = matches!(ast.unparen(), Expr::Ref(_) | Expr::Name(_));
            let occ = &occurrences[a];
            c.spurious =
                bare && occ.len() == 1 && !occ[0].1 && occ[0].0.len() == 1 && occ[0].0[0] != *a;
        }
        c.on_cycle = reachable(a, &deps).contains(a);
    }
    for ((p, _), info) in &arcs {
        if content(p).is_empty() && info.direct {
            out.get_mut(p).unwrap().perverse_target = true;
        }
    }

    let resolve = |entry: &str| -> Option<CellAddress> {
        if let Some(t) = wb.name(entry) {
            return match t {
                NameTarget::Cell(a) => canonical(wb, a.clone()),
                NameTarget::Range(..) => None,
            };
        }
        let a = parse_a1(entry).ok()?;
        let a = if a.sheet.is_empty() {
            CellAddress::new(wb.sheets.first()?.name.clone(), a.row, a.col)
        } else {
            canonical(wb, a)?
        };
        cells.contains(&a).then_some(a)
    };
    let mut bottom = BTreeSet::new();
    if !options.bottom_line.is_empty() {
        bottom.extend(options.bottom_line.iter().filter_map(|e| resolve(e)));
    } else {
        for n in ["WBMAX", "WBMIN"] {
            if wb.defined_names.contains_key(n) {
                bottom.extend(resolve(n).filter(|a| cells.contains(a)));
            }
        }
        if bottom.is_empty() {
            let numeric: BTreeSet<&CellAddress> = cells
                .iter()
                .filter(|a| is_formula(a) || (is_number(a) && has_deps(a)))
                .collect();
            for a in &cells {
                if !is_formula(a) || has_deps(a) || out[a].solver_constraint || numeric.is_empty() {
                    continue;
                }
                let mut closure = reachable(a, &precs);
                closure.insert(a.clone());
                let covered = closure.iter().filter(|x| numeric.contains(x)).count();
                if covered as f64 >= options.bottom_line_coverage * numeric.len() as f64 {
                    bottom.insert(a.clone());
                }
            }
        }
    }
    for a in &bottom {
        out.get_mut(a).unwrap().bottom_line = true;
    }
    for a in &cells {
        let c = out.get_mut(a).unwrap();
        c.dangling = is_formula(a) && !has_deps(a) && !c.bottom_line && !c.solver_constraint;
    }
    let anchors: Vec<CellAddress> = out
        .iter()
        .filter(|(_, c)| c.bottom_line || c.solver_constraint)
        .map(|(a, _)| a.clone())
        .collect();
    if !anchors.is_empty() {
        let mut live: BTreeSet<CellAddress> = anchors.iter().cloned().collect();
        for a in &anchors {
            live.extend(reachable(a, &precs));
        }
        for a in &cells {
            if is_number(a) && has_deps(a) && !live.contains(a) {
                out.get_mut(a).unwrap().unused_input = true;
            }
        }
    }
    out
}
