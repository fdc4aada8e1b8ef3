//! Cell dependency graph: arcs of precedence from each referenced cell to
//! the formula that reads it, plus the cell classifications built on top.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use thiserror::Error;

use crate::formula::{Expr, RangeRef, RefTarget};
use crate::model::{parse_a1, CellAddress, CellContent, Coord, NameTarget, Workbook};

/// Ranges larger than this are recorded as unresolved instead of expanded.
pub const MAX_RANGE_CELLS: u64 = 65_536;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Formula,
    Number,
    /// Text, boolean or error constant.
    Label,
    /// Referenced but empty.
    Blank,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub addr: CellAddress,
    pub kind: NodeKind,
    pub blank: bool,
    pub formula: Option<Expr>,
}

/// How a dependent reaches a precedent.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ArcInfo {
    /// Some occurrence is a range containing the precedent.
    pub via_range: bool,
    /// Some occurrence is a single-cell reference or single-cell name.
    pub direct: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Unresolved {
    MissingSheet(String),
    UnknownName(String),
    RangeTooLarge(String),
}

impl std::fmt::Display for Unresolved {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Unresolved::MissingSheet(s) => write!(f, "reference to missing sheet `{s}`"),
            Unresolved::UnknownName(n) => write!(f, "undefined name `{n}`"),
            Unresolved::RangeTooLarge(r) => {
                write!(
                    f,
                    "range {r} exceeds {MAX_RANGE_CELLS} cells and was not expanded"
                )
            }
        }
    }
}

/// One reference occurrence in a formula, after resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedRef {
    /// Position among the formula's references (names included).
    pub index: usize,
    /// Text as printed, e.g. `D3:D48` or `WBMAX`.
    pub text: String,
    pub cells: Vec<CellAddress>,
    pub via_range: bool,
    pub unresolved: Option<Unresolved>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("no such cell in graph: {0}")]
    NoSuchCell(CellAddress),
}

#[derive(Debug, Clone, Default)]
pub struct DependencyGraph {
    nodes: Vec<Node>,
    index: HashMap<CellAddress, usize>,
    sheets: Vec<String>,
    arcs: BTreeMap<(usize, usize), ArcInfo>,
    precedents: Vec<Vec<usize>>,
    dependents: Vec<Vec<usize>>,
    refs: BTreeMap<usize, Vec<ResolvedRef>>,
    names: BTreeMap<String, NameTarget>,
}

fn resolve_sheet(
    workbook: &Workbook,
    sheet: Option<&str>,
    host: &str,
) -> Result<String, Unresolved> {
    let name = sheet.unwrap_or(host);
    workbook
        .canonical_sheet_name(name)
        .map(str::to_string)
        .ok_or_else(|| Unresolved::MissingSheet(name.to_string()))
}

fn expand_range(sheet: String, range: &RangeRef) -> Result<Vec<CellAddress>, Unresolved> {
    if range.cell_count() > MAX_RANGE_CELLS {
        return Err(Unresolved::RangeTooLarge(range.to_string()));
    }
    Ok(range
        .cells()
        .map(|c| CellAddress::at(sheet.clone(), c))
        .collect())
}

fn resolve_occurrences(workbook: &Workbook, host: &str, ast: &Expr) -> Vec<ResolvedRef> {
    let mut out = Vec::new();
    ast.visit(&mut |e| {
        let (text, result, via_range) = match e {
            Expr::Ref(r) => (
                r.to_string(),
                resolve_sheet(workbook, r.sheet.as_deref(), host)
                    .map(|s| vec![CellAddress::at(s, r.coord())]),
                false,
            ),
            Expr::Range(rr) => (
                rr.to_string(),
                resolve_sheet(workbook, rr.start.sheet.as_deref(), host)
                    .and_then(|s| expand_range(s, rr)),
                true,
            ),
            Expr::Name(n) => {
                let result = match workbook.name(n) {
                    None => Err(Unresolved::UnknownName(n.clone())),
                    Some(NameTarget::Cell(a)) => resolve_sheet(workbook, Some(&a.sheet), host)
                        .map(|s| vec![CellAddress::at(s, a.coord())]),
                    Some(NameTarget::Range(a, b)) => {
                        let rr = RangeRef::normalized(
                            crate::formula::CellRef::relative(a.row, a.col),
                            crate::formula::CellRef::relative(b.row, b.col),
                        );
                        resolve_sheet(workbook, Some(&a.sheet), host)
                            .and_then(|s| expand_range(s, &rr))
                    }
                };
                let via_range = matches!(workbook.name(n), Some(NameTarget::Range(..)));
                (n.clone(), result, via_range)
            }
            _ => return,
        };
        let (cells, unresolved) = match result {
            Ok(cells) => (cells, None),
            Err(u) => (Vec::new(), Some(u)),
        };
        out.push(ResolvedRef {
            index: out.len(),
            text,
            cells,
            via_range,
            unresolved,
        });
    });
    out
}

/// Builds the graph. Ranges expand cell by cell; referenced empty cells
/// become `blank` nodes; references that cannot be resolved are kept on the
/// formula's reference list with an [`Unresolved`] marker.
pub fn build_graph(workbook: &Workbook) -> DependencyGraph {
    let mut collected: BTreeMap<(usize, Coord), Node> = BTreeMap::new();
    let mut occurrences: Vec<(CellAddress, Vec<ResolvedRef>)> = Vec::new();
    for (si, sheet) in workbook.sheets.iter().enumerate() {
        for (coord, cell) in sheet.populated() {
            let addr = CellAddress::at(sheet.name.clone(), coord);
            let (kind, formula) = match &cell.content {
                CellContent::Formula { ast, .. } => (NodeKind::Formula, ast.clone()),
                CellContent::Number(_) => (NodeKind::Number, None),
                _ => (NodeKind::Label, None),
            };
            if let Some(ast) = &formula {
                occurrences.push((
                    addr.clone(),
                    resolve_occurrences(workbook, &sheet.name, ast),
                ));
            }
            collected.insert(
                (si, coord),
                Node {
                    addr,
                    kind,
                    blank: false,
                    formula,
                },
            );
        }
    }
    for (_, refs) in &occurrences {
        for cell in refs.iter().flat_map(|r| &r.cells) {
            let si = workbook
                .sheet_index(&cell.sheet)
                .expect("resolved references name existing sheets");
            collected.entry((si, cell.coord())).or_insert_with(|| Node {
                addr: cell.clone(),
                kind: NodeKind::Blank,
                blank: true,
                formula: None,
            });
        }
    }

    let nodes: Vec<Node> = collected.into_values().collect();
    let index: HashMap<CellAddress, usize> = nodes
        .iter()
        .enumerate()
        .map(|(i, n)| (n.addr.clone(), i))
        .collect();
    let mut arcs: BTreeMap<(usize, usize), ArcInfo> = BTreeMap::new();
    let mut refs = BTreeMap::new();
    for (addr, list) in occurrences {
        let to = index[&addr];
        for r in &list {
            for cell in &r.cells {
                let info = arcs.entry((index[cell], to)).or_default();
                if r.via_range {
                    info.via_range = true;
                } else {
                    info.direct = true;
                }
            }
        }
        refs.insert(to, list);
    }
    let mut precedents = vec![Vec::new(); nodes.len()];
    let mut dependents = vec![Vec::new(); nodes.len()];
    for &(from, to) in arcs.keys() {
        precedents[to].push(from);
        dependents[from].push(to);
    }
    DependencyGraph {
        nodes,
        index,
        sheets: workbook.sheets.iter().map(|s| s.name.clone()).collect(),
        arcs,
        precedents,
        dependents,
        refs,
        names: workbook.defined_names.clone(),
    }
}

impl DependencyGraph {
    /// Nodes in reading order: sheet order, then row, then column.
    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn node(&self, addr: &CellAddress) -> Option<&Node> {
        self.index.get(addr).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, addr: &CellAddress) -> bool {
        self.index.contains_key(addr)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// `(precedent, dependent, info)` triples in reading order of the pair.
    pub fn arcs(&self) -> impl Iterator<Item = (&CellAddress, &CellAddress, ArcInfo)> {
        self.arcs
            .iter()
            .map(|(&(f, t), &info)| (&self.nodes[f].addr, &self.nodes[t].addr, info))
    }

    pub fn arc(&self, from: &CellAddress, to: &CellAddress) -> Option<ArcInfo> {
        let f = *self.index.get(from)?;
        let t = *self.index.get(to)?;
        self.arcs.get(&(f, t)).copied()
    }

    pub fn precedents(&self, addr: &CellAddress) -> Vec<&CellAddress> {
        self.neighbours(addr, &self.precedents)
    }

    pub fn dependents(&self, addr: &CellAddress) -> Vec<&CellAddress> {
        self.neighbours(addr, &self.dependents)
    }

    fn neighbours<'a>(
        &'a self,
        addr: &CellAddress,
        table: &'a [Vec<usize>],
    ) -> Vec<&'a CellAddress> {
        self.index
            .get(addr)
            .map(|&i| table[i].iter().map(|&j| &self.nodes[j].addr).collect())
            .unwrap_or_default()
    }

    pub fn dependent_count(&self, addr: &CellAddress) -> usize {
        self.index
            .get(addr)
            .map_or(0, |&i| self.dependents[i].len())
    }

    /// Resolved reference occurrences of a formula cell, in source order.
    pub fn references(&self, addr: &CellAddress) -> &[ResolvedRef] {
        self.index
            .get(addr)
            .and_then(|i| self.refs.get(i))
            .map_or(&[], Vec::as_slice)
    }

    /// Formula cells with at least one unresolved reference.
    pub fn unresolved(&self) -> Vec<(&CellAddress, &ResolvedRef)> {
        self.refs
            .iter()
            .flat_map(|(&i, list)| {
                list.iter()
                    .filter(|r| r.unresolved.is_some())
                    .map(move |r| (&self.nodes[i].addr, r))
            })
            .collect()
    }

    pub fn defined_names(&self) -> &BTreeMap<String, NameTarget> {
        &self.names
    }

    /// Position of a sheet in workbook order.
    pub fn sheet_index(&self, sheet: &str) -> Option<usize> {
        self.sheets
            .iter()
            .position(|s| s.eq_ignore_ascii_case(sheet))
    }

    /// Reading-order sort key.
    pub fn order_key(&self, addr: &CellAddress) -> (usize, u32, u32) {
        (
            self.sheet_index(&addr.sheet).unwrap_or(usize::MAX),
            addr.row,
            addr.col,
        )
    }

    /// Chebyshev length of an arc, `None` across sheets.
    pub fn arc_length(from: &CellAddress, to: &CellAddress) -> Option<u32> {
        from.sheet
            .eq_ignore_ascii_case(&to.sheet)
            .then(|| from.coord().distance(to.coord()))
    }

    /// Numeric formulas plus number constants with at least one dependent.
    pub fn numeric_cells(&self) -> impl Iterator<Item = &CellAddress> {
        self.nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.kind {
                NodeKind::Formula => Some(&n.addr),
                NodeKind::Number if !self.dependents[i].is_empty() => Some(&n.addr),
                _ => None,
            })
    }

    /// Root plus all transitive precedents.
    pub fn precedent_closure(&self, roots: &[&CellAddress]) -> BTreeSet<CellAddress> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack: Vec<usize> = roots
            .iter()
            .filter_map(|a| self.index.get(*a).copied())
            .collect();
        for &i in &stack {
            seen[i] = true;
        }
        while let Some(i) = stack.pop() {
            for &p in &self.precedents[i] {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(i, _)| self.nodes[i].addr.clone())
            .collect()
    }

    fn formula_of(&self, i: usize) -> Option<&Expr> {
        self.nodes[i].formula.as_ref()
    }
}

/// Options that decide which cells anchor the model.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorOptions {
    /// Addresses (`Model!C51`) or defined names. Empty means auto-detect.
    pub bottom_line: Vec<String>,
    /// Formulas calling any of these are solver constraints.
    pub solver_functions: Vec<String>,
    /// Minimum share of numeric cells a sink must cover to be a bottom line
    /// when none is configured.
    pub bottom_line_coverage: f64,
}

impl Default for AnchorOptions {
    fn default() -> Self {
        AnchorOptions {
            bottom_line: Vec::new(),
            solver_functions: vec!["WB".to_string()],
            bottom_line_coverage: 0.5,
        }
    }
}

/// Flags for one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CellGraphClass {
    pub spurious: bool,
    pub dangling: bool,
    pub perverse_target: bool,
    pub on_cycle: bool,
    pub bottom_line: bool,
    pub solver_constraint: bool,
    /// Number constant that no anchor depends on.
    pub unused_input: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GraphClassification {
    pub classes: BTreeMap<CellAddress, CellGraphClass>,
    pub bottom_line: Vec<CellAddress>,
    /// Configured bottom-line entries that matched nothing.
    pub unmatched_bottom_line: Vec<String>,
}

impl GraphClassification {
    pub fn get(&self, addr: &CellAddress) -> CellGraphClass {
        self.classes.get(addr).copied().unwrap_or_default()
    }

    pub fn cells_where(&self, pred: impl Fn(&CellGraphClass) -> bool) -> Vec<&CellAddress> {
        self.classes
            .iter()
            .filter(|(_, c)| pred(c))
            .map(|(a, _)| a)
            .collect()
    }
}

fn resolve_bottom_line_entry(graph: &DependencyGraph, entry: &str) -> Option<CellAddress> {
    if let Some(NameTarget::Cell(a)) = graph.names.get(&entry.trim().to_ascii_uppercase()) {
        return Some(a.clone()).filter(|a| graph.contains(a));
    }
    let parsed = parse_a1(entry.trim()).ok()?;
    let sheet = if parsed.sheet.is_empty() {
        graph.sheets.first()?.clone()
    } else {
        graph.sheets[graph.sheet_index(&parsed.sheet)?].clone()
    };
    let addr = CellAddress::new(sheet, parsed.row, parsed.col);
    graph.contains(&addr).then_some(addr)
}

pub fn classify_graph(graph: &DependencyGraph, options: &AnchorOptions) -> GraphClassification {
    let n = graph.nodes.len();
    let mut flags = vec![CellGraphClass::default(); n];

    for (i, node) in graph.nodes.iter().enumerate() {
        let Some(ast) = &node.formula else { continue };
        flags[i].solver_constraint = options
            .solver_functions
            .iter()
            .any(|f| ast.calls_function(f));
        let refs = graph.refs.get(&i).map_or(&[][..], Vec::as_slice);
        let bare = matches!(ast.unparen(), Expr::Ref(_) | Expr::Name(_));
        if bare
            && refs.len() == 1
            && !refs[0].via_range
            && refs[0].cells.len() == 1
            && refs[0].cells[0] != node.addr
        {
            flags[i].spurious = true;
        }
    }
    for (&(from, _), info) in &graph.arcs {
        if graph.nodes[from].blank && info.direct {
            flags[from].perverse_target = true;
        }
    }
    for scc in strongly_connected(graph) {
        for i in scc {
            flags[i].on_cycle = true;
        }
    }

    let mut unmatched = Vec::new();
    let mut bottom: BTreeSet<usize> = BTreeSet::new();
    if !options.bottom_line.is_empty() {
        for entry in &options.bottom_line {
            match resolve_bottom_line_entry(graph, entry) {
                Some(a) => {
                    bottom.insert(graph.index[&a]);
                }
                None => unmatched.push(entry.clone()),
            }
        }
    } else {
        for objective in ["WBMAX", "WBMIN"] {
            if let Some(a) = resolve_bottom_line_entry(graph, objective) {
                if graph.names.contains_key(objective) {
                    bottom.insert(graph.index[&a]);
                }
            }
        }
        if bottom.is_empty() {
            let numeric: BTreeSet<&CellAddress> = graph.numeric_cells().collect();
            if !numeric.is_empty() {
                for (i, node) in graph.nodes.iter().enumerate() {
                    if node.kind != NodeKind::Formula
                        || !graph.dependents[i].is_empty()
                        || flags[i].solver_constraint
                    {
                        continue;
                    }
                    let covered = graph
                        .precedent_closure(&[&node.addr])
                        .iter()
                        .filter(|a| numeric.contains(a))
                        .count();
                    if covered as f64 >= options.bottom_line_coverage * numeric.len() as f64 {
                        bottom.insert(i);
                    }
                }
            }
        }
    }
    for &i in &bottom {
        flags[i].bottom_line = true;
    }

    for (i, node) in graph.nodes.iter().enumerate() {
        if node.kind == NodeKind::Formula
            && graph.dependents[i].is_empty()
            && !flags[i].bottom_line
            && !flags[i].solver_constraint
        {
            flags[i].dangling = true;
        }
    }

    let anchors: Vec<&CellAddress> = (0..n)
        .filter(|&i| flags[i].bottom_line || flags[i].solver_constraint)
        .map(|i| &graph.nodes[i].addr)
        .collect();
    if !anchors.is_empty() {
        let live = graph.precedent_closure(&anchors);
        for (i, node) in graph.nodes.iter().enumerate() {
            if node.kind == NodeKind::Number
                && !graph.dependents[i].is_empty()
                && !live.contains(&node.addr)
            {
                flags[i].unused_input = true;
            }
        }
    }

    GraphClassification {
        classes: graph
            .nodes
            .iter()
            .zip(flags)
            .map(|(n, f)| (n.addr.clone(), f))
            .collect(),
        bottom_line: bottom
            .iter()
            .map(|&i| graph.nodes[i].addr.clone())
            .collect(),
        unmatched_bottom_line: unmatched,
    }
}

/// Tarjan's algorithm, iterative. Returns components that are cycles:
/// two or more nodes, or one node with a self-arc.
fn strongly_connected(graph: &DependencyGraph) -> Vec<Vec<usize>> {
    let n = graph.nodes.len();
    let mut index = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut next = 0;
    let mut out = Vec::new();
    for root in 0..n {
        if index[root] != usize::MAX {
            continue;
        }
        let mut work: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut child)) = work.last_mut() {
            if *child == 0 && index[v] == usize::MAX {
                index[v] = next;
                low[v] = next;
                next += 1;
                stack.push(v);
                on_stack[v] = true;
            }
            let succ = &graph.dependents[v];
            if *child < succ.len() {
                let w = succ[*child];
                *child += 1;
                if index[w] == usize::MAX {
                    work.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
                continue;
            }
            work.pop();
            if let Some(&(parent, _)) = work.last() {
                low[parent] = low[parent].min(low[v]);
            }
            if low[v] == index[v] {
                let mut comp = Vec::new();
                loop {
                    let w = stack.pop().expect("tarjan stack");
                    on_stack[w] = false;
                    comp.push(w);
                    if w == v {
                        break;
                    }
                }
                let cyclic = comp.len() > 1 || graph.arcs.contains_key(&(v, v));
                if cyclic {
                    comp.sort_unstable();
                    out.push(comp);
                }
            }
        }
    }
    out.sort();
    out
}

/// Every cycle, each listed once in reading order.
pub fn find_cycles(graph: &DependencyGraph) -> Vec<Vec<CellAddress>> {
    strongly_connected(graph)
        .into_iter()
        .map(|c| c.into_iter().map(|i| graph.nodes[i].addr.clone()).collect())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeNode {
    pub addr: CellAddress,
    /// Length of the arc from this node to its parent; `None` for the root
    /// and for cross-sheet arcs.
    pub arc_length: Option<u32>,
    /// Set when this node already appears on the path from the root.
    pub cycle: bool,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    pub fn addresses(&self) -> BTreeSet<CellAddress> {
        let mut out = BTreeSet::new();
        self.collect(&mut out);
        out
    }

    fn collect(&self, out: &mut BTreeSet<CellAddress>) {
        out.insert(self.addr.clone());
        self.children.iter().for_each(|c| c.collect(out));
    }

    pub fn leaves(&self) -> Vec<&TreeNode> {
        if self.children.is_empty() {
            return vec![self];
        }
        self.children.iter().flat_map(TreeNode::leaves).collect()
    }

    pub fn depth(&self) -> usize {
        1 + self.children.iter().map(TreeNode::depth).max().unwrap_or(0)
    }
}

/// Precedents of `root` as a tree, expanded to `depth` levels below the
/// root (`None` for all). Revisiting a cell on the current path yields a
/// leaf with `cycle` set.
pub fn precedence_tree(
    graph: &DependencyGraph,
    root: &CellAddress,
    depth: Option<usize>,
) -> Result<TreeNode, GraphError> {
    let &r = graph
        .index
        .get(root)
        .ok_or_else(|| GraphError::NoSuchCell(root.clone()))?;
    let mut path = Vec::new();
    Ok(grow(graph, r, None, depth, &mut path))
}

fn grow(
    graph: &DependencyGraph,
    i: usize,
    arc_length: Option<u32>,
    depth: Option<usize>,
    path: &mut Vec<usize>,
) -> TreeNode {
    let addr = graph.nodes[i].addr.clone();
    if path.contains(&i) {
        return TreeNode {
            addr,
            arc_length,
            cycle: true,
            children: Vec::new(),
        };
    }
    let mut children = Vec::new();
    if depth != Some(0) {
        path.push(i);
        for &p in &graph.precedents[i] {
            let len = DependencyGraph::arc_length(&graph.nodes[p].addr, &addr);
            children.push(grow(graph, p, len, depth.map(|d| d - 1), path));
        }
        path.pop();
    }
    TreeNode {
        addr,
        arc_length,
        cycle: false,
        children,
    }
}

/// True when the precedent does not come strictly before the dependent in
/// row-major reading order. Cross-sheet arcs are never backward.
pub fn is_backward(precedent: &CellAddress, dependent: &CellAddress) -> bool {
    precedent.sheet.eq_ignore_ascii_case(&dependent.sheet)
        && precedent != dependent
        && (precedent.row, precedent.col) > (dependent.row, dependent.col)
}

fn dot_id(addr: &CellAddress) -> String {
    let sheet: String = addr
        .sheet
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect();
    format!("{sheet}_{}", addr.coord().a1())
}

fn dot_escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Graphviz rendering of arcs and flagged cells.
pub fn export_dot(graph: &DependencyGraph, classes: &GraphClassification) -> String {
    let mut out = String::from("digraph precedence {\n  rankdir=TB;\n  node [shape=box];\n");
    let mut shown: BTreeSet<usize> = BTreeSet::new();
    for &(f, t) in graph.arcs.keys() {
        shown.insert(f);
        shown.insert(t);
    }
    for (i, node) in graph.nodes.iter().enumerate() {
        let c = classes.get(&node.addr);
        if c.spurious || c.dangling || c.perverse_target || c.bottom_line {
            shown.insert(i);
        }
    }
    for &i in &shown {
        let node = &graph.nodes[i];
        let c = classes.get(&node.addr);
        let label = format!("{}!{}", node.addr.sheet, node.addr.coord().a1());
        let style = if c.perverse_target {
            ", style=dashed, color=red"
        } else if c.spurious {
            ", style=filled, fillcolor=khaki"
        } else if c.dangling {
            ", style=filled, fillcolor=lightpink"
        } else if c.bottom_line {
            ", peripheries=2"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "  \"{}\" [label=\"{}\"{style}];",
            dot_id(&node.addr),
            dot_escape(&label)
        );
    }
    for &(f, t) in graph.arcs.keys() {
        let (from, to) = (&graph.nodes[f].addr, &graph.nodes[t].addr);
        let style = if is_backward(from, to) {
            " [style=dashed]"
        } else {
            ""
        };
        let _ = writeln!(out, "  \"{}\" -> \"{}\"{style};", dot_id(from), dot_id(to));
    }
    out.push_str("}\n");
    out
}

impl DependencyGraph {
    /// Formula text of a node, for messages.
    pub fn formula_text(&self, addr: &CellAddress) -> Option<String> {
        let i = *self.index.get(addr)?;
        self.formula_of(i).map(crate::formula::print_formula)
    }
}

/// Cell targets of one reference occurrence, for callers that only have an
/// AST (no workbook).
pub fn target_cells(target: &RefTarget, host_sheet: &str) -> Vec<CellAddress> {
    match target {
        RefTarget::Cell(c) => vec![c.resolve(host_sheet)],
        RefTarget::Range(r) => {
            let sheet = r
                .start
                .sheet
                .clone()
                .unwrap_or_else(|| host_sheet.to_string());
            r.cells()
                .map(|c| CellAddress::at(sheet.clone(), c))
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::parse_formula;
    use crate::model::Sheet;

    fn book(cells: &[(&str, &str)]) -> Workbook {
        let mut sheet = Sheet::new("Model");
        for (a1, v) in cells {
            let c = Coord::parse(a1).unwrap();
            let content = if let Some(f) = v.strip_prefix('=') {
                let text = format!("={f}");
                CellContent::Formula {
                    ast: Some(parse_formula(&text).unwrap()),
                    text,
                }
            } else if let Ok(n) = v.parse() {
                CellContent::Number(n)
            } else {
                CellContent::Text(v.to_string())
            };
            sheet.set_content(c, content);
        }
        Workbook {
            sheets: vec![sheet],
            ..Workbook::default()
        }
    }

    fn at(a1: &str) -> CellAddress {
        CellAddress::at("Model", Coord::parse(a1).unwrap())
    }

    #[test]
    fn range_expands_to_each_cell() {
        let mut cells: Vec<(String, String)> =
            (3..=48).map(|r| (format!("D{r}"), "1".into())).collect();
        cells.push(("D49".into(), "=SUM(D3:D48)".into()));
        let refs: Vec<(&str, &str)> = cells
            .iter()
            .map(|(a, b)| (a.as_str(), b.as_str()))
            .collect();
        let g = build_graph(&book(&refs));
        let expected = (3..=48).count();
        assert_eq!(g.precedents(&at("D49")).len(), expected);
        assert_eq!(g.arc_count(), 46);
        assert!(g.arcs().all(|(_, _, info)| info.via_range && !info.direct));
    }

    #[test]
    fn no_formulas_no_arcs() {
        let g = build_graph(&book(&[("A1", "1"), ("B1", "x")]));
        assert_eq!(g.arc_count(), 0);
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn blanks_become_nodes() {
        let g = build_graph(&book(&[("A1", "=B7+SUM(C1:C2)")]));
        assert!(g.node(&at("B7")).unwrap().blank);
        let cls = classify_graph(&g, &AnchorOptions::default());
        assert!(cls.get(&at("B7")).perverse_target);
        assert!(!cls.get(&at("C1")).perverse_target);
    }

    #[test]
    fn spurious_and_dangling() {
        let g = build_graph(&book(&[
            ("A10", "5"),
            ("B25", "=A10"),
            ("B26", "=A10+A10"),
            ("B27", "=B25*B26"),
        ]));
        let cls = classify_graph(
            &g,
            &AnchorOptions {
                bottom_line: vec!["Model!B27".into()],
                ..AnchorOptions::default()
            },
        );
        assert!(cls.get(&at("B25")).spurious);
        assert!(!cls.get(&at("B26")).spurious);
        assert!(!cls.get(&at("B27")).dangling);
        assert!(cls.get(&at("B27")).bottom_line);
    }

    #[test]
    fn bare_reference_without_dependents_is_both() {
        let g = build_graph(&book(&[
            ("A1", "1"),
            ("A2", "=A1"),
            ("A3", "=A1*2"),
            ("A4", "=A3*3"),
        ]));
        let cls = classify_graph(
            &g,
            &AnchorOptions {
                bottom_line: vec!["A4".into()],
                ..AnchorOptions::default()
            },
        );
        let c = cls.get(&at("A2"));
        assert!(c.spurious && c.dangling);
        assert_eq!(
            cls.cells_where(|c| c.spurious && c.dangling),
            vec![&at("A2")]
        );
    }

    #[test]
    fn objective_name_is_bottom_line() {
        let mut wb = book(&[("A1", "2"), ("B1", "=A1*3"), ("C1", "=A1+1")]);
        wb.defined_names
            .insert("WBMAX".into(), NameTarget::Cell(at("B1")));
        let cls = classify_graph(&build_graph(&wb), &AnchorOptions::default());
        assert!(cls.get(&at("B1")).bottom_line);
        assert!(!cls.get(&at("B1")).dangling);
        assert!(cls.get(&at("C1")).dangling);
    }

    #[test]
    fn coverage_heuristic() {
        let g = build_graph(&book(&[
            ("A1", "1"),
            ("A2", "2"),
            ("A3", "3"),
            ("A4", "=A1+A2+A3"),
            ("B1", "=A1*2"),
        ]));
        let cls = classify_graph(&g, &AnchorOptions::default());
        assert_eq!(cls.bottom_line, vec![at("A4")]);
        assert!(cls.get(&at("B1")).dangling);
    }

    #[test]
    fn unused_input_needs_anchor_path() {
        let g = build_graph(&book(&[
            ("A1", "1"),
            ("A2", "2"),
            ("B1", "=A1*5"),
            ("B2", "=A2*5"),
            ("C1", "=B1+1"),
        ]));
        let cls = classify_graph(
            &g,
            &AnchorOptions {
                bottom_line: vec!["C1".into()],
                ..AnchorOptions::default()
            },
        );
        assert!(!cls.get(&at("A1")).unused_input);
        assert!(cls.get(&at("A2")).unused_input);
        assert!(cls.get(&at("B2")).dangling);
    }

    #[test]
    fn solver_constraints_are_not_dangling() {
        let g = build_graph(&book(&[("A1", "1"), ("B1", "=WB(A1,\">=\",0)")]));
        let cls = classify_graph(&g, &AnchorOptions::default());
        let c = cls.get(&at("B1"));
        assert!(c.solver_constraint && !c.dangling);
    }

    #[test]
    fn two_cycle_and_self_loop() {
        let g = build_graph(&book(&[("A1", "=B1+1"), ("B1", "=A1"), ("C1", "=C1")]));
        assert_eq!(
            find_cycles(&g),
            vec![vec![at("A1"), at("B1")], vec![at("C1")]]
        );
        let cls = classify_graph(&g, &AnchorOptions::default());
        assert!(!cls.get(&at("C1")).spurious);
        assert!(cls.get(&at("B1")).spurious);
        assert!(cls.get(&at("C1")).on_cycle);

        let tree = precedence_tree(&g, &at("A1"), None).unwrap();
        assert_eq!(tree.children.len(), 1);
        assert_eq!(tree.children[0].addr, at("B1"));
        let marker = &tree.children[0].children[0];
        assert!(marker.cycle && marker.addr == at("A1"));
        assert_eq!(tree.depth(), 3);
    }

    #[test]
    fn three_cycle_matches_dfs_oracle() {
        let g = build_graph(&book(&[
            ("A1", "=C1"),
            ("B1", "=A1"),
            ("C1", "=B1"),
            ("D1", "=A1"),
        ]));
        // oracle: a node is cyclic iff it can reach itself
        let reach = |from: &CellAddress| -> BTreeSet<CellAddress> {
            let mut seen = BTreeSet::new();
            let mut stack = vec![from.clone()];
            while let Some(x) = stack.pop() {
                for d in g.dependents(&x) {
                    if seen.insert(d.clone()) {
                        stack.push(d.clone());
                    }
                }
            }
            seen
        };
        let cyclic: Vec<CellAddress> = g
            .nodes()
            .map(|n| n.addr.clone())
            .filter(|a| reach(a).contains(a))
            .collect();
        assert_eq!(find_cycles(&g), vec![cyclic]);
    }

    #[test]
    fn tree_matches_reverse_bfs() {
        let g = build_graph(&book(&[
            ("A1", "1"),
            ("A2", "2"),
            ("B1", "=A1+A2"),
            ("B2", "=B1*A2"),
            ("C1", "=B2+B1"),
        ]));
        let tree = precedence_tree(&g, &at("C1"), None).unwrap();
        let mut seen = BTreeSet::from([at("C1")]);
        let mut queue = std::collections::VecDeque::from([at("C1")]);
        while let Some(x) = queue.pop_front() {
            for p in g.precedents(&x) {
                if seen.insert(p.clone()) {
                    queue.push_back(p.clone());
                }
            }
        }
        assert_eq!(tree.addresses(), seen);
        assert!(tree
            .leaves()
            .iter()
            .all(|l| g.node(&l.addr).unwrap().kind == NodeKind::Number));

        let shallow = precedence_tree(&g, &at("C1"), Some(1)).unwrap();
        assert_eq!(shallow.depth(), 2);
        let constant = precedence_tree(&g, &at("A1"), None).unwrap();
        assert!(constant.children.is_empty());
        assert!(precedence_tree(&g, &at("Z9"), None).is_err());
    }

    #[test]
    fn missing_sheet_and_unknown_name_are_recorded() {
        let g = build_graph(&book(&[("A1", "=Other!B2+RATE")]));
        let unresolved: Vec<String> = g
            .unresolved()
            .iter()
            .map(|(_, r)| r.unresolved.as_ref().unwrap().to_string())
            .collect();
        assert_eq!(unresolved.len(), 2);
        assert!(unresolved[0].contains("Other"));
        assert!(unresolved[1].contains("RATE"));
    }

    #[test]
    fn dot_output() {
        let g = build_graph(&book(&[("A1", "1"), ("B2", "=A1*2")]));
        let dot = export_dot(&g, &classify_graph(&g, &AnchorOptions::default()));
        assert!(dot.contains("\"Model_A1\" -> \"Model_B2\";"));
        assert!(dot.contains("label=\"Model!A1\""));

        let back = build_graph(&book(&[("A1", "=A2*2"), ("A2", "3")]));
        let dot = export_dot(&back, &classify_graph(&back, &AnchorOptions::default()));
        assert!(dot.contains("\"Model_A2\" -> \"Model_A1\" [style=dashed];"));

        let empty = build_graph(&Workbook::default());
        let dot = export_dot(&empty, &classify_graph(&empty, &AnchorOptions::default()));
        assert!(dot.starts_with("digraph") && dot.trim_end().ends_with('}'));
        assert!(!dot.contains("->"));
    }
}
