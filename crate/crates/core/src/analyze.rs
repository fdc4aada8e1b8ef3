//! The full audit pipeline: graph, classification, layout, rewrites, rules.

use crate::config::AuditConfig;
use crate::graph::{build_graph, classify_graph, DependencyGraph, GraphClassification};
use crate::layout::{
    blank_space_ratio, bulletin_board_score, copy_pattern_breaks, detect_blocks, relic_scan,
};
use crate::model::{classify_cells, numeric_cell_count, Workbook};
use crate::report::ReportDocument;
use crate::rules::{run_rules, AuditContext, RuleRun, SheetLayout};
use crate::simplify::{apply_nesting, nest_candidates, simplify, NestCandidate, RewriteSuggestion};

/// Intermediate results of one audit, kept for rendering and inspection.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub graph: DependencyGraph,
    pub classes: GraphClassification,
    pub layouts: Vec<SheetLayout>,
    pub suggestions: Vec<RewriteSuggestion>,
    pub nests: Vec<NestCandidate>,
    pub rules: RuleRun,
    pub report: ReportDocument,
}

pub fn sheet_layouts(workbook: &Workbook, config: &AuditConfig) -> Vec<SheetLayout> {
    workbook
        .sheets
        .iter()
        .map(|sheet| {
            let blocks = detect_blocks(sheet);
            SheetLayout {
                sheet: sheet.name.clone(),
                stacking: bulletin_board_score(&blocks),
                block_corners: blocks
                    .iter()
                    .map(|b| (b.top_left, b.bottom_right))
                    .collect(),
                relics: relic_scan(sheet),
                copy_runs: copy_pattern_breaks(sheet, config.copy_run_min),
                blank_ratio: blank_space_ratio(sheet).ok(),
            }
        })
        .collect()
}

/// Verified simplifications for every formula cell, in reading order.
pub fn formula_suggestions(graph: &DependencyGraph) -> Vec<RewriteSuggestion> {
    graph
        .nodes()
        .filter_map(|n| n.formula.as_ref().and_then(|ast| simplify(ast, &n.addr)))
        .collect()
}

/// Runs the audit. `input` is the path shown in the report.
pub fn analyze(workbook: &Workbook, config: &AuditConfig, input: &str) -> Analysis {
    let graph = build_graph(workbook);
    let classes = classify_graph(&graph, &config.anchor_options());
    let layouts = sheet_layouts(workbook, config);
    let suggestions = formula_suggestions(&graph);
    let nests = nest_candidates(&graph, &classes, config.nest_max_len);
    let ctx = AuditContext {
        workbook,
        graph: &graph,
        classes: &classes,
        layouts: &layouts,
        suggestions: &suggestions,
        nests: &nests,
        config,
    };
    let mut rules = run_rules(&ctx);
    for entry in &classes.unmatched_bottom_line {
        rules
            .skipped
            .push(format!("bottom line `{entry}` matched no cell; ignored"));
    }
    let report = ReportDocument::build(input, workbook, &graph, &layouts, &rules);
    Analysis {
        graph,
        classes,
        layouts,
        suggestions,
        nests,
        rules,
        report,
    }
}

/// Outcome of [`nest_all`].
#[derive(Debug, Clone)]
pub struct NestingOutcome {
    pub workbook: Workbook,
    /// Applied candidates in order.
    pub applied: Vec<NestCandidate>,
    pub numeric_before: usize,
    pub numeric_after: usize,
}

impl NestingOutcome {
    pub fn cells_removed(&self) -> usize {
        self.numeric_before.saturating_sub(self.numeric_after)
    }
}

fn numeric_cells(workbook: &Workbook) -> usize {
    numeric_cell_count(&classify_cells(workbook, &build_graph(workbook)))
}

/// Repeatedly folds the first nesting candidate (in reading order of the
/// source cell) into its dependent until none is left.
pub fn nest_all(workbook: &Workbook, config: &AuditConfig) -> NestingOutcome {
    let numeric_before = numeric_cells(workbook);
    let mut current = workbook.clone();
    let mut applied = Vec::new();
    let limit = workbook.sheets.iter().map(|s| s.cells.len()).sum::<usize>();
    for _ in 0..limit {
        let graph = build_graph(&current);
        let classes = classify_graph(&graph, &config.anchor_options());
        let Some(first) = nest_candidates(&graph, &classes, config.nest_max_len)
            .into_iter()
            .next()
        else {
            break;
        };
        current = apply_nesting(&current, &first);
        applied.push(first);
    }
    NestingOutcome {
        numeric_after: numeric_cells(&current),
        workbook: current,
        applied,
        numeric_before,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::text::parse_text;

    const BOOK: &str = "[sheet S]\nA1 num 2\nA2 num 3\nA3 formula =A1*A2\nA4 formula =A3+A1\n";

    #[test]
    fn pipeline_fills_every_part() {
        let wb = parse_text(BOOK, "t.wb").unwrap();
        let a = analyze(&wb, &AuditConfig::default(), "t.wb");
        assert_eq!(a.graph.len(), 4);
        assert_eq!(a.layouts.len(), 1);
        assert_eq!(a.nests.len(), 1);
        assert_eq!(a.report.input, "t.wb");
        assert_eq!(a.report.score.numeric_cells, 4);
    }

    #[test]
    fn unmatched_bottom_line_is_reported() {
        let wb = parse_text(BOOK, "t.wb").unwrap();
        let mut config = AuditConfig::default();
        config.set("bottom_line", "Z99").unwrap();
        let a = analyze(&wb, &config, "t.wb");
        assert!(a.rules.skipped.iter().any(|s| s.contains("`Z99`")));
    }

    #[test]
    fn nest_all_folds_and_counts() {
        let wb = parse_text(BOOK, "t.wb").unwrap();
        let out = nest_all(&wb, &AuditConfig::default());
        assert_eq!(out.applied.len(), 1);
        assert_eq!(out.cells_removed(), 1);
        let a4 = crate::model::CellAddress::new("S", 4, 1);
        let ast = out.workbook.content(&a4).formula_ast().unwrap();
        assert_eq!(crate::formula::print_formula(ast), "=A1*A2+A1");
        assert!(nest_all(&out.workbook, &AuditConfig::default())
            .applied
            .is_empty());
    }
}
