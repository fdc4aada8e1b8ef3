//! Report document, readability score and renderers.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::graph::{export_dot, DependencyGraph, GraphClassification};
use crate::layout::Stacking;
use crate::model::{
    classify_cells, content_extent, numeric_cell_count, NumericCellClass, Workbook,
};
use crate::rules::{counts_by_rule, Diagnostic, RuleRun, Severity, SheetLayout};

pub const TOOL_NAME: &str = "sheetlint";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("workbook has no numeric cells to score")]
pub struct EmptyWorkbook;

/// `100 * (1 - min(1, sum(weight * count) / numeric_cells))`.
pub fn score(diagnostics: &[Diagnostic], numeric_cells: usize) -> Result<f64, EmptyWorkbook> {
    if numeric_cells == 0 {
        return Err(EmptyWorkbook);
    }
    let penalty: f64 = diagnostics.iter().map(|d| d.severity.weight()).sum();
    Ok(100.0 * (1.0 - (penalty / numeric_cells as f64).min(1.0)))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CellCounts {
    pub numeric_formulas: usize,
    pub numeric_constants: usize,
    pub labels: usize,
    pub blanks: usize,
    pub format_only: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SheetSummary {
    pub name: String,
    pub hidden: bool,
    pub cells: CellCounts,
    pub content_extent: Option<String>,
    pub declared_extent: Option<String>,
    pub blank_ratio: Option<f64>,
    pub blocks: usize,
    pub stacking: Stacking,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreSummary {
    /// `None` when the workbook has no numeric cells.
    pub value: Option<f64>,
    pub numeric_cells: usize,
    pub errors: usize,
    pub warnings: usize,
    pub infos: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportDocument {
    pub tool: &'static str,
    pub version: &'static str,
    pub input: String,
    pub sheets: Vec<SheetSummary>,
    pub diagnostics: Vec<Diagnostic>,
    pub counts_by_rule: BTreeMap<&'static str, usize>,
    pub score: ScoreSummary,
    pub skipped: Vec<String>,
    pub notices: Vec<String>,
}

impl ReportDocument {
    pub fn build(
        input: &str,
        workbook: &Workbook,
        graph: &DependencyGraph,
        layouts: &[SheetLayout],
        run: &RuleRun,
    ) -> ReportDocument {
        let classes = classify_cells(workbook, graph);
        let mut per_sheet: BTreeMap<&str, CellCounts> = BTreeMap::new();
        for (addr, class) in &classes {
            let c = per_sheet.entry(addr.sheet.as_str()).or_default();
            match class {
                NumericCellClass::NumericFormula => c.numeric_formulas += 1,
                NumericCellClass::NumericConstant => c.numeric_constants += 1,
                NumericCellClass::Label => c.labels += 1,
                NumericCellClass::Blank => c.blanks += 1,
                NumericCellClass::FormatOnlyBlank => c.format_only += 1,
            }
        }
        let sheets = workbook
            .sheets
            .iter()
            .zip(layouts)
            .map(|(sheet, layout)| SheetSummary {
                name: sheet.name.clone(),
                hidden: sheet.hidden,
                cells: per_sheet
                    .get(sheet.name.as_str())
                    .cloned()
                    .unwrap_or_default(),
                content_extent: content_extent(sheet).map(|c| c.a1()),
                declared_extent: layout.relics.declared_extent.map(|c| c.a1()),
                blank_ratio: layout.blank_ratio,
                blocks: layout.block_corners.len(),
                stacking: layout.stacking.stacking,
            })
            .collect();
        let n = numeric_cell_count(&classes);
        let count = |s: Severity| run.diagnostics.iter().filter(|d| d.severity == s).count();
        ReportDocument {
            tool: TOOL_NAME,
            version: TOOL_VERSION,
            input: input.to_string(),
            sheets,
            counts_by_rule: counts_by_rule(&run.diagnostics),
            score: ScoreSummary {
                value: score(&run.diagnostics, n).ok(),
                numeric_cells: n,
                errors: count(Severity::Error),
                warnings: count(Severity::Warning),
                infos: count(Severity::Info),
            },
            diagnostics: run.diagnostics.clone(),
            skipped: run.skipped.clone(),
            notices: workbook.notices.clone(),
        }
    }

    /// Highest severity among the diagnostics.
    pub fn max_severity(&self) -> Option<Severity> {
        self.diagnostics.iter().map(|d| d.severity).max()
    }
}

fn format_score(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.1}")
    }
}

pub fn diagnostic_line(d: &Diagnostic) -> String {
    format!(
        "{} [{} {}] {}",
        d.location, d.rule_id, d.severity, d.message
    )
}

/// One line per diagnostic, then a summary block.
pub fn render_text(report: &ReportDocument) -> String {
    let mut out = String::new();
    for d in &report.diagnostics {
        out.push_str(&diagnostic_line(d));
        out.push('\n');
    }
    let s = &report.score;
    let _ = writeln!(
        out,
        "{}: {} error(s), {} warning(s), {} info across {} numeric cell(s)",
        report.input, s.errors, s.warnings, s.infos, s.numeric_cells
    );
    match s.value {
        Some(v) => {
            let _ = writeln!(out, "score {}/100", format_score(v));
        }
        None => out.push_str("score n/a (no numeric cells)\n"),
    }
    if !report.counts_by_rule.is_empty() {
        let counts: Vec<String> = report
            .counts_by_rule
            .iter()
            .map(|(id, n)| format!("{id}={n}"))
            .collect();
        let _ = writeln!(out, "by rule: {}", counts.join(" "));
    }
    for note in report.skipped.iter().chain(&report.notices) {
        let _ = writeln!(out, "note: {note}");
    }
    out
}

pub fn render_json(report: &ReportDocument) -> String {
    serde_json::to_string_pretty(report).expect("report serializes")
}

pub fn render_json_many(reports: &[&ReportDocument]) -> String {
    serde_json::to_string_pretty(reports).expect("report serializes")
}

pub fn render_dot(graph: &DependencyGraph, classes: &GraphClassification) -> String {
    export_dot(graph, classes)
}
