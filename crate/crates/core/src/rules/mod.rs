//! Rule catalog and the engine that runs it.

mod cells;
mod flow;
mod format;
mod sheet;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Serialize, Serializer};

use crate::config::AuditConfig;
use crate::graph::{DependencyGraph, GraphClassification};
use crate::layout::{CopyRun, RelicReport, StackingReport};
use crate::model::{CellAddress, Workbook};
use crate::simplify::{NestCandidate, RewriteSuggestion};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Info,
    Warning,
    Error,
}

impl Severity {
    /// Weight used by the readability score.
    pub fn weight(self) -> f64 {
        match self {
            Severity::Error => 1.0,
            Severity::Warning => 0.5,
            Severity::Info => 0.1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Severity::Error => "error",
            Severity::Warning => "warning",
            Severity::Info => "info",
        }
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Severity {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "error" => Ok(Severity::Error),
            "warning" => Ok(Severity::Warning),
            "info" => Ok(Severity::Info),
            other => Err(format!(
                "unknown severity `{other}` (expected error, warning or info)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RuleInfo {
    pub id: &'static str,
    pub name: &'static str,
    pub severity: Severity,
    /// Needs font, fill, width or visibility data.
    pub needs_format: bool,
    pub guideline: &'static str,
}

const fn rule(
    id: &'static str,
    name: &'static str,
    severity: Severity,
    needs_format: bool,
    guideline: &'static str,
) -> RuleInfo {
    RuleInfo {
        id,
        name,
        severity,
        needs_format,
        guideline,
    }
}

use Severity::{Error as E, Info as I, Warning as W};

pub const CATALOG: [RuleInfo; 25] = [
    rule(
        "R01",
        "backward-reference",
        E,
        false,
        "Order cells so each formula reads only from cells earlier in reading order.",
    ),
    rule(
        "R02",
        "long-arc",
        W,
        false,
        "Place inputs close to the formulas that use them.",
    ),
    rule(
        "R03",
        "cross-sheet-reference",
        W,
        false,
        "Keep a model on one sheet where it fits; cross-sheet links hide dependencies.",
    ),
    rule(
        "R04",
        "spurious-cell",
        W,
        false,
        "Refer to the original cell instead of a copy made with a bare reference.",
    ),
    rule(
        "R05",
        "dangling-cell",
        W,
        false,
        "Remove numeric cells that feed nothing other than the designated outputs.",
    ),
    rule(
        "R06",
        "perverse-blank-reference",
        E,
        false,
        "Formulas should not read empty cells or unknown targets.",
    ),
    rule(
        "R07",
        "constant-in-formula",
        W,
        false,
        "Put numeric constants in labelled cells and reference them.",
    ),
    rule(
        "R08",
        "relic-extent",
        W,
        false,
        "Clear leftover formats and allocation beyond the used area.",
    ),
    rule(
        "R09",
        "circular-reference",
        E,
        false,
        "Break circular chains of formulas.",
    ),
    rule(
        "R10",
        "hidden-content",
        W,
        true,
        "Avoid hiding rows, columns, sheets or cells that hold content.",
    ),
    rule(
        "R11",
        "decorative-formatting",
        W,
        true,
        "Use one font size and a small palette.",
    ),
    rule(
        "R12",
        "constant-formula-format-indistinct",
        W,
        true,
        "Give formulas a format that sets them apart from constants.",
    ),
    rule(
        "R13",
        "all-caps-label",
        I,
        false,
        "Write labels in proper case.",
    ),
    rule(
        "R14",
        "leading-space-label",
        W,
        false,
        "Indent labels with formatting or layout, not leading spaces.",
    ),
    rule(
        "R15",
        "label-overlap",
        I,
        true,
        "Widen columns or shorten labels that do not fit.",
    ),
    rule(
        "R16",
        "nonuniform-column-width",
        I,
        true,
        "Keep data columns at similar widths.",
    ),
    rule(
        "R17",
        "bulletin-board-layout",
        W,
        false,
        "Stack blocks down or across, not both.",
    ),
    rule(
        "R18",
        "broken-copy-pattern",
        W,
        false,
        "Keep formulas in a row or column copyable from one another.",
    ),
    rule(
        "R19",
        "inline-candidate",
        I,
        false,
        "Fold a formula into its only dependent while it stays readable.",
    ),
    rule(
        "R20",
        "simplifiable-formula",
        I,
        false,
        "Prefer the shortest clear form of a formula.",
    ),
    rule(
        "R21",
        "label-with-formula",
        W,
        false,
        "Labels should be typed text, not computed.",
    ),
    rule(
        "R22",
        "excess-blank-space",
        I,
        false,
        "Keep blocks compact.",
    ),
    rule(
        "R23",
        "references-formula-depth",
        I,
        false,
        "Formulas are easiest to check when they read constants directly.",
    ),
    rule(
        "R24",
        "misordered-references",
        I,
        false,
        "List references in the order the cells appear.",
    ),
    rule(
        "R25",
        "sheet-count",
        I,
        false,
        "Prefer a single sheet for a single model.",
    ),
];

pub fn rule_info(id: &str) -> Option<&'static RuleInfo> {
    CATALOG.iter().find(|r| r.id.eq_ignore_ascii_case(id))
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Location {
    Workbook,
    Sheet(String),
    Cell(CellAddress),
}

impl Location {
    pub fn sheet(&self) -> Option<&str> {
        match self {
            Location::Workbook => None,
            Location::Sheet(s) => Some(s),
            Location::Cell(c) => Some(&c.sheet),
        }
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Location::Workbook => f.write_str("workbook"),
            Location::Sheet(s) => f.write_str(&crate::model::quote_sheet_name(s)),
            Location::Cell(c) => f.write_str(&c.print_a1()),
        }
    }
}

impl Serialize for Location {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

/// Attached fix: a checked rewrite or a free-text hint.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Suggestion {
    Rewrite(RewriteSuggestion),
    Hint { text: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub rule_id: &'static str,
    pub severity: Severity,
    pub location: Location,
    pub related: Vec<CellAddress>,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subcode: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestion: Option<Suggestion>,
    pub guideline: &'static str,
}

impl Diagnostic {
    pub fn cell(&self) -> Option<&CellAddress> {
        match &self.location {
            Location::Cell(c) => Some(c),
            _ => None,
        }
    }
}

/// Per-sheet layout results.
#[derive(Debug, Clone)]
pub struct SheetLayout {
    pub sheet: String,
    pub stacking: StackingReport,
    pub block_corners: Vec<(crate::model::Coord, crate::model::Coord)>,
    pub relics: RelicReport,
    pub copy_runs: Vec<CopyRun>,
    pub blank_ratio: Option<f64>,
}

/// Everything the rules read.
pub struct AuditContext<'a> {
    pub workbook: &'a Workbook,
    pub graph: &'a DependencyGraph,
    pub classes: &'a GraphClassification,
    pub layouts: &'a [SheetLayout],
    pub suggestions: &'a [RewriteSuggestion],
    pub nests: &'a [NestCandidate],
    pub config: &'a AuditConfig,
}

/// Collects diagnostics for one rule.
pub(crate) struct Emitter<'a> {
    info: &'static RuleInfo,
    severity: Severity,
    out: &'a mut Vec<Diagnostic>,
}

impl Emitter<'_> {
    pub(crate) fn emit(
        &mut self,
        location: Location,
        message: impl Into<String>,
    ) -> &mut Diagnostic {
        self.out.push(Diagnostic {
            rule_id: self.info.id,
            severity: self.severity,
            location,
            related: Vec::new(),
            message: message.into(),
            subcode: None,
            suggestion: None,
            guideline: self.info.guideline,
        });
        self.out.last_mut().expect("just pushed")
    }
}

type RuleFn = fn(&AuditContext<'_>, &mut Emitter<'_>);

fn implementation(id: &str) -> RuleFn {
    match id {
        "R01" => flow::backward_reference,
        "R02" => flow::long_arc,
        "R03" => flow::cross_sheet,
        "R04" => flow::spurious,
        "R05" => flow::dangling,
        "R06" => flow::perverse,
        "R07" => flow::constant_in_formula,
        "R08" => sheet::relics,
        "R09" => flow::circular,
        "R10" => format::hidden_content,
        "R11" => format::decorative,
        "R12" => format::indistinct,
        "R13" => cells::all_caps,
        "R14" => cells::leading_space,
        "R15" => format::label_overlap,
        "R16" => format::column_widths,
        "R17" => sheet::bulletin_board,
        "R18" => sheet::copy_pattern,
        "R19" => flow::inline_candidate,
        "R20" => flow::simplifiable,
        "R21" => cells::label_formula,
        "R22" => sheet::blank_space,
        "R23" => flow::formula_depth,
        "R24" => flow::misordered,
        "R25" => sheet::sheet_count,
        other => unreachable!("rule {other} missing from dispatch"),
    }
}

/// Output of [`run_rules`].
#[derive(Debug, Clone, Default)]
pub struct RuleRun {
    pub diagnostics: Vec<Diagnostic>,
    /// Rules that could not run, with the reason.
    pub skipped: Vec<String>,
}

/// Runs every enabled rule and sorts the result into reading order.
pub fn run_rules(ctx: &AuditContext<'_>) -> RuleRun {
    let mut run = RuleRun::default();
    for info in &CATALOG {
        if !ctx.config.is_enabled(info.id) {
            continue;
        }
        if info.needs_format && !ctx.workbook.has_format_info {
            run.skipped.push(format!(
                "{} {} skipped: input carries no formatting data",
                info.id, info.name
            ));
            continue;
        }
        let mut emitter = Emitter {
            info,
            severity: ctx.config.severity_of(info.id),
            out: &mut run.diagnostics,
        };
        implementation(info.id)(ctx, &mut emitter);
    }
    sort_diagnostics(ctx.workbook, &mut run.diagnostics);
    run
}

fn sort_key(workbook: &Workbook, d: &Diagnostic) -> (u8, usize, u32, u32) {
    match &d.location {
        Location::Workbook => (0, 0, 0, 0),
        Location::Sheet(s) => (1, workbook.sheet_index(s).unwrap_or(usize::MAX), 0, 0),
        Location::Cell(c) => (
            1,
            workbook.sheet_index(&c.sheet).unwrap_or(usize::MAX),
            c.row,
            c.col,
        ),
    }
}

/// Workbook-level first, then sheet order, row, column, rule id, message.
pub fn sort_diagnostics(workbook: &Workbook, diagnostics: &mut [Diagnostic]) {
    diagnostics.sort_by(|a, b| {
        sort_key(workbook, a)
            .cmp(&sort_key(workbook, b))
            .then_with(|| a.rule_id.cmp(b.rule_id))
            .then_with(|| a.message.cmp(&b.message))
    });
}

/// Count of diagnostics per rule id.
pub fn counts_by_rule(diagnostics: &[Diagnostic]) -> BTreeMap<&'static str, usize> {
    let mut out = BTreeMap::new();
    for d in diagnostics {
        *out.entry(d.rule_id).or_default() += 1;
    }
    out
}

/// Runs the full audit on a text workbook; for rule unit tests.
#[cfg(test)]
pub(crate) fn audit_text(text: &str, config: &AuditConfig) -> Vec<Diagnostic> {
    let wb = crate::io::text::parse_text(text, "t.wb").expect("test workbook parses");
    crate::analyze(&wb, config, "t.wb").rules.diagnostics
}

/// Locations of one rule's diagnostics, as printed.
#[cfg(test)]
pub(crate) fn hits(text: &str, rule: &str) -> Vec<String> {
    audit_text(text, &AuditConfig::default())
        .iter()
        .filter(|d| d.rule_id == rule)
        .map(|d| d.location.to_string())
        .collect()
}


#[cfg(test)]
mod run_tests {
    use super::*;

    const BOOK: &str =
        "[sheet S]\nA1 label Rate\nB1 num 2\nB2 formula =B1*3\nB3 formula =B4\nB4 num 1\n";

    #[test]
    fn diagnostics_come_in_reading_order() {
        let d = audit_text(BOOK, &AuditConfig::default());
        let keys: Vec<_> = d.iter().map(|x| (x.location.clone(), x.rule_id)).collect();
        let mut sorted = keys.clone();
        sorted.sort_by_key(|(l, id)| (!matches!(l, Location::Workbook), l.clone(), *id));
        assert_eq!(keys, sorted);
    }

    #[test]
    fn severity_override_and_restriction() {
        let mut config = AuditConfig::default();
        config.set("severity.R01", "info").unwrap();
        config.restrict(&["R01".to_string()].into());
        let d = audit_text(BOOK, &config);
        assert_eq!(d.len(), 1);
        assert_eq!((d[0].rule_id, d[0].severity), ("R01", Severity::Info));
        assert_eq!(d[0].location.to_string(), "S!B3");
    }

    #[test]
    fn format_rules_skip_plain_input() {
        let wb = crate::io::text::parse_text(BOOK, "t.wb").unwrap();
        let run = crate::analyze(&wb, &AuditConfig::default(), "t.wb").rules;
        let skipped: Vec<&str> = run.skipped.iter().map(|s| &s[..3]).collect();
        assert_eq!(skipped, ["R10", "R11", "R12", "R15", "R16"]);
    }
}
