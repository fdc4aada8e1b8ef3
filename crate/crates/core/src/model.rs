//! In-memory workbook model: addresses, cell content, formats and sheets.
//!
//! The model is independent of the file format it was loaded from. A
//! [`Workbook`] is immutable once a loader hands it out.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

use crate::formula::Expr;

/// Largest column index in the OOXML grid (`XFD`).
pub const MAX_COL: u32 = 16_384;
/// Largest row index in the OOXML grid.
pub const MAX_ROW: u32 = 1_048_576;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid cell address `{text}`: {reason}")]
pub struct AddressParseError {
    pub text: String,
    pub reason: &'static str,
}

/// Row/column position inside one sheet. Ordering is row-major reading order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Coord {
    pub row: u32,
    pub col: u32,
}

impl Coord {
    pub fn new(row: u32, col: u32) -> Self {
        Coord { row, col }
    }

    /// Chebyshev distance in cells.
    pub fn distance(self, other: Coord) -> u32 {
        self.row
            .abs_diff(other.row)
            .max(self.col.abs_diff(other.col))
    }

    pub fn a1(self) -> String {
        format!("{}{}", col_to_letters(self.col), self.row)
    }

    /// Parses an unqualified address such as `E4` or `$E$4`.
    pub fn parse(text: &str) -> Result<Coord, AddressParseError> {
        let addr = parse_a1(text)?;
        if !addr.sheet.is_empty() {
            return Err(AddressParseError {
                text: text.to_string(),
                reason: "sheet qualifier not allowed here",
            });
        }
        Ok(addr.coord())
    }
}

impl fmt::Display for Coord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.a1())
    }
}

/// A cell on a named sheet. An empty sheet name means "unqualified".
/// Serializes as its A1 text.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellAddress {
    pub sheet: String,
    pub row: u32,
    pub col: u32,
}

impl CellAddress {
    pub fn new(sheet: impl Into<String>, row: u32, col: u32) -> Self {
        CellAddress {
            sheet: sheet.into(),
            row,
            col,
        }
    }

    pub fn at(sheet: impl Into<String>, coord: Coord) -> Self {
        Self::new(sheet, coord.row, coord.col)
    }

    pub fn coord(&self) -> Coord {
        Coord::new(self.row, self.col)
    }

    /// Prints the address in A1 notation, sheet-qualified when a sheet is set.
    pub fn print_a1(&self) -> String {
        if self.sheet.is_empty() {
            self.coord().a1()
        } else {
            format!("{}!{}", quote_sheet_name(&self.sheet), self.coord().a1())
        }
    }
}

impl Serialize for CellAddress {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.print_a1())
    }
}

impl fmt::Display for CellAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.print_a1())
    }
}

/// Converts a 1-based column index to letters (`1 -> A`, `254 -> IT`).
pub fn col_to_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ascii")
}

/// Converts column letters (case-insensitive) to a 1-based index.
pub fn letters_to_col(letters: &str) -> Option<u32> {
    if letters.is_empty() || letters.len() > 3 {
        return None;
    }
    let mut col: u32 = 0;
    for b in letters.bytes() {
        if !b.is_ascii_alphabetic() {
            return None;
        }
        col = col * 26 + u32::from(b.to_ascii_uppercase() - b'A' + 1);
    }
    (col <= MAX_COL).then_some(col)
}

/// Quotes a sheet name for use in a reference when it is not a plain identifier.
pub fn quote_sheet_name(name: &str) -> String {
    let plain = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
        && !name.starts_with(|c: char| c.is_ascii_digit())
        && !looks_like_cell(name);
    if plain {
        name.to_string()
    } else {
        format!("'{}'", name.replace('\'', "''"))
    }
}

fn looks_like_cell(name: &str) -> bool {
    let split = name
        .find(|c: char| c.is_ascii_digit())
        .unwrap_or(name.len());
    let (letters, digits) = name.split_at(split);
    !digits.is_empty()
        && digits.bytes().all(|b| b.is_ascii_digit())
        && letters_to_col(letters).is_some()
}

/// Parses `[Sheet!]$A$1`-style text. `$` markers are accepted and dropped.
pub fn parse_a1(text: &str) -> Result<CellAddress, AddressParseError> {
    let err = |reason| AddressParseError {
        text: text.to_string(),
        reason,
    };
    let (sheet, rest) = match text.rfind('!') {
        Some(idx) => {
            let raw = &text[..idx];
            let sheet = if let Some(inner) = raw.strip_prefix('\'') {
                inner
                    .strip_suffix('\'')
                    .ok_or_else(|| err("unterminated quoted sheet name"))?
                    .replace("''", "'")
            } else {
                raw.to_string()
            };
            if sheet.is_empty() {
                return Err(err("empty sheet name"));
            }
            (sheet, &text[idx + 1..])
        }
        None => (String::new(), text),
    };

    let rest = rest.strip_prefix('$').unwrap_or(rest);
    let letters_end = rest
        .find(|c: char| !c.is_ascii_alphabetic())
        .unwrap_or(rest.len());
    let (letters, tail) = rest.split_at(letters_end);
    if letters.is_empty() {
        return Err(err("missing column letters"));
    }
    let col = letters_to_col(letters).ok_or_else(|| err("column out of range"))?;
    let digits = tail.strip_prefix('$').unwrap_or(tail);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(err("missing or malformed row number"));
    }
    let row: u32 = digits.parse().map_err(|_| err("row out of range"))?;
    if row == 0 || row > MAX_ROW {
        return Err(err("row out of range"));
    }
    Ok(CellAddress { sheet, row, col })
}

/// Cell payload. Exactly one variant's data is present.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum CellContent {
    #[default]
    Empty,
    Number(f64),
    /// Label text, kept verbatim (leading spaces included).
    Text(String),
    Formula {
        text: String,
        /// `None` when the loader could not parse the stored text.
        ast: Option<Expr>,
    },
    Bool(bool),
    /// Error value such as `#REF!`.
    Error(String),
}

impl CellContent {
    pub fn is_empty(&self) -> bool {
        matches!(self, CellContent::Empty)
    }

    pub fn is_formula(&self) -> bool {
        matches!(self, CellContent::Formula { .. })
    }

    pub fn formula_ast(&self) -> Option<&Expr> {
        match self {
            CellContent::Formula { ast, .. } => ast.as_ref(),
            _ => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            CellContent::Empty => "empty",
            CellContent::Number(_) => "number",
            CellContent::Text(_) => "label",
            CellContent::Formula { .. } => "formula",
            CellContent::Bool(_) => "bool",
            CellContent::Error(_) => "error",
        }
    }
}

/// Which borders are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize)]
pub struct Border {
    pub left: bool,
    pub right: bool,
    pub top: bool,
    pub bottom: bool,
}

impl Border {
    pub fn any(&self) -> bool {
        self.left || self.right || self.top || self.bottom
    }

    pub fn all() -> Self {
        Border {
            left: true,
            right: true,
            top: true,
            bottom: true,
        }
    }
}

/// Format attributes. `CellFormat::default()` means "no formatting".
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CellFormat {
    pub font_size: Option<f64>,
    pub bold: bool,
    pub italic: bool,
    pub underline: bool,
    pub font_color: Option<String>,
    pub background_color: Option<String>,
    pub number_format: Option<String>,
    pub hidden: bool,
    pub locked: bool,
    pub border: Border,
    pub rotated: bool,
    pub shrink: bool,
}

impl CellFormat {
    pub fn is_default(&self) -> bool {
        *self == CellFormat::default()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Cell {
    pub content: CellContent,
    pub format: CellFormat,
}

impl Cell {
    pub fn new(content: CellContent) -> Self {
        Cell {
            content,
            format: CellFormat::default(),
        }
    }

    /// Empty content with non-default formatting.
    pub fn is_format_only(&self) -> bool {
        self.content.is_empty() && !self.format.is_default()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sheet {
    pub name: String,
    pub cells: BTreeMap<Coord, Cell>,
    pub column_widths: BTreeMap<u32, f64>,
    pub row_heights: BTreeMap<u32, f64>,
    pub hidden_columns: BTreeSet<u32>,
    pub hidden_rows: BTreeSet<u32>,
    /// Bottom-right of the allocated range (the End/Home cell).
    pub declared_extent: Option<Coord>,
    pub hidden: bool,
}

impl Sheet {
    pub fn new(name: impl Into<String>) -> Self {
        Sheet {
            name: name.into(),
            ..Sheet::default()
        }
    }

    pub fn cell(&self, coord: Coord) -> Option<&Cell> {
        self.cells.get(&coord)
    }

    pub fn content(&self, coord: Coord) -> &CellContent {
        static EMPTY: CellContent = CellContent::Empty;
        self.cells.get(&coord).map_or(&EMPTY, |c| &c.content)
    }

    pub fn set_content(&mut self, coord: Coord, content: CellContent) {
        self.cells.entry(coord).or_default().content = content;
    }

    /// Cells carrying content, in reading order.
    pub fn populated(&self) -> impl Iterator<Item = (Coord, &Cell)> {
        self.cells
            .iter()
            .filter(|(_, c)| !c.content.is_empty())
            .map(|(k, c)| (*k, c))
    }

    pub fn is_populated(&self) -> bool {
        self.populated().next().is_some()
    }

    /// Bottom-right corner of the allocation implied by the stored cells:
    /// content plus format-only cells.
    pub fn allocated_extent(&self) -> Option<Coord> {
        corner(
            self.cells
                .iter()
                .filter(|(_, c)| !c.content.is_empty() || !c.format.is_default())
                .map(|(k, _)| *k),
        )
    }

    /// Grows `declared_extent` so that it covers every stored cell.
    pub fn widen_declared_extent(&mut self) {
        let allocated = self.allocated_extent();
        self.declared_extent = match (self.declared_extent, allocated) {
            (Some(d), Some(a)) => Some(Coord::new(d.row.max(a.row), d.col.max(a.col))),
            (d, a) => d.or(a),
        };
    }

    /// Width of a column in character units, falling back to the default.
    pub fn column_width(&self, col: u32) -> f64 {
        self.column_widths
            .get(&col)
            .copied()
            .unwrap_or(DEFAULT_COLUMN_WIDTH)
    }
}

/// Default column width in characters.
pub const DEFAULT_COLUMN_WIDTH: f64 = 8.43;

fn corner(coords: impl Iterator<Item = Coord>) -> Option<Coord> {
    coords.fold(None, |acc, c| match acc {
        None => Some(c),
        Some(a) => Some(Coord::new(a.row.max(c.row), a.col.max(c.col))),
    })
}

/// Bottom-right corner of the minimal box holding all content cells.
/// Format-only cells do not count.
pub fn content_extent(sheet: &Sheet) -> Option<Coord> {
    corner(sheet.populated().map(|(k, _)| k))
}

/// Top-left and bottom-right corners of the content bounding box.
pub fn content_box(sheet: &Sheet) -> Option<(Coord, Coord)> {
    let mut iter = sheet.populated().map(|(k, _)| k);
    let first = iter.next()?;
    let (mut lo, mut hi) = (first, first);
    for c in iter {
        lo = Coord::new(lo.row.min(c.row), lo.col.min(c.col));
        hi = Coord::new(hi.row.max(c.row), hi.col.max(c.col));
    }
    Some((lo, hi))
}

/// Target of a defined name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NameTarget {
    Cell(CellAddress),
    Range(CellAddress, CellAddress),
}

impl fmt::Display for NameTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NameTarget::Cell(a) => write!(f, "{a}"),
            NameTarget::Range(a, b) => write!(f, "{a}:{}", b.coord()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Workbook {
    pub sheets: Vec<Sheet>,
    /// Defined names, keyed by upper-cased name.
    pub defined_names: BTreeMap<String, NameTarget>,
    pub protection: bool,
    /// False when the source carried no formatting data at all (plain text
    /// fixtures without `fmt`/`col` statements). Format rules are skipped then.
    pub has_format_info: bool,
    /// Loader notices, e.g. ignored charts or unparseable formulas.
    pub notices: Vec<String>,
}

impl Workbook {
    pub fn sheet(&self, name: &str) -> Option<&Sheet> {
        self.sheets
            .iter()
            .find(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn sheet_index(&self, name: &str) -> Option<usize> {
        self.sheets
            .iter()
            .position(|s| s.name.eq_ignore_ascii_case(name))
    }

    pub fn cell(&self, addr: &CellAddress) -> Option<&Cell> {
        self.sheet(&addr.sheet)?.cell(addr.coord())
    }

    pub fn content(&self, addr: &CellAddress) -> &CellContent {
        static EMPTY: CellContent = CellContent::Empty;
        self.cell(addr).map_or(&EMPTY, |c| &c.content)
    }

    /// Looks a defined name up case-insensitively.
    pub fn name(&self, name: &str) -> Option<&NameTarget> {
        self.defined_names.get(&name.to_ascii_uppercase())
    }

    /// Canonical sheet name as stored (sheet lookups are case-insensitive).
    pub fn canonical_sheet_name(&self, name: &str) -> Option<&str> {
        self.sheet(name).map(|s| s.name.as_str())
    }
}

/// Numeric-cell classification of a stored or referenced cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NumericCellClass {
    NumericFormula,
    NumericConstant,
    Label,
    Blank,
    FormatOnlyBlank,
}

/// Classifies every populated, format-only or referenced cell.
///
/// A number constant is numeric only if some formula references it;
/// otherwise it is treated as a label.
pub fn classify_cells(
    workbook: &Workbook,
    graph: &crate::graph::DependencyGraph,
) -> BTreeMap<CellAddress, NumericCellClass> {
    let mut out = BTreeMap::new();
    for sheet in &workbook.sheets {
        for (coord, cell) in &sheet.cells {
            let addr = CellAddress::at(sheet.name.clone(), *coord);
            let class = match &cell.content {
                CellContent::Empty if cell.format.is_default() => continue,
                CellContent::Empty => NumericCellClass::FormatOnlyBlank,
                CellContent::Formula { .. } => NumericCellClass::NumericFormula,
                CellContent::Number(_) => {
                    if graph.dependent_count(&addr) > 0 {
                        NumericCellClass::NumericConstant
                    } else {
                        NumericCellClass::Label
                    }
                }
                CellContent::Text(_) | CellContent::Bool(_) | CellContent::Error(_) => {
                    NumericCellClass::Label
                }
            };
            out.insert(addr, class);
        }
    }
    for node in graph.nodes() {
        if node.blank {
            out.entry(node.addr.clone())
                .or_insert(NumericCellClass::Blank);
        }
    }
    out
}

/// Count of numeric cells (numeric formulas plus referenced constants).
pub fn numeric_cell_count(classes: &BTreeMap<CellAddress, NumericCellClass>) -> usize {
    classes
        .values()
        .filter(|c| {
            matches!(
                c,
                NumericCellClass::NumericFormula | NumericCellClass::NumericConstant
            )
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_simple_addresses() {
        let e4 = parse_a1("E4").unwrap();
        assert_eq!((e4.row, e4.col), (4, 5));
        let c51 = parse_a1("C51").unwrap();
        assert_eq!((c51.row, c51.col), (51, 3));
        let q = parse_a1("'My Sheet'!$B$2").unwrap();
        assert_eq!(q, CellAddress::new("My Sheet", 2, 2));
        assert_eq!(parse_a1("xfd1048576").unwrap().col, MAX_COL);
    }

    #[test]
    fn two_letter_column_matches_enumeration() {
        // enumerate labels A, B, ..., Z, AA, AB, ... until IT is reached
        let mut labels: Vec<String> = (b'A'..=b'Z').map(|b| (b as char).to_string()).collect();
        for first in b'A'..=b'Z' {
            for second in b'A'..=b'Z' {
                labels.push(format!("{}{}", first as char, second as char));
            }
        }
        let pos = labels.iter().position(|l| l == "IT").unwrap() + 1;
        assert_eq!(pos, 254);
        let it22 = parse_a1("IT22").unwrap();
        assert_eq!((it22.row, it22.col), (22, pos as u32));
        assert_eq!(col_to_letters(254), "IT");
    }

    #[test]
    fn rejects_malformed() {
        for bad in [
            "", "4E", "E", "E0", "XFE1", "A1048577", "'x!A1", "!A1", "E4x",
        ] {
            assert!(parse_a1(bad).is_err(), "{bad} should fail");
        }
        let err = parse_a1("E0").unwrap_err();
        assert_eq!(err.text, "E0");
    }

    #[test]
    fn content_extent_ignores_format_only_cells() {
        let mut sheet = Sheet::new("S");
        assert_eq!(content_extent(&sheet), None);
        sheet.set_content(Coord::new(2, 2), CellContent::Number(1.0));
        assert_eq!(content_extent(&sheet), Some(Coord::new(2, 2)));
        sheet.set_content(Coord::new(18, 12), CellContent::Text("x".into()));
        sheet.set_content(Coord::new(1, 1), CellContent::Number(1.0));
        sheet
            .cells
            .entry(Coord::new(22, 254))
            .or_default()
            .format
            .bold = true;
        assert_eq!(content_extent(&sheet), Some(Coord::new(18, 12)));
        assert_eq!(sheet.allocated_extent(), Some(Coord::new(22, 254)));
    }

    #[test]
    fn default_format_is_no_format() {
        assert!(CellFormat::default().is_default());
        let f = CellFormat {
            background_color: Some("grey".into()),
            ..CellFormat::default()
        };
        assert!(!f.is_default());
    }

    #[test]
    fn sheet_names_are_quoted_when_needed() {
        assert_eq!(quote_sheet_name("Model"), "Model");
        assert_eq!(quote_sheet_name("My Sheet"), "'My Sheet'");
        assert_eq!(quote_sheet_name("A1"), "'A1'");
        assert_eq!(quote_sheet_name("O'Brien"), "'O''Brien'");
    }
}
