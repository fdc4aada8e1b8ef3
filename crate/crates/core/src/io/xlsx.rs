//! Reader for the subset of SpreadsheetML the auditor needs: sheets,
//! cell values and formulas (shared formulas included), styles, column
//! widths, row heights, hidden flags, dimensions and defined names.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Seek};
use std::path::Path;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use zip::ZipArchive;

use super::LoadError;
use crate::formula::{parse_formula, print_formula, Expr};
use crate::model::{Border, CellContent, CellFormat, Coord, NameTarget, Sheet, Workbook};

pub fn load_xlsx(path: &Path) -> Result<Workbook, LoadError> {
    let name = path.display().to_string();
    let file = File::open(path).map_err(|e| LoadError::file(&name, e.to_string()))?;
    read_xlsx(file, &name)
}

/// Reads an xlsx package from any seekable source.
pub fn read_xlsx<R: Read + Seek>(source: R, path: &str) -> Result<Workbook, LoadError> {
    let mut zip = ZipArchive::new(source)
        .map_err(|e| LoadError::file(path, format!("not an xlsx package: {e}")))?;
    let mut pkg = Package {
        zip: &mut zip,
        path,
    };

    let workbook_xml = pkg
        .part("xl/workbook.xml")?
        .ok_or_else(|| LoadError::file(path, "missing xl/workbook.xml"))?;
    let rels = match pkg.part("xl/_rels/workbook.xml.rels")? {
        Some(x) => parse_rels(&x, path)?,
        None => HashMap::new(),
    };
    let shared = match pkg.part("xl/sharedStrings.xml")? {
        Some(x) => parse_shared_strings(&x, path)?,
        None => Vec::new(),
    };
    let styles = match pkg.part("xl/styles.xml")? {
        Some(x) => parse_styles(&x, path)?,
        None => Vec::new(),
    };
    let info = parse_workbook(&workbook_xml, path)?;

    let mut wb = Workbook {
        protection: info.protection,
        has_format_info: true,
        ..Workbook::default()
    };
    for entry in &info.sheets {
        let target = rels.get(&entry.rel_id).ok_or_else(|| {
            LoadError::file(
                path,
                format!("sheet `{}` has no relationship target", entry.name),
            )
        })?;
        let part = resolve_target(target);
        let xml = pkg
            .part(&part)?
            .ok_or_else(|| LoadError::file(path, format!("missing part {part}")))?;
        let mut sheet = parse_sheet(&xml, &entry.name, &shared, &styles, path, &mut wb.notices)?;
        sheet.hidden = entry.hidden;
        sheet.widen_declared_extent();
        wb.sheets.push(sheet);
    }

    for (name, text) in info.names {
        if name.starts_with("_xlnm.") {
            continue;
        }
        match name_target(&text) {
            Some(t) => {
                wb.defined_names.insert(name.to_ascii_uppercase(), t);
            }
            None => wb.notices.push(format!(
                "defined name `{name}` ({text}) is not a cell or range; ignored"
            )),
        }
    }

    let names: Vec<String> = pkg.zip.file_names().map(str::to_string).collect();
    let charts = names
        .iter()
        .filter(|n| n.starts_with("xl/charts/chart"))
        .count();
    let pivots = names
        .iter()
        .filter(|n| n.starts_with("xl/pivotTables/"))
        .count();
    if charts > 0 {
        wb.notices.push(format!("{charts} chart(s) not analyzed"));
    }
    if pivots > 0 {
        wb.notices
            .push(format!("{pivots} pivot table(s) not analyzed"));
    }
    Ok(wb)
}

struct Package<'a, R> {
    zip: &'a mut ZipArchive<R>,
    path: &'a str,
}

impl<R: Read + Seek> Package<'_, R> {
    fn part(&mut self, name: &str) -> Result<Option<String>, LoadError> {
        let mut file = match self.zip.by_name(name) {
            Ok(f) => f,
            Err(zip::result::ZipError::FileNotFound) => return Ok(None),
            Err(e) => return Err(LoadError::file(self.path, format!("{name}: {e}"))),
        };
        let mut text = String::new();
        file.read_to_string(&mut text)
            .map_err(|e| LoadError::file(self.path, format!("{name}: {e}")))?;
        Ok(Some(text))
    }
}

fn resolve_target(target: &str) -> String {
    match target.strip_prefix('/') {
        Some(abs) => abs.to_string(),
        None => format!("xl/{target}"),
    }
}

fn xml_err(path: &str, part: &str, e: impl std::fmt::Display) -> LoadError {
    LoadError::file(path, format!("malformed {part}: {e}"))
}

fn attr(e: &BytesStart<'_>, key: &[u8]) -> Option<String> {
    e.attributes()
        .flatten()
        .find(|a| a.key.local_name().as_ref() == key)
        .and_then(|a| a.unescape_value().ok().map(|v| v.into_owned()))
}

fn attr_flag(e: &BytesStart<'_>, key: &[u8]) -> Option<bool> {
    attr(e, key).map(|v| v == "1" || v.eq_ignore_ascii_case("true"))
}

fn local(e: &BytesStart<'_>) -> Vec<u8> {
    e.local_name().as_ref().to_vec()
}

fn parse_rels(xml: &str, path: &str) -> Result<HashMap<String, String>, LoadError> {
    let mut out = HashMap::new();
    let mut reader = Reader::from_str(xml);
    loop {
        match reader
            .read_event()
            .map_err(|e| xml_err(path, "workbook rels", e))?
        {
            Event::Start(e) | Event::Empty(e) if local(&e) == b"Relationship" => {
                if let (Some(id), Some(target)) = (attr(&e, b"Id"), attr(&e, b"Target")) {
                    out.insert(id, target);
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

fn parse_shared_strings(xml: &str, path: &str) -> Result<Vec<String>, LoadError> {
    let mut out = Vec::new();
    let mut reader = Reader::from_str(xml);
    let (mut current, mut in_t, mut in_phonetic) = (String::new(), false, false);
    loop {
        match reader
            .read_event()
            .map_err(|e| xml_err(path, "shared strings", e))?
        {
            Event::Start(e) => match local(&e).as_slice() {
                b"si" => current.clear(),
                b"t" => in_t = true,
                b"rPh" => in_phonetic = true,
                _ => {}
            },
            Event::Empty(e) if local(&e) == b"si" => out.push(String::new()),
            Event::End(e) => match e.local_name().as_ref() {
                b"si" => out.push(std::mem::take(&mut current)),
                b"t" => in_t = false,
                b"rPh" => in_phonetic = false,
                _ => {}
            },
            Event::Text(t) if in_t && !in_phonetic => {
                current.push_str(
                    &t.unescape()
                        .map_err(|e| xml_err(path, "shared strings", e))?,
                );
            }
            Event::CData(t) if in_t && !in_phonetic => {
                current.push_str(&String::from_utf8_lossy(&t));
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(out)
}

#[derive(Default, Clone)]
struct Font {
    size: Option<f64>,
    color: Option<String>,
    bold: bool,
    italic: bool,
    underline: bool,
}

fn color_of(e: &BytesStart<'_>) -> Option<String> {
    if let Some(rgb) = attr(e, b"rgb") {
        return Some(rgb.to_ascii_uppercase());
    }
    if let Some(theme) = attr(e, b"theme") {
        return Some(match attr(e, b"tint") {
            Some(t) => format!("theme:{theme}:{t}"),
            None => format!("theme:{theme}"),
        });
    }
    attr(e, b"indexed").map(|i| format!("indexed:{i}"))
}

/// Resolves `cellXfs` into one `CellFormat` per style index.
fn parse_styles(xml: &str, path: &str) -> Result<Vec<CellFormat>, LoadError> {
    let mut numfmts: HashMap<u32, String> = HashMap::new();
    let mut fonts: Vec<Font> = Vec::new();
    let mut fills: Vec<Option<String>> = Vec::new();
    let mut borders: Vec<Border> = Vec::new();
    let mut xfs: Vec<CellFormat> = Vec::new();

    #[derive(PartialEq)]
    enum Section {
        None,
        Fonts,
        Fills,
        Borders,
        CellXfs,
        Other,
    }
    let mut section = Section::None;
    let mut reader = Reader::from_str(xml);
    loop {
        let ev = reader
            .read_event()
            .map_err(|e| xml_err(path, "styles", e))?;
        let (e, empty) = match &ev {
            Event::Start(e) => (e.clone(), false),
            Event::Empty(e) => (e.clone(), true),
            Event::End(e) => {
                match e.local_name().as_ref() {
                    b"fonts" | b"fills" | b"borders" | b"cellXfs" | b"cellStyleXfs" | b"dxfs" => {
                        section = Section::None
                    }
                    _ => {}
                }
                continue;
            }
            Event::Eof => break,
            _ => continue,
        };
        let name = local(&e);
        match name.as_slice() {
            b"numFmt" => {
                if let (Some(id), Some(code)) = (attr(&e, b"numFmtId"), attr(&e, b"formatCode")) {
                    if let Ok(id) = id.parse() {
                        numfmts.insert(id, code);
                    }
                }
            }
            b"fonts" if !empty => section = Section::Fonts,
            b"fills" if !empty => section = Section::Fills,
            b"borders" if !empty => section = Section::Borders,
            b"cellXfs" if !empty => section = Section::CellXfs,
            b"cellStyleXfs" | b"dxfs" if !empty => section = Section::Other,
            b"font" if section == Section::Fonts => fonts.push(Font::default()),
            b"sz" if section == Section::Fonts => {
                if let Some(f) = fonts.last_mut() {
                    f.size = attr(&e, b"val").and_then(|v| v.parse().ok());
                }
            }
            b"b" | b"i" | b"u" if section == Section::Fonts => {
                if let Some(f) = fonts.last_mut() {
                    let on =
                        attr(&e, b"val").is_none_or(|v| v != "0" && v != "false" && v != "none");
                    match name.as_slice() {
                        b"b" => f.bold = on,
                        b"i" => f.italic = on,
                        _ => f.underline = on,
                    }
                }
            }
            b"color" if section == Section::Fonts => {
                if let Some(f) = fonts.last_mut() {
                    f.color = color_of(&e);
                }
            }
            b"fill" if section == Section::Fills => fills.push(None),
            b"patternFill" if section == Section::Fills => {
                let kind = attr(&e, b"patternType");
                if matches!(kind.as_deref(), None | Some("none") | Some("gray125")) {
                    continue;
                }
                if empty {
                    if let Some(f) = fills.last_mut() {
                        *f = Some("pattern".into());
                    }
                }
            }
            b"fgColor" if section == Section::Fills => {
                if let Some(f) = fills.last_mut() {
                    *f = color_of(&e).or_else(|| Some("pattern".into()));
                }
            }
            b"border" if section == Section::Borders => borders.push(Border::default()),
            b"left" | b"right" | b"top" | b"bottom" if section == Section::Borders => {
                let styled = attr(&e, b"style").is_some_and(|s| s != "none");
                if let Some(b) = borders.last_mut() {
                    match name.as_slice() {
                        b"left" => b.left = styled,
                        b"right" => b.right = styled,
                        b"top" => b.top = styled,
                        _ => b.bottom = styled,
                    }
                }
            }
            b"xf" if section == Section::CellXfs => {
                let idx = |k: &[u8]| {
                    attr(&e, k)
                        .and_then(|v| v.parse::<usize>().ok())
                        .unwrap_or(0)
                };
                let base = fonts.first().cloned().unwrap_or_default();
                let font = fonts.get(idx(b"fontId")).cloned().unwrap_or_default();
                let nf = idx(b"numFmtId") as u32;
                xfs.push(CellFormat {
                    font_size: font.size.filter(|s| Some(*s) != base.size),
                    font_color: font
                        .color
                        .clone()
                        .filter(|c| Some(c) != base.color.as_ref()),
                    bold: font.bold,
                    italic: font.italic,
                    underline: font.underline,
                    background_color: fills.get(idx(b"fillId")).cloned().flatten(),
                    number_format: match nf {
                        0 => None,
                        n => Some(
                            numfmts
                                .get(&n)
                                .cloned()
                                .unwrap_or_else(|| format!("builtin:{n}")),
                        ),
                    },
                    border: borders.get(idx(b"borderId")).copied().unwrap_or_default(),
                    ..CellFormat::default()
                });
            }
            b"alignment" if section == Section::CellXfs => {
                if let Some(x) = xfs.last_mut() {
                    x.rotated = attr(&e, b"textRotation").is_some_and(|r| r != "0");
                    x.shrink = attr_flag(&e, b"shrinkToFit").unwrap_or(false);
                }
            }
            b"protection" if section == Section::CellXfs => {
                if let Some(x) = xfs.last_mut() {
                    x.hidden = attr_flag(&e, b"hidden").unwrap_or(false);
                    // only recorded when the style says something about protection
                    x.locked = x.hidden && attr_flag(&e, b"locked").unwrap_or(true);
                }
            }
            _ => {}
        }
    }
    Ok(xfs)
}

struct SheetEntry {
    name: String,
    rel_id: String,
    hidden: bool,
}

struct WorkbookInfo {
    sheets: Vec<SheetEntry>,
    names: Vec<(String, String)>,
    protection: bool,
}

fn parse_workbook(xml: &str, path: &str) -> Result<WorkbookInfo, LoadError> {
    let mut info = WorkbookInfo {
        sheets: Vec::new(),
        names: Vec::new(),
        protection: false,
    };
    let mut reader = Reader::from_str(xml);
    let mut current_name: Option<(String, bool)> = None;
    let mut text = String::new();
    loop {
        match reader
            .read_event()
            .map_err(|e| xml_err(path, "workbook", e))?
        {
            Event::Start(e) | Event::Empty(e) if local(&e) == b"sheet" => {
                let name = attr(&e, b"name")
                    .ok_or_else(|| LoadError::file(path, "sheet without a name"))?;
                let rel_id = attr(&e, b"id").unwrap_or_default();
                let hidden = attr(&e, b"state").is_some_and(|s| s != "visible");
                info.sheets.push(SheetEntry {
                    name,
                    rel_id,
                    hidden,
                });
            }
            Event::Start(e) | Event::Empty(e) if local(&e) == b"workbookProtection" => {
                info.protection = attr_flag(&e, b"lockStructure").unwrap_or(false)
                    || attr_flag(&e, b"lockWindows").unwrap_or(false)
                    || attr(&e, b"workbookPassword").is_some();
            }
            Event::Start(e) if local(&e) == b"definedName" => {
                let local_only = attr(&e, b"localSheetId").is_some();
                current_name = attr(&e, b"name").map(|n| (n, local_only));
                text.clear();
            }
            Event::Text(t) if current_name.is_some() => {
                text.push_str(&t.unescape().map_err(|e| xml_err(path, "workbook", e))?);
            }
            Event::End(e) if e.local_name().as_ref() == b"definedName" => {
                if let Some((name, _)) = current_name.take() {
                    info.names.push((name, text.trim().to_string()));
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }
    Ok(info)
}

fn name_target(text: &str) -> Option<NameTarget> {
    match parse_formula(text).ok()? {
        Expr::Ref(r) if r.sheet.is_some() => Some(NameTarget::Cell(r.resolve(""))),
        Expr::Range(r) if r.start.sheet.is_some() => {
            let mut end = r.end.clone();
            end.sheet = r.start.sheet.clone();
            Some(NameTarget::Range(r.start.resolve(""), end.resolve("")))
        }
        _ => None,
    }
}

#[derive(Default)]
struct RawCell {
    coord: Option<Coord>,
    style: usize,
    kind: String,
    value: Option<String>,
    formula: Option<String>,
    shared: Option<(String, Option<String>)>,
    inline: String,
}

struct SharedMaster {
    host: Coord,
    ast: Expr,
}

fn parse_sheet(
    xml: &str,
    name: &str,
    shared: &[String],
    styles: &[CellFormat],
    path: &str,
    notices: &mut Vec<String>,
) -> Result<Sheet, LoadError> {
    let part = format!("sheet `{name}`");
    let mut sheet = Sheet::new(name);
    let mut reader = Reader::from_str(xml);
    let mut cell: Option<RawCell> = None;
    let mut in_v = false;
    let mut in_f = false;
    let mut in_is_t = false;
    let mut row: u32 = 0;
    let mut last_col: u32 = 0;
    let mut masters: HashMap<String, SharedMaster> = HashMap::new();
    let mut pending: BTreeMap<Coord, RawCell> = BTreeMap::new();

    loop {
        let ev = reader.read_event().map_err(|e| xml_err(path, &part, e))?;
        match ev {
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(ev, Event::Empty(_));
                match local(e).as_slice() {
                    b"dimension" => {
                        if let Some(r) = attr(e, b"ref") {
                            let end = r.rsplit(':').next().unwrap_or(&r);
                            sheet.declared_extent = Coord::parse(end).ok();
                        }
                    }
                    b"col" => {
                        let min: u32 = attr(e, b"min").and_then(|v| v.parse().ok()).unwrap_or(0);
                        let max: u32 = attr(e, b"max").and_then(|v| v.parse().ok()).unwrap_or(min);
                        if min == 0 || max < min || max - min > 1000 {
                            continue;
                        }
                        let width: Option<f64> = attr(e, b"width").and_then(|v| v.parse().ok());
                        let hidden = attr_flag(e, b"hidden").unwrap_or(false);
                        for c in min..=max {
                            if let Some(w) = width {
                                sheet.column_widths.insert(c, w);
                            }
                            if hidden {
                                sheet.hidden_columns.insert(c);
                            }
                        }
                    }
                    b"row" => {
                        row = attr(e, b"r")
                            .and_then(|v| v.parse().ok())
                            .unwrap_or(row + 1);
                        last_col = 0;
                        if attr_flag(e, b"customHeight").unwrap_or(false) {
                            if let Some(h) = attr(e, b"ht").and_then(|v| v.parse().ok()) {
                                sheet.row_heights.insert(row, h);
                            }
                        }
                        if attr_flag(e, b"hidden").unwrap_or(false) {
                            sheet.hidden_rows.insert(row);
                        }
                    }
                    b"c" => {
                        let coord = match attr(e, b"r") {
                            Some(r) => Coord::parse(&r).ok(),
                            None => Some(Coord::new(row.max(1), last_col + 1)),
                        };
                        if let Some(c) = coord {
                            last_col = c.col;
                        }
                        let raw = RawCell {
                            coord,
                            style: attr(e, b"s").and_then(|v| v.parse().ok()).unwrap_or(0),
                            kind: attr(e, b"t").unwrap_or_default(),
                            ..RawCell::default()
                        };
                        if empty {
                            finish_cell(
                                raw,
                                &mut sheet,
                                &mut pending,
                                &mut masters,
                                shared,
                                styles,
                                notices,
                            );
                        } else {
                            cell = Some(raw);
                        }
                    }
                    b"v" => in_v = !empty,
                    b"f" => {
                        if let Some(c) = cell.as_mut() {
                            if attr(e, b"t").as_deref() == Some("shared") {
                                c.shared = attr(e, b"si").map(|si| (si, attr(e, b"ref")));
                            }
                            if c.formula.is_none() {
                                c.formula = Some(String::new());
                            }
                        }
                        in_f = !empty;
                    }
                    b"t" if cell.is_some() => in_is_t = !empty,
                    _ => {}
                }
            }
            Event::Text(t) => {
                let text = t.unescape().map_err(|e| xml_err(path, &part, e))?;
                if let Some(c) = cell.as_mut() {
                    if in_v {
                        c.value.get_or_insert_with(String::new).push_str(&text);
                    } else if in_f {
                        c.formula.get_or_insert_with(String::new).push_str(&text);
                    } else if in_is_t {
                        c.inline.push_str(&text);
                    }
                }
            }
            Event::End(e) => match e.local_name().as_ref() {
                b"v" => in_v = false,
                b"f" => in_f = false,
                b"t" => in_is_t = false,
                b"c" => {
                    if let Some(raw) = cell.take() {
                        finish_cell(
                            raw,
                            &mut sheet,
                            &mut pending,
                            &mut masters,
                            shared,
                            styles,
                            notices,
                        );
                    }
                }
                _ => {}
            },
            Event::Eof => break,
            _ => {}
        }
    }

    // followers that appeared before their master
    for (coord, raw) in pending {
        let si = raw
            .shared
            .as_ref()
            .map(|(si, _)| si.clone())
            .unwrap_or_default();
        match masters.get(&si) {
            Some(m) => place_shared(&mut sheet, coord, m, raw.style, styles, notices),
            None => notices.push(format!(
                "{}!{coord}: shared formula {si} has no master; cell skipped",
                sheet.name
            )),
        }
    }
    Ok(sheet)
}

fn finish_cell(
    raw: RawCell,
    sheet: &mut Sheet,
    pending: &mut BTreeMap<Coord, RawCell>,
    masters: &mut HashMap<String, SharedMaster>,
    shared: &[String],
    styles: &[CellFormat],
    notices: &mut Vec<String>,
) {
    let Some(coord) = raw.coord else {
        notices.push(format!(
            "{}: cell with an unreadable address skipped",
            sheet.name
        ));
        return;
    };
    let format = styles.get(raw.style).cloned().unwrap_or_default();

    if let Some(text) = raw.formula.as_deref().filter(|t| !t.trim().is_empty()) {
        let full = format!("={}", text.trim());
        let content = match parse_formula(&full) {
            Ok(ast) => {
                if let Some((si, _)) = &raw.shared {
                    masters.insert(
                        si.clone(),
                        SharedMaster {
                            host: coord,
                            ast: ast.clone(),
                        },
                    );
                }
                CellContent::Formula {
                    text: full,
                    ast: Some(ast),
                }
            }
            Err(e) => {
                notices.push(format!(
                    "{}!{coord}: formula not parsed ({e}); treated as opaque",
                    sheet.name
                ));
                CellContent::Formula {
                    text: full,
                    ast: None,
                }
            }
        };
        let cell = sheet.cells.entry(coord).or_default();
        cell.content = content;
        cell.format = format;
        return;
    }
    if let Some((si, _)) = &raw.shared {
        match masters.get(si) {
            Some(m) => place_shared(sheet, coord, m, raw.style, styles, notices),
            None => {
                pending.insert(coord, raw);
            }
        }
        return;
    }

    let content = match raw.kind.as_str() {
        "s" => raw
            .value
            .as_deref()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .and_then(|i| shared.get(i))
            .map(|s| CellContent::Text(s.clone()))
            .unwrap_or_default(),
        "inlineStr" => CellContent::Text(raw.inline),
        "str" => raw.value.map(CellContent::Text).unwrap_or_default(),
        "b" => raw
            .value
            .map(|v| CellContent::Bool(v.trim() == "1"))
            .unwrap_or_default(),
        "e" => raw.value.map(CellContent::Error).unwrap_or_default(),
        _ => match raw.value.as_deref().map(str::trim) {
            Some(v) if !v.is_empty() => match v.parse::<f64>() {
                Ok(n) => CellContent::Number(n),
                Err(_) => CellContent::Text(v.to_string()),
            },
            _ => CellContent::Empty,
        },
    };
    if content.is_empty() && format.is_default() {
        return;
    }
    let cell = sheet.cells.entry(coord).or_default();
    cell.content = content;
    cell.format = format;
}

fn place_shared(
    sheet: &mut Sheet,
    coord: Coord,
    master: &SharedMaster,
    style: usize,
    styles: &[CellFormat],
    notices: &mut Vec<String>,
) {
    let drow = coord.row as i64 - master.host.row as i64;
    let dcol = coord.col as i64 - master.host.col as i64;
    match master.ast.shift(drow, dcol) {
        Some(ast) => {
            let cell = sheet.cells.entry(coord).or_default();
            cell.content = CellContent::Formula {
                text: print_formula(&ast),
                ast: Some(ast),
            };
            cell.format = styles.get(style).cloned().unwrap_or_default();
        }
        None => notices.push(format!(
            "{}!{coord}: shared formula shifts off the sheet; cell skipped",
            sheet.name
        )),
    }
}
