//! Plain-text workbook format.
//!
//! One statement per line. Lines whose first non-blank character is `#`
//! are comments.
//!
//! ```text
//! [sheet Model]
//! [dimension IT22]
//! col B width=12
//! row 3 height=20
//! name WBMAX Model!E4
//! A1 label Preference Total
//! B1 num 0.07
//! C1 formula =SUM(A4:A6)
//! C1 fmt bg=C0C0C0,bold,numfmt="#,##0"
//! ```
//!
//! Beyond cell statements: `col <letters> width=<w>[,hidden]`,
//! `row <n> height=<h>[,hidden]`, `name <NAME> <ref>`, `hide` (hides the
//! current sheet) and `protect` (workbook protection). Format keys: `bg`,
//! `color`, `size`, `bold`, `italic`, `underline`, `hidden`, `locked`,
//! `numfmt`, `border`, `rotate`, `shrink`.

use std::collections::BTreeSet;
use std::path::Path;

use super::LoadError;
use crate::formula::{parse_formula, Expr};
use crate::model::{letters_to_col, CellContent, CellFormat, Coord, NameTarget, Sheet, Workbook};

pub fn load_text(path: &Path) -> Result<Workbook, LoadError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LoadError::file(&path.display().to_string(), e.to_string()))?;
    parse_text(&text, &path.display().to_string())
}

struct Ctx<'a> {
    path: &'a str,
    line: usize,
}

impl Ctx<'_> {
    fn err(&self, col: usize, message: impl Into<String>) -> LoadError {
        LoadError::Syntax {
            path: self.path.to_string(),
            line: self.line,
            col,
            message: message.into(),
        }
    }
}

/// Parses the text format. `path` is used in error messages only.
pub fn parse_text(text: &str, path: &str) -> Result<Workbook, LoadError> {
    let mut wb = Workbook::default();
    let mut defined: Vec<BTreeSet<Coord>> = Vec::new();
    let mut pending_names: Vec<(Ctx, usize, String, String, Option<usize>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let ctx = Ctx { path, line: i + 1 };
        let raw = raw.strip_suffix('\r').unwrap_or(raw);
        let indent = raw.len() - raw.trim_start().len();
        let line = raw.trim_start();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        // column of a subslice of `raw`; empty literals point past the end
        let col_of = |s: &str| {
            let (base, at) = (raw.as_ptr() as usize, s.as_ptr() as usize);
            if (base..=base + raw.len()).contains(&at) {
                at - base + 1
            } else {
                raw.len() + 1
            }
        };

        if let Some(rest) = line.strip_prefix('[') {
            let body = rest
                .trim_end()
                .strip_suffix(']')
                .ok_or_else(|| ctx.err(indent + 1, "expected `]` at end of directive"))?;
            if let Some(name) = body.strip_prefix("sheet ") {
                let name = name.trim();
                if name.is_empty() {
                    return Err(ctx.err(indent + 1, "sheet name is empty"));
                }
                if wb.sheet(name).is_some() {
                    return Err(ctx.err(indent + 1, format!("duplicate sheet `{name}`")));
                }
                wb.sheets.push(Sheet::new(name));
                defined.push(BTreeSet::new());
            } else if let Some(addr) = body.strip_prefix("dimension ") {
                let sheet = wb
                    .sheets
                    .last_mut()
                    .ok_or_else(|| ctx.err(indent + 1, "`[dimension]` before any `[sheet]`"))?;
                let at = col_of(addr.trim_start());
                let c = Coord::parse(addr.trim()).map_err(|e| ctx.err(at, e.to_string()))?;
                sheet.declared_extent = Some(c);
            } else {
                return Err(ctx.err(indent + 2, "expected `sheet <name>` or `dimension <A1>`"));
            }
            continue;
        }

        let (head, rest) = line.split_once(' ').unwrap_or((line, ""));
        match head {
            "protect" => {
                wb.protection = true;
                continue;
            }
            "hide" => {
                let sheet = wb
                    .sheets
                    .last_mut()
                    .ok_or_else(|| ctx.err(indent + 1, "`hide` before any `[sheet]`"))?;
                sheet.hidden = true;
                wb.has_format_info = true;
                continue;
            }
            "name" => {
                let mut parts = rest.split_whitespace();
                let (Some(name), Some(target), None) = (parts.next(), parts.next(), parts.next())
                else {
                    return Err(ctx.err(col_of(rest), "expected `name <NAME> <reference>`"));
                };
                let host = wb.sheets.len().checked_sub(1);
                pending_names.push((
                    Ctx {
                        path,
                        line: ctx.line,
                    },
                    col_of(target),
                    name.to_string(),
                    target.to_string(),
                    host,
                ));
                continue;
            }
            "col" | "row" => {
                let sheet = wb
                    .sheets
                    .last_mut()
                    .ok_or_else(|| ctx.err(indent + 1, format!("`{head}` before any `[sheet]`")))?;
                let (which, attrs) = rest.trim().split_once(' ').unwrap_or((rest.trim(), ""));
                let index = if head == "col" {
                    letters_to_col(which)
                } else {
                    which
                        .parse()
                        .ok()
                        .filter(|r: &u32| (1..=crate::model::MAX_ROW).contains(r))
                }
                .ok_or_else(|| ctx.err(col_of(rest), format!("invalid {head} `{which}`")))?;
                for (key, value) in split_attrs(attrs).map_err(|m| ctx.err(col_of(attrs), m))? {
                    match (key.as_str(), head) {
                        ("width", "col") | ("height", "row") => {
                            let v: f64 = value
                                .as_deref()
                                .and_then(|v| v.parse().ok())
                                .filter(|v: &f64| *v >= 0.0)
                                .ok_or_else(|| {
                                    ctx.err(col_of(attrs), format!("`{key}` needs a number"))
                                })?;
                            if head == "col" {
                                sheet.column_widths.insert(index, v);
                            } else {
                                sheet.row_heights.insert(index, v);
                            }
                        }
                        ("hidden", _) => {
                            if head == "col" {
                                sheet.hidden_columns.insert(index);
                            } else {
                                sheet.hidden_rows.insert(index);
                            }
                        }
                        (other, _) => {
                            return Err(ctx
                                .err(col_of(attrs), format!("unknown {head} attribute `{other}`")))
                        }
                    }
                }
                wb.has_format_info = true;
                continue;
            }
            _ => {}
        }

        let coord = Coord::parse(head).map_err(|e| ctx.err(indent + 1, e.to_string()))?;
        let si = wb
            .sheets
            .len()
            .checked_sub(1)
            .ok_or_else(|| ctx.err(indent + 1, "cell statement before any `[sheet]`"))?;
        let (kind, payload) = rest.split_once(' ').unwrap_or((rest, ""));
        let payload_col = if payload.is_empty() {
            raw.len() + 1
        } else {
            col_of(payload)
        };
        let content = match kind {
            "num" => {
                let v: f64 = payload.trim().parse().map_err(|_| {
                    ctx.err(
                        payload_col,
                        format!("expected a number, found `{}`", payload.trim()),
                    )
                })?;
                Some(CellContent::Number(v))
            }
            "label" => Some(CellContent::Text(payload.to_string())),
            "formula" => {
                let f = payload.trim_end();
                if !f.starts_with('=') {
                    return Err(ctx.err(payload_col, "formula must start with `=`"));
                }
                let ast = parse_formula(f).map_err(|e| {
                    ctx.err(
                        payload_col + e.offset,
                        format!("expected {}, found {}", e.expected, e.found),
                    )
                })?;
                Some(CellContent::Formula {
                    text: f.to_string(),
                    ast: Some(ast),
                })
            }
            "fmt" => {
                let attrs = split_attrs(payload).map_err(|m| ctx.err(payload_col, m))?;
                let fmt = &mut wb.sheets[si].cells.entry(coord).or_default().format;
                for (k, v) in attrs {
                    apply_format(fmt, &k, v.as_deref()).map_err(|m| ctx.err(payload_col, m))?;
                }
                wb.has_format_info = true;
                None
            }
            "" => return Err(ctx.err(raw.len() + 1, "expected num, label, formula or fmt")),
            other => {
                return Err(ctx.err(
                    col_of(rest),
                    format!("unknown statement `{other}` (expected num, label, formula or fmt)"),
                ))
            }
        };
        if let Some(content) = content {
            if !defined[si].insert(coord) {
                return Err(ctx.err(indent + 1, format!("cell {coord} defined twice")));
            }
            wb.sheets[si].set_content(coord, content);
        }
    }

    for (ctx, at, name, target, host) in pending_names {
        let host_sheet = host.map(|i| wb.sheets[i].name.clone()).unwrap_or_default();
        let parsed = parse_formula(&target).map_err(|e| {
            ctx.err(
                at + e.offset,
                format!(
                    "bad name target: expected {}, found {}",
                    e.expected, e.found
                ),
            )
        })?;
        let resolved = match parsed {
            Expr::Ref(r) => NameTarget::Cell(r.resolve(&host_sheet)),
            Expr::Range(r) => NameTarget::Range(r.start.resolve(&host_sheet), {
                let mut end = r.end.clone();
                end.sheet = r.start.sheet.clone();
                end.resolve(&host_sheet)
            }),
            _ => return Err(ctx.err(at, format!("name `{name}` must point to a cell or range"))),
        };
        wb.defined_names.insert(name.to_ascii_uppercase(), resolved);
    }
    for sheet in &mut wb.sheets {
        sheet.widen_declared_extent();
    }
    Ok(wb)
}

type Attrs = Vec<(String, Option<String>)>;

/// Splits `k=v,k,"quoted, value"` style lists.
fn split_attrs(text: &str) -> Result<Attrs, String> {
    let mut out = Vec::new();
    let mut chars = text.trim().chars().peekable();
    while chars.peek().is_some() {
        let mut key = String::new();
        while let Some(&c) = chars.peek() {
            if c == '=' || c == ',' {
                break;
            }
            key.push(c);
            chars.next();
        }
        let mut value = None;
        if chars.peek() == Some(&'=') {
            chars.next();
            let mut v = String::new();
            if chars.peek() == Some(&'"') {
                chars.next();
                loop {
                    match chars.next() {
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            v.push('"');
                        }
                        Some('"') => break,
                        Some(c) => v.push(c),
                        None => return Err("unterminated quoted value".into()),
                    }
                }
            } else {
                while let Some(&c) = chars.peek() {
                    if c == ',' {
                        break;
                    }
                    v.push(c);
                    chars.next();
                }
                v = v.trim().to_string();
            }
            value = Some(v);
        }
        match chars.next() {
            None | Some(',') => {}
            Some(c) => return Err(format!("unexpected `{c}` after value")),
        }
        let key = key.trim().to_ascii_lowercase();
        if key.is_empty() {
            return Err("empty attribute name".into());
        }
        out.push((key, value));
    }
    Ok(out)
}

fn flag(key: &str, value: Option<&str>) -> Result<bool, String> {
    match value.map(str::to_ascii_lowercase).as_deref() {
        None | Some("true") | Some("1") | Some("yes") => Ok(true),
        Some("false") | Some("0") | Some("no") => Ok(false),
        Some(other) => Err(format!("`{key}` expects true or false, found `{other}`")),
    }
}

fn apply_format(fmt: &mut CellFormat, key: &str, value: Option<&str>) -> Result<(), String> {
    let need = |v: Option<&str>| -> Result<String, String> {
        v.filter(|s| !s.is_empty())
            .map(str::to_string)
            .ok_or_else(|| format!("`{key}` needs a value"))
    };
    match key {
        "bg" => fmt.background_color = Some(need(value)?.to_ascii_uppercase()),
        "color" => fmt.font_color = Some(need(value)?.to_ascii_uppercase()),
        "size" => {
            let v: f64 = need(value)?
                .parse()
                .map_err(|_| "`size` needs a number".to_string())?;
            fmt.font_size = Some(v);
        }
        "numfmt" => fmt.number_format = Some(need(value)?),
        "bold" => fmt.bold = flag(key, value)?,
        "italic" => fmt.italic = flag(key, value)?,
        "underline" => fmt.underline = flag(key, value)?,
        "hidden" => fmt.hidden = flag(key, value)?,
        "locked" => fmt.locked = flag(key, value)?,
        "rotate" => fmt.rotated = flag(key, value)?,
        "shrink" => fmt.shrink = flag(key, value)?,
        "border" => match value {
            None => fmt.border = crate::model::Border::all(),
            Some(sides) => {
                for side in sides.split('+') {
                    match side.trim() {
                        "left" => fmt.border.left = true,
                        "right" => fmt.border.right = true,
                        "top" => fmt.border.top = true,
                        "bottom" => fmt.border.bottom = true,
                        "all" => fmt.border = crate::model::Border::all(),
                        other => return Err(format!("unknown border side `{other}`")),
                    }
                }
            }
        },
        other => return Err(format!("unknown format key `{other}`")),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formula::print_formula;
    use crate::model::CellAddress;

    #[test]
    fn basic_statements() {
        let wb = parse_text(
            "# demo\n[sheet Model]\nA1 label   Total\nB1 num 0.07\nC51 formula =SUMPRODUCT(C4:I6,C7:I9)\nB1 fmt bg=c0c0c0,bold,numfmt=\"#,##0\"\n",
            "t.wb",
        )
        .unwrap();
        let s = &wb.sheets[0];
        assert_eq!(
            s.content(Coord::parse("A1").unwrap()),
            &CellContent::Text("  Total".into())
        );
        let c51 = s.content(Coord::parse("C51").unwrap());
        assert_eq!(
            print_formula(c51.formula_ast().unwrap()),
            "=SUMPRODUCT(C4:I6,C7:I9)"
        );
        let f = &s.cell(Coord::parse("B1").unwrap()).unwrap().format;
        assert_eq!(f.background_color.as_deref(), Some("C0C0C0"));
        assert!(f.bold);
        assert_eq!(f.number_format.as_deref(), Some("#,##0"));
        assert!(wb.has_format_info);
    }

    #[test]
    fn dimension_and_widening() {
        let wb = parse_text("[sheet S]\n[dimension IT22]\nL18 num 1\n", "t").unwrap();
        assert_eq!(
            wb.sheets[0].declared_extent,
            Some(Coord::parse("IT22").unwrap())
        );
        assert!(!wb.has_format_info);

        let wb = parse_text("[sheet S]\nB2 num 1\nZ99 fmt bold\n", "t").unwrap();
        assert_eq!(
            wb.sheets[0].declared_extent,
            Some(Coord::parse("Z99").unwrap())
        );
    }

    #[test]
    fn empty_file() {
        let wb = parse_text("", "e.wb").unwrap();
        assert!(wb.sheets.is_empty());
    }

    #[test]
    fn names_columns_rows() {
        let wb = parse_text(
            "[sheet Model]\nE4 formula =1+2\nname wbmax E4\nname Block Model!C4:I6\ncol B width=12.5,hidden\nrow 3 height=20\nhide\nprotect\n",
            "t",
        )
        .unwrap();
        assert_eq!(
            wb.name("WBMAX"),
            Some(&NameTarget::Cell(CellAddress::new("Model", 4, 5)))
        );
        assert!(matches!(wb.name("block"), Some(NameTarget::Range(..))));
        let s = &wb.sheets[0];
        assert_eq!(s.column_widths[&2], 12.5);
        assert!(s.hidden_columns.contains(&2));
        assert_eq!(s.row_heights[&3], 20.0);
        assert!(s.hidden && wb.protection);
    }

    #[test]
    fn errors_have_positions() {
        let cases = [
            ("A1 num 1\n", 1, 1, "before any"),
            ("[sheet S]\nA1 num x\n", 2, 8, "expected a number"),
            ("[sheet S]\nA1 num 1\nA1 label x\n", 3, 1, "defined twice"),
            ("[sheet S]\nA1 formula =SUM(A2\n", 2, 19, "expected"),
            ("[sheet S]\nA1 formula SUM(A2)\n", 2, 12, "must start"),
            ("[sheet S]\nA1 fmt glitter\n", 2, 8, "unknown format key"),
            ("[sheet S]\nQ0 num 1\n", 2, 1, "invalid cell address"),
            ("[sheet S]\nA1 value 1\n", 2, 4, "unknown statement"),
            ("[sheet S\n", 1, 1, "expected `]`"),
        ];
        for (src, line, col, msg) in cases {
            let err = parse_text(src, "f.wb").unwrap_err();
            let LoadError::Syntax {
                line: l,
                col: c,
                message,
                ..
            } = &err
            else {
                panic!("{src}: {err}")
            };
            assert_eq!((*l, *c), (line, col), "{src}: {err}");
            assert!(message.contains(msg), "{src}: {err}");
            assert!(err.to_string().starts_with(&format!("f.wb:{line}:{col}: ")));
        }
    }

    #[test]
    fn hash_inside_label_is_kept() {
        let wb = parse_text("[sheet S]\nJ4 label #Work\n  # indented comment\n", "t").unwrap();
        assert_eq!(
            wb.sheets[0].content(Coord::parse("J4").unwrap()),
            &CellContent::Text("#Work".into())
        );
    }
}
