//! Rules that need formatting data (fonts, fills, widths, visibility).

use std::collections::BTreeSet;

use super::{AuditContext, Emitter, Location};
use crate::model::{col_to_letters, content_extent, CellAddress, CellContent, CellFormat};

pub(super) fn hidden_content(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    if ctx.workbook.protection {
        out.emit(Location::Workbook, "workbook structure is protected");
    }
    for sheet in &ctx.workbook.sheets {
        let populated: Vec<_> = sheet.populated().collect();
        if sheet.hidden && !populated.is_empty() {
            out.emit(
                Location::Sheet(sheet.name.clone()),
                format!("hidden sheet holds {} cell(s)", populated.len()),
            );
        }
        for &col in &sheet.hidden_columns {
            let n = populated.iter().filter(|(c, _)| c.col == col).count();
            if n > 0 {
                out.emit(
                    Location::Sheet(sheet.name.clone()),
                    format!("hidden column {} holds {n} cell(s)", col_to_letters(col)),
                );
            }
        }
        for &row in &sheet.hidden_rows {
            let n = populated.iter().filter(|(c, _)| c.row == row).count();
            if n > 0 {
                out.emit(
                    Location::Sheet(sheet.name.clone()),
                    format!("hidden row {row} holds {n} cell(s)"),
                );
            }
        }
        for (coord, cell) in &populated {
            if cell.format.hidden && cell.format.locked {
                out.emit(
                    Location::Cell(CellAddress::at(sheet.name.clone(), *coord)),
                    "cell content is locked and hidden",
                );
            }
        }
    }
}

pub(super) fn decorative(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for sheet in &ctx.workbook.sheets {
        let formats: Vec<&CellFormat> = sheet.populated().map(|(_, c)| &c.format).collect();
        if formats.is_empty() {
            continue;
        }
        let sizes: BTreeSet<String> = formats
            .iter()
            .map(|f| {
                f.font_size
                    .map_or_else(|| "default".to_string(), |s| format!("{s}"))
            })
            .collect();
        if sizes.len() > ctx.config.max_font_sizes {
            out.emit(
                Location::Sheet(sheet.name.clone()),
                format!(
                    "{} font sizes in use ({}); limit {}",
                    sizes.len(),
                    sizes.into_iter().collect::<Vec<_>>().join(", "),
                    ctx.config.max_font_sizes
                ),
            )
            .subcode = Some("font-size");
        }
        let colors: BTreeSet<&str> = formats
            .iter()
            .flat_map(|f| [f.font_color.as_deref(), f.background_color.as_deref()])
            .flatten()
            .collect();
        if colors.len() > ctx.config.max_colors {
            out.emit(
                Location::Sheet(sheet.name.clone()),
                format!(
                    "{} colors in use; limit {}",
                    colors.len(),
                    ctx.config.max_colors
                ),
            )
            .subcode = Some("color");
        }
        let turned = formats.iter().filter(|f| f.rotated || f.shrink).count();
        if turned > 0 {
            out.emit(
                Location::Sheet(sheet.name.clone()),
                format!("{turned} cell(s) use rotated or shrink-to-fit text"),
            )
            .subcode = Some("text-effects");
        }
    }
}

type Attr = fn(&CellFormat) -> String;

const ATTRS: [(&str, Attr); 4] = [
    ("background", |f| {
        f.background_color.clone().unwrap_or_default()
    }),
    ("border", |f| f.border.any().to_string()),
    ("bold", |f| f.bold.to_string()),
    ("font color", |f| f.font_color.clone().unwrap_or_default()),
];

pub(super) fn indistinct(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for sheet in &ctx.workbook.sheets {
        let mut formulas = Vec::new();
        let mut constants = Vec::new();
        for (coord, cell) in sheet.populated() {
            match &cell.content {
                CellContent::Formula { .. } => formulas.push(&cell.format),
                CellContent::Number(_) => {
                    let addr = CellAddress::at(sheet.name.clone(), coord);
                    if ctx.graph.dependent_count(&addr) > 0 {
                        constants.push(&cell.format);
                    }
                }
                _ => {}
            }
        }
        if formulas.is_empty() || constants.is_empty() {
            continue;
        }
        let separated = ATTRS.iter().any(|(_, attr)| {
            let f: BTreeSet<String> = formulas.iter().map(|x| attr(x)).collect();
            let c: BTreeSet<String> = constants.iter().map(|x| attr(x)).collect();
            f.is_disjoint(&c)
        });
        if !separated {
            out.emit(
                Location::Sheet(sheet.name.clone()),
                format!(
                    "{} formula(s) and {} constant(s) share the same formatting; no fill, border, bold or font color tells them apart",
                    formulas.len(),
                    constants.len()
                ),
            );
        }
    }
}

/// Characters per unit of column width when estimating rendered length.
const CHARS_PER_WIDTH_UNIT: f64 = 1.0;

pub(super) fn label_overlap(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for sheet in &ctx.workbook.sheets {
        for (coord, cell) in sheet.populated() {
            let CellContent::Text(text) = &cell.content else {
                continue;
            };
            let width = sheet.column_width(coord.col);
            let needed = text.chars().count() as f64 / CHARS_PER_WIDTH_UNIT;
            if needed <= width {
                continue;
            }
            let right = crate::model::Coord::new(coord.row, coord.col + 1);
            // a populated neighbour, including one holding only spaces, cuts the label off
            let blocked = !sheet.content(right).is_empty();
            if blocked {
                let d = out.emit(
                    Location::Cell(CellAddress::at(sheet.name.clone(), coord)),
                    format!(
                        "label needs about {needed:.0} characters but column {} is {width:.2} wide and the next cell is occupied",
                        col_to_letters(coord.col)
                    ),
                );
                d.related = vec![CellAddress::at(sheet.name.clone(), right)];
            }
        }
    }
}

pub(super) fn column_widths(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    let tol = ctx.config.column_width_tolerance;
    for sheet in &ctx.workbook.sheets {
        let Some(ext) = content_extent(sheet) else {
            continue;
        };
        let cols: Vec<(u32, f64)> = (2..=ext.col)
            .filter(|c| !sheet.hidden_columns.contains(c))
            .map(|c| (c, sheet.column_width(c)))
            .collect();
        if cols.len() < 2 {
            continue;
        }
        let mut widths: Vec<f64> = cols.iter().map(|(_, w)| *w).collect();
        widths.sort_by(f64::total_cmp);
        let mid = widths.len() / 2;
        let median = if widths.len().is_multiple_of(2) {
            (widths[mid - 1] + widths[mid]) / 2.0
        } else {
            widths[mid]
        };
        let off: Vec<String> = cols
            .iter()
            .filter(|(_, w)| median > 0.0 && (w - median).abs() / median > tol)
            .map(|(c, w)| format!("{}={w}", col_to_letters(*c)))
            .collect();
        if !off.is_empty() {
            out.emit(
                Location::Sheet(sheet.name.clone()),
                format!(
                    "column widths differ from the median {median:.2} by more than {:.0}%: {}",
                    tol * 100.0,
                    off.join(", ")
                ),
            );
        }
    }
}
