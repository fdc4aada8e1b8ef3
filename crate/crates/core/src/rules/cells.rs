//! Rules that look at one cell's text at a time.

use super::{AuditContext, Emitter, Location};
use crate::model::{CellAddress, CellContent};

fn labels<'a>(ctx: &'a AuditContext<'_>) -> impl Iterator<Item = (CellAddress, &'a str)> {
    ctx.workbook.sheets.iter().flat_map(|s| {
        s.populated().filter_map(|(c, cell)| match &cell.content {
            CellContent::Text(t) => Some((CellAddress::at(s.name.clone(), c), t.as_str())),
            _ => None,
        })
    })
}

pub(super) fn all_caps(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for (addr, text) in labels(ctx) {
        let letters = text.chars().filter(|c| c.is_alphabetic()).count();
        if letters >= ctx.config.all_caps_min_len && !text.chars().any(char::is_lowercase) {
            out.emit(
                Location::Cell(addr),
                format!("label `{}` is all capitals", text.trim()),
            );
        }
    }
}

pub(super) fn leading_space(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for (addr, text) in labels(ctx) {
        let spaces = text.chars().take_while(|c| *c == ' ').count();
        if spaces > 0 && spaces < text.chars().count() {
            out.emit(
                Location::Cell(addr),
                format!(
                    "label `{}` starts with {spaces} space(s)",
                    text.trim_start()
                ),
            );
        }
    }
}

pub(super) fn label_formula(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for node in ctx.graph.nodes() {
        if node.formula.as_ref().is_some_and(|f| f.returns_text()) {
            out.emit(
                Location::Cell(node.addr.clone()),
                "formula computes a text label",
            );
        }
    }
}
