//! Sheet-level layout rules.

use super::{AuditContext, Emitter, Location};
use crate::layout::{Relic, RunDirection, Stacking};
use crate::model::{CellAddress, Coord};

fn extent(c: Option<Coord>) -> String {
    c.map_or_else(|| "nothing".to_string(), |c| c.a1())
}

pub(super) fn relics(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for layout in ctx.layouts {
        let r = &layout.relics;
        if !r.has_relics() {
            continue;
        }
        let (mut cells, mut cols, mut rows) = (0, 0, 0);
        for relic in &r.relics {
            match relic {
                Relic::Cell(_) => cells += 1,
                Relic::Column(_) => cols += 1,
                Relic::Row(_) => rows += 1,
            }
        }
        let d = out.emit(
            Location::Sheet(layout.sheet.clone()),
            format!(
                "relics: content extent {} but declared extent {}; {} format-only cell(s), {} column width(s), {} row height(s) beyond the content",
                extent(r.content_extent),
                extent(r.declared_extent),
                cells,
                cols,
                rows
            ),
        );
        d.related = r
            .relics
            .iter()
            .filter_map(|x| match x {
                Relic::Cell(c) => Some(CellAddress::at(layout.sheet.clone(), *c)),
                _ => None,
            })
            .collect();
    }
}

pub(super) fn bulletin_board(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for layout in ctx.layouts {
        if layout.stacking.stacking != Stacking::BulletinBoard {
            continue;
        }
        let pairs: Vec<String> = layout
            .stacking
            .offending
            .iter()
            .map(|&(a, b)| {
                let (a, b) = (layout.block_corners[a], layout.block_corners[b]);
                format!("{}:{} / {}:{}", a.0, a.1, b.0, b.1)
            })
            .collect();
        out.emit(
            Location::Sheet(layout.sheet.clone()),
            format!(
                "bulletin-board layout: blocks offset both down and across ({})",
                pairs.join("; ")
            ),
        );
    }
}

pub(super) fn copy_pattern(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for layout in ctx.layouts {
        for run in &layout.copy_runs {
            let dir = match run.direction {
                RunDirection::Horizontal => "row",
                RunDirection::Vertical => "column",
            };
            for b in &run.breaks {
                let d = out.emit(
                    Location::Cell(CellAddress::at(layout.sheet.clone(), *b)),
                    format!(
                        "breaks the copy pattern of {dir} run {}:{} (expected {})",
                        run.start, run.end, run.majority
                    ),
                );
                d.related = vec![CellAddress::at(layout.sheet.clone(), run.start)];
            }
        }
    }
}

pub(super) fn blank_space(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    for layout in ctx.layouts {
        if let Some(ratio) = layout.blank_ratio {
            if ratio > ctx.config.blank_ratio_warn {
                out.emit(
                    Location::Sheet(layout.sheet.clone()),
                    format!(
                        "{:.0}% of the content area is blank (limit {:.0}%)",
                        ratio * 100.0,
                        ctx.config.blank_ratio_warn * 100.0
                    ),
                );
            }
        }
    }
}

pub(super) fn sheet_count(ctx: &AuditContext<'_>, out: &mut Emitter<'_>) {
    let populated: Vec<&str> = ctx
        .workbook
        .sheets
        .iter()
        .filter(|s| s.is_populated())
        .map(|s| s.name.as_str())
        .collect();
    if populated.len() > 1 {
        out.emit(
            Location::Workbook,
            format!(
                "{} populated sheets: {}",
                populated.len(),
                populated.join(", ")
            ),
        );
    }
}
