//! Geometry of a sheet: blocks, stacking, relics, copy runs, blank space.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::formula::to_r1c1;
use crate::model::{content_box, content_extent, CellContent, Coord, Sheet};

/// Connected group of populated cells (8-adjacency).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub id: usize,
    pub top_left: Coord,
    pub bottom_right: Coord,
    pub members: Vec<Coord>,
    pub labels: usize,
    pub constants: usize,
    pub formulas: usize,
}

impl Block {
    fn rows(&self) -> (u32, u32) {
        (self.top_left.row, self.bottom_right.row)
    }

    fn cols(&self) -> (u32, u32) {
        (self.top_left.col, self.bottom_right.col)
    }
}

pub fn detect_blocks(sheet: &Sheet) -> Vec<Block> {
    let populated: BTreeSet<Coord> = sheet.populated().map(|(c, _)| c).collect();
    let mut seen: BTreeSet<Coord> = BTreeSet::new();
    let mut blocks = Vec::new();
    for &start in &populated {
        if !seen.insert(start) {
            continue;
        }
        let mut members = Vec::new();
        let mut queue = VecDeque::from([start]);
        while let Some(c) = queue.pop_front() {
            members.push(c);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (r, col) = (i64::from(c.row) + dr, i64::from(c.col) + dc);
                    if r < 1 || col < 1 {
                        continue;
                    }
                    let n = Coord::new(r as u32, col as u32);
                    if populated.contains(&n) && seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
        }
        members.sort();
        let top_left = Coord::new(
            members.iter().map(|c| c.row).min().unwrap_or(1),
            members.iter().map(|c| c.col).min().unwrap_or(1),
        );
        let bottom_right = Coord::new(
            members.iter().map(|c| c.row).max().unwrap_or(1),
            members.iter().map(|c| c.col).max().unwrap_or(1),
        );
        let (mut labels, mut constants, mut formulas) = (0, 0, 0);
        for m in &members {
            match sheet.content(*m) {
                CellContent::Formula { .. } => formulas += 1,
                CellContent::Number(_) => constants += 1,
                _ => labels += 1,
            }
        }
        blocks.push(Block {
            id: 0,
            top_left,
            bottom_right,
            members,
            labels,
            constants,
            formulas,
        });
    }
    blocks.sort_by_key(|b| (b.top_left, b.bottom_right));
    for (i, b) in blocks.iter_mut().enumerate() {
        b.id = i;
    }
    blocks
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stacking {
    Single,
    Vertical,
    Horizontal,
    BulletinBoard,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StackingReport {
    pub stacking: Stacking,
    /// Block id pairs that share neither rows nor columns.
    pub offending: Vec<(usize, usize)>,
}

fn overlaps(a: (u32, u32), b: (u32, u32)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Classifies how blocks are arranged. A pair sharing columns is stacked
/// vertically, a pair sharing rows horizontally; a pair sharing neither is
/// offset both down and across and makes the layout a bulletin board.
/// Blocks holding only labels (titles, headers) take no part.
pub fn bulletin_board_score(blocks: &[Block]) -> StackingReport {
    let blocks: Vec<&Block> = blocks
        .iter()
        .filter(|b| b.constants + b.formulas > 0)
        .collect();
    if blocks.len() <= 1 {
        return StackingReport {
            stacking: Stacking::Single,
            offending: Vec::new(),
        };
    }
    let (mut vertical, mut horizontal) = (0usize, 0usize);
    let mut offending = Vec::new();
    for (i, a) in blocks.iter().enumerate() {
        for b in &blocks[i + 1..] {
            let rows = overlaps(a.rows(), b.rows());
            let cols = overlaps(a.cols(), b.cols());
            match (rows, cols) {
                (false, true) => vertical += 1,
                (true, false) => horizontal += 1,
                (false, false) => offending.push((a.id.min(b.id), a.id.max(b.id))),
                // overlapping bounding boxes: nested blocks, no direction
                (true, true) => {}
            }
        }
    }
    offending.sort_unstable();
    let stacking = if !offending.is_empty() {
        Stacking::BulletinBoard
    } else if vertical >= horizontal {
        Stacking::Vertical
    } else {
        Stacking::Horizontal
    };
    StackingReport {
        stacking,
        offending,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", content = "at", rename_all = "snake_case")]
pub enum Relic {
    /// Format-only cell beyond the content extent.
    Cell(Coord),
    /// Column with an explicit width beyond the content extent.
    Column(u32),
    /// Row with an explicit height beyond the content extent.
    Row(u32),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelicReport {
    pub declared_extent: Option<Coord>,
    pub content_extent: Option<Coord>,
    pub relics: Vec<Relic>,
    pub relic_area: usize,
}

impl RelicReport {
    pub fn has_relics(&self) -> bool {
        self.relic_area > 0 || self.declared_extent != self.content_extent
    }
}

pub fn relic_scan(sheet: &Sheet) -> RelicReport {
    let content = content_extent(sheet);
    let (max_row, max_col) = content.map_or((0, 0), |c| (c.row, c.col));
    let mut relics: Vec<Relic> = sheet
        .cells
        .iter()
        .filter(|(c, cell)| cell.is_format_only() && (c.row > max_row || c.col > max_col))
        .map(|(c, _)| Relic::Cell(*c))
        .collect();
    relics.extend(
        sheet
            .column_widths
            .keys()
            .filter(|&&c| c > max_col)
            .map(|&c| Relic::Column(c)),
    );
    relics.extend(
        sheet
            .row_heights
            .keys()
            .filter(|&&r| r > max_row)
            .map(|&r| Relic::Row(r)),
    );
    relics.sort();
    RelicReport {
        declared_extent: sheet.declared_extent.or(content),
        content_extent: content,
        relic_area: relics.len(),
        relics,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunDirection {
    Horizontal,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CopyRun {
    pub start: Coord,
    pub end: Coord,
    pub direction: RunDirection,
    /// Majority R1C1 form of the run.
    pub majority: String,
    pub breaks: Vec<Coord>,
}

/// Maximal rows/columns of at least `min_len` adjacent formula cells whose
/// R1C1 forms disagree with the run's majority.
pub fn copy_pattern_breaks(sheet: &Sheet, min_len: usize) -> Vec<CopyRun> {
    let forms: BTreeMap<Coord, String> = sheet
        .cells
        .iter()
        .filter_map(|(c, cell)| match &cell.content {
            CellContent::Formula { ast: Some(ast), .. } => Some((*c, to_r1c1(ast, *c))),
            CellContent::Formula { text, .. } => Some((*c, text.clone())),
            _ => None,
        })
        .collect();
    let mut runs = Vec::new();
    for direction in [RunDirection::Horizontal, RunDirection::Vertical] {
        let step = |c: Coord| match direction {
            RunDirection::Horizontal => Coord::new(c.row, c.col + 1),
            RunDirection::Vertical => Coord::new(c.row + 1, c.col),
        };
        let back = |c: Coord| match direction {
            RunDirection::Horizontal => (c.col > 1).then(|| Coord::new(c.row, c.col - 1)),
            RunDirection::Vertical => (c.row > 1).then(|| Coord::new(c.row - 1, c.col)),
        };
        for &start in forms.keys() {
            if back(start).is_some_and(|p| forms.contains_key(&p)) {
                continue;
            }
            let mut cells = vec![start];
            let mut cur = start;
            while forms.contains_key(&step(cur)) {
                cur = step(cur);
                cells.push(cur);
            }
            if cells.len() < min_len {
                continue;
            }
            let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
            for c in &cells {
                *counts.entry(forms[c].as_str()).or_default() += 1;
            }
            let top = counts.values().copied().max().unwrap_or(0);
            let leaders: Vec<&str> = counts
                .iter()
                .filter(|(_, &n)| n == top)
                .map(|(f, _)| *f)
                .collect();
            // no evidence of an intended pattern without a clear majority
            if top < 2 || leaders.len() > 1 {
                continue;
            }
            let majority = leaders[0].to_string();
            let breaks: Vec<Coord> = cells
                .iter()
                .filter(|c| forms[c] != majority)
                .copied()
                .collect();
            runs.push(CopyRun {
                start,
                end: cur,
                direction,
                majority,
                breaks,
            });
        }
    }
    runs
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("sheet `{0}` has no content")]
pub struct EmptySheet(pub String);

/// Blank cells inside the content bounding box over its area.
pub fn blank_space_ratio(sheet: &Sheet) -> Result<f64, EmptySheet> {
    let (lo, hi) = content_box(sheet).ok_or_else(|| EmptySheet(sheet.name.clone()))?;
    let area = u64::from(hi.row - lo.row + 1) * u64::from(hi.col - lo.col + 1);
    let filled = sheet.populated().count() as u64;
    Ok((area - filled) as f64 / area as f64)
}
