//! Layout analysis: blocks, stacking, relics, copy-pattern breaks and
//! blank space for each sheet.
//!
//! cargo run --example layout -- [workbook]

use std::path::PathBuf;

use sheetlint::io::load;
use sheetlint::layout::{
    blank_space_ratio, bulletin_board_score, copy_pattern_breaks, detect_blocks, relic_scan,
};

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/relic.wb"));
    let wb = load(&path, None).expect("load workbook");
    for sheet in &wb.sheets {
        println!("[{}]", sheet.name);
        let blocks = detect_blocks(sheet);
        for b in &blocks {
            println!(
                "  block {}: {}:{} ({} labels, {} constants, {} formulas)",
                b.id, b.top_left, b.bottom_right, b.labels, b.constants, b.formulas
            );
        }
        println!("  stacking: {:?}", bulletin_board_score(&blocks).stacking);
        let relics = relic_scan(sheet);
        println!(
            "  content extent {:?}, declared extent {:?}, {} relic(s)",
            relics.content_extent.map(|c| c.a1()),
            relics.declared_extent.map(|c| c.a1()),
            relics.relic_area
        );
        for run in copy_pattern_breaks(sheet, 3) {
            println!("  run {}:{} breaks at {:?}", run.start, run.end, run.breaks);
        }
        match blank_space_ratio(sheet) {
            Ok(r) => println!("  blank space {:.0}%", r * 100.0),
            Err(e) => println!("  blank space: {e}"),
        }
    }
}
