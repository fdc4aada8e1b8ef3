//! Full audit of a workbook with the text report and the JSON score block.
//!
//! cargo run --example audit_fixture -- [workbook] [bottom-line]

use std::path::PathBuf;

use sheetlint::io::load;
use sheetlint::report::render_text;
use sheetlint::{analyze, AuditConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/assign_v4.wb"));
    let mut config = AuditConfig::default();
    if let Some(bl) = args.next() {
        config.set("bottom_line", &bl).expect("bottom line");
    }
    let wb = load(&path, None).expect("load workbook");
    let analysis = analyze(&wb, &config, &path.display().to_string());
    print!("{}", render_text(&analysis.report));
    println!(
        "{}",
        serde_json::to_string_pretty(&analysis.report.score).expect("score serializes")
    );
}
