//! Write the precedence graph of a workbook as Graphviz DOT.
//!
//! cargo run --example dot_export -- [workbook] > graph.dot

use std::path::PathBuf;

use sheetlint::graph::{build_graph, classify_graph, export_dot};
use sheetlint::io::load;
use sheetlint::AuditConfig;

fn main() {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/assign_v2.wb"));
    let wb = load(&path, None).expect("load workbook");
    let graph = build_graph(&wb);
    let classes = classify_graph(&graph, &AuditConfig::default().anchor_options());
    print!("{}", export_dot(&graph, &classes));
}
