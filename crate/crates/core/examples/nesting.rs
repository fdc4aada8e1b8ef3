//! Fold single-use formulas into their dependents until none is left and
//! report how many numeric cells disappear.
//!
//! cargo run --example nesting -- [workbook] [bottom-line]

use std::path::PathBuf;

use sheetlint::io::load;
use sheetlint::model::{CellAddress, Coord};
use sheetlint::{nest_all, AuditConfig};

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/assign_v4.wb"));
    let bottom = args.next().unwrap_or_else(|| "C51".to_string());
    let wb = load(&path, None).expect("load workbook");
    let mut config = AuditConfig::default();
    config.set("bottom_line", &bottom).expect("bottom line");

    let outcome = nest_all(&wb, &config);
    for step in &outcome.applied {
        println!(
            "{} into {}: {}",
            step.source.print_a1(),
            step.target.print_a1(),
            step.formula
        );
    }
    println!(
        "numeric cells {} -> {} ({} removed)",
        outcome.numeric_before,
        outcome.numeric_after,
        outcome.cells_removed()
    );
    if let Ok(c) = Coord::parse(bottom.rsplit('!').next().unwrap_or(&bottom)) {
        let sheet = &outcome.workbook.sheets[0].name;
        let addr = CellAddress::at(sheet.clone(), c);
        if let Some(ast) = outcome.workbook.content(&addr).formula_ast() {
            println!(
                "{} = {}",
                addr.print_a1(),
                sheetlint::formula::print_formula(ast)
            );
        }
    }
}
