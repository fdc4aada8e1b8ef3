//! Simplify formulas and check each rewrite by random evaluation.
//!
//! cargo run --example simplify -- "=(C7/A8)*A7"

use sheetlint::formula::parse_formula;
use sheetlint::model::CellAddress;
use sheetlint::simplify::simplify;

fn main() {
    let inputs: Vec<String> = std::env::args().skip(1).collect();
    let inputs = if inputs.is_empty() {
        vec![
            "=C6*(A4) + A6*C6 + ((C6*A5))".to_string(),
            "=(C7/A8)*A7".into(),
            "=(B1+B2+B3+B4)".into(),
            "=A1+A2".into(),
        ]
    } else {
        inputs
    };
    let host = CellAddress::new("Sheet1", 20, 10);
    for text in &inputs {
        let ast = match parse_formula(text) {
            Ok(a) => a,
            Err(e) => {
                println!("{text}: {e}");
                continue;
            }
        };
        match simplify(&ast, &host) {
            Some(s) => {
                let kinds: Vec<String> = s.kinds.iter().map(|k| format!("{k:?}")).collect();
                println!(
                    "{} -> {}  [{}; verified {}; {} chars saved]",
                    s.original,
                    s.suggested,
                    kinds.join(", "),
                    s.verified,
                    s.char_delta
                );
            }
            None => println!("{text}: already simple"),
        }
    }
}
