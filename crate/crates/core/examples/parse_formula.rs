//! Parse formulas, print them back canonically, show R1C1 form and
//! evaluate one against a small environment.
//!
//! cargo run --example parse_formula -- "=C6*(A4) + A6*C6 + ((C6*A5))"

use std::collections::HashMap;

use sheetlint::formula::{evaluate_in, extract_references, parse_formula, print_formula, to_r1c1};
use sheetlint::model::{CellAddress, Coord};

fn main() {
    let inputs: Vec<String> = std::env::args().skip(1).collect();
    let inputs = if inputs.is_empty() {
        vec![
            "=C6*(A4) + A6*C6 + ((C6*A5))".to_string(),
            "=-2^2".into(),
            "=PMT(0.07,B6,B5)".into(),
        ]
    } else {
        inputs
    };
    for text in &inputs {
        match parse_formula(text) {
            Ok(ast) => {
                println!("{text}");
                println!("  canonical: {}", print_formula(&ast));
                println!("  R1C1 at E10: {}", to_r1c1(&ast, Coord::new(10, 5)));
                let refs: Vec<String> = extract_references(&ast)
                    .iter()
                    .map(|r| format!("{:?}", r.target))
                    .collect();
                println!("  references: {}", refs.len());
                let mut env = HashMap::new();
                for (name, v) in [("A4", 1.0), ("A5", 2.0), ("A6", 3.0), ("C6", 10.0)] {
                    let c = Coord::parse(name).unwrap();
                    env.insert(CellAddress::at("Sheet1", c), v);
                }
                match evaluate_in(&ast, "Sheet1", &env) {
                    Ok(v) => println!("  value: {v}"),
                    Err(e) => println!("  value: {e}"),
                }
            }
            Err(e) => println!("{text}\n  error: {e}"),
        }
    }
}
