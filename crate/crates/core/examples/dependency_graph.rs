//! Build the dependency graph of a fixture, classify its cells and print
//! the precedence tree of the bottom line.
//!
//! cargo run --example dependency_graph -- [workbook] [bottom-line]

use std::path::PathBuf;

use sheetlint::graph::{build_graph, classify_graph, find_cycles, precedence_tree, TreeNode};
use sheetlint::io::load;
use sheetlint::AuditConfig;

fn print_tree(node: &TreeNode, indent: usize) {
    let len = node.arc_length.map_or("-".to_string(), |d| d.to_string());
    let mark = if node.cycle { " (cycle)" } else { "" };
    println!(
        "{:indent$}{} [arc {len}]{mark}",
        "",
        node.addr.print_a1(),
        indent = indent
    );
    for c in &node.children {
        print_tree(c, indent + 2);
    }
}

fn main() {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/defect.wb"));
    let wb = load(&path, None).expect("load workbook");
    let mut config = AuditConfig::default();
    if let Some(bl) = args.next() {
        config.set("bottom_line", &bl).expect("bottom line");
    }
    let graph = build_graph(&wb);
    let classes = classify_graph(&graph, &config.anchor_options());
    println!("{} nodes, {} arcs", graph.len(), graph.arc_count());
    for (addr, c) in &classes.classes {
        let mut flags = Vec::new();
        for (on, name) in [
            (c.spurious, "spurious"),
            (c.dangling, "dangling"),
            (c.perverse_target, "perverse-target"),
            (c.on_cycle, "on-cycle"),
            (c.bottom_line, "bottom-line"),
            (c.solver_constraint, "solver-constraint"),
            (c.unused_input, "unused-input"),
        ] {
            if on {
                flags.push(name);
            }
        }
        if !flags.is_empty() {
            println!("{:>12}  {}", addr.print_a1(), flags.join(", "));
        }
    }
    for cycle in find_cycles(&graph) {
        println!(
            "cycle: {}",
            cycle
                .iter()
                .map(|a| a.print_a1())
                .collect::<Vec<_>>()
                .join(" -> ")
        );
    }
    for root in &classes.bottom_line {
        println!("precedence tree of {}:", root.print_a1());
        print_tree(
            &precedence_tree(&graph, root, Some(2)).expect("root exists"),
            2,
        );
    }
}
