mod common;

use std::process::{Command, Output};

use common::fixture;

fn sheetlint(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sheetlint"))
        .args(args)
        .output()
        .expect("run sheetlint")
}

fn path(name: &str) -> String {
    fixture(name).display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn exit_codes() {
    assert_eq!(sheetlint(&[&path("clean.wb")]).status.code(), Some(0));
    assert_eq!(sheetlint(&[&path("defect.wb")]).status.code(), Some(1));
    assert_eq!(sheetlint(&[&path("corrupt.xlsx")]).status.code(), Some(2));
    assert_eq!(sheetlint(&["/nonexistent.wb"]).status.code(), Some(2));
    assert_eq!(sheetlint(&[]).status.code(), Some(2));
    assert_eq!(
        sheetlint(&["--format", "yaml", &path("clean.wb")])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(sheetlint(&["--help"]).status.code(), Some(0));
    assert_eq!(sheetlint(&["--version"]).status.code(), Some(0));
}

#[test]
fn one_failing_input_fails_the_run() {
    let o = sheetlint(&[&path("clean.wb"), &path("corrupt.xlsx")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("corrupt.xlsx"));
}

#[test]
fn text_report_layout() {
    let o = sheetlint(&[&path("defect.wb")]);
    let text = stdout(&o);
    assert!(
        text.contains("Budget!B1 [R01 error] backward reference"),
        "{text}"
    );
    assert!(
        text.contains("Budget!B5 [R04 warning] spurious cell"),
        "{text}"
    );
    assert!(text.contains("1 error(s)"));
    assert!(text.contains("score 47.5/100"));
    assert!(text.contains("by rule: R01=1 R04=1 R07=1 R23=1"));
}

#[test]
fn severity_threshold_controls_exit_code() {
    let defect = path("defect.wb");
    let errors_only = sheetlint(&["--severity-threshold", "error", &defect]);
    assert_eq!(errors_only.status.code(), Some(1));
    let without_r01 = sheetlint(&[
        "--severity-threshold",
        "error",
        "--rules",
        "R04,R07",
        &defect,
    ]);
    assert_eq!(without_r01.status.code(), Some(0));
    let info = sheetlint(&["--severity-threshold", "info", &path("clean.wb")]);
    assert!(matches!(info.status.code(), Some(0 | 1)));
}

#[test]
fn rules_filter_and_unknown_rule() {
    let o = sheetlint(&["--rules", "R04", &path("defect.wb")]);
    let text = stdout(&o);
    assert!(text.contains("[R04 "));
    assert!(!text.contains("[R01 "));
    assert_eq!(
        sheetlint(&["--rules", "R99", &path("defect.wb")])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn config_file_applies_and_bad_config_fails() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.cfg");
    std::fs::write(&good, "# quieter\nenabled = R07\nseverity.R07 = info\n").unwrap();
    let o = sheetlint(&["--config", good.to_str().unwrap(), &path("defect.wb")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("[R07 info]"));

    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "long_arc_distance = -3\n").unwrap();
    let o = sheetlint(&["--config", bad.to_str().unwrap(), &path("defect.wb")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.cfg"));
}

#[test]
fn bottom_line_option() {
    let o = sheetlint(&[
        "--rules",
        "R05",
        "--bottom-line",
        "Model!C51",
        &path("assign_v4.wb"),
    ]);
    let text = stdout(&o);
    let cells: Vec<&str> = text
        .lines()
        .filter(|l| l.contains("[R05 "))
        .map(|l| l.split(' ').next().unwrap())
        .collect();
    assert_eq!(cells, ["Model!J44", "Model!J46", "Model!J48"]);

    let o = sheetlint(&["--bottom-line", "Nowhere!Z99", &path("clean.wb")]);
    assert!(stdout(&o).contains("note: bottom line `Nowhere!Z99` matched no cell"));
}

#[test]
fn json_output_forms() {
    let one: serde_json::Value = serde_json::from_str(&stdout(&sheetlint(&[
        "--format",
        "json",
        &path("defect.wb"),
    ])))
    .unwrap();
    assert_eq!(one["tool"], "sheetlint");
    assert_eq!(one["score"]["errors"], 1);

    let many: serde_json::Value = serde_json::from_str(&stdout(&sheetlint(&[
        "--format",
        "json",
        &path("defect.wb"),
        &path("clean.wb"),
    ])))
    .unwrap();
    let inputs: Vec<&str> = many
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["input"].as_str().unwrap())
        .collect();
    assert!(inputs[0].ends_with("defect.wb") && inputs[1].ends_with("clean.wb"));
}

#[test]
fn dot_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("graph.dot");
    let o = sheetlint(&[
        "--format",
        "dot",
        "--output",
        out.to_str().unwrap(),
        &path("defect.wb"),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    let dot = std::fs::read_to_string(&out).unwrap();
    assert!(dot.starts_with("digraph"));
    assert!(dot.contains("Budget_B3"));
}

#[test]
fn input_format_override() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("model.xlsx");
    std::fs::copy(fixture("clean.wb"), &p).unwrap();
    let p = p.to_str().unwrap();
    assert_eq!(sheetlint(&[p]).status.code(), Some(2));
    assert_eq!(
        sheetlint(&["--input-format", "text", p]).status.code(),
        Some(0)
    );
}
