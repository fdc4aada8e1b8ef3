mod common;

use std::io::Write;

use common::random_workbook;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::SeedableRng;
use sheetlint::config::AuditConfig;
use sheetlint::io::text::parse_text;
use sheetlint::io::{load, InputFormat, LoadError};
use sheetlint::model::{CellContent, Workbook};
use sheetlint::rules::rule_info;
use zip::write::SimpleFileOptions;

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// The workbook as a minimal `.xlsx` package.
fn to_xlsx(wb: &Workbook) -> Vec<u8> {
    let mut sheets = String::new();
    let mut rels = String::new();
    let mut parts = Vec::new();
    for (i, sheet) in wb.sheets.iter().enumerate() {
        let n = i + 1;
        sheets.push_str(&format!(
            r#"<sheet name="{}" sheetId="{n}" r:id="rId{n}"/>"#,
            xml_escape(&sheet.name)
        ));
        rels.push_str(&format!(
            r#"<Relationship Id="rId{n}" Type="worksheet" Target="worksheets/sheet{n}.xml"/>"#
        ));
        let mut data = String::from("<worksheet><sheetData>");
        let mut row = 0;
        for (coord, cell) in &sheet.cells {
            if coord.row != row {
                if row != 0 {
                    data.push_str("</row>");
                }
                row = coord.row;
                data.push_str(&format!(r#"<row r="{row}">"#));
            }
            let r = coord.a1();
            match &cell.content {
                CellContent::Number(v) => data.push_str(&format!(r#"<c r="{r}"><v>{v}</v></c>"#)),
                CellContent::Text(t) => data.push_str(&format!(
                    r#"<c r="{r}" t="inlineStr"><is><t xml:space="preserve">{}</t></is></c>"#,
                    xml_escape(t)
                )),
                CellContent::Formula { text, .. } => data.push_str(&format!(
                    r#"<c r="{r}"><f>{}</f></c>"#,
                    xml_escape(text.trim_start_matches('='))
                )),
                other => panic!("unexpected {other:?}"),
            }
        }
        if row != 0 {
            data.push_str("</row>");
        }
        data.push_str("</sheetData></worksheet>");
        parts.push((format!("xl/worksheets/sheet{n}.xml"), data));
    }
    parts.push((
        "xl/workbook.xml".into(),
        format!(
            r#"<workbook xmlns:r="http://schemas.openxmlformats.org/officeDocument/2006/relationships"><sheets>{sheets}</sheets></workbook>"#
        ),
    ));
    parts.push((
        "xl/_rels/workbook.xml.rels".into(),
        format!(r#"<Relationships>{rels}</Relationships>"#),
    ));

    let mut buf = std::io::Cursor::new(Vec::new());
    let mut w = zip::ZipWriter::new(&mut buf);
    for (name, body) in parts {
        w.start_file(name, SimpleFileOptions::default()).unwrap();
        w.write_all(body.as_bytes()).unwrap();
    }
    w.finish().unwrap();
    buf.into_inner()
}

/// The workbook in the plain-text fixture format.
fn to_text(wb: &Workbook) -> String {
    let mut out = String::new();
    for sheet in &wb.sheets {
        out.push_str(&format!("[sheet {}]\n", sheet.name));
        for (coord, cell) in &sheet.cells {
            let a1 = coord.a1();
            match &cell.content {
                CellContent::Number(v) => out.push_str(&format!("{a1} num {v}\n")),
                CellContent::Text(t) => out.push_str(&format!("{a1} label {t}\n")),
                CellContent::Formula { text, .. } => {
                    out.push_str(&format!("{a1} formula {text}\n"))
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }
    out
}

fn same_contents(a: &Workbook, b: &Workbook) -> Result<(), String> {
    if a.sheets.len() != b.sheets.len() {
        return Err(format!("{} vs {} sheets", a.sheets.len(), b.sheets.len()));
    }
    for (x, y) in a.sheets.iter().zip(&b.sheets) {
        if x.name != y.name {
            return Err(format!("sheet {} vs {}", x.name, y.name));
        }
        let keys: Vec<_> = x.cells.keys().collect();
        if keys != y.cells.keys().collect::<Vec<_>>() {
            return Err(format!("{}: different populated cells", x.name));
        }
        for (coord, cell) in &x.cells {
            let other = &y.cells[coord].content;
            let same = match (&cell.content, other) {
                (
                    CellContent::Formula { ast: Some(p), .. },
                    CellContent::Formula { ast: Some(q), .. },
                ) => p.structurally_eq(q),
                (p, q) => p == q,
            };
            if !same {
                return Err(format!(
                    "{}!{}: {:?} vs {other:?}",
                    x.name,
                    coord.a1(),
                    cell.content
                ));
            }
        }
    }
    Ok(())
}

/// Diagnostics from rules that do not read formatting.
fn content_diagnostics(wb: &Workbook) -> Vec<(String, String, String)> {
    let a = sheetlint::analyze(wb, &AuditConfig::default(), "w");
    a.report
        .diagnostics
        .iter()
        .filter(|d| !rule_info(d.rule_id).unwrap().needs_format)
        .map(|d| {
            (
                d.rule_id.to_string(),
                d.location.to_string(),
                d.message.clone(),
            )
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn text_and_xlsx_loaders_agree(seed in any::<u64>()) {
        let wb = random_workbook(&mut StdRng::seed_from_u64(seed)).workbook;
        let dir = tempfile::tempdir().unwrap();

        let text_path = dir.path().join("model.wb");
        std::fs::write(&text_path, to_text(&wb)).unwrap();
        let from_text = load(&text_path, None).unwrap();
        prop_assert_eq!(same_contents(&wb, &from_text), Ok(()));

        let xlsx_path = dir.path().join("model.xlsx");
        std::fs::write(&xlsx_path, to_xlsx(&wb)).unwrap();
        let from_xlsx = load(&xlsx_path, None).unwrap();
        prop_assert_eq!(same_contents(&wb, &from_xlsx), Ok(()));
        prop_assert!(from_xlsx.notices.is_empty(), "{:?}", from_xlsx.notices);
        prop_assert_eq!(content_diagnostics(&from_text), content_diagnostics(&from_xlsx));
    }
}

#[test]
fn format_override_and_detection() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("book.data");
    std::fs::write(&path, "[sheet S]\nA1 num 1\nA2 formula =A1*2\n").unwrap();
    assert_eq!(InputFormat::from_path(&path), InputFormat::Text);
    assert_eq!(
        InputFormat::from_path(std::path::Path::new("x.XLSX")),
        InputFormat::Xlsx
    );
    assert_eq!("xlsx".parse::<InputFormat>(), Ok(InputFormat::Xlsx));
    assert!(load(&path, Some(InputFormat::Xlsx)).is_err());
    assert_eq!(
        load(&path, Some(InputFormat::Text)).unwrap().sheets[0]
            .cells
            .len(),
        2
    );
}

#[test]
fn text_errors_point_at_the_line() {
    let err = parse_text("[sheet S]\nA1 num 1\nA2 formula =SUM(A1\n", "bad.wb").unwrap_err();
    match &err {
        LoadError::Syntax { path, line, .. } => assert_eq!((path.as_str(), *line), ("bad.wb", 3)),
        other => panic!("{other:?}"),
    }
    assert!(err.to_string().starts_with("bad.wb:3:"));
    assert!(parse_text("A1 num 1\n", "x.wb").is_err());
    assert!(parse_text("[sheet S]\nA1 num 1\nA1 num 2\n", "x.wb").is_err());
}

#[test]
fn missing_and_corrupt_files_are_load_errors() {
    let missing = load(std::path::Path::new("/nonexistent/model.wb"), None).unwrap_err();
    assert!(matches!(missing, LoadError::File { .. }));
    let corrupt = load(&common::fixture("corrupt.xlsx"), None).unwrap_err();
    assert!(corrupt.to_string().contains("corrupt.xlsx"));
}
