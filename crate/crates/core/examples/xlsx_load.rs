//! Load an .xlsx file and summarize what was read. Without an argument a
//! small package is assembled in memory first.
//!
//! cargo run --example xlsx_load -- [book.xlsx]

use std::io::{Cursor, Write};

use sheetlint::io::xlsx::{load_xlsx, read_xlsx};
use sheetlint::model::Workbook;
use zip::write::SimpleFileOptions;

fn demo_package() -> Vec<u8> {
    let parts = [
        (
            "xl/workbook.xml",
            r#"<workbook xmlns:r="r"><sheets><sheet name="Loan" sheetId="1" r:id="rId1"/></sheets><definedNames><definedName name="Payment">Loan!$B$3</definedName></definedNames></workbook>"#,
        ),
        (
            "xl/_rels/workbook.xml.rels",
            r#"<Relationships><Relationship Id="rId1" Target="worksheets/sheet1.xml"/></Relationships>"#,
        ),
        (
            "xl/sharedStrings.xml",
            r#"<sst><si><t>Principal</t></si><si><t>Years</t></si></sst>"#,
        ),
        (
            "xl/worksheets/sheet1.xml",
            r#"<worksheet><dimension ref="A1:B3"/><sheetData><row r="1"><c r="A1" t="s"><v>0</v></c><c r="B1"><v>200000</v></c></row><row r="2"><c r="A2" t="s"><v>1</v></c><c r="B2"><v>30</v></c></row><row r="3"><c r="B3"><f>PMT(0.07,B2,B1)</f></c></row></sheetData></worksheet>"#,
        ),
    ];
    let mut buf = Cursor::new(Vec::new());
    let mut w = zip::ZipWriter::new(&mut buf);
    for (name, body) in parts {
        w.start_file(name, SimpleFileOptions::default())
            .expect("zip entry");
        w.write_all(body.as_bytes()).expect("zip write");
    }
    w.finish().expect("zip finish");
    buf.into_inner()
}

fn summarize(wb: &Workbook) {
    for sheet in &wb.sheets {
        println!(
            "{}: {} cell(s), declared extent {:?}{}",
            sheet.name,
            sheet.cells.len(),
            sheet.declared_extent.map(|c| c.a1()),
            if sheet.hidden { " (hidden)" } else { "" }
        );
        for (coord, cell) in sheet.populated() {
            println!("  {coord}: {:?}", cell.content);
        }
    }
    for (name, target) in &wb.defined_names {
        println!("name {name} -> {target}");
    }
    for n in &wb.notices {
        println!("notice: {n}");
    }
}

fn main() {
    let wb = match std::env::args().nth(1) {
        Some(p) => load_xlsx(p.as_ref()).unwrap_or_else(|e| panic!("{e}")),
        None => read_xlsx(Cursor::new(demo_package()), "demo.xlsx").expect("demo package"),
    };
    summarize(&wb);
}
