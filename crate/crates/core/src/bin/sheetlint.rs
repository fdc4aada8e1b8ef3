use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use sheetlint::config::{parse_rule_list, AuditConfig};
use sheetlint::io::{load, InputFormat};
use sheetlint::report::{render_dot, render_json, render_json_many, render_text};
use sheetlint::rules::Severity;
use sheetlint::{analyze, Analysis};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum OutputFormat {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Parser)]
#[command(
    name = "sheetlint",
    version,
    about = "Audit spreadsheet models for style defects"
)]
struct Args {
    /// Workbooks to audit (`.xlsx`, or the text format for any other extension).
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: OutputFormat,
    /// Flat `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Only run these rules, e.g. `R01,R05`.
    #[arg(long)]
    rules: Option<String>,
    /// Lowest severity that makes the exit code 1.
    #[arg(long, default_value = "warning")]
    severity_threshold: Severity,
    /// Bottom-line cells or names, e.g. `Model!C51,WBMAX`.
    #[arg(long)]
    bottom_line: Option<String>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Override format detection by extension.
    #[arg(long)]
    input_format: Option<InputFormat>,
}

fn fail(message: impl std::fmt::Display) -> ExitCode {
    eprintln!("sheetlint: {message}");
    ExitCode::from(2)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(2);
        }
    };

    let mut config = match &args.config {
        Some(p) => match AuditConfig::load(p) {
            Ok(c) => c,
            Err(e) => return fail(e),
        },
        None => AuditConfig::default(),
    };
    if let Some(list) = &args.rules {
        match parse_rule_list(list) {
            Ok(ids) => config.restrict(&ids),
            Err(e) => return fail(e),
        }
    }
    if let Some(bl) = &args.bottom_line {
        if let Err(e) = config.set("bottom_line", bl) {
            return fail(e);
        }
    }

    let results: Vec<Result<Analysis, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = args
            .inputs
            .iter()
            .map(|path| {
                let config = &config;
                scope.spawn(move || {
                    let wb = load(path, args.input_format).map_err(|e| e.to_string())?;
                    Ok(analyze(&wb, config, &path.display().to_string()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err("analysis panicked".into())))
            .collect()
    });

    let mut analyses = Vec::new();
    for r in results {
        match r {
            Ok(a) => analyses.push(a),
            Err(e) => return fail(e),
        }
    }

    let rendered = match args.format {
        OutputFormat::Text => analyses
            .iter()
            .map(|a| render_text(&a.report))
            .collect::<Vec<_>>()
            .join("\n"),
        OutputFormat::Json if analyses.len() == 1 => render_json(&analyses[0].report) + "\n",
        OutputFormat::Json => {
            render_json_many(&analyses.iter().map(|a| &a.report).collect::<Vec<_>>()) + "\n"
        }
        OutputFormat::Dot => analyses
            .iter()
            .map(|a| render_dot(&a.graph, &a.classes))
            .collect::<String>(),
    };
    let written = match &args.output {
        Some(p) => {
            std::fs::write(p, rendered).map_err(|e| format!("cannot write {}: {e}", p.display()))
        }
        None => std::io::stdout()
            .write_all(rendered.as_bytes())
            .map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        return fail(e);
    }

    let hit = analyses.iter().any(|a| {
        a.report
            .max_severity()
            .is_some_and(|s| s >= args.severity_threshold)
    });
    if hit {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
