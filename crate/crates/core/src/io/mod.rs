//! Workbook loaders.

pub mod text;
pub mod xlsx;

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::model::Workbook;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    /// Problem at a position in a text workbook.
    #[error("{path}:{line}:{col}: {message}")]
    Syntax {
        path: String,
        line: usize,
        col: usize,
        message: String,
    },
    /// Problem with the file as a whole or one of its parts.
    #[error("{path}: {message}")]
    File { path: String, message: String },
}

impl LoadError {
    pub(crate) fn file(path: &str, message: impl Into<String>) -> Self {
        LoadError::File {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputFormat {
    Text,
    Xlsx,
}

impl FromStr for InputFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "wb" => Ok(InputFormat::Text),
            "xlsx" => Ok(InputFormat::Xlsx),
            other => Err(format!(
                "unknown input format `{other}` (expected text or xlsx)"
            )),
        }
    }
}

impl InputFormat {
    /// `.xlsx`/`.xlsm` are xlsx; anything else is the text format.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("xlsx") || e.eq_ignore_ascii_case("xlsm") => {
                InputFormat::Xlsx
            }
            _ => InputFormat::Text,
        }
    }
}

/// Loads a workbook, choosing the format from the extension unless given.
pub fn load(path: &Path, format: Option<InputFormat>) -> Result<Workbook, LoadError> {
    match format.unwrap_or_else(|| InputFormat::from_path(path)) {
        InputFormat::Text => text::load_text(path),
        InputFormat::Xlsx => xlsx::load_xlsx(path),
    }
}
