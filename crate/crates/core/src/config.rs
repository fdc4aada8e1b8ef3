//! Audit configuration and its flat `key = value` file format.
//!
//! ```text
//! # comment
//! enabled = R01,R02,R05
//! severity.R05 = info
//! long_arc_distance = 30
//! bottom_line = Model!C51
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::graph::AnchorOptions;
use crate::model::{parse_a1, CellAddress};
use crate::rules::{rule_info, Severity, CATALOG};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("{path}:{line}: {message}")]
    Syntax {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditConfig {
    /// `None` means every catalog rule.
    pub enabled: Option<BTreeSet<String>>,
    pub severity: BTreeMap<String, Severity>,
    pub long_arc_distance: u32,
    pub max_font_sizes: usize,
    pub max_colors: usize,
    pub all_caps_min_len: usize,
    pub constant_allowlist: Vec<f64>,
    pub nest_max_len: usize,
    pub copy_run_min: usize,
    pub blank_ratio_warn: f64,
    pub bottom_line: Vec<String>,
    /// Cells allowed to read later cells (e.g. carried-forward balances).
    pub r01_exempt: Vec<String>,
    pub solver_functions: Vec<String>,
    /// Allowed relative deviation of a column width from the median.
    pub column_width_tolerance: f64,
    pub bottom_line_coverage: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            enabled: None,
            severity: BTreeMap::new(),
            long_arc_distance: 25,
            max_font_sizes: 1,
            max_colors: 4,
            all_caps_min_len: 4,
            constant_allowlist: vec![0.0, 1.0, -1.0],
            nest_max_len: 120,
            copy_run_min: 3,
            blank_ratio_warn: 0.5,
            bottom_line: Vec::new(),
            r01_exempt: Vec::new(),
            solver_functions: vec!["WB".to_string()],
            column_width_tolerance: 0.25,
            bottom_line_coverage: 0.5,
        }
    }
}

fn canonical_rule(id: &str) -> Result<String, String> {
    rule_info(id.trim())
        .map(|r| r.id.to_string())
        .ok_or_else(|| format!("unknown rule id `{}`", id.trim()))
}

/// Parses a comma-separated rule list such as `R01,r05`.
pub fn parse_rule_list(text: &str) -> Result<BTreeSet<String>, String> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(canonical_rule)
        .collect()
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn positive<T: std::str::FromStr + PartialOrd + Default>(
    key: &str,
    value: &str,
) -> Result<T, String> {
    match value.parse::<T>() {
        Ok(v) if v > T::default() => Ok(v),
        _ => Err(format!("`{key}` must be a positive number, got `{value}`")),
    }
}

impl AuditConfig {
    pub fn is_enabled(&self, id: &str) -> bool {
        self.enabled.as_ref().is_none_or(|set| set.contains(id))
    }

    pub fn severity_of(&self, id: &str) -> Severity {
        self.severity
            .get(id)
            .copied()
            .or_else(|| rule_info(id).map(|r| r.severity))
            .unwrap_or(Severity::Warning)
    }

    pub fn anchor_options(&self) -> AnchorOptions {
        AnchorOptions {
            bottom_line: self.bottom_line.clone(),
            solver_functions: self.solver_functions.clone(),
            bottom_line_coverage: self.bottom_line_coverage,
        }
    }

    /// R01 exemptions as addresses; unqualified entries apply to any sheet.
    pub fn r01_exempt_cells(&self) -> Vec<CellAddress> {
        self.r01_exempt
            .iter()
            .filter_map(|s| parse_a1(s).ok())
            .collect()
    }

    pub fn is_allowed_constant(&self, value: f64) -> bool {
        self.constant_allowlist.contains(&value)
    }

    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let value = value.trim();
        if let Some(id) = key.strip_prefix("severity.") {
            let id = canonical_rule(id)?;
            self.severity.insert(id, value.parse()?);
            return Ok(());
        }
        match key {
            "enabled" => {
                self.enabled = if value.eq_ignore_ascii_case("all") {
                    None
                } else {
                    Some(parse_rule_list(value)?)
                }
            }
            "long_arc_distance" => self.long_arc_distance = positive(key, value)?,
            "max_font_sizes" => self.max_font_sizes = positive(key, value)?,
            "max_colors" => self.max_colors = positive(key, value)?,
            "all_caps_min_len" => self.all_caps_min_len = positive(key, value)?,
            "nest_max_len" => self.nest_max_len = positive(key, value)?,
            "copy_run_min" => self.copy_run_min = positive(key, value)?,
            "blank_ratio_warn" => self.blank_ratio_warn = positive(key, value)?,
            "column_width_tolerance" => self.column_width_tolerance = positive(key, value)?,
            "bottom_line_coverage" => self.bottom_line_coverage = positive(key, value)?,
            "constant_allowlist" => {
                self.constant_allowlist = list(value)
                    .iter()
                    .map(|v| {
                        v.parse::<f64>()
                            .map_err(|_| format!("bad number `{v}` in constant_allowlist"))
                    })
                    .collect::<Result<_, _>>()?
            }
            "bottom_line" => self.bottom_line = list(value),
            "r01_exempt" => {
                let cells = list(value);
                for c in &cells {
                    parse_a1(c).map_err(|e| e.to_string())?;
                }
                self.r01_exempt = cells;
            }
            "solver_functions" => {
                self.solver_functions = list(value).iter().map(|s| s.to_ascii_uppercase()).collect()
            }
            other => return Err(format!("unknown key `{other}`")),
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &str) -> Result<AuditConfig, ConfigError> {
        let mut cfg = AuditConfig::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |message: String| ConfigError::Syntax {
                path: path.to_string(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax("expected `key = value`".into()))?;
            cfg.set(key.trim(), value).map_err(syntax)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<AuditConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        AuditConfig::parse(&text, &path.display().to_string())
    }

    /// Text that [`AuditConfig::parse`] turns back into `self`.
    pub fn to_config_string(&self) -> String {
        let mut out = String::new();
        let join = |v: &[String]| v.join(",");
        match &self.enabled {
            None => out.push_str("enabled = all\n"),
            Some(set) => {
                let ids: Vec<String> = set.iter().cloned().collect();
                let _ = writeln!(out, "enabled = {}", join(&ids));
            }
        }
        for (id, sev) in &self.severity {
            let _ = writeln!(out, "severity.{id} = {sev}");
        }
        let _ = writeln!(out, "long_arc_distance = {}", self.long_arc_distance);
        let _ = writeln!(out, "max_font_sizes = {}", self.max_font_sizes);
        let _ = writeln!(out, "max_colors = {}", self.max_colors);
        let _ = writeln!(out, "all_caps_min_len = {}", self.all_caps_min_len);
        let allow: Vec<String> = self
            .constant_allowlist
            .iter()
            .map(|v| format!("{v}"))
            .collect();
        let _ = writeln!(out, "constant_allowlist = {}", join(&allow));
        let _ = writeln!(out, "nest_max_len = {}", self.nest_max_len);
        let _ = writeln!(out, "copy_run_min = {}", self.copy_run_min);
        let _ = writeln!(out, "blank_ratio_warn = {}", self.blank_ratio_warn);
        let _ = writeln!(out, "bottom_line = {}", join(&self.bottom_line));
        let _ = writeln!(out, "r01_exempt = {}", join(&self.r01_exempt));
        let _ = writeln!(out, "solver_functions = {}", join(&self.solver_functions));
        let _ = writeln!(
            out,
            "column_width_tolerance = {}",
            self.column_width_tolerance
        );
        let _ = writeln!(out, "bottom_line_coverage = {}", self.bottom_line_coverage);
        out
    }

    /// Restricts the enabled set to `ids` (intersected with any existing set).
    pub fn restrict(&mut self, ids: &BTreeSet<String>) {
        self.enabled = Some(match &self.enabled {
            None => ids.clone(),
            Some(cur) => cur.intersection(ids).cloned().collect(),
        });
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Some(set) = &self.enabled {
            for id in set {
                if !CATALOG.iter().any(|r| r.id == id) {
                    return Err(ConfigError::Invalid(format!("unknown rule id `{id}`")));
                }
            }
        }
        if self.bottom_line_coverage > 1.0 {
            return Err(ConfigError::Invalid(
                "bottom_line_coverage must be at most 1".into(),
            ));
        }
        Ok(())
    }
}
