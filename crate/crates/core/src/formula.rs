//! Formula lexing, parsing, canonical printing and evaluation.
//!
//! Operator tiers, tightest first: postfix `%`, `^`, prefix `-`/`+`,
//! `*` `/`, `+` `-`, `&`, comparisons. Every binary tier is left
//! associative. Parentheses written in the source survive as explicit
//! [`Expr::Paren`] nodes so redundant ones can be counted later.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::model::{col_to_letters, letters_to_col, quote_sheet_name, CellAddress, Coord, MAX_ROW};

/// Numeric literal: parsed value plus the writer's spelling.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberLit {
    pub value: f64,
    pub text: String,
}

impl NumberLit {
    pub fn new(value: f64) -> Self {
        NumberLit {
            value,
            text: format_number(value),
        }
    }
}

fn format_number(value: f64) -> String {
    let s = format!("{value}");
    s.to_ascii_uppercase()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CellRef {
    pub sheet: Option<String>,
    pub row: u32,
    pub col: u32,
    pub row_abs: bool,
    pub col_abs: bool,
}

impl CellRef {
    pub fn relative(row: u32, col: u32) -> Self {
        CellRef {
            sheet: None,
            row,
            col,
            row_abs: false,
            col_abs: false,
        }
    }

    pub fn coord(&self) -> Coord {
        Coord::new(self.row, self.col)
    }

    /// Resolves against the sheet hosting the formula.
    pub fn resolve(&self, host_sheet: &str) -> CellAddress {
        CellAddress::new(
            self.sheet.clone().unwrap_or_else(|| host_sheet.to_string()),
            self.row,
            self.col,
        )
    }

    fn a1_body(&self) -> String {
        format!(
            "{}{}{}{}",
            if self.col_abs { "$" } else { "" },
            col_to_letters(self.col),
            if self.row_abs { "$" } else { "" },
            self.row
        )
    }
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(sheet) = &self.sheet {
            write!(f, "{}!", quote_sheet_name(sheet))?;
        }
        f.write_str(&self.a1_body())
    }
}

/// Rectangular range. The sheet qualifier lives on `start`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RangeRef {
    pub start: CellRef,
    pub end: CellRef,
}

impl RangeRef {
    /// Builds a range with `start <= end` row- and column-wise.
    pub fn normalized(a: CellRef, b: CellRef) -> Self {
        let (top, bottom) = if a.row <= b.row { (&a, &b) } else { (&b, &a) };
        let (left, right) = if a.col <= b.col { (&a, &b) } else { (&b, &a) };
        let start = CellRef {
            sheet: a.sheet.clone().or_else(|| b.sheet.clone()),
            row: top.row,
            row_abs: top.row_abs,
            col: left.col,
            col_abs: left.col_abs,
        };
        let end = CellRef {
            sheet: None,
            row: bottom.row,
            row_abs: bottom.row_abs,
            col: right.col,
            col_abs: right.col_abs,
        };
        RangeRef { start, end }
    }

    pub fn rows(&self) -> u32 {
        self.end.row - self.start.row + 1
    }

    pub fn cols(&self) -> u32 {
        self.end.col - self.start.col + 1
    }

    pub fn cell_count(&self) -> u64 {
        u64::from(self.rows()) * u64::from(self.cols())
    }

    /// Cells in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = Coord> + '_ {
        (self.start.row..=self.end.row)
            .flat_map(move |r| (self.start.col..=self.end.col).map(move |c| Coord::new(r, c)))
    }

    pub fn contains(&self, coord: Coord) -> bool {
        (self.start.row..=self.end.row).contains(&coord.row)
            && (self.start.col..=self.end.col).contains(&coord.col)
    }
}

impl fmt::Display for RangeRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.start, self.end.a1_body())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Lt,
    Gt,
    Le,
    Ge,
    Ne,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Div => "/",
            BinaryOp::Pow => "^",
            BinaryOp::Concat => "&",
            BinaryOp::Eq => "=",
            BinaryOp::Lt => "<",
            BinaryOp::Gt => ">",
            BinaryOp::Le => "<=",
            BinaryOp::Ge => ">=",
            BinaryOp::Ne => "<>",
        }
    }

    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Eq
            | BinaryOp::Lt
            | BinaryOp::Gt
            | BinaryOp::Le
            | BinaryOp::Ge
            | BinaryOp::Ne => PREC_CMP,
            BinaryOp::Concat => PREC_CONCAT,
            BinaryOp::Add | BinaryOp::Sub => PREC_ADD,
            BinaryOp::Mul | BinaryOp::Div => PREC_MUL,
            BinaryOp::Pow => PREC_POW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UnaryOp {
    Neg,
    Plus,
    /// Postfix percent.
    Percent,
}

const PREC_CMP: u8 = 1;
const PREC_CONCAT: u8 = 2;
const PREC_ADD: u8 = 3;
const PREC_MUL: u8 = 4;
const PREC_PREFIX: u8 = 5;
const PREC_POW: u8 = 6;
const PREC_PERCENT: u8 = 7;
const PREC_ATOM: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(NumberLit),
    Text(String),
    Bool(bool),
    Error(String),
    Ref(CellRef),
    Range(RangeRef),
    /// Defined name such as `WBMAX`.
    Name(String),
    Call {
        name: String,
        args: Vec<Expr>,
    },
    Binary {
        op: BinaryOp,
        lhs: Box<Expr>,
        rhs: Box<Expr>,
    },
    Unary {
        op: UnaryOp,
        operand: Box<Expr>,
    },
    Paren {
        inner: Box<Expr>,
        /// True when the parentheses were written in the source.
        explicit: bool,
    },
}

impl Expr {
    pub fn num(value: f64) -> Expr {
        Expr::Number(NumberLit::new(value))
    }

    pub fn cell(row: u32, col: u32) -> Expr {
        Expr::Ref(CellRef::relative(row, col))
    }

    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary {
            op,
            lhs: Box::new(lhs),
            rhs: Box::new(rhs),
        }
    }

    pub fn unary(op: UnaryOp, operand: Expr) -> Expr {
        Expr::Unary {
            op,
            operand: Box::new(operand),
        }
    }

    pub fn call(name: &str, args: Vec<Expr>) -> Expr {
        Expr::Call {
            name: name.to_ascii_uppercase(),
            args,
        }
    }

    pub fn paren(inner: Expr) -> Expr {
        Expr::Paren {
            inner: Box::new(inner),
            explicit: true,
        }
    }

    /// Skips parentheses of either kind.
    pub fn unparen(&self) -> &Expr {
        let mut e = self;
        while let Expr::Paren { inner, .. } = e {
            e = inner;
        }
        e
    }

    /// Copy with every `Paren` node removed.
    pub fn strip_parens(&self) -> Expr {
        self.map_children(&mut |e| e.strip_parens(), true)
    }

    /// Equality ignoring parenthesization.
    pub fn structurally_eq(&self, other: &Expr) -> bool {
        self.strip_parens() == other.strip_parens()
    }

    fn map_children(&self, f: &mut dyn FnMut(&Expr) -> Expr, drop_parens: bool) -> Expr {
        match self {
            Expr::Call { name, args } => Expr::Call {
                name: name.clone(),
                args: args.iter().map(&mut *f).collect(),
            },
            Expr::Binary { op, lhs, rhs } => Expr::Binary {
                op: *op,
                lhs: Box::new(f(lhs)),
                rhs: Box::new(f(rhs)),
            },
            Expr::Unary { op, operand } => Expr::Unary {
                op: *op,
                operand: Box::new(f(operand)),
            },
            Expr::Paren { inner, explicit } => {
                if drop_parens {
                    f(inner)
                } else {
                    Expr::Paren {
                        inner: Box::new(f(inner)),
                        explicit: *explicit,
                    }
                }
            }
            leaf => leaf.clone(),
        }
    }

    /// Rewrites nodes bottom-up; `f` sees each node after its children.
    pub fn transform(&self, f: &mut dyn FnMut(Expr) -> Expr) -> Expr {
        let mapped = self.map_children(&mut |c| c.transform(f), false);
        f(mapped)
    }

    /// Pre-order visit.
    pub fn visit(&self, f: &mut dyn FnMut(&Expr)) {
        f(self);
        match self {
            Expr::Call { args, .. } => args.iter().for_each(|a| a.visit(f)),
            Expr::Binary { lhs, rhs, .. } => {
                lhs.visit(f);
                rhs.visit(f);
            }
            Expr::Unary { operand, .. } => operand.visit(f),
            Expr::Paren { inner, .. } => inner.visit(f),
            _ => {}
        }
    }

    /// True if any call to `name` (case-insensitive) appears.
    pub fn calls_function(&self, name: &str) -> bool {
        let mut found = false;
        self.visit(&mut |e| {
            if let Expr::Call { name: n, .. } = e {
                found |= n.eq_ignore_ascii_case(name);
            }
        });
        found
    }

    /// Shifts relative references by the given offsets. Used to expand
    /// shared formulas and to simulate copy-fill.
    pub fn shift(&self, drow: i64, dcol: i64) -> Option<Expr> {
        let mut ok = true;
        let mut move_ref = |r: &CellRef| -> CellRef {
            let mut out = r.clone();
            if !r.row_abs {
                let row = i64::from(r.row) + drow;
                if row < 1 || row > i64::from(MAX_ROW) {
                    ok = false;
                } else {
                    out.row = row as u32;
                }
            }
            if !r.col_abs {
                let col = i64::from(r.col) + dcol;
                if col < 1 || col > i64::from(crate::model::MAX_COL) {
                    ok = false;
                } else {
                    out.col = col as u32;
                }
            }
            out
        };
        let shifted = self.transform(&mut |e| match e {
            Expr::Ref(r) => Expr::Ref(move_ref(&r)),
            Expr::Range(rr) => {
                let start = move_ref(&rr.start);
                let end = move_ref(&rr.end);
                Expr::Range(RangeRef { start, end })
            }
            other => other,
        });
        ok.then_some(shifted)
    }

    /// Static guess of whether the formula yields text.
    pub fn returns_text(&self) -> bool {
        const TEXT_FUNCTIONS: &[&str] = &[
            "TEXT",
            "CONCATENATE",
            "CONCAT",
            "LEFT",
            "RIGHT",
            "MID",
            "UPPER",
            "LOWER",
            "PROPER",
            "TRIM",
            "REPT",
            "SUBSTITUTE",
            "TEXTJOIN",
            "DOLLAR",
            "FIXED",
        ];
        match self.unparen() {
            Expr::Text(_) => true,
            Expr::Binary {
                op: BinaryOp::Concat,
                ..
            } => true,
            // `"Surplus of " + TEXT(...)` style concatenation
            Expr::Binary {
                op: BinaryOp::Add,
                lhs,
                rhs,
            } => lhs.returns_text() || rhs.returns_text(),
            Expr::Call { name, args } if name == "IF" => {
                args.iter().skip(1).any(|a| a.returns_text())
            }
            Expr::Call { name, .. } => TEXT_FUNCTIONS.contains(&name.as_str()),
            _ => false,
        }
    }
}

/// Text position of a parse failure.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("formula parse error at byte {offset}: expected {expected}, found {found}")]
pub struct FormulaParseError {
    /// Byte offset into the text given to [`parse_formula`].
    pub offset: usize,
    pub expected: String,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Str(String),
    Bool(bool),
    Err(String),
    Ref(CellRef),
    Func(String),
    Name(String),
    LParen,
    RParen,
    Comma,
    Colon,
    Bin(BinaryOp),
    Percent,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(_, t) => format!("number `{t}`"),
            Tok::Str(_) => "string".into(),
            Tok::Bool(b) => format!("`{}`", if *b { "TRUE" } else { "FALSE" }),
            Tok::Err(e) => format!("`{e}`"),
            Tok::Ref(r) => format!("reference `{r}`"),
            Tok::Func(n) => format!("function `{n}`"),
            Tok::Name(n) => format!("name `{n}`"),
            Tok::LParen => "`(`".into(),
            Tok::RParen => "`)`".into(),
            Tok::Comma => "`,`".into(),
            Tok::Colon => "`:`".into(),
            Tok::Bin(op) => format!("`{}`", op.symbol()),
            Tok::Percent => "`%`".into(),
        }
    }
}

const ERROR_LITERALS: &[&str] = &[
    "#NULL!",
    "#DIV/0!",
    "#VALUE!",
    "#REF!",
    "#NAME?",
    "#NUM!",
    "#N/A",
    "#GETTING_DATA",
];

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn is_word_byte(b: u8) -> bool {
    b.is_ascii_alphanumeric() || b == b'_' || b == b'.' || b == b'$'
}

impl<'a> Lexer<'a> {
    fn err(&self, at: usize, expected: &str, found: &str) -> FormulaParseError {
        FormulaParseError {
            offset: at,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    fn peek_byte(&self) -> Option<u8> {
        self.src.as_bytes().get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while matches!(self.peek_byte(), Some(b' ' | b'\t' | b'\r' | b'\n')) {
            self.pos += 1;
        }
    }

    fn tokens(mut self) -> Result<Vec<(usize, Tok)>, FormulaParseError> {
        let mut out = Vec::new();
        loop {
            self.skip_ws();
            let start = self.pos;
            let Some(b) = self.peek_byte() else { break };
            let tok = match b {
                b'(' => {
                    self.pos += 1;
                    Tok::LParen
                }
                b')' => {
                    self.pos += 1;
                    Tok::RParen
                }
                b',' => {
                    self.pos += 1;
                    Tok::Comma
                }
                b':' => {
                    self.pos += 1;
                    Tok::Colon
                }
                b'%' => {
                    self.pos += 1;
                    Tok::Percent
                }
                b'+' | b'-' | b'*' | b'/' | b'^' | b'&' | b'=' => {
                    self.pos += 1;
                    Tok::Bin(match b {
                        b'+' => BinaryOp::Add,
                        b'-' => BinaryOp::Sub,
                        b'*' => BinaryOp::Mul,
                        b'/' => BinaryOp::Div,
                        b'^' => BinaryOp::Pow,
                        b'&' => BinaryOp::Concat,
                        _ => BinaryOp::Eq,
                    })
                }
                b'<' => {
                    self.pos += 1;
                    match self.peek_byte() {
                        Some(b'=') => {
                            self.pos += 1;
                            Tok::Bin(BinaryOp::Le)
                        }
                        Some(b'>') => {
                            self.pos += 1;
                            Tok::Bin(BinaryOp::Ne)
                        }
                        _ => Tok::Bin(BinaryOp::Lt),
                    }
                }
                b'>' => {
                    self.pos += 1;
                    if self.peek_byte() == Some(b'=') {
                        self.pos += 1;
                        Tok::Bin(BinaryOp::Ge)
                    } else {
                        Tok::Bin(BinaryOp::Gt)
                    }
                }
                b'"' => self.string()?,
                b'#' => self.error_literal()?,
                b'\'' => {
                    let sheet = self.quoted_sheet()?;
                    self.qualified_ref(sheet)?
                }
                b'0'..=b'9' => self.number()?,
                b'.' if self
                    .src
                    .as_bytes()
                    .get(self.pos + 1)
                    .is_some_and(u8::is_ascii_digit) =>
                {
                    self.number()?
                }
                b if is_word_byte(b) => self.word()?,
                _ => {
                    let ch = self.src[start..].chars().next().unwrap_or('?');
                    return Err(self.err(start, "expression", &format!("`{ch}`")));
                }
            };
            out.push((start, tok));
        }
        Ok(out)
    }

    fn string(&mut self) -> Result<Tok, FormulaParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut text = String::new();
        loop {
            let rest = &self.src[self.pos..];
            let Some(idx) = rest.find('"') else {
                return Err(self.err(start, "closing `\"`", "end of formula"));
            };
            text.push_str(&rest[..idx]);
            self.pos += idx + 1;
            if self.peek_byte() == Some(b'"') {
                text.push('"');
                self.pos += 1;
            } else {
                return Ok(Tok::Str(text));
            }
        }
    }

    fn error_literal(&mut self) -> Result<Tok, FormulaParseError> {
        let rest = &self.src[self.pos..];
        for lit in ERROR_LITERALS {
            if rest.len() >= lit.len() && rest[..lit.len()].eq_ignore_ascii_case(lit) {
                self.pos += lit.len();
                return Ok(Tok::Err(lit.to_string()));
            }
        }
        Err(self.err(self.pos, "error literal such as #REF!", "`#`"))
    }

    fn quoted_sheet(&mut self) -> Result<String, FormulaParseError> {
        let start = self.pos;
        self.pos += 1;
        let mut name = String::new();
        loop {
            let rest = &self.src[self.pos..];
            let Some(idx) = rest.find('\'') else {
                return Err(self.err(start, "closing `'`", "end of formula"));
            };
            name.push_str(&rest[..idx]);
            self.pos += idx + 1;
            if self.peek_byte() == Some(b'\'') {
                name.push('\'');
                self.pos += 1;
            } else {
                break;
            }
        }
        if self.peek_byte() != Some(b'!') {
            return Err(self.err(self.pos, "`!` after sheet name", "something else"));
        }
        self.pos += 1;
        Ok(name)
    }

    fn read_word(&mut self) -> &'a str {
        let start = self.pos;
        while self.peek_byte().is_some_and(is_word_byte) {
            self.pos += 1;
        }
        &self.src[start..self.pos]
    }

    fn qualified_ref(&mut self, sheet: String) -> Result<Tok, FormulaParseError> {
        let at = self.pos;
        let word = self.read_word();
        match parse_ref_word(word) {
            Some(mut r) => {
                r.sheet = Some(sheet);
                Ok(Tok::Ref(r))
            }
            None => Err(self.err(at, "cell reference after sheet name", &format!("`{word}`"))),
        }
    }

    fn number(&mut self) -> Result<Tok, FormulaParseError> {
        let start = self.pos;
        let bytes = self.src.as_bytes();
        let mut i = self.pos;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'.' {
            i += 1;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        let text = &self.src[start..i];
        // a digit run followed by letters is not a number (e.g. `1A`)
        if i < bytes.len() && (bytes[i].is_ascii_alphabetic() || bytes[i] == b'_') {
            return Err(self.err(start, "number", &format!("`{}`", &self.src[start..=i])));
        }
        self.pos = i;
        let value: f64 = text
            .parse()
            .map_err(|_| self.err(start, "number", &format!("`{text}`")))?;
        Ok(Tok::Num(value, text.to_ascii_uppercase()))
    }

    fn word(&mut self) -> Result<Tok, FormulaParseError> {
        let start = self.pos;
        let word = self.read_word();
        if self.peek_byte() == Some(b'!') {
            self.pos += 1;
            return self.qualified_ref(word.to_string());
        }
        let mut look = self.pos;
        let bytes = self.src.as_bytes();
        while look < bytes.len() && bytes[look] == b' ' {
            look += 1;
        }
        let next_is_paren = bytes.get(look) == Some(&b'(');
        if next_is_paren && !word.contains('$') {
            return Ok(Tok::Func(word.to_ascii_uppercase()));
        }
        if let Some(r) = parse_ref_word(word) {
            return Ok(Tok::Ref(r));
        }
        if word.eq_ignore_ascii_case("TRUE") {
            return Ok(Tok::Bool(true));
        }
        if word.eq_ignore_ascii_case("FALSE") {
            return Ok(Tok::Bool(false));
        }
        if word.contains('$') || word.starts_with(|c: char| c.is_ascii_digit()) {
            return Err(self.err(start, "cell reference", &format!("`{word}`")));
        }
        Ok(Tok::Name(word.to_ascii_uppercase()))
    }
}

fn parse_ref_word(word: &str) -> Option<CellRef> {
    let bytes = word.as_bytes();
    let mut i = 0;
    let col_abs = bytes.first() == Some(&b'$');
    if col_abs {
        i += 1;
    }
    let letters_start = i;
    while i < bytes.len() && bytes[i].is_ascii_alphabetic() {
        i += 1;
    }
    let col = letters_to_col(&word[letters_start..i])?;
    let row_abs = bytes.get(i) == Some(&b'$');
    if row_abs {
        i += 1;
    }
    let digits = &word[i..];
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let row: u32 = digits.parse().ok()?;
    if row == 0 || row > MAX_ROW {
        return None;
    }
    Some(CellRef {
        sheet: None,
        row,
        col,
        row_abs,
        col_abs,
    })
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    idx: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.idx).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.idx).map_or(self.end, |(o, _)| *o)
    }

    fn found(&self) -> String {
        self.peek()
            .map_or_else(|| "end of formula".to_string(), Tok::describe)
    }

    fn fail(&self, expected: &str) -> FormulaParseError {
        FormulaParseError {
            offset: self.offset(),
            expected: expected.to_string(),
            found: self.found(),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.idx).map(|(_, t)| t.clone());
        self.idx += 1;
        t
    }

    fn expr(&mut self, min_prec: u8) -> Result<Expr, FormulaParseError> {
        let mut lhs = self.prefix()?;
        loop {
            match self.peek() {
                Some(Tok::Percent) => {
                    self.idx += 1;
                    lhs = Expr::unary(UnaryOp::Percent, lhs);
                }
                Some(Tok::Bin(op)) => {
                    let op = *op;
                    let prec = op.precedence();
                    if prec < min_prec {
                        break;
                    }
                    self.idx += 1;
                    let rhs = self.expr(prec + 1)?;
                    lhs = Expr::binary(op, lhs, rhs);
                }
                _ => break,
            }
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, FormulaParseError> {
        let at = self.offset();
        let tok = self.bump().ok_or_else(|| FormulaParseError {
            offset: at,
            expected: "expression".into(),
            found: "end of formula".into(),
        })?;
        Ok(match tok {
            Tok::Bin(BinaryOp::Sub) => Expr::unary(UnaryOp::Neg, self.expr(PREC_PREFIX)?),
            Tok::Bin(BinaryOp::Add) => Expr::unary(UnaryOp::Plus, self.expr(PREC_PREFIX)?),
            Tok::Num(value, text) => Expr::Number(NumberLit { value, text }),
            Tok::Str(s) => Expr::Text(s),
            Tok::Bool(b) => Expr::Bool(b),
            Tok::Err(e) => Expr::Error(e),
            Tok::Name(n) => Expr::Name(n),
            Tok::Ref(r) => {
                if self.peek() == Some(&Tok::Colon) {
                    self.idx += 1;
                    match self.bump() {
                        Some(Tok::Ref(end)) => {
                            if end.sheet.is_some() && end.sheet != r.sheet {
                                self.idx -= 1;
                                return Err(self.fail("range end on the same sheet"));
                            }
                            Expr::Range(RangeRef::normalized(r, end))
                        }
                        _ => {
                            self.idx -= 1;
                            return Err(self.fail("cell reference after `:`"));
                        }
                    }
                } else {
                    Expr::Ref(r)
                }
            }
            Tok::LParen => {
                let inner = self.expr(0)?;
                if self.bump() != Some(Tok::RParen) {
                    self.idx -= 1;
                    return Err(self.fail("`)`"));
                }
                Expr::paren(inner)
            }
            Tok::Func(name) => {
                if self.bump() != Some(Tok::LParen) {
                    self.idx -= 1;
                    return Err(self.fail("`(`"));
                }
                let mut args = Vec::new();
                if self.peek() == Some(&Tok::RParen) {
                    self.idx += 1;
                } else {
                    loop {
                        args.push(self.expr(0)?);
                        match self.bump() {
                            Some(Tok::Comma) => continue,
                            Some(Tok::RParen) => break,
                            _ => {
                                self.idx -= 1;
                                return Err(self.fail("`,` or `)`"));
                            }
                        }
                    }
                }
                Expr::Call { name, args }
            }
            _ => {
                self.idx -= 1;
                return Err(self.fail("expression"));
            }
        })
    }
}

/// Parses formula text (leading `=` optional) into an [`Expr`].
pub fn parse_formula(text: &str) -> Result<Expr, FormulaParseError> {
    let trimmed_start = text.len() - text.trim_start().len();
    let mut body_start = trimmed_start;
    if text[trimmed_start..].starts_with('=') {
        body_start += 1;
    }
    let lexer = Lexer {
        src: text,
        pos: body_start,
    };
    let toks = lexer.tokens()?;
    let mut parser = Parser {
        toks,
        idx: 0,
        end: text.len(),
    };
    let expr = parser.expr(0)?;
    if parser.peek().is_some() {
        return Err(parser.fail("operator or end of formula"));
    }
    Ok(expr)
}

/// How references are spelled by the printer.
#[derive(Debug, Clone, Copy)]
enum RefStyle {
    A1,
    /// Offsets from the host cell; absolute parts keep coordinates.
    R1C1(Coord),
}

fn precedence(e: &Expr) -> u8 {
    match e {
        Expr::Binary { op, .. } => op.precedence(),
        Expr::Unary {
            op: UnaryOp::Percent,
            ..
        } => PREC_PERCENT,
        Expr::Unary { .. } => PREC_PREFIX,
        Expr::Number(n) if n.value < 0.0 || n.text.starts_with('-') => PREC_PREFIX,
        Expr::Paren {
            inner,
            explicit: false,
        } => precedence(inner),
        _ => PREC_ATOM,
    }
}

fn effective(e: &Expr) -> &Expr {
    match e {
        Expr::Paren {
            inner,
            explicit: false,
        } => effective(inner),
        other => other,
    }
}

fn is_prefix(e: &Expr) -> bool {
    precedence(effective(e)) == PREC_PREFIX
}

struct Printer {
    style: RefStyle,
    out: String,
}

impl Printer {
    fn cell(&mut self, r: &CellRef, with_sheet: bool) {
        if with_sheet {
            if let Some(sheet) = &r.sheet {
                self.out.push_str(&quote_sheet_name(sheet));
                self.out.push('!');
            }
        }
        match self.style {
            RefStyle::A1 => self.out.push_str(&r.a1_body()),
            RefStyle::R1C1(host) => {
                let part = |abs: bool, v: u32, h: u32, tag: char| {
                    if abs {
                        format!("{tag}{v}")
                    } else {
                        format!("{tag}[{}]", i64::from(v) - i64::from(h))
                    }
                };
                self.out.push_str(&part(r.row_abs, r.row, host.row, 'R'));
                self.out.push_str(&part(r.col_abs, r.col, host.col, 'C'));
            }
        }
    }

    fn operand(&mut self, e: &Expr, parens: bool, guard: u8) {
        if parens {
            self.out.push('(');
            self.expr(e, 0);
            self.out.push(')');
        } else {
            self.expr(e, guard);
        }
    }

    /// `guard` is the precedence of the operator printed right after `e`
    /// (0 when nothing can bind to it).
    fn expr(&mut self, e: &Expr, guard: u8) {
        match e {
            Expr::Number(n) => {
                if n.text.is_empty() {
                    self.out.push_str(&format_number(n.value));
                } else {
                    self.out.push_str(&n.text);
                }
            }
            Expr::Text(s) => {
                self.out.push('"');
                self.out.push_str(&s.replace('"', "\"\""));
                self.out.push('"');
            }
            Expr::Bool(b) => self.out.push_str(if *b { "TRUE" } else { "FALSE" }),
            Expr::Error(e) => self.out.push_str(&e.to_ascii_uppercase()),
            Expr::Name(n) => self.out.push_str(&n.to_ascii_uppercase()),
            Expr::Ref(r) => self.cell(r, true),
            Expr::Range(rr) => {
                self.cell(&rr.start, true);
                self.out.push(':');
                self.cell(&rr.end, false);
            }
            Expr::Call { name, args } => {
                self.out.push_str(&name.to_ascii_uppercase());
                self.out.push('(');
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        self.out.push(',');
                    }
                    self.expr(a, 0);
                }
                self.out.push(')');
            }
            Expr::Paren {
                inner,
                explicit: true,
            } => {
                self.out.push('(');
                self.expr(inner, 0);
                self.out.push(')');
            }
            Expr::Paren {
                inner,
                explicit: false,
            } => self.expr(inner, guard),
            Expr::Binary { op, lhs, rhs } => {
                let p = op.precedence();
                let lhs_parens = if is_prefix(lhs) {
                    p >= PREC_PREFIX
                } else {
                    precedence(lhs) < p
                };
                self.operand(lhs, lhs_parens, p);
                self.out.push_str(op.symbol());
                let rhs_parens = if is_prefix(rhs) {
                    guard >= PREC_PREFIX
                } else {
                    precedence(rhs) <= p
                };
                self.operand(rhs, rhs_parens, guard);
            }
            Expr::Unary {
                op: UnaryOp::Percent,
                operand,
            } => {
                let parens = precedence(operand) < PREC_PERCENT;
                self.operand(operand, parens, PREC_PERCENT);
                self.out.push('%');
            }
            Expr::Unary { op, operand } => {
                self.out.push(if *op == UnaryOp::Neg { '-' } else { '+' });
                let parens = precedence(operand) < PREC_PREFIX;
                self.operand(operand, parens, guard);
            }
        }
    }
}

fn print_with(ast: &Expr, style: RefStyle) -> String {
    let mut p = Printer {
        style,
        out: String::new(),
    };
    p.expr(ast, 0);
    p.out
}

/// Canonical text with a leading `=`: upper-case names, no whitespace,
/// parentheses only where precedence needs them or the source had them.
pub fn print_formula(ast: &Expr) -> String {
    format!("={}", print_with(ast, RefStyle::A1))
}

/// Canonical text with references as offsets from `host`. Two cells whose
/// formulas are copies of each other produce the same string.
pub fn to_r1c1(ast: &Expr, host: Coord) -> String {
    format!("={}", print_with(ast, RefStyle::R1C1(host)))
}

/// A cell or range reference found in a formula.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RefTarget {
    Cell(CellRef),
    Range(RangeRef),
}

impl fmt::Display for RefTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RefTarget::Cell(c) => write!(f, "{c}"),
            RefTarget::Range(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reference {
    /// Position among the formula's references, left to right.
    pub index: usize,
    pub target: RefTarget,
}

/// All cell and range references in source order, duplicates kept.
pub fn extract_references(ast: &Expr) -> Vec<Reference> {
    let mut out = Vec::new();
    ast.visit(&mut |e| {
        let target = match e {
            Expr::Ref(r) => RefTarget::Cell(r.clone()),
            Expr::Range(r) => RefTarget::Range(r.clone()),
            _ => return,
        };
        out.push(Reference {
            index: out.len(),
            target,
        });
    });
    out
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("unsupported in evaluation: {0}")]
    Unsupported(String),
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("no value for {0}")]
    MissingValue(CellAddress),
}

enum Value {
    Num(f64),
    Array {
        rows: u32,
        cols: u32,
        values: Vec<f64>,
    },
}

/// Evaluates with unqualified references resolved against an unnamed sheet.
pub fn evaluate(ast: &Expr, env: &HashMap<CellAddress, f64>) -> Result<f64, EvalError> {
    evaluate_in(ast, "", env)
}

/// Evaluates arithmetic, comparisons, `SUM`, `SUMPRODUCT`, `IF`, `MIN`,
/// `MAX` and `ABS`. Unqualified references resolve against `sheet`.
pub fn evaluate_in(
    ast: &Expr,
    sheet: &str,
    env: &HashMap<CellAddress, f64>,
) -> Result<f64, EvalError> {
    let ev = Evaluator { sheet, env };
    ev.scalar(ast)
}

struct Evaluator<'a> {
    sheet: &'a str,
    env: &'a HashMap<CellAddress, f64>,
}

impl Evaluator<'_> {
    fn lookup(&self, r: &CellRef) -> Result<f64, EvalError> {
        let addr = r.resolve(self.sheet);
        self.env
            .get(&addr)
            .copied()
            .ok_or(EvalError::MissingValue(addr))
    }

    fn value(&self, e: &Expr) -> Result<Value, EvalError> {
        match e {
            Expr::Range(rr) => {
                let values = rr
                    .cells()
                    .map(|c| {
                        let mut r = rr.start.clone();
                        r.row = c.row;
                        r.col = c.col;
                        self.lookup(&r)
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Value::Array {
                    rows: rr.rows(),
                    cols: rr.cols(),
                    values,
                })
            }
            Expr::Paren { inner, .. } => self.value(inner),
            other => self.scalar(other).map(Value::Num),
        }
    }

    fn scalar(&self, e: &Expr) -> Result<f64, EvalError> {
        let v = match e {
            Expr::Number(n) => n.value,
            Expr::Bool(b) => f64::from(u8::from(*b)),
            Expr::Ref(r) => self.lookup(r)?,
            Expr::Paren { inner, .. } => self.scalar(inner)?,
            Expr::Text(_) => return Err(EvalError::Unsupported("text value".into())),
            Expr::Error(e) => return Err(EvalError::Unsupported(e.clone())),
            Expr::Name(n) => return Err(EvalError::Unsupported(format!("name {n}"))),
            Expr::Range(_) => {
                return Err(EvalError::Unsupported("range outside a function".into()))
            }
            Expr::Unary { op, operand } => {
                let x = self.scalar(operand)?;
                match op {
                    UnaryOp::Neg => -x,
                    UnaryOp::Plus => x,
                    UnaryOp::Percent => x / 100.0,
                }
            }
            Expr::Binary { op, lhs, rhs } => {
                let a = self.scalar(lhs)?;
                let b = self.scalar(rhs)?;
                let truth = |t: bool| f64::from(u8::from(t));
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::Domain("division by zero"));
                        }
                        a / b
                    }
                    BinaryOp::Pow => a.powf(b),
                    BinaryOp::Concat => return Err(EvalError::Unsupported("&".into())),
                    BinaryOp::Eq => truth(a == b),
                    BinaryOp::Ne => truth(a != b),
                    BinaryOp::Lt => truth(a < b),
                    BinaryOp::Gt => truth(a > b),
                    BinaryOp::Le => truth(a <= b),
                    BinaryOp::Ge => truth(a >= b),
                }
            }
            Expr::Call { name, args } => self.call(name, args)?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Domain("non-finite result"))
        }
    }

    fn flatten(&self, args: &[Expr]) -> Result<Vec<f64>, EvalError> {
        let mut out = Vec::new();
        for a in args {
            match self.value(a)? {
                Value::Num(x) => out.push(x),
                Value::Array { values, .. } => out.extend(values),
            }
        }
        Ok(out)
    }

    fn call(&self, name: &str, args: &[Expr]) -> Result<f64, EvalError> {
        match name {
            "SUM" => Ok(self.flatten(args)?.iter().sum()),
            "MIN" | "MAX" => {
                let vals = self.flatten(args)?;
                if vals.is_empty() {
                    return Ok(0.0);
                }
                let pick = if name == "MIN" { f64::min } else { f64::max };
                Ok(vals.into_iter().reduce(pick).unwrap_or(0.0))
            }
            "ABS" => match args {
                [x] => Ok(self.scalar(x)?.abs()),
                _ => Err(EvalError::Unsupported("ABS arity".into())),
            },
            "IF" => match args {
                [c, t] => {
                    if self.scalar(c)? != 0.0 {
                        self.scalar(t)
                    } else {
                        Ok(0.0)
                    }
                }
                [c, t, f] => {
                    if self.scalar(c)? != 0.0 {
                        self.scalar(t)
                    } else {
                        self.scalar(f)
                    }
                }
                _ => Err(EvalError::Unsupported("IF arity".into())),
            },
            "SUMPRODUCT" => {
                let arrays = args
                    .iter()
                    .map(|a| {
                        self.value(a).map(|v| match v {
                            Value::Num(x) => (1, 1, vec![x]),
                            Value::Array { rows, cols, values } => (rows, cols, values),
                        })
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                let Some((rows, cols, _)) = arrays.first() else {
                    return Err(EvalError::Unsupported(
                        "SUMPRODUCT without arguments".into(),
                    ));
                };
                if arrays.iter().any(|(r, c, _)| r != rows || c != cols) {
                    return Err(EvalError::Domain("SUMPRODUCT ranges differ in shape"));
                }
                let n = arrays[0].2.len();
                Ok((0..n)
                    .map(|i| arrays.iter().map(|(_, _, v)| v[i]).product::<f64>())
                    .sum())
            }
            other => Err(EvalError::Unsupported(format!("function {other}"))),
        }
    }
}
