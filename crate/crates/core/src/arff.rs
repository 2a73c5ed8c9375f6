//! Reader and writer for nominal-only ARFF files.
//!
//! Keywords are case-insensitive, `%` starts a comment, values may be
//! single- or double-quoted with backslash escapes, and an unquoted `?` is a
//! missing value. A nominal specification `{a, b, ...}` may span lines.
//! Numeric, string, date and relational attributes are rejected.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub values: Vec<String>,
}

impl Attribute {
    pub fn new<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn cardinality(&self) -> usize {
        self.values.len()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// A cell: either missing (`?`) or an index into the attribute's values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Missing,
    Nominal(usize),
}

impl Value {
    pub fn index(self) -> Option<usize> {
        match self {
            Value::Missing => None,
            Value::Nominal(i) => Some(i),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub relation: String,
    pub attributes: Vec<Attribute>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ArffError {
    #[error("missing `@relation` header")]
    MissingHeader,
    #[error("row {row}: value `{value}` is not declared for attribute `{attr}`")]
    UnknownNominalValue {
        row: usize,
        attr: String,
        value: String,
    },
    #[error("row {row}: expected {expected} values, found {found}")]
    ArityMismatch {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: attribute type `{ty}` is not supported (nominal only)")]
    UnsupportedAttributeType { line: usize, ty: String },
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
}

fn syntax(line: usize, message: impl Into<String>) -> ArffError {
    ArffError::Syntax {
        line,
        message: message.into(),
    }
}

impl Dataset {
    pub fn new(relation: impl Into<String>, attributes: Vec<Attribute>) -> Self {
        Self {
            relation: relation.into(),
            attributes,
            rows: Vec::new(),
        }
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    /// The attribute named `Class`, falling back to the last attribute.
    pub fn default_class_index(&self) -> Option<usize> {
        self.attribute_index("Class")
            .or_else(|| self.attributes.len().checked_sub(1))
    }

    pub fn value_name(&self, attr: usize, value: Value) -> &str {
        match value {
            Value::Missing => "?",
            Value::Nominal(i) => &self.attributes[attr].values[i],
        }
    }

    /// Checks row arity and value ranges.
    pub fn validate(&self) -> Result<(), ArffError> {
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.attributes.len() {
                return Err(ArffError::ArityMismatch {
                    row: r + 1,
                    expected: self.attributes.len(),
                    found: row.len(),
                });
            }
            for (a, v) in row.iter().enumerate() {
                if let Value::Nominal(i) = v {
                    if *i >= self.attributes[a].cardinality() {
                        return Err(ArffError::UnknownNominalValue {
                            row: r + 1,
                            attr: self.attributes[a].name.clone(),
                            value: format!("#{i}"),
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// A copy holding only the rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            relation: self.relation.clone(),
            attributes: self.attributes.clone(),
            rows: indices.iter().map(|i| self.rows[*i].clone()).collect(),
        }
    }

    /// JSON form: `{relation, attributes:[{name, values}], rows:[[value|null]]}`.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(a, v)| match v {
                        Value::Missing => serde_json::Value::Null,
                        Value::Nominal(_) => self.value_name(a, *v).into(),
                    })
                    .collect()
            })
            .collect();
        serde_json::json!({
            "relation": self.relation,
            "attributes": self.attributes,
            "rows": rows,
        })
    }
}

pub fn parse_arff(text: &str) -> Result<Dataset, ArffError> {
    let tokens = lex(text)?;
    Parser { tokens, pos: 0 }.parse()
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Word(String),
    Quoted(String),
    LBrace,
    RBrace,
    Comma,
    Newline,
}

fn is_delim(c: char) -> bool {
    c.is_whitespace() || matches!(c, ',' | '{' | '}' | '%' | '\'' | '"')
}

fn lex(text: &str) -> Result<Vec<(Tok, usize)>, ArffError> {
    let mut out = Vec::new();
    let mut line = 1;
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '\n' => {
                out.push((Tok::Newline, line));
                line += 1;
            }
            '%' => {
                while chars.peek().is_some_and(|c| *c != '\n') {
                    chars.next();
                }
            }
            ',' => out.push((Tok::Comma, line)),
            '{' => out.push((Tok::LBrace, line)),
            '}' => out.push((Tok::RBrace, line)),
            '\'' | '"' => {
                let quote = c;
                let start = line;
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(syntax(start, "unterminated quoted value")),
                        Some('\\') => match chars.next() {
                            Some('n') => s.push('\n'),
                            Some('t') => s.push('\t'),
                            Some('r') => s.push('\r'),
                            Some(e) => s.push(e),
                            None => return Err(syntax(start, "unterminated quoted value")),
                        },
                        Some(q) if q == quote => break,
                        Some('\n') => return Err(syntax(start, "newline inside quoted value")),
                        Some(other) => s.push(other),
                    }
                }
                out.push((Tok::Quoted(s), start));
            }
            c if c.is_whitespace() => {}
            c => {
                let mut s = String::from(c);
                while let Some(&n) = chars.peek() {
                    if is_delim(n) {
                        break;
                    }
                    s.push(n);
                    chars.next();
                }
                out.push((Tok::Word(s), line));
            }
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<(Tok, usize)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|(t, _)| t)
    }

    fn line(&self) -> usize {
        self.tokens
            .get(self.pos)
            .or_else(|| self.tokens.last())
            .map_or(1, |(_, l)| *l)
    }

    fn next(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|(t, _)| t.clone());
        self.pos += 1;
        t
    }

    fn skip_newlines(&mut self) {
        while self.peek() == Some(&Tok::Newline) {
            self.pos += 1;
        }
    }

    fn end_of_line(&mut self) -> Result<(), ArffError> {
        match self.next() {
            None | Some(Tok::Newline) => Ok(()),
            Some(_) => Err(syntax(self.tokens[self.pos - 1].1, "unexpected trailing tokens")),
        }
    }

    fn name(&mut self, what: &str) -> Result<String, ArffError> {
        let line = self.line();
        match self.next() {
            Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => Ok(w),
            _ => Err(syntax(line, format!("expected {what}"))),
        }
    }

    fn keyword(&mut self) -> Option<String> {
        match self.peek() {
            Some(Tok::Word(w)) if w.starts_with('@') => Some(w.to_ascii_lowercase()),
            _ => None,
        }
    }

    fn parse(mut self) -> Result<Dataset, ArffError> {
        self.skip_newlines();
        if self.keyword().as_deref() != Some("@relation") {
            return Err(ArffError::MissingHeader);
        }
        self.pos += 1;
        let relation = self.name("relation name")?;
        self.end_of_line()?;

        let mut ds = Dataset::new(relation, Vec::new());
        loop {
            self.skip_newlines();
            let line = self.line();
            match self.keyword().as_deref() {
                Some("@attribute") => {
                    self.pos += 1;
                    let attr = self.attribute(line)?;
                    if ds.attribute_index(&attr.name).is_some() {
                        return Err(syntax(line, format!("duplicate attribute `{}`", attr.name)));
                    }
                    ds.attributes.push(attr);
                }
                Some("@data") => {
                    self.pos += 1;
                    self.end_of_line()?;
                    break;
                }
                None if self.peek().is_none() => return Ok(ds),
                _ => return Err(syntax(line, "expected `@attribute` or `@data`")),
            }
        }

        loop {
            self.skip_newlines();
            if self.peek().is_none() {
                break;
            }
            let row = self.row(&ds)?;
            ds.rows.push(row);
        }
        Ok(ds)
    }

    fn attribute(&mut self, line: usize) -> Result<Attribute, ArffError> {
        let name = self.name("attribute name")?;
        match self.next() {
            Some(Tok::LBrace) => {}
            Some(Tok::Word(ty)) => {
                let lower = ty.to_ascii_lowercase();
                return Err(
                    if matches!(
                        lower.as_str(),
                        "numeric" | "real" | "integer" | "string" | "date" | "relational"
                    ) {
                        ArffError::UnsupportedAttributeType { line, ty }
                    } else {
                        syntax(line, format!("unknown attribute type `{ty}`"))
                    },
                );
            }
            _ => return Err(syntax(line, "expected `{` after attribute name")),
        }
        let mut values: Vec<String> = Vec::new();
        loop {
            // nominal lists may wrap across lines
            self.skip_newlines();
            let l = self.line();
            let v = match self.next() {
                Some(Tok::Word(w)) | Some(Tok::Quoted(w)) => w,
                Some(Tok::RBrace) if values.is_empty() => break,
                _ => return Err(syntax(l, "malformed nominal specification")),
            };
            if values.contains(&v) {
                return Err(syntax(l, format!("duplicate nominal value `{v}`")));
            }
            values.push(v);
            self.skip_newlines();
            match self.next() {
                Some(Tok::Comma) => continue,
                Some(Tok::RBrace) => break,
                _ => return Err(syntax(l, "expected `,` or `}` in nominal specification")),
            }
        }
        self.end_of_line()?;
        Ok(Attribute { name, values })
    }

    fn row(&mut self, ds: &Dataset) -> Result<Vec<Value>, ArffError> {
        let row_no = ds.rows.len() + 1;
        let line = self.line();
        let mut cells: Vec<(String, bool)> = Vec::new();
        loop {
            match self.next() {
                Some(Tok::Word(w)) => cells.push((w, false)),
                Some(Tok::Quoted(w)) => cells.push((w, true)),
                Some(Tok::LBrace) => return Err(syntax(line, "sparse rows are not supported")),
                _ => return Err(syntax(line, "expected a value")),
            }
            match self.next() {
                Some(Tok::Comma) => continue,
                None | Some(Tok::Newline) => break,
                _ => return Err(syntax(line, "expected `,` between values")),
            }
        }
        if cells.len() != ds.attributes.len() {
            return Err(ArffError::ArityMismatch {
                row: row_no,
                expected: ds.attributes.len(),
                found: cells.len(),
            });
        }
        cells
            .into_iter()
            .zip(&ds.attributes)
            .map(|((v, quoted), attr)| {
                if !quoted && v == "?" {
                    return Ok(Value::Missing);
                }
                attr.index_of(&v)
                    .map(Value::Nominal)
                    .ok_or_else(|| ArffError::UnknownNominalValue {
                        row: row_no,
                        attr: attr.name.clone(),
                        value: v,
                    })
            })
            .collect()
    }
}

fn needs_quotes(s: &str, quote_dots: bool) -> bool {
    s.is_empty()
        || s == "?"
        || s.starts_with('@')
        || s.chars().any(|c| is_delim(c) || c == '\\')
        || (quote_dots && s.contains('.'))
}

fn quote(s: &str, quote_dots: bool) -> String {
    if !needs_quotes(s, quote_dots) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

/// Writes `ds` in the same layout the reader accepts. Values containing a
/// `.` are single-quoted, as process names are in collected data; names are
/// quoted only when they must be.
pub fn emit_arff(ds: &Dataset) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@relation {}", quote(&ds.relation, false));
    for a in &ds.attributes {
        let values: Vec<String> = a.values.iter().map(|v| quote(v, true)).collect();
        let _ = writeln!(out, "@attribute {} {{{}}}", quote(&a.name, false), values.join(","));
    }
    out.push_str("@data\n");
    for row in &ds.rows {
        let cells: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(i, v)| match v {
                Value::Missing => "?".to_string(),
                Value::Nominal(_) => quote(ds.value_name(i, *v), true),
            })
            .collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_only() {
        let ds = parse_arff("@relation r\n@attribute a {0,1}\n@data\n").unwrap();
        assert!(ds.rows.is_empty());
        let ds = parse_arff("@RELATION r\n@Attribute a {0,1}\n").unwrap();
        assert_eq!(ds.attributes.len(), 1);
        assert!(ds.rows.is_empty());
    }

    #[test]
    fn missing_header() {
        assert_eq!(parse_arff("").unwrap_err(), ArffError::MissingHeader);
        assert_eq!(
            parse_arff("@attribute a {0,1}\n").unwrap_err(),
            ArffError::MissingHeader
        );
    }

    #[test]
    fn comments_quotes_and_missing() {
        let text = "% comment\n@relation 'my rel'\n@attribute \"odd name\" {'a b', c}\n@attribute k {x,'?'}\n@data\n'a b',x % trailing\n?,'?'\nc,?\n";
        let ds = parse_arff(text).unwrap();
        assert_eq!(ds.relation, "my rel");
        assert_eq!(ds.attributes[0].name, "odd name");
        assert_eq!(ds.rows[0], vec![Value::Nominal(0), Value::Nominal(0)]);
        assert_eq!(ds.rows[1], vec![Value::Missing, Value::Nominal(1)]);
        assert_eq!(ds.rows[2], vec![Value::Nominal(1), Value::Missing]);
        assert_eq!(parse_arff(&emit_arff(&ds)).unwrap(), ds);
    }

    #[test]
    fn errors() {
        let head = "@relation r\n@attribute a {0,1}\n@attribute b {x,y}\n@data\n";
        assert_eq!(
            parse_arff(&format!("{head}0,x\n1,z\n")).unwrap_err(),
            ArffError::UnknownNominalValue {
                row: 2,
                attr: "b".into(),
                value: "z".into()
            }
        );
        assert_eq!(
            parse_arff(&format!("{head}0\n")).unwrap_err(),
            ArffError::ArityMismatch {
                row: 1,
                expected: 2,
                found: 1
            }
        );
        assert!(matches!(
            parse_arff("@relation r\n@attribute n numeric\n").unwrap_err(),
            ArffError::UnsupportedAttributeType { line: 2, .. }
        ));
        assert!(matches!(
            parse_arff("@relation r\n@attribute s STRING\n").unwrap_err(),
            ArffError::UnsupportedAttributeType { .. }
        ));
        assert!(matches!(
            parse_arff("@relation r\n@attribute a {0,1\n").unwrap_err(),
            ArffError::Syntax { .. }
        ));
        assert!(matches!(
            parse_arff(&format!("{head}{{0 1}}\n")).unwrap_err(),
            ArffError::Syntax { .. }
        ));
    }

    #[test]
    fn labeled_row_parses() {
        let text = "@relation r\n@attribute ProcessName {'com.elite.SMSReceiver'}\n@attribute BootReceiver {0,1}\n@attribute SMSReceiver {0,1}\n@attribute AlarmReceiver {0,1}\n@attribute android.telephony.SmsManager {0,1}\n@attribute ScreenWake {0,1}\n@attribute Class {Regular, Malicious}\n@data\n'com.elite.SMSReceiver',1,1,0,1,1,Malicious\n";
        let ds = parse_arff(text).unwrap();
        assert_eq!(ds.value_name(6, ds.rows[0][6]), "Malicious");
    }

    #[test]
    fn emit_quotes_like_collected_data() {
        let mut ds = Dataset::new(
            "RunningProcessVectors",
            vec![
                Attribute::new("ProcessName", ["com.samsung.ui", "x"]),
                Attribute::new("android.telephony.SmsManager", ["0", "1"]),
                Attribute::new("Class", ["Regular", "Malicious"]),
            ],
        );
        ds.rows.push(vec![Value::Nominal(0), Value::Nominal(1), Value::Missing]);
        let text = emit_arff(&ds);
        assert_eq!(
            text,
            "@relation RunningProcessVectors\n\
             @attribute ProcessName {'com.samsung.ui',x}\n\
             @attribute android.telephony.SmsManager {0,1}\n\
             @attribute Class {Regular,Malicious}\n\
             @data\n\
             'com.samsung.ui',1,?\n"
        );
    }
}
