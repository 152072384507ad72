//! Reading and writing of ARFF (Attribute Relation File Format) documents.
//!
//! The accepted dialect:
//!
//! * lines starting with `%` are comments, blank lines are skipped;
//! * `@relation`, `@attribute` and `@data` keywords are case-insensitive;
//! * attribute types are `numeric`, `real`, `integer` (all numeric), `string`
//!   or a nominal set `{a,b,...}`;
//! * `?` is a missing value;
//! * names and values may be wrapped in single (or double) quotes, inside
//!   which `\` escapes the next character.
//!
//! Date/relational attributes and sparse `{index value}` rows are rejected.

use std::fmt::Write as _;
use std::io::{self, Read};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq)]
pub enum AttributeKind {
    Numeric,
    Nominal(Vec<String>),
    StringAttr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttributeDecl {
    pub name: String,
    pub kind: AttributeKind,
}

impl AttributeDecl {
    pub fn numeric(name: impl Into<String>) -> Self {
        AttributeDecl { name: name.into(), kind: AttributeKind::Numeric }
    }

    pub fn nominal<S: Into<String>>(name: impl Into<String>, categories: impl IntoIterator<Item = S>) -> Self {
        AttributeDecl {
            name: name.into(),
            kind: AttributeKind::Nominal(categories.into_iter().map(Into::into).collect()),
        }
    }

    pub fn string(name: impl Into<String>) -> Self {
        AttributeDecl { name: name.into(), kind: AttributeKind::StringAttr }
    }

    /// Categories of a nominal attribute, `None` otherwise.
    pub fn categories(&self) -> Option<&[String]> {
        match &self.kind {
            AttributeKind::Nominal(c) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ArffValue {
    Num(f64),
    /// Index into the declaring attribute's category list.
    Nom(usize),
    Str(String),
    Missing,
}

impl ArffValue {
    pub fn is_missing(&self) -> bool {
        matches!(self, ArffValue::Missing)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArffRelation {
    pub relation_name: String,
    pub attributes: Vec<AttributeDecl>,
    pub rows: Vec<Vec<ArffValue>>,
}

impl ArffRelation {
    pub fn new(relation_name: impl Into<String>, attributes: Vec<AttributeDecl>) -> Self {
        ArffRelation { relation_name: relation_name.into(), attributes, rows: Vec::new() }
    }

    pub fn missing_count(&self) -> usize {
        self.rows.iter().flatten().filter(|v| v.is_missing()).count()
    }

    /// Checks the row/attribute invariants. Relations produced by
    /// [`parse_arff`] always pass.
    pub fn validate(&self) -> Result<(), String> {
        if self.relation_name.is_empty() {
            return Err("empty relation name".into());
        }
        for attr in &self.attributes {
            check_attribute(attr)?;
        }
        for (r, row) in self.rows.iter().enumerate() {
            if row.len() != self.attributes.len() {
                return Err(format!("row {r}: {} values for {} attributes", row.len(), self.attributes.len()));
            }
            for (value, attr) in row.iter().zip(&self.attributes) {
                let ok = match (value, &attr.kind) {
                    (ArffValue::Missing, _) => true,
                    (ArffValue::Num(x), AttributeKind::Numeric) => x.is_finite(),
                    (ArffValue::Nom(i), AttributeKind::Nominal(c)) => *i < c.len(),
                    (ArffValue::Str(_), AttributeKind::StringAttr) => true,
                    _ => false,
                };
                if !ok {
                    return Err(format!("row {r}: value {value:?} invalid for attribute '{}'", attr.name));
                }
            }
        }
        Ok(())
    }
}

fn check_attribute(attr: &AttributeDecl) -> Result<(), String> {
    if attr.name.is_empty() {
        return Err("empty attribute name".into());
    }
    if let AttributeKind::Nominal(cats) = &attr.kind {
        if cats.is_empty() {
            return Err(format!("attribute '{}' has an empty category list", attr.name));
        }
        for (i, c) in cats.iter().enumerate() {
            if cats[..i].contains(c) {
                return Err(format!("attribute '{}' declares category '{c}' twice", attr.name));
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ArffErrorKind {
    Syntax(String),
    Arity { expected: usize, found: usize },
    Domain(String),
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {}", describe(.kind))]
pub struct ArffError {
    pub line: usize,
    pub kind: ArffErrorKind,
}

fn describe(kind: &ArffErrorKind) -> String {
    match kind {
        ArffErrorKind::Syntax(m) => format!("syntax error: {m}"),
        ArffErrorKind::Arity { expected, found } => {
            format!("arity error: expected {expected} values, found {found}")
        }
        ArffErrorKind::Domain(m) => format!("domain error: {m}"),
        ArffErrorKind::Unsupported(m) => format!("unsupported: {m}"),
    }
}

#[derive(Debug, Error)]
pub enum ArffReadError {
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: ArffError },
}

fn err(line: usize, kind: ArffErrorKind) -> ArffError {
    ArffError { line, kind }
}

fn syntax(line: usize, msg: impl Into<String>) -> ArffError {
    err(line, ArffErrorKind::Syntax(msg.into()))
}

/// Reads and parses an ARFF file from disk.
pub fn read_arff_file(path: impl AsRef<Path>) -> Result<ArffRelation, ArffReadError> {
    let path = path.as_ref();
    let display = path.display().to_string();
    let mut text = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut text))
        .map_err(|source| ArffReadError::Io { path: display.clone(), source })?;
    parse_arff(&text).map_err(|source| ArffReadError::Parse { path: display, source })
}

#[derive(PartialEq)]
enum Section {
    Header,
    Data,
}

/// Parses an ARFF document.
pub fn parse_arff(input: &str) -> Result<ArffRelation, ArffError> {
    let mut relation_name: Option<String> = None;
    let mut attributes: Vec<AttributeDecl> = Vec::new();
    let mut rows = Vec::new();
    let mut section = Section::Header;
    let mut last_line = 0;

    for (idx, raw) in input.split('\n').enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw).trim();
        if line.is_empty() || line.starts_with('%') {
            continue;
        }
        last_line = line_no;
        match section {
            Section::Header => {
                let (keyword, rest) = split_keyword(line);
                match keyword.to_ascii_lowercase().as_str() {
                    "@relation" => {
                        if relation_name.is_some() {
                            return Err(syntax(line_no, "duplicate @relation"));
                        }
                        if !attributes.is_empty() {
                            return Err(syntax(line_no, "@relation must precede @attribute"));
                        }
                        let (name, tail) = take_token(rest, line_no)?;
                        if !tail.trim().is_empty() {
                            return Err(syntax(line_no, format!("trailing text after relation name: '{}'", tail.trim())));
                        }
                        relation_name = Some(name);
                    }
                    "@attribute" => {
                        if relation_name.is_none() {
                            return Err(syntax(line_no, "@attribute before @relation"));
                        }
                        let attr = parse_attribute(rest, line_no)?;
                        if attributes.iter().any(|a| a.name == attr.name) {
                            return Err(syntax(line_no, format!("duplicate attribute name '{}'", attr.name)));
                        }
                        attributes.push(attr);
                    }
                    "@data" => {
                        if relation_name.is_none() {
                            return Err(syntax(line_no, "@data before @relation"));
                        }
                        if !rest.trim().is_empty() {
                            return Err(syntax(line_no, "unexpected text after @data"));
                        }
                        section = Section::Data;
                    }
                    other => {
                        return Err(syntax(line_no, format!("unexpected header line starting with '{other}'")));
                    }
                }
            }
            Section::Data => {
                if line.starts_with('{') {
                    return Err(err(line_no, ArffErrorKind::Unsupported("sparse ARFF rows".into())));
                }
                rows.push(parse_row(line, &attributes, line_no)?);
            }
        }
    }

    if section != Section::Data {
        return Err(syntax(last_line.max(1), "missing @data section"));
    }
    let relation_name = relation_name.expect("checked before @data");
    Ok(ArffRelation { relation_name, attributes, rows })
}

fn split_keyword(line: &str) -> (&str, &str) {
    match line.find(char::is_whitespace) {
        Some(pos) => (&line[..pos], &line[pos..]),
        None => (line, ""),
    }
}

/// Reads one name token (quoted or bare, whitespace-delimited) from the start
/// of `s` and returns it with the unconsumed remainder.
fn take_token(s: &str, line: usize) -> Result<(String, &str), ArffError> {
    let s = s.trim_start();
    let mut chars = s.char_indices();
    match chars.next() {
        None => Err(syntax(line, "expected a name")),
        Some((_, q @ ('\'' | '"'))) => {
            let mut out = String::new();
            let mut escaped = false;
            for (pos, c) in chars {
                if escaped {
                    out.push(c);
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    if out.is_empty() {
                        return Err(syntax(line, "empty quoted name"));
                    }
                    return Ok((out, &s[pos + c.len_utf8()..]));
                } else {
                    out.push(c);
                }
            }
            Err(syntax(line, "unterminated quote"))
        }
        Some(_) => {
            let end = s.find(char::is_whitespace).unwrap_or(s.len());
            Ok((s[..end].to_string(), &s[end..]))
        }
    }
}

fn parse_attribute(rest: &str, line: usize) -> Result<AttributeDecl, ArffError> {
    let (name, type_text) = take_token(rest, line)?;
    let type_text = type_text.trim();
    if type_text.is_empty() {
        return Err(syntax(line, format!("attribute '{name}' has no type")));
    }
    let kind = if let Some(inner) = type_text.strip_prefix('{') {
        let inner = inner
            .strip_suffix('}')
            .ok_or_else(|| syntax(line, format!("unterminated nominal set for '{name}'")))?;
        let cats = split_values(inner, line)?
            .into_iter()
            .map(|tok| match tok {
                Token::Quoted(s) => Ok(s),
                Token::Bare(s) if !s.is_empty() => Ok(s),
                Token::Bare(_) => Err(syntax(line, format!("empty category in nominal set of '{name}'"))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        let decl = AttributeDecl { name, kind: AttributeKind::Nominal(cats) };
        check_attribute(&decl).map_err(|m| syntax(line, m))?;
        return Ok(decl);
    } else {
        let lower = type_text.to_ascii_lowercase();
        let word = lower.split_whitespace().next().unwrap_or("");
        match word {
            "numeric" | "real" | "integer" => AttributeKind::Numeric,
            "string" => AttributeKind::StringAttr,
            "date" | "relational" => {
                return Err(err(line, ArffErrorKind::Unsupported(format!("{word} attribute '{name}'"))));
            }
            other => return Err(syntax(line, format!("unknown attribute type '{other}' for '{name}'"))),
        }
    };
    Ok(AttributeDecl { name, kind })
}

#[derive(Debug)]
enum Token {
    Bare(String),
    Quoted(String),
}

/// Splits a comma-separated value list, honouring quotes and trimming
/// whitespace around unquoted tokens.
fn split_values(s: &str, line: usize) -> Result<Vec<Token>, ArffError> {
    let mut out = Vec::new();
    let mut chars = s.chars().peekable();
    loop {
        while chars.peek().is_some_and(|c| c.is_whitespace()) {
            chars.next();
        }
        let token = match chars.peek() {
            Some(&q @ ('\'' | '"')) => {
                chars.next();
                let mut buf = String::new();
                let mut closed = false;
                while let Some(c) = chars.next() {
                    if c == '\\' {
                        match chars.next() {
                            Some(e) => buf.push(e),
                            None => break,
                        }
                    } else if c == q {
                        closed = true;
                        break;
                    } else {
                        buf.push(c);
                    }
                }
                if !closed {
                    return Err(syntax(line, "unterminated quote"));
                }
                while chars.peek().is_some_and(|c| c.is_whitespace()) {
                    chars.next();
                }
                match chars.peek() {
                    None | Some(',') => {}
                    Some(c) => return Err(syntax(line, format!("unexpected '{c}' after quoted value"))),
                }
                Token::Quoted(buf)
            }
            _ => {
                let mut buf = String::new();
                while let Some(&c) = chars.peek() {
                    if c == ',' {
                        break;
                    }
                    buf.push(c);
                    chars.next();
                }
                Token::Bare(buf.trim_end().to_string())
            }
        };
        out.push(token);
        match chars.next() {
            Some(',') => continue,
            None => break,
            Some(c) => return Err(syntax(line, format!("unexpected '{c}'"))),
        }
    }
    Ok(out)
}

fn parse_row(line: &str, attributes: &[AttributeDecl], line_no: usize) -> Result<Vec<ArffValue>, ArffError> {
    let tokens = split_values(line, line_no)?;
    if tokens.len() != attributes.len() {
        return Err(err(line_no, ArffErrorKind::Arity { expected: attributes.len(), found: tokens.len() }));
    }
    tokens
        .into_iter()
        .zip(attributes)
        .map(|(tok, attr)| {
            let text = match tok {
                Token::Bare(s) if s == "?" => return Ok(ArffValue::Missing),
                Token::Bare(s) => s,
                Token::Quoted(s) => s,
            };
            match &attr.kind {
                AttributeKind::Numeric => match text.parse::<f64>() {
                    Ok(x) if x.is_finite() => Ok(ArffValue::Num(x)),
                    _ => Err(err(
                        line_no,
                        ArffErrorKind::Domain(format!("'{text}' is not a finite number (attribute '{}')", attr.name)),
                    )),
                },
                AttributeKind::Nominal(cats) => cats.iter().position(|c| *c == text).map(ArffValue::Nom).ok_or_else(|| {
                    err(
                        line_no,
                        ArffErrorKind::Domain(format!("'{text}' is not a declared category of '{}'", attr.name)),
                    )
                }),
                AttributeKind::StringAttr => Ok(ArffValue::Str(text)),
            }
        })
        .collect()
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s == "?"
        || s.starts_with('%')
        || s.starts_with('{')
        || s.starts_with('@')
        || s.chars().any(|c| c.is_whitespace() || matches!(c, ',' | '\'' | '"' | '}' | '{'))
}

fn quote(s: &str) -> String {
    if !needs_quotes(s) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        if c == '\'' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('\'');
    out
}

/// Formats a float so that parsing it back yields the identical bits.
pub fn format_f64(x: f64) -> String {
    let a = x.abs();
    if a != 0.0 && !(1e-5..1e16).contains(&a) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Serializes a relation. The output re-parses to an identical relation.
pub fn write_arff(relation: &ArffRelation) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "@relation {}", quote(&relation.relation_name));
    out.push('\n');
    for attr in &relation.attributes {
        let ty = match &attr.kind {
            AttributeKind::Numeric => "numeric".to_string(),
            AttributeKind::StringAttr => "string".to_string(),
            AttributeKind::Nominal(cats) => {
                format!("{{{}}}", cats.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","))
            }
        };
        let _ = writeln!(out, "@attribute {} {}", quote(&attr.name), ty);
    }
    out.push_str("\n@data\n");
    for row in &relation.rows {
        let fields: Vec<String> = row
            .iter()
            .zip(&relation.attributes)
            .map(|(v, attr)| match v {
                ArffValue::Missing => "?".to_string(),
                ArffValue::Num(x) => format_f64(*x),
                ArffValue::Nom(i) => quote(&attr.categories().expect("nominal value on nominal attribute")[*i]),
                ArffValue::Str(s) => quote(s),
            })
            .collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
