//! Restricted frontmatter: `key: scalar` and flat string lists, nothing nested.

use std::fmt::Write as _;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FmValue {
    Scalar(String),
    List(Vec<String>),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Frontmatter {
    entries: Vec<(String, FmValue)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub frontmatter: Frontmatter,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FrontmatterError {
    #[error("no opening `---` fence")]
    Missing,
    #[error("frontmatter line {line}: {reason}")]
    Malformed { line: usize, reason: String },
}

impl Frontmatter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, FmValue)] {
        &self.entries
    }

    pub fn get(&self, key: &str) -> Option<&FmValue> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v)
    }

    pub fn scalar(&self, key: &str) -> Option<&str> {
        match self.get(key) {
            Some(FmValue::Scalar(s)) => Some(s),
            _ => None,
        }
    }

    /// A list value, or a single scalar promoted to a one-element list.
    pub fn list(&self, key: &str) -> Option<Vec<String>> {
        match self.get(key)? {
            FmValue::List(v) => Some(v.clone()),
            FmValue::Scalar(s) if s.is_empty() => Some(Vec::new()),
            FmValue::Scalar(s) => Some(vec![s.clone()]),
        }
    }

    pub fn set(&mut self, key: &str, value: FmValue) {
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn set_scalar(&mut self, key: &str, value: impl Into<String>) {
        self.set(key, FmValue::Scalar(value.into()));
    }

    pub fn remove(&mut self, key: &str) -> Option<FmValue> {
        let i = self.entries.iter().position(|(k, _)| k == key)?;
        Some(self.entries.remove(i).1)
    }
}

fn is_key(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
}

fn strip_cr(line: &str) -> &str {
    line.strip_suffix('\r').unwrap_or(line)
}

pub fn parse(text: &str) -> Result<Document, FrontmatterError> {
    let text = text.strip_prefix('\u{feff}').unwrap_or(text);
    let first_end = text.find('\n').unwrap_or(text.len());
    if strip_cr(&text[..first_end]) != "---" {
        return Err(FrontmatterError::Missing);
    }
    let mut pos = (first_end + 1).min(text.len());
    let mut lines = Vec::new();
    let mut body_start = None;
    while pos < text.len() {
        let end = text[pos..].find('\n').map(|i| pos + i).unwrap_or(text.len());
        let line = strip_cr(&text[pos..end]);
        if line == "---" {
            body_start = Some((end + 1).min(text.len()));
            break;
        }
        lines.push(line);
        pos = end + 1;
    }
    let Some(body_start) = body_start else {
        return Err(FrontmatterError::Malformed {
            line: lines.len() + 2,
            reason: "no closing `---` fence".into(),
        });
    };
    let frontmatter = parse_block(&lines)?;
    Ok(Document {
        frontmatter,
        body: text[body_start..].to_string(),
    })
}

fn parse_block(lines: &[&str]) -> Result<Frontmatter, FrontmatterError> {
    let mut fm = Frontmatter::new();
    let mut open_list: Option<String> = None;
    for (i, raw) in lines.iter().enumerate() {
        let line_no = i + 2;
        let bad = |reason: &str| FrontmatterError::Malformed {
            line: line_no,
            reason: reason.to_string(),
        };
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let indented = raw.starts_with(' ') || raw.starts_with('\t');
        if indented || trimmed.starts_with("- ") || trimmed == "-" {
            let Some(key) = open_list.as_ref() else {
                return Err(bad("indented line outside a list"));
            };
            let Some(item) = trimmed.strip_prefix('-') else {
                return Err(bad("nested mappings are not supported"));
            };
            let item = unquote(item.trim()).map_err(|r| bad(&r))?;
            match fm.entries.iter_mut().find(|(k, _)| k == key) {
                Some((_, FmValue::List(v))) => v.push(item),
                Some((_, slot)) => *slot = FmValue::List(vec![item]),
                None => unreachable!("open list key is always registered"),
            }
            continue;
        }
        let Some((key, rest)) = trimmed.split_once(':') else {
            return Err(bad("expected `key: value`"));
        };
        let key = key.trim();
        if !is_key(key) {
            return Err(bad("invalid key"));
        }
        if fm.get(key).is_some() {
            return Err(bad("duplicate key"));
        }
        let rest = rest.trim();
        open_list = None;
        let value = if rest.is_empty() {
            open_list = Some(key.to_string());
            FmValue::Scalar(String::new())
        } else if rest.starts_with('[') {
            FmValue::List(parse_flow_list(rest).map_err(|r| bad(&r))?)
        } else if rest.starts_with('{') {
            return Err(bad("nested mappings are not supported"));
        } else if rest == "|" || rest == ">" || rest.starts_with("|-") || rest.starts_with(">-") {
            return Err(bad("block scalars are not supported"));
        } else {
            FmValue::Scalar(unquote(rest).map_err(|r| bad(&r))?)
        };
        fm.entries.push((key.to_string(), value));
    }
    Ok(fm)
}

fn parse_flow_list(s: &str) -> Result<Vec<String>, String> {
    let inner = s
        .strip_prefix('[')
        .and_then(|t| t.strip_suffix(']'))
        .ok_or("unterminated `[` list")?;
    let mut items = Vec::new();
    let mut cur = String::new();
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for c in inner.chars() {
        match quote {
            Some(q) => {
                cur.push(c);
                if q == '"' && c == '\\' && !escaped {
                    escaped = true;
                    continue;
                }
                if c == q && !escaped {
                    quote = None;
                }
                escaped = false;
            }
            None => match c {
                '"' | '\'' => {
                    quote = Some(c);
                    cur.push(c);
                }
                ',' => {
                    items.push(std::mem::take(&mut cur));
                }
                '[' | ']' | '{' | '}' => return Err("nested collections are not supported".into()),
                _ => cur.push(c),
            },
        }
    }
    if quote.is_some() {
        return Err("unterminated quote".into());
    }
    if !cur.trim().is_empty() || !items.is_empty() {
        items.push(cur);
    }
    items.iter().map(|i| unquote(i.trim())).collect()
}

fn unquote(s: &str) -> Result<String, String> {
    if let Some(inner) = s.strip_prefix('"') {
        let inner = inner.strip_suffix('"').ok_or("unterminated double quote")?;
        let mut out = String::with_capacity(inner.len());
        let mut chars = inner.chars();
        while let Some(c) = chars.next() {
            if c != '\\' {
                out.push(c);
                continue;
            }
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('r') => out.push('\r'),
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                Some(other) => return Err(format!("unknown escape `\\{other}`")),
                None => return Err("dangling backslash".into()),
            }
        }
        return Ok(out);
    }
    if let Some(inner) = s.strip_prefix('\'') {
        let inner = inner.strip_suffix('\'').ok_or("unterminated single quote")?;
        return Ok(inner.replace("''", "'"));
    }
    let plain = match s.find(" #") {
        Some(i) => s[..i].trim_end(),
        None => s,
    };
    Ok(plain.to_string())
}

fn needs_quotes(s: &str) -> bool {
    s.is_empty()
        || s != s.trim()
        || s.starts_with(|c: char| "-?:,[]{}#&*!|>'\"%@`".contains(c))
        || s.contains(": ")
        || s.ends_with(':')
        || s.contains(" #")
        || s.contains(|c: char| c.is_control())
}

fn quote(s: &str) -> String {
    if !needs_quotes(s) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

pub fn serialize(doc: &Document) -> String {
    let mut out = String::from("---\n");
    for (key, value) in &doc.frontmatter.entries {
        match value {
            FmValue::Scalar(s) => {
                let _ = writeln!(out, "{key}: {}", quote(s));
            }
            FmValue::List(items) if items.is_empty() => {
                let _ = writeln!(out, "{key}: []");
            }
            FmValue::List(items) => {
                let _ = writeln!(out, "{key}:");
                for item in items {
                    let _ = writeln!(out, "  - {}", quote(item));
                }
            }
        }
    }
    out.push_str("---\n");
    out.push_str(&doc.body);
    out
}
