//! Inline `key: value` directives attached to a command line.

use serde::{Deserialize, Serialize};

use super::effort::Preset;
use super::OrchestratorError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "key", content = "value", rename_all = "snake_case")]
pub enum Directive {
    Effort(Preset),
    Reviewer(String),
    HumanCheckpoint(bool),
    AutoWrite(bool),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedDirectives {
    pub directives: Vec<Directive>,
    /// `key: value` pairs whose key is not a directive; reported, not fatal.
    pub unknown: Vec<(String, String)>,
    /// Words that are not part of any directive.
    pub rest: Vec<String>,
}

fn canonical_key(key: &str) -> String {
    key.trim().to_ascii_lowercase().replace([' ', '-'], "_")
}

fn parse_bool(key: &str, v: &str) -> Result<bool, OrchestratorError> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" => Ok(true),
        "false" | "no" | "off" => Ok(false),
        _ => Err(OrchestratorError::InvalidValue { key: key.into(), value: v.into() }),
    }
}

fn directive(key: &str, value: &str) -> Result<Option<Directive>, OrchestratorError> {
    let d = match key {
        "effort" => Directive::Effort(
            value
                .parse()
                .map_err(|_| OrchestratorError::InvalidValue { key: key.into(), value: value.into() })?,
        ),
        "reviewer" => {
            if value.is_empty() || value.contains(char::is_whitespace) {
                return Err(OrchestratorError::InvalidValue { key: key.into(), value: value.into() });
            }
            Directive::Reviewer(value.into())
        }
        "human_checkpoint" => Directive::HumanCheckpoint(parse_bool(key, value)?),
        "auto_write" => Directive::AutoWrite(parse_bool(key, value)?),
        _ => return Ok(None),
    };
    Ok(Some(d))
}

/// Extract directives from free text. Both `effort: max` and `effort:max`
/// are accepted, and the two-word key `human checkpoint: true` as well.
pub fn parse_directives(text: &str) -> Result<ParsedDirectives, OrchestratorError> {
    let words: Vec<&str> = text.split_whitespace().collect();
    let mut out = ParsedDirectives::default();
    let mut i = 0;
    while i < words.len() {
        let w = words[i];
        // "human checkpoint: true"
        if w.eq_ignore_ascii_case("human") && i + 1 < words.len() && words[i + 1].to_ascii_lowercase().starts_with("checkpoint:") {
            let joined = format!("human {}", words[i + 1]);
            let (k, v, used) = split_pair(&joined, words.get(i + 2).copied());
            push(&mut out, &k, &v)?;
            i += 1 + used;
            continue;
        }
        match w.find(':') {
            Some(pos) if pos > 0 && !w[..pos].contains('/') && !w[pos + 1..].starts_with("//") => {
                let (k, v, used) = split_pair(w, words.get(i + 1).copied());
                push(&mut out, &k, &v)?;
                i += used;
            }
            _ => {
                out.rest.push(w.to_string());
                i += 1;
            }
        }
    }
    Ok(out)
}

/// Split `key:value` or `key:` + next word; returns words consumed.
fn split_pair(word: &str, next: Option<&str>) -> (String, String, usize) {
    let pos = word.find(':').expect("caller checked");
    let key = canonical_key(&word[..pos]);
    let inline = &word[pos + 1..];
    if inline.is_empty() {
        match next {
            Some(n) => (key, n.to_string(), 2),
            None => (key, String::new(), 1),
        }
    } else {
        (key, inline.to_string(), 1)
    }
}

fn push(out: &mut ParsedDirectives, key: &str, value: &str) -> Result<(), OrchestratorError> {
    match directive(key, value)? {
        Some(d) => out.directives.push(d),
        None => out.unknown.push((key.to_string(), value.to_string())),
    }
    Ok(())
}

/// Directive values in effect for one run; later directives win.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunDirectives {
    pub effort: Option<Preset>,
    pub reviewer: Option<String>,
    pub human_checkpoint: bool,
    pub auto_write: bool,
}

impl Default for RunDirectives {
    fn default() -> Self {
        Self { effort: None, reviewer: None, human_checkpoint: false, auto_write: true }
    }
}

impl RunDirectives {
    pub fn from_list(list: &[Directive]) -> Self {
        let mut d = Self::default();
        for x in list {
            match x {
                Directive::Effort(p) => d.effort = Some(*p),
                Directive::Reviewer(r) => d.reviewer = Some(r.clone()),
                Directive::HumanCheckpoint(b) => d.human_checkpoint = *b,
                Directive::AutoWrite(b) => d.auto_write = *b,
            }
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_the_documented_forms() {
        let p = parse_directives("effort: max").unwrap();
        assert_eq!(p.directives, vec![Directive::Effort(Preset::Max)]);
        let p = parse_directives("reviewer: oracle-pro").unwrap();
        assert_eq!(p.directives, vec![Directive::Reviewer("oracle-pro".into())]);
        let p = parse_directives("draft.md human checkpoint: true auto_write:false").unwrap();
        assert_eq!(p.directives, vec![Directive::HumanCheckpoint(true), Directive::AutoWrite(false)]);
        assert_eq!(p.rest, vec!["draft.md"]);
    }

    #[test]
    fn bad_effort_is_an_error_and_unknown_keys_are_kept() {
        assert!(matches!(parse_directives("effort: turbo"), Err(OrchestratorError::InvalidValue { .. })));
        let p = parse_directives("venue: neurips effort:lite").unwrap();
        assert_eq!(p.unknown, vec![("venue".to_string(), "neurips".to_string())]);
        assert_eq!(p.directives, vec![Directive::Effort(Preset::Lite)]);
    }

    #[test]
    fn urls_are_not_directives() {
        let p = parse_directives("https://example.org/x").unwrap();
        assert!(p.directives.is_empty() && p.unknown.is_empty());
        assert_eq!(p.rest.len(), 1);
    }

    #[test]
    fn later_directives_win() {
        let d = RunDirectives::from_list(&[Directive::Effort(Preset::Lite), Directive::Effort(Preset::Beast)]);
        assert_eq!(d.effort, Some(Preset::Beast));
        assert!(d.auto_write);
    }
}
