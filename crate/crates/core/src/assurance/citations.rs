//! Three-axis citation audit. Output is advisory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ask_reviewer, md_cell, parse_block, write_report, AssuranceError};
use crate::review::{AccessScope, ReviewEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Recommendation {
    Keep,
    Fix,
    Replace,
    Remove,
}

impl Recommendation {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Keep => "KEEP",
            Self::Fix => "FIX",
            Self::Replace => "REPLACE",
            Self::Remove => "REMOVE",
        }
    }
}

pub fn recommend(existence: AxisVerdict, metadata: AxisVerdict, context: AxisVerdict, replaceable: bool) -> Recommendation {
    use AxisVerdict::*;
    match (existence, metadata, context) {
        (Fail, _, _) if replaceable => Recommendation::Replace,
        (Fail, _, _) => Recommendation::Remove,
        (Pass, Pass, Pass) => Recommendation::Keep,
        _ => Recommendation::Fix,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CitationEntry {
    pub cite_key: String,
    pub existence: AxisVerdict,
    pub metadata: AxisVerdict,
    pub context: AxisVerdict,
    pub recommendation: Recommendation,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BibEntry {
    pub entry_type: String,
    pub key: String,
    pub fields: BTreeMap<String, String>,
}

fn bib_head() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@(\w+)\s*\{\s*([^,\s]+)\s*,").expect("valid regex"))
}

fn bib_field() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r#"(?s)(\w+)\s*=\s*(?:\{((?:[^{}]|\{[^{}]*\})*)\}|"([^"]*)"|(\w+))"#).expect("valid regex"))
}

/// Minimal BibTeX reader: entry type, key and flat fields.
pub fn parse_bib(text: &str) -> Vec<BibEntry> {
    let heads: Vec<_> = bib_head().captures_iter(text).collect();
    let mut out = Vec::new();
    for (i, h) in heads.iter().enumerate() {
        let start = h.get(0).expect("match").end();
        let end = heads.get(i + 1).map_or(text.len(), |n| n.get(0).expect("match").start());
        let body = &text[start..end];
        let fields = bib_field()
            .captures_iter(body)
            .map(|c| {
                let v = c.get(2).or_else(|| c.get(3)).or_else(|| c.get(4)).map_or("", |m| m.as_str());
                (c[1].to_ascii_lowercase(), v.split_whitespace().collect::<Vec<_>>().join(" "))
            })
            .collect();
        out.push(BibEntry { entry_type: h[1].to_ascii_lowercase(), key: h[2].to_string(), fields });
    }
    out
}

fn cite_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\\cite[tp]?\*?(?:\[[^\]]*\])*\{([^}]*)\}|\[@([\w:.\-]+)(?:;\s*@[\w:.\-]+)*\]|@([\w:.\-]+)").expect("valid regex"))
}

fn pandoc_keys() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"@([\w:.\-]+)").expect("valid regex"))
}

/// Cited keys with the sentence around each use, in first-use order.
pub fn citation_contexts(text: &str) -> Vec<(String, Vec<String>)> {
    let mut order: Vec<String> = Vec::new();
    let mut contexts: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for c in cite_regex().captures_iter(text) {
        let whole = c.get(0).expect("match");
        let keys: Vec<String> = if let Some(k) = c.get(1) {
            k.as_str().split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect()
        } else if c.get(2).is_some() {
            pandoc_keys().captures_iter(whole.as_str()).map(|m| m[1].to_string()).collect()
        } else {
            // a bare @key only counts outside e-mail addresses and bib entries
            let prev = text[..whole.start()].chars().last();
            if prev.is_some_and(|ch| ch.is_alphanumeric()) || text[whole.end()..].starts_with('{') {
                continue;
            }
            vec![c[3].to_string()]
        };
        let s = text[..whole.start()].rfind(['.', '\n']).map_or(0, |i| i + 1);
        let e = text[whole.end()..].find(['.', '\n']).map_or(text.len(), |i| whole.end() + i + 1);
        let sentence = text[s..e].trim().to_string();
        for k in keys {
            if !contexts.contains_key(&k) {
                order.push(k.clone());
            }
            let list = contexts.entry(k).or_default();
            if !list.contains(&sentence) {
                list.push(sentence.clone());
            }
        }
    }
    order.into_iter().map(|k| { let v = contexts.remove(&k).unwrap_or_default(); (k, v) }).collect()
}

/// Bibliographic lookups a reviewer may consult. The bundled stub answers
/// offline so that the audit never silently reaches the network.
pub trait CitationLookup {
    fn lookup(&self, entry: Option<&BibEntry>, key: &str) -> String;
}

pub struct OfflineLookup;

impl CitationLookup for OfflineLookup {
    fn lookup(&self, _entry: Option<&BibEntry>, key: &str) -> String {
        format!("lookup unavailable offline for {key}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Existence,
    Metadata,
    Context,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Existence, Axis::Metadata, Axis::Context];

    fn task(self) -> &'static str {
        match self {
            Self::Existence => "citation-audit-existence",
            Self::Metadata => "citation-audit-metadata",
            Self::Context => "citation-audit-context",
        }
    }

    fn question(self) -> &'static str {
        match self {
            Self::Existence => "Does each cited work exist? If not, say whether a real work could replace it.",
            Self::Metadata => "Are authors, title, venue and year of each entry correct?",
            Self::Context => "Does each cited work support the sentence that cites it?",
        }
    }
}

#[derive(Debug, Deserialize)]
struct AxisLine {
    cite_key: String,
    verdict: AxisVerdict,
    #[serde(default)]
    replaceable: bool,
    #[serde(default)]
    note: String,
}

/// One fresh reviewer per axis; the recommendation is computed locally.
pub fn audit_citations(
    env: &ReviewEnv,
    route: &str,
    manuscript: &Path,
    bib: &Path,
    lookup: &dyn CitationLookup,
) -> Result<Vec<CitationEntry>, AssuranceError> {
    let text = std::fs::read_to_string(env.project_root.join(manuscript))?;
    let entries: BTreeMap<String, BibEntry> = parse_bib(&std::fs::read_to_string(env.project_root.join(bib))?)
        .into_iter()
        .map(|e| (e.key.clone(), e))
        .collect();
    let cited = citation_contexts(&text);
    if cited.is_empty() {
        return Ok(Vec::new());
    }
    let mut listing = String::from("Citations:\n");
    for (key, ctx) in &cited {
        let entry = entries.get(key);
        let _ = writeln!(listing, "- {key}");
        match entry {
            Some(e) => {
                let fields: Vec<String> = e.fields.iter().map(|(k, v)| format!("{k}={v}")).collect();
                let _ = writeln!(listing, "  entry: @{} {}", e.entry_type, fields.join("; "));
            }
            None => listing.push_str("  entry: missing from the bibliography\n"),
        }
        let _ = writeln!(listing, "  lookup: {}", lookup.lookup(entry, key));
        for s in ctx {
            let _ = writeln!(listing, "  context: {s}");
        }
    }

    let mut verdicts: BTreeMap<String, Vec<AxisLine>> = BTreeMap::new();
    let paths = [manuscript.to_path_buf(), bib.to_path_buf()];
    let mut per_axis = Vec::new();
    for axis in Axis::ALL {
        let extra = format!(
            "{listing}\n{}\nReply with a fenced block tagged `verdicts` holding a JSON list of \
             {{\"cite_key\", \"verdict\": \"pass\"|\"fail\", \"replaceable\", \"note\"}}, one per citation.",
            axis.question()
        );
        let reply = ask_reviewer(env, route, AccessScope::DocumentOnly, axis.task(), "Audit the manuscript's citations", &paths, &extra)?;
        let lines: Vec<AxisLine> = parse_block(&reply, "verdicts").map_err(AssuranceError::UnparseableReply)?;
        per_axis.push(lines);
    }
    for (axis, lines) in Axis::ALL.iter().zip(per_axis) {
        for l in lines {
            if !cited.iter().any(|(k, _)| *k == l.cite_key) {
                return Err(AssuranceError::UnparseableReply(format!("{axis:?} verdict for uncited key `{}`", l.cite_key)));
            }
            verdicts.entry(l.cite_key.clone()).or_default().push(l);
        }
    }

    let mut out = Vec::new();
    for (key, _) in &cited {
        let lines = verdicts.remove(key).unwrap_or_default();
        if lines.len() != 3 {
            return Err(AssuranceError::UnparseableReply(format!("expected 3 axis verdicts for `{key}`, got {}", lines.len())));
        }
        let (e, m, c) = (&lines[0], &lines[1], &lines[2]);
        let notes = lines.iter().filter(|l| !l.note.is_empty()).map(|l| l.note.clone()).collect();
        out.push(CitationEntry {
            cite_key: key.clone(),
            existence: e.verdict,
            metadata: m.verdict,
            context: c.verdict,
            recommendation: recommend(e.verdict, m.verdict, c.verdict, e.replaceable),
            notes,
        });
    }
    Ok(out)
}

pub fn citations_markdown(entries: &[CitationEntry]) -> String {
    let mut out = String::from("# Citation audit\n\nAdvisory. Apply changes only after human approval.\n\n| Key | Existence | Metadata | Context | Recommendation | Notes |\n|---|---|---|---|---|---|\n");
    let show = |v: AxisVerdict| if v == AxisVerdict::Pass { "pass" } else { "fail" };
    for e in entries {
        let _ = writeln!(
            out,
            "| {} | {} | {} | {} | {} | {} |",
            md_cell(&e.cite_key),
            show(e.existence),
            show(e.metadata),
            show(e.context),
            e.recommendation.as_str(),
            md_cell(&e.notes.join("; "))
        );
    }
    out
}

pub fn write_citation_audit(dir: &Path, entries: &[CitationEntry]) -> std::io::Result<(PathBuf, PathBuf)> {
    write_report(dir, "CITATION_AUDIT.md", &citations_markdown(entries), "citation_audit.json", &entries)
}
