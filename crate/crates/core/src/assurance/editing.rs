//! The five post-drafting editing passes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use similar::{DiffOp, TextDiff};

use super::numeric::{numeric_compare, Dec, NumericStatus};
use super::stage3::{classify, extract_quantitative_claims, ClaimAuditStatus, Evidence};
use super::{md_cell, parse_block, write_report, AssuranceError};
use crate::bridges::{Bridges, CostLedger, Message};

pub const PASS_NAMES: [&str; 5] = [
    "Clutter removal",
    "Active voice",
    "Sentence structure",
    "Terminology consistency",
    "Numerical consistency",
];

const PASS_INSTRUCTIONS: [&str; 3] = [
    "Delete filler words, redundant qualifiers and throat-clearing phrases. Keep every technical statement.",
    "Rewrite passive constructions in active voice where the agent is known.",
    "Split overlong sentences and put the main clause first. Do not change meaning.",
];

/// Variant groups for the terminology pass. The first member used in the
/// methods section becomes canonical.
pub const DEFAULT_TERM_GROUPS: &[&[&str]] = &[
    &["validation split", "validation set", "dev set", "development set", "held-out set"],
    &["training split", "training set", "train split", "training data"],
    &["test split", "test set", "evaluation split"],
    &["learning rate", "step size"],
    &["baseline", "reference method"],
    &["fine-tuning", "finetuning", "fine tuning"],
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PassEntry {
    pub pass: u8,
    pub name: String,
    pub change_count: usize,
    pub checks: usize,
    pub issues: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct EditingPassReport {
    pub passes: Vec<PassEntry>,
    /// canonical term per group, as chosen by pass 4
    pub term_table: BTreeMap<String, String>,
}

impl EditingPassReport {
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Editing passes\n\n| # | Pass | Changes | Checks | Issues |\n|---|---|---|---|---|\n");
        for p in &self.passes {
            let _ = writeln!(out, "| {} | {} | {} | {} | {} |", p.pass, p.name, p.change_count, p.checks, p.issues.len());
        }
        if !self.term_table.is_empty() {
            out.push_str("\n## Term table\n\n");
            for (group, canon) in &self.term_table {
                let _ = writeln!(out, "- {group}: {canon}");
            }
        }
        for p in self.passes.iter().filter(|p| !p.issues.is_empty()) {
            let _ = writeln!(out, "\n## Pass {} issues\n", p.pass);
            for i in &p.issues {
                let _ = writeln!(out, "- {}", md_cell(i));
            }
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        write_report(dir, "EDITING_PASSES.md", &self.to_markdown(), "editing_passes.json", self)
    }
}

#[derive(Debug, Deserialize)]
struct Edit {
    find: String,
    replace: String,
}

/// Lines touched between two versions; a replaced hunk counts its longer side.
pub fn changed_lines(before: &str, after: &str) -> usize {
    TextDiff::from_lines(before, after)
        .ops()
        .iter()
        .map(|op| match *op {
            DiffOp::Equal { .. } => 0,
            DiffOp::Delete { old_len, .. } => old_len,
            DiffOp::Insert { new_len, .. } => new_len,
            DiffOp::Replace { old_len, new_len, .. } => old_len.max(new_len),
        })
        .sum()
}

fn delegated_pass(
    bridges: &Bridges,
    route: &str,
    ledger: Option<&CostLedger>,
    n: usize,
    draft: &str,
) -> Result<(String, PassEntry), AssuranceError> {
    let prompt = format!(
        "Task: editing-pass-{}\nPass: {}\n{}\nReply with a fenced block tagged `edits` holding a JSON list of \
         {{\"find\": ..., \"replace\": ...}} objects. An empty list leaves the draft unchanged.\n\n```draft\n{draft}\n```\n",
        n + 1,
        PASS_NAMES[n],
        PASS_INSTRUCTIONS[n]
    );
    let msgs = [Message::system("You are a careful copy editor."), Message::user(prompt)];
    let reply = bridges.send_chat(route, &msgs, ledger)?.reply;
    let edits: Vec<Edit> = parse_block(&reply, "edits").map_err(AssuranceError::UnparseableReply)?;
    let mut out = draft.to_string();
    let mut issues = Vec::new();
    for e in &edits {
        if e.find.is_empty() || !out.contains(&e.find) {
            issues.push(format!("edit not applied: `{}` not found", e.find));
            continue;
        }
        out = out.replacen(&e.find, &e.replace, 1);
    }
    let entry = PassEntry {
        pass: n as u8 + 1,
        name: PASS_NAMES[n].into(),
        change_count: changed_lines(draft, &out),
        checks: edits.len(),
        issues,
    };
    Ok((out, entry))
}

fn methods_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^(?:#+\s*(?:\d+\.?\s*)?methods?\b|\\section\*?\{methods?\b).*$").expect("valid regex"))
}

fn any_heading() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?m)^(?:#+\s|\\section).*$").expect("valid regex"))
}

/// Text of the methods section, or the whole draft when there is none.
pub fn methods_section(draft: &str) -> &str {
    let Some(h) = methods_heading().find(draft) else { return draft };
    let rest = &draft[h.end()..];
    let end = any_heading().find(rest).map_or(rest.len(), |m| m.start());
    &rest[..end]
}

fn term_regex(term: &str) -> Regex {
    Regex::new(&format!(r"(?i)\b{}\b", regex::escape(term))).expect("escaped term")
}

/// Pass 4: pick one term per group from the methods section and flag every
/// other variant used anywhere in the draft.
pub fn terminology_pass(draft: &str, groups: &[&[&str]]) -> (PassEntry, BTreeMap<String, String>) {
    let methods = methods_section(draft);
    let mut table = BTreeMap::new();
    let mut issues = Vec::new();
    let mut checks = 0;
    for group in groups {
        let patterns: Vec<Regex> = group.iter().map(|t| term_regex(t)).collect();
        let first_in = |text: &str| {
            patterns
                .iter()
                .enumerate()
                .filter_map(|(i, re)| re.find(text).map(|m| (m.start(), i)))
                .min()
                .map(|(_, i)| i)
        };
        let Some(canon) = first_in(methods).or_else(|| first_in(draft)) else { continue };
        table.insert(group[0].to_string(), group[canon].to_string());
        for (line_no, line) in draft.lines().enumerate() {
            for (i, re) in patterns.iter().enumerate() {
                let hits = re.find_iter(line).count();
                checks += hits;
                if i != canon {
                    for _ in 0..hits {
                        issues.push(format!("line {}: `{}` where the methods use `{}`", line_no + 1, group[i], group[canon]));
                    }
                }
            }
        }
    }
    let entry = PassEntry { pass: 4, name: PASS_NAMES[3].into(), change_count: 0, checks, issues };
    (entry, table)
}

/// Pass 5: numbers with evidence are compared against it; repeated mentions
/// of the same quantity are compared against its most precise mention.
pub fn numerical_pass(draft: &str, evidence: Option<&Evidence>) -> PassEntry {
    let empty = Evidence::default();
    let ev = evidence.unwrap_or(&empty);
    let keys: Vec<String> = ev.values.keys().cloned().collect();
    let claims = extract_quantitative_claims(draft, &keys);
    let mut checks = 0;
    let mut issues = Vec::new();
    let mut by_name: BTreeMap<(String, bool), Vec<usize>> = BTreeMap::new();
    for (i, c) in claims.iter().enumerate() {
        if c.metric.as_ref().is_some_and(|k| ev.values.contains_key(k)) {
            checks += 1;
            let entry = classify(c, ev);
            if entry.status == ClaimAuditStatus::NumberMismatch {
                issues.push(format!(
                    "line {}: {} shown as {} but results give {}",
                    c.line,
                    entry.claim_ref,
                    entry.manuscript_value,
                    entry.evidence_value.unwrap_or_default()
                ));
            }
        } else {
            by_name.entry((c.keyword.clone(), c.percent)).or_default().push(i);
        }
    }
    for ((name, _), idx) in by_name {
        if idx.len() < 2 {
            continue;
        }
        let reference = *idx.iter().max_by_key(|&&i| (claims[i].precision, std::cmp::Reverse(i))).expect("non-empty");
        let Ok(ref_val) = claims[reference].display.parse::<Dec>() else { continue };
        for &i in idx.iter().filter(|&&i| i != reference) {
            let Ok(shown) = claims[i].display.parse::<Dec>() else { continue };
            checks += 1;
            if numeric_compare(&shown, claims[i].precision, &ref_val) == NumericStatus::NumberMismatch {
                issues.push(format!(
                    "line {}: {name} {} disagrees with {} on line {}",
                    claims[i].line, claims[i].display, claims[reference].display, claims[reference].line
                ));
            }
        }
    }
    PassEntry { pass: 5, name: PASS_NAMES[4].into(), change_count: 0, checks, issues }
}

/// Run all five passes in order. Only passes 1 to 3 touch the bridge.
pub fn run_editing_passes(
    bridges: &Bridges,
    route: &str,
    ledger: Option<&CostLedger>,
    draft: &str,
    evidence: Option<&Evidence>,
) -> Result<(String, EditingPassReport), AssuranceError> {
    if draft.trim().is_empty() {
        return Err(AssuranceError::EmptyDraft);
    }
    let mut text = draft.to_string();
    let mut report = EditingPassReport::default();
    for n in 0..3 {
        let (next, entry) = delegated_pass(bridges, route, ledger, n, &text)?;
        text = next;
        report.passes.push(entry);
    }
    let (terms, table) = terminology_pass(&text, DEFAULT_TERM_GROUPS);
    report.passes.push(terms);
    report.term_table = table;
    report.passes.push(numerical_pass(&text, evidence));
    Ok((text, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridges::{MockBridge, MockScript};
    use std::sync::Arc;

    fn hub(replies: &[&str]) -> (Bridges, Arc<MockBridge>) {
        let m = Arc::new(MockBridge::new("ed", "claude", MockScript::sequence(replies.iter().copied())));
        let mut b = Bridges::empty();
        b.insert(m.clone());
        (b, m)
    }

    const IDENTITY: &str = "```edits\n[]\n```";

    #[test]
    fn identity_transform_changes_nothing() {
        let (b, m) = hub(&[IDENTITY, IDENTITY, IDENTITY]);
        let draft = "# Intro\nWe study things.\n";
        let (out, rep) = run_editing_passes(&b, "ed", None, draft, None).unwrap();
        assert_eq!(out, draft);
        assert_eq!(rep.passes.len(), 5);
        let names: Vec<&str> = rep.passes.iter().map(|p| p.name.as_str()).collect();
        assert_eq!(names, PASS_NAMES);
        assert!(rep.passes[..3].iter().all(|p| p.change_count == 0));
        assert_eq!(rep.passes[4].checks, 0);
        let prompts: Vec<String> = m.transcripts().iter().map(|t| t[1].content.clone()).collect();
        for (i, p) in prompts.iter().enumerate() {
            assert!(p.starts_with(&format!("Task: editing-pass-{}\n", i + 1)));
        }
    }

    #[test]
    fn edits_are_applied_and_counted() {
        let clutter = "```edits\n[{\"find\": \"really very \", \"replace\": \"\"}, {\"find\": \"absent\", \"replace\": \"x\"}]\n```";
        let (b, _) = hub(&[clutter, IDENTITY, IDENTITY]);
        let (out, rep) = run_editing_passes(&b, "ed", None, "a\nit is really very good\nb\n", None).unwrap();
        assert_eq!(out, "a\nit is good\nb\n");
        assert_eq!(rep.passes[0].change_count, 1);
        assert_eq!(rep.passes[0].issues.len(), 1);
    }

    #[test]
    fn empty_draft_is_rejected() {
        let (b, m) = hub(&[]);
        assert!(matches!(run_editing_passes(&b, "ed", None, " \n", None), Err(AssuranceError::EmptyDraft)));
        assert_eq!(m.calls(), 0);
    }

    #[test]
    fn terminology_follows_the_methods_section() {
        let draft = "# Methods\nWe tune on the validation split.\n# Results\nOn the dev set we see gains.\n";
        let (entry, table) = terminology_pass(draft, DEFAULT_TERM_GROUPS);
        assert_eq!(entry.issues.len(), 1, "{:?}", entry.issues);
        assert!(entry.issues[0].contains("dev set"));
        assert_eq!(table.get("validation split").map(String::as_str), Some("validation split"));

        let draft = "# Intro\nThe dev set is small.\n## Methods\nWe use the validation split.\n";
        let (entry, _) = terminology_pass(draft, DEFAULT_TERM_GROUPS);
        assert_eq!(entry.issues.len(), 1);
        assert!(entry.issues[0].starts_with("line 2"));
    }

    #[test]
    fn repeated_numbers_are_cross_checked() {
        let draft = "Our accuracy is 0.853 overall.\nIn the abstract, accuracy is 0.85.\nLater, accuracy is 0.86.\n";
        let p = numerical_pass(draft, None);
        assert_eq!(p.checks, 2);
        assert_eq!(p.issues.len(), 1);
        assert!(p.issues[0].starts_with("line 3"));
    }

    #[test]
    fn numbers_against_evidence() {
        let ev = Evidence { values: [("accuracy".to_string(), "0.8493".to_string())].into(), seeds: BTreeMap::new() };
        let p = numerical_pass("We reach accuracy of 0.86.", Some(&ev));
        assert_eq!((p.checks, p.issues.len()), (1, 1));
    }
}
