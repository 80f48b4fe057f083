//! Cross-check quantitative statements in a manuscript against raw results.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::numeric::{numeric_compare, Dec, NumericStatus};
use super::{ask_reviewer, md_cell, parse_block, write_report, AssuranceError, ClaimLedger};
use crate::review::{AccessScope, ReviewEnv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimAuditStatus {
    ExactMatch,
    RoundingOk,
    NumberMismatch,
    ConfigMismatch,
    MissingEvidence,
}

impl ClaimAuditStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ExactMatch => "exact_match",
            Self::RoundingOk => "rounding_ok",
            Self::NumberMismatch => "number_mismatch",
            Self::ConfigMismatch => "config_mismatch",
            Self::MissingEvidence => "missing_evidence",
        }
    }
}

impl From<NumericStatus> for ClaimAuditStatus {
    fn from(s: NumericStatus) -> Self {
        match s {
            NumericStatus::ExactMatch => Self::ExactMatch,
            NumericStatus::RoundingOk => Self::RoundingOk,
            NumericStatus::NumberMismatch => Self::NumberMismatch,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimAuditEntry {
    pub claim_ref: String,
    pub manuscript_value: String,
    pub display_precision: u32,
    pub evidence_value: Option<String>,
    pub status: ClaimAuditStatus,
    pub note: String,
    pub line: usize,
}

/// Raw numeric results keyed by dotted path, plus per-seed values.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Evidence {
    pub values: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, Vec<String>>,
}

fn flatten(prefix: &str, v: &Value, out: &mut BTreeMap<String, String>) {
    match v {
        Value::Object(m) => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        Value::Number(n) => {
            out.insert(prefix.to_string(), n.to_string());
        }
        _ => {}
    }
}

fn kv_line_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*[-*]?\s*`?([A-Za-z][\w.\-]*)`?\s*[:=]\s*([-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s*$").expect("valid regex")
    })
}

/// Numbers from one results file: JSON objects are flattened, other text
/// contributes `key: number` lines.
pub fn parse_evidence_text(text: &str) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    if let Ok(v) = serde_json::from_str::<Value>(text) {
        flatten("", &v, &mut out);
        return out;
    }
    for line in text.lines() {
        if let Some(c) = kv_line_regex().captures(line) {
            out.insert(c[1].to_string(), c[2].to_string());
        }
    }
    out
}

impl Evidence {
    pub fn load(project_root: &Path, paths: &[PathBuf]) -> std::io::Result<Self> {
        let mut ev = Self::default();
        for p in paths {
            let text = std::fs::read_to_string(project_root.join(p))?;
            ev.values.extend(parse_evidence_text(&text));
        }
        // assumed layout: seeds/<seed>.json, each holding the same keys
        let seed_dir = project_root.join("seeds");
        if let Ok(rd) = std::fs::read_dir(&seed_dir) {
            let mut files: Vec<PathBuf> = rd
                .flatten()
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|x| x == "json"))
                .collect();
            files.sort();
            for f in files {
                for (k, v) in parse_evidence_text(&std::fs::read_to_string(f)?) {
                    ev.seeds.entry(k).or_default().push(v);
                }
            }
        }
        Ok(ev)
    }
}

pub const CLAIM_KEYWORDS: [&str; 16] = [
    "accuracy", "score", "f1", "bleu", "rouge", "precision", "recall", "loss", "error", "perplexity", "auc", "reward",
    "improvement", "gain", "speedup", "win rate",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantClaim {
    /// Matched evidence key, if any.
    pub metric: Option<String>,
    pub keyword: String,
    pub display: String,
    pub precision: u32,
    pub percent: bool,
    pub line: usize,
    pub ambiguous: bool,
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?:^|[^\w.])([-+]?\d+(?:\.\d+)?)(%?)").expect("valid regex"))
}

fn normalize(s: &str) -> String {
    s.to_lowercase().replace(['_', '-'], " ")
}

const WINDOW: usize = 60;

/// Words whose following number is a label, not a measurement.
const REFERENCE_LABELS: &[&str] = &[
    "table", "tab", "figure", "fig", "section", "sec", "appendix", "eq", "equation", "lemma", "theorem",
    "corollary", "proposition", "definition", "algorithm", "step", "line", "chapter", "round",
];

fn is_reference_label(before: &str) -> bool {
    let word: String = before
        .trim_end_matches(|c: char| c.is_whitespace() || c == '.' || c == '~')
        .chars()
        .rev()
        .take_while(|c| c.is_alphabetic())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    REFERENCE_LABELS.contains(&word.to_lowercase().as_str())
}

/// Numbers preceded, within the same sentence, by a metric name or claim
/// keyword. Extraction is heuristic and reports what it finds.
pub fn extract_quantitative_claims(text: &str, evidence_keys: &[String]) -> Vec<QuantClaim> {
    let keys: Vec<(String, String, Vec<String>)> = evidence_keys
        .iter()
        .map(|k| {
            let segs: Vec<String> = k.split('.').map(normalize).collect();
            (k.clone(), segs.last().cloned().unwrap_or_default(), segs)
        })
        .collect();
    let mut out = Vec::new();
    for (line_no, line) in text.lines().enumerate() {
        for caps in number_regex().captures_iter(line) {
            let m = caps.get(1).expect("group 1");
            let before = &line[..m.start()];
            if is_reference_label(before) {
                continue;
            }
            let sentence_start = before.rfind(['.', '!', '?', ';']).map_or(0, |i| {
                // a decimal point is not a sentence break
                if before[i + 1..].starts_with(char::is_whitespace) { i + 1 } else { 0 }
            });
            let mut window_start = sentence_start.max(before.len().saturating_sub(WINDOW));
            while !before.is_char_boundary(window_start) {
                window_start += 1;
            }
            let window = normalize(&before[window_start..]);
            let after = &line[m.end()..];
            let sentence_end = after
                .match_indices(['.', '!', '?', ';'])
                .find(|(i, _)| after[i + 1..].is_empty() || after[i + 1..].starts_with(char::is_whitespace))
                .map_or(line.len(), |(i, _)| m.end() + i);
            let sentence = normalize(&line[sentence_start..sentence_end]);

            // closest mention wins; other path segments in the sentence break ties
            let mut best: Option<(usize, usize, &str)> = None;
            let mut tied = false;
            for (key, leaf, segs) in &keys {
                let Some(pos) = window.rfind(leaf.as_str()).filter(|_| !leaf.is_empty()) else { continue };
                let end = pos + leaf.len();
                let context = segs[..segs.len() - 1].iter().filter(|s| sentence.contains(s.as_str())).count();
                let rank = (end, context);
                match best {
                    Some((e, c, _)) if (e, c) > rank => {}
                    Some((e, c, _)) if (e, c) == rank => tied = true,
                    _ => {
                        tied = false;
                        best = Some((end, context, key));
                    }
                }
            }
            let keyword = match best {
                Some((_, _, key)) => key.to_string(),
                None => match CLAIM_KEYWORDS.iter().find(|k| window.contains(*k)) {
                    Some(k) => k.to_string(),
                    None => continue,
                },
            };
            let display = m.as_str().trim_start_matches('+').to_string();
            let precision = display.split_once('.').map_or(0, |(_, f)| f.len() as u32);
            out.push(QuantClaim {
                metric: best.map(|(_, _, k)| k.to_string()),
                keyword,
                display,
                precision,
                percent: &caps[2] == "%",
                line: line_no + 1,
                ambiguous: tied,
            });
        }
    }
    out
}

pub fn count_numeric_literals(text: &str) -> usize {
    text.lines().map(|l| number_regex().captures_iter(l).count()).sum()
}

/// Local numeric status for one extracted claim.
pub fn classify(claim: &QuantClaim, evidence: &Evidence) -> ClaimAuditEntry {
    let mut entry = ClaimAuditEntry {
        claim_ref: claim.metric.clone().unwrap_or_else(|| claim.keyword.clone()),
        manuscript_value: if claim.percent { format!("{}%", claim.display) } else { claim.display.clone() },
        display_precision: claim.precision,
        evidence_value: None,
        status: ClaimAuditStatus::MissingEvidence,
        note: String::new(),
        line: claim.line,
    };
    let Some(raw) = claim.metric.as_ref().and_then(|k| evidence.values.get(k)) else {
        entry.note = "no matching evidence value".into();
        return entry;
    };
    entry.evidence_value = Some(raw.clone());
    let (Ok(shown), Ok(mut ev)) = (claim.display.parse::<Dec>(), raw.parse::<Dec>()) else {
        entry.status = ClaimAuditStatus::NumberMismatch;
        entry.note = "unreadable number".into();
        return entry;
    };
    let mut notes = Vec::new();
    if claim.percent && ev.abs_at_most_one() {
        ev = ev.scaled_by_pow10(2);
        notes.push("percent compared against fraction x 100".to_string());
    }
    entry.status = numeric_compare(&shown, claim.precision, &ev).into();
    if claim.ambiguous {
        notes.push("several evidence keys matched equally".into());
    }
    if let Some(seeds) = claim.metric.as_ref().and_then(|k| evidence.seeds.get(k)) {
        if let Some(note) = best_seed_note(&shown, claim.precision, seeds) {
            notes.push(note);
        }
    }
    entry.note = notes.join("; ");
    entry
}

fn best_seed_note(shown: &Dec, precision: u32, seeds: &[String]) -> Option<String> {
    let vals: Vec<f64> = seeds.iter().filter_map(|s| s.parse().ok()).collect();
    if vals.len() < 2 {
        return None;
    }
    let max = vals.iter().cloned().fold(f64::MIN, f64::max);
    let mean = vals.iter().sum::<f64>() / vals.len() as f64;
    let matches = |v: f64| {
        Dec::from_f64(v).is_ok_and(|d| numeric_compare(shown, precision, &d) != NumericStatus::NumberMismatch)
    };
    (matches(max) && !matches(mean)).then(|| format!("matches the best of {} seeds, not their mean {mean:.4}", vals.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct PaperClaimAudit {
    pub entries: Vec<ClaimAuditEntry>,
    /// every numeric literal in the manuscript, extracted or not
    pub numeric_literals: usize,
}

impl PaperClaimAudit {
    pub fn count(&self, status: ClaimAuditStatus) -> usize {
        self.entries.iter().filter(|e| e.status == status).count()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Paper claim audit\n\n");
        for s in [
            ClaimAuditStatus::ExactMatch,
            ClaimAuditStatus::RoundingOk,
            ClaimAuditStatus::NumberMismatch,
            ClaimAuditStatus::ConfigMismatch,
            ClaimAuditStatus::MissingEvidence,
        ] {
            let _ = writeln!(out, "- {}: {}", s.as_str(), self.count(s));
        }
        let _ = writeln!(out, "\nExtracted {} of {} numeric literals.", self.entries.len(), self.numeric_literals);
        out.push_str("\n| Line | Claim | Manuscript | Evidence | Status | Note |\n|---|---|---|---|---|---|\n");
        for e in &self.entries {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                e.line,
                md_cell(&e.claim_ref),
                e.manuscript_value,
                e.evidence_value.as_deref().unwrap_or("-"),
                e.status.as_str(),
                md_cell(&e.note)
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        write_report(dir, "PAPER_CLAIM_AUDIT.md", &self.to_markdown(), "paper_claim_audit.json", self)
    }
}

#[derive(Debug, Deserialize)]
struct ConfigFlag {
    entry: String,
    #[serde(default)]
    note: String,
}

/// Stage 3. Numbers are compared locally; whether the experiment configs
/// match each claim is left to a fresh reviewer.
pub fn audit_paper_claims(
    env: &ReviewEnv,
    route: &str,
    manuscript: &Path,
    ledger: Option<&ClaimLedger>,
    raw_files: &[PathBuf],
) -> Result<PaperClaimAudit, AssuranceError> {
    let mut raw: Vec<PathBuf> = raw_files.to_vec();
    for e in ledger.iter().flat_map(|l| &l.claims).flat_map(|c| &c.evidence_refs) {
        let p = PathBuf::from(&e.artifact);
        if env.project_root.join(&p).is_file() && !raw.contains(&p) {
            raw.push(p);
        }
    }
    let evidence = Evidence::load(env.project_root, &raw)?;
    let text = std::fs::read_to_string(env.project_root.join(manuscript))?;
    let keys: Vec<String> = evidence.values.keys().cloned().collect();
    let mut audit = PaperClaimAudit {
        entries: extract_quantitative_claims(&text, &keys)
            .iter()
            .map(|c| classify(c, &evidence))
            .collect(),
        numeric_literals: count_numeric_literals(&text),
    };
    if audit.entries.is_empty() {
        return Ok(audit);
    }
    let mut extra = String::from("Extracted statements:\n");
    for (i, e) in audit.entries.iter().enumerate() {
        let _ = writeln!(extra, "- E{}: {} = {} (line {})", i + 1, e.claim_ref, e.manuscript_value, e.line);
    }
    extra.push_str(
        "Flag statements whose experimental configuration does not match the raw files.\n\
         Reply with a fenced block tagged `config_mismatches` holding a JSON list:\n\
         [{\"entry\": \"E1\", \"note\": \"...\"}]",
    );
    let mut paths = vec![manuscript.to_path_buf()];
    paths.extend(raw);
    let reply = ask_reviewer(
        env,
        route,
        AccessScope::RepositoryLevel,
        "paper-claim-audit",
        "Cross-check the manuscript's quantitative claims against the raw result files",
        &paths,
        &extra,
    )?;
    let flags: Vec<ConfigFlag> = parse_block(&reply, "config_mismatches").map_err(AssuranceError::UnparseableReply)?;
    for f in flags {
        let idx = f.entry.trim_start_matches(['E', 'e']).parse::<usize>().ok().filter(|i| (1..=audit.entries.len()).contains(i));
        if let Some(i) = idx {
            let e = &mut audit.entries[i - 1];
            if e.status != ClaimAuditStatus::MissingEvidence {
                e.status = ClaimAuditStatus::ConfigMismatch;
                e.note = f.note;
            }
        }
    }
    Ok(audit)
}
