//! Usage event log, log analysis and reviewer-gated skill patches.
//!
//! Nothing in this module writes a skill file except [`accept_proposal`].

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use similar::TextDiff;
use thiserror::Error;

use crate::bridges::{BridgeError, Bridges, CostLedger, Message};
use crate::config::MetaConfig;
use crate::frontmatter::{self, Document, Frontmatter};
use crate::fsutil::{append_line, atomic_write, read_jsonl, sha256_hex, SkippedLine};
use crate::review::{parse_review_reply, ReviewError, REVIEWER_SYSTEM};

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    BridgeFailure(#[from] BridgeError),
    #[error("unusable reviewer reply: {0}")]
    UnparseableReply(String),
    #[error("proposal `{0}` not found")]
    UnknownProposal(String),
    #[error("proposal `{id}` is {state}, not surfaced")]
    NotSurfaced { id: String, state: &'static str },
    #[error("{0} changed since the proposal was made")]
    StaleTarget(String),
    #[error("patch does not apply: {0}")]
    PatchMismatch(String),
    #[error("proposal file {0} is malformed")]
    CorruptProposal(String),
    #[error("target {0} is outside the project")]
    BadTarget(String),
}

// ---------------------------------------------------------------- events

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    /// RFC 3339, UTC.
    pub timestamp: String,
    pub tool: String,
    pub success: bool,
    #[serde(default)]
    pub overrides: BTreeMap<String, String>,
    pub run_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill: Option<String>,
    /// Set on reviewer-score events.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

impl Event {
    pub fn now(tool: impl Into<String>, run_id: impl Into<String>, success: bool) -> Self {
        Self {
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Micros, true),
            tool: tool.into(),
            success,
            overrides: BTreeMap::new(),
            run_id: run_id.into(),
            skill: None,
            score: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EventLog {
    path: PathBuf,
}

impl EventLog {
    pub fn for_project(project_root: &Path) -> Self {
        Self { path: project_root.join(".aris/meta/events.jsonl") }
    }

    pub fn at(path: impl Into<PathBuf>) -> Self {
        Self { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn log(&self, event: &Event) -> std::io::Result<()> {
        append_line(&self.path, &serde_json::to_string(event).expect("event serializes"))
    }

    pub fn read(&self) -> std::io::Result<(Vec<Event>, Vec<SkippedLine>)> {
        read_jsonl(&self.path)
    }
}

/// Events from several files in one timeline. Ties keep a content order so
/// the result does not depend on file order.
pub fn merge_events(files: Vec<Vec<Event>>) -> Vec<Event> {
    let mut all: Vec<(String, Event)> = files
        .into_iter()
        .flatten()
        .map(|e| (serde_json::to_string(&e).expect("event serializes"), e))
        .collect();
    all.sort_by(|a, b| a.1.timestamp.cmp(&b.1.timestamp).then_with(|| a.0.cmp(&b.0)));
    all.into_iter().map(|(_, e)| e).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolFailure {
    pub tool: String,
    pub calls: usize,
    pub failures: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub run_id: String,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Findings {
    pub override_hotspots: Vec<(String, usize)>,
    pub failing_tools: Vec<ToolFailure>,
    pub score_plateaus: Vec<Plateau>,
}

impl Findings {
    pub fn is_empty(&self) -> bool {
        self.override_hotspots.is_empty() && self.failing_tools.is_empty() && self.score_plateaus.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("Override hotspots:\n");
        for (p, n) in &self.override_hotspots {
            let _ = writeln!(out, "  {p:<24} {n}");
        }
        out.push_str("Failing tools:\n");
        for t in &self.failing_tools {
            let _ = writeln!(out, "  {:<24} {}/{} ({:.0}%)", t.tool, t.failures, t.calls, t.rate * 100.0);
        }
        out.push_str("Score plateaus:\n");
        for p in &self.score_plateaus {
            let shown: Vec<String> = p.scores.iter().map(|s| format!("{s:.1}")).collect();
            let _ = writeln!(out, "  {:<24} {}", p.run_id, shown.join(" "));
        }
        out
    }
}

pub fn analyze(events: &[Event], cfg: &MetaConfig) -> Findings {
    let mut overrides: BTreeMap<&str, usize> = BTreeMap::new();
    let mut tools: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    let mut scores: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for e in events {
        for k in e.overrides.keys() {
            *overrides.entry(k).or_default() += 1;
        }
        let t = tools.entry(&e.tool).or_default();
        t.0 += 1;
        if !e.success {
            t.1 += 1;
        }
        if let Some(s) = e.score {
            scores.entry(&e.run_id).or_default().push(s);
        }
    }
    let mut override_hotspots: Vec<(String, usize)> = overrides.into_iter().map(|(k, n)| (k.to_string(), n)).collect();
    override_hotspots.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

    let failing_tools = tools
        .into_iter()
        .filter(|(_, (calls, _))| *calls >= cfg.min_calls)
        .map(|(tool, (calls, failures))| ToolFailure { tool: tool.to_string(), calls, failures, rate: failures as f64 / calls as f64 })
        .filter(|t| t.rate > cfg.failure_rate)
        .collect();

    let k = cfg.plateau_window.max(1);
    let score_plateaus = scores
        .into_iter()
        .filter(|(_, s)| s.len() >= k)
        .filter_map(|(run, s)| {
            let window = &s[s.len() - k..];
            let hi = window.iter().cloned().fold(f64::MIN, f64::max);
            let lo = window.iter().cloned().fold(f64::MAX, f64::min);
            (hi - lo < cfg.plateau_epsilon).then(|| Plateau { run_id: run.to_string(), scores: window.to_vec() })
        })
        .collect();

    Findings { override_hotspots, failing_tools, score_plateaus }
}

// ---------------------------------------------------------------- patches

pub fn unified_diff(target: &str, old: &str, new: &str) -> String {
    TextDiff::from_lines(old, new)
        .unified_diff()
        .context_radius(3)
        .header(&format!("a/{target}"), &format!("b/{target}"))
        .to_string()
}

fn hunk_header(line: &str) -> Option<(usize, usize)> {
    let rest = line.strip_prefix("@@ -")?;
    let old = rest.split_whitespace().next()?;
    let (start, len) = old.split_once(',').unwrap_or((old, "1"));
    Some((start.parse().ok()?, len.parse().ok()?))
}

/// Apply a unified diff to `original`, checking every context and removed
/// line.
pub fn apply_unified_diff(original: &str, diff: &str) -> Result<String, MetaError> {
    let old: Vec<&str> = original.split_inclusive('\n').collect();
    let mut out = String::with_capacity(original.len());
    let mut pos = 0usize;
    let mut lines = diff.split_inclusive('\n').peekable();
    while let Some(line) = lines.next() {
        let Some((start, len)) = hunk_header(line) else { continue };
        let begin = if len == 0 { start } else { start.saturating_sub(1) };
        if begin < pos || begin > old.len() {
            return Err(MetaError::PatchMismatch(format!("hunk at line {start} out of order")));
        }
        for l in &old[pos..begin] {
            out.push_str(l);
        }
        pos = begin;
        let mut body: Vec<(char, String)> = Vec::new();
        while let Some(next) = lines.peek() {
            if next.starts_with("@@") {
                break;
            }
            let next = lines.next().expect("peeked");
            match next.chars().next() {
                Some('\\') => {
                    if let Some(last) = body.last_mut() {
                        if last.1.ends_with('\n') {
                            last.1.pop();
                        }
                    }
                }
                Some(c @ (' ' | '-' | '+')) => body.push((c, next[1..].to_string())),
                _ => {}
            }
        }
        for (c, text) in body {
            match c {
                '+' => out.push_str(&text),
                _ => {
                    if old.get(pos) != Some(&text.as_str()) {
                        return Err(MetaError::PatchMismatch(format!("line {} differs", pos + 1)));
                    }
                    if c == ' ' {
                        out.push_str(&text);
                    }
                    pos += 1;
                }
            }
        }
    }
    for l in &old[pos..] {
        out.push_str(l);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalState {
    Proposed,
    Surfaced,
    Accepted,
    Rejected,
}

impl ProposalState {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Proposed => "proposed",
            Self::Surfaced => "surfaced",
            Self::Accepted => "accepted",
            Self::Rejected => "rejected",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "proposed" => Self::Proposed,
            "surfaced" => Self::Surfaced,
            "accepted" => Self::Accepted,
            "rejected" => Self::Rejected,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchProposal {
    pub proposal_id: String,
    /// Project-relative path of the skill file.
    pub target: String,
    pub rationale: String,
    pub diff: String,
    /// Digest of the target when the diff was computed; empty input if absent.
    pub base_hash: String,
    pub reviewer_score: Option<f64>,
    pub state: ProposalState,
}

pub fn proposals_dir(project_root: &Path) -> PathBuf {
    project_root.join(".aris/meta/proposals")
}

fn check_target(target: &str) -> Result<(), MetaError> {
    let p = Path::new(target);
    if p.is_absolute() || p.components().any(|c| matches!(c, std::path::Component::ParentDir)) {
        return Err(MetaError::BadTarget(target.to_string()));
    }
    Ok(())
}

fn read_or_empty(path: &Path) -> std::io::Result<String> {
    match std::fs::read_to_string(path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(e),
    }
}

impl PatchProposal {
    pub fn path(&self, project_root: &Path) -> PathBuf {
        proposals_dir(project_root).join(format!("{}.md", self.proposal_id))
    }

    pub fn to_markdown(&self) -> String {
        let mut fm = Frontmatter::new();
        fm.set_scalar("proposal_id", &self.proposal_id);
        fm.set_scalar("target", &self.target);
        fm.set_scalar("base_hash", &self.base_hash);
        fm.set_scalar("reviewer_score", self.reviewer_score.map_or(String::new(), |s| s.to_string()));
        fm.set_scalar("state", self.state.as_str());
        let body = format!("## Rationale\n\n{}\n\n## Diff\n\n~~~diff\n{}~~~\n", self.rationale.trim(), self.diff);
        frontmatter::serialize(&Document { frontmatter: fm, body })
    }

    pub fn from_markdown(text: &str, shown: &str) -> Result<Self, MetaError> {
        let bad = || MetaError::CorruptProposal(shown.to_string());
        let doc = frontmatter::parse(text).map_err(|_| bad())?;
        let fm = &doc.frontmatter;
        let get = |k: &str| fm.scalar(k).map(str::to_string).ok_or_else(bad);
        let body = &doc.body;
        let r0 = body.find("## Rationale\n").ok_or_else(bad)? + "## Rationale\n".len();
        let d0 = body.find("\n## Diff\n").ok_or_else(bad)?;
        let f0 = body[d0..].find("~~~diff\n").ok_or_else(bad)? + d0 + "~~~diff\n".len();
        let f1 = body.rfind("~~~").filter(|&i| i >= f0).ok_or_else(bad)?;
        let score = get("reviewer_score")?;
        Ok(Self {
            proposal_id: get("proposal_id")?,
            target: get("target")?,
            base_hash: get("base_hash")?,
            reviewer_score: if score.is_empty() { None } else { Some(score.parse().map_err(|_| bad())?) },
            state: ProposalState::parse(&get("state")?).ok_or_else(bad)?,
            rationale: body[r0..d0].trim().to_string(),
            diff: body[f0..f1].to_string(),
        })
    }

    pub fn save(&self, project_root: &Path) -> std::io::Result<()> {
        atomic_write(&self.path(project_root), self.to_markdown().as_bytes())
    }

    pub fn load(project_root: &Path, id: &str) -> Result<Self, MetaError> {
        let p = proposals_dir(project_root).join(format!("{id}.md"));
        let text = std::fs::read_to_string(&p).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => MetaError::UnknownProposal(id.to_string()),
            _ => MetaError::Io(e),
        })?;
        Self::from_markdown(&text, &p.display().to_string())
    }
}

pub fn list_proposals(project_root: &Path) -> Result<Vec<PatchProposal>, MetaError> {
    let dir = proposals_dir(project_root);
    let mut out = Vec::new();
    let Ok(rd) = std::fs::read_dir(&dir) else { return Ok(out) };
    let mut files: Vec<PathBuf> = rd.flatten().map(|e| e.path()).filter(|p| p.extension().is_some_and(|x| x == "md")).collect();
    files.sort();
    for f in files {
        out.push(PatchProposal::from_markdown(&std::fs::read_to_string(&f)?, &f.display().to_string())?);
    }
    Ok(out)
}

/// Record a proposed replacement for `target` as a diff. The target itself
/// is only read.
pub fn propose_patch(project_root: &Path, target: &str, new_content: &str, rationale: &str) -> Result<PatchProposal, MetaError> {
    check_target(target)?;
    let base = read_or_empty(&project_root.join(target))?;
    let diff = unified_diff(target, &base, new_content);
    let base_hash = sha256_hex(base.as_bytes());
    let id = format!("p-{}", &sha256_hex(format!("{target}\n{base_hash}\n{diff}").as_bytes())[..10]);
    let p = PatchProposal {
        proposal_id: id,
        target: target.to_string(),
        rationale: rationale.to_string(),
        diff,
        base_hash,
        reviewer_score: None,
        state: ProposalState::Proposed,
    };
    p.save(project_root)?;
    Ok(p)
}

/// Score a proposed patch with a fresh reviewer; it is surfaced only at or
/// above `threshold`.
pub fn gate_proposal(
    project_root: &Path,
    bridges: &Bridges,
    route: &str,
    ledger: Option<&CostLedger>,
    proposal: &PatchProposal,
    threshold: f64,
) -> Result<PatchProposal, MetaError> {
    if proposal.state != ProposalState::Proposed {
        return Ok(proposal.clone());
    }
    let prompt = format!(
        "Task: review/meta-patch\nObjective: Judge whether this change to a skill file improves the harness without weakening review or integrity checks\nTarget: {}\nRationale: {}\n\n~~~diff\n{}~~~\n\n\
         Reply with a fenced block tagged `review` holding {{\"score\": 0-10, \"items\": [], \"notes\": \"...\"}}.\n",
        proposal.target, proposal.rationale, proposal.diff
    );
    let reply = bridges.send_chat(route, &[Message::system(REVIEWER_SYSTEM), Message::user(prompt)], ledger)?.reply;
    let parsed = parse_review_reply(&reply).map_err(|e| match e {
        ReviewError::UnparseableReview(s) => MetaError::UnparseableReply(s),
        other => MetaError::UnparseableReply(other.to_string()),
    })?;
    let mut out = proposal.clone();
    out.reviewer_score = Some(parsed.score);
    out.state = if parsed.score >= threshold { ProposalState::Surfaced } else { ProposalState::Rejected };
    out.save(project_root)?;
    Ok(out)
}

/// The explicit human accept. Re-hashes the target and applies the stored
/// diff only if the file is unchanged since the proposal.
pub fn accept_proposal(project_root: &Path, id: &str) -> Result<PatchProposal, MetaError> {
    let mut p = PatchProposal::load(project_root, id)?;
    if p.state != ProposalState::Surfaced {
        return Err(MetaError::NotSurfaced { id: id.to_string(), state: p.state.as_str() });
    }
    check_target(&p.target)?;
    let path = project_root.join(&p.target);
    let current = read_or_empty(&path)?;
    if sha256_hex(current.as_bytes()) != p.base_hash {
        return Err(MetaError::StaleTarget(p.target.clone()));
    }
    let patched = apply_unified_diff(&current, &p.diff)?;
    atomic_write(&path, patched.as_bytes())?;
    p.state = ProposalState::Accepted;
    p.save(project_root)?;
    Ok(p)
}

pub fn decline_proposal(project_root: &Path, id: &str) -> Result<PatchProposal, MetaError> {
    let mut p = PatchProposal::load(project_root, id)?;
    if p.state == ProposalState::Accepted {
        return Err(MetaError::NotSurfaced { id: id.to_string(), state: p.state.as_str() });
    }
    p.state = ProposalState::Rejected;
    p.save(project_root)?;
    Ok(p)
}

#[derive(Debug, Deserialize)]
struct DraftPatch {
    target: String,
    rationale: String,
    content: String,
}

/// Ask the executor for skill patches addressing the findings. Each becomes
/// a proposal in state `proposed`.
pub fn draft_proposals(
    project_root: &Path,
    bridges: &Bridges,
    executor: &str,
    ledger: Option<&CostLedger>,
    findings: &Findings,
) -> Result<Vec<PatchProposal>, MetaError> {
    if findings.is_empty() {
        return Ok(Vec::new());
    }
    let prompt = format!(
        "Task: meta-optimize\nUsage findings:\n{}\nPropose edits to project skill files (skills/<name>/SKILL.md) that address these findings.\n\
         Reply with a fenced block tagged `patches` holding a JSON list of {{\"target\", \"rationale\", \"content\"}} where content is the full new file.\n",
        findings.to_text()
    );
    let reply = bridges.send_chat(executor, &[Message::user(prompt)], ledger)?.reply;
    let block = crate::review::fenced_block(&reply, "patches").ok_or_else(|| MetaError::UnparseableReply("no ```patches block".into()))?;
    let drafts: Vec<DraftPatch> = serde_json::from_str(block.trim()).map_err(|e| MetaError::UnparseableReply(e.to_string()))?;
    drafts.iter().map(|d| propose_patch(project_root, &d.target, &d.content, &d.rationale)).collect()
}
