//! Evidence-to-claim audits and manuscript ledgers. Judgments go to a
//! fresh reviewer; everything else here is deterministic bookkeeping.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::artifacts::ArtifactStore;
use crate::bridges::{BridgeError, Message};
use crate::fsutil::atomic_write;
use crate::review::{check_scope, fenced_block, AccessScope, ReviewEnv, ReviewError, REVIEWER_SYSTEM};
use crate::wiki::{EntityType, NewNode, Wiki, WikiError};

pub mod citations;
pub mod editing;
pub mod numeric;
pub mod proof;
pub mod stage3;

pub use numeric::{numeric_compare, numeric_compare_str, Dec, NumericStatus};

#[derive(Debug, Error)]
pub enum AssuranceError {
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    BridgeFailure(#[from] BridgeError),
    #[error("experiment audit needs repository_level access, got {0}")]
    ScopeViolation(AccessScope),
    #[error("unparseable findings: {0}")]
    UnparseableFindings(String),
    #[error("unparseable reply: {0}")]
    UnparseableReply(String),
    #[error("claim `{claim}` cites missing evidence `{artifact}`")]
    MissingEvidenceRef { claim: String, artifact: String },
    #[error("no claims to map")]
    NoClaims,
    #[error("reviewer cited proof category {0}, outside 1..=20")]
    UnknownCategory(u32),
    #[error("draft is empty")]
    EmptyDraft,
    #[error(transparent)]
    Wiki(#[from] WikiError),
    #[error("assurance i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Send a fresh, single-turn reviewer request naming files by path.
pub(crate) fn ask_reviewer(
    env: &ReviewEnv,
    route: &str,
    scope: AccessScope,
    task: &str,
    objective: &str,
    paths: &[PathBuf],
    extra: &str,
) -> Result<String, AssuranceError> {
    check_scope(env.project_root, scope, paths, env.scopes)?;
    let mut prompt = format!("Task: {task}\nObjective: {objective}\nAccess scope: {scope}\nRead these files directly:\n");
    for p in paths {
        let _ = writeln!(prompt, "- {}", p.display());
    }
    if !extra.is_empty() {
        prompt.push('\n');
        prompt.push_str(extra);
        if !extra.ends_with('\n') {
            prompt.push('\n');
        }
    }
    let msgs = [Message::system(REVIEWER_SYSTEM), Message::user(prompt)];
    Ok(env.bridges.send_chat(route, &msgs, env.ledger)?.reply)
}

pub(crate) fn parse_block<T: DeserializeOwned>(reply: &str, tag: &str) -> Result<T, String> {
    let block = fenced_block(reply, tag).ok_or_else(|| format!("no ```{tag} block"))?;
    serde_json::from_str(block.trim()).map_err(|e| format!("```{tag} block: {e}"))
}

/// Write a Markdown report and its JSON sibling into `dir`.
pub fn write_report(dir: &Path, md_name: &str, markdown: &str, json_name: &str, json: &impl Serialize) -> std::io::Result<(PathBuf, PathBuf)> {
    let md = dir.join(md_name);
    let js = dir.join(json_name);
    atomic_write(&md, markdown.as_bytes())?;
    let mut text = serde_json::to_string_pretty(json).expect("report serializes");
    text.push('\n');
    atomic_write(&js, text.as_bytes())?;
    Ok((md, js))
}

pub(crate) fn md_cell(s: &str) -> String {
    s.replace('|', "\\|").replace('\n', " ")
}

// ---------------------------------------------------------------- stage 1

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Level {
    Pass,
    Warn,
    Fail,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Warn => "warn",
            Self::Fail => "fail",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrityCategory {
    ModelDerivedReferenceLabels,
    SelfNormalizedScores,
    PhantomResults,
    DeadCodeOrUnusedMetricInflation,
    ScopeInflation,
}

impl IntegrityCategory {
    pub const ALL: [IntegrityCategory; 5] = [
        Self::ModelDerivedReferenceLabels,
        Self::SelfNormalizedScores,
        Self::PhantomResults,
        Self::DeadCodeOrUnusedMetricInflation,
        Self::ScopeInflation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::ModelDerivedReferenceLabels => "model_derived_reference_labels",
            Self::SelfNormalizedScores => "self_normalized_scores",
            Self::PhantomResults => "phantom_results",
            Self::DeadCodeOrUnusedMetricInflation => "dead_code_or_unused_metric_inflation",
            Self::ScopeInflation => "scope_inflation",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityFinding {
    pub category: IntegrityCategory,
    pub severity: Level,
    pub evidence: String,
    #[serde(default)]
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub integrity_status: Level,
    pub findings: Vec<IntegrityFinding>,
}

impl IntegrityReport {
    pub fn from_findings(findings: Vec<IntegrityFinding>) -> Self {
        Self {
            integrity_status: findings.iter().map(|f| f.severity).max().unwrap_or(Level::Pass),
            findings,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.integrity_status == self.findings.iter().map(|f| f.severity).max().unwrap_or(Level::Pass)
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!(
            "# Experiment audit\n\nIntegrity status: **{}**\n\nThis audit is advisory and does not stop the workflow.\n\n",
            self.integrity_status.as_str()
        );
        if self.findings.is_empty() {
            out.push_str("No findings.\n");
            return out;
        }
        out.push_str("| # | Category | Severity | Evidence | Files |\n|---|---|---|---|---|\n");
        for (i, f) in self.findings.iter().enumerate() {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} |",
                i + 1,
                f.category.as_str(),
                f.severity.as_str(),
                md_cell(&f.evidence),
                md_cell(&f.files.join(", "))
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        write_report(dir, "EXPERIMENT_AUDIT.md", &self.to_markdown(), "experiment_audit.json", self)
    }
}

const FINDINGS_FORMAT: &str = "\
Check for: model_derived_reference_labels, self_normalized_scores, phantom_results, \
dead_code_or_unused_metric_inflation, scope_inflation.
Reply with a fenced block tagged `findings` holding a JSON list (empty when clean):
[{\"category\": \"...\", \"severity\": \"pass|warn|fail\", \"evidence\": \"...\", \"files\": [\"...\"]}]";

/// Stage 1: audit evaluation code and outputs. Advisory only.
pub fn run_experiment_audit(
    env: &ReviewEnv,
    route: &str,
    scope: AccessScope,
    eval_paths: &[PathBuf],
) -> Result<IntegrityReport, AssuranceError> {
    if scope != AccessScope::RepositoryLevel {
        return Err(AssuranceError::ScopeViolation(scope));
    }
    let reply = ask_reviewer(
        env,
        route,
        scope,
        "experiment-audit",
        "Audit the evaluation code and its outputs for integrity failures",
        eval_paths,
        FINDINGS_FORMAT,
    )?;
    let findings: Vec<IntegrityFinding> = parse_block(&reply, "findings").map_err(AssuranceError::UnparseableFindings)?;
    Ok(IntegrityReport::from_findings(findings))
}

// ---------------------------------------------------------------- stage 2

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Supported,
    PartiallySupported,
    Invalidated,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Supported => "supported",
            Self::PartiallySupported => "partially_supported",
            Self::Invalidated => "invalidated",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceRef {
    /// Project-relative path or logical artifact name.
    pub artifact: String,
    #[serde(default)]
    pub locator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateClaim {
    pub claim_id: String,
    pub statement: String,
    #[serde(default)]
    pub evidence_refs: Vec<EvidenceRef>,
    #[serde(default)]
    pub wiki_node: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimRecord {
    pub claim_id: String,
    pub statement: String,
    pub evidence_refs: Vec<EvidenceRef>,
    pub verdict: Verdict,
    /// Inherited from the Stage 1 report; absent when none was supplied.
    pub integrity_status: Option<Level>,
    pub requires_integrity_fix: bool,
    pub reviewer_note: String,
    pub wiki_node: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ClaimLedger {
    pub claims: Vec<ClaimRecord>,
}

/// A failed integrity audit caps `supported` at `partially_supported`.
pub fn propagate_integrity(verdict: Verdict, integrity: Option<Level>) -> (Verdict, bool) {
    match (verdict, integrity) {
        (Verdict::Supported, Some(Level::Fail)) => (Verdict::PartiallySupported, true),
        (v, Some(Level::Fail)) => (v, true),
        (v, _) => (v, false),
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct VerdictLine {
    pub claim_id: String,
    pub verdict: Verdict,
    #[serde(default)]
    pub note: String,
}

/// Combine reviewer verdicts with the integrity report into a ledger.
pub fn assemble_ledger(
    claims: &[CandidateClaim],
    verdicts: &[VerdictLine],
    integrity: Option<&IntegrityReport>,
) -> Result<ClaimLedger, AssuranceError> {
    let by_id: BTreeMap<&str, &VerdictLine> = verdicts.iter().map(|v| (v.claim_id.as_str(), v)).collect();
    let status = integrity.map(|r| r.integrity_status);
    let mut out = ClaimLedger::default();
    for c in claims {
        let v = by_id
            .get(c.claim_id.as_str())
            .ok_or_else(|| AssuranceError::UnparseableReply(format!("no verdict for claim `{}`", c.claim_id)))?;
        let (verdict, fix) = propagate_integrity(v.verdict, status);
        out.claims.push(ClaimRecord {
            claim_id: c.claim_id.clone(),
            statement: c.statement.clone(),
            evidence_refs: c.evidence_refs.clone(),
            verdict,
            integrity_status: status,
            requires_integrity_fix: fix,
            reviewer_note: v.note.clone(),
            wiki_node: c.wiki_node.clone(),
        });
    }
    Ok(out)
}

impl ClaimLedger {
    pub fn holds_hard_rule(&self) -> bool {
        self.claims
            .iter()
            .all(|c| !(c.verdict == Verdict::Supported && c.integrity_status == Some(Level::Fail)))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::from("# Claim ledger\n\n| Claim | Verdict | Integrity | Fix needed | Evidence | Statement |\n|---|---|---|---|---|---|\n");
        for c in &self.claims {
            let ev: Vec<String> = c
                .evidence_refs
                .iter()
                .map(|e| if e.locator.is_empty() { e.artifact.clone() } else { format!("{}#{}", e.artifact, e.locator) })
                .collect();
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {} |",
                c.claim_id,
                c.verdict.as_str(),
                c.integrity_status.map_or("unaudited", Level::as_str),
                if c.requires_integrity_fix { "yes" } else { "no" },
                md_cell(&ev.join(", ")),
                md_cell(&c.statement)
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<(PathBuf, PathBuf)> {
        write_report(dir, "CLAIM_LEDGER.md", &self.to_markdown(), "claim_ledger.json", &self.claims)
    }
}

fn evidence_path(project_root: &Path, store: Option<&ArtifactStore>, artifact: &str) -> Option<PathBuf> {
    let rel = PathBuf::from(artifact);
    if !rel.is_absolute() && project_root.join(&rel).is_file() {
        return Some(rel);
    }
    let rec = store?.history(artifact).ok()?.into_iter().max_by_key(|r| r.version)?;
    Some(PathBuf::from(rec.path))
}

/// Stage 2: judge each claim against its evidence, propagate integrity and
/// mirror verdicts into the wiki.
pub fn map_result_to_claim(
    env: &ReviewEnv,
    route: &str,
    claims: &[CandidateClaim],
    store: Option<&ArtifactStore>,
    integrity: Option<&IntegrityReport>,
    wiki: Option<&mut Wiki>,
) -> Result<ClaimLedger, AssuranceError> {
    if claims.is_empty() {
        return Err(AssuranceError::NoClaims);
    }
    let mut paths: Vec<PathBuf> = Vec::new();
    for c in claims {
        for e in &c.evidence_refs {
            let p = evidence_path(env.project_root, store, &e.artifact).ok_or_else(|| AssuranceError::MissingEvidenceRef {
                claim: c.claim_id.clone(),
                artifact: e.artifact.clone(),
            })?;
            if !paths.contains(&p) {
                paths.push(p);
            }
        }
    }
    let mut extra = String::from("Claims:\n");
    for c in claims {
        let _ = writeln!(extra, "- {}: {}", c.claim_id, c.statement);
    }
    extra.push_str(
        "Reply with a fenced block tagged `verdicts` holding a JSON list:\n\
         [{\"claim_id\": \"...\", \"verdict\": \"supported|partially_supported|invalidated\", \"note\": \"...\"}]",
    );
    let reply = ask_reviewer(
        env,
        route,
        AccessScope::ArtifactAugmented,
        "result-to-claim",
        "Judge whether the evidence supports each claim",
        &paths,
        &extra,
    )?;
    let verdicts: Vec<VerdictLine> = parse_block(&reply, "verdicts").map_err(AssuranceError::UnparseableReply)?;
    let mut ledger = assemble_ledger(claims, &verdicts, integrity)?;
    if let Some(wiki) = wiki {
        for c in &mut ledger.claims {
            let node = match &c.wiki_node {
                Some(id) if wiki.node(id).is_some() => id.clone(),
                _ => wiki.add_node(NewNode::new(EntityType::Claim, c.statement.clone()))?,
            };
            wiki.update_claim_status(&node, c.verdict.as_str())?;
            c.wiki_node = Some(node);
        }
    }
    Ok(ledger)
}

#[cfg(test)]
pub(crate) mod testkit {
    use super::*;
    use crate::bridges::{Bridges, MockBridge, MockScript};
    use crate::config::ProjectConfig;
    use crate::review::DEFAULT_RUBRIC;
    use std::sync::Arc;

    pub(crate) struct Fixture {
        pub dir: tempfile::TempDir,
        pub hub: Bridges,
        pub mock: Arc<MockBridge>,
        pub scopes: BTreeMap<String, Vec<String>>,
    }

    impl Fixture {
        pub fn new(replies: &[&str]) -> Self {
            let dir = tempfile::tempdir().unwrap();
            for (f, body) in [
                ("results/metrics.json", "{\"accuracy\": 0.8493}"),
                ("eval/run.py", "print(1)"),
                ("paper/main.md", "# Methods\n"),
            ] {
                let p = dir.path().join(f);
                std::fs::create_dir_all(p.parent().unwrap()).unwrap();
                std::fs::write(p, body).unwrap();
            }
            let mock = Arc::new(MockBridge::new("rev", "gpt", MockScript::sequence(replies.iter().copied())));
            let mut hub = Bridges::empty();
            hub.insert(mock.clone());
            Self { dir, hub, mock, scopes: ProjectConfig::default().scopes }
        }

        pub fn env(&self) -> ReviewEnv<'_> {
            ReviewEnv {
                project_root: self.dir.path(),
                bridges: &self.hub,
                scopes: &self.scopes,
                rubric: DEFAULT_RUBRIC,
                ledger: None,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use super::testkit::Fixture;

    fn finding(sev: Level) -> IntegrityFinding {
        IntegrityFinding { category: IntegrityCategory::PhantomResults, severity: sev, evidence: "e".into(), files: vec![] }
    }

    #[test]
    fn integrity_status_is_max_severity() {
        assert_eq!(IntegrityReport::from_findings(vec![]).integrity_status, Level::Pass);
        assert_eq!(IntegrityReport::from_findings(vec![finding(Level::Warn), finding(Level::Warn)]).integrity_status, Level::Warn);
        assert_eq!(IntegrityReport::from_findings(vec![finding(Level::Warn), finding(Level::Fail)]).integrity_status, Level::Fail);
    }

    #[test]
    fn experiment_audit_with_mock() {
        let reply = "```findings\n[{\"category\": \"phantom_results\", \"severity\": \"fail\", \"evidence\": \"table cites a run that never happened\"}]\n```";
        let fx = Fixture::new(&[reply]);
        let r = run_experiment_audit(&fx.env(), "rev", AccessScope::RepositoryLevel, &["eval/run.py".into()]).unwrap();
        assert_eq!(r.integrity_status, Level::Fail);
        let (md, js) = r.write(&fx.dir.path().join("reports")).unwrap();
        assert!(std::fs::read_to_string(md).unwrap().contains("phantom_results"));
        let back: IntegrityReport = serde_json::from_str(&std::fs::read_to_string(js).unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(matches!(
            run_experiment_audit(&fx.env(), "rev", AccessScope::DocumentOnly, &["paper/main.md".into()]),
            Err(AssuranceError::ScopeViolation(_))
        ));
    }

    #[test]
    fn unknown_finding_category_is_unparseable() {
        let fx = Fixture::new(&["```findings\n[{\"category\": \"vibes\", \"severity\": \"fail\", \"evidence\": \"\"}]\n```"]);
        assert!(matches!(
            run_experiment_audit(&fx.env(), "rev", AccessScope::RepositoryLevel, &["eval/run.py".into()]),
            Err(AssuranceError::UnparseableFindings(_))
        ));
    }

    fn claim() -> CandidateClaim {
        CandidateClaim {
            claim_id: "c1".into(),
            statement: "Method A reaches 0.85 accuracy".into(),
            evidence_refs: vec![EvidenceRef { artifact: "results/metrics.json".into(), locator: "accuracy".into() }],
            wiki_node: None,
        }
    }

    const SUPPORTED: &str = "```verdicts\n[{\"claim_id\": \"c1\", \"verdict\": \"supported\"}]\n```";

    #[test]
    fn verdicts_and_integrity_cap() {
        let fx = Fixture::new(&[SUPPORTED, SUPPORTED]);
        let pass = IntegrityReport::from_findings(vec![]);
        let l = map_result_to_claim(&fx.env(), "rev", &[claim()], None, Some(&pass), None).unwrap();
        assert_eq!(l.claims[0].verdict, Verdict::Supported);
        let fail = IntegrityReport::from_findings(vec![finding(Level::Fail)]);
        let l = map_result_to_claim(&fx.env(), "rev", &[claim()], None, Some(&fail), None).unwrap();
        assert_eq!(l.claims[0].verdict, Verdict::PartiallySupported);
        assert!(l.claims[0].requires_integrity_fix);
    }

    #[test]
    fn contradicted_claim_is_invalidated_and_pushed_to_wiki() {
        let fx = Fixture::new(&["```verdicts\n[{\"claim_id\": \"c1\", \"verdict\": \"invalidated\", \"note\": \"0.80 in the log\"}]\n```"]);
        let mut wiki = Wiki::in_memory();
        let l = map_result_to_claim(&fx.env(), "rev", &[claim()], None, None, Some(&mut wiki)).unwrap();
        assert_eq!(l.claims[0].verdict, Verdict::Invalidated);
        let node = wiki.node(l.claims[0].wiki_node.as_ref().unwrap()).unwrap();
        assert_eq!(node.status, "invalidated");
    }

    #[test]
    fn missing_evidence_is_rejected_before_any_call() {
        let fx = Fixture::new(&[SUPPORTED]);
        let mut c = claim();
        c.evidence_refs[0].artifact = "results/nope.json".into();
        assert!(matches!(
            map_result_to_claim(&fx.env(), "rev", &[c], None, None, None),
            Err(AssuranceError::MissingEvidenceRef { .. })
        ));
        assert_eq!(fx.mock.calls(), 0);
    }
}
