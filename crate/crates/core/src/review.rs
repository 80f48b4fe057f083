//! The critique-to-action loop: scoped review requests, reply parsing,
//! convergence, reviewer threads, family checks and auto-debug.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Component, Path, PathBuf};
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bridges::{BridgeError, Bridges, CostLedger, Message};
use crate::config::RemediationConfig;
use crate::fsutil;

#[derive(Debug, Error)]
pub enum ReviewError {
    #[error("scope violation: `{path}` is not readable under {scope}")]
    ScopeViolation { path: String, scope: AccessScope },
    #[error("artifact `{0}` does not exist")]
    MissingArtifact(String),
    #[error("a review request needs at least one artifact path")]
    NoArtifacts,
    #[error(transparent)]
    BridgeFailure(#[from] BridgeError),
    #[error("unparseable review: {0}")]
    UnparseableReview(String),
    #[error("unknown error class `{0}`")]
    UnknownErrorClass(String),
    #[error(
        "remediation policy unsatisfiable for `{class}`: {tried} distinct strategies tried, at least {required} required"
    )]
    PolicyUnsatisfiable { class: String, tried: usize, required: usize },
    #[error("revision failed: {0}")]
    Revision(String),
    #[error("review log: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccessScope {
    DocumentOnly,
    ArtifactAugmented,
    RepositoryLevel,
}

impl AccessScope {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DocumentOnly => "document_only",
            Self::ArtifactAugmented => "artifact_augmented",
            Self::RepositoryLevel => "repository_level",
        }
    }
}

impl fmt::Display for AccessScope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AccessScope {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        [Self::DocumentOnly, Self::ArtifactAugmented, Self::RepositoryLevel]
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| format!("unknown access scope `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextPolicy {
    Fresh,
    CrossRound,
}

impl FromStr for ContextPolicy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "fresh" => Ok(Self::Fresh),
            "cross_round" => Ok(Self::CrossRound),
            _ => Err(format!("unknown context policy `{s}`")),
        }
    }
}

/// File extensions a document-only reviewer may open.
const DOCUMENT_EXTENSIONS: [&str; 5] = ["md", "tex", "txt", "pdf", "bib"];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReviewRequest {
    /// Skill or workflow step this review belongs to; keys the prompt.
    pub task: String,
    pub objective: String,
    /// Paths relative to the project root.
    pub artifact_paths: Vec<PathBuf>,
    pub access_scope: AccessScope,
    pub context_policy: ContextPolicy,
    /// Resolved reviewer bridge id.
    pub route: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Critical,
    Major,
    Minor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionItem {
    pub id: String,
    pub severity: Severity,
    pub description: String,
    pub affected_artifact: String,
    pub resolved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewResult {
    pub score: f64,
    pub action_items: Vec<ActionItem>,
    pub rubric_notes: String,
    pub round: u32,
    pub thread_id: String,
    /// Item ids the reviewer confirmed as addressed.
    pub confirmed_resolved: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    pub score_threshold: f64,
    pub max_rounds: u32,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self {
            score_threshold: 6.0,
            max_rounds: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Continue,
    StopMaxRounds,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Accept => "accept",
            Self::Continue => "continue",
            Self::StopMaxRounds => "stop_max_rounds",
        }
    }
}

/// Accept only when the latest score strictly exceeds the threshold and no
/// critical item raised anywhere in the history is still open.
pub fn check_convergence(history: &[ReviewResult], policy: &ConvergencePolicy) -> Decision {
    let Some(latest) = history.last() else {
        return Decision::Continue;
    };
    let criticals_open = history
        .iter()
        .flat_map(|r| &r.action_items)
        .any(|i| i.severity == Severity::Critical && !i.resolved);
    if latest.score > policy.score_threshold && !criticals_open {
        Decision::Accept
    } else if latest.round >= policy.max_rounds {
        Decision::StopMaxRounds
    } else {
        Decision::Continue
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySeparation {
    Ok,
    WarnSameFamily,
}

pub fn check_family_separation(executor_family: &str, reviewer_family: &str) -> FamilySeparation {
    if executor_family.trim().to_lowercase() == reviewer_family.trim().to_lowercase() {
        FamilySeparation::WarnSameFamily
    } else {
        FamilySeparation::Ok
    }
}

// ---------------------------------------------------------------- scope

fn normalize_rel(path: &Path) -> Option<String> {
    let mut parts = Vec::new();
    for c in path.components() {
        match c {
            Component::Normal(p) => parts.push(p.to_string_lossy().into_owned()),
            Component::CurDir => {}
            _ => return None,
        }
    }
    Some(parts.join("/"))
}

/// Check every path exists and falls under a prefix the scope allows.
pub fn check_scope(
    project_root: &Path,
    scope: AccessScope,
    paths: &[PathBuf],
    scopes: &BTreeMap<String, Vec<String>>,
) -> Result<(), ReviewError> {
    if paths.is_empty() {
        return Err(ReviewError::NoArtifacts);
    }
    let allowed = scopes.get(scope.as_str()).map(Vec::as_slice).unwrap_or(&[]);
    for p in paths {
        let violation = || ReviewError::ScopeViolation {
            path: p.display().to_string(),
            scope,
        };
        let rel = normalize_rel(p).ok_or_else(violation)?;
        if !allowed.iter().any(|prefix| rel.starts_with(prefix.as_str())) {
            return Err(violation());
        }
        if scope == AccessScope::DocumentOnly {
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
            if !DOCUMENT_EXTENSIONS.contains(&ext.as_str()) {
                return Err(violation());
            }
        }
        if !project_root.join(p).is_file() {
            return Err(ReviewError::MissingArtifact(p.display().to_string()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------- threads

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreadStore {
    next: u64,
    threads: BTreeMap<String, Vec<Message>>,
}

impl ThreadStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn open(&mut self, policy: ContextPolicy, prior: Option<&str>) -> String {
        if policy == ContextPolicy::CrossRound {
            if let Some(p) = prior.filter(|p| self.threads.contains_key(*p)) {
                return p.to_string();
            }
        }
        self.next += 1;
        let id = format!("thread-{}", self.next);
        self.threads.insert(id.clone(), Vec::new());
        id
    }

    pub fn history(&self, id: &str) -> &[Message] {
        self.threads.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    fn record(&mut self, id: &str, prompt: Message, reply: Message) {
        let h = self.threads.entry(id.to_string()).or_default();
        h.push(prompt);
        h.push(reply);
    }
}

// ---------------------------------------------------------------- prompts

pub const DEFAULT_RUBRIC: &str = "\
Score the work from 0 to 10 for soundness, evidence, clarity and novelty.
Mark an item critical only if it would block acceptance.";

pub const REVIEWER_SYSTEM: &str = "\
You are an independent reviewer. Read the listed files yourself. \
Do not rely on any summary from the author.";

const REPLY_FORMAT: &str = "\
Reply with a fenced block tagged `review` holding JSON:
{\"score\": <0-10>, \"items\": [{\"severity\": \"critical|major|minor\", \"description\": \"...\", \"artifact\": \"...\"}], \"resolved\": [\"<item id>\"], \"notes\": \"...\"}";

pub fn build_review_prompt(req: &ReviewRequest, rubric: &str, round: u32, claimed: &[String]) -> String {
    let mut p = format!(
        "Task: review/{}\nObjective: {}\nRound: {round}\nAccess scope: {}\nRead these files directly:\n",
        req.task, req.objective, req.access_scope
    );
    for path in &req.artifact_paths {
        p.push_str(&format!("- {}\n", path.display()));
    }
    if !claimed.is_empty() {
        p.push_str("Items the author reports as addressed (confirm or leave out of `resolved`):\n");
        for id in claimed {
            p.push_str(&format!("- {id}\n"));
        }
    }
    p.push_str("\nRubric:\n");
    p.push_str(rubric);
    p.push_str("\n\n");
    p.push_str(REPLY_FORMAT);
    p.push('\n');
    p
}

/// Body of the first fenced block with the given tag.
pub fn fenced_block<'a>(text: &'a str, tag: &str) -> Option<&'a str> {
    let open = format!("```{tag}");
    let mut search = 0;
    while let Some(i) = text[search..].find(&open) {
        let start = search + i + open.len();
        let rest = &text[start..];
        let line_end = rest.find('\n')?;
        if rest[..line_end].trim().is_empty() {
            let body = &rest[line_end + 1..];
            let end = body.find("```").unwrap_or(body.len());
            return Some(&body[..end]);
        }
        search = start;
    }
    None
}

#[derive(Debug, Deserialize)]
struct WireItem {
    severity: Severity,
    description: String,
    #[serde(default)]
    artifact: String,
}

#[derive(Debug, Deserialize)]
struct WireReview {
    score: f64,
    #[serde(default)]
    items: Vec<WireItem>,
    #[serde(default)]
    resolved: Vec<String>,
    #[serde(default)]
    notes: String,
}

fn score_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\bscore\s*[:=]\s*(\d+(?:\.\d+)?)\s*(?:/\s*10)?").expect("valid regex"))
}

/// Parsed reply before ids and round are assigned.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedReview {
    pub score: f64,
    pub items: Vec<(Severity, String, String)>,
    pub resolved: Vec<String>,
    pub notes: String,
}

pub fn parse_review_reply(reply: &str) -> Result<ParsedReview, ReviewError> {
    let parsed = match fenced_block(reply, "review").or_else(|| fenced_block(reply, "json")) {
        Some(block) => {
            let w: WireReview = serde_json::from_str(block.trim())
                .map_err(|e| ReviewError::UnparseableReview(format!("review block: {e}")))?;
            ParsedReview {
                score: w.score,
                items: w.items.into_iter().map(|i| (i.severity, i.description, i.artifact)).collect(),
                resolved: w.resolved,
                notes: w.notes,
            }
        }
        None => {
            let caps = score_regex()
                .captures(reply)
                .ok_or_else(|| ReviewError::UnparseableReview("no score found".into()))?;
            ParsedReview {
                score: caps[1].parse().expect("regex matched a number"),
                items: Vec::new(),
                resolved: Vec::new(),
                notes: reply.trim().to_string(),
            }
        }
    };
    if !(0.0..=10.0).contains(&parsed.score) {
        return Err(ReviewError::UnparseableReview(format!("score {} outside [0, 10]", parsed.score)));
    }
    Ok(parsed)
}

/// Ids listed in a ```resolved block; `all` expands to every open id.
pub fn parse_resolved(reply: &str, open: &[ActionItem]) -> Vec<String> {
    let Some(block) = fenced_block(reply, "resolved") else {
        return Vec::new();
    };
    let open_ids: BTreeSet<&str> = open.iter().map(|i| i.id.as_str()).collect();
    let mut out = Vec::new();
    for tok in block.split(|c: char| c.is_whitespace() || c == ',') {
        let tok = tok.trim_start_matches('-').trim();
        if tok.eq_ignore_ascii_case("all") {
            return open.iter().map(|i| i.id.clone()).collect();
        }
        if open_ids.contains(tok) && !out.iter().any(|o| o == tok) {
            out.push(tok.to_string());
        }
    }
    out
}

// ---------------------------------------------------------------- rounds

pub struct ReviewEnv<'a> {
    pub project_root: &'a Path,
    pub bridges: &'a Bridges,
    pub scopes: &'a BTreeMap<String, Vec<String>>,
    pub rubric: &'a str,
    pub ledger: Option<&'a CostLedger>,
}

/// Issue one review. `prior_thread` is only reused under `cross_round`.
pub fn run_review_round(
    env: &ReviewEnv,
    threads: &mut ThreadStore,
    req: &ReviewRequest,
    round: u32,
    prior_thread: Option<&str>,
    claimed: &[String],
) -> Result<ReviewResult, ReviewError> {
    check_scope(env.project_root, req.access_scope, &req.artifact_paths, env.scopes)?;
    let thread_id = threads.open(req.context_policy, prior_thread);
    let prompt = Message::user(build_review_prompt(req, env.rubric, round, claimed));
    let mut messages = vec![Message::system(REVIEWER_SYSTEM)];
    messages.extend_from_slice(threads.history(&thread_id));
    messages.push(prompt.clone());
    let exchange = env.bridges.send_chat(&req.route, &messages, env.ledger)?;
    threads.record(&thread_id, prompt, Message::assistant(exchange.reply.clone()));
    let parsed = parse_review_reply(&exchange.reply)?;
    let action_items = parsed
        .items
        .into_iter()
        .enumerate()
        .map(|(n, (severity, description, artifact))| ActionItem {
            id: format!("{}/r{round}-{}", req.task, n + 1),
            severity,
            description,
            affected_artifact: artifact,
            resolved: false,
        })
        .collect();
    Ok(ReviewResult {
        score: parsed.score,
        action_items,
        rubric_notes: parsed.notes,
        round,
        thread_id,
        confirmed_resolved: parsed.resolved,
    })
}

/// The executor side of a review loop.
pub trait Reviser {
    /// Paths of the current artifact versions, relative to the project root.
    fn artifact_paths(&mut self) -> Result<Vec<PathBuf>, ReviewError>;
    /// Revise against the open items; return the ids claimed as resolved.
    fn revise(&mut self, round: u32, open_items: &[ActionItem]) -> Result<Vec<String>, ReviewError>;
}

#[derive(Debug, Clone)]
pub struct LoopSpec {
    pub task: String,
    pub objective: String,
    pub access_scope: AccessScope,
    pub context_policy: ContextPolicy,
    pub route: String,
    pub policy: ConvergencePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopOutcome {
    pub decision: Decision,
    pub rounds: Vec<ReviewResult>,
}

impl LoopOutcome {
    pub fn scores(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.score).collect()
    }
}

#[derive(Serialize)]
struct LogLine<'a> {
    task: &'a str,
    round: u32,
    score: f64,
    item_ids: Vec<&'a str>,
    decision: &'a str,
    thread_id: &'a str,
}

pub fn run_review_loop(
    env: &ReviewEnv,
    threads: &mut ThreadStore,
    spec: &LoopSpec,
    reviser: &mut dyn Reviser,
    log: Option<&Path>,
) -> Result<LoopOutcome, ReviewError> {
    let mut history: Vec<ReviewResult> = Vec::new();
    let mut pending: Vec<String> = Vec::new();
    let mut round = 0;
    loop {
        round += 1;
        let req = ReviewRequest {
            task: spec.task.clone(),
            objective: spec.objective.clone(),
            artifact_paths: reviser.artifact_paths()?,
            access_scope: spec.access_scope,
            context_policy: spec.context_policy,
            route: spec.route.clone(),
        };
        let prior = history.last().map(|r| r.thread_id.clone());
        let result = run_review_round(env, threads, &req, round, prior.as_deref(), &pending)?;
        if spec.context_policy == ContextPolicy::CrossRound {
            let confirmed: BTreeSet<&str> = result.confirmed_resolved.iter().map(String::as_str).collect();
            for item in history.iter_mut().flat_map(|r| r.action_items.iter_mut()) {
                if pending.contains(&item.id) && confirmed.contains(item.id.as_str()) {
                    item.resolved = true;
                }
            }
            pending.retain(|id| !confirmed.contains(id.as_str()));
        }
        history.push(result);
        let decision = check_convergence(&history, &spec.policy);
        if let Some(path) = log {
            let r = history.last().expect("just pushed");
            let line = LogLine {
                task: &spec.task,
                round,
                score: r.score,
                item_ids: r.action_items.iter().map(|i| i.id.as_str()).collect(),
                decision: decision.as_str(),
                thread_id: &r.thread_id,
            };
            fsutil::append_line(path, &serde_json::to_string(&line).expect("log line serializes"))?;
        }
        if decision != Decision::Continue {
            return Ok(LoopOutcome { decision, rounds: history });
        }
        let open: Vec<ActionItem> = history
            .iter()
            .flat_map(|r| &r.action_items)
            .filter(|i| !i.resolved)
            .cloned()
            .collect();
        let claimed = reviser.revise(round, &open)?;
        match spec.context_policy {
            ContextPolicy::Fresh => {
                for item in history.iter_mut().flat_map(|r| r.action_items.iter_mut()) {
                    if claimed.contains(&item.id) {
                        item.resolved = true;
                    }
                }
            }
            ContextPolicy::CrossRound => {
                for id in claimed {
                    if !pending.contains(&id) {
                        pending.push(id);
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------- auto-debug

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub error_class: String,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attempt {
    pub attempt: u32,
    pub strategy: String,
    pub succeeded: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum DebugOutcome {
    Remediated { attempts: Vec<Attempt> },
    Unresolved { attempts: Vec<Attempt> },
    Rescued { attempts: Vec<Attempt>, diagnosis: String },
}

/// Applies one remediation strategy and reports whether the failure cleared.
pub trait Remediator {
    fn apply(&mut self, failure: &Failure, strategy: &str, attempt: u32) -> bool;
}

pub struct Rescue<'a> {
    pub bridges: &'a Bridges,
    pub ledger: Option<&'a CostLedger>,
}

pub fn auto_debug(
    failure: &Failure,
    policy: &RemediationConfig,
    remediator: &mut dyn Remediator,
    rescue: Option<Rescue>,
) -> Result<DebugOutcome, ReviewError> {
    let strategies = policy
        .strategies
        .get(&failure.error_class)
        .filter(|s| !s.is_empty())
        .ok_or_else(|| ReviewError::UnknownErrorClass(failure.error_class.clone()))?;
    let mut attempts = Vec::new();
    for n in 0..policy.retry_limit {
        let strategy = &strategies[n as usize % strategies.len()];
        let ok = remediator.apply(failure, strategy, n + 1);
        attempts.push(Attempt {
            attempt: n + 1,
            strategy: strategy.clone(),
            succeeded: ok,
        });
        if ok {
            return Ok(DebugOutcome::Remediated { attempts });
        }
    }
    let distinct: BTreeSet<&str> = attempts.iter().map(|a| a.strategy.as_str()).collect();
    let required = policy.min_distinct_strategies as usize;
    if distinct.len() < required {
        return Err(ReviewError::PolicyUnsatisfiable {
            class: failure.error_class.clone(),
            tried: distinct.len(),
            required,
        });
    }
    match (policy.rescue_route.as_deref(), rescue) {
        (Some(route), Some(r)) => {
            let mut prompt = format!(
                "Task: rescue\nError class: {}\nFailure: {}\nTried strategies:\n",
                failure.error_class, failure.detail
            );
            for a in &attempts {
                prompt.push_str(&format!("- {} (attempt {})\n", a.strategy, a.attempt));
            }
            prompt.push_str("Diagnose the root cause and propose one fix.\n");
            let ex = r.bridges.send_chat(route, &[Message::user(prompt)], r.ledger)?;
            Ok(DebugOutcome::Rescued {
                attempts,
                diagnosis: ex.reply,
            })
        }
        _ => Ok(DebugOutcome::Unresolved { attempts }),
    }
}
