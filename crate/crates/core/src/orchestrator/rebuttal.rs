//! Rebuttal drafting in seven phases with three safety gates.
//!
//! The gate names and their checks are placeholders of our own: each gate
//! guards the phase that follows it.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{artifact_block, OrchestratorError};
use crate::assurance::{ask_reviewer, md_cell, parse_block};
use crate::bridges::{CostLedger, Message};
use crate::review::{fenced_block, AccessScope, ReviewEnv};

pub const PHASE_NAMES: [&str; 7] = [
    "parse-reviews",
    "classify-concerns",
    "plan-responses",
    "draft-responses",
    "verify-evidence",
    "stress-test",
    "finalize",
];

pub const GATE_NAMES: [&str; 3] = ["claims-check", "tone-check", "evidence-check"];

/// 1-based phase each gate stands in front of.
pub const GATE_POSITIONS: [usize; 3] = [4, 5, 6];

pub const CATEGORIES: [&str; 5] = ["clarification", "new_experiment", "misunderstanding", "limitation", "other"];

/// Phrases the tone check refuses.
pub const DISMISSIVE_PHRASES: [&str; 6] = [
    "obviously",
    "clearly wrong",
    "the reviewer failed",
    "the reviewer misunderstood",
    "trivially",
    "as anyone can see",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Concern {
    pub id: String,
    pub reviewer: String,
    pub text: String,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub id: String,
    pub strategy: String,
    #[serde(default)]
    pub evidence: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Followup {
    pub question: String,
    #[serde(default)]
    pub concern: String,
}

fn reviewer_heading(line: &str) -> Option<String> {
    let t = line.trim().trim_start_matches('#').trim();
    let lower = t.to_ascii_lowercase();
    let rest = lower.strip_prefix("reviewer")?;
    if !rest.starts_with(|c: char| c == ' ' || c.is_ascii_digit()) {
        return None;
    }
    let label: String = rest.trim_start().chars().take_while(|c| c.is_ascii_alphanumeric()).collect();
    if label.is_empty() || t.len() > 40 {
        return None;
    }
    Some(label.to_ascii_uppercase())
}

fn bullet(line: &str) -> Option<&str> {
    let t = line.trim_start();
    if let Some(r) = t.strip_prefix("- ").or_else(|| t.strip_prefix("* ")) {
        return Some(r.trim());
    }
    let digits = t.chars().take_while(char::is_ascii_digit).count();
    if digits > 0 {
        let r = &t[digits..];
        if let Some(r) = r.strip_prefix(". ").or_else(|| r.strip_prefix(") ")) {
            return Some(r.trim());
        }
    }
    None
}

/// Split review text into concerns. Reviewer headings (`## Reviewer 2`)
/// start sections; each bullet or numbered line is one concern.
pub fn parse_reviews(text: &str) -> Vec<Concern> {
    let mut out = Vec::new();
    let mut reviewer = 0usize;
    let mut label = "1".to_string();
    let mut n = 0usize;
    for line in text.lines() {
        if let Some(l) = reviewer_heading(line) {
            reviewer += 1;
            label = l;
            n = 0;
            continue;
        }
        if let Some(b) = bullet(line).filter(|b| !b.is_empty()) {
            reviewer = reviewer.max(1);
            n += 1;
            out.push(Concern {
                id: format!("R{reviewer}-{n}"),
                reviewer: label.clone(),
                text: b.to_string(),
                category: String::new(),
            });
        }
    }
    out
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebuttalState {
    pub concerns: Vec<Concern>,
    pub plan: Vec<PlanEntry>,
    pub draft: Option<String>,
    pub unsupported: Option<Vec<String>>,
    pub char_limit: usize,
    /// Artifact names and project paths a plan may cite as evidence.
    pub known_evidence: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", content = "reason", rename_all = "snake_case")]
pub enum GateOutcome {
    Passed,
    Failed(String),
    NotEvaluated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub gate: String,
    /// Phase this gate stands in front of, 1-based.
    pub before_phase: usize,
    pub outcome: GateOutcome,
}

/// Check one gate (0, 1 or 2) against the state built so far.
pub fn evaluate_gate(gate: usize, s: &RebuttalState) -> Result<(), String> {
    match gate {
        0 => {
            let planned: BTreeMap<&str, &PlanEntry> = s.plan.iter().map(|p| (p.id.as_str(), p)).collect();
            let unplanned: Vec<&str> = s.concerns.iter().map(|c| c.id.as_str()).filter(|id| !planned.contains_key(id)).collect();
            if !unplanned.is_empty() {
                return Err(format!("no planned response for {}", unplanned.join(", ")));
            }
            let phantom: Vec<String> = s
                .plan
                .iter()
                .flat_map(|p| p.evidence.iter().map(move |e| (p, e)))
                .filter(|(_, e)| !s.known_evidence.contains(e.as_str()))
                .map(|(p, e)| format!("{} cites `{e}`", p.id))
                .collect();
            if !phantom.is_empty() {
                return Err(format!("plan promises unavailable evidence: {}", phantom.join(", ")));
            }
            Ok(())
        }
        1 => {
            let draft = s.draft.as_deref().ok_or("no draft to check")?;
            let len = draft.chars().count();
            if len > s.char_limit {
                return Err(format!("draft is {len} characters, limit {}", s.char_limit));
            }
            let lower = draft.to_lowercase();
            let hits: Vec<&str> = DISMISSIVE_PHRASES.iter().copied().filter(|p| lower.contains(p)).collect();
            if !hits.is_empty() {
                return Err(format!("dismissive wording: {}", hits.join(", ")));
            }
            let missing: Vec<&str> = s.concerns.iter().map(|c| c.id.as_str()).filter(|id| !draft.contains(id)).collect();
            if !missing.is_empty() {
                return Err(format!("draft does not answer {}", missing.join(", ")));
            }
            Ok(())
        }
        2 => match &s.unsupported {
            None => Err("evidence was not verified".into()),
            Some(u) if u.is_empty() => Ok(()),
            Some(u) => Err(format!("unsupported statements: {}", u.join(" | "))),
        },
        _ => Err(format!("no gate {gate}")),
    }
}

/// Evaluate the three gates in phase order; after the first failure the
/// rest are not evaluated.
pub fn rebuttal_gates(state: &RebuttalState) -> Vec<GateDecision> {
    let mut failed = false;
    (0..3)
        .map(|g| {
            let outcome = if failed {
                GateOutcome::NotEvaluated
            } else {
                match evaluate_gate(g, state) {
                    Ok(()) => GateOutcome::Passed,
                    Err(r) => {
                        failed = true;
                        GateOutcome::Failed(r)
                    }
                }
            };
            GateDecision { gate: GATE_NAMES[g].into(), before_phase: GATE_POSITIONS[g], outcome }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseStatus {
    Done,
    Failed,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub phase: usize,
    pub name: String,
    pub status: PhaseStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RebuttalOutcome {
    pub phases: Vec<PhaseRecord>,
    pub gates: Vec<GateDecision>,
    pub state: RebuttalState,
    pub followups: Vec<Followup>,
    pub rebuttal: Option<String>,
    /// Which phase or gate stopped the run.
    pub stopped_by: Option<String>,
}

impl RebuttalOutcome {
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("# Rebuttal report\n\n| Phase | Name | Status | Detail |\n|---|---|---|---|\n");
        for p in &self.phases {
            let st = match p.status {
                PhaseStatus::Done => "done",
                PhaseStatus::Failed => "failed",
                PhaseStatus::Skipped => "skipped",
            };
            let _ = writeln!(s, "| {} | {} | {st} | {} |", p.phase, p.name, md_cell(&p.detail));
        }
        s.push_str("\n## Gates\n\n");
        for g in &self.gates {
            let o = match &g.outcome {
                GateOutcome::Passed => "passed".to_string(),
                GateOutcome::Failed(r) => format!("failed: {r}"),
                GateOutcome::NotEvaluated => "not evaluated".to_string(),
            };
            let _ = writeln!(s, "- {} (before phase {}): {o}", g.gate, g.before_phase);
        }
        if !self.state.concerns.is_empty() {
            s.push_str("\n## Concerns\n\n| Id | Reviewer | Category | Concern |\n|---|---|---|---|\n");
            for c in &self.state.concerns {
                let _ = writeln!(s, "| {} | {} | {} | {} |", c.id, c.reviewer, md_cell(&c.category), md_cell(&c.text));
            }
        }
        if !self.followups.is_empty() {
            s.push_str("\n## Likely follow-up questions\n\n");
            for f in &self.followups {
                let _ = writeln!(s, "- {} ({})", f.question, f.concern);
            }
        }
        s
    }
}

pub struct RebuttalInputs<'a> {
    pub env: &'a ReviewEnv<'a>,
    pub executor: &'a str,
    pub reviewer: &'a str,
    pub ledger: Option<&'a CostLedger>,
    pub reviews: &'a str,
    /// Project-relative path of the paper draft.
    pub paper_path: PathBuf,
    pub char_limit: usize,
    pub stress_questions: usize,
    pub known_evidence: BTreeSet<String>,
}

const EXECUTOR_SYSTEM: &str = "You help authors answer peer reviews. Stay factual and courteous.";

fn concern_list(s: &RebuttalState) -> String {
    let mut out = String::new();
    for c in &s.concerns {
        let cat = if c.category.is_empty() { String::new() } else { format!(" [{}]", c.category) };
        let _ = writeln!(out, "- {}{cat}: {}", c.id, c.text);
    }
    out
}

fn ask_executor(i: &RebuttalInputs, prompt: String) -> Result<String, OrchestratorError> {
    let msgs = [Message::system(EXECUTOR_SYSTEM), Message::user(prompt)];
    Ok(i.env.bridges.send_chat(i.executor, &msgs, i.ledger)?.reply)
}

enum Step {
    Done(String),
    Failed(String),
}

pub fn run_rebuttal(i: &RebuttalInputs) -> Result<RebuttalOutcome, OrchestratorError> {
    let mut st = RebuttalState {
        char_limit: i.char_limit,
        known_evidence: i.known_evidence.clone(),
        ..RebuttalState::default()
    };
    let mut phases: Vec<PhaseRecord> = Vec::new();
    let mut gates: Vec<GateDecision> = Vec::new();
    let mut followups = Vec::new();
    let mut rebuttal = None;
    let mut stopped_by = None;

    for phase in 1..=7 {
        if stopped_by.is_none() {
            if let Some(g) = GATE_POSITIONS.iter().position(|&p| p == phase) {
                let outcome = match evaluate_gate(g, &st) {
                    Ok(()) => GateOutcome::Passed,
                    Err(r) => {
                        stopped_by = Some(format!("gate {}", GATE_NAMES[g]));
                        GateOutcome::Failed(r)
                    }
                };
                gates.push(GateDecision { gate: GATE_NAMES[g].into(), before_phase: phase, outcome });
            }
        }
        if stopped_by.is_some() {
            phases.push(PhaseRecord {
                phase,
                name: PHASE_NAMES[phase - 1].into(),
                status: PhaseStatus::Skipped,
                detail: String::new(),
            });
            continue;
        }
        let result = match phase {
            1 => {
                st.concerns = parse_reviews(i.reviews);
                if st.concerns.is_empty() {
                    Step::Failed("no review concerns found".into())
                } else {
                    Step::Done(format!("{} concerns", st.concerns.len()))
                }
            }
            2 => {
                let prompt = format!(
                    "Task: rebuttal/classify\nConcerns:\n{}\nCategories: {}\nReply with a fenced block tagged `concerns` holding [{{\"id\", \"category\"}}].\n",
                    concern_list(&st),
                    CATEGORIES.join(", ")
                );
                let reply = ask_executor(i, prompt)?;
                match parse_block::<Vec<BTreeMap<String, String>>>(&reply, "concerns") {
                    Ok(rows) => {
                        for c in &mut st.concerns {
                            let cat = rows
                                .iter()
                                .find(|r| r.get("id") == Some(&c.id))
                                .and_then(|r| r.get("category"))
                                .filter(|c| CATEGORIES.contains(&c.as_str()));
                            c.category = cat.cloned().unwrap_or_else(|| "other".into());
                        }
                        Step::Done(String::new())
                    }
                    Err(e) => Step::Failed(e),
                }
            }
            3 => {
                let mut prompt = format!("Task: rebuttal/plan\nConcerns:\n{}\nAvailable evidence:\n", concern_list(&st));
                for e in &st.known_evidence {
                    let _ = writeln!(prompt, "- {e}");
                }
                prompt.push_str("Reply with a fenced block tagged `plan` holding [{\"id\", \"strategy\", \"evidence\": [...]}]. Cite only available evidence.\n");
                let reply = ask_executor(i, prompt)?;
                match parse_block::<Vec<PlanEntry>>(&reply, "plan") {
                    Ok(plan) => {
                        st.plan = plan;
                        Step::Done(format!("{} planned responses", st.plan.len()))
                    }
                    Err(e) => Step::Failed(e),
                }
            }
            4 => {
                let mut prompt = format!("Task: rebuttal/draft\nConcerns:\n{}\nPlan:\n", concern_list(&st));
                for p in &st.plan {
                    let _ = writeln!(prompt, "- {}: {} (evidence: {})", p.id, p.strategy, p.evidence.join(", "));
                }
                let _ = write!(
                    prompt,
                    "Write the rebuttal in at most {} characters, answering each concern by id.\nWrap it in a fenced block tagged `artifact:REBUTTAL`.\n",
                    st.char_limit
                );
                let reply = ask_executor(i, prompt)?;
                let text = artifact_block(&reply, "REBUTTAL").unwrap_or_else(|| format!("{}\n", reply.trim()));
                st.draft = Some(text);
                Step::Done(String::new())
            }
            5 => {
                let extra = format!(
                    "Rebuttal draft:\n{}\nList every statement in the draft that the paper does not support. \
                     Reply with a fenced block tagged `unsupported` holding a JSON list of strings (empty when all are supported).",
                    st.draft.as_deref().unwrap_or("")
                );
                let reply = ask_reviewer(
                    i.env,
                    i.reviewer,
                    AccessScope::DocumentOnly,
                    "rebuttal/verify",
                    "Check that the rebuttal only claims what the paper supports",
                    std::slice::from_ref(&i.paper_path),
                    &extra,
                )?;
                match parse_block::<Vec<String>>(&reply, "unsupported") {
                    Ok(u) => {
                        let n = u.len();
                        st.unsupported = Some(u);
                        Step::Done(format!("{n} unsupported"))
                    }
                    Err(e) => Step::Failed(e),
                }
            }
            6 => {
                let extra = format!(
                    "Rebuttal draft:\n{}\nAsk up to {} hard follow-up questions a skeptical reviewer would raise. \
                     Reply with a fenced block tagged `followups` holding [{{\"question\", \"concern\"}}].",
                    st.draft.as_deref().unwrap_or(""),
                    i.stress_questions
                );
                let reply = ask_reviewer(
                    i.env,
                    i.reviewer,
                    AccessScope::DocumentOnly,
                    "rebuttal/stress-test",
                    "Stress-test the rebuttal",
                    std::slice::from_ref(&i.paper_path),
                    &extra,
                )?;
                match fenced_block(&reply, "followups").map(|b| serde_json::from_str::<Vec<Followup>>(b.trim())) {
                    Some(Ok(mut f)) => {
                        f.truncate(i.stress_questions);
                        followups = f;
                        Step::Done(format!("{} follow-ups", followups.len()))
                    }
                    Some(Err(e)) => Step::Failed(format!("```followups block: {e}")),
                    None => Step::Failed("no ```followups block".into()),
                }
            }
            _ => {
                let mut text = st.draft.clone().unwrap_or_default().trim().to_string();
                text.push('\n');
                rebuttal = Some(text);
                Step::Done(String::new())
            }
        };
        let (status, detail) = match result {
            Step::Done(d) => (PhaseStatus::Done, d),
            Step::Failed(d) => {
                stopped_by = Some(format!("phase {phase} ({})", PHASE_NAMES[phase - 1]));
                (PhaseStatus::Failed, d)
            }
        };
        phases.push(PhaseRecord { phase, name: PHASE_NAMES[phase - 1].into(), status, detail });
    }
    for g in gates.len()..3 {
        gates.push(GateDecision {
            gate: GATE_NAMES[g].into(),
            before_phase: GATE_POSITIONS[g],
            outcome: GateOutcome::NotEvaluated,
        });
    }
    Ok(RebuttalOutcome { phases, gates, state: st, followups, rebuttal, stopped_by })
}
