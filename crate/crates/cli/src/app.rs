//! Operations shared by the one-shot commands and the interactive session.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use aris_core::bridges::{cost_report, resolve_route, CostLedger};
use aris_core::config::ArisConfig;
use aris_core::meta::{
    accept_proposal, analyze, decline_proposal, draft_proposals, gate_proposal, list_proposals, Event, EventLog,
    PatchProposal,
};
use aris_core::orchestrator::{
    resolve_workflow, workflow_names, Engine, PreApproved, RunRequest, RunStatus, RunSummary, StepRecord, StepStatus,
    WorkflowDef,
};

use crate::command::{parse_command, Command, VerbKind};
use crate::cost::render_cost_table;

/// Gates approved ahead of time by `--yes-*` flags. Each kind is opt-in.
#[derive(Debug, Clone, Default)]
pub struct YesFlags {
    pub checkpoints: bool,
    pub gates: BTreeSet<String>,
}

impl YesFlags {
    pub fn approver(&self) -> PreApproved {
        let mut gates = self.gates.clone();
        if self.checkpoints {
            gates.insert("human_checkpoint".into());
        }
        PreApproved { gates, all: false }
    }
}

pub fn open_engine(root: &Path, user_skills: Option<&Path>) -> Result<Engine> {
    if !ArisConfig::path(root).is_file() {
        bail!("no config at {}; run `aris wizard` first", ArisConfig::path(root).display());
    }
    let engine = Engine::open(root)?;
    Ok(match user_skills {
        Some(u) => engine.with_user_skills(u)?,
        None => engine,
    })
}

pub fn command_for(engine: &Engine, line: &str) -> Result<Command> {
    Ok(parse_command(line, &engine.registry, &workflow_names(Some(&engine.root)))?)
}

/// An argument naming a readable file stands for its contents; anything
/// else is literal text.
fn argument_text(arg: &str, cwd: &Path) -> Result<String> {
    let p = Path::new(arg);
    let candidate = if p.is_absolute() { p.to_path_buf() } else { cwd.join(p) };
    if candidate.is_file() {
        return std::fs::read_to_string(&candidate).with_context(|| format!("reading {}", candidate.display()));
    }
    Ok(arg.to_string())
}

/// Positional arguments fill the workflow's inputs in order, then its
/// optional inputs. Extra arguments join the last slot.
pub fn bind_inputs(def: &WorkflowDef, args: &[String], cwd: &Path) -> Result<Vec<(String, String)>> {
    let slots: Vec<&String> = def.inputs.iter().chain(&def.optional_inputs).collect();
    if args.is_empty() {
        return Ok(Vec::new());
    }
    if slots.is_empty() {
        bail!("`{}` takes no inputs", def.name);
    }
    let mut out: Vec<(String, String)> = Vec::new();
    for (i, arg) in args.iter().enumerate() {
        let text = argument_text(arg, cwd)?;
        if i < slots.len() {
            out.push((slots[i].clone(), text));
        } else {
            let last = out.last_mut().expect("at least one slot is bound");
            if !last.1.ends_with('\n') && !last.1.ends_with(' ') {
                last.1.push(' ');
            }
            last.1.push_str(&text);
        }
    }
    Ok(out)
}

pub fn run_command(engine: &mut Engine, cmd: &Command, cwd: &Path, run_id: Option<String>) -> Result<RunSummary> {
    if cmd.kind == VerbKind::Builtin {
        bail!("`/{}` is not a workflow or skill", cmd.verb);
    }
    let def = resolve_workflow(Some(&engine.root), &engine.registry, &cmd.verb)?;
    let inputs = bind_inputs(&def, &cmd.args, cwd)?;
    Ok(engine.run(RunRequest {
        workflow: cmd.verb.clone(),
        inputs,
        directives: cmd.directives.clone(),
        unknown_directives: cmd.unknown_directives.clone(),
        raw_command: Some(cmd.raw.clone()),
        run_id,
    })?)
}

pub fn step_line(rec: &StepRecord) -> String {
    let status = match rec.status {
        StepStatus::Done => "done",
        StepStatus::SkippedByGate => "skipped",
        StepStatus::Failed => "FAILED",
    };
    let mut line = format!("[{:>2}] {:<28} {status}", rec.index, rec.skill);
    if !rec.detail.is_empty() {
        let _ = write!(line, "  {}", rec.detail);
    }
    line
}

pub fn summary_text(s: &RunSummary) -> String {
    let mut out = format!("run {} ({}): {}\n", s.run_id, s.workflow, s.status.as_str());
    if let Some(p) = &s.parent_run {
        let _ = writeln!(out, "resumed from {p}");
    }
    let _ = writeln!(
        out,
        "effort {} / reviewer {} at {} / executor {}",
        s.effort.as_str(),
        s.reviewer,
        s.reviewer_reasoning,
        s.executor
    );
    if let Some(w) = &s.family_warning {
        let _ = writeln!(out, "warning: {w}");
    }
    for (k, v) in &s.unknown_directives {
        let _ = writeln!(out, "note: directive `{k}: {v}` is not recognised and was ignored");
    }
    for r in &s.reviews {
        let scores: Vec<String> = r.scores.iter().map(|x| format!("{x:.1}")).collect();
        let _ = writeln!(out, "review {} (step {}): {} after {} round(s) [{}]", r.task, r.step, r.decision.as_str(), r.scores.len(), scores.join(" "));
    }
    match s.status {
        RunStatus::PendingApproval => {
            let gate = s.approvals.last().map(|a| a.gate.as_str()).unwrap_or("?");
            let _ = writeln!(out, "stopped at gate `{gate}`; approve it and `aris resume {}`", s.run_id);
        }
        RunStatus::GateDeclined | RunStatus::StepFailed => {
            let _ = writeln!(out, "resume with `aris resume {}` once the cause is addressed", s.run_id);
        }
        _ => {}
    }
    out
}

pub fn latest_run(root: &Path) -> Option<String> {
    let rd = std::fs::read_dir(root.join(".aris/runs")).ok()?;
    rd.flatten()
        .filter(|e| e.path().join("summary.json").is_file())
        .max_by_key(|e| e.path().join("summary.json").metadata().and_then(|m| m.modified()).ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
}

pub fn status_text(root: &Path, run: Option<&str>) -> Result<String> {
    let id = match run {
        Some(r) => r.to_string(),
        None => latest_run(root).ok_or_else(|| anyhow!("no finished runs yet"))?,
    };
    let s = RunSummary::load(root, &id)?;
    let mut out = summary_text(&s);
    for rec in &s.steps {
        out.push_str(&step_line(rec));
        out.push('\n');
    }
    Ok(out)
}

pub fn cost_text(root: &Path, run: Option<&str>) -> Result<String> {
    Ok(render_cost_table(&cost_report(root, run)?))
}

pub fn render_figure(spec_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(spec_path).with_context(|| format!("reading {}", spec_path.display()))?;
    let doc: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("{} is not JSON", spec_path.display()))?;
    match aris_figure::validate_spec(&doc) {
        Ok(spec) => Ok(aris_figure::render(&spec)),
        Err(errs) => bail!("{}", validation_text(&errs)),
    }
}

pub fn validation_text(errs: &[aris_figure::ValidationError]) -> String {
    errs.iter().map(|e| format!("{}: {e}", e.code())).collect::<Vec<_>>().join("\n")
}

pub fn meta_analyze(root: &Path) -> Result<String> {
    let cfg = ArisConfig::load(root)?;
    let (events, skipped) = EventLog::for_project(root).read()?;
    let mut out = format!("{} events", events.len());
    if !skipped.is_empty() {
        let _ = write!(out, " ({} unreadable line(s) skipped)", skipped.len());
    }
    out.push('\n');
    out.push_str(&analyze(&events, &cfg.meta).to_text());
    Ok(out)
}

pub fn proposal_line(p: &PatchProposal) -> String {
    let score = p.reviewer_score.map_or("-".to_string(), |s| format!("{s:.1}"));
    format!("{}  {:<9} {:>4}  {}", p.proposal_id, p.state.as_str(), score, p.target)
}

/// Draft patches for the current findings and score each with the reviewer.
/// Skill files are only read.
pub fn meta_propose(engine: &Engine) -> Result<Vec<PatchProposal>> {
    let root = &engine.root;
    let (events, _) = EventLog::for_project(root).read()?;
    let findings = analyze(&events, &engine.config.meta);
    let ledger = CostLedger::for_run(root, "meta");
    let drafts = draft_proposals(root, &engine.bridges, &engine.config.review.executor, Some(&ledger), &findings)?;
    let route = resolve_route(None, &engine.config)?;
    drafts
        .iter()
        .map(|p| Ok(gate_proposal(root, &engine.bridges, &route, Some(&ledger), p, engine.config.meta.surface_threshold)?))
        .collect()
}

pub fn meta_list(root: &Path) -> Result<String> {
    let mut out = String::new();
    for p in list_proposals(root)? {
        out.push_str(&proposal_line(&p));
        out.push('\n');
    }
    if out.is_empty() {
        out.push_str("no proposals\n");
    }
    Ok(out)
}

/// The explicit accept: the approval is logged before the patch is applied.
pub fn meta_accept(root: &Path, id: &str) -> Result<PatchProposal> {
    let p = PatchProposal::load(root, id)?;
    let mut ev = Event::now("approval:patch_accept", id, true);
    ev.skill = Some(p.target.clone());
    EventLog::for_project(root).log(&ev)?;
    Ok(accept_proposal(root, id)?)
}

pub fn meta_decline(root: &Path, id: &str) -> Result<PatchProposal> {
    let p = decline_proposal(root, id)?;
    let mut ev = Event::now("approval:patch_accept", id, false);
    ev.skill = Some(p.target.clone());
    EventLog::for_project(root).log(&ev)?;
    Ok(p)
}

pub fn skills_text(engine: &Engine, category: Option<&str>) -> String {
    let mut out = String::new();
    for l in engine.registry.list(category) {
        let description = engine.registry.resolve(&l.name).map(|s| s.description.as_str()).unwrap_or("");
        let _ = writeln!(out, "{:<28} {:<8} {:<16} {description}", l.name, l.tier.as_str(), l.category);
    }
    out
}

pub fn workflows_text(root: &Path) -> Result<String> {
    let mut out = String::new();
    for name in workflow_names(Some(root)) {
        let def = aris_core::orchestrator::load_workflow(Some(root), &name)?;
        let _ = writeln!(out, "{:<20} {:>2} steps  inputs: {:<28} {}", name, def.steps.len(), def.inputs.join(", "), def.description);
    }
    Ok(out)
}

pub fn project_root(arg: Option<PathBuf>) -> Result<PathBuf> {
    match arg {
        Some(p) => Ok(p),
        None => Ok(std::env::current_dir()?),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use aris_core::orchestrator::{load_workflow, REQUEST_ARTIFACT};
    use aris_core::skills::SkillRegistry;

    #[test]
    fn files_become_contents_and_extras_join_the_last_slot() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("draft.md"), "# D\n").unwrap();
        let def = load_workflow(None, "rebuttal").unwrap();
        let got = bind_inputs(&def, &["draft.md".into(), "R1".into(), "says".into()], dir.path()).unwrap();
        assert_eq!(got, [("DRAFT".to_string(), "# D\n".to_string()), ("REVIEWS".to_string(), "R1 says".to_string())]);
    }

    #[test]
    fn free_text_skill_takes_the_whole_request() {
        let def = resolve_workflow(None, &SkillRegistry::bundled(), "arxiv").unwrap();
        let got = bind_inputs(&def, &["sparse".into(), "routing".into()], Path::new("/nonexistent")).unwrap();
        assert_eq!(got, [(REQUEST_ARTIFACT.to_string(), "sparse routing".to_string())]);
    }

    #[test]
    fn yes_flags_are_per_gate() {
        let y = YesFlags { checkpoints: false, gates: ["claims".to_string()].into() };
        let a = y.approver();
        assert!(!a.all);
        assert!(a.gates.contains("claims"));
        assert!(!a.gates.contains("human_checkpoint"));
    }
}
