//! Sequential step execution with a checkpoint after every step.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::compile::compile_stub;
use super::directives::{Directive, RunDirectives};
use super::effort::{apply_effort, EffortPreset, Param, Preset, REVIEWER_REASONING};
use super::rebuttal::{run_rebuttal, RebuttalInputs};
use super::runner::{CommandRunner, ExperimentOutput, ExperimentRequest, ShellRunner, StubRunner};
use super::workflow::{resolve_workflow, StepDef, StepKind, WorkflowDef};
use super::{artifact_block, has_artifact_blocks, OrchestratorError};
use crate::artifacts::{ArtifactStore, Checkpoint, ProjectLock};
use crate::assurance::editing::run_editing_passes;
use crate::assurance::proof::{build_proof_ledger, ProofTaxonomy};
use crate::assurance::stage3::{audit_paper_claims, parse_evidence_text, Evidence};
use crate::assurance::{map_result_to_claim, run_experiment_audit, AssuranceError, CandidateClaim, ClaimLedger, IntegrityReport};
use crate::bridges::{resolve_route, test_mode_from_env, Bridges, CostLedger, Message};
use crate::config::ArisConfig;
use crate::fsutil::{atomic_write, sha256_hex};
use crate::meta::{Event, EventLog};
use crate::review::{
    auto_debug, check_family_separation, fenced_block, run_review_loop, AccessScope, ActionItem, ContextPolicy,
    ConvergencePolicy, DebugOutcome, Decision, Failure, FamilySeparation, LoopSpec, Remediator, Rescue, ReviewEnv,
    ReviewError, Reviser, Severity, ThreadStore, DEFAULT_RUBRIC,
};
use crate::skills::SkillRegistry;
use crate::wiki::{EntityType, NewNode, Wiki};

// ---------------------------------------------------------------- approvals

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateKind {
    /// Inserted before every step by `human_checkpoint: true`.
    HumanCheckpoint,
    /// Declared with `gate:` on a step.
    StepGate,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApprovalRequest<'a> {
    pub kind: GateKind,
    pub gate: &'a str,
    pub workflow: &'a str,
    /// 1-based.
    pub step: usize,
    pub skill: &'a str,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approval {
    Approved,
    Declined,
    /// Nobody could answer; the run stops without crossing the gate.
    Pending,
}

pub trait Approver {
    fn decide(&mut self, req: &ApprovalRequest) -> Approval;
}

/// Leaves every gate pending. The default for unattended runs.
pub struct PendingApprover;

impl Approver for PendingApprover {
    fn decide(&mut self, _: &ApprovalRequest) -> Approval {
        Approval::Pending
    }
}

impl<F: FnMut(&ApprovalRequest) -> Approval> Approver for F {
    fn decide(&mut self, req: &ApprovalRequest) -> Approval {
        self(req)
    }
}

/// Approves the gates named up front (or all of them); the rest stay pending.
#[derive(Debug, Clone, Default)]
pub struct PreApproved {
    pub gates: BTreeSet<String>,
    pub all: bool,
}

impl Approver for PreApproved {
    fn decide(&mut self, req: &ApprovalRequest) -> Approval {
        if self.all || self.gates.contains(req.gate) {
            Approval::Approved
        } else {
            Approval::Pending
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApprovalRecord {
    pub step: usize,
    pub skill: String,
    pub kind: GateKind,
    pub gate: String,
    pub decision: Approval,
}

// ---------------------------------------------------------------- summary

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepStatus {
    Done,
    SkippedByGate,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProducedArtifact {
    pub name: String,
    pub version: u64,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 1-based.
    pub index: usize,
    pub skill: String,
    pub kind: StepKind,
    pub status: StepStatus,
    pub detail: String,
    pub produced: Vec<ProducedArtifact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewRecord {
    pub step: usize,
    pub task: String,
    pub decision: Decision,
    pub scores: Vec<f64>,
    pub thread_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    GateDeclined,
    PendingApproval,
    StepFailed,
    /// Stopped by `stop_after`, as if the process had been killed.
    Interrupted,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Completed => 0,
            Self::GateDeclined => 2,
            Self::PendingApproval => 3,
            Self::StepFailed => 4,
            Self::Interrupted => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Completed => "completed",
            Self::GateDeclined => "gate_declined",
            Self::PendingApproval => "pending_approval",
            Self::StepFailed => "step_failed",
            Self::Interrupted => "interrupted",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub version: u64,
    pub content_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub run_id: String,
    pub workflow: String,
    pub parent_run: Option<String>,
    pub status: RunStatus,
    pub steps: Vec<StepRecord>,
    pub reviews: Vec<ReviewRecord>,
    pub approvals: Vec<ApprovalRecord>,
    pub effort: Preset,
    pub reviewer_reasoning: String,
    pub executor: String,
    pub reviewer: String,
    pub family_warning: Option<String>,
    pub directives: RunDirectives,
    pub unknown_directives: Vec<(String, String)>,
    /// The command line that started the run, verbatim.
    pub raw_command: Option<String>,
    pub params: BTreeMap<String, Value>,
    pub artifacts: BTreeMap<String, ArtifactRef>,
}

impl RunSummary {
    pub fn path(project_root: &Path, run_id: &str) -> PathBuf {
        run_dir(project_root, run_id).join("summary.json")
    }

    pub fn load(project_root: &Path, run_id: &str) -> Result<Self, OrchestratorError> {
        let text = std::fs::read_to_string(Self::path(project_root, run_id))?;
        serde_json::from_str(&text).map_err(|e| OrchestratorError::BadCheckpoint(e.to_string()))
    }

    pub fn step_count(&self, status: StepStatus) -> usize {
        self.steps.iter().filter(|s| s.status == status).count()
    }
}

pub fn run_dir(project_root: &Path, run_id: &str) -> PathBuf {
    project_root.join(".aris/runs").join(run_id)
}

/// Everything a resumed run needs, stored in the checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RunState {
    threads: ThreadStore,
    bridges: BTreeMap<String, Value>,
    versions: BTreeMap<String, u64>,
    steps: Vec<StepRecord>,
    reviews: Vec<ReviewRecord>,
    approvals: Vec<ApprovalRecord>,
    params: BTreeMap<String, Param>,
    directives: RunDirectives,
    unknown_directives: Vec<(String, String)>,
    overrides: BTreeMap<String, String>,
    preset: Preset,
    executor: String,
    reviewer: String,
    family_warning: Option<String>,
    raw_command: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunRequest {
    pub workflow: String,
    /// Artifact name and content for each input supplied on this run.
    pub inputs: Vec<(String, String)>,
    pub directives: Vec<Directive>,
    pub unknown_directives: Vec<(String, String)>,
    pub raw_command: Option<String>,
    pub run_id: Option<String>,
}

// ---------------------------------------------------------------- engine

pub struct Engine {
    pub root: PathBuf,
    pub config: ArisConfig,
    pub bridges: Bridges,
    pub registry: SkillRegistry,
    pub store: ArtifactStore,
    pub runner: Box<dyn CommandRunner>,
    pub approver: Box<dyn Approver>,
    pub events: EventLog,
    /// Stop once this many steps have checkpointed, as if killed.
    pub stop_after: Option<usize>,
    /// Called with each step record once it is settled.
    pub progress: Option<Box<dyn FnMut(&StepRecord)>>,
}

fn new_run_id() -> String {
    let now = chrono::Utc::now().format("%Y%m%dT%H%M%S");
    format!("run-{now}-{:04x}", rand::random::<u16>())
}

impl Engine {
    /// Engine over explicit parts; skills come from the bundle plus the
    /// project's `skills/` directory.
    pub fn new(root: &Path, config: ArisConfig, bridges: Bridges) -> Result<Self, OrchestratorError> {
        let project_skills = root.join("skills");
        let registry = SkillRegistry::discover(None, project_skills.is_dir().then_some(project_skills.as_path()))?;
        let runner: Box<dyn CommandRunner> = match &config.experiment.command {
            Some(cmd) if !cmd.trim().is_empty() => Box::new(ShellRunner {
                command: cmd.clone(),
                timeout: Duration::from_secs(config.experiment.timeout_secs),
            }),
            _ => Box::new(StubRunner::for_project(root)?),
        };
        Ok(Self {
            root: root.to_path_buf(),
            store: ArtifactStore::new(root),
            events: EventLog::for_project(root),
            config,
            bridges,
            registry,
            runner,
            approver: Box::new(PendingApprover),
            stop_after: None,
            progress: None,
        })
    }

    /// Engine for a project with a `.aris/config.toml`.
    pub fn open(root: &Path) -> Result<Self, OrchestratorError> {
        let config = ArisConfig::load(root).map_err(|e| OrchestratorError::Config(e.to_string()))?;
        let bridges = Bridges::from_config(&config, root, test_mode_from_env())?;
        Self::new(root, config, bridges)
    }

    pub fn with_user_skills(mut self, user_root: &Path) -> Result<Self, OrchestratorError> {
        let project_skills = self.root.join("skills");
        self.registry = SkillRegistry::discover(
            Some(user_root),
            project_skills.is_dir().then_some(project_skills.as_path()),
        )?;
        Ok(self)
    }

    fn family(&self, id: &str) -> String {
        self.bridges.get(id).map(|b| b.family().to_string()).unwrap_or_default()
    }

    pub fn run(&mut self, req: RunRequest) -> Result<RunSummary, OrchestratorError> {
        let def = resolve_workflow(Some(&self.root), &self.registry, &req.workflow)?;
        def.validate(&self.registry)?;
        for s in &def.steps {
            if let Some(w) = &s.when {
                if w != "auto_write" && w != "human_checkpoint" {
                    return Err(OrchestratorError::BadWorkflow {
                        origin: def.name.clone(),
                        reason: format!("`when: {w}` names no boolean directive"),
                    });
                }
            }
        }
        let directives = RunDirectives::from_list(&req.directives);
        let preset = match directives.effort {
            Some(p) => p,
            None => self
                .config
                .project
                .default_preset
                .parse()
                .map_err(|e: String| OrchestratorError::Config(e))?,
        };
        let executor = self.config.review.executor.clone();
        if executor.is_empty() {
            return Err(OrchestratorError::Config("review.executor is not set".into()));
        }
        let reviewer = resolve_route(directives.reviewer.as_deref(), &self.config)?;
        let family_warning = match check_family_separation(&self.family(&executor), &self.family(&reviewer)) {
            FamilySeparation::Ok => None,
            FamilySeparation::WarnSameFamily => Some(format!(
                "executor `{executor}` and reviewer `{reviewer}` share a model family"
            )),
        };

        let mut base = def.params.clone();
        if let Some(p) = base.get_mut("max_rounds") {
            p.value = Value::from(self.config.review.max_rounds);
        }
        if let Some(p) = base.get_mut("score_threshold") {
            p.value = Value::from(self.config.review.score_threshold);
        }
        let params = apply_effort(&EffortPreset::new(preset, self.config.project.beast_multiplier), &base);

        let _lock = ProjectLock::acquire(&self.root)?;
        for (name, content) in &req.inputs {
            self.store.put_artifact(name, content.as_bytes(), "user")?;
        }
        let versions = self.store.latest_versions()?;
        for name in &def.inputs {
            if !versions.contains_key(name) {
                return Err(OrchestratorError::MissingInput(name.clone()));
            }
        }
        let overrides = req
            .directives
            .iter()
            .map(|d| match d {
                Directive::Effort(p) => ("effort".to_string(), p.to_string()),
                Directive::Reviewer(r) => ("reviewer".to_string(), r.clone()),
                Directive::HumanCheckpoint(b) => ("human_checkpoint".to_string(), b.to_string()),
                Directive::AutoWrite(b) => ("auto_write".to_string(), b.to_string()),
            })
            .collect();
        let state = RunState {
            threads: ThreadStore::new(),
            bridges: self.bridges.snapshot(),
            versions,
            steps: Vec::new(),
            reviews: Vec::new(),
            approvals: Vec::new(),
            params,
            directives,
            unknown_directives: req.unknown_directives.clone(),
            overrides,
            preset,
            executor,
            reviewer,
            family_warning,
            raw_command: req.raw_command.clone(),
        };
        let run_id = req.run_id.clone().unwrap_or_else(new_run_id);
        self.checkpoint(&run_id, &def, 0, &state, None)?;
        self.drive(&def, run_id, None, state, 0)
    }

    /// Continue a run from its last checkpoint under a forked run id.
    pub fn resume(&mut self, run_id: &str) -> Result<RunSummary, OrchestratorError> {
        let _lock = ProjectLock::acquire(&self.root)?;
        let (fork, cp) = self.store.resume(run_id)?;
        let def = resolve_workflow(Some(&self.root), &self.registry, &cp.workflow)?;
        def.validate(&self.registry)?;
        if cp.step_index > def.steps.len() {
            return Err(OrchestratorError::BadCheckpoint(format!(
                "checkpoint is at step {} but `{}` has {} steps",
                cp.step_index,
                def.name,
                def.steps.len()
            )));
        }
        let mut state: RunState =
            serde_json::from_value(cp.round_state.clone()).map_err(|e| OrchestratorError::BadCheckpoint(e.to_string()))?;
        state.versions = cp.artifact_versions.clone();
        self.bridges.restore(&state.bridges)?;
        self.checkpoint(&fork, &def, cp.step_index, &state, Some(run_id.to_string()))?;
        drop(_lock);
        let _lock = ProjectLock::acquire(&self.root)?;
        self.drive(&def, fork, Some(run_id.to_string()), state, cp.step_index)
    }

    fn checkpoint(
        &self,
        run_id: &str,
        def: &WorkflowDef,
        step_index: usize,
        state: &RunState,
        parent: Option<String>,
    ) -> Result<(), OrchestratorError> {
        let mut state = state.clone();
        state.bridges = self.bridges.snapshot();
        self.store.save_checkpoint(&Checkpoint {
            run_id: run_id.to_string(),
            workflow: def.name.clone(),
            step_index,
            artifact_versions: state.versions.clone(),
            round_state: serde_json::to_value(&state).expect("run state serializes"),
            parent_run: parent,
        })?;
        Ok(())
    }

    fn report(&mut self, steps: &[StepRecord], shown: &mut usize) {
        if let Some(f) = self.progress.as_mut() {
            for rec in &steps[*shown..] {
                f(rec);
            }
        }
        *shown = steps.len();
    }

    fn log_event(&self, event: Event) {
        // Meta logging is best effort and never fails a run.
        let _ = self.events.log(&event);
    }

    fn drive(
        &mut self,
        def: &WorkflowDef,
        run_id: String,
        parent: Option<String>,
        mut state: RunState,
        start: usize,
    ) -> Result<RunSummary, OrchestratorError> {
        let rdir = run_dir(&self.root, &run_id);
        std::fs::create_dir_all(rdir.join("reports"))?;
        let mut status = RunStatus::Completed;
        let mut shown = state.steps.len();
        let mut i = start;
        while i < def.steps.len() {
            let step = &def.steps[i];
            let index = i + 1;
            if let Some(w) = &step.when {
                let on = match w.as_str() {
                    "auto_write" => state.directives.auto_write,
                    _ => state.directives.human_checkpoint,
                };
                if !on {
                    state.steps.push(StepRecord {
                        index,
                        skill: step.skill.clone(),
                        kind: step.kind,
                        status: StepStatus::SkippedByGate,
                        detail: format!("{w} is off"),
                        produced: vec![],
                    });
                    i += 1;
                    self.checkpoint(&run_id, def, i, &state, parent.clone())?;
                    self.report(&state.steps, &mut shown);
                    continue;
                }
            }
            let mut gates: Vec<(GateKind, String)> = Vec::new();
            if state.directives.human_checkpoint {
                gates.push((GateKind::HumanCheckpoint, "human_checkpoint".into()));
            }
            if let Some(g) = &step.gate {
                gates.push((GateKind::StepGate, g.clone()));
            }
            let mut blocked = None;
            for (kind, gate) in gates {
                let decision = self.approver.decide(&ApprovalRequest {
                    kind,
                    gate: &gate,
                    workflow: &def.name,
                    step: index,
                    skill: &step.skill,
                });
                state.approvals.push(ApprovalRecord { step: index, skill: step.skill.clone(), kind, gate: gate.clone(), decision });
                let mut ev = Event::now(format!("approval:{gate}"), run_id.clone(), decision == Approval::Approved);
                ev.skill = Some(step.skill.clone());
                self.log_event(ev);
                match decision {
                    Approval::Approved => {}
                    Approval::Declined => {
                        blocked = Some((RunStatus::GateDeclined, format!("gate `{gate}` declined")));
                        break;
                    }
                    Approval::Pending => {
                        blocked = Some((RunStatus::PendingApproval, format!("gate `{gate}` awaits approval")));
                        break;
                    }
                }
            }
            if let Some((st, why)) = blocked {
                status = st;
                skip_rest(&mut state, def, i, &why);
                break;
            }

            let outcome = self.execute(def, step, index, &run_id, &rdir, &mut state);
            let (ok, detail, produced) = match outcome {
                Ok(o) => {
                    let missing: Vec<&str> = step
                        .produces
                        .iter()
                        .filter(|n| !o.produced.iter().any(|p| &p.name == *n))
                        .map(String::as_str)
                        .collect();
                    match (o.failure, missing.is_empty()) {
                        (Some(f), _) => (false, f, o.produced),
                        (None, false) => (false, format!("did not produce {}", missing.join(", ")), o.produced),
                        (None, true) => (true, o.detail, o.produced),
                    }
                }
                Err(e) => (false, e.to_string(), vec![]),
            };
            let mut ev = Event::now(step.skill.clone(), run_id.clone(), ok);
            ev.skill = Some(step.skill.clone());
            self.log_event(ev);
            state.steps.push(StepRecord {
                index,
                skill: step.skill.clone(),
                kind: step.kind,
                status: if ok { StepStatus::Done } else { StepStatus::Failed },
                detail,
                produced,
            });
            i += 1;
            self.checkpoint(&run_id, def, i, &state, parent.clone())?;
            self.report(&state.steps, &mut shown);
            if !ok {
                status = RunStatus::StepFailed;
                skip_rest(&mut state, def, i, "an earlier step failed");
                break;
            }
            if self.stop_after == Some(i) {
                self.report(&state.steps, &mut shown);
                return Ok(self.summary(def, &run_id, parent, RunStatus::Interrupted, &state));
            }
        }
        self.report(&state.steps, &mut shown);
        let summary = self.summary(def, &run_id, parent, status, &state);
        let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
        text.push('\n');
        atomic_write(&rdir.join("summary.json"), text.as_bytes())?;
        let mut ev = Event::now(format!("workflow:{}", def.name), run_id.clone(), status == RunStatus::Completed);
        ev.overrides = state.overrides.clone();
        self.log_event(ev);
        Ok(summary)
    }

    fn summary(&self, def: &WorkflowDef, run_id: &str, parent: Option<String>, status: RunStatus, state: &RunState) -> RunSummary {
        let artifacts = state
            .versions
            .iter()
            .filter_map(|(name, v)| {
                let bytes = std::fs::read(self.store.artifact_path(name, *v)).ok()?;
                Some((name.clone(), ArtifactRef { version: *v, content_hash: sha256_hex(&bytes) }))
            })
            .collect();
        RunSummary {
            run_id: run_id.to_string(),
            workflow: def.name.clone(),
            parent_run: parent,
            status,
            steps: state.steps.clone(),
            reviews: state.reviews.clone(),
            approvals: state.approvals.clone(),
            effort: state.preset,
            reviewer_reasoning: REVIEWER_REASONING.into(),
            executor: state.executor.clone(),
            reviewer: state.reviewer.clone(),
            family_warning: state.family_warning.clone(),
            directives: state.directives.clone(),
            unknown_directives: state.unknown_directives.clone(),
            raw_command: state.raw_command.clone(),
            params: state.params.iter().map(|(k, p)| (k.clone(), p.value.clone())).collect(),
            artifacts,
        }
    }

    fn execute(
        &self,
        def: &WorkflowDef,
        step: &StepDef,
        index: usize,
        run_id: &str,
        rdir: &Path,
        state: &mut RunState,
    ) -> Result<StepOutcome, OrchestratorError> {
        let ledger = CostLedger::for_run(&self.root, run_id);
        let mut cx = StepCx {
            engine: self,
            def,
            step,
            index,
            run_id,
            reports: rdir.join("reports"),
            review_log: rdir.join("review_log.jsonl"),
            ledger,
            state,
            produced: Vec::new(),
        };
        for name in &step.consumes {
            if !cx.state.versions.contains_key(name) {
                return Err(OrchestratorError::MissingInput(name.clone()));
            }
        }
        let result = match step.kind {
            StepKind::Skill => cx.skill_step(),
            StepKind::ReviewLoop => cx.review_loop(false),
            StepKind::ImprovementLoop => cx.review_loop(true),
            StepKind::Experiment => cx.experiment(),
            StepKind::CollectResults => cx.collect_results(),
            StepKind::ExperimentAudit => cx.experiment_audit(),
            StepKind::Figures => cx.figures(),
            StepKind::Write => cx.write(),
            StepKind::ProofCheck => cx.proof_check(),
            StepKind::ClaimAudit => cx.claim_audit(),
            StepKind::Compile => cx.compile(),
            StepKind::Rebuttal => cx.rebuttal(),
        };
        let produced = std::mem::take(&mut cx.produced);
        match result {
            Ok(StepResult::Done(detail)) => Ok(StepOutcome { produced, detail, failure: None }),
            Ok(StepResult::Failed(why)) => Ok(StepOutcome { produced, detail: String::new(), failure: Some(why) }),
            Err(e) => Ok(StepOutcome { produced, detail: String::new(), failure: Some(e.to_string()) }),
        }
    }
}

fn skip_rest(state: &mut RunState, def: &WorkflowDef, from: usize, why: &str) {
    for (j, s) in def.steps.iter().enumerate().skip(from) {
        state.steps.push(StepRecord {
            index: j + 1,
            skill: s.skill.clone(),
            kind: s.kind,
            status: StepStatus::SkippedByGate,
            detail: why.to_string(),
            produced: vec![],
        });
    }
}

struct StepOutcome {
    produced: Vec<ProducedArtifact>,
    detail: String,
    failure: Option<String>,
}

enum StepResult {
    Done(String),
    Failed(String),
}

// ---------------------------------------------------------------- steps

struct StepCx<'a> {
    engine: &'a Engine,
    def: &'a WorkflowDef,
    step: &'a StepDef,
    index: usize,
    run_id: &'a str,
    reports: PathBuf,
    review_log: PathBuf,
    ledger: CostLedger,
    state: &'a mut RunState,
    produced: Vec<ProducedArtifact>,
}

const EXECUTOR_SYSTEM: &str = "You are the executor. Carry out the skill below on the inputs you are given.";

fn to_json(v: &impl Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

impl<'a> StepCx<'a> {
    fn root(&self) -> &Path {
        &self.engine.root
    }

    fn env(&self) -> ReviewEnv<'_> {
        ReviewEnv {
            project_root: &self.engine.root,
            bridges: &self.engine.bridges,
            scopes: &self.engine.config.project.scopes,
            rubric: DEFAULT_RUBRIC,
            ledger: Some(&self.ledger),
        }
    }

    fn text(&self, name: &str) -> Result<Option<String>, OrchestratorError> {
        match self.state.versions.get(name) {
            Some(v) => Ok(Some(self.engine.store.get_text(name, Some(*v))?)),
            None => Ok(None),
        }
    }

    fn required(&self, name: &str) -> Result<String, OrchestratorError> {
        self.text(name)?.ok_or_else(|| OrchestratorError::MissingInput(name.to_string()))
    }

    /// Project-relative path of the run's current version of an artifact.
    fn rel_path(&self, name: &str) -> Option<PathBuf> {
        let v = self.state.versions.get(name)?;
        let abs = self.engine.store.artifact_path(name, *v);
        abs.strip_prefix(&self.engine.root).ok().map(Path::to_path_buf)
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), OrchestratorError> {
        let rec = self.engine.store.put_artifact(name, bytes, &self.step.skill)?;
        self.state.versions.insert(name.to_string(), rec.version);
        self.produced.retain(|p| p.name != name);
        self.produced.push(ProducedArtifact { name: name.to_string(), version: rec.version, content_hash: rec.content_hash });
        Ok(())
    }

    fn output(&self, n: usize) -> Result<&'a str, OrchestratorError> {
        self.step.produces.get(n).map(String::as_str).ok_or_else(|| OrchestratorError::BadWorkflow {
            origin: self.def.name.clone(),
            reason: format!("step {} (`{}`) needs at least {} outputs", self.index, self.step.skill, n + 1),
        })
    }

    fn param_u64(&self, name: &str, default: u64) -> u64 {
        self.state.params.get(name).and_then(|p| p.value.as_u64()).unwrap_or(default)
    }

    fn param_f64(&self, name: &str, default: f64) -> f64 {
        self.state.params.get(name).and_then(|p| p.value.as_f64()).unwrap_or(default)
    }

    fn executor_messages(&self, prompt: String) -> Result<Vec<Message>, OrchestratorError> {
        let skill = self.engine.registry.resolve(&self.step.skill)?;
        Ok(vec![
            Message::system(format!("{EXECUTOR_SYSTEM}\n\n# Skill: {}\n\n{}", skill.name, skill.body)),
            Message::user(prompt),
        ])
    }

    fn ask_executor(&self, prompt: String) -> Result<String, OrchestratorError> {
        let msgs = self.executor_messages(prompt)?;
        Ok(self.engine.bridges.send_chat(&self.state.executor, &msgs, Some(&self.ledger))?.reply)
    }

    /// The standard skill prompt: params, consumed inputs, requested outputs.
    fn skill_prompt(&self, outputs: &[String], extra: &str) -> Result<String, OrchestratorError> {
        let mut p = format!("Task: skill/{}\n", self.step.skill);
        if !self.state.params.is_empty() {
            p.push_str("Params:\n");
            for (k, v) in &self.state.params {
                let _ = writeln!(p, "- {k}: {}", v.value);
            }
        }
        for name in &self.step.consumes {
            let _ = write!(p, "\n### {name}\n{}", self.required(name)?);
            if !p.ends_with('\n') {
                p.push('\n');
            }
        }
        if !extra.is_empty() {
            let _ = write!(p, "\n{extra}");
            if !p.ends_with('\n') {
                p.push('\n');
            }
        }
        let _ = writeln!(p, "\nProduce: {}", outputs.join(", "));
        if outputs.len() > 1 {
            p.push_str("Wrap each output in a fenced block tagged `artifact:NAME`.\n");
        }
        Ok(p)
    }

    fn single_output(reply: &str, name: &str) -> String {
        artifact_block(reply, name).unwrap_or_else(|| {
            let mut t = reply.trim().to_string();
            t.push('\n');
            t
        })
    }

    fn skill_step(&mut self) -> Result<StepResult, OrchestratorError> {
        let mut extra = String::new();
        if self.step.opt_bool("wiki_pack") {
            let pack = Wiki::open(self.root())?.write_query_pack()?;
            let _ = write!(extra, "### Research memory\n{}", pack.text);
            extra.push_str(
                "\nDo not re-propose banned ideas. List your ideas in a fenced block tagged `ideas` holding [{\"title\", \"status\"}].\n",
            );
        }
        let outputs = self.step.produces.clone();
        let reply = self.ask_executor(self.skill_prompt(&outputs, &extra)?)?;
        if outputs.len() == 1 {
            self.put(&outputs[0], Self::single_output(&reply, &outputs[0]).as_bytes())?;
        } else {
            for name in &outputs {
                match artifact_block(&reply, name) {
                    Some(body) => self.put(name, body.as_bytes())?,
                    None => return Ok(StepResult::Failed(format!("executor reply has no `artifact:{name}` block"))),
                }
            }
        }
        let mut detail = String::new();
        if self.step.opt_bool("wiki_ideas") {
            if let Some(block) = fenced_block(&reply, "ideas") {
                let ideas: Vec<IdeaLine> = serde_json::from_str(block.trim())
                    .map_err(|e| AssuranceError::UnparseableReply(format!("```ideas block: {e}")))?;
                let n = record_ideas(self.root(), &ideas)?;
                detail = format!("{n} ideas recorded in the wiki");
            }
        }
        Ok(StepResult::Done(detail))
    }

    fn review_loop(&mut self, full_budget: bool) -> Result<StepResult, OrchestratorError> {
        let target = self.output(0)?.to_string();
        let summary_name = self.output(1)?.to_string();
        let task = self.step.opt_str("task").unwrap_or(&self.step.skill).to_string();
        let scope: AccessScope = self
            .step
            .opt_str("scope")
            .unwrap_or("artifact_augmented")
            .parse()
            .map_err(|reason| OrchestratorError::BadWorkflow { origin: self.def.name.clone(), reason })?;
        let policy: ContextPolicy = self
            .step
            .opt_str("policy")
            .unwrap_or("fresh")
            .parse()
            .map_err(|reason| OrchestratorError::BadWorkflow { origin: self.def.name.clone(), reason })?;
        let rounds = match self.step.opt_str("rounds_param") {
            Some(p) => self.param_u64(p, u64::from(self.engine.config.review.max_rounds)),
            None => u64::from(self.engine.config.review.max_rounds),
        };
        let threshold = if full_budget {
            f64::INFINITY
        } else {
            self.param_f64("score_threshold", self.engine.config.review.score_threshold)
        };
        let spec = LoopSpec {
            task: task.clone(),
            objective: self.step.opt_str("objective").unwrap_or("Review the artifact").to_string(),
            access_scope: scope,
            context_policy: policy,
            route: self.state.reviewer.clone(),
            policy: ConvergencePolicy { score_threshold: threshold, max_rounds: u32::try_from(rounds).unwrap_or(u32::MAX) },
        };
        let mut context: Vec<String> = self.step.consumes.iter().filter(|c| **c != target).cloned().collect();
        context.extend(self.step.opt_list("context").into_iter().filter(|c| self.state.versions.contains_key(c)));

        let mut threads = std::mem::take(&mut self.state.threads);
        let review_log = self.review_log.clone();
        let engine = self.engine;
        let ledger = self.ledger.clone();
        let outcome = {
            let env = ReviewEnv {
                project_root: &engine.root,
                bridges: &engine.bridges,
                scopes: &engine.config.project.scopes,
                rubric: DEFAULT_RUBRIC,
                ledger: Some(&ledger),
            };
            let mut reviser = ArtifactReviser { cx: self, target: target.clone(), task: task.clone(), context };
            run_review_loop(&env, &mut threads, &spec, &mut reviser, Some(&review_log))
        };
        self.state.threads = threads;
        let outcome = outcome?;
        for r in &outcome.rounds {
            let mut ev = Event::now("review", self.run_id, true);
            ev.skill = Some(task.clone());
            ev.score = Some(r.score);
            self.engine.log_event(ev);
        }
        let summary = review_summary_markdown(&task, &outcome.decision, &outcome.rounds);
        self.put(&summary_name, summary.as_bytes())?;
        if !self.produced.iter().any(|p| p.name == target) {
            // Accepted in round one: the target stands as it was.
            let v = self.state.versions[&target];
            let bytes = std::fs::read(self.engine.store.artifact_path(&target, v))?;
            self.produced.push(ProducedArtifact { name: target.clone(), version: v, content_hash: sha256_hex(&bytes) });
        }
        let scores: Vec<String> = outcome.scores().iter().map(|s| format!("{s:.1}")).collect();
        let detail = format!("{} after {} round(s); scores {}", outcome.decision.as_str(), outcome.rounds.len(), scores.join(", "));
        self.state.reviews.push(ReviewRecord {
            step: self.index,
            task,
            decision: outcome.decision,
            scores: outcome.scores(),
            thread_ids: outcome.rounds.iter().map(|r| r.thread_id.clone()).collect(),
        });
        Ok(StepResult::Done(detail))
    }

    fn experiment(&mut self) -> Result<StepResult, OrchestratorError> {
        let mode = self.step.opt_str("mode").unwrap_or("full").to_string();
        let code_name = self.step.consumes.first().cloned().unwrap_or_default();
        let code = self.required(&code_name)?;
        let first = self.engine.runner.run(
            self.root(),
            &ExperimentRequest { mode: &mode, code: &code, attempt: 0, strategy: None },
        )?;
        let mut log = String::new();
        let out = if first.ok {
            first
        } else {
            let failure = Failure {
                error_class: first.error_class.clone().unwrap_or_else(|| "other".into()),
                detail: first.log.lines().rev().take(5).collect::<Vec<_>>().into_iter().rev().collect::<Vec<_>>().join("\n"),
            };
            let _ = writeln!(log, "first attempt failed: {}", failure.error_class);
            let mut rem = RunnerRemediator { runner: self.engine.runner.as_ref(), root: &self.engine.root, mode: &mode, code: &code, success: None, error: None };
            let rescue = self.engine.config.remediation.rescue_route.as_ref().map(|_| Rescue {
                bridges: &self.engine.bridges,
                ledger: Some(&self.ledger),
            });
            let outcome = auto_debug(&failure, &self.engine.config.remediation, &mut rem, rescue)?;
            if let Some(e) = rem.error.take() {
                return Err(e.into());
            }
            let attempts = match &outcome {
                DebugOutcome::Remediated { attempts } | DebugOutcome::Unresolved { attempts } | DebugOutcome::Rescued { attempts, .. } => attempts.clone(),
            };
            for a in &attempts {
                let _ = writeln!(log, "remediation {}: {} ({})", a.attempt, a.strategy, if a.succeeded { "ok" } else { "failed" });
            }
            match outcome {
                DebugOutcome::Remediated { .. } => rem.success.take().expect("remediated runs keep their output"),
                DebugOutcome::Rescued { diagnosis, attempts } => {
                    let _ = writeln!(log, "rescue diagnosis: {}", diagnosis.trim());
                    let attempt = u32::try_from(attempts.len() + 1).unwrap_or(u32::MAX);
                    let last = self.engine.runner.run(
                        self.root(),
                        &ExperimentRequest { mode: &mode, code: &code, attempt, strategy: Some("rescue") },
                    )?;
                    if !last.ok {
                        return Ok(StepResult::Failed(format!("experiment ({mode}) failed after rescue")));
                    }
                    last
                }
                DebugOutcome::Unresolved { .. } => {
                    return Ok(StepResult::Failed(format!(
                        "experiment ({mode}) failed with {} after {} remediation attempts",
                        failure.error_class,
                        attempts.len()
                    )))
                }
            }
        };
        let mut text = out.log.clone();
        if !text.ends_with('\n') {
            text.push('\n');
        }
        if !log.is_empty() {
            text.push_str("\n## Remediation\n");
            text.push_str(&log);
        }
        let name = self.output(0)?.to_string();
        self.put(&name, text.as_bytes())?;
        Ok(StepResult::Done(format!("{mode} run ok")))
    }

    fn collect_results(&mut self) -> Result<StepResult, OrchestratorError> {
        let source = self.step.consumes.first().cloned().unwrap_or_default();
        let metrics = parse_evidence_text(&self.required(&source)?);
        if metrics.is_empty() {
            return Ok(StepResult::Failed(format!("no metrics found in {source}")));
        }
        let mut obj = serde_json::Map::new();
        for (k, v) in &metrics {
            let value = serde_json::from_str::<serde_json::Number>(v).map(Value::Number).unwrap_or_else(|_| Value::String(v.clone()));
            obj.insert(k.clone(), value);
        }
        let name = self.output(0)?.to_string();
        self.put(&name, &to_json(&Value::Object(obj)))?;
        Ok(StepResult::Done(format!("{} metrics", metrics.len())))
    }

    fn experiment_audit(&mut self) -> Result<StepResult, OrchestratorError> {
        let paths: Vec<PathBuf> = self.step.consumes.iter().filter_map(|c| self.rel_path(c)).collect();
        let report = run_experiment_audit(&self.env(), &self.state.reviewer, AccessScope::RepositoryLevel, &paths)?;
        report.write(&self.reports)?;
        let name = self.output(0)?.to_string();
        self.put(&name, &to_json(&report))?;
        Ok(StepResult::Done(format!("integrity {}", report.integrity_status.as_str())))
    }

    fn figures(&mut self) -> Result<StepResult, OrchestratorError> {
        let extra = "Describe each figure as a declarative diagram spec. Reply with a fenced block tagged `figures` \
                     holding [{\"name\": \"...\", \"spec\": {...}}].";
        let reply = self.ask_executor(self.skill_prompt(&[self.output(0)?.to_string()], extra)?)?;
        let figs: Vec<FigureLine> = match fenced_block(&reply, "figures") {
            Some(b) => match serde_json::from_str(b.trim()) {
                Ok(f) => f,
                Err(e) => return Ok(StepResult::Failed(format!("```figures block: {e}"))),
            },
            None => Vec::new(),
        };
        let mut manifest = format!(
            "# Figures\n\nRenderer version {}.\n\n| Name | File | SHA-256 |\n|---|---|---|\n",
            aris_figure::RENDERER_VERSION
        );
        let mut seen = BTreeSet::new();
        for f in &figs {
            if f.name.is_empty()
                || !f.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
                || !seen.insert(f.name.clone())
            {
                return Ok(StepResult::Failed(format!("bad or duplicate figure name `{}`", f.name)));
            }
            let spec = match aris_figure::validate_spec(&f.spec) {
                Ok(s) => s,
                Err(errs) => {
                    let codes: Vec<String> = errs.iter().map(|e| e.to_string()).collect();
                    return Ok(StepResult::Failed(format!("figure `{}` is invalid: {}", f.name, codes.join("; "))));
                }
            };
            let svg = aris_figure::render(&spec);
            let rel = format!("figures/{}.svg", f.name);
            atomic_write(&self.root().join(&rel), svg.as_bytes())?;
            let _ = writeln!(manifest, "| {} | {rel} | {} |", f.name, sha256_hex(svg.as_bytes()));
        }
        if figs.is_empty() {
            manifest.push_str("\nNo figures were requested.\n");
        }
        let name = self.output(0)?.to_string();
        self.put(&name, manifest.as_bytes())?;
        Ok(StepResult::Done(format!("{} figure(s)", figs.len())))
    }

    fn evidence(&self) -> Result<Option<Evidence>, OrchestratorError> {
        let paths: Vec<PathBuf> = ["RESULTS"].iter().filter_map(|n| self.rel_path(n)).collect();
        if paths.is_empty() {
            return Ok(None);
        }
        Ok(Some(Evidence::load(self.root(), &paths)?))
    }

    fn write(&mut self) -> Result<StepResult, OrchestratorError> {
        let draft_name = self.output(0)?.to_string();
        let report_name = self.output(1)?.to_string();
        let reply = self.ask_executor(self.skill_prompt(std::slice::from_ref(&draft_name), "")?)?;
        let draft = Self::single_output(&reply, &draft_name);
        let evidence = self.evidence()?;
        let (edited, report) = run_editing_passes(
            &self.engine.bridges,
            &self.state.reviewer,
            Some(&self.ledger),
            &draft,
            evidence.as_ref(),
        )?;
        report.write(&self.reports)?;
        self.put(&draft_name, edited.as_bytes())?;
        self.put(&report_name, &to_json(&report))?;
        let issues: usize = report.passes.iter().map(|p| p.issues.len()).sum();
        Ok(StepResult::Done(format!("draft written; {issues} editing issue(s)")))
    }

    fn manuscript(&self) -> Result<PathBuf, OrchestratorError> {
        let name = self.step.consumes.first().cloned().unwrap_or_default();
        self.rel_path(&name).ok_or(OrchestratorError::MissingInput(name))
    }

    fn proof_check(&mut self) -> Result<StepResult, OrchestratorError> {
        let manuscript = self.manuscript()?;
        let taxonomy = ProofTaxonomy::load(self.root())?;
        let ledger = build_proof_ledger(&self.env(), &self.state.reviewer, &manuscript, &taxonomy)?;
        ledger.write(&self.reports, &taxonomy)?;
        let name = self.output(0)?.to_string();
        self.put(&name, &to_json(&ledger))?;
        Ok(StepResult::Done(format!("{} obligation(s)", ledger.obligations.len())))
    }

    fn claim_audit(&mut self) -> Result<StepResult, OrchestratorError> {
        let manuscript = self.manuscript()?;
        let claims_name = self.step.consumes.get(1).cloned().unwrap_or_else(|| "CLAIMS".into());
        let claims_text = self.required(&claims_name)?;
        let claims: Vec<CandidateClaim> = match serde_json::from_str(claims_text.trim())
            .or_else(|_| serde_json::from_str(fenced_block(&claims_text, "json").unwrap_or("").trim()))
        {
            Ok(c) => c,
            Err(e) => return Ok(StepResult::Failed(format!("{claims_name} is not a JSON claim list: {e}"))),
        };
        let integrity: Option<IntegrityReport> = match self.text("EXPERIMENT_AUDIT")? {
            Some(t) => Some(
                serde_json::from_str(&t).map_err(|e| AssuranceError::UnparseableReply(format!("EXPERIMENT_AUDIT: {e}")))?,
            ),
            None => None,
        };
        let ledger = if claims.is_empty() {
            ClaimLedger::default()
        } else {
            let mut wiki = Wiki::open(self.root())?;
            map_result_to_claim(
                &self.env(),
                &self.state.reviewer,
                &claims,
                Some(&self.engine.store),
                integrity.as_ref(),
                Some(&mut wiki),
            )?
        };
        ledger.write(&self.reports)?;
        let raw: Vec<PathBuf> = ["RESULTS"].iter().filter_map(|n| self.rel_path(n)).collect();
        let audit = audit_paper_claims(&self.env(), &self.state.reviewer, &manuscript, Some(&ledger), &raw)?;
        audit.write(&self.reports)?;
        let ledger_name = self.output(0)?.to_string();
        let audit_name = self.output(1)?.to_string();
        self.put(&ledger_name, &to_json(&ledger))?;
        self.put(&audit_name, &to_json(&audit))?;
        Ok(StepResult::Done(format!("{} claim(s) in ledger, {} numeric claim(s) audited", ledger.claims.len(), audit.entries.len())))
    }

    fn compile(&mut self) -> Result<StepResult, OrchestratorError> {
        let src = self.required(&self.step.consumes.first().cloned().unwrap_or_default())?;
        let passes = usize::try_from(self.param_u64("compile_passes", 3)).unwrap_or(3);
        let r = compile_stub(&src, passes);
        let name = self.output(0)?.to_string();
        self.put(&name, r.output.as_bytes())?;
        Ok(StepResult::Done(format!("{} pass(es), {} repair(s), {} warning(s)", r.passes, r.repairs.len(), r.warnings.len())))
    }

    fn rebuttal(&mut self) -> Result<StepResult, OrchestratorError> {
        let paper = self.step.consumes.first().cloned().unwrap_or_default();
        let reviews_name = self.step.consumes.get(1).cloned().unwrap_or_else(|| "REVIEWS".into());
        let reviews = self.required(&reviews_name)?;
        let paper_path = self.rel_path(&paper).ok_or_else(|| OrchestratorError::MissingInput(paper.clone()))?;
        let known: BTreeSet<String> = self.state.versions.keys().cloned().collect();
        let outcome = {
            let env = self.env();
            run_rebuttal(&RebuttalInputs {
                env: &env,
                executor: &self.state.executor,
                reviewer: &self.state.reviewer,
                ledger: Some(&self.ledger),
                reviews: &reviews,
                paper_path,
                char_limit: usize::try_from(self.param_u64("char_limit", 5000)).unwrap_or(5000),
                stress_questions: usize::try_from(self.param_u64("stress_questions", 3)).unwrap_or(3),
                known_evidence: known,
            })?
        };
        let md = outcome.to_markdown();
        crate::assurance::write_report(&self.reports, "REBUTTAL_REPORT.md", &md, "rebuttal_report.json", &outcome)?;
        let rebuttal_name = self.output(0)?.to_string();
        let report_name = self.output(1)?.to_string();
        if let Some(text) = &outcome.rebuttal {
            self.put(&rebuttal_name, text.as_bytes())?;
        }
        self.put(&report_name, &to_json(&outcome))?;
        match &outcome.stopped_by {
            Some(by) => Ok(StepResult::Failed(format!("rebuttal stopped at {by}"))),
            None => Ok(StepResult::Done(format!("{} concerns answered", outcome.state.concerns.len()))),
        }
    }
}

#[derive(Debug, Deserialize)]
struct IdeaLine {
    title: String,
    #[serde(default)]
    status: Option<String>,
}

#[derive(Debug, Deserialize)]
struct FigureLine {
    name: String,
    spec: Value,
}

/// Add or update idea pages by title.
fn record_ideas(root: &Path, ideas: &[IdeaLine]) -> Result<usize, OrchestratorError> {
    let mut wiki = Wiki::open(root)?;
    for idea in ideas {
        let existing = wiki
            .nodes()
            .find(|n| n.entity_type == EntityType::Idea && !n.tombstoned && n.title == idea.title)
            .map(|n| (n.node_id.clone(), n.status.clone()));
        match (existing, &idea.status) {
            (Some((id, old)), Some(s)) if &old != s => {
                wiki.set_status(&id, s)?;
            }
            (Some(_), _) => {}
            (None, s) => {
                let mut node = NewNode::new(EntityType::Idea, idea.title.clone());
                if let Some(s) = s {
                    node = node.status(s.clone());
                }
                wiki.add_node(node)?;
            }
        }
    }
    wiki.write_query_pack()?;
    Ok(ideas.len())
}

fn review_summary_markdown(task: &str, decision: &Decision, rounds: &[crate::review::ReviewResult]) -> String {
    let mut s = format!(
        "# Review summary: {task}\n\nDecision: {}\nRounds: {}\n\n| Round | Score | Items | Critical |\n|---|---|---|---|\n",
        decision.as_str(),
        rounds.len()
    );
    for r in rounds {
        let crit = r.action_items.iter().filter(|i| i.severity == Severity::Critical).count();
        let _ = writeln!(s, "| {} | {:.1} | {} | {crit} |", r.round, r.score, r.action_items.len());
    }
    let open: Vec<&ActionItem> = rounds.iter().flat_map(|r| &r.action_items).filter(|i| !i.resolved).collect();
    if !open.is_empty() {
        s.push_str("\n## Open items\n\n");
        for i in open {
            let _ = writeln!(s, "- {} ({:?}): {}", i.id, i.severity, i.description);
        }
    }
    s
}

/// Revises one artifact through the executor between review rounds.
struct ArtifactReviser<'c, 'a> {
    cx: &'c mut StepCx<'a>,
    target: String,
    task: String,
    context: Vec<String>,
}

impl Reviser for ArtifactReviser<'_, '_> {
    fn artifact_paths(&mut self) -> Result<Vec<PathBuf>, ReviewError> {
        let mut out = Vec::new();
        for name in std::iter::once(&self.target).chain(&self.context) {
            match self.cx.rel_path(name) {
                Some(p) => out.push(p),
                None => return Err(ReviewError::MissingArtifact(name.clone())),
            }
        }
        Ok(out)
    }

    fn revise(&mut self, round: u32, open: &[ActionItem]) -> Result<Vec<String>, ReviewError> {
        let current = self
            .cx
            .text(&self.target)
            .map_err(|e| ReviewError::MissingArtifact(format!("{}: {e}", self.target)))?
            .unwrap_or_default();
        let mut p = format!("Task: revise/{}/{}\nRound: {round}\nOpen items:\n", self.task, self.target);
        for i in open {
            let _ = writeln!(p, "- {} ({:?}): {}", i.id, i.severity, i.description);
        }
        let _ = write!(
            p,
            "\n### {t}\n{current}\nRevise {t} to address the open items. Wrap the full revised text in a fenced block \
             tagged `artifact:{t}` and list the ids you addressed in a fenced block tagged `resolved` (a JSON list).\n",
            t = self.target
        );
        let msgs = self
            .cx
            .executor_messages(p)
            .map_err(|e| ReviewError::MissingArtifact(e.to_string()))?;
        let reply = self.cx.engine.bridges.send_chat(&self.cx.state.executor, &msgs, Some(&self.cx.ledger))?.reply;
        if has_artifact_blocks(&reply) {
            if let Some(body) = artifact_block(&reply, &self.target) {
                self.cx
                    .put(&self.target, body.as_bytes())
                    .map_err(|e| ReviewError::MissingArtifact(e.to_string()))?;
            }
        }
        let claimed = match fenced_block(&reply, "resolved") {
            Some(b) => serde_json::from_str::<Vec<String>>(b.trim()).unwrap_or_default(),
            None => open.iter().map(|i| i.id.clone()).collect(),
        };
        Ok(claimed)
    }
}

struct RunnerRemediator<'r> {
    runner: &'r dyn CommandRunner,
    root: &'r Path,
    mode: &'r str,
    code: &'r str,
    success: Option<ExperimentOutput>,
    error: Option<std::io::Error>,
}

impl Remediator for RunnerRemediator<'_> {
    fn apply(&mut self, _: &Failure, strategy: &str, attempt: u32) -> bool {
        let req = ExperimentRequest { mode: self.mode, code: self.code, attempt, strategy: Some(strategy) };
        match self.runner.run(self.root, &req) {
            Ok(out) if out.ok => {
                self.success = Some(out);
                true
            }
            Ok(_) => false,
            Err(e) => {
                self.error = Some(e);
                false
            }
        }
    }
}
