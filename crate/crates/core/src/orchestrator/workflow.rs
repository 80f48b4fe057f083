//! Workflow definitions: YAML data files, bundled or overridden per project
//! under `.aris/workflows/<name>.yaml`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::effort::Param;
use super::OrchestratorError;
use crate::artifacts::{validate_contracts, ContractStep};
use crate::skills::SkillRegistry;

pub const BUNDLED_WORKFLOWS: [(&str, &str); 6] = [
    ("idea_discovery", include_str!("../../assets/workflows/idea_discovery.yaml")),
    ("experiment_bridge", include_str!("../../assets/workflows/experiment_bridge.yaml")),
    ("auto_review_loop", include_str!("../../assets/workflows/auto_review_loop.yaml")),
    ("paper_writing", include_str!("../../assets/workflows/paper_writing.yaml")),
    ("rebuttal", include_str!("../../assets/workflows/rebuttal.yaml")),
    ("research_pipeline", include_str!("../../assets/workflows/research_pipeline.yaml")),
];

const MAX_INCLUDE_DEPTH: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    /// Prompt the executor with the skill body and inputs.
    #[default]
    Skill,
    ReviewLoop,
    /// A review loop that always spends its full round budget.
    ImprovementLoop,
    Experiment,
    CollectResults,
    ExperimentAudit,
    Figures,
    Write,
    ProofCheck,
    ClaimAudit,
    Compile,
    Rebuttal,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Skill => "skill",
            Self::ReviewLoop => "review_loop",
            Self::ImprovementLoop => "improvement_loop",
            Self::Experiment => "experiment",
            Self::CollectResults => "collect_results",
            Self::ExperimentAudit => "experiment_audit",
            Self::Figures => "figures",
            Self::Write => "write",
            Self::ProofCheck => "proof_check",
            Self::ClaimAudit => "claim_audit",
            Self::Compile => "compile",
            Self::Rebuttal => "rebuttal",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepDef {
    pub skill: String,
    #[serde(default)]
    pub kind: StepKind,
    #[serde(default)]
    pub consumes: Vec<String>,
    #[serde(default)]
    pub produces: Vec<String>,
    /// Named human approval gate in front of this step.
    #[serde(default)]
    pub gate: Option<String>,
    /// Name of a boolean directive; the step is skipped when it is off.
    #[serde(default)]
    pub when: Option<String>,
    #[serde(default, rename = "with")]
    pub options: BTreeMap<String, Value>,
}

impl StepDef {
    pub fn opt_str(&self, key: &str) -> Option<&str> {
        self.options.get(key).and_then(Value::as_str)
    }

    pub fn opt_bool(&self, key: &str) -> bool {
        self.options.get(key).and_then(Value::as_bool).unwrap_or(false)
    }

    pub fn opt_list(&self, key: &str) -> Vec<String> {
        self.options
            .get(key)
            .and_then(Value::as_array)
            .map(|a| a.iter().filter_map(|v| v.as_str().map(String::from)).collect())
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum RawStep {
    Include {
        include: String,
        #[serde(default)]
        when: Option<String>,
    },
    Step(StepDef),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkflow {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    inputs: Vec<String>,
    #[serde(default)]
    optional_inputs: Vec<String>,
    #[serde(default)]
    params: BTreeMap<String, Param>,
    steps: Vec<RawStep>,
}

/// A workflow with every include expanded.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkflowDef {
    pub name: String,
    pub description: String,
    pub inputs: Vec<String>,
    pub optional_inputs: Vec<String>,
    pub params: BTreeMap<String, Param>,
    pub steps: Vec<StepDef>,
}

fn source(project_root: Option<&Path>, name: &str) -> Result<(String, String), OrchestratorError> {
    if let Some(root) = project_root {
        let p = workflow_path(root, name);
        if p.is_file() {
            return Ok((std::fs::read_to_string(&p)?, p.display().to_string()));
        }
    }
    BUNDLED_WORKFLOWS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| (text.to_string(), format!("bundled:{n}")))
        .ok_or_else(|| OrchestratorError::UnknownWorkflow(name.to_string()))
}

pub fn workflow_path(project_root: &Path, name: &str) -> PathBuf {
    project_root.join(".aris/workflows").join(format!("{name}.yaml"))
}

/// Names of every workflow available in a project, bundled ones first.
pub fn workflow_names(project_root: Option<&Path>) -> Vec<String> {
    let mut out: Vec<String> = BUNDLED_WORKFLOWS.iter().map(|(n, _)| n.to_string()).collect();
    if let Some(root) = project_root {
        if let Ok(rd) = std::fs::read_dir(root.join(".aris/workflows")) {
            let mut extra: Vec<String> = rd
                .flatten()
                .filter_map(|e| {
                    let p = e.path();
                    (p.extension().is_some_and(|x| x == "yaml"))
                        .then(|| p.file_stem().map(|s| s.to_string_lossy().into_owned()))
                        .flatten()
                })
                .filter(|n| !out.contains(n))
                .collect();
            extra.sort();
            out.extend(extra);
        }
    }
    out
}

fn parse(text: &str, origin: &str) -> Result<RawWorkflow, OrchestratorError> {
    serde_yaml::from_str(text).map_err(|e| OrchestratorError::BadWorkflow {
        origin: origin.to_string(),
        reason: e.to_string(),
    })
}

fn expand(project_root: Option<&Path>, name: &str, depth: usize, out: &mut WorkflowDef) -> Result<RawWorkflow, OrchestratorError> {
    if depth > MAX_INCLUDE_DEPTH {
        return Err(OrchestratorError::BadWorkflow {
            origin: name.to_string(),
            reason: "includes nest too deeply".into(),
        });
    }
    let (text, origin) = source(project_root, name)?;
    let raw = parse(&text, &origin)?;
    for (k, p) in &raw.params {
        out.params.entry(k.clone()).or_insert_with(|| p.clone());
    }
    for s in &raw.optional_inputs {
        if !out.optional_inputs.contains(s) {
            out.optional_inputs.push(s.clone());
        }
    }
    for step in &raw.steps {
        match step {
            RawStep::Step(s) => out.steps.push(s.clone()),
            RawStep::Include { include, when } => {
                let first = out.steps.len();
                expand(project_root, include, depth + 1, out)?;
                if let Some(w) = when {
                    for s in &mut out.steps[first..] {
                        s.when.get_or_insert_with(|| w.clone());
                    }
                }
            }
        }
    }
    Ok(raw)
}

/// Load a workflow by name, preferring the project's own definition.
pub fn load_workflow(project_root: Option<&Path>, name: &str) -> Result<WorkflowDef, OrchestratorError> {
    let mut def = WorkflowDef {
        name: name.to_string(),
        description: String::new(),
        inputs: Vec::new(),
        optional_inputs: Vec::new(),
        params: BTreeMap::new(),
        steps: Vec::new(),
    };
    // A parent's params are recorded before its includes expand, so they win.
    let raw = expand(project_root, name, 0, &mut def)?;
    if raw.name != name {
        return Err(OrchestratorError::BadWorkflow {
            origin: name.to_string(),
            reason: format!("file declares name `{}`", raw.name),
        });
    }
    def.description = raw.description;
    def.inputs = raw.inputs;
    def.optional_inputs.retain(|x| !def.inputs.contains(x));
    Ok(def)
}

/// Artifact holding the free-text request of a skill with no workflow step.
pub const REQUEST_ARTIFACT: &str = "REQUEST";

/// A workflow by name, or a one-step workflow for a bare skill name.
///
/// A skill whose name matches a workflow (`auto-review-loop`) runs that
/// workflow. A skill used by a bundled workflow step runs as that step
/// alone. Any other skill becomes an executor step reading `REQUEST` and
/// producing an artifact named after the skill.
pub fn resolve_workflow(
    project_root: Option<&Path>,
    registry: &SkillRegistry,
    name: &str,
) -> Result<WorkflowDef, OrchestratorError> {
    match load_workflow(project_root, name) {
        Err(OrchestratorError::UnknownWorkflow(_)) => {}
        other => return other,
    }
    let underscored = name.replace('-', "_");
    if underscored != name {
        match load_workflow(project_root, &underscored) {
            Err(OrchestratorError::UnknownWorkflow(_)) => {}
            other => return other,
        }
    }
    if !registry.contains(name) {
        return Err(OrchestratorError::UnknownWorkflow(name.to_string()));
    }
    for wf in workflow_names(project_root) {
        let def = load_workflow(project_root, &wf)?;
        if let Some(step) = def.steps.iter().find(|s| s.skill == name) {
            let step = StepDef { gate: None, when: None, ..step.clone() };
            let mut inputs: Vec<String> = Vec::new();
            for c in &step.consumes {
                if !inputs.contains(c) {
                    inputs.push(c.clone());
                }
            }
            return Ok(WorkflowDef {
                name: name.to_string(),
                description: format!("`{name}` as run inside `{wf}`"),
                inputs,
                optional_inputs: def.optional_inputs.clone(),
                params: def.params.clone(),
                steps: vec![step],
            });
        }
    }
    Ok(WorkflowDef {
        name: name.to_string(),
        description: format!("`{name}` on a free-text request"),
        inputs: vec![REQUEST_ARTIFACT.to_string()],
        optional_inputs: Vec::new(),
        params: BTreeMap::new(),
        steps: vec![StepDef {
            skill: name.to_string(),
            kind: StepKind::Skill,
            consumes: vec![REQUEST_ARTIFACT.to_string()],
            produces: vec![name.replace('-', "_").to_uppercase()],
            gate: None,
            when: None,
            options: BTreeMap::new(),
        }],
    })
}

impl WorkflowDef {
    pub fn contract_steps(&self) -> Vec<ContractStep> {
        self.steps
            .iter()
            .map(|s| ContractStep {
                skill: s.skill.clone(),
                consumes: s.consumes.clone(),
                produces: s.produces.clone(),
            })
            .collect()
    }

    /// Every consumed artifact must be an input or produced earlier, and
    /// every step skill must resolve in the registry.
    pub fn validate(&self, registry: &SkillRegistry) -> Result<(), OrchestratorError> {
        for s in &self.steps {
            if !registry.contains(&s.skill) {
                return Err(OrchestratorError::UnknownSkill(s.skill.clone()));
            }
            if s.produces.is_empty() {
                return Err(OrchestratorError::BadWorkflow {
                    origin: self.name.clone(),
                    reason: format!("step `{}` produces nothing", s.skill),
                });
            }
        }
        let mut available = self.inputs.clone();
        available.extend(self.optional_inputs.iter().cloned());
        let violations = validate_contracts(&self.contract_steps(), &available);
        if violations.is_empty() {
            Ok(())
        } else {
            Err(OrchestratorError::ContractViolation(violations))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_bundled_workflow_loads_and_validates() {
        let reg = SkillRegistry::bundled();
        for (name, _) in BUNDLED_WORKFLOWS {
            let def = load_workflow(None, name).unwrap();
            def.validate(&reg).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn paper_writing_has_seven_steps_in_order() {
        let def = load_workflow(None, "paper_writing").unwrap();
        let skills: Vec<&str> = def.steps.iter().map(|s| s.skill.as_str()).collect();
        assert_eq!(
            skills,
            [
                "paper-plan",
                "paper-figure",
                "paper-write",
                "proof-checker",
                "paper-claim-audit",
                "paper-compile",
                "auto-paper-improvement-loop"
            ]
        );
    }

    #[test]
    fn pipeline_guards_paper_writing_on_auto_write() {
        let def = load_workflow(None, "research_pipeline").unwrap();
        let w3 = load_workflow(None, "paper_writing").unwrap();
        let tail = &def.steps[def.steps.len() - w3.steps.len()..];
        assert!(tail.iter().all(|s| s.when.as_deref() == Some("auto_write")));
        assert!(def.steps[..def.steps.len() - w3.steps.len()].iter().all(|s| s.when.is_none()));
        assert!(def.params.contains_key("max_rounds") && def.params.contains_key("papers_surveyed"));
    }

    #[test]
    fn project_files_override_bundled_ones() {
        let dir = tempfile::tempdir().unwrap();
        let p = workflow_path(dir.path(), "rebuttal");
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(&p, "name: rebuttal\ninputs: [REVIEWS]\nsteps:\n  - skill: rebuttal\n    consumes: [REVIEWS]\n    produces: [REBUTTAL]\n").unwrap();
        let def = load_workflow(Some(dir.path()), "rebuttal").unwrap();
        assert_eq!(def.inputs, ["REVIEWS"]);
        assert!(matches!(load_workflow(None, "nope"), Err(OrchestratorError::UnknownWorkflow(_))));
    }

    #[test]
    fn bare_skills_become_workflows() {
        let reg = SkillRegistry::bundled();
        assert_eq!(resolve_workflow(None, &reg, "auto-review-loop").unwrap().name, "auto_review_loop");
        let audit = resolve_workflow(None, &reg, "paper-claim-audit").unwrap();
        assert_eq!(audit.steps.len(), 1);
        assert_eq!(audit.steps[0].kind, StepKind::ClaimAudit);
        assert_eq!(audit.inputs[0], "DRAFT");
        let lit = resolve_workflow(None, &reg, "arxiv").unwrap();
        assert_eq!(lit.inputs, [REQUEST_ARTIFACT]);
        assert_eq!(lit.steps[0].produces, ["ARXIV"]);
        lit.validate(&reg).unwrap();
        audit.validate(&reg).unwrap();
        assert!(matches!(resolve_workflow(None, &reg, "frobnicate"), Err(OrchestratorError::UnknownWorkflow(_))));
    }

    #[test]
    fn broken_contracts_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = workflow_path(dir.path(), "custom");
        std::fs::create_dir_all(p.parent().unwrap()).unwrap();
        std::fs::write(&p, "name: custom\ninputs: [A]\nsteps:\n  - skill: paper-compile\n    consumes: [DRAFT]\n    produces: [COMPILED]\n").unwrap();
        let def = load_workflow(Some(dir.path()), "custom").unwrap();
        assert!(matches!(def.validate(&SkillRegistry::bundled()), Err(OrchestratorError::ContractViolation(_))));
        assert!(workflow_names(Some(dir.path())).contains(&"custom".to_string()));
    }
}
