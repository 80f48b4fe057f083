//! Workflow engine: directives, effort presets, YAML workflow definitions
//! and the step runner with checkpoints and approval gates.

pub mod compile;
pub mod directives;
pub mod effort;
pub mod rebuttal;
pub mod run;
pub mod runner;
pub mod workflow;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::artifacts::{ArtifactError, ContractViolation};
use crate::assurance::AssuranceError;
use crate::bridges::BridgeError;
use crate::review::ReviewError;
use crate::skills::SkillError;
use crate::wiki::WikiError;

pub use directives::{parse_directives, Directive, ParsedDirectives, RunDirectives};
pub use effort::{apply_effort, EffortPreset, Param, ParamTag, Preset, REVIEWER_REASONING};
pub use rebuttal::{rebuttal_gates, GateDecision, GateOutcome, RebuttalState};
pub use run::{
    run_dir, Approval, ApprovalRecord, ApprovalRequest, Approver, ArtifactRef, Engine, GateKind, PendingApprover, PreApproved,
    ProducedArtifact, ReviewRecord, RunRequest, RunStatus, RunSummary, StepRecord, StepStatus,
};
pub use runner::{CommandRunner, ExperimentOutput, ExperimentRequest, ShellRunner, StubRunner};
pub use workflow::{load_workflow, resolve_workflow, workflow_names, REQUEST_ARTIFACT, StepDef, StepKind, WorkflowDef};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("invalid value `{value}` for directive `{key}`")]
    InvalidValue { key: String, value: String },
    #[error("unknown workflow `{0}`")]
    UnknownWorkflow(String),
    #[error("workflow step names unknown skill `{0}`")]
    UnknownSkill(String),
    #[error("bad workflow {origin}: {reason}")]
    BadWorkflow { origin: String, reason: String },
    #[error("artifact contract violated: {}", describe(.0))]
    ContractViolation(Vec<ContractViolation>),
    #[error("missing workflow input `{0}`")]
    MissingInput(String),
    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error(transparent)]
    Bridge(#[from] BridgeError),
    #[error(transparent)]
    Review(#[from] ReviewError),
    #[error(transparent)]
    Assurance(#[from] AssuranceError),
    #[error(transparent)]
    Wiki(#[from] WikiError),
    #[error(transparent)]
    Skill(#[from] SkillError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

fn describe(v: &[ContractViolation]) -> String {
    v.iter()
        .map(|c| format!("step {} ({}) consumes `{}` before anything produces it", c.step_index + 1, c.skill, c.artifact))
        .collect::<Vec<_>>()
        .join("; ")
}

fn is_artifact_open(line: &str) -> Option<(&str, &str)> {
    let t = line.trim();
    for fence in ["```", "~~~"] {
        if let Some(rest) = t.strip_prefix(fence) {
            if let Some(name) = rest.strip_prefix("artifact:") {
                return Some((fence, name.trim()));
            }
        }
    }
    None
}

/// Scripted replies for a mock-only project, keyed by their path under the project root.
pub const BUNDLED_MOCK_SCRIPTS: [(&str, &str); 3] = [
    (".aris/mock/executor.json", include_str!("../../assets/mock/executor.json")),
    (".aris/mock/reviewer.json", include_str!("../../assets/mock/reviewer.json")),
    (".aris/mock/experiment.json", runner::BUNDLED_EXPERIMENT_SCRIPT),
];

/// Write the bundled mock scripts into a project. Existing files are kept
/// unless `overwrite` is set. Returns the paths written.
pub fn install_mock_scripts(project_root: &Path, overwrite: bool) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for (rel, body) in BUNDLED_MOCK_SCRIPTS {
        let path = project_root.join(rel);
        if path.exists() && !overwrite {
            continue;
        }
        crate::fsutil::atomic_write(&path, body.as_bytes())?;
        written.push(path);
    }
    Ok(written)
}

/// Body of the `artifact:NAME` block in an executor reply. The block ends at
/// the last matching fence before the next artifact block, so bodies may
/// hold fenced code of their own.
pub fn artifact_block(reply: &str, name: &str) -> Option<String> {
    let lines: Vec<&str> = reply.lines().collect();
    let start = lines.iter().position(|l| is_artifact_open(l).is_some_and(|(_, n)| n == name))?;
    let (fence, _) = is_artifact_open(lines[start]).expect("found above");
    let end_search = lines[start + 1..]
        .iter()
        .position(|l| is_artifact_open(l).is_some())
        .map_or(lines.len(), |i| start + 1 + i);
    let close = (start + 1..end_search).rev().find(|&i| lines[i].trim() == fence)?;
    let mut body = lines[start + 1..close].join("\n");
    body.push('\n');
    Some(body)
}

pub fn has_artifact_blocks(reply: &str) -> bool {
    reply.lines().any(|l| is_artifact_open(l).is_some())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn artifact_blocks_may_nest_code_fences() {
        let reply = "intro\n```artifact:CODE\n# code\n```python\nx = 1\n```\n```\n```artifact:PLAN\nstep one\n```\ntrailer\n";
        assert_eq!(artifact_block(reply, "CODE").unwrap(), "# code\n```python\nx = 1\n```\n");
        assert_eq!(artifact_block(reply, "PLAN").unwrap(), "step one\n");
        assert!(artifact_block(reply, "DRAFT").is_none());
        assert!(has_artifact_blocks(reply) && !has_artifact_blocks("plain"));
    }

    #[test]
    fn unterminated_block_is_absent() {
        assert!(artifact_block("```artifact:A\nno close", "A").is_none());
    }
}
