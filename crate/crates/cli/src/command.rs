//! Slash-command parsing.

use aris_core::orchestrator::{parse_directives, Directive, OrchestratorError};
use aris_core::skills::SkillRegistry;
use thiserror::Error;

pub const BUILTINS: [&str; 13] = [
    "help", "quit", "exit", "status", "skills", "workflows", "resume", "cost", "meta", "render", "validate", "wizard",
    "run",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VerbKind {
    Builtin,
    Workflow,
    Skill,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Command {
    pub verb: String,
    pub kind: VerbKind,
    pub args: Vec<String>,
    pub directives: Vec<Directive>,
    pub unknown_directives: Vec<(String, String)>,
    /// The line as typed.
    pub raw: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommandError {
    #[error("empty command")]
    Empty,
    #[error("unknown command `/{0}`")]
    UnknownVerb(String),
    #[error("bad value `{value}` for `{key}`")]
    BadDirective { key: String, value: String },
}

/// Split `/verb arg ... key: value` into a command. Workflows are matched
/// before skills of the same name.
pub fn parse_command(line: &str, registry: &SkillRegistry, workflows: &[String]) -> Result<Command, CommandError> {
    let trimmed = line.trim();
    let body = trimmed.strip_prefix('/').unwrap_or(trimmed);
    let (verb, rest) = match body.split_once(char::is_whitespace) {
        Some((v, r)) => (v, r),
        None => (body, ""),
    };
    if verb.is_empty() {
        return Err(CommandError::Empty);
    }
    let kind = if BUILTINS.contains(&verb) {
        VerbKind::Builtin
    } else if workflows.iter().any(|w| w == verb) {
        VerbKind::Workflow
    } else if registry.contains(verb) {
        VerbKind::Skill
    } else {
        return Err(CommandError::UnknownVerb(verb.to_string()));
    };
    let parsed = parse_directives(rest).map_err(|e| match e {
        OrchestratorError::InvalidValue { key, value } => CommandError::BadDirective { key, value },
        other => CommandError::BadDirective { key: String::new(), value: other.to_string() },
    })?;
    Ok(Command {
        verb: verb.to_string(),
        kind,
        args: parsed.rest,
        directives: parsed.directives,
        unknown_directives: parsed.unknown,
        raw: line.to_string(),
    })
}
