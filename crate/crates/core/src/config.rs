//! `.aris/config.toml`: bridges, routes, prices, scopes and loop policies.
//! Credentials never live here, only the names of the env vars holding them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BridgeKind {
    #[default]
    Chat,
    Mock,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReasoningMode {
    /// Sent as a `reasoning_effort` request field.
    #[default]
    Field,
    /// Sent as a leading system message.
    Preamble,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct BridgeConfig {
    pub kind: BridgeKind,
    pub endpoint: String,
    pub model: String,
    pub family: String,
    pub reasoning_effort: String,
    pub reasoning_mode: ReasoningMode,
    /// Name of the environment variable holding the API key.
    pub auth_env: String,
    /// Mock bridges only: path of the reply script, relative to the project.
    pub script: Option<PathBuf>,
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Price {
    /// Cost per prompt token.
    pub prompt: Decimal,
    /// Cost per completion token.
    pub completion: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReviewConfig {
    pub executor: String,
    pub default_route: String,
    pub allow_fallback: bool,
    pub fallback_bridge: String,
    pub score_threshold: f64,
    pub max_rounds: u32,
}

impl Default for ReviewConfig {
    fn default() -> Self {
        Self {
            executor: "claude".into(),
            default_route: "codex".into(),
            allow_fallback: false,
            fallback_bridge: "llm-chat".into(),
            score_threshold: 6.0,
            max_rounds: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemediationConfig {
    pub retry_limit: u32,
    pub min_distinct_strategies: u32,
    pub rescue_route: Option<String>,
    /// Error class to ordered remediation strategy ids.
    pub strategies: BTreeMap<String, Vec<String>>,
}

impl Default for RemediationConfig {
    fn default() -> Self {
        let table = [
            ("dependency_missing", &["install_missing_package", "pin_dependency_versions"][..]),
            ("oom", &["halve_batch_size", "enable_gradient_checkpointing", "reduce_sequence_length"]),
            ("timeout", &["extend_time_limit", "checkpoint_and_resume"]),
            ("assertion_failure", &["inspect_failing_assertion", "patch_input_shapes"]),
            ("other", &["rerun_with_verbose_logging", "bisect_recent_changes"]),
        ];
        Self {
            retry_limit: 3,
            min_distinct_strategies: 2,
            rescue_route: None,
            strategies: table
                .iter()
                .map(|(k, v)| (k.to_string(), v.iter().map(|s| s.to_string()).collect()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetaConfig {
    pub failure_rate: f64,
    pub min_calls: usize,
    pub plateau_window: usize,
    pub plateau_epsilon: f64,
    pub surface_threshold: f64,
}

impl Default for MetaConfig {
    fn default() -> Self {
        Self {
            failure_rate: 0.3,
            min_calls: 5,
            plateau_window: 3,
            plateau_epsilon: 0.2,
            surface_threshold: 7.0,
        }
    }
}

/// How experiment steps run. Without a command the stub runner replays
/// `.aris/mock/experiment.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub command: Option<String>,
    pub timeout_secs: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self { command: None, timeout_secs: 3600 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectConfig {
    pub default_preset: String,
    pub beast_multiplier: f64,
    /// Path prefixes, relative to the project root, each access scope may read.
    pub scopes: BTreeMap<String, Vec<String>>,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        let scopes = [
            ("document_only", vec!["paper/", "drafts/", ".aris/artifacts/DRAFT/", ".aris/artifacts/NARRATIVE_REPORT/", ".aris/artifacts/IDEA_REPORT/", ".aris/artifacts/PAPER_PLAN/", ".aris/artifacts/COMPILED/"]),
            ("artifact_augmented", vec!["paper/", "drafts/", "results/", "figures/", ".aris/artifacts/"]),
            ("repository_level", vec![""]),
        ];
        Self {
            default_preset: "balanced".into(),
            beast_multiplier: 5.0,
            scopes: scopes
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.into_iter().map(String::from).collect()))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ArisConfig {
    pub project: ProjectConfig,
    pub review: ReviewConfig,
    pub bridges: BTreeMap<String, BridgeConfig>,
    /// Route names (as written in `reviewer:` directives) to bridge ids.
    pub routes: BTreeMap<String, String>,
    pub prices: BTreeMap<String, Price>,
    pub remediation: RemediationConfig,
    pub meta: MetaConfig,
    pub experiment: ExperimentConfig,
}

fn chat(endpoint: &str, model: &str, family: &str, effort: &str, auth_env: &str) -> BridgeConfig {
    BridgeConfig {
        kind: BridgeKind::Chat,
        endpoint: endpoint.into(),
        model: model.into(),
        family: family.into(),
        reasoning_effort: effort.into(),
        reasoning_mode: if effort.is_empty() { ReasoningMode::Off } else { ReasoningMode::Field },
        auth_env: auth_env.into(),
        script: None,
        timeout_secs: 300,
    }
}

pub const MOCK_EXECUTOR: &str = "mock";
pub const MOCK_REVIEWER: &str = "mock-reviewer";

impl ArisConfig {
    pub fn path(project_root: &Path) -> PathBuf {
        project_root.join(".aris/config.toml")
    }

    /// Network bridges for every default route, plus the offline mocks.
    pub fn with_default_bridges() -> Self {
        let openai = "https://api.openai.com/v1/chat/completions";
        let mut cfg = Self::mock_only();
        let b = &mut cfg.bridges;
        b.insert("codex".into(), chat(openai, "gpt-5", "gpt", "xhigh", "OPENAI_API_KEY"));
        b.insert("oracle".into(), chat(openai, "gpt-5-pro", "gpt", "xhigh", "OPENAI_API_KEY"));
        b.insert(
            "claude".into(),
            chat("https://api.anthropic.com/v1/chat/completions", "claude-opus", "claude", "", "ANTHROPIC_API_KEY"),
        );
        b.insert(
            "gemini".into(),
            chat(
                "https://generativelanguage.googleapis.com/v1beta/openai/chat/completions",
                "gemini-pro",
                "gemini",
                "",
                "GEMINI_API_KEY",
            ),
        );
        b.insert(
            "minimax".into(),
            chat("https://api.minimax.io/v1/chat/completions", "minimax-m1", "minimax", "", "MINIMAX_API_KEY"),
        );
        b.insert(
            "llm-chat".into(),
            chat("http://localhost:8000/v1/chat/completions", "local", "local", "", "LLM_CHAT_API_KEY"),
        );
        cfg.review.executor = "claude".into();
        cfg.routes = [("codex", "codex"), ("oracle-pro", "oracle"), ("oracle", "oracle")]
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        cfg
    }

    /// Executor and reviewer both served by scripted mocks.
    pub fn mock_only() -> Self {
        let mock = |script: &str, family: &str| BridgeConfig {
            kind: BridgeKind::Mock,
            family: family.into(),
            reasoning_effort: "xhigh".into(),
            script: Some(PathBuf::from(script)),
            ..BridgeConfig::default()
        };
        let mut cfg = Self::default();
        cfg.bridges.insert(MOCK_EXECUTOR.into(), mock(".aris/mock/executor.json", "claude"));
        cfg.bridges.insert(MOCK_REVIEWER.into(), mock(".aris/mock/reviewer.json", "gpt"));
        cfg.review.executor = MOCK_EXECUTOR.into();
        cfg.routes = [("codex", MOCK_REVIEWER), ("oracle-pro", MOCK_REVIEWER), ("oracle", MOCK_REVIEWER)]
            .into_iter()
            .map(|(k, v)| (k.into(), v.into()))
            .collect();
        cfg
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(m));
        for (id, b) in &self.bridges {
            match b.kind {
                BridgeKind::Mock if b.script.is_none() => return bad(format!("mock bridge `{id}` needs a script")),
                BridgeKind::Chat if b.endpoint.is_empty() => return bad(format!("bridge `{id}` needs an endpoint")),
                _ => {}
            }
        }
        for (route, target) in &self.routes {
            if !self.bridges.contains_key(target) {
                return bad(format!("route `{route}` points at unknown bridge `{target}`"));
            }
        }
        if !(self.review.score_threshold > 0.0 && self.review.score_threshold <= 10.0) {
            return bad("review.score_threshold must be in (0, 10]".into());
        }
        if self.review.max_rounds == 0 {
            return bad("review.max_rounds must be at least 1".into());
        }
        if self.remediation.retry_limit == 0 || self.remediation.min_distinct_strategies == 0 {
            return bad("remediation limits must be at least 1".into());
        }
        if !(1.0..=8.0).contains(&self.project.beast_multiplier) {
            return bad("project.beast_multiplier must be within [1, 8]".into());
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Load the project config, or the mock-only default when none exists.
    pub fn load(project_root: &Path) -> Result<Self, ConfigError> {
        match fs::read_to_string(Self::path(project_root)) {
            Ok(text) => Self::from_toml(&text),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::mock_only()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn family_of(&self, bridge_id: &str) -> Option<&str> {
        self.bridges.get(bridge_id).map(|b| b.family.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        for cfg in [ArisConfig::with_default_bridges(), ArisConfig::mock_only()] {
            cfg.validate().unwrap();
            let back = ArisConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
        }
    }

    #[test]
    fn config_holds_env_names_not_keys() {
        let text = ArisConfig::with_default_bridges().to_toml();
        assert!(text.contains("auth_env = \"OPENAI_API_KEY\""));
        assert!(!text.to_lowercase().contains("sk-"));
    }

    #[test]
    fn mock_without_script_is_rejected() {
        let mut cfg = ArisConfig::mock_only();
        cfg.bridges.get_mut(MOCK_EXECUTOR).unwrap().script = None;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn prices_parse_as_exact_decimals() {
        let cfg = ArisConfig::from_toml(
            "[prices.codex]\nprompt = \"0.000001\"\ncompletion = \"0.000002\"\n",
        )
        .unwrap();
        assert_eq!(cfg.prices["codex"].prompt.to_string(), "0.000001");
    }
}
