//! First-run setup. Writes `.aris/config.toml` and the offline mock scripts.
//!
//! Keys are never asked for or stored; each network bridge records only the
//! name of the environment variable that holds its key.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use aris_core::config::{ArisConfig, BridgeKind};
use aris_core::fsutil::atomic_write;
use aris_core::orchestrator::{install_mock_scripts, Preset};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WizardMode {
    Interactive,
    /// Accept every default without asking.
    Defaults,
    /// Mock bridges only; nothing touches the network.
    MockOnly,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WizardOutcome {
    pub config_path: PathBuf,
    pub backup: Option<PathBuf>,
    pub mock_scripts: Vec<PathBuf>,
}

/// Upper-case letters, digits and underscores, not starting with a digit.
pub fn is_env_var_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_uppercase() || c == '_')
        && chars.all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_')
}

struct Prompter<'a> {
    input: &'a mut dyn BufRead,
    out: &'a mut dyn Write,
}

impl Prompter<'_> {
    /// Empty answer or end of input takes the default.
    fn ask(&mut self, question: &str, default: &str) -> Result<String> {
        write!(self.out, "{question} [{default}]: ")?;
        self.out.flush()?;
        let mut line = String::new();
        self.input.read_line(&mut line)?;
        let answer = line.trim();
        Ok(if answer.is_empty() { default.to_string() } else { answer.to_string() })
    }

    fn ask_until(&mut self, question: &str, default: &str, ok: impl Fn(&str) -> bool, hint: &str) -> Result<String> {
        for _ in 0..3 {
            let a = self.ask(question, default)?;
            if ok(&a) {
                return Ok(a);
            }
            writeln!(self.out, "  {hint}")?;
        }
        writeln!(self.out, "  keeping {default}")?;
        Ok(default.to_string())
    }
}

fn yes(answer: &str) -> bool {
    matches!(answer.to_ascii_lowercase().as_str(), "y" | "yes")
}

fn backup_path(config: &Path) -> PathBuf {
    let mut n = 1;
    loop {
        let p = config.with_extension(format!("toml.bak.{n}"));
        if !p.exists() {
            return p;
        }
        n += 1;
    }
}

pub fn run_wizard(root: &Path, mode: WizardMode, input: &mut dyn BufRead, out: &mut dyn Write) -> Result<WizardOutcome> {
    let mut cfg = match mode {
        WizardMode::MockOnly => ArisConfig::mock_only(),
        WizardMode::Defaults => ArisConfig::with_default_bridges(),
        WizardMode::Interactive => {
            let mut p = Prompter { input, out };
            let network = p.ask("Configure network model bridges? (y/n)", "y")?;
            if yes(&network) {
                let mut cfg = ArisConfig::with_default_bridges();
                let ids: Vec<String> = cfg.bridges.iter().filter(|(_, b)| b.kind == BridgeKind::Chat).map(|(k, _)| k.clone()).collect();
                for id in ids {
                    let current = cfg.bridges[&id].auth_env.clone();
                    let name = p.ask_until(
                        &format!("Environment variable holding the key for `{id}`"),
                        &current,
                        is_env_var_name,
                        "enter a variable name such as OPENAI_API_KEY, not the key itself",
                    )?;
                    cfg.bridges.get_mut(&id).expect("listed above").auth_env = name;
                }
                let routes: Vec<String> = cfg.routes.keys().cloned().collect();
                let route_ok = |r: &str| cfg.routes.contains_key(r) || cfg.bridges.contains_key(r);
                let route = p.ask_until(
                    &format!("Default reviewer route ({})", routes.join(", ")),
                    &cfg.review.default_route,
                    route_ok,
                    "unknown route",
                )?;
                cfg.review.default_route = route;
                cfg
            } else {
                ArisConfig::mock_only()
            }
        }
    };
    if mode == WizardMode::Interactive {
        let mut p = Prompter { input, out };
        let names: Vec<&str> = Preset::ALL.iter().map(|x| x.as_str()).collect();
        let preset = p.ask_until(
            &format!("Default effort preset ({})", names.join(", ")),
            &cfg.project.default_preset,
            |s| s.parse::<Preset>().is_ok(),
            "unknown preset",
        )?;
        cfg.project.default_preset = preset;
    }
    for (id, b) in &cfg.bridges {
        if b.kind == BridgeKind::Chat && !is_env_var_name(&b.auth_env) {
            bail!("bridge `{id}`: auth_env must name an environment variable");
        }
    }
    cfg.validate().context("generated config is invalid")?;

    let config_path = ArisConfig::path(root);
    let backup = if config_path.exists() {
        let b = backup_path(&config_path);
        std::fs::copy(&config_path, &b).with_context(|| format!("backing up {}", config_path.display()))?;
        Some(b)
    } else {
        None
    };
    atomic_write(&config_path, cfg.to_toml().as_bytes()).with_context(|| format!("writing {}", config_path.display()))?;
    let mock_scripts = install_mock_scripts(root, false)?;
    writeln!(out, "wrote {}", config_path.display())?;
    if let Some(b) = &backup {
        writeln!(out, "previous config kept at {}", b.display())?;
    }
    Ok(WizardOutcome { config_path, backup, mock_scripts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wizard(root: &Path, mode: WizardMode, answers: &str) -> WizardOutcome {
        let mut input = answers.as_bytes();
        let mut out = Vec::new();
        run_wizard(root, mode, &mut input, &mut out).unwrap()
    }

    #[test]
    fn defaults_route_reviews_to_codex() {
        let dir = tempfile::tempdir().unwrap();
        wizard(dir.path(), WizardMode::Interactive, "");
        let cfg = ArisConfig::load(dir.path()).unwrap();
        assert_eq!(cfg.review.default_route, "codex");
        assert_eq!(cfg.routes["codex"], "codex");
        assert_eq!(cfg.bridges["codex"].auth_env, "OPENAI_API_KEY");
    }

    #[test]
    fn declining_network_gives_mock_only() {
        let dir = tempfile::tempdir().unwrap();
        let o = wizard(dir.path(), WizardMode::Interactive, "n\n\n");
        let cfg = ArisConfig::load(dir.path()).unwrap();
        assert!(cfg.bridges.values().all(|b| b.kind == BridgeKind::Mock));
        assert_eq!(o.mock_scripts.len(), 3);
    }

    #[test]
    fn pasted_keys_are_refused() {
        let dir = tempfile::tempdir().unwrap();
        let answers = "y\nsk-live-abc123\n\n\n\n\n\n\n\n";
        wizard(dir.path(), WizardMode::Interactive, answers);
        let text = std::fs::read_to_string(ArisConfig::path(dir.path())).unwrap();
        assert!(!text.contains("sk-live"));
    }

    #[test]
    fn rerun_backs_up_the_old_config() {
        let dir = tempfile::tempdir().unwrap();
        wizard(dir.path(), WizardMode::Defaults, "");
        let first = std::fs::read_to_string(ArisConfig::path(dir.path())).unwrap();
        let o = wizard(dir.path(), WizardMode::MockOnly, "");
        let backup = o.backup.unwrap();
        assert_eq!(std::fs::read_to_string(backup).unwrap(), first);
        let o = wizard(dir.path(), WizardMode::MockOnly, "");
        assert!(o.backup.unwrap().to_string_lossy().ends_with(".bak.2"));
    }

    #[test]
    fn env_var_names() {
        assert!(is_env_var_name("OPENAI_API_KEY"));
        assert!(is_env_var_name("_X1"));
        assert!(!is_env_var_name("1X"));
        assert!(!is_env_var_name("sk-abc"));
        assert!(!is_env_var_name(""));
    }
}
