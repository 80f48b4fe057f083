//! Experiment execution. The engine never talks to GPUs itself; it hands the
//! code artifact to a runner and reads back a log.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExperimentRequest<'a> {
    /// `sanity` or `full`.
    pub mode: &'a str,
    pub code: &'a str,
    /// 0 for the first try, then the remediation attempt number.
    pub attempt: u32,
    pub strategy: Option<&'a str>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub ok: bool,
    pub log: String,
    #[serde(default)]
    pub error_class: Option<String>,
}

pub trait CommandRunner {
    fn run(&self, project_root: &Path, req: &ExperimentRequest) -> std::io::Result<ExperimentOutput>;
}

/// Canned outputs per mode, indexed by attempt; the last entry repeats.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct StubRunner {
    pub modes: BTreeMap<String, Vec<ExperimentOutput>>,
}

pub(crate) const BUNDLED_EXPERIMENT_SCRIPT: &str = include_str!("../../assets/mock/experiment.json");

impl StubRunner {
    pub fn bundled() -> Self {
        serde_json::from_str(BUNDLED_EXPERIMENT_SCRIPT).expect("bundled experiment script parses")
    }

    pub fn from_file(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }

    /// `.aris/mock/experiment.json` when present, else the bundled script.
    pub fn for_project(project_root: &Path) -> std::io::Result<Self> {
        let p = project_root.join(".aris/mock/experiment.json");
        if p.is_file() {
            Self::from_file(&p)
        } else {
            Ok(Self::bundled())
        }
    }
}

impl CommandRunner for StubRunner {
    fn run(&self, _: &Path, req: &ExperimentRequest) -> std::io::Result<ExperimentOutput> {
        let outs = self
            .modes
            .get(req.mode)
            .filter(|v| !v.is_empty())
            .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::NotFound, format!("stub runner has no `{}` mode", req.mode)))?;
        Ok(outs[(req.attempt as usize).min(outs.len() - 1)].clone())
    }
}

/// Runs a shell command in the project. The code artifact is written to
/// `experiments/code.md`; mode and strategy arrive as environment variables.
#[derive(Debug, Clone)]
pub struct ShellRunner {
    pub command: String,
    pub timeout: Duration,
}

pub fn classify_error(output: &str) -> &'static str {
    let lower = output.to_ascii_lowercase();
    if lower.contains("modulenotfounderror") || lower.contains("no module named") || lower.contains("command not found") {
        "dependency_missing"
    } else if lower.contains("out of memory") || lower.contains("cuda oom") || lower.contains("oom") {
        "oom"
    } else if lower.contains("assertionerror") {
        "assertion_failure"
    } else {
        "other"
    }
}

impl CommandRunner for ShellRunner {
    fn run(&self, project_root: &Path, req: &ExperimentRequest) -> std::io::Result<ExperimentOutput> {
        let code_path: PathBuf = project_root.join("experiments/code.md");
        crate::fsutil::atomic_write(&code_path, req.code.as_bytes())?;
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .current_dir(project_root)
            .env("ARIS_EXPERIMENT_MODE", req.mode)
            .env("ARIS_EXPERIMENT_CODE", &code_path)
            .env("ARIS_REMEDIATION", req.strategy.unwrap_or(""))
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()?;
        let start = Instant::now();
        let status = loop {
            if let Some(s) = child.try_wait()? {
                break Some(s);
            }
            if start.elapsed() >= self.timeout {
                let _ = child.kill();
                let _ = child.wait();
                break None;
            }
            std::thread::sleep(Duration::from_millis(50));
        };
        let mut log = String::new();
        if let Some(mut out) = child.stdout.take() {
            out.read_to_string(&mut log)?;
        }
        let mut err = String::new();
        if let Some(mut e) = child.stderr.take() {
            e.read_to_string(&mut err)?;
        }
        log.push_str(&err);
        Ok(match status {
            None => ExperimentOutput { ok: false, log, error_class: Some("timeout".into()) },
            Some(s) if s.success() => ExperimentOutput { ok: true, log, error_class: None },
            Some(_) => {
                let class = classify_error(&log).to_string();
                ExperimentOutput { ok: false, log, error_class: Some(class) }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stub_repeats_its_last_output() {
        let mut s = StubRunner::default();
        s.modes.insert(
            "full".into(),
            vec![
                ExperimentOutput { ok: false, log: "OOM".into(), error_class: Some("oom".into()) },
                ExperimentOutput { ok: true, log: "accuracy: 0.9".into(), error_class: None },
            ],
        );
        let req = |attempt| ExperimentRequest { mode: "full", code: "", attempt, strategy: None };
        assert!(!s.run(Path::new("."), &req(0)).unwrap().ok);
        assert!(s.run(Path::new("."), &req(1)).unwrap().ok);
        assert!(s.run(Path::new("."), &req(7)).unwrap().ok);
        assert!(s.run(Path::new("."), &ExperimentRequest { mode: "sweep", ..req(0) }).is_err());
    }

    #[test]
    fn bundled_script_covers_both_modes() {
        let s = StubRunner::bundled();
        assert!(s.modes.contains_key("sanity") && s.modes.contains_key("full"));
    }

    #[test]
    fn error_classes() {
        assert_eq!(classify_error("ModuleNotFoundError: No module named 'x'"), "dependency_missing");
        assert_eq!(classify_error("RuntimeError: CUDA out of memory"), "oom");
        assert_eq!(classify_error("segfault"), "other");
    }

    #[test]
    fn shell_runner_reports_exit_status() {
        let dir = tempfile::tempdir().unwrap();
        let ok = ShellRunner { command: "echo accuracy: 0.5".into(), timeout: Duration::from_secs(10) };
        let req = ExperimentRequest { mode: "full", code: "x", attempt: 0, strategy: None };
        let out = ok.run(dir.path(), &req).unwrap();
        assert!(out.ok && out.log.contains("0.5"));
        let bad = ShellRunner { command: "echo 'No module named torch' >&2; exit 1".into(), timeout: Duration::from_secs(10) };
        assert_eq!(bad.run(dir.path(), &req).unwrap().error_class.as_deref(), Some("dependency_missing"));
        let slow = ShellRunner { command: "sleep 5".into(), timeout: Duration::from_millis(200) };
        assert_eq!(slow.run(dir.path(), &req).unwrap().error_class.as_deref(), Some("timeout"));
    }
}
