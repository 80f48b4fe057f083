//! The interactive session. Gates, patch accepts and setup questions are
//! asked on the same input the commands come from.

use std::cell::RefCell;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::rc::Rc;

use anyhow::{bail, Result};
use aris_core::orchestrator::{Approval, ApprovalRequest, Engine, GateKind};
use aris_core::meta::PatchProposal;

use crate::app;
use crate::command::VerbKind;
use crate::wizard::{run_wizard, WizardMode};

struct Io {
    input: Box<dyn BufRead>,
    out: Box<dyn Write>,
}

impl Io {
    /// `None` at end of input.
    fn read_line(&mut self) -> Option<String> {
        let mut line = String::new();
        match self.input.read_line(&mut line) {
            Ok(0) | Err(_) => None,
            Ok(_) => Some(line.trim_end_matches(['\n', '\r']).to_string()),
        }
    }

    fn say(&mut self, text: &str) {
        let _ = self.out.write_all(text.as_bytes());
        if !text.ends_with('\n') {
            let _ = self.out.write_all(b"\n");
        }
        let _ = self.out.flush();
    }

    /// Only an explicit yes approves. End of input leaves the question open.
    fn confirm(&mut self, question: &str) -> Approval {
        let _ = write!(self.out, "{question} [y/N] ");
        let _ = self.out.flush();
        match self.read_line() {
            None => Approval::Pending,
            Some(a) if matches!(a.trim().to_ascii_lowercase().as_str(), "y" | "yes") => Approval::Approved,
            Some(_) => Approval::Declined,
        }
    }
}

pub struct Session {
    root: PathBuf,
    cwd: PathBuf,
    user_skills: Option<PathBuf>,
    io: Rc<RefCell<Io>>,
    /// Exit status of the last workflow run.
    pub last_status: i32,
}

const HELP: &str = "\
/<workflow> [inputs] [key: value]   run a workflow (see /workflows)
/<skill> [inputs] [key: value]      run one skill (see /skills)
/resume <run>                       continue a stopped run
/status [run]                       summary of a run
/cost [run]                         token and cost table
/meta analyze|propose|list          usage findings and patch proposals
/meta accept|decline <proposal>     decide on a surfaced patch
/render <spec.json> [out.svg]       render a figure spec
/validate <spec.json>               check a figure spec
/wizard [mock-only]                 rewrite the project config
/quit
Directives: effort: lite|balanced|max|beast, reviewer: <route>, human checkpoint: true, auto_write: false";

impl Session {
    pub fn new(root: &Path, cwd: &Path, user_skills: Option<&Path>, input: Box<dyn BufRead>, out: Box<dyn Write>) -> Self {
        Self {
            root: root.to_path_buf(),
            cwd: cwd.to_path_buf(),
            user_skills: user_skills.map(Path::to_path_buf),
            io: Rc::new(RefCell::new(Io { input, out })),
            last_status: 0,
        }
    }

    fn say(&self, text: &str) {
        self.io.borrow_mut().say(text);
    }

    fn engine(&self) -> Result<Engine> {
        let mut engine = app::open_engine(&self.root, self.user_skills.as_deref())?;
        let io = self.io.clone();
        engine.approver = Box::new(move |req: &ApprovalRequest| {
            let what = match req.kind {
                GateKind::HumanCheckpoint => "human checkpoint".to_string(),
                GateKind::StepGate => format!("gate `{}`", req.gate),
            };
            io.borrow_mut().confirm(&format!("{what} before step {} ({}). Continue?", req.step, req.skill))
        });
        let io = self.io.clone();
        engine.progress = Some(Box::new(move |rec| io.borrow_mut().say(&app::step_line(rec))));
        Ok(engine)
    }

    /// Read and run commands until `/quit` or end of input.
    pub fn run(&mut self) -> Result<i32> {
        self.say("aris session. /help lists commands.");
        loop {
            {
                let mut io = self.io.borrow_mut();
                let _ = write!(io.out, "aris> ");
                let _ = io.out.flush();
            }
            let Some(line) = self.io.borrow_mut().read_line() else { break };
            if line.trim().is_empty() {
                continue;
            }
            match self.handle(&line) {
                Ok(true) => break,
                Ok(false) => {}
                Err(e) => self.say(&format!("error: {e:#}")),
            }
        }
        Ok(self.last_status)
    }

    /// Returns true when the session should end.
    pub fn handle(&mut self, line: &str) -> Result<bool> {
        let trimmed = line.trim();
        let body = trimmed.strip_prefix('/').unwrap_or(trimmed);
        let mut words = body.split_whitespace();
        let verb = words.next().unwrap_or("");
        let rest: Vec<&str> = words.collect();
        match verb {
            "quit" | "exit" => return Ok(true),
            "help" => self.say(HELP),
            "wizard" => {
                let mode = if rest.first() == Some(&"mock-only") { WizardMode::MockOnly } else { WizardMode::Interactive };
                let mut io = self.io.borrow_mut();
                let Io { input, out } = &mut *io;
                run_wizard(&self.root, mode, input.as_mut(), out.as_mut())?;
            }
            "status" => self.say(&app::status_text(&self.root, rest.first().copied())?),
            "cost" => self.say(&app::cost_text(&self.root, rest.first().copied())?),
            "workflows" => self.say(&app::workflows_text(&self.root)?),
            "skills" => {
                let engine = self.engine()?;
                self.say(&app::skills_text(&engine, rest.first().copied()));
            }
            "render" => {
                let Some(spec) = rest.first() else { bail!("usage: /render <spec.json> [out.svg]") };
                let svg = app::render_figure(&self.cwd.join(spec))?;
                match rest.get(1) {
                    Some(o) => {
                        std::fs::write(self.cwd.join(o), svg)?;
                        self.say(&format!("wrote {o}"));
                    }
                    None => self.say(&svg),
                }
            }
            "validate" => {
                let Some(spec) = rest.first() else { bail!("usage: /validate <spec.json>") };
                app::render_figure(&self.cwd.join(spec))?;
                self.say("valid");
            }
            "meta" => self.meta(&rest)?,
            "resume" => {
                let Some(run) = rest.first() else { bail!("usage: /resume <run>") };
                let mut engine = self.engine()?;
                let s = engine.resume(run)?;
                self.last_status = s.status.exit_code();
                self.say(&app::summary_text(&s));
            }
            _ => {
                let mut engine = self.engine()?;
                let line = match trimmed.strip_prefix("/run ").or_else(|| trimmed.strip_prefix("run ")) {
                    Some(r) => format!("/{}", r.trim_start()),
                    None => trimmed.to_string(),
                };
                let cmd = app::command_for(&engine, &line)?;
                if cmd.kind == VerbKind::Builtin {
                    bail!("`/{}` needs arguments; see /help", cmd.verb);
                }
                let s = app::run_command(&mut engine, &cmd, &self.cwd, None)?;
                self.last_status = s.status.exit_code();
                self.say(&app::summary_text(&s));
            }
        }
        Ok(false)
    }

    fn meta(&mut self, rest: &[&str]) -> Result<()> {
        match rest {
            ["analyze"] => self.say(&app::meta_analyze(&self.root)?),
            ["list"] => self.say(&app::meta_list(&self.root)?),
            ["propose"] => {
                let engine = self.engine()?;
                let props = app::meta_propose(&engine)?;
                if props.is_empty() {
                    self.say("no patches proposed");
                }
                for p in &props {
                    self.say(&app::proposal_line(p));
                }
            }
            ["accept", id] => {
                let p = PatchProposal::load(&self.root, id)?;
                self.say(&format!("{}\n{}", app::proposal_line(&p), p.diff));
                let decision = self.io.borrow_mut().confirm(&format!("Apply this patch to {}?", p.target));
                match decision {
                    Approval::Approved => {
                        let p = app::meta_accept(&self.root, id)?;
                        self.say(&format!("applied {}", p.target));
                    }
                    _ => self.say("not applied"),
                }
            }
            ["decline", id] => {
                app::meta_decline(&self.root, id)?;
                self.say(&format!("declined {id}"));
            }
            _ => bail!("usage: /meta analyze|propose|list|accept <id>|decline <id>"),
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Clone, Default)]
    struct Shared(Rc<RefCell<Vec<u8>>>);

    impl Write for Shared {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            self.0.borrow_mut().extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    fn session(root: &Path, script: &str) -> (i32, String) {
        let out = Shared::default();
        let mut s = Session::new(root, root, None, Box::new(std::io::Cursor::new(script.to_string())), Box::new(out.clone()));
        let code = s.run().unwrap();
        let text = String::from_utf8(out.0.borrow().clone()).unwrap();
        (code, text)
    }

    #[test]
    fn declined_checkpoint_stops_the_run() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("draft.md"), "# Draft\n").unwrap();
        let (code, out) = session(dir.path(), "/wizard mock-only\n/auto-review-loop draft.md human checkpoint: true\nn\n/quit\n");
        assert_eq!(code, 2, "{out}");
        assert!(out.contains("human checkpoint before step 1"));
        assert!(out.contains("gate_declined"));
    }

    #[test]
    fn approved_checkpoints_let_the_run_finish() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("draft.md"), "# Draft\n").unwrap();
        let (code, out) = session(dir.path(), "/wizard mock-only\n/auto-review-loop draft.md human checkpoint: true\ny\ny\n");
        assert_eq!(code, 0, "{out}");
        assert!(out.contains("[ 2] analyze-results"));
        assert!(out.contains("accept after 4 round(s)"));
    }

    #[test]
    fn unknown_commands_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (_, out) = session(dir.path(), "/wizard mock-only\n/frobnicate\n");
        assert!(out.contains("error: unknown command `/frobnicate`"));
    }

    #[test]
    fn cost_of_an_empty_project() {
        let dir = tempfile::tempdir().unwrap();
        let (_, out) = session(dir.path(), "/cost\n");
        assert!(out.contains("total"));
    }
}
