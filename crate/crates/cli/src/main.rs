use std::io::{BufReader, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use aris_cli::app::{self, YesFlags};
use aris_cli::repl::Session;
use aris_cli::wizard::{run_wizard, WizardMode};
use aris_cli::EXIT_ERROR;

#[derive(Parser)]
#[command(name = "aris", version, about = "Research workflows over local skills and model bridges")]
struct Cli {
    /// Project directory (defaults to the current directory).
    #[arg(long, global = true)]
    project: Option<PathBuf>,
    /// Extra user-tier skill directory.
    #[arg(long, global = true)]
    user_skills: Option<PathBuf>,
    #[command(subcommand)]
    command: Option<Cmd>,
}

#[derive(clap::Args, Default)]
struct Yes {
    /// Approve human checkpoints without asking.
    #[arg(long)]
    yes_checkpoint: bool,
    /// Approve the named step gate; repeatable.
    #[arg(long = "yes-gate", value_name = "GATE")]
    yes_gate: Vec<String>,
}

impl Yes {
    fn flags(&self) -> YesFlags {
        YesFlags { checkpoints: self.yes_checkpoint, gates: self.yes_gate.iter().cloned().collect() }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Interactive session.
    Repl,
    /// Run a workflow or a single skill. Trailing `key: value` pairs are directives.
    Run {
        workflow: String,
        /// Inputs and `key: value` directives; put `--` before inputs that start with a hyphen.
        args: Vec<String>,
        #[command(flatten)]
        yes: Yes,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Continue a stopped run as a new fork.
    Resume {
        run_id: String,
        #[command(flatten)]
        yes: Yes,
    },
    /// Summary of a run (latest if omitted).
    Status { run: Option<String> },
    /// Render a figure spec to SVG.
    Render {
        spec: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Check a figure spec.
    Validate { spec: PathBuf },
    /// Token and cost table.
    Cost {
        #[arg(long)]
        run: Option<String>,
    },
    /// Usage analysis and skill patch proposals.
    Meta {
        #[command(subcommand)]
        action: MetaCmd,
    },
    /// Write the project config.
    Wizard {
        #[arg(long, conflicts_with = "defaults")]
        mock_only: bool,
        #[arg(long)]
        defaults: bool,
    },
    /// List resolved skills.
    Skills {
        #[arg(long)]
        category: Option<String>,
    },
    /// List workflows.
    Workflows,
}

#[derive(Subcommand)]
enum MetaCmd {
    Analyze,
    Propose,
    List,
    Accept { proposal: String },
    Decline { proposal: String },
}

/// Keep a multi-word input together unless the whole argument is a directive.
fn quote(arg: &str) -> String {
    let directive = aris_core::orchestrator::parse_directives(arg)
        .is_ok_and(|d| d.rest.is_empty() && (!d.directives.is_empty() || !d.unknown.is_empty()));
    if !directive && (arg.is_empty() || arg.contains(char::is_whitespace)) {
        format!("\"{}\"", arg.replace('"', "\\\""))
    } else {
        arg.to_string()
    }
}

fn execute(cli: Cli) -> Result<i32> {
    let root = app::project_root(cli.project)?;
    let cwd = std::env::current_dir()?;
    let user_skills = cli.user_skills.as_deref();
    match cli.command.unwrap_or(Cmd::Repl) {
        Cmd::Repl => {
            let mut s = Session::new(&root, &cwd, user_skills, Box::new(BufReader::new(std::io::stdin())), Box::new(std::io::stdout()));
            s.run()
        }
        Cmd::Run { workflow, args, yes, run_id } => {
            let mut engine = app::open_engine(&root, user_skills)?;
            engine.approver = Box::new(yes.flags().approver());
            engine.progress = Some(Box::new(|rec| println!("{}", app::step_line(rec))));
            let line = std::iter::once(format!("/{workflow}")).chain(args.iter().map(|a| quote(a))).collect::<Vec<_>>().join(" ");
            let cmd = app::command_for(&engine, &line)?;
            let s = app::run_command(&mut engine, &cmd, &cwd, run_id)?;
            println!("{}", app::summary_text(&s));
            Ok(s.status.exit_code())
        }
        Cmd::Resume { run_id, yes } => {
            let mut engine = app::open_engine(&root, user_skills)?;
            engine.approver = Box::new(yes.flags().approver());
            engine.progress = Some(Box::new(|rec| println!("{}", app::step_line(rec))));
            let s = engine.resume(&run_id)?;
            println!("{}", app::summary_text(&s));
            Ok(s.status.exit_code())
        }
        Cmd::Status { run } => {
            println!("{}", app::status_text(&root, run.as_deref())?);
            Ok(0)
        }
        Cmd::Render { spec, out } => {
            let svg = app::render_figure(&spec)?;
            match out {
                Some(o) => std::fs::write(o, svg)?,
                None => print!("{svg}"),
            }
            Ok(0)
        }
        Cmd::Validate { spec } => {
            app::render_figure(&spec)?;
            println!("valid");
            Ok(0)
        }
        Cmd::Cost { run } => {
            print!("{}", app::cost_text(&root, run.as_deref())?);
            Ok(0)
        }
        Cmd::Meta { action } => {
            match action {
                MetaCmd::Analyze => println!("{}", app::meta_analyze(&root)?),
                MetaCmd::List => print!("{}", app::meta_list(&root)?),
                MetaCmd::Propose => {
                    let engine = app::open_engine(&root, user_skills)?;
                    for p in app::meta_propose(&engine)? {
                        println!("{}", app::proposal_line(&p));
                    }
                }
                MetaCmd::Accept { proposal } => {
                    let p = app::meta_accept(&root, &proposal)?;
                    println!("applied {}", p.target);
                }
                MetaCmd::Decline { proposal } => {
                    app::meta_decline(&root, &proposal)?;
                    println!("declined {proposal}");
                }
            }
            Ok(0)
        }
        Cmd::Wizard { mock_only, defaults } => {
            let mode = if mock_only {
                WizardMode::MockOnly
            } else if defaults || !std::io::stdin().is_terminal() {
                WizardMode::Defaults
            } else {
                WizardMode::Interactive
            };
            if mode == WizardMode::Interactive && !std::io::stdout().is_terminal() {
                bail!("interactive setup needs a terminal; use --defaults or --mock-only");
            }
            let mut input = BufReader::new(std::io::stdin());
            run_wizard(&root, mode, &mut input, &mut std::io::stdout())?;
            Ok(0)
        }
        Cmd::Skills { category } => {
            let engine = app::open_engine(&root, user_skills)?;
            print!("{}", app::skills_text(&engine, category.as_deref()));
            Ok(0)
        }
        Cmd::Workflows => {
            print!("{}", app::workflows_text(&root)?);
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR as u8)
        }
    }
}
