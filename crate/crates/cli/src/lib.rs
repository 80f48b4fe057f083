//! The `aris` command line: one-shot commands, the interactive session and
//! the setup wizard.

pub mod app;
pub mod command;
pub mod cost;
pub mod repl;
pub mod wizard;

/// Process exit codes other than a run status.
pub const EXIT_ERROR: i32 = 1;
