//! Engine behind the `aris` command: skills, artifacts, wiki memory, the
//! review loop, the assurance cascade, workflows, model bridges and the
//! meta-optimizer.

mod bundled;
pub mod frontmatter;
pub mod fsutil;
pub mod skills;
pub mod artifacts;
pub mod wiki;
pub mod config;
pub mod bridges;
pub mod review;
pub mod assurance;
pub mod meta;
pub mod orchestrator;
