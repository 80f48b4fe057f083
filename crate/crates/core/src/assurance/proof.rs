//! Proof-obligation ledger for theory sections.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ask_reviewer, md_cell, parse_block, write_report, AssuranceError};
use crate::fsutil::atomic_write;
use crate::review::{AccessScope, ReviewEnv};

pub const TAXONOMY_SIZE: usize = 20;

/// Issue categories, numbered from 1. Loaded from `.aris/proof_taxonomy.toml`
/// when present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofTaxonomy {
    pub categories: Vec<String>,
}

impl Default for ProofTaxonomy {
    fn default() -> Self {
        Self { categories: (1..=TAXONOMY_SIZE).map(|i| format!("category-{i:02}")).collect() }
    }
}

impl ProofTaxonomy {
    pub fn path(project_root: &Path) -> PathBuf {
        project_root.join(".aris/proof_taxonomy.toml")
    }

    pub fn load(project_root: &Path) -> Result<Self, AssuranceError> {
        let p = Self::path(project_root);
        if !p.exists() {
            return Ok(Self::default());
        }
        let tax: Self = toml::from_str(&std::fs::read_to_string(&p)?)
            .map_err(|e| AssuranceError::UnparseableReply(format!("{}: {e}", p.display())))?;
        if tax.categories.len() != TAXONOMY_SIZE {
            return Err(AssuranceError::UnparseableReply(format!(
                "{}: expected {TAXONOMY_SIZE} categories, found {}",
                p.display(),
                tax.categories.len()
            )));
        }
        Ok(tax)
    }

    pub fn save(&self, project_root: &Path) -> std::io::Result<()> {
        let text = toml::to_string(self).expect("taxonomy serializes");
        atomic_write(&Self::path(project_root), text.as_bytes())
    }

    pub fn name(&self, category: u32) -> Option<&str> {
        (category as usize).checked_sub(1).and_then(|i| self.categories.get(i)).map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProofStatus {
    Valid,
    Invalid,
    Unjustified,
    Unclear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Impact {
    Global,
    Local,
    Cosmetic,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofObligation {
    pub obligation_id: String,
    pub target: String,
    pub side_condition: Option<String>,
    pub category: u32,
    pub proof_status: ProofStatus,
    pub impact: Impact,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedTeamRecord {
    pub target: String,
    pub counterexample_found: bool,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ProofLedger {
    pub obligations: Vec<ProofObligation>,
    pub red_team: Vec<RedTeamRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatementKind {
    Theorem,
    Lemma,
    Proposition,
    Corollary,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Statement {
    pub kind: StatementKind,
    pub label: String,
}

impl Statement {
    /// Theorems and propositions carry the paper's guarantees.
    pub fn is_major(&self) -> bool {
        matches!(self.kind, StatementKind::Theorem | StatementKind::Proposition)
    }
}

fn statement_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?mi)\\begin\{(theorem|lemma|proposition|corollary)\}(?:\[[^\]]*\])?\s*(?:\\label\{([^}]*)\})?|^[*_]*(theorem|lemma|proposition|corollary)\s+(\d+(?:\.\d+)*)",
        )
        .expect("valid regex")
    })
}

fn kind_of(word: &str) -> StatementKind {
    match word.to_ascii_lowercase().as_str() {
        "theorem" => StatementKind::Theorem,
        "lemma" => StatementKind::Lemma,
        "proposition" => StatementKind::Proposition,
        _ => StatementKind::Corollary,
    }
}

/// Theorem-like statements in document order. Unlabelled LaTeX environments
/// are numbered per kind.
pub fn find_statements(text: &str) -> Vec<Statement> {
    let mut counters = [0usize; 4];
    let mut out = Vec::new();
    for c in statement_regex().captures_iter(text) {
        let word = c.get(1).or_else(|| c.get(3)).expect("one branch matched").as_str();
        let kind = kind_of(word);
        if c.get(1).is_some() {
            counters[kind as usize] += 1;
        }
        let name = format!("{}{}", word[..1].to_ascii_uppercase(), word[1..].to_ascii_lowercase());
        let label = match (c.get(2), c.get(4)) {
            (Some(l), _) => l.as_str().to_string(),
            (None, Some(n)) => format!("{name} {}", n.as_str()),
            _ => format!("{name} {}", counters[kind as usize]),
        };
        if !out.iter().any(|s: &Statement| s.label == label) {
            out.push(Statement { kind, label });
        }
    }
    out
}

#[derive(Debug, Deserialize)]
struct ObligationLine {
    target: String,
    #[serde(default)]
    side_condition: Option<String>,
    category: u32,
    proof_status: ProofStatus,
    impact: Impact,
    #[serde(default)]
    note: String,
}

#[derive(Debug, Deserialize)]
struct RedTeamLine {
    target: String,
    counterexample_found: bool,
    #[serde(default)]
    note: String,
}

/// Ask a fresh reviewer for one obligation per statement and per side
/// condition it checks, plus a counterexample attempt per major guarantee.
pub fn build_proof_ledger(
    env: &ReviewEnv,
    route: &str,
    manuscript: &Path,
    taxonomy: &ProofTaxonomy,
) -> Result<ProofLedger, AssuranceError> {
    let text = std::fs::read_to_string(env.project_root.join(manuscript))?;
    let statements = find_statements(&text);
    if statements.is_empty() {
        return Ok(ProofLedger::default());
    }
    let mut extra = String::from("Statements to check:\n");
    for s in &statements {
        let _ = writeln!(extra, "- {}{}", s.label, if s.is_major() { " (red-team)" } else { "" });
    }
    extra.push_str("\nIssue categories:\n");
    for (i, c) in taxonomy.categories.iter().enumerate() {
        let _ = writeln!(extra, "{}. {c}", i + 1);
    }
    extra.push_str(
        "\nReply with a fenced block tagged `obligations` holding a JSON list of \
         {\"target\", \"side_condition\", \"category\", \"proof_status\", \"impact\", \"note\"} objects, \
         proof_status one of valid|invalid|unjustified|unclear and impact one of global|local|cosmetic. \
         Add one entry per side condition you check. Then a fenced block tagged `redteam` holding \
         [{\"target\", \"counterexample_found\", \"note\"}] for every statement marked red-team.",
    );
    let reply = ask_reviewer(
        env,
        route,
        AccessScope::DocumentOnly,
        "proof-check",
        "Check every proof and the side conditions of each theorem application",
        &[manuscript.to_path_buf()],
        &extra,
    )?;
    let lines: Vec<ObligationLine> = parse_block(&reply, "obligations").map_err(AssuranceError::UnparseableReply)?;
    let red: Vec<RedTeamLine> = if statements.iter().any(Statement::is_major) {
        parse_block(&reply, "redteam").map_err(AssuranceError::UnparseableReply)?
    } else {
        Vec::new()
    };

    let known = |t: &str| statements.iter().any(|s| s.label == t);
    let mut ledger = ProofLedger::default();
    for (i, l) in lines.into_iter().enumerate() {
        if taxonomy.name(l.category).is_none() {
            return Err(AssuranceError::UnknownCategory(l.category));
        }
        if !known(&l.target) {
            return Err(AssuranceError::UnparseableReply(format!("obligation for unknown statement `{}`", l.target)));
        }
        ledger.obligations.push(ProofObligation {
            obligation_id: format!("PO-{:03}", i + 1),
            target: l.target,
            side_condition: l.side_condition.filter(|s| !s.is_empty()),
            category: l.category,
            proof_status: l.proof_status,
            impact: l.impact,
            note: l.note,
        });
    }
    for s in &statements {
        if !ledger.obligations.iter().any(|o| o.target == s.label && o.side_condition.is_none()) {
            return Err(AssuranceError::UnparseableReply(format!("no obligation for `{}`", s.label)));
        }
    }
    for r in red {
        if !known(&r.target) {
            return Err(AssuranceError::UnparseableReply(format!("red-team record for unknown statement `{}`", r.target)));
        }
        ledger.red_team.push(RedTeamRecord { target: r.target, counterexample_found: r.counterexample_found, note: r.note });
    }
    for s in statements.iter().filter(|s| s.is_major()) {
        if !ledger.red_team.iter().any(|r| r.target == s.label) {
            return Err(AssuranceError::UnparseableReply(format!("no red-team record for `{}`", s.label)));
        }
    }
    Ok(ledger)
}

impl ProofLedger {
    pub fn to_markdown(&self, taxonomy: &ProofTaxonomy) -> String {
        let mut out = String::from("# Proof obligations\n\n");
        if self.obligations.is_empty() {
            out.push_str("No theorem-like statements found.\n");
            return out;
        }
        out.push_str("| Id | Target | Side condition | Category | Status | Impact | Note |\n|---|---|---|---|---|---|---|\n");
        for o in &self.obligations {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} {} | {:?} | {:?} | {} |",
                o.obligation_id,
                md_cell(&o.target),
                md_cell(o.side_condition.as_deref().unwrap_or("-")),
                o.category,
                taxonomy.name(o.category).unwrap_or("?"),
                o.proof_status,
                o.impact,
                md_cell(&o.note)
            );
        }
        if !self.red_team.is_empty() {
            out.push_str("\n## Red team\n\n");
            for r in &self.red_team {
                let verdict = if r.counterexample_found { "counterexample found" } else { "no counterexample" };
                let _ = writeln!(out, "- {}: {verdict}. {}", r.target, r.note);
            }
        }
        out
    }

    pub fn write(&self, dir: &Path, taxonomy: &ProofTaxonomy) -> std::io::Result<(PathBuf, PathBuf)> {
        write_report(dir, "PROOF_OBLIGATIONS.md", &self.to_markdown(taxonomy), "proof_obligations.json", self)
    }
}

#[cfg(test)]
mod tests {
    use super::super::testkit::Fixture;
    use super::*;

    fn with_paper(replies: &[&str], body: &str) -> Fixture {
        let fx = Fixture::new(replies);
        std::fs::write(fx.dir.path().join("paper/main.md"), body).unwrap();
        fx
    }

    #[test]
    fn finds_latex_and_markdown_statements() {
        let t = "\\begin{theorem}[Main]\\label{thm:main} x \\end{theorem}\n**Lemma 2.1** y\n\\begin{lemma} z \\end{lemma}\n";
        let s = find_statements(t);
        let labels: Vec<&str> = s.iter().map(|s| s.label.as_str()).collect();
        assert_eq!(labels, ["thm:main", "Lemma 2.1", "Lemma 1"]);
        assert!(s[0].is_major() && !s[1].is_major());
    }

    #[test]
    fn no_theorems_means_no_call() {
        let fx = with_paper(&[], "# Methods\nNo theory here.\n");
        let l = build_proof_ledger(&fx.env(), "rev", Path::new("paper/main.md"), &ProofTaxonomy::default()).unwrap();
        assert!(l.obligations.is_empty());
        assert_eq!(fx.mock.calls(), 0);
    }

    #[test]
    fn one_lemma_sets_both_axes() {
        let reply = "```obligations\n[{\"target\": \"Lemma 1\", \"category\": 3, \"proof_status\": \"unjustified\", \"impact\": \"local\"}]\n```";
        let fx = with_paper(&[reply], "Lemma 1. Bound holds.\n");
        let l = build_proof_ledger(&fx.env(), "rev", Path::new("paper/main.md"), &ProofTaxonomy::default()).unwrap();
        assert_eq!(l.obligations.len(), 1);
        assert_eq!(l.obligations[0].proof_status, ProofStatus::Unjustified);
        assert_eq!(l.obligations[0].impact, Impact::Local);
        assert!(l.to_markdown(&ProofTaxonomy::default()).contains("category-03"));
    }

    #[test]
    fn category_out_of_range() {
        for bad in [0, 21] {
            let reply = format!("```obligations\n[{{\"target\": \"Lemma 1\", \"category\": {bad}, \"proof_status\": \"valid\", \"impact\": \"cosmetic\"}}]\n```");
            let fx = with_paper(&[reply.as_str()], "Lemma 1. x\n");
            let err = build_proof_ledger(&fx.env(), "rev", Path::new("paper/main.md"), &ProofTaxonomy::default()).unwrap_err();
            assert!(matches!(err, AssuranceError::UnknownCategory(c) if c == bad));
        }
    }

    #[test]
    fn theorems_need_side_conditions_and_red_team() {
        let reply = "```obligations\n[\
            {\"target\": \"Theorem 1\", \"category\": 1, \"proof_status\": \"valid\", \"impact\": \"global\"},\
            {\"target\": \"Theorem 1\", \"side_condition\": \"bounded loss\", \"category\": 2, \"proof_status\": \"unclear\", \"impact\": \"global\"}]\n```\n\
            ```redteam\n[{\"target\": \"Theorem 1\", \"counterexample_found\": false}]\n```";
        let fx = with_paper(&[reply, "```obligations\n[]\n```\n```redteam\n[]\n```"], "Theorem 1. Converges.\n");
        let tax = ProofTaxonomy::default();
        let l = build_proof_ledger(&fx.env(), "rev", Path::new("paper/main.md"), &tax).unwrap();
        assert_eq!(l.obligations.len(), 2);
        assert_eq!(l.red_team.len(), 1);
        assert!(build_proof_ledger(&fx.env(), "rev", Path::new("paper/main.md"), &tax).is_err());
    }

    #[test]
    fn taxonomy_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut tax = ProofTaxonomy::default();
        tax.categories[0] = "quantifier order".into();
        tax.save(dir.path()).unwrap();
        assert_eq!(ProofTaxonomy::load(dir.path()).unwrap(), tax);
        std::fs::write(ProofTaxonomy::path(dir.path()), "categories = [\"a\"]\n").unwrap();
        assert!(ProofTaxonomy::load(dir.path()).is_err());
    }
}
