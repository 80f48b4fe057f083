//! Offline stand-in for the LaTeX build: balances environments and inline
//! math, reports dangling references, and stops once a pass is clean.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileResult {
    pub output: String,
    pub passes: usize,
    pub repairs: Vec<String>,
    pub warnings: Vec<String>,
}

fn env_regex() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\\(begin|end)\{([^}]+)\}").expect("static regex"))
}

fn ref_regex() -> &'static Regex {
    static R: OnceLock<Regex> = OnceLock::new();
    R.get_or_init(|| Regex::new(r"\\(?:ref|eqref|label)\{([^}]+)\}").expect("static regex"))
}

fn unescaped_dollars(line: &str) -> usize {
    let b = line.as_bytes();
    (0..b.len()).filter(|&i| b[i] == b'$' && (i == 0 || b[i - 1] != b'\\')).count()
}

/// One repair pass; `None` when nothing needed fixing.
fn repair_once(text: &str) -> Option<(String, Vec<String>)> {
    let mut notes = Vec::new();
    let mut stack: Vec<String> = Vec::new();
    let mut stray: Vec<(usize, usize)> = Vec::new();
    for c in env_regex().captures_iter(text) {
        let m = c.get(0).expect("whole match");
        let name = c[2].to_string();
        if &c[1] == "begin" {
            stack.push(name);
        } else if stack.last() == Some(&name) {
            stack.pop();
        } else {
            stray.push((m.start(), m.end()));
            notes.push(format!("dropped stray \\end{{{name}}}"));
        }
    }
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for (s, e) in &stray {
        out.push_str(&text[last..*s]);
        last = *e;
    }
    out.push_str(&text[last..]);

    let mut lines: Vec<String> = out.lines().map(String::from).collect();
    for (i, l) in lines.iter_mut().enumerate() {
        if unescaped_dollars(l) % 2 == 1 {
            l.push('$');
            notes.push(format!("closed inline math on line {}", i + 1));
        }
    }
    let mut out = lines.join("\n");
    if !out.is_empty() {
        out.push('\n');
    }
    for name in stack.iter().rev() {
        out.push_str(&format!("\\end{{{name}}}\n"));
        notes.push(format!("closed \\begin{{{name}}}"));
    }
    (!notes.is_empty()).then_some((out, notes))
}

pub fn compile_stub(source: &str, max_passes: usize) -> CompileResult {
    let mut text = source.to_string();
    let mut repairs = Vec::new();
    let mut passes = 0;
    while passes < max_passes.max(1) {
        passes += 1;
        match repair_once(&text) {
            Some((next, notes)) => {
                text = next;
                repairs.extend(notes);
            }
            None => break,
        }
    }
    let mut labels = BTreeSet::new();
    let mut refs = BTreeSet::new();
    for c in ref_regex().captures_iter(&text) {
        if c[0].starts_with("\\label") {
            labels.insert(c[1].to_string());
        } else {
            refs.insert(c[1].to_string());
        }
    }
    let warnings: Vec<String> = refs.difference(&labels).map(|r| format!("undefined reference `{r}`")).collect();
    let mut output = format!("% paper-compile stub, {passes} pass(es)\n");
    for r in &repairs {
        output.push_str(&format!("% repair: {r}\n"));
    }
    for w in &warnings {
        output.push_str(&format!("% warning: {w}\n"));
    }
    output.push_str(&text);
    if !output.ends_with('\n') {
        output.push('\n');
    }
    CompileResult { output, passes, repairs, warnings }
}
