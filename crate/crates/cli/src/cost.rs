//! The `/cost` table.

use aris_core::bridges::{CostReport, CostRow};

const HEADER: [&str; 6] = ["bridge", "calls", "prompt_tokens", "completion_tokens", "cost", "unpriced_calls"];

fn cells(name: &str, r: &CostRow) -> [String; 6] {
    [
        name.to_string(),
        r.calls.to_string(),
        r.prompt_tokens.to_string(),
        r.completion_tokens.to_string(),
        r.cost.normalize().to_string(),
        r.unpriced_calls.to_string(),
    ]
}

/// One row per bridge in name order, then `total`. Columns are fixed.
pub fn render_cost_table(report: &CostReport) -> String {
    let mut rows: Vec<[String; 6]> = vec![HEADER.map(String::from)];
    for (name, r) in &report.per_bridge {
        rows.push(cells(name, r));
    }
    rows.push(cells("total", &report.total));
    let mut width = [0usize; 6];
    for row in &rows {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    for row in &rows {
        let mut line = format!("{:<w$}", row[0], w = width[0]);
        for (c, w) in row.iter().zip(width).skip(1) {
            line.push_str(&format!("  {c:>w$}"));
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    if report.skipped_lines > 0 {
        out.push_str(&format!("({} unreadable ledger line(s) skipped)\n", report.skipped_lines));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use aris_core::bridges::{cost_report_from_lines, CostLine};

    #[test]
    fn empty_ledger_is_all_zero() {
        let t = render_cost_table(&CostReport::default());
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1].split_whitespace().collect::<Vec<_>>(), ["total", "0", "0", "0", "0", "0"]);
    }

    #[test]
    fn two_bridges_give_two_rows_and_a_total() {
        let line = |b: &str, p: u64| CostLine {
            bridge: b.into(),
            model: "m".into(),
            prompt_tokens: p,
            completion_tokens: 1,
            cost: "0.25".parse().unwrap(),
            priced: true,
        };
        let r = cost_report_from_lines(&[line("codex", 10), line("claude", 5), line("codex", 1)], 0);
        let t = render_cost_table(&r);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("claude"));
        assert!(lines[2].starts_with("codex"));
        assert_eq!(lines[3].split_whitespace().collect::<Vec<_>>(), ["total", "3", "16", "3", "0.75", "0"]);
    }
}
