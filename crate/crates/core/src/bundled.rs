// Generated from assets/skills; keep sorted.
pub(crate) const BUNDLED_SKILLS: &[(&str, &str)] = &[
    ("ablation-planner", include_str!("../assets/skills/ablation-planner/SKILL.md")),
    ("alphaxiv", include_str!("../assets/skills/alphaxiv/SKILL.md")),
    ("analyze-results", include_str!("../assets/skills/analyze-results/SKILL.md")),
    ("arxiv", include_str!("../assets/skills/arxiv/SKILL.md")),
    ("auto-paper-improvement-loop", include_str!("../assets/skills/auto-paper-improvement-loop/SKILL.md")),
    ("auto-review-loop", include_str!("../assets/skills/auto-review-loop/SKILL.md")),
    ("check-gpu", include_str!("../assets/skills/check-gpu/SKILL.md")),
    ("citation-audit", include_str!("../assets/skills/citation-audit/SKILL.md")),
    ("deepxiv", include_str!("../assets/skills/deepxiv/SKILL.md")),
    ("experiment-audit", include_str!("../assets/skills/experiment-audit/SKILL.md")),
    ("experiment-bridge", include_str!("../assets/skills/experiment-bridge/SKILL.md")),
    ("experiment-plan", include_str!("../assets/skills/experiment-plan/SKILL.md")),
    ("idea-creator", include_str!("../assets/skills/idea-creator/SKILL.md")),
    ("idea-discovery", include_str!("../assets/skills/idea-discovery/SKILL.md")),
    ("meta-optimize", include_str!("../assets/skills/meta-optimize/SKILL.md")),
    ("monitor-experiment", include_str!("../assets/skills/monitor-experiment/SKILL.md")),
    ("novelty-check", include_str!("../assets/skills/novelty-check/SKILL.md")),
    ("paper-claim-audit", include_str!("../assets/skills/paper-claim-audit/SKILL.md")),
    ("paper-compile", include_str!("../assets/skills/paper-compile/SKILL.md")),
    ("paper-figure", include_str!("../assets/skills/paper-figure/SKILL.md")),
    ("paper-plan", include_str!("../assets/skills/paper-plan/SKILL.md")),
    ("paper-write", include_str!("../assets/skills/paper-write/SKILL.md")),
    ("paper-writing", include_str!("../assets/skills/paper-writing/SKILL.md")),
    ("proof-checker", include_str!("../assets/skills/proof-checker/SKILL.md")),
    ("rebuttal", include_str!("../assets/skills/rebuttal/SKILL.md")),
    ("research-lit", include_str!("../assets/skills/research-lit/SKILL.md")),
    ("research-pipeline", include_str!("../assets/skills/research-pipeline/SKILL.md")),
    ("research-review", include_str!("../assets/skills/research-review/SKILL.md")),
    ("research-wiki", include_str!("../assets/skills/research-wiki/SKILL.md")),
    ("result-to-claim", include_str!("../assets/skills/result-to-claim/SKILL.md")),
    ("run-experiment", include_str!("../assets/skills/run-experiment/SKILL.md")),
];

pub(crate) const SHARED_REFERENCES: [(&str, &str); 5] = [
    ("reviewer-independence", include_str!("../assets/references/reviewer-independence.md")),
    ("experiment-integrity", include_str!("../assets/references/experiment-integrity.md")),
    ("effort-contract", include_str!("../assets/references/effort-contract.md")),
    ("citation-discipline", include_str!("../assets/references/citation-discipline.md")),
    ("writing-principles", include_str!("../assets/references/writing-principles.md")),
];
