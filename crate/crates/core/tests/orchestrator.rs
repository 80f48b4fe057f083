use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use aris_core::artifacts::ArtifactStore;
use aris_core::bridges::{Bridges, MockBridge, Role};
use aris_core::config::{ArisConfig, MOCK_REVIEWER};
use aris_core::fsutil::atomic_write;
use aris_core::orchestrator::{
    apply_effort, install_mock_scripts, Approval, ApprovalRequest, Directive, EffortPreset, Engine, GateKind, Param,
    ParamTag, Preset, RunRequest, RunStatus, RunSummary, StepStatus,
};
use aris_core::review::Decision;
use proptest::prelude::*;
use serde_json::{json, Value};

const RESULTS: &str = "{\"accuracy\": 0.8493, \"f1\": 0.861, \"loss\": 0.412}\n";
const DRAFT: &str = "# Draft\n\nWe report an accuracy of 84.9%.\n";
const REVIEWS: &str = "## Reviewer 1\n- The baseline is weak.\n- Only one dataset.\n\n## Reviewer 2\n- Missing ablation.\n";

fn mock_engine(root: &Path) -> Engine {
    install_mock_scripts(root, false).unwrap();
    let cfg = ArisConfig::mock_only();
    atomic_write(&ArisConfig::path(root), cfg.to_toml().as_bytes()).unwrap();
    let bridges = Bridges::from_config(&cfg, root, true).unwrap();
    Engine::new(root, cfg, bridges).unwrap()
}

fn request(workflow: &str, inputs: &[(&str, &str)]) -> RunRequest {
    RunRequest {
        workflow: workflow.into(),
        inputs: inputs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        run_id: Some("r1".into()),
        ..Default::default()
    }
}

fn hashes(s: &RunSummary) -> BTreeMap<String, String> {
    s.artifacts.iter().map(|(k, v)| (k.clone(), v.content_hash.clone())).collect()
}

fn paper_inputs() -> Vec<(&'static str, &'static str)> {
    vec![("NARRATIVE_REPORT", "Sparse routing helps small models.\n"), ("RESULTS", RESULTS)]
}

#[test]
fn pipeline_completes_on_mocks() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    let s = e.run(request("research_pipeline", &[("RESEARCH_DIRECTION", "sparse routing")])).unwrap();
    assert_eq!(s.status, RunStatus::Completed);
    assert!(s.steps.iter().all(|st| st.status == StepStatus::Done));
    assert_eq!(s.steps.len(), 21);
    assert!(dir.path().join("figures/pipeline.svg").is_file());
    assert_eq!(s, RunSummary::load(dir.path(), "r1").unwrap());
    for name in ["IDEA_REPORT", "RESULTS", "EXPERIMENT_AUDIT", "CLAIM_LEDGER", "PAPER_CLAIM_AUDIT", "COMPILED"] {
        assert!(s.artifacts.contains_key(name), "{name} missing");
    }
    let audit: Value =
        serde_json::from_str(&ArtifactStore::new(dir.path()).get_text("PAPER_CLAIM_AUDIT", None).unwrap()).unwrap();
    let statuses: Vec<&str> = audit["entries"].as_array().unwrap().iter().map(|e| e["status"].as_str().unwrap()).collect();
    assert_eq!(statuses, ["rounding_ok", "exact_match", "exact_match", "exact_match"]);
    assert!(dir.path().join(".aris/runs/r1/cost.jsonl").is_file());
}

#[test]
fn identical_inputs_give_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = mock_engine(a.path()).run(request("paper_writing", &paper_inputs())).unwrap();
    let sb = mock_engine(b.path()).run(request("paper_writing", &paper_inputs())).unwrap();
    assert_eq!(sa.status, RunStatus::Completed);
    assert_eq!(hashes(&sa), hashes(&sb));
}

#[test]
fn resume_after_every_step_matches_an_uninterrupted_run() {
    let base = tempfile::tempdir().unwrap();
    let want = mock_engine(base.path()).run(request("paper_writing", &paper_inputs())).unwrap();
    assert_eq!(want.status, RunStatus::Completed);
    for k in 1..=7 {
        let dir = tempfile::tempdir().unwrap();
        let mut e = mock_engine(dir.path());
        e.stop_after = Some(k);
        let cut = e.run(request("paper_writing", &paper_inputs())).unwrap();
        assert_eq!(cut.status, RunStatus::Interrupted);
        assert_eq!(cut.steps.len(), k);
        assert!(!dir.path().join(".aris/runs/r1/summary.json").exists());

        let mut fresh = mock_engine(dir.path());
        let got = fresh.resume("r1").unwrap();
        assert_eq!(got.status, RunStatus::Completed, "stop after {k}");
        assert_eq!(got.parent_run.as_deref(), Some("r1"));
        assert_eq!(got.steps.len(), 7);
        assert_eq!(hashes(&got), hashes(&want), "stop after {k}");
    }
}

#[test]
fn review_loop_accepts_in_round_four() {
    let dir = tempfile::tempdir().unwrap();
    let s = mock_engine(dir.path()).run(request("auto_review_loop", &[("DRAFT", DRAFT)])).unwrap();
    assert_eq!(s.status, RunStatus::Completed);
    let r = &s.reviews[0];
    assert_eq!(r.decision, Decision::Accept);
    assert_eq!(r.scores, [5.0, 6.0, 7.0, 7.5]);
    let summary = ArtifactStore::new(dir.path()).get_text("REVIEW_SUMMARY", None).unwrap();
    assert!(summary.contains("Decision: accept"));
    assert!(dir.path().join(".aris/runs/r1/review_log.jsonl").is_file());
}

#[test]
fn fresh_rounds_send_only_system_and_user() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    let reviewer = Arc::new(MockBridge::from_file(MOCK_REVIEWER, "gpt", &dir.path().join(".aris/mock/reviewer.json")).unwrap());
    e.bridges.insert(reviewer.clone());
    let s = e.run(request("auto_review_loop", &[("DRAFT", DRAFT)])).unwrap();
    let review_calls: Vec<_> = reviewer
        .transcripts()
        .into_iter()
        .filter(|t| t.last().is_some_and(|m| m.content.contains("Task: review/auto-review-loop")))
        .collect();
    assert_eq!(review_calls.len(), 4);
    for t in &review_calls {
        let roles: Vec<Role> = t.iter().map(|m| m.role).collect();
        assert_eq!(roles, [Role::System, Role::User]);
    }
    let ids = &s.reviews[0].thread_ids;
    assert_eq!(ids.len(), 4);
    let distinct: std::collections::BTreeSet<_> = ids.iter().collect();
    assert_eq!(distinct.len(), 4);
}

#[test]
fn human_checkpoint_without_an_answer_is_pending() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    let mut req = request("auto_review_loop", &[("DRAFT", DRAFT)]);
    req.directives = vec![Directive::HumanCheckpoint(true)];
    let s = e.run(req).unwrap();
    assert_eq!(s.status, RunStatus::PendingApproval);
    assert_eq!(s.status.exit_code(), 3);
    assert_eq!(s.step_count(StepStatus::SkippedByGate), 2);
    assert_eq!(s.approvals.len(), 1);
    assert_eq!(s.approvals[0].kind, GateKind::HumanCheckpoint);
}

#[test]
fn declined_gate_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    e.approver = Box::new(|r: &ApprovalRequest| if r.step == 1 { Approval::Approved } else { Approval::Declined });
    let mut req = request("auto_review_loop", &[("DRAFT", DRAFT)]);
    req.directives = vec![Directive::HumanCheckpoint(true)];
    let s = e.run(req).unwrap();
    assert_eq!(s.status, RunStatus::GateDeclined);
    assert_eq!(s.status.exit_code(), 2);
    assert_eq!(s.steps[0].status, StepStatus::Done);
    assert_eq!(s.steps[1].status, StepStatus::SkippedByGate);
}

#[test]
fn auto_write_off_skips_the_writing_tail() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    let mut req = request("research_pipeline", &[("RESEARCH_DIRECTION", "sparse routing")]);
    req.directives = vec![Directive::AutoWrite(false)];
    let s = e.run(req).unwrap();
    assert_eq!(s.status, RunStatus::Completed);
    assert_eq!(s.step_count(StepStatus::SkippedByGate), 7);
    assert!(!s.artifacts.contains_key("COMPILED"));
}

#[test]
fn effort_directive_scales_loop_budget_only() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    let mut req = request("auto_review_loop", &[("DRAFT", DRAFT)]);
    req.directives = vec![Directive::Effort(Preset::Lite)];
    let s = e.run(req).unwrap();
    assert_eq!(s.effort, Preset::Lite);
    assert_eq!(s.reviewer_reasoning, "xhigh");
    // ceil(4 x 0.4) = 2 rounds, below the accepting round
    assert_eq!(s.params["max_rounds"], json!(2));
    assert_eq!(s.params["score_threshold"], json!(6.0));
    assert_eq!(s.reviews[0].decision, Decision::StopMaxRounds);
}

#[test]
fn rebuttal_passes_all_gates_on_mocks() {
    let dir = tempfile::tempdir().unwrap();
    let s = mock_engine(dir.path()).run(request("rebuttal", &[("DRAFT", DRAFT), ("REVIEWS", REVIEWS)])).unwrap();
    assert_eq!(s.status, RunStatus::Completed);
    let rebuttal = ArtifactStore::new(dir.path()).get_text("REBUTTAL", None).unwrap();
    for id in ["R1-1", "R1-2", "R2-1"] {
        assert!(rebuttal.contains(id));
    }
}

#[test]
fn unsupported_rebuttal_statement_fails_the_step() {
    let dir = tempfile::tempdir().unwrap();
    let mut e = mock_engine(dir.path());
    let path = dir.path().join(".aris/mock/reviewer.json");
    let mut script: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    for rule in script["rules"].as_array_mut().unwrap() {
        if rule["contains"] == json!(["Task: rebuttal/verify"]) {
            rule["replies"] = json!(["```unsupported\n[\"We added three datasets.\"]\n```"]);
        }
    }
    std::fs::write(&path, serde_json::to_string(&script).unwrap()).unwrap();
    e.bridges = Bridges::from_config(&e.config, dir.path(), true).unwrap();
    let s = e.run(request("rebuttal", &[("DRAFT", DRAFT), ("REVIEWS", REVIEWS)])).unwrap();
    assert_eq!(s.status, RunStatus::StepFailed);
    assert_eq!(s.status.exit_code(), 4);
    assert!(s.steps[0].detail.contains("evidence-check"), "{}", s.steps[0].detail);
    assert!(!s.artifacts.contains_key("REBUTTAL"));
}

#[test]
fn empty_reviews_fail_the_rebuttal() {
    let dir = tempfile::tempdir().unwrap();
    let s = mock_engine(dir.path()).run(request("rebuttal", &[("DRAFT", DRAFT), ("REVIEWS", "nothing here\n")])).unwrap();
    assert_eq!(s.status, RunStatus::StepFailed);
}

#[test]
fn missing_required_input_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(mock_engine(dir.path()).run(request("auto_review_loop", &[])).is_err());
}

fn tag() -> impl Strategy<Value = ParamTag> {
    prop_oneof![Just(ParamTag::Breadth), Just(ParamTag::Depth), Just(ParamTag::Iteration), Just(ParamTag::Invariant)]
}

proptest! {
    #[test]
    fn effort_scales_tagged_counts_and_keeps_invariants(
        params in prop::collection::btree_map("[a-z]{1,8}", (tag(), 0u64..100_000), 0..8),
        preset in prop::sample::select(Preset::ALL.to_vec()),
        beast in 1.0f64..20.0,
    ) {
        let base: BTreeMap<String, Param> = params
            .iter()
            .map(|(k, (t, v))| (k.clone(), Param { tag: *t, value: json!(v) }))
            .collect();
        let p = EffortPreset::new(preset, beast);
        let factor = match preset {
            Preset::Lite => 0.4,
            Preset::Balanced => 1.0,
            Preset::Max => 2.5,
            Preset::Beast => (beast * 1000.0).round().min(8000.0) / 1000.0,
        };
        let out = apply_effort(&p, &base);
        prop_assert_eq!(out.len(), base.len());
        for (k, (t, v)) in &params {
            let got = out[k].value.as_u64().unwrap();
            if *t == ParamTag::Invariant {
                prop_assert_eq!(got, *v);
            } else {
                let want = ((*v as f64) * factor - 1e-9).ceil().max(1.0) as u64;
                prop_assert_eq!(got, want);
            }
        }
        prop_assert_eq!(p.reviewer_reasoning(), "xhigh");
    }
}
