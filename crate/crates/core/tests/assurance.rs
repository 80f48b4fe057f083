use aris_core::assurance::citations::{recommend, AxisVerdict, Recommendation};
use aris_core::assurance::editing::{numerical_pass, terminology_pass, DEFAULT_TERM_GROUPS, PASS_NAMES};
use aris_core::assurance::{
    assemble_ledger, CandidateClaim, IntegrityCategory, IntegrityFinding, IntegrityReport, Level, Verdict, VerdictLine,
};
use proptest::prelude::*;

fn level() -> impl Strategy<Value = Level> {
    prop_oneof![Just(Level::Pass), Just(Level::Warn), Just(Level::Fail)]
}

fn verdict() -> impl Strategy<Value = Verdict> {
    prop_oneof![Just(Verdict::Supported), Just(Verdict::PartiallySupported), Just(Verdict::Invalidated)]
}

fn category() -> impl Strategy<Value = IntegrityCategory> {
    prop::sample::select(IntegrityCategory::ALL.to_vec())
}

fn findings() -> impl Strategy<Value = Vec<IntegrityFinding>> {
    prop::collection::vec(
        (category(), level()).prop_map(|(category, severity)| IntegrityFinding {
            category,
            severity,
            evidence: String::new(),
            files: vec![],
        }),
        0..8,
    )
}

proptest! {
    #[test]
    fn status_is_max_severity(f in findings()) {
        let want = if f.iter().any(|x| x.severity == Level::Fail) {
            Level::Fail
        } else if f.iter().any(|x| x.severity == Level::Warn) {
            Level::Warn
        } else {
            Level::Pass
        };
        let r = IntegrityReport::from_findings(f);
        prop_assert_eq!(r.integrity_status, want);
        prop_assert!(r.is_consistent());
    }

    #[test]
    fn failed_integrity_never_leaves_a_claim_supported(
        verdicts in prop::collection::vec(verdict(), 1..20),
        f in prop::option::of(findings()),
    ) {
        let claims: Vec<CandidateClaim> = (0..verdicts.len())
            .map(|i| CandidateClaim { claim_id: format!("c{i}"), statement: String::new(), evidence_refs: vec![], wiki_node: None })
            .collect();
        let lines: Vec<VerdictLine> = verdicts
            .iter()
            .enumerate()
            .map(|(i, v)| VerdictLine { claim_id: format!("c{i}"), verdict: *v, note: String::new() })
            .collect();
        let report = f.map(IntegrityReport::from_findings);
        let ledger = assemble_ledger(&claims, &lines, report.as_ref()).unwrap();
        prop_assert!(ledger.holds_hard_rule());
        for (c, v) in ledger.claims.iter().zip(&verdicts) {
            if c.integrity_status != Some(Level::Fail) {
                prop_assert_eq!(c.verdict, *v);
            }
        }
    }

    #[test]
    fn existence_failure_is_never_kept_or_fixed(m in any::<bool>(), c in any::<bool>(), r in any::<bool>()) {
        let v = |b: bool| if b { AxisVerdict::Pass } else { AxisVerdict::Fail };
        let got = recommend(AxisVerdict::Fail, v(m), v(c), r);
        prop_assert!(matches!(got, Recommendation::Replace | Recommendation::Remove));
    }
}

#[test]
fn pass_names_are_fixed() {
    assert_eq!(PASS_NAMES.len(), 5);
    assert_eq!(PASS_NAMES[0], "Clutter removal");
    assert_eq!(PASS_NAMES[4], "Numerical consistency");
}

#[test]
fn deterministic_passes_need_no_bridge() {
    let draft = "## Method\nWe select on the validation split.\n## Results\nThe dev set accuracy is 0.91.\n";
    let (entry, _) = terminology_pass(draft, DEFAULT_TERM_GROUPS);
    assert_eq!(entry.issues.len(), 1);
    assert_eq!(numerical_pass("No figures at all here.", None).checks, 0);
}
