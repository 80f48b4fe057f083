use std::collections::BTreeMap;

use aris_core::artifacts::{ArtifactStore, Checkpoint, FaultPoint};
use aris_core::fsutil::sha256_hex;
use proptest::prelude::*;

fn assert_consistent(store: &ArtifactStore) {
    let mut by_name: BTreeMap<String, Vec<u64>> = BTreeMap::new();
    for r in store.records().unwrap() {
        let bytes = std::fs::read(store.project_root().join(&r.path)).unwrap();
        assert_eq!(sha256_hex(&bytes), r.content_hash, "{} v{}", r.logical_name, r.version);
        by_name.entry(r.logical_name).or_default().push(r.version);
    }
    for (name, versions) in by_name {
        let expected: Vec<u64> = (1..=versions.len() as u64).collect();
        assert_eq!(versions, expected, "{name}");
    }
}

#[test]
fn crash_at_every_fault_point_leaves_index_consistent() {
    for fault in [FaultPoint::AfterTempWrite, FaultPoint::AfterRename] {
        let dir = tempfile::tempdir().unwrap();
        let mut store = ArtifactStore::new(dir.path());
        store.put_artifact("IDEA_REPORT", b"one", "t").unwrap();
        store.fault = Some(fault);
        assert!(store.put_artifact("IDEA_REPORT", b"two", "t").is_err());
        assert_consistent(&store);
        assert_eq!(store.get_text("IDEA_REPORT", None).unwrap(), "one");

        store.fault = None;
        let rec = store.put_artifact("IDEA_REPORT", b"three", "t").unwrap();
        assert_eq!(rec.version, 2);
        assert_consistent(&store);
        assert_eq!(store.get_text("IDEA_REPORT", Some(2)).unwrap(), "three");
    }
}

#[test]
fn resume_forks_without_touching_the_source() {
    let dir = tempfile::tempdir().unwrap();
    let store = ArtifactStore::new(dir.path());
    store.put_artifact("DRAFT", b"d1", "paper-write").unwrap();
    let cp = Checkpoint {
        run_id: "run-1".into(),
        workflow: "paper_writing".into(),
        step_index: 3,
        artifact_versions: BTreeMap::from([("DRAFT".to_string(), 1)]),
        round_state: serde_json::Value::Null,
        parent_run: None,
    };
    store.save_checkpoint(&cp).unwrap();
    let before = std::fs::read(store.checkpoint_dir().join("run-1.json")).unwrap();
    let (fork, loaded) = store.resume("run-1").unwrap();
    assert_ne!(fork, "run-1");
    assert_eq!(loaded, cp);
    store.put_artifact("DRAFT", b"d2", "paper-write").unwrap();
    assert_eq!(store.view(loaded.artifact_versions).get("DRAFT").unwrap().0, b"d1");
    assert_eq!(std::fs::read(store.checkpoint_dir().join("run-1.json")).unwrap(), before);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn versions_stay_gap_free(
        ops in prop::collection::vec((0usize..3, prop::collection::vec(any::<u8>(), 0..8), 0u8..4), 1..30)
    ) {
        let names = ["LIT_SURVEY", "DRAFT", "CLAIM_LEDGER"];
        let dir = tempfile::tempdir().unwrap();
        let mut store = ArtifactStore::new(dir.path());
        let mut last: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
        for (which, content, crash) in ops {
            store.fault = match crash {
                0 => Some(FaultPoint::AfterTempWrite),
                1 => Some(FaultPoint::AfterRename),
                _ => None,
            };
            if store.put_artifact(names[which], &content, "p").is_ok() {
                last.insert(names[which], content);
            }
        }
        assert_consistent(&store);
        for (name, content) in last {
            prop_assert_eq!(store.get_artifact(name, None).unwrap().0, content);
        }
    }
}
