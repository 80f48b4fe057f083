use aris_figure::validate_str;

fn codes(doc: &str) -> Vec<&'static str> {
    let mut v: Vec<&'static str> = validate_str(doc)
        .expect_err("document should be rejected")
        .iter()
        .map(|e| e.code())
        .collect();
    v.sort_unstable();
    v
}

#[test]
fn rejects_with_expected_codes() {
    let cases: &[(&str, &[&str])] = &[
        ("{not json", &["NotJson"]),
        (r#"{"canvas": {"width": 10, "height": 10}, "nodes": []}"#, &["MissingField"]),
        (r#"{"spec_version": 9, "canvas": {"width": 10, "height": 10}, "nodes": []}"#, &["UnsupportedVersion"]),
        (r#"{"spec_version": 1, "canvas": {"width": 0, "height": 10}, "nodes": []}"#, &["BadCanvas"]),
        (
            r#"{"spec_version": 1, "canvas": {"width": 10, "height": 10},
                "nodes": [{"id": "a", "shape": "hexagon", "center": [1, 1], "size": {}}],
                "edges": [{"src": "a", "dst": "zz"}]}"#,
            &["DanglingEdge", "UnknownShape"],
        ),
        (
            r#"{"spec_version": 1, "canvas": {"width": 10, "height": 10},
                "nodes": [{"id": "a", "shape": "circle", "center": [1, 1], "size": {"radius": -1}},
                          {"id": "a", "shape": "circle", "center": [5, 5], "size": {"radius": 1}}]}"#,
            &["DuplicateNodeId", "NonPositiveSize"],
        ),
        (
            r#"{"spec_version": 1, "canvas": {"width": 10, "height": 10},
                "nodes": [{"id": "a", "shape": "circle", "center": [1, 1], "size": {"radius": 1}},
                          {"id": "b", "shape": "circle", "center": [1, 1], "size": {"radius": 1}}],
                "edges": [{"src": "a", "dst": "b"}, {"src": "a", "dst": "a", "kind": "straight"},
                          {"src": "a", "dst": "b", "kind": "zigzag"}]}"#,
            &["BadEdgeKind", "CoincidentEndpoints", "SelfLoopMismatch"],
        ),
    ];
    for (doc, expected) in cases {
        assert_eq!(codes(doc), *expected, "{doc}");
    }
}

#[test]
fn golden_specs_all_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|x| x == "json") {
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(validate_str(&text).is_ok(), "{}", path.display());
        }
    }
}
