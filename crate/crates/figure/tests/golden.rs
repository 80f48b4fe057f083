//! Rendered output for the committed corpus must match the frozen SVG files
//! byte for byte. Set `UPDATE_GOLDEN=1` to rewrite them after an intended
//! renderer change.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden")
}

fn corpus() -> Vec<PathBuf> {
    let mut specs: Vec<PathBuf> = fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    specs.sort();
    specs
}

fn render_file(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let spec = aris_figure::validate_str(&text)
        .unwrap_or_else(|errs| panic!("{}: {errs:?}", path.display()));
    aris_figure::render(&spec)
}

#[test]
fn corpus_has_twelve_specs() {
    assert_eq!(corpus().len(), 12);
}

#[test]
fn renders_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut diffs = Vec::new();
    for spec in corpus() {
        let svg = render_file(&spec);
        let golden = spec.with_extension("svg");
        if update {
            fs::write(&golden, &svg).unwrap();
            continue;
        }
        let expected = fs::read_to_string(&golden)
            .unwrap_or_else(|_| panic!("missing golden {}", golden.display()));
        if expected != svg {
            diffs.push(golden.file_name().unwrap().to_string_lossy().into_owned());
        }
    }
    assert!(diffs.is_empty(), "golden mismatch: {diffs:?}");
}

#[test]
fn three_consecutive_runs_are_byte_identical() {
    for spec in corpus() {
        let digests: Vec<String> = (0..3)
            .map(|_| hex::encode(Sha256::digest(render_file(&spec).as_bytes())))
            .collect();
        assert!(digests.windows(2).all(|w| w[0] == w[1]), "{}", spec.display());
    }
}

#[test]
fn canonical_json_round_trip_renders_identically() {
    for spec in corpus() {
        let text = fs::read_to_string(&spec).unwrap();
        let parsed = aris_figure::validate_str(&text).unwrap();
        let again = aris_figure::validate_spec(&parsed.to_canonical_json()).unwrap();
        assert_eq!(aris_figure::render(&parsed), aris_figure::render(&again));
    }
}

#[test]
fn shape_and_label_groups_match_node_count() {
    for spec in corpus() {
        let text = fs::read_to_string(&spec).unwrap();
        let parsed = aris_figure::validate_str(&text).unwrap();
        let svg = aris_figure::render(&parsed);
        assert_eq!(svg.matches("<g class=\"node\"").count(), parsed.nodes.len());
        assert_eq!(svg.matches("<g class=\"label\"").count(), parsed.nodes.len());
        assert_eq!(svg.matches("<path class=\"edge ").count(), parsed.edges.len());
    }
}
