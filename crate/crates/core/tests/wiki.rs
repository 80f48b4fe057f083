use std::collections::BTreeSet;

use aris_core::wiki::{render_pack_prefix, EntityType, NewNode, Wiki, QUERY_PACK_CAP};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STATUSES: [&[&str]; 4] = [
    &["ingested"],
    &["proposed", "active", "rejected"],
    &["planned", "running", "done", "failed"],
    &["untested", "supported", "partially_supported", "invalidated"],
];

fn random_wiki(rng: &mut ChaCha8Rng, n: usize) -> Wiki {
    let mut w = Wiki::in_memory();
    let mut ids = Vec::new();
    for i in 0..n {
        let k = rng.gen_range(0..4);
        let title_len = rng.gen_range(0..60);
        let title: String = (0..title_len)
            .map(|_| *[ 'a', 'b', ' ', 'é', '界', '-', '\n'].get(rng.gen_range(0..7)).unwrap())
            .collect();
        let status = STATUSES[k][rng.gen_range(0..STATUSES[k].len())];
        let id = w
            .add_node(NewNode::new(EntityType::ALL[k], format!("n{i} {title}")).status(status))
            .unwrap();
        ids.push(id);
    }
    let relations = ["extends", "contradicts", "addresses_gap", "inspired_by", "tested_by", "supports", "invalidates", "supersedes"];
    for _ in 0..n {
        let a = &ids[rng.gen_range(0..ids.len())];
        let b = &ids[rng.gen_range(0..ids.len())];
        let _ = w.add_edge(a, b, relations[rng.gen_range(0..relations.len())]);
    }
    for _ in 0..n / 10 {
        let _ = w.tombstone(&ids[rng.gen_range(0..ids.len())].clone());
    }
    w
}

fn brute_banlist(w: &Wiki) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for n in w.nodes() {
        if n.entity_type != EntityType::Idea {
            continue;
        }
        let rejected = n.status == "rejected";
        let invalidated = w.edges().iter().any(|e| {
            e.dst == n.node_id
                && e.relation.as_str() == "invalidates"
                && w.node(&e.src).unwrap().entity_type == EntityType::Claim
        });
        if rejected || invalidated {
            out.insert(n.node_id.clone());
        }
    }
    out
}

#[test]
fn fuzzed_packs_respect_budget_and_banlist() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for size in [0, 1, 5, 40, 200, 1000] {
        let w = random_wiki(&mut rng, size);
        let pack = w.build_query_pack();
        assert!(pack.char_count <= QUERY_PACK_CAP, "size {size}: {}", pack.char_count);
        assert_eq!(pack.char_count, pack.text.chars().count());
        assert_eq!(w.banlist(), brute_banlist(&w));

        // the kept prefix is the longest one that fits
        let entries = w.pack_entries();
        let keep = entries.len() - pack.omitted;
        assert_eq!(render_pack_prefix(&entries, keep), pack.text);
        if keep < entries.len() {
            assert!(render_pack_prefix(&entries, keep + 1).chars().count() > QUERY_PACK_CAP);
        }
        for e in &entries[..keep] {
            if e.section == aris_core::wiki::Section::RejectedIdeas {
                assert!(pack.sections.rejected_ideas.contains(&e.node_id));
            }
        }
        for id in &pack.sections.rejected_ideas {
            assert!(w.banlist().contains(id));
        }
    }
}

#[test]
fn query_pack_written_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut w = Wiki::open(dir.path()).unwrap();
    w.add_node(NewNode::new(EntityType::Idea, "bad idea").status("rejected")).unwrap();
    let pack = w.write_query_pack().unwrap();
    let on_disk = std::fs::read_to_string(dir.path().join(".aris/wiki/query_pack.md")).unwrap();
    assert_eq!(on_disk, pack.text);
}
