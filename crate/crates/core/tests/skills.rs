use std::path::PathBuf;

use aris_core::skills::{parse_skill, SkillRegistry, Tier};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn skill(name: &str, tier: Tier) -> aris_core::skills::SkillSpec {
    let text = format!("---\nname: {name}\ndescription: {name} at {tier}\ntriggers: [{name}]\n---\nbody {tier}\n");
    parse_skill(&text, tier, PathBuf::from(format!("{tier}/{name}/SKILL.md"))).unwrap()
}

proptest! {
    #[test]
    fn highest_tier_wins_in_any_order(
        layout in prop::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 1..12),
        seed in any::<u64>(),
    ) {
        let mut specs = Vec::new();
        let mut expected = Vec::new();
        for (i, (b, p, u)) in layout.iter().enumerate() {
            let name = format!("skill-{i}");
            let present: Vec<Tier> = [(b, Tier::Bundled), (p, Tier::Project), (u, Tier::User)]
                .into_iter()
                .filter(|(on, _)| **on)
                .map(|(_, t)| t)
                .collect();
            for t in &present {
                specs.push(skill(&name, *t));
            }
            expected.push((name, present.into_iter().max()));
        }
        let reference = SkillRegistry::from_specs(specs.clone()).unwrap();
        specs.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let shuffled = SkillRegistry::from_specs(specs).unwrap();
        for (name, tier) in expected {
            match tier {
                Some(t) => {
                    prop_assert_eq!(reference.resolve(&name).unwrap().tier, t);
                    prop_assert_eq!(reference.resolve(&name).unwrap(), shuffled.resolve(&name).unwrap());
                }
                None => prop_assert!(shuffled.resolve(&name).is_err()),
            }
        }
    }
}
