mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use taletiles::difficulty::{count_solutions_fast, entropy_profile};
use taletiles::rules::{mutate, permutations, random_rule, MAX_CHILDREN};
use taletiles::{canonical_generic_set, Arrangement, RuleNode, Verdict};

use common::{random_arrangement, random_five, random_genome, rng};

fn children(rule: &RuleNode) -> &[RuleNode] {
    match rule {
        RuleNode::Composite(c) => c,
        _ => panic!("genomes are composites"),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn composite_verdict_is_max_of_children(seed in any::<u64>()) {
        let tiles = canonical_generic_set();
        let mut rng = rng(seed);
        let rule = random_genome(&tiles, &mut rng);
        let board = random_arrangement(&tiles, &mut rng);
        let merged = rule.evaluate(&tiles, &board).unwrap();
        for (slot, verdict) in &merged {
            let strongest = children(&rule)
                .iter()
                .map(|c| c.evaluate(&tiles, &board).unwrap().into_iter().find(|(s, _)| s == slot).unwrap().1)
                .max()
                .unwrap_or(Verdict::Ignore);
            prop_assert_eq!(*verdict, strongest);
        }
        let mut shuffled = children(&rule).to_vec();
        shuffled.shuffle(&mut rng);
        prop_assert_eq!(RuleNode::Composite(shuffled).evaluate(&tiles, &board).unwrap(), merged);
    }

    #[test]
    fn no_verdicts_for_empty_slots(seed in any::<u64>()) {
        let tiles = canonical_generic_set();
        let mut rng = rng(seed);
        let rule = random_genome(&tiles, &mut rng);
        let board = random_arrangement(&tiles, &mut rng);
        let slots: Vec<usize> = rule.evaluate(&tiles, &board).unwrap().into_iter().map(|(s, _)| s).collect();
        let occupied: Vec<usize> = board.occupied().map(|(s, _)| s).collect();
        prop_assert_eq!(slots, occupied);
    }

    #[test]
    fn order_free_rules_are_permutation_invariant(seed in any::<u64>()) {
        let tiles = canonical_generic_set();
        let mut rng = rng(seed);
        let rule = random_genome(&tiles, &mut rng);
        prop_assume!(!rule.has_adjacency());
        let five = random_five(&tiles, &mut rng);
        let expected = rule.is_valid_set(&tiles, five).unwrap();
        for p in permutations() {
            let board = Arrangement::full(p.map(|i| five[i]), &tiles).unwrap();
            prop_assert_eq!(rule.accepts(&tiles, &board).unwrap(), expected);
        }
    }

    #[test]
    fn adding_a_child_never_helps(seed in any::<u64>()) {
        let tiles = canonical_generic_set();
        let mut rng = rng(seed);
        let rule = random_genome(&tiles, &mut rng);
        prop_assume!(children(&rule).len() < MAX_CHILDREN);
        let mut more = children(&rule).to_vec();
        more.push(random_rule(tiles.schema(), tiles.tiles(), &mut rng));
        let more = RuleNode::Composite(more);
        for _ in 0..20 {
            let five = random_five(&tiles, &mut rng);
            if !rule.is_valid_set(&tiles, five).unwrap() {
                prop_assert!(!more.is_valid_set(&tiles, five).unwrap());
            }
        }
        let before = count_solutions_fast(&rule, &tiles).unwrap().solution_count;
        let after = count_solutions_fast(&more, &tiles).unwrap().solution_count;
        prop_assert!(after <= before, "{} -> {}", before, after);
    }
}

#[test]
fn generated_rules_always_valid() {
    let tiles = canonical_generic_set();
    let mut rng = rng(2);
    let mut rule = RuleNode::Composite(vec![random_rule(tiles.schema(), tiles.tiles(), &mut rng)]);
    for _ in 0..10_000 {
        let leaf = random_rule(tiles.schema(), tiles.tiles(), &mut rng);
        leaf.validate(&tiles).unwrap();
        rule = mutate(&rule, tiles.schema(), tiles.tiles(), &mut rng);
        rule.validate(&tiles).unwrap();
        assert!((1..=MAX_CHILDREN).contains(&children(&rule).len()));
        let mutated_leaf = mutate(&leaf, tiles.schema(), tiles.tiles(), &mut rng);
        mutated_leaf.validate(&tiles).unwrap();
    }
}

#[test]
fn entropy_counts_never_grow_when_a_child_is_added() {
    let tiles = canonical_generic_set();
    let mut rng = rng(77);
    for case in 0..1000 {
        let rule = random_genome(&tiles, &mut rng);
        let board = random_arrangement(&tiles, &mut rng);
        let mut more = children(&rule).to_vec();
        more.push(random_rule(tiles.schema(), tiles.tiles(), &mut rng));
        let before = entropy_profile(&rule, &board, &tiles).unwrap();
        let after = entropy_profile(&RuleNode::Composite(more), &board, &tiles).unwrap();
        for slot in 0..5 {
            assert!(
                after.per_slot_counts[slot] <= before.per_slot_counts[slot],
                "case {case}: {:?} -> {:?}",
                before.per_slot_counts,
                after.per_slot_counts
            );
        }
    }
}

#[test]
fn rule_json_round_trips() {
    let tiles = canonical_generic_set();
    let mut rng = rng(31);
    for _ in 0..500 {
        let rule = random_genome(&tiles, &mut rng);
        let text = rule.to_json();
        let back = RuleNode::from_json(&text).unwrap();
        assert_eq!(back, rule);
        assert_eq!(back.to_json(), text);
    }
}
