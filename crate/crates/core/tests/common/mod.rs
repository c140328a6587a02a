#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use taletiles::rules::{mutate, random_rule};
use taletiles::{Arrangement, RuleNode, TileSet, SLOTS};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A genome like the ones the GA produces: a composite of 1..=5 leaves,
/// sometimes mutated a few times.
pub fn random_genome(tiles: &TileSet, rng: &mut ChaCha8Rng) -> RuleNode {
    let n = rng.random_range(1..=5);
    let mut rule = RuleNode::Composite((0..n).map(|_| random_rule(tiles.schema(), tiles.tiles(), rng)).collect());
    for _ in 0..rng.random_range(0..3) {
        rule = mutate(&rule, tiles.schema(), tiles.tiles(), rng);
    }
    rule
}

/// Random partial board with 0..=5 distinct tiles in random slots.
pub fn random_arrangement(tiles: &TileSet, rng: &mut ChaCha8Rng) -> Arrangement {
    let mut ids: Vec<usize> = (0..tiles.len()).collect();
    ids.shuffle(rng);
    let mut slots = [None; SLOTS];
    for (slot, id) in slots.iter_mut().zip(ids) {
        if rng.random_bool(0.7) {
            *slot = Some(id);
        }
    }
    Arrangement::new(slots, tiles).unwrap()
}

pub fn random_five(tiles: &TileSet, rng: &mut ChaCha8Rng) -> [usize; SLOTS] {
    let mut ids: Vec<usize> = (0..tiles.len()).collect();
    ids.shuffle(rng);
    ids[..SLOTS].try_into().unwrap()
}
