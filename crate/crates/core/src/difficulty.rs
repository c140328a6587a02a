//! Difficulty measures.
//!
//! Difficulty is the number of unordered five-tile sets a rule leaves valid.
//! [`count_solutions_bruteforce`] walks every subset through the ordinary
//! evaluation path and is kept as the oracle; [`count_solutions_fast`] compiles
//! the rule into tile bitmasks and must agree with it exactly.

use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{Arrangement, Condition, RuleError, RuleNode, Verdict, SLOTS};
use crate::tiles::{TileId, TileSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DifficultyError {
    #[error("need at least {SLOTS} tiles to fill the board, got {0}")]
    TooFewTiles(usize),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// `n choose k`, exact for every tile-set size we accept.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DifficultyReport {
    pub solution_count: u64,
    pub total_sets: u64,
}

impl DifficultyReport {
    /// `1 - |count - target| / total_sets`, clamped to `[0, 1]`.
    pub fn accuracy_vs(&self, target: u64) -> f64 {
        accuracy(self.solution_count, target, self.total_sets)
    }
}

pub fn accuracy(achieved: u64, target: u64, total_sets: u64) -> f64 {
    if total_sets == 0 {
        return if achieved == target { 1.0 } else { 0.0 };
    }
    (1.0 - achieved.abs_diff(target) as f64 / total_sets as f64).clamp(0.0, 1.0)
}

fn check(rule: &RuleNode, tiles: &TileSet) -> Result<(), DifficultyError> {
    if tiles.len() < SLOTS {
        return Err(DifficultyError::TooFewTiles(tiles.len()));
    }
    rule.check_binding(tiles)?;
    Ok(())
}

/// Exhaustive count: every subset, checked through [`RuleNode::is_valid_set`]
/// semantics (all 120 orderings when the rule has an adjacency leaf).
pub fn count_solutions_bruteforce(rule: &RuleNode, tiles: &TileSet) -> Result<DifficultyReport, DifficultyError> {
    check(rule, tiles)?;
    let n = tiles.len();
    let ordered = rule.has_adjacency();
    let solution_count = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut count = 0u64;
            for b in a + 1..n {
                for c in b + 1..n {
                    for d in c + 1..n {
                        for e in d + 1..n {
                            if rule.is_valid_set_unchecked(tiles, [a, b, c, d, e], ordered) {
                                count += 1;
                            }
                        }
                    }
                }
            }
            count
        })
        .sum();
    Ok(DifficultyReport { solution_count, total_sets: binomial(n as u64, SLOTS as u64) })
}

/// A rule flattened into tile bitmasks.
struct CompiledRule {
    allowed: u64,
    /// Per match-property leaf: the value class of every tile.
    classes: Vec<Vec<u8>>,
    /// `(tiles matching, at most this many)`.
    limits: Vec<(u64, u32)>,
    /// Per tile, the tiles it may not sit next to. Empty when no adjacency leaf.
    conflicts: Vec<u64>,
}

fn mask_of(condition: &Condition, tiles: &TileSet) -> u64 {
    tiles.tiles().iter().filter(|t| condition.matches(t)).fold(0, |m, t| m | 1u64 << t.id)
}

impl CompiledRule {
    fn new(rule: &RuleNode, tiles: &TileSet) -> Self {
        let n = tiles.len();
        let all = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut compiled =
            CompiledRule { allowed: all, classes: Vec::new(), limits: Vec::new(), conflicts: Vec::new() };
        for leaf in rule.leaves() {
            match leaf {
                RuleNode::ExcludeWhere(c) => compiled.allowed &= !mask_of(c, tiles),
                RuleNode::ExclusiveWhere(c) => compiled.allowed &= mask_of(c, tiles),
                RuleNode::MatchProperty(p) => {
                    let values = &tiles.schema()[p];
                    let class = tiles
                        .tiles()
                        .iter()
                        .map(|t| values.iter().position(|v| Some(v.as_str()) == t.value(p)).unwrap_or(0) as u8)
                        .collect();
                    compiled.classes.push(class);
                }
                RuleNode::CountLimit { number, condition } => {
                    compiled.limits.push((mask_of(condition, tiles), u32::from(*number)));
                }
                RuleNode::NotAdjacent { first, second } => {
                    if compiled.conflicts.is_empty() {
                        compiled.conflicts = vec![0; n];
                    }
                    let (a, b) = (mask_of(first, tiles), mask_of(second, tiles));
                    for t in 0..n {
                        if a >> t & 1 == 1 {
                            compiled.conflicts[t] |= b;
                        }
                        if b >> t & 1 == 1 {
                            compiled.conflicts[t] |= a;
                        }
                    }
                }
                RuleNode::Composite(_) => unreachable!("leaves() never yields composites"),
            }
        }
        compiled
    }

    fn count(&self) -> u64 {
        if self.classes.is_empty() && self.limits.is_empty() && self.conflicts.is_empty() {
            return binomial(u64::from(self.allowed.count_ones()), SLOTS as u64);
        }
        let candidates: Vec<TileId> = (0..64).filter(|t| self.allowed >> t & 1 == 1).collect();
        let mut chosen = [0usize; SLOTS];
        self.extend(&candidates, 0, 0, &mut chosen)
    }

    /// Counts completions of `chosen[..depth]` using candidates from `start`.
    fn extend(&self, candidates: &[TileId], start: usize, depth: usize, chosen: &mut [TileId; SLOTS]) -> u64 {
        if depth == SLOTS {
            return u64::from(self.arrangeable(chosen));
        }
        let mask: u64 = chosen[..depth].iter().fold(0, |m, t| m | 1u64 << t);
        let mut total = 0;
        // leave room for the remaining picks
        for i in start..=candidates.len().saturating_sub(SLOTS - depth) {
            let Some(&tile) = candidates.get(i) else { break };
            if depth > 0 && self.classes.iter().any(|class| class[tile] != class[chosen[0]]) {
                continue;
            }
            let with = mask | 1u64 << tile;
            if self.limits.iter().any(|(m, n)| (with & m).count_ones() > *n) {
                continue;
            }
            chosen[depth] = tile;
            total += self.extend(candidates, i + 1, depth + 1, chosen);
        }
        total
    }

    fn arrangeable(&self, chosen: &[TileId; SLOTS]) -> bool {
        if self.conflicts.is_empty() {
            return true;
        }
        let mut edges = 0usize;
        for (bit, (a, b)) in PAIRS.iter().enumerate() {
            if self.conflicts[chosen[*a]] >> chosen[*b] & 1 == 1 {
                edges |= 1 << bit;
            }
        }
        path_table()[edges]
    }
}

/// The ten unordered position pairs of a five-tile set; bit `k` of a conflict
/// mask refers to `PAIRS[k]`.
const PAIRS: [(usize, usize); 10] = [(0, 1), (0, 2), (0, 3), (0, 4), (1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];

/// For each of the 1024 conflict graphs on five tiles: can the tiles be lined
/// up so that no two neighbours conflict?
fn path_table() -> &'static [bool; 1024] {
    static TABLE: OnceLock<[bool; 1024]> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut pair_bit = [[0usize; SLOTS]; SLOTS];
        for (bit, (a, b)) in PAIRS.iter().enumerate() {
            pair_bit[*a][*b] = bit;
            pair_bit[*b][*a] = bit;
        }
        let mut table = [false; 1024];
        for (edges, slot) in table.iter_mut().enumerate() {
            *slot = crate::rules::permutations()
                .iter()
                .any(|p| p.windows(2).all(|w| edges >> pair_bit[w[0]][w[1]] & 1 == 0));
        }
        table
    })
}

/// Exact solution count via bitmask enumeration. Always equal to
/// [`count_solutions_bruteforce`].
pub fn count_solutions_fast(rule: &RuleNode, tiles: &TileSet) -> Result<DifficultyReport, DifficultyError> {
    check(rule, tiles)?;
    Ok(DifficultyReport {
        solution_count: CompiledRule::new(rule, tiles).count(),
        total_sets: binomial(tiles.len() as u64, SLOTS as u64),
    })
}

/// How many tiles could go in each slot of a board state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyProfile {
    pub per_slot_counts: [usize; SLOTS],
    /// `Σ log2(count)`; `None` when some slot admits nothing.
    pub entropy: Option<f64>,
    pub dead: bool,
}

impl EntropyProfile {
    fn from_counts(per_slot_counts: [usize; SLOTS]) -> Self {
        let dead = per_slot_counts.contains(&0);
        let entropy = (!dead).then(|| per_slot_counts.iter().map(|&c| (c as f64).log2()).sum());
        Self { per_slot_counts, entropy, dead }
    }

    /// Entropy with dead states scored as zero.
    pub fn entropy_or_zero(&self) -> f64 {
        self.entropy.unwrap_or(0.0)
    }
}

/// Largest possible entropy for a tile set: every tile fits every slot.
pub fn max_entropy(tiles: &TileSet) -> f64 {
    SLOTS as f64 * (tiles.len() as f64).log2()
}

/// Per-slot admissible-tile counts for the given board.
///
/// An empty slot counts the unplaced tiles that could be put there without
/// any tile on the board being rejected. An occupied slot counts 1 unless its
/// tile is currently rejected.
pub fn entropy_profile(
    rule: &RuleNode,
    arrangement: &Arrangement,
    tiles: &TileSet,
) -> Result<EntropyProfile, RuleError> {
    rule.check_binding(tiles)?;
    let current = rule.slot_verdicts(tiles, arrangement);
    let mut counts = [0usize; SLOTS];
    for (slot, count) in counts.iter_mut().enumerate() {
        *count = match arrangement.get(slot) {
            Some(_) => usize::from(current[slot] != Some(Verdict::Reject)),
            None => tiles
                .tiles()
                .iter()
                .filter(|t| !arrangement.contains(t.id))
                .filter(|t| {
                    let mut trial = *arrangement;
                    trial.set(slot, Some(t.id));
                    !rule.slot_verdicts(tiles, &trial).contains(&Some(Verdict::Reject))
                })
                .count(),
        };
    }
    Ok(EntropyProfile::from_counts(counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiles::canonical_generic_set;

    fn fast(rule: &RuleNode) -> u64 {
        count_solutions_fast(rule, &canonical_generic_set()).unwrap().solution_count
    }

    fn brute(rule: &RuleNode) -> u64 {
        count_solutions_bruteforce(rule, &canonical_generic_set()).unwrap().solution_count
    }

    // Frozen values, cross-checked by an independent enumeration and by
    // closed forms: C(30,5); C(10,5); C(24,5); 142506 - C(5,4)*25 - C(5,5);
    // 142506 - (C(20,5) - 2*C(10,5)).
    #[test]
    fn spot_checks_both_counters() {
        let cases = [
            (RuleNode::empty(), 142_506),
            (RuleNode::exclusive_where("group", "1"), 252),
            (RuleNode::exclude_where("color", "red"), 42_504),
            (RuleNode::count_limit(3, "type", "A"), 142_380),
            (RuleNode::not_adjacent("group", "1", "group", "2"), 127_506),
        ];
        for (rule, expected) in cases {
            assert_eq!(fast(&rule), expected, "fast {rule}");
            assert_eq!(brute(&rule), expected, "brute {rule}");
        }
        assert_eq!(binomial(30, 5), 142_506);
        assert_eq!(binomial(10, 5), 252);
        assert_eq!(binomial(24, 5), 42_504);
        assert_eq!(142_506 - 5 * 25 - 1, 142_380);
        assert_eq!(142_506 - (binomial(20, 5) - 2 * binomial(10, 5)), 127_506);
    }

    #[test]
    fn match_property_closed_form() {
        assert_eq!(fast(&RuleNode::match_property("group")), 3 * 252);
        // six tiles of each color
        assert_eq!(fast(&RuleNode::match_property("color")), 5 * 6);
    }

    #[test]
    fn path_table_extremes() {
        let table = path_table();
        assert!(table[0]);
        assert!(!table[1023]);
        // a star centred on tile 0 cannot be lined up: tile 0 needs a neighbour
        assert!(!table[0b1111]);
        // one conflicting pair is always avoidable
        assert!((0..10).all(|b| table[1 << b]));
    }

    #[test]
    fn accuracy_metric() {
        let report = DifficultyReport { solution_count: 100, total_sets: 1000 };
        assert_eq!(report.accuracy_vs(100), 1.0);
        assert!((report.accuracy_vs(200) - 0.9).abs() < 1e-12);
        assert_eq!(accuracy(0, 5000, 1000), 0.0);
    }

    #[test]
    fn entropy_empty_rule() {
        let tiles = canonical_generic_set();
        let p = entropy_profile(&RuleNode::empty(), &Arrangement::empty(), &tiles).unwrap();
        assert_eq!(p.per_slot_counts, [30; 5]);
        assert!((p.entropy.unwrap() - 5.0 * 30f64.log2()).abs() < 1e-12);
        assert!(!p.dead);
    }

    #[test]
    fn entropy_exclusive_group() {
        let tiles = canonical_generic_set();
        let p = entropy_profile(&RuleNode::exclusive_where("group", "1"), &Arrangement::empty(), &tiles).unwrap();
        assert_eq!(p.per_slot_counts, [10; 5]);
    }

    #[test]
    fn entropy_dead_board() {
        let tiles = canonical_generic_set();
        // tile 0 is red
        let board = Arrangement::new([Some(0), None, None, None, None], &tiles).unwrap();
        let p = entropy_profile(&RuleNode::exclude_where("color", "red"), &board, &tiles).unwrap();
        assert_eq!(p.per_slot_counts[0], 0);
        assert!(p.dead);
        assert_eq!(p.entropy, None);
        assert_eq!(p.entropy_or_zero(), 0.0);
    }

    #[test]
    fn entropy_counts_respect_board() {
        let tiles = canonical_generic_set();
        let board = Arrangement::new([None, Some(0), None, None, None], &tiles).unwrap();
        let rule = RuleNode::not_adjacent("group", "1", "group", "2");
        let p = entropy_profile(&rule, &board, &tiles).unwrap();
        // neighbours of a group-1 tile cannot be group 2; slot 1 itself is fine
        assert_eq!(p.per_slot_counts, [19, 1, 19, 29, 29]);
    }
}
