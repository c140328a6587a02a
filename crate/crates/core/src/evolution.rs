//! Genetic search over rules for a target difficulty.
//!
//! Genomes are top-level composites. Each generation is scored, sorted by
//! distance to the target, the elite is copied, and the rest of the next
//! population is filled with tournament winners that are mutated with
//! probability `mutation_rate`. There is no crossover.
//!
//! All randomness comes from one ChaCha stream seeded by `seed`, drawn only on
//! the control thread; fitness is computed in parallel but is a pure function
//! of the genome, so results do not depend on the worker count.

use std::collections::HashMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::difficulty::{accuracy, binomial, count_solutions_fast, entropy_profile, max_entropy};
use crate::rules::{mutate, random_rule, Arrangement, RuleNode, SLOTS};
use crate::tiles::{Tile, TileSet};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvolutionError {
    #[error("invalid evolution config: {0}")]
    Config(String),
    #[error("sample tile {0} does not fit the tile-set schema")]
    Sample(String),
}

/// What the search is aiming for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "evaluator", rename_all = "lowercase")]
pub enum Objective {
    /// Number of valid five-tile sets.
    Count { target: u64 },
    /// Entropy of the empty board.
    Entropy { target: f64 },
}

impl Objective {
    pub fn target(&self) -> Measure {
        match *self {
            Objective::Count { target } => Measure::Count(target),
            Objective::Entropy { target } => Measure::Entropy(target),
        }
    }
}

/// A difficulty value: an integer solution count or a real entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Measure {
    Count(u64),
    Entropy(f64),
}

impl Measure {
    pub fn as_f64(self) -> f64 {
        match self {
            Measure::Count(c) => c as f64,
            Measure::Entropy(e) => e,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionConfig {
    pub population_size: usize,
    pub mutation_rate: f64,
    pub max_generations: usize,
    pub objective: Objective,
    pub elite_count: usize,
    pub tournament_size: usize,
    pub seed: u64,
}

impl EvolutionConfig {
    pub fn new(objective: Objective, seed: u64) -> Self {
        Self {
            population_size: 100,
            mutation_rate: 0.5,
            max_generations: 50,
            objective,
            elite_count: 10,
            tournament_size: 2,
            seed,
        }
    }

    pub fn count(target: u64, seed: u64) -> Self {
        Self::new(Objective::Count { target }, seed)
    }

    pub fn validate(&self, tiles: &TileSet) -> Result<(), EvolutionError> {
        let fail = |msg: String| Err(EvolutionError::Config(msg));
        if self.elite_count == 0 || self.elite_count >= self.population_size {
            return fail(format!("elite_count {} must be in 1..{}", self.elite_count, self.population_size));
        }
        if !(0.0..=1.0).contains(&self.mutation_rate) {
            return fail(format!("mutation_rate {} outside [0, 1]", self.mutation_rate));
        }
        if self.tournament_size == 0 {
            return fail("tournament_size must be positive".into());
        }
        match self.objective {
            Objective::Count { target } => {
                let total = binomial(tiles.len() as u64, SLOTS as u64);
                if target > total {
                    return fail(format!("target {target} exceeds the {total} possible sets"));
                }
            }
            Objective::Entropy { target } => {
                if !(0.0..=max_entropy(tiles)).contains(&target) {
                    return fail(format!("entropy target {target} outside [0, {:.3}]", max_entropy(tiles)));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionResult {
    pub best_rule: RuleNode,
    pub target: Measure,
    pub achieved: Measure,
    pub accuracy: f64,
    /// Reproduction rounds performed; 0 when the initial population already
    /// hit the target.
    pub generations_used: usize,
    /// Best fitness (distance to target) after each generation, starting with
    /// the initial population.
    pub fitness_history: Vec<f64>,
}

#[derive(Clone)]
struct Scored {
    fitness: f64,
    achieved: Measure,
}

/// Scores rules against one objective, remembering every genome seen.
struct Scorer<'a> {
    tiles: &'a TileSet,
    objective: Objective,
    cache: HashMap<RuleNode, Scored>,
}

impl<'a> Scorer<'a> {
    fn new(tiles: &'a TileSet, objective: Objective) -> Self {
        Self { tiles, objective, cache: HashMap::new() }
    }

    fn measure(&self, rule: &RuleNode) -> Scored {
        match self.objective {
            Objective::Count { target } => {
                let count = count_solutions_fast(rule, self.tiles).expect("generated rules are bound").solution_count;
                Scored { fitness: count.abs_diff(target) as f64, achieved: Measure::Count(count) }
            }
            Objective::Entropy { target } => {
                let entropy = entropy_profile(rule, &Arrangement::empty(), self.tiles)
                    .expect("generated rules are bound")
                    .entropy_or_zero();
                Scored { fitness: (entropy - target).abs(), achieved: Measure::Entropy(entropy) }
            }
        }
    }

    fn score_all(&mut self, rules: &[RuleNode]) -> Vec<Scored> {
        let mut pending = std::collections::HashSet::new();
        let fresh: Vec<&RuleNode> =
            rules.iter().filter(|r| !self.cache.contains_key(*r) && pending.insert(*r)).collect();
        let scored: Vec<Scored> = fresh.par_iter().map(|r| self.measure(r)).collect();
        for (rule, s) in fresh.into_iter().zip(scored) {
            self.cache.insert(rule.clone(), s);
        }
        rules.iter().map(|r| self.cache[r].clone()).collect()
    }

    fn accuracy(&self, achieved: Measure) -> f64 {
        match (self.objective, achieved) {
            (Objective::Count { target }, Measure::Count(count)) => {
                accuracy(count, target, binomial(self.tiles.len() as u64, SLOTS as u64))
            }
            (Objective::Entropy { target }, Measure::Entropy(e)) => {
                (1.0 - (e - target).abs() / max_entropy(self.tiles)).clamp(0.0, 1.0)
            }
            _ => unreachable!("measure kind follows the objective"),
        }
    }
}

fn check_sample(tiles: &TileSet, sample: &[Tile]) -> Result<(), EvolutionError> {
    if sample.is_empty() {
        return Err(EvolutionError::Config("sample_tiles is empty".into()));
    }
    for tile in sample {
        let fits = tiles.schema().keys().all(|p| tile.value(p).is_some_and(|v| tiles.knows(p, v)));
        if !fits {
            return Err(EvolutionError::Sample(tile.name.clone()));
        }
    }
    Ok(())
}

/// Runs the genetic search. `sample_tiles` supplies rule parameters; pass
/// `tiles.tiles()` to sample from the whole set.
pub fn evolve(
    config: &EvolutionConfig,
    tiles: &TileSet,
    sample_tiles: &[Tile],
) -> Result<EvolutionResult, EvolutionError> {
    config.validate(tiles)?;
    check_sample(tiles, sample_tiles)?;
    let schema = tiles.schema();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut scorer = Scorer::new(tiles, config.objective);

    let mut population: Vec<RuleNode> = (0..config.population_size)
        .map(|_| {
            let children = rng.random_range(1..=3);
            RuleNode::Composite((0..children).map(|_| random_rule(schema, sample_tiles, &mut rng)).collect())
        })
        .collect();

    let mut best: Option<(RuleNode, Scored)> = None;
    let mut history = Vec::with_capacity(config.max_generations + 1);
    let mut generation = 0;
    loop {
        let scores = scorer.score_all(&population);
        let mut order: Vec<usize> = (0..population.len()).collect();
        order.sort_by(|&a, &b| scores[a].fitness.total_cmp(&scores[b].fitness));
        let ranked: Vec<RuleNode> = order.iter().map(|&i| population[i].clone()).collect();
        let leader = &scores[order[0]];
        if best.as_ref().is_none_or(|(_, s)| leader.fitness < s.fitness) {
            best = Some((ranked[0].clone(), leader.clone()));
        }
        let best_fitness = best.as_ref().map(|(_, s)| s.fitness).unwrap_or(f64::INFINITY);
        history.push(best_fitness);
        if best_fitness == 0.0 || generation == config.max_generations {
            break;
        }

        let mut next = ranked[..config.elite_count].to_vec();
        while next.len() < config.population_size {
            let winner = (0..config.tournament_size)
                .map(|_| rng.random_range(0..ranked.len()))
                .min()
                .expect("tournament is non-empty");
            let child = if rng.random_bool(config.mutation_rate) {
                mutate(&ranked[winner], schema, sample_tiles, &mut rng)
            } else {
                ranked[winner].clone()
            };
            next.push(child);
        }
        population = next;
        generation += 1;
    }

    let (best_rule, scored) = best.expect("at least one generation is scored");
    Ok(EvolutionResult {
        accuracy: scorer.accuracy(scored.achieved),
        best_rule,
        target: config.objective.target(),
        achieved: scored.achieved,
        generations_used: generation,
        fitness_history: history,
    })
}

/// One line of the experiment report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub target: Measure,
    pub achieved: Measure,
    pub accuracy: f64,
    pub generations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub runs: usize,
    pub mean_accuracy: f64,
    pub stddev_accuracy: f64,
    pub mean_generations: f64,
    pub stddev_generations: f64,
    /// Share of runs with accuracy of at least 0.999.
    pub share_within_0_999: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub records: Vec<RunRecord>,
    pub summary: ExperimentSummary,
}

impl ExperimentReport {
    /// One JSON object per run followed by `{"summary": {...}}`.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for record in &self.records {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        let summary = serde_json::json!({ "summary": self.summary });
        out.push_str(&summary.to_string());
        out.push('\n');
        out
    }
}

/// How each run of an experiment picks its target.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TargetPlan {
    Fixed(Objective),
    /// Uniform count in `[0, C(N,5)]`.
    UniformCount,
    /// Uniform entropy in `[0, max_entropy]`.
    UniformEntropy,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Repeats [`evolve`] `runs` times. Per-run seeds and targets come from a
/// stream seeded by `seed`; `base` supplies the remaining parameters.
pub fn convergence_experiment(
    runs: usize,
    seed: u64,
    plan: TargetPlan,
    base: &EvolutionConfig,
    tiles: &TileSet,
    sample_tiles: &[Tile],
) -> Result<ExperimentReport, EvolutionError> {
    if runs == 0 {
        return Err(EvolutionError::Config("runs must be at least 1".into()));
    }
    let total = binomial(tiles.len() as u64, SLOTS as u64);
    let mut master = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(runs);
    for _ in 0..runs {
        let run_seed = master.next_u64();
        let objective = match plan {
            TargetPlan::Fixed(objective) => objective,
            TargetPlan::UniformCount => Objective::Count { target: master.random_range(0..=total) },
            TargetPlan::UniformEntropy => Objective::Entropy { target: master.random_range(0.0..=max_entropy(tiles)) },
        };
        let config = EvolutionConfig { objective, seed: run_seed, ..base.clone() };
        let result = evolve(&config, tiles, sample_tiles)?;
        records.push(RunRecord {
            seed: run_seed,
            target: result.target,
            achieved: result.achieved,
            accuracy: result.accuracy,
            generations: result.generations_used,
        });
    }
    let accuracies: Vec<f64> = records.iter().map(|r| r.accuracy).collect();
    let generations: Vec<f64> = records.iter().map(|r| r.generations as f64).collect();
    let (mean_accuracy, stddev_accuracy) = mean_std(&accuracies);
    let (mean_generations, stddev_generations) = mean_std(&generations);
    let close = accuracies.iter().filter(|&&a| a >= 0.999).count();
    Ok(ExperimentReport {
        summary: ExperimentSummary {
            runs,
            mean_accuracy,
            stddev_accuracy,
            mean_generations,
            stddev_generations,
            share_within_0_999: close as f64 / runs as f64,
        },
        records,
    })
}
