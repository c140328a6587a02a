use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use taletiles::{EvolutionConfig, NarratorConfig, Objective};

/// GA parameters used for every rule generated by the service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvolutionSettings {
    pub population_size: usize,
    pub mutation_rate: f64,
    pub max_generations: usize,
    pub elite_count: usize,
    pub tournament_size: usize,
}

impl Default for EvolutionSettings {
    fn default() -> Self {
        let base = EvolutionConfig::count(0, 0);
        Self {
            population_size: base.population_size,
            mutation_rate: base.mutation_rate,
            max_generations: base.max_generations,
            elite_count: base.elite_count,
            tournament_size: base.tournament_size,
        }
    }
}

impl EvolutionSettings {
    pub fn config(&self, target: u64, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            population_size: self.population_size,
            mutation_rate: self.mutation_rate,
            max_generations: self.max_generations,
            objective: Objective::Count { target },
            elite_count: self.elite_count,
            tournament_size: self.tournament_size,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub narrator: NarratorConfig,
    pub evolution: EvolutionSettings,
    /// Next target after a solved board is `max(floor, target * factor)`.
    pub next_target_factor: f64,
    pub next_target_floor: u64,
    /// Directory with the built play UI, served for any unmatched path.
    pub static_dir: Option<PathBuf>,
    /// Allowed browser origins; `*` allows any.
    pub cors_origins: Vec<String>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            data_dir: data_dir.into(),
            narrator: NarratorConfig::stub(),
            evolution: EvolutionSettings::default(),
            next_target_factor: 0.5,
            next_target_floor: 50,
            static_dir: None,
            cors_origins: Vec::new(),
        }
    }

    pub fn next_target(&self, target: u64) -> u64 {
        ((target as f64 * self.next_target_factor).round() as u64).max(self.next_target_floor)
    }
}
