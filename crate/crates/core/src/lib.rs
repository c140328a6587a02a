//! Adaptive tile puzzles: rule generation, exact difficulty counting, a
//! genetic search for target difficulty, a five-slot board simulator and
//! story narration of the active rules.

pub mod board;
pub mod difficulty;
pub mod evolution;
pub mod narrative;
pub mod rules;
pub mod tiles;

pub use board::{Action, BoardEnv, BoardError, BoardState, EventKind, FeedbackEvent, Game, Observation, TileGame};
pub use difficulty::{
    count_solutions_bruteforce, count_solutions_fast, entropy_profile, DifficultyReport, EntropyProfile,
};
pub use evolution::{convergence_experiment, evolve, EvolutionConfig, EvolutionResult, Measure, Objective};
pub use narrative::{build_continuation_prompt, build_opening_prompt, narrate, NarratorConfig, PromptBundle};
pub use rules::{render_rule, Arrangement, Condition, RuleError, RuleNode, Verdict, SLOTS};
pub use tiles::{animal_dinner_set, canonical_generic_set, load_tileset, Tile, TileId, TileSet, TileSetError};
