use std::time::{SystemTime, UNIX_EPOCH};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use taletiles::difficulty::binomial;
use taletiles::narrative::{narrate_with_fallback, NarrativeError};
use taletiles::{
    animal_dinner_set, build_continuation_prompt, build_opening_prompt, canonical_generic_set, evolve, Action,
    BoardError, BoardState, EvolutionResult, FeedbackEvent, Measure, RuleNode, Tile, TileGame, TileId, TileSet,
    Verdict, SLOTS,
};
use thiserror::Error;

use crate::config::ServiceConfig;

#[derive(Debug, Error)]
pub enum SessionError {
    #[error("{0}")]
    Invalid(String),
    #[error("no session {0}")]
    NotFound(String),
    #[error("illegal action: {0}")]
    Illegal(#[from] BoardError),
    #[error("narration failed: {0}")]
    Narration(#[from] NarrativeError),
    #[error("storage: {0}")]
    Storage(String),
    #[error("{0}")]
    Internal(String),
}

#[derive(Debug, Clone, Deserialize)]
pub struct CreateRequest {
    #[serde(default = "default_theme")]
    pub theme: String,
    pub target: u64,
    pub seed: Option<u64>,
}

fn default_theme() -> String {
    "animals".into()
}

fn theme_game(theme: &str) -> Result<(String, TileSet), SessionError> {
    match theme {
        "animals" => Ok(("The animal dinner party".into(), animal_dinner_set())),
        "generic" => Ok(("The picture tiles".into(), canonical_generic_set())),
        other => Err(SessionError::Invalid(format!("unknown theme {other:?}, expected animals or generic"))),
    }
}

/// One generated rule and how close it came to its target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleRecord {
    pub rule: RuleNode,
    pub target: u64,
    pub achieved: u64,
    pub accuracy: f64,
}

/// A running narrated game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SessionDoc", into = "SessionDoc")]
pub struct Session {
    pub id: String,
    pub theme: String,
    pub seed: u64,
    /// Mutating requests served so far; keys the RNG stream of the next one.
    pub requests: u64,
    pub board: BoardState,
    pub last_events: Vec<FeedbackEvent>,
    pub last_solution: Option<Vec<TileId>>,
    pub story_transcript: Vec<String>,
    pub difficulty_target: u64,
    pub rule_history: Vec<RuleRecord>,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Serialize, Deserialize)]
struct SessionDoc {
    id: String,
    theme: String,
    seed: u64,
    requests: u64,
    game: TileGame,
    board_log: Vec<FeedbackEvent>,
    last_events: Vec<FeedbackEvent>,
    last_solution: Option<Vec<TileId>>,
    story_transcript: Vec<String>,
    difficulty_target: u64,
    rule_history: Vec<RuleRecord>,
    created_at: u64,
    updated_at: u64,
}

impl TryFrom<SessionDoc> for Session {
    type Error = String;

    fn try_from(doc: SessionDoc) -> Result<Self, String> {
        if doc.rule_history.last().map(|r| &r.rule) != Some(&doc.game.rule) {
            return Err("rule history does not end with the active rule".into());
        }
        let board = BoardState::replay(doc.game, &doc.board_log).map_err(|e| e.to_string())?;
        Ok(Session {
            id: doc.id,
            theme: doc.theme,
            seed: doc.seed,
            requests: doc.requests,
            board,
            last_events: doc.last_events,
            last_solution: doc.last_solution,
            story_transcript: doc.story_transcript,
            difficulty_target: doc.difficulty_target,
            rule_history: doc.rule_history,
            created_at: doc.created_at,
            updated_at: doc.updated_at,
        })
    }
}

impl From<Session> for SessionDoc {
    fn from(s: Session) -> Self {
        let board_log = s.board.event_log().to_vec();
        SessionDoc {
            id: s.id,
            theme: s.theme,
            seed: s.seed,
            requests: s.requests,
            game: s.board.into_game(),
            board_log,
            last_events: s.last_events,
            last_solution: s.last_solution,
            story_transcript: s.story_transcript,
            difficulty_target: s.difficulty_target,
            rule_history: s.rule_history,
            created_at: s.created_at,
            updated_at: s.updated_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotVerdict {
    pub slot: usize,
    pub tile: TileId,
    pub verdict: Verdict,
}

/// Everything a client needs to draw the game.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub id: String,
    pub theme: String,
    pub title: String,
    pub tiles: Vec<Tile>,
    pub slots: [Option<TileId>; SLOTS],
    pub verdicts: Vec<SlotVerdict>,
    pub completed: bool,
    pub last_events: Vec<FeedbackEvent>,
    pub rules: Vec<String>,
    pub rule: RuleNode,
    pub difficulty_target: u64,
    pub achieved: u64,
    pub round: usize,
    pub story: Vec<String>,
    pub created_at: u64,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoryView {
    pub id: String,
    pub story: Vec<String>,
}

/// A new rule and the story chapter that introduces it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub rules: Vec<String>,
    pub target: u64,
    pub achieved: u64,
    pub accuracy: f64,
    pub story: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionReport {
    pub events: Vec<FeedbackEvent>,
    /// Present when the action solved the board and new rules were generated.
    pub next_round: Option<RoundReport>,
    pub session: SessionView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptReport {
    #[serde(flatten)]
    pub round: RoundReport,
    pub session: SessionView,
}

fn now_millis() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

fn rendered(rule: &RuleNode) -> Vec<String> {
    let leaves = rule.leaves();
    if leaves.is_empty() {
        return vec![rule.render()];
    }
    leaves.iter().map(|l| l.render()).collect()
}

fn check_target(tiles: &TileSet, target: u64) -> Result<(), SessionError> {
    let total = binomial(tiles.len() as u64, SLOTS as u64);
    if target > total {
        return Err(SessionError::Invalid(format!("target {target} is outside 0..={total}")));
    }
    Ok(())
}

fn round_seed(seed: u64, request: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(request);
    rng.next_u64()
}

fn run_evolution(
    config: &ServiceConfig,
    tiles: &TileSet,
    target: u64,
    seed: u64,
    sample: &[Tile],
) -> Result<(EvolutionResult, RuleRecord), SessionError> {
    let result = evolve(&config.evolution.config(target, seed), tiles, sample)
        .map_err(|e| SessionError::Invalid(e.to_string()))?;
    let achieved = match result.achieved {
        Measure::Count(n) => n,
        Measure::Entropy(_) => return Err(SessionError::Internal("count objective returned an entropy".into())),
    };
    let record = RuleRecord { rule: result.best_rule.clone(), target, achieved, accuracy: result.accuracy };
    Ok((result, record))
}

impl Session {
    /// Generates the first rule, narrates the opening and returns the session.
    pub fn create(id: String, request: &CreateRequest, config: &ServiceConfig) -> Result<Self, SessionError> {
        let (title, tiles) = theme_game(&request.theme)?;
        check_target(&tiles, request.target)?;
        let seed = request.seed.unwrap_or_else(rand::random);
        let sample = tiles.tiles().to_vec();
        let (result, record) = run_evolution(config, &tiles, request.target, round_seed(seed, 0), &sample)?;
        let game = TileGame::new(title, tiles, result.best_rule).map_err(|e| SessionError::Internal(e.to_string()))?;
        let story = narrate_with_fallback(&build_opening_prompt(&game), &config.narrator)?;
        let now = now_millis();
        Ok(Session {
            id,
            theme: request.theme.clone(),
            seed,
            requests: 1,
            board: BoardState::new(game),
            last_events: Vec::new(),
            last_solution: None,
            story_transcript: vec![story],
            difficulty_target: request.target,
            rule_history: vec![record],
            created_at: now,
            updated_at: now,
        })
    }

    pub fn game(&self) -> &TileGame {
        self.board.game()
    }

    /// Evolves a rule toward `target`, swaps it in on a cleared board and
    /// continues the story.
    fn next_round(&mut self, target: u64, config: &ServiceConfig) -> Result<RoundReport, SessionError> {
        let tiles = self.game().tiles.clone();
        check_target(&tiles, target)?;
        let sample: Vec<Tile> = match &self.last_solution {
            Some(ids) => ids.iter().filter_map(|&id| tiles.get(id).cloned()).collect(),
            None => tiles.tiles().to_vec(),
        };
        let seed = round_seed(self.seed, self.requests);
        let (result, record) = run_evolution(config, &tiles, target, seed, &sample)?;
        let game = TileGame::new(self.game().title.clone(), tiles, result.best_rule)
            .map_err(|e| SessionError::Internal(e.to_string()))?;
        let placed = self.last_solution.clone().unwrap_or_default();
        let bundle = build_continuation_prompt(&self.story_transcript, &game, &placed)?;
        let story = narrate_with_fallback(&bundle, &config.narrator)?;
        let report = RoundReport {
            rules: rendered(&game.rule),
            target,
            achieved: record.achieved,
            accuracy: record.accuracy,
            story: story.clone(),
        };
        self.board = BoardState::new(game);
        self.story_transcript.push(story);
        self.rule_history.push(record);
        self.difficulty_target = target;
        Ok(report)
    }

    /// Applies a board action. Solving the board starts the next round.
    pub fn act(&mut self, action: Action, config: &ServiceConfig) -> Result<ActionReport, SessionError> {
        let outcome = match action {
            Action::Place { tile, slot } => self.board.place(tile, slot)?,
            Action::Remove { slot } => self.board.remove(slot)?,
            Action::Noop => Default::default(),
        };
        let mut next_round = None;
        if self.board.is_completed() {
            let solution = self.board.arrangement().slots().iter().flatten().copied().collect();
            self.last_solution = Some(solution);
            let total = binomial(self.game().tiles.len() as u64, SLOTS as u64);
            let target = config.next_target(self.difficulty_target).min(total);
            next_round = Some(self.next_round(target, config)?);
        }
        self.requests += 1;
        self.last_events = outcome.events.clone();
        self.updated_at = now_millis();
        Ok(ActionReport { events: outcome.events, next_round, session: self.view() })
    }

    /// Replaces the rule with one evolved toward `target`.
    pub fn adapt(&mut self, target: u64, config: &ServiceConfig) -> Result<AdaptReport, SessionError> {
        let round = self.next_round(target, config)?;
        self.requests += 1;
        self.last_events.clear();
        self.updated_at = now_millis();
        Ok(AdaptReport { round, session: self.view() })
    }

    pub fn view(&self) -> SessionView {
        let game = self.game();
        let arrangement = self.board.arrangement();
        let verdicts = self
            .board
            .verdicts()
            .into_iter()
            .map(|(slot, verdict)| SlotVerdict {
                slot,
                tile: arrangement.get(slot).expect("verdicts are for occupied slots"),
                verdict,
            })
            .collect();
        SessionView {
            id: self.id.clone(),
            theme: self.theme.clone(),
            title: game.title.clone(),
            tiles: game.tiles.tiles().to_vec(),
            slots: *arrangement.slots(),
            verdicts,
            completed: self.board.is_completed(),
            last_events: self.last_events.clone(),
            rules: rendered(&game.rule),
            rule: game.rule.clone(),
            difficulty_target: self.difficulty_target,
            achieved: self.rule_history.last().map_or(0, |r| r.achieved),
            round: self.rule_history.len(),
            story: self.story_transcript.clone(),
            created_at: self.created_at,
            updated_at: self.updated_at,
        }
    }

    pub fn story(&self) -> StoryView {
        StoryView { id: self.id.clone(), story: self.story_transcript.clone() }
    }
}
