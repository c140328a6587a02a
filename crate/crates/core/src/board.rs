//! Five-slot board simulator.
//!
//! The board only knows slots and feedback; the rules come from a [`Game`].
//! Every placement or removal re-evaluates the whole board: rejected tiles are
//! thrown off, a surviving newly placed tile is shaken when it caused other
//! tiles to fly, and a full board with no rejections completes the game.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rules::{Arrangement, RuleError, RuleNode, Verdict, SLOTS};
use crate::tiles::{TileId, TileSet};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BoardError {
    #[error("slot {0} does not exist")]
    NoSuchSlot(usize),
    #[error("slot {0} is already occupied")]
    SlotOccupied(usize),
    #[error("slot {0} is empty")]
    SlotEmpty(usize),
    #[error("unknown tile {0}")]
    UnknownTile(TileId),
    #[error("tile {0} is already on the board")]
    DuplicateTile(TileId),
    #[error("replay diverged from the recorded log at event {0}")]
    ReplayDiverged(usize),
    #[error("malformed event log: {0}")]
    Log(String),
}

/// A tile game the board can host: a tile set plus an evaluation.
pub trait Game {
    fn tiles(&self) -> &TileSet;
    /// One verdict per occupied slot.
    fn evaluate(&self, arrangement: &Arrangement) -> Vec<(usize, Verdict)>;
}

/// A game defined by one (usually composite) rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TileGame {
    pub title: String,
    pub tiles: TileSet,
    pub rule: RuleNode,
}

impl TileGame {
    pub fn new(title: impl Into<String>, tiles: TileSet, rule: RuleNode) -> Result<Self, RuleError> {
        rule.validate(&tiles)?;
        Ok(Self { title: title.into(), tiles, rule })
    }
}

impl Game for TileGame {
    fn tiles(&self) -> &TileSet {
        &self.tiles
    }

    fn evaluate(&self, arrangement: &Arrangement) -> Vec<(usize, Verdict)> {
        self.rule.evaluate(&self.tiles, arrangement).expect("rule was bound at construction")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Placed,
    Removed,
    ThrownOff,
    Shaken,
    Completed,
}

impl EventKind {
    /// Integer code used in environment observations.
    pub fn code(self) -> u8 {
        match self {
            EventKind::Placed => 0,
            EventKind::Removed => 1,
            EventKind::ThrownOff => 2,
            EventKind::Shaken => 3,
            EventKind::Completed => 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub kind: EventKind,
    pub slot: usize,
    pub tile: TileId,
}

/// What a single action produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Outcome {
    pub events: Vec<FeedbackEvent>,
    /// The evaluation that triggered the feedback, before any throw-off.
    pub verdicts: Vec<(usize, Verdict)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoardState<G: Game = TileGame> {
    game: G,
    arrangement: Arrangement,
    event_log: Vec<FeedbackEvent>,
    completed: bool,
}

impl<G: Game> BoardState<G> {
    pub fn new(game: G) -> Self {
        Self { game, arrangement: Arrangement::empty(), event_log: Vec::new(), completed: false }
    }

    pub fn game(&self) -> &G {
        &self.game
    }

    pub fn arrangement(&self) -> &Arrangement {
        &self.arrangement
    }

    pub fn event_log(&self) -> &[FeedbackEvent] {
        &self.event_log
    }

    pub fn is_completed(&self) -> bool {
        self.completed
    }

    /// Current verdicts for the tiles on the board.
    pub fn verdicts(&self) -> Vec<(usize, Verdict)> {
        self.game.evaluate(&self.arrangement)
    }

    pub fn place(&mut self, tile: TileId, slot: usize) -> Result<Outcome, BoardError> {
        if slot >= SLOTS {
            return Err(BoardError::NoSuchSlot(slot));
        }
        if self.game.tiles().get(tile).is_none() {
            return Err(BoardError::UnknownTile(tile));
        }
        if self.arrangement.get(slot).is_some() {
            return Err(BoardError::SlotOccupied(slot));
        }
        if self.arrangement.contains(tile) {
            return Err(BoardError::DuplicateTile(tile));
        }
        self.arrangement.set(slot, Some(tile));
        let mut events = vec![FeedbackEvent { kind: EventKind::Placed, slot, tile }];
        let verdicts = self.settle(&mut events);
        let thrown = events.iter().any(|e| e.kind == EventKind::ThrownOff);
        if thrown && self.arrangement.get(slot) == Some(tile) {
            events.push(FeedbackEvent { kind: EventKind::Shaken, slot, tile });
        }
        if !thrown && self.arrangement.is_full() {
            self.completed = true;
            events.push(FeedbackEvent { kind: EventKind::Completed, slot, tile });
        }
        self.event_log.extend_from_slice(&events);
        Ok(Outcome { events, verdicts })
    }

    pub fn remove(&mut self, slot: usize) -> Result<Outcome, BoardError> {
        let tile = self
            .arrangement
            .slots()
            .get(slot)
            .ok_or(BoardError::NoSuchSlot(slot))?
            .ok_or(BoardError::SlotEmpty(slot))?;
        self.arrangement.set(slot, None);
        self.completed = false;
        let mut events = vec![FeedbackEvent { kind: EventKind::Removed, slot, tile }];
        let verdicts = self.settle(&mut events);
        self.event_log.extend_from_slice(&events);
        Ok(Outcome { events, verdicts })
    }

    /// Evaluates the board and throws off every rejected tile.
    fn settle(&mut self, events: &mut Vec<FeedbackEvent>) -> Vec<(usize, Verdict)> {
        let verdicts = self.game.evaluate(&self.arrangement);
        for &(slot, verdict) in &verdicts {
            if verdict == Verdict::Reject {
                let tile = self.arrangement.get(slot).expect("verdicts only cover occupied slots");
                self.arrangement.set(slot, None);
                events.push(FeedbackEvent { kind: EventKind::ThrownOff, slot, tile });
            }
        }
        verdicts
    }

    /// Rebuilds a board by re-running the placements and removals recorded in
    /// `log`, checking that every derived event matches.
    pub fn replay(game: G, log: &[FeedbackEvent]) -> Result<Self, BoardError> {
        let mut board = Self::new(game);
        for (i, event) in log.iter().enumerate() {
            let result = match event.kind {
                EventKind::Placed => board.place(event.tile, event.slot),
                EventKind::Removed => board.remove(event.slot),
                _ => continue,
            };
            result.map_err(|_| BoardError::ReplayDiverged(i))?;
            let produced = board.event_log.len();
            if produced > log.len() || board.event_log[..] != log[..produced] {
                return Err(BoardError::ReplayDiverged(i));
            }
        }
        if board.event_log.len() != log.len() {
            return Err(BoardError::ReplayDiverged(board.event_log.len()));
        }
        Ok(board)
    }

    /// Clears the board and its log, keeping the game.
    pub fn reset(&mut self) {
        self.arrangement = Arrangement::empty();
        self.event_log.clear();
        self.completed = false;
    }

    pub fn into_game(self) -> G {
        self.game
    }

    /// Invariants that must hold after any action sequence.
    pub fn check_invariants(&self) -> Result<(), String> {
        Arrangement::new(*self.arrangement.slots(), self.game.tiles()).map_err(|e| e.to_string())?;
        let rejects = self.verdicts().iter().any(|(_, v)| *v == Verdict::Reject);
        if rejects {
            return Err("a rejected tile is still on the board".into());
        }
        if self.completed != self.arrangement.is_full() {
            return Err(format!("completed={} but full={}", self.completed, self.arrangement.is_full()));
        }
        Ok(())
    }
}

/// Serializes events as JSON lines.
pub fn events_to_json_lines(events: &[FeedbackEvent]) -> String {
    events.iter().map(|e| serde_json::to_string(e).expect("event serializes") + "\n").collect()
}

pub fn events_from_json_lines(text: &str) -> Result<Vec<FeedbackEvent>, BoardError> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| BoardError::Log(e.to_string())))
        .collect()
}

// ---- agent environment ----

/// Environment action. Integer encoding for `n` tiles: `0` is no-op,
/// `1 + tile * 5 + slot` places, `1 + n * 5 + slot` removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    Place { tile: TileId, slot: usize },
    Remove { slot: usize },
    Noop,
}

impl Action {
    pub fn space_size(tile_count: usize) -> usize {
        1 + tile_count * SLOTS + SLOTS
    }

    pub fn encode(self, tile_count: usize) -> usize {
        match self {
            Action::Noop => 0,
            Action::Place { tile, slot } => 1 + tile * SLOTS + slot,
            Action::Remove { slot } => 1 + tile_count * SLOTS + slot,
        }
    }

    pub fn decode(index: usize, tile_count: usize) -> Option<Self> {
        let placements = tile_count * SLOTS;
        match index {
            0 => Some(Action::Noop),
            i if i <= placements => Some(Action::Place { tile: (i - 1) / SLOTS, slot: (i - 1) % SLOTS }),
            i if i <= placements + SLOTS => Some(Action::Remove { slot: i - 1 - placements }),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    /// Tile id per slot, `-1` when empty.
    pub slots: [i64; SLOTS],
    /// Codes of the events produced by the last step (see [`EventKind::code`]).
    pub last_events: Vec<u8>,
}

impl Observation {
    fn of(arrangement: &Arrangement, events: &[FeedbackEvent]) -> Self {
        Self {
            slots: arrangement.slots().map(|s| s.map_or(-1, |t| t as i64)),
            last_events: events.iter().map(|e| e.kind.code()).collect(),
        }
    }

    pub fn occupancy(&self) -> [bool; SLOTS] {
        self.slots.map(|s| s >= 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

pub const COMPLETION_REWARD: f64 = 1.0;
pub const PENALTY: f64 = -0.01;

/// Reset/step interface over a board for scripted or learning agents.
pub struct BoardEnv<G: Game = TileGame> {
    board: BoardState<G>,
    rng: ChaCha8Rng,
    last: Observation,
}

impl<G: Game> BoardEnv<G> {
    pub fn new(game: G, seed: u64) -> Self {
        let board = BoardState::new(game);
        let last = Observation::of(board.arrangement(), &[]);
        Self { board, rng: ChaCha8Rng::seed_from_u64(seed), last }
    }

    pub fn reset(&mut self, seed: u64) -> Observation {
        self.board.reset();
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.last = Observation::of(self.board.arrangement(), &[]);
        self.last.clone()
    }

    pub fn board(&self) -> &BoardState<G> {
        &self.board
    }

    pub fn step(&mut self, action: Action) -> Step {
        let outcome = match action {
            Action::Noop => Ok(Outcome { events: Vec::new(), verdicts: Vec::new() }),
            Action::Place { tile, slot } => self.board.place(tile, slot),
            Action::Remove { slot } => self.board.remove(slot),
        };
        let Ok(outcome) = outcome else {
            return Step { observation: self.last.clone(), reward: PENALTY, done: self.board.is_completed() };
        };
        let mut reward = 0.0;
        for event in &outcome.events {
            match event.kind {
                EventKind::Completed => reward += COMPLETION_REWARD,
                EventKind::ThrownOff => reward += PENALTY,
                _ => {}
            }
        }
        self.last = Observation::of(self.board.arrangement(), &outcome.events);
        Step { observation: self.last.clone(), reward, done: self.board.is_completed() }
    }

    /// Uniformly random action from the full encoded space.
    pub fn sample_action(&mut self) -> Action {
        let n = self.board.game().tiles().len();
        let index = self.rng.random_range(0..Action::space_size(n));
        Action::decode(index, n).expect("index within action space")
    }
}

/// Starts an environment for `game`.
pub fn env_reset<G: Game>(game: G, seed: u64) -> (BoardEnv<G>, Observation) {
    let mut env = BoardEnv::new(game, seed);
    let observation = env.reset(seed);
    (env, observation)
}
