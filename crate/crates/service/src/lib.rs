//! Narrated game sessions over HTTP.
//!
//! A session owns one game: the tile set, the active rule, the board and the
//! story told so far. Sessions are kept as one JSON document each in a data
//! directory and cached in memory while the server runs.

mod api;
mod config;
mod session;
mod store;

pub use api::{router, serve, AppState};
pub use config::{EvolutionSettings, ServiceConfig};
pub use session::{
    ActionReport, AdaptReport, CreateRequest, RoundReport, RuleRecord, Session, SessionError, SessionView, SlotVerdict,
    StoryView,
};
pub use store::SessionStore;
