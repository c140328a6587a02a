//! Story framing of the active rules.
//!
//! Prompts ask a language model for a children's story that explains the rules
//! through the characters instead of stating them. The stub narrator fills a
//! local template from the same bundle so everything works offline.

use std::path::Path;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::board::TileGame;
use crate::rules::{Condition, RuleNode};
use crate::tiles::{TileId, TileSet};

#[derive(Debug, Error)]
pub enum NarrativeError {
    #[error("a continuation needs an opening story first")]
    Sequencing,
    #[error("unknown tile {0}")]
    UnknownTile(TileId),
    #[error("narrator unavailable: {0}")]
    Unavailable(String),
    #[error("narrator protocol error: {0}")]
    Protocol(String),
    #[error("narrator config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Purpose {
    Opening,
    Continuation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: String) -> Self {
        Self { role: role.to_string(), content }
    }
}

/// A rule restated in terms of the characters it concerns.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RuleBrief {
    /// Nobody in `names` may be chosen.
    Absent { names: Vec<String> },
    /// Only `names` may be chosen.
    OnlyThese { names: Vec<String> },
    /// All chosen must share one value of `property`.
    SameKind { property: String },
    /// Nobody in `left` may sit beside anybody in `right`.
    Quarrel { left: Vec<String>, right: Vec<String> },
    /// At most `limit` of `names`.
    Scarce { limit: u8, names: Vec<String> },
}

fn names_matching(tiles: &TileSet, condition: &Condition) -> Vec<String> {
    tiles.tiles().iter().filter(|t| condition.matches(t)).map(|t| t.name.clone()).collect()
}

fn brief(rule: &RuleNode, tiles: &TileSet) -> RuleBrief {
    match rule {
        RuleNode::ExcludeWhere(c) => RuleBrief::Absent { names: names_matching(tiles, c) },
        RuleNode::ExclusiveWhere(c) => RuleBrief::OnlyThese { names: names_matching(tiles, c) },
        RuleNode::MatchProperty(p) => RuleBrief::SameKind { property: p.clone() },
        RuleNode::NotAdjacent { first, second } => {
            RuleBrief::Quarrel { left: names_matching(tiles, first), right: names_matching(tiles, second) }
        }
        RuleNode::CountLimit { number, condition } => {
            RuleBrief::Scarce { limit: *number, names: names_matching(tiles, condition) }
        }
        RuleNode::Composite(_) => unreachable!("briefs are built from leaves"),
    }
}

/// Distinct leaves in order, so a repeated child is only told once.
fn distinct_leaves(rule: &RuleNode) -> Vec<&RuleNode> {
    let mut out: Vec<&RuleNode> = Vec::new();
    for leaf in rule.leaves() {
        if !out.contains(&leaf) {
            out.push(leaf);
        }
    }
    out
}

/// Setting and vocabulary for a tile set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Theme {
    noun: &'static str,
    premise: &'static str,
    once_upon: &'static str,
    next_time: &'static str,
}

impl Theme {
    fn named(tile_set: &str) -> Self {
        match tile_set {
            "animals" => Theme {
                noun: "animals",
                premise: "the player hosts a dinner party for animals who do not all get along",
                once_upon: "Once upon a time, the animals of the green valley decided to hold a grand dinner party.",
                next_time: "The next evening, the valley was getting ready for another dinner party.",
            },
            _ => Theme {
                noun: "tiles",
                premise: "picture tiles that want to be placed together on a small wooden board",
                once_upon: "Once upon a time, thirty picture tiles lived together in a little wooden box.",
                next_time: "The next morning, the picture tiles woke up to a brand new day on the board.",
            },
        }
    }
}

const SYSTEM_INSTRUCTION: &str = "You are a kind storyteller for children aged three to six. \
You write short, warm stories with simple words and nothing scary or unkind.";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub purpose: Purpose,
    pub system_instruction: String,
    pub messages: Vec<ChatMessage>,
    /// Every tile name for an opening, the placed tiles for a continuation.
    pub tile_names: Vec<String>,
    pub briefs: Vec<RuleBrief>,
    /// Name of the tile set the story is about.
    pub theme: String,
    pub noun: String,
}

fn rule_lines(rule: &RuleNode, noun: &str) -> String {
    let leaves = distinct_leaves(rule);
    if leaves.is_empty() {
        return format!("- Any five {noun} may be chosen\n");
    }
    leaves.iter().map(|leaf| format!("- {}\n", leaf.render())).collect()
}

/// Prompt for the first story of a game.
pub fn build_opening_prompt(game: &TileGame) -> PromptBundle {
    let theme = Theme::named(game.tiles.name());
    let names: Vec<String> = game.tiles.tiles().iter().map(|t| t.name.clone()).collect();
    let content = format!(
        "Please write a story for young children.\n\
         \n\
         The game is called \"{title}\": {premise}.\n\
         \n\
         These are all the {noun} in the game: {list}.\n\
         \n\
         The game has these rules:\n\
         {rules}\
         \n\
         Write a short story that contextually explains the rules without mentioning them explicitly. \
         Let the characters and their feelings show why some {noun} cannot be chosen together.\n\
         End the story by asking the player to choose five {noun}.",
        title = game.title,
        premise = theme.premise,
        noun = theme.noun,
        list = names.join(", "),
        rules = rule_lines(&game.rule, theme.noun),
    );
    PromptBundle {
        purpose: Purpose::Opening,
        system_instruction: SYSTEM_INSTRUCTION.to_string(),
        messages: vec![ChatMessage::new("user", content)],
        tile_names: names,
        briefs: distinct_leaves(&game.rule).into_iter().map(|l| brief(l, &game.tiles)).collect(),
        theme: game.tiles.name().to_string(),
        noun: theme.noun.to_string(),
    }
}

/// Prompt to continue the story after the player completed a board and new
/// rules were generated. `transcript` holds every story told so far.
fn chosen_line(names: &[String], noun: &str) -> String {
    if names.is_empty() {
        format!("The player has not chosen any {noun} yet.")
    } else {
        format!("The player chose these {} {noun}: {}.", names.len(), names.join(", "))
    }
}

pub fn build_continuation_prompt(
    transcript: &[String],
    game: &TileGame,
    placed: &[TileId],
) -> Result<PromptBundle, NarrativeError> {
    if transcript.is_empty() {
        return Err(NarrativeError::Sequencing);
    }
    let theme = Theme::named(game.tiles.name());
    let placed_names = placed
        .iter()
        .map(|&id| game.tiles.get(id).map(|t| t.name.clone()).ok_or(NarrativeError::UnknownTile(id)))
        .collect::<Result<Vec<_>, _>>()?;
    let content = format!(
        "Here is the story so far:\n\
         \n\
         {story}\n\
         \n\
         {chosen}\n\
         \n\
         Now the game has new rules:\n\
         {rules}\
         \n\
         Continue the story so that it contextually explains the new rules without mentioning them explicitly. \
         Keep the same gentle tone.\n\
         End by asking the player to choose five {noun} again.",
        story = transcript.join("\n\n"),
        chosen = chosen_line(&placed_names, theme.noun),
        noun = theme.noun,
        rules = rule_lines(&game.rule, theme.noun),
    );
    Ok(PromptBundle {
        purpose: Purpose::Continuation,
        system_instruction: SYSTEM_INSTRUCTION.to_string(),
        messages: vec![ChatMessage::new("user", content)],
        tile_names: placed_names,
        briefs: distinct_leaves(&game.rule).into_iter().map(|l| brief(l, &game.tiles)).collect(),
        theme: game.tiles.name().to_string(),
        noun: theme.noun.to_string(),
    })
}

// ---- stub narrator ----

fn spoken_list(names: &[String]) -> String {
    match names {
        [] => "nobody".to_string(),
        [one] => one.clone(),
        [rest @ .., last] => format!("{} and {last}", rest.join(", ")),
    }
}

fn brief_sentence(brief: &RuleBrief) -> String {
    match brief {
        RuleBrief::Absent { names } => format!(
            "But {} had caught a sniffly cold and had to stay home in bed.",
            spoken_list(names)
        ),
        RuleBrief::OnlyThese { names } => format!(
            "Only {} had received a golden invitation, and the door stayed closed to everyone else.",
            spoken_list(names)
        ),
        RuleBrief::SameKind { property } => format!(
            "Everyone at the table wished to sit only with friends who share the same {property} as the very first guest to sit down."
        ),
        RuleBrief::Quarrel { left, right } if left == right => format!(
            "{} had all quarrelled with one another, so none of them may sit side by side.",
            spoken_list(left)
        ),
        RuleBrief::Quarrel { left, right } => format!(
            "{} had quarrelled with {} over the last berry pie, so they must not sit side by side.",
            spoken_list(left),
            spoken_list(right)
        ),
        RuleBrief::Scarce { limit, names } => format!(
            "There was only enough honey cake for {limit} of {}, so no more of them than that could come.",
            spoken_list(names)
        ),
    }
}

/// Deterministic offline story built from the bundle's briefs. Never touches
/// the network.
pub fn stub_story(bundle: &PromptBundle) -> String {
    let theme = Theme::named(&bundle.theme);
    let mut parts = Vec::new();
    match bundle.purpose {
        Purpose::Opening => {
            parts.push(theme.once_upon.to_string());
            parts.push(format!("Everyone was there: {}.", spoken_list(&bundle.tile_names)));
        }
        Purpose::Continuation => {
            parts.push(theme.next_time.to_string());
            if !bundle.tile_names.is_empty() {
                parts.push(format!(
                    "{} were still smiling about how well the last one went.",
                    spoken_list(&bundle.tile_names)
                ));
            }
        }
    }
    if bundle.briefs.is_empty() {
        parts.push("Tonight everybody got along, so anyone could join in.".to_string());
    }
    parts.extend(bundle.briefs.iter().map(brief_sentence));
    parts.push(match bundle.purpose {
        Purpose::Opening => format!("Can you help choose five {} for tonight?", bundle.noun),
        Purpose::Continuation => format!("Which five {} will you choose this time?", bundle.noun),
    });
    parts.join(" ")
}

// ---- configuration ----

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NarratorMode {
    Remote,
    Stub,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NarratorConfig {
    pub mode: NarratorMode,
    /// Full URL of a chat-completions endpoint.
    pub endpoint: String,
    #[serde(skip_serializing)]
    pub api_key: Option<String>,
    pub model: String,
    pub temperature: f32,
    pub max_tokens: u32,
    pub timeout_secs: u64,
    /// Extra attempts after the first failed one.
    pub retries: u32,
    /// First backoff delay; doubles on every retry.
    pub backoff_ms: u64,
    /// Case-insensitive words that make a remote story unusable.
    pub deny_words: Vec<String>,
    /// Tell the stub story when the remote narrator is unavailable.
    pub fallback_to_stub: bool,
}

impl Default for NarratorConfig {
    fn default() -> Self {
        Self {
            mode: NarratorMode::Stub,
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            api_key: None,
            model: "gpt-3.5-turbo".into(),
            temperature: 0.7,
            max_tokens: 600,
            timeout_secs: 30,
            retries: 3,
            backoff_ms: 500,
            deny_words: ["stupid", "idiot", "dumb", "hate", "kill", "shut up", "ugly", "die"]
                .map(String::from)
                .to_vec(),
            fallback_to_stub: true,
        }
    }
}

pub const ENV_MODE: &str = "TALETILES_NARRATOR_MODE";
pub const ENV_ENDPOINT: &str = "TALETILES_NARRATOR_ENDPOINT";
pub const ENV_MODEL: &str = "TALETILES_NARRATOR_MODEL";
pub const ENV_API_KEY: &str = "TALETILES_API_KEY";

impl NarratorConfig {
    pub fn stub() -> Self {
        Self::default()
    }

    pub fn from_toml(text: &str) -> Result<Self, NarrativeError> {
        toml::from_str(text).map_err(|e| NarrativeError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, NarrativeError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| NarrativeError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Applies overrides from the process environment.
    pub fn with_env(self) -> Result<Self, NarrativeError> {
        self.with_vars(|key| std::env::var(key).ok())
    }

    pub fn with_vars(mut self, var: impl Fn(&str) -> Option<String>) -> Result<Self, NarrativeError> {
        if let Some(mode) = var(ENV_MODE) {
            self.mode = match mode.to_ascii_lowercase().as_str() {
                "remote" => NarratorMode::Remote,
                "stub" => NarratorMode::Stub,
                other => return Err(NarrativeError::Config(format!("unknown narrator mode \"{other}\""))),
            };
        }
        if let Some(endpoint) = var(ENV_ENDPOINT) {
            self.endpoint = endpoint;
        }
        if let Some(model) = var(ENV_MODEL) {
            self.model = model;
        }
        if let Some(key) = var(ENV_API_KEY).or_else(|| var("OPENAI_API_KEY")) {
            self.api_key = Some(key);
        }
        Ok(self)
    }

    fn denied(&self, text: &str) -> bool {
        let lower = text.to_lowercase();
        self.deny_words.iter().any(|word| {
            let word = word.to_lowercase();
            lower.match_indices(&word).any(|(at, _)| {
                let before = lower[..at].chars().next_back();
                let after = lower[at + word.len()..].chars().next();
                !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
            })
        })
    }
}

// ---- remote narrator ----

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: Vec<ChatMessage>,
    temperature: f32,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatMessage,
}

enum Attempt {
    Transient(String),
    Fatal(NarrativeError),
}

fn request_once(
    client: &reqwest::blocking::Client,
    bundle: &PromptBundle,
    config: &NarratorConfig,
) -> Result<String, Attempt> {
    let mut messages = vec![ChatMessage::new("system", bundle.system_instruction.clone())];
    messages.extend(bundle.messages.iter().cloned());
    let body =
        ChatRequest { model: &config.model, messages, temperature: config.temperature, max_tokens: config.max_tokens };
    let mut request = client.post(&config.endpoint).json(&body);
    if let Some(key) = &config.api_key {
        request = request.bearer_auth(key);
    }
    let response = request.send().map_err(|e| Attempt::Transient(e.to_string()))?;
    let status = response.status();
    if status.as_u16() == 429 || status.is_server_error() {
        return Err(Attempt::Transient(format!("HTTP {status}")));
    }
    if !status.is_success() {
        return Err(Attempt::Fatal(NarrativeError::Unavailable(format!("HTTP {status}"))));
    }
    let text = response.text().map_err(|e| Attempt::Transient(e.to_string()))?;
    let parsed: ChatResponse =
        serde_json::from_str(&text).map_err(|e| Attempt::Fatal(NarrativeError::Protocol(e.to_string())))?;
    parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content.trim().to_string())
        .filter(|c| !c.is_empty())
        .ok_or_else(|| Attempt::Fatal(NarrativeError::Protocol("reply has no completion".into())))
}

fn request_with_retries(
    client: &reqwest::blocking::Client,
    bundle: &PromptBundle,
    config: &NarratorConfig,
) -> Result<String, NarrativeError> {
    let mut delay = Duration::from_millis(config.backoff_ms);
    let mut last = String::new();
    for attempt in 0..=config.retries {
        if attempt > 0 {
            thread::sleep(delay);
            delay = (delay * 2).min(Duration::from_secs(8));
        }
        match request_once(client, bundle, config) {
            Ok(story) => return Ok(story),
            Err(Attempt::Fatal(e)) => return Err(e),
            Err(Attempt::Transient(e)) => last = e,
        }
    }
    Err(NarrativeError::Unavailable(format!("{} attempts failed, last: {last}", config.retries + 1)))
}

fn narrate_remote(bundle: &PromptBundle, config: &NarratorConfig) -> Result<String, NarrativeError> {
    let client = reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(config.timeout_secs))
        .build()
        .map_err(|e| NarrativeError::Config(e.to_string()))?;
    let story = request_with_retries(&client, bundle, config)?;
    if !config.denied(&story) {
        return Ok(story);
    }
    // one more try, then the stub
    let story = request_with_retries(&client, bundle, config)?;
    if !config.denied(&story) {
        return Ok(story);
    }
    Ok(stub_story(bundle))
}

/// Tells the story for `bundle`. Remote failures are returned as errors; see
/// [`narrate_with_fallback`].
pub fn narrate(bundle: &PromptBundle, config: &NarratorConfig) -> Result<String, NarrativeError> {
    match config.mode {
        NarratorMode::Stub => Ok(stub_story(bundle)),
        NarratorMode::Remote => narrate_remote(bundle, config),
    }
}

/// Like [`narrate`], but falls back to the stub when the remote narrator is
/// unavailable and the config allows it.
pub fn narrate_with_fallback(bundle: &PromptBundle, config: &NarratorConfig) -> Result<String, NarrativeError> {
    match narrate(bundle, config) {
        Err(NarrativeError::Unavailable(_)) if config.fallback_to_stub => Ok(stub_story(bundle)),
        other => other,
    }
}
