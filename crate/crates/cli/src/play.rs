use std::io::{BufRead, Write};

use anyhow::Result;
use taletiles::{Action, EventKind, FeedbackEvent, TileId, SLOTS};
use taletiles_service::{CreateRequest, ServiceConfig, Session, SessionError};

const HELP: &str = "Commands: place <tile> <slot>, remove <slot>, board, rules, adapt <target>, help, quit";

fn tile_name(session: &Session, id: TileId) -> &str {
    session.game().tiles.get(id).map_or("?", |t| t.name.as_str())
}

fn show_tray(session: &Session, out: &mut impl Write) -> Result<()> {
    writeln!(out, "Tiles:")?;
    for row in session.game().tiles.tiles().chunks(5) {
        let cells: Vec<String> = row.iter().map(|t| format!("{:>3} {:<16}", t.id, t.name)).collect();
        writeln!(out, "{}", cells.concat().trim_end())?;
    }
    Ok(())
}

fn show_board(session: &Session, out: &mut impl Write) -> Result<()> {
    let cells: Vec<String> = (0..SLOTS)
        .map(|slot| match session.board.arrangement().get(slot) {
            Some(id) => format!("[{slot}] {}", tile_name(session, id)),
            None => format!("[{slot}] ."),
        })
        .collect();
    writeln!(out, "Board: {}", cells.join("  "))?;
    Ok(())
}

fn describe(session: &Session, event: &FeedbackEvent) -> String {
    let name = tile_name(session, event.tile);
    match event.kind {
        EventKind::Placed => format!("{name} goes to slot {}.", event.slot),
        EventKind::Removed => format!("{name} leaves slot {}.", event.slot),
        EventKind::ThrownOff => format!("{name} is thrown off slot {}!", event.slot),
        EventKind::Shaken => format!("{name} shakes in slot {}.", event.slot),
        EventKind::Completed => "All five slots are filled. Well done!".to_string(),
    }
}

fn parse_tile(session: &Session, word: &str) -> Option<TileId> {
    let tiles = &session.game().tiles;
    match word.parse::<TileId>() {
        Ok(id) => Some(id),
        Err(_) => tiles.by_name(word).map(|t| t.id),
    }
}

fn parse_command(session: &Session, line: &str) -> std::result::Result<Command, String> {
    let words: Vec<&str> = line.split_whitespace().collect();
    let slot = |w: &str| w.parse::<usize>().map_err(|_| format!("{w:?} is not a slot number"));
    match words.as_slice() {
        [] => Ok(Command::Nothing),
        ["quit" | "exit"] => Ok(Command::Quit),
        ["help"] => Ok(Command::Help),
        ["board"] => Ok(Command::Board),
        ["rules"] => Ok(Command::Rules),
        ["place", tile, s] => {
            let tile = parse_tile(session, tile).ok_or_else(|| format!("no tile called {tile:?}"))?;
            Ok(Command::Act(Action::Place { tile, slot: slot(s)? }))
        }
        ["remove", s] => Ok(Command::Act(Action::Remove { slot: slot(s)? })),
        ["adapt", t] => t.parse().map(Command::Adapt).map_err(|_| format!("{t:?} is not a solution count")),
        _ => Err(format!("unknown command {line:?}")),
    }
}

enum Command {
    Nothing,
    Quit,
    Help,
    Board,
    Rules,
    Act(Action),
    Adapt(u64),
}

fn explain(error: SessionError) -> Result<String> {
    match error {
        SessionError::Illegal(e) => Ok(format!("You cannot do that: {e}.")),
        SessionError::Invalid(e) => Ok(format!("You cannot do that: {e}.")),
        other => Err(other.into()),
    }
}

/// Text loop over `input` until `quit` or end of input.
pub fn run(
    theme: &str,
    target: u64,
    seed: u64,
    config: &ServiceConfig,
    input: impl BufRead,
    mut out: impl Write,
) -> Result<()> {
    let request = CreateRequest { theme: theme.to_string(), target, seed: Some(seed) };
    let mut session = Session::create("terminal".into(), &request, config)?;
    writeln!(out, "{}\n", session.game().title)?;
    writeln!(out, "{}\n", session.story_transcript[0])?;
    show_tray(&session, &mut out)?;
    show_board(&session, &mut out)?;
    writeln!(out, "{HELP}")?;
    let mut lines = input.lines();
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let Some(line) = lines.next() else {
            writeln!(out)?;
            break;
        };
        let line = line?;
        let command = match parse_command(&session, &line) {
            Ok(command) => command,
            Err(message) => {
                writeln!(out, "{message}. {HELP}")?;
                continue;
            }
        };
        match command {
            Command::Nothing => {}
            Command::Quit => break,
            Command::Help => writeln!(out, "{HELP}")?,
            Command::Board => show_board(&session, &mut out)?,
            Command::Rules => {
                for rule in session.view().rules {
                    writeln!(out, "- {rule}")?;
                }
            }
            Command::Act(action) => {
                // describe events against the rules that produced them
                let before = session.clone();
                match session.act(action, config) {
                    Ok(report) => {
                        for event in &report.events {
                            writeln!(out, "{}", describe(&before, event))?;
                        }
                        if let Some(round) = report.next_round {
                            writeln!(out, "\n{}\n", round.story)?;
                        }
                        show_board(&session, &mut out)?;
                    }
                    Err(e) => writeln!(out, "{}", explain(e)?)?,
                }
            }
            Command::Adapt(target) => match session.adapt(target, config) {
                Ok(report) => {
                    writeln!(out, "\n{}\n", report.round.story)?;
                    show_board(&session, &mut out)?;
                }
                Err(e) => writeln!(out, "{}", explain(e)?)?,
            },
        }
    }
    writeln!(out, "Goodbye!")?;
    Ok(())
}
