mod common;

use taletiles::board::{events_from_json_lines, events_to_json_lines, EventKind};
use taletiles::{canonical_generic_set, Action, BoardEnv, BoardState, TileGame, Verdict};

use common::{random_genome, rng};

#[test]
fn random_actions_keep_invariants_and_replay() {
    let tiles = canonical_generic_set();
    let mut seeds = rng(404);
    for seed in 0..5u64 {
        let rule = random_genome(&tiles, &mut seeds);
        let game = TileGame::new("fuzz", tiles.clone(), rule).unwrap();
        let mut env = BoardEnv::new(game.clone(), seed);
        for _ in 0..10_000 {
            let action = env.sample_action();
            let before = env.board().clone();
            let step = env.step(action);
            env.board().check_invariants().unwrap();
            if step.reward < 0.0 && step.observation.last_events.is_empty() {
                // illegal: nothing changed
                assert_eq!(env.board(), &before);
            }
            if step.done {
                assert!(env.board().is_completed());
                env.reset(seed);
            }
        }
        let log = env.board().event_log().to_vec();
        let replayed =
            BoardState::replay(game.clone(), &events_from_json_lines(&events_to_json_lines(&log)).unwrap()).unwrap();
        assert_eq!(&replayed, env.board());
    }
}

#[test]
fn throw_offs_match_rejections() {
    let tiles = canonical_generic_set();
    let mut seeds = rng(8);
    for _ in 0..20 {
        let rule = random_genome(&tiles, &mut seeds);
        let mut board = BoardState::new(TileGame::new("t", tiles.clone(), rule).unwrap());
        let mut env_rng = rng(board.game().rule.to_json().len() as u64);
        for _ in 0..500 {
            let action = Action::decode(rand::Rng::random_range(&mut env_rng, 0..Action::space_size(30)), 30).unwrap();
            let outcome = match action {
                Action::Place { tile, slot } => board.place(tile, slot),
                Action::Remove { slot } => board.remove(slot),
                Action::Noop => continue,
            };
            let Ok(outcome) = outcome else { continue };
            let rejected: Vec<usize> =
                outcome.verdicts.iter().filter(|(_, v)| *v == Verdict::Reject).map(|(s, _)| *s).collect();
            let thrown: Vec<usize> =
                outcome.events.iter().filter(|e| e.kind == EventKind::ThrownOff).map(|e| e.slot).collect();
            assert_eq!(rejected, thrown);
        }
    }
}
