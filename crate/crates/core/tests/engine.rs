use othello_probe::engine::{
    generate_games, length_stats, read_dataset, write_dataset, Board, Cell, Color, Dataset, EngineError, GameRecord,
    SourceTag, Tile,
};
use proptest::prelude::*;

#[path = "support/naive.rs"]
mod naive;

use naive::{same, Naive, DIRS};

fn engine_perft(board: &Board, depth: u32) -> u64 {
    if depth == 0 {
        return 1;
    }
    board.legal_moves().into_iter().map(|t| engine_perft(&board.apply_move(t).unwrap(), depth - 1)).sum()
}

fn t(label: &str) -> Tile {
    label.parse().unwrap()
}

#[test]
fn perft_matches_naive_enumerator() {
    let naive: Vec<u64> = (1..=6).map(|d| Naive::start().perft(d)).collect();
    let engine: Vec<u64> = (1..=6).map(|d| engine_perft(&Board::initial(), d)).collect();
    assert_eq!(engine, naive);
    assert_eq!(naive, vec![4, 12, 56, 244, 1396, 8200]);
}

#[test]
fn ten_thousand_random_games_agree_with_naive_engine() {
    let data = generate_games(10_000, 2024);
    for (g, game) in data.games.iter().enumerate() {
        let mut board = Board::initial();
        let mut naive = Naive::start();
        assert!(same(&board, &naive));
        for &tile in &game.moves {
            let mut ours: Vec<usize> = board.legal_moves().iter().map(|t| t.square()).collect();
            let mut theirs: Vec<usize> = naive.legal_for(naive.to_move).iter().map(|&(r, c)| r * 8 + c).collect();
            ours.sort_unstable();
            theirs.sort_unstable();
            assert_eq!(ours, theirs, "game {g}");
            board = board.apply_move(tile).unwrap();
            naive = naive.play(tile.row(), tile.col()).unwrap();
            assert!(same(&board, &naive), "game {g} after {tile}");
        }
        assert!(board.is_terminal());
        assert!(naive.legal_for(1).is_empty() && naive.legal_for(-1).is_empty());
    }
}

#[test]
fn opening_moves_and_single_flip() {
    let start = Board::initial();
    let mut legal: Vec<String> = start.legal_moves().iter().map(|t| t.label()).collect();
    legal.sort();
    assert_eq!(legal, ["C4", "D3", "E6", "F5"]);
    let b = start.apply_move(t("D3")).unwrap();
    for l in ["D3", "D4", "D5", "E4"] {
        assert_eq!(b.cell(t_sq(l)), Cell::Black, "{l}");
    }
    assert_eq!(b.cell(t_sq("E5")), Cell::White);
    assert_eq!(b.to_move(), Color::White);
    assert!(matches!(start.apply_move(t("A1")), Err(EngineError::IllegalMove { .. })));
}

fn t_sq(label: &str) -> usize {
    let b = label.as_bytes();
    (b[1] - b'1') as usize * 8 + (b[0] - b'A') as usize
}

#[test]
fn generator_statistics_on_ten_thousand_games() {
    let stats = length_stats(&generate_games(10_000, 5));
    assert!(stats.mean >= 59.5 && stats.mean <= 60.0, "{stats:?}");
    assert!(stats.full_length_fraction >= 0.97, "{stats:?}");
}

#[test]
fn generator_is_deterministic_and_legal() {
    let a = generate_games(300, 99);
    let b = generate_games(300, 99);
    assert_eq!(a.to_text(), b.to_text());
    assert_eq!(a.source_tag, SourceTag::Synthetic);
    assert!(a.games.iter().all(|g| g.replay().is_ok()));
    assert_ne!(a.to_text(), generate_games(300, 100).to_text());
    let one = generate_games(1, 3);
    assert_eq!(one.len(), 1);
    assert!(one.games[0].replay().unwrap().is_terminal());
}

#[test]
fn skipped_players_had_no_moves() {
    let data = generate_games(2000, 17);
    let mut passes = 0;
    for game in &data.games {
        let boards = game.boards().unwrap();
        let movers = game.movers().unwrap();
        for i in 1..movers.len() {
            if movers[i] == movers[i - 1] {
                passes += 1;
                let before = &boards[i];
                assert_eq!(before.legal_mask_for(movers[i].opponent()), 0);
            }
        }
    }
    assert!(passes > 0, "sample should contain at least one pass");
}

#[test]
fn dataset_file_round_trip_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.txt");
    let data = generate_games(1000, 7);
    write_dataset(&data, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.games, data.games);
    assert!(matches!(Dataset::parse("D3 C5 ZZ\n"), Err(EngineError::Parse { token: 3, .. })));
    assert!(matches!(Dataset::parse("D3 D3\n"), Err(EngineError::IllegalGame { line: 1, ply: 2, .. })));
}

fn arb_game() -> impl Strategy<Value = GameRecord> {
    (any::<u64>(), 0usize..=60).prop_map(|(seed, cut)| {
        let mut g = generate_games(1, seed).games.remove(0);
        g.moves.truncate(cut);
        g
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn discs_grow_by_one_and_moves_flip(game in arb_game()) {
        let mut board = Board::initial();
        for &tile in &game.moves {
            for other in Tile::all() {
                prop_assert_eq!(board.is_legal(other), board.flips(other) != 0);
            }
            let before = board.disc_count();
            prop_assert!(board.flips(tile) != 0);
            board = board.apply_move(tile).unwrap();
            prop_assert_eq!(board.disc_count(), before + 1);
        }
        prop_assert_eq!(board.disc_count() as usize, 4 + game.len());
    }

    #[test]
    fn discs_form_one_king_connected_cluster(game in arb_game()) {
        let board = game.replay().unwrap();
        let occupied: Vec<bool> = (0..64).map(|s| board.cell(s) != Cell::Empty).collect();
        let mut seen = [false; 64];
        let mut stack = vec![27usize];
        seen[27] = true;
        while let Some(s) = stack.pop() {
            let (r, c) = ((s / 8) as i32, (s % 8) as i32);
            for (dr, dc) in DIRS {
                let (rr, cc) = (r + dr, c + dc);
                if (0..8).contains(&rr) && (0..8).contains(&cc) {
                    let n = (rr * 8 + cc) as usize;
                    if occupied[n] && !seen[n] {
                        seen[n] = true;
                        stack.push(n);
                    }
                }
            }
        }
        prop_assert_eq!(seen.iter().filter(|&&x| x).count(), occupied.iter().filter(|&&x| x).count());
        for sq in [27, 28, 35, 36] {
            prop_assert!(seen[sq]);
        }
    }

    #[test]
    fn text_round_trip(seed in any::<u64>(), count in 1usize..20) {
        let data = generate_games(count, seed);
        prop_assert_eq!(Dataset::parse(&data.to_text()).unwrap().games, data.games);
    }

    #[test]
    fn labels_round_trip(index in 0usize..60, lower in any::<bool>()) {
        let tile = Tile::from_index(index).unwrap();
        let label = if lower { tile.label().to_lowercase() } else { tile.label() };
        prop_assert_eq!(label.parse::<Tile>().unwrap().label(), tile.label());
    }
}
