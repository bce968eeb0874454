use othello_probe::engine::{generate_games, Board, GameRecord, Tile};
use othello_probe::eval::{
    eval_1hop, eval_2hop, mean_legal_moves, parse_scale, read_report, sweep, sweep_plot_data, ErrorReport, EvalError,
    MovePredictor, ScaleSpec,
};
use othello_probe::model::{ModelCheckpoint, ModelConfig, ModelError, Transformer};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn board_after(prefix: &[Tile]) -> Board {
    GameRecord::new(prefix.to_vec()).replay().unwrap()
}

/// Plays the highest-index legal move that leaves a legal reply when one
/// exists.
struct Oracle;
impl MovePredictor for Oracle {
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile> {
        let mut board = board_after(prefix);
        let mut out = Vec::new();
        for _ in 0..k {
            let legal = board.legal_moves();
            let t = legal
                .iter()
                .rev()
                .find(|&&t| !board.apply_move(t).unwrap().is_terminal())
                .or(legal.last())
                .copied()
                .unwrap_or(Tile::from_index(0).unwrap());
            board = board.apply_move(t).unwrap_or(board);
            out.push(t);
        }
        out
    }
}

/// Always names an occupied tile.
struct Occupied;
impl MovePredictor for Occupied {
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile> {
        let t = prefix.last().copied().unwrap_or_else(|| "D3".parse().unwrap());
        if prefix.is_empty() {
            // D3 is legal at the start; C3 is not.
            return vec!["C3".parse().unwrap(); k];
        }
        vec![t; k]
    }
}

/// Legal first move, then a repeat of it.
struct LegalThenRepeat;
impl MovePredictor for LegalThenRepeat {
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile> {
        let first = board_after(prefix).legal_moves()[0];
        vec![first; k]
    }
}

/// Deterministic pseudo-random tile per (prefix length, game hash).
struct Uniform {
    seed: u64,
}
impl MovePredictor for Uniform {
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile> {
        let h = prefix.iter().fold(self.seed, |acc, t| acc.wrapping_mul(0x100000001b3) ^ t.index() as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(h ^ prefix.len() as u64);
        (0..k).map(|_| Tile::from_index(rng.random_range(0..60)).unwrap()).collect()
    }
}

#[test]
fn oracle_scores_zero_and_occupied_scores_one() {
    let data = generate_games(100, 3);
    assert_eq!(eval_1hop(&Oracle, &data, "o").error_rate, 0.0);
    assert_eq!(eval_2hop(&Oracle, &data, "o").error_rate, 0.0);
    let occ = eval_1hop(&Occupied, &data, "x");
    assert_eq!(occ.errors, occ.total_prefixes);
    assert_eq!(occ.error_rate, 1.0);
    assert_eq!(eval_2hop(&Occupied, &data, "x").error_rate, 1.0);
}

#[test]
fn second_move_is_checked_after_the_generated_first_move() {
    let data = generate_games(50, 8);
    let one = eval_1hop(&LegalThenRepeat, &data, "r");
    let two = eval_2hop(&LegalThenRepeat, &data, "r");
    assert_eq!(one.error_rate, 0.0);
    assert_eq!(two.error_rate, 1.0);
}

#[test]
fn uniform_predictor_matches_legal_move_count() {
    let data = generate_games(1000, 12);
    let report = eval_1hop(&Uniform { seed: 5 }, &data, "u");
    let expected = 1.0 - mean_legal_moves(&data) / 60.0;
    // Binomial standard error at n ≈ 60k is below 0.002.
    assert!((report.error_rate - expected).abs() < 0.01, "{} vs {expected}", report.error_rate);
}

#[test]
fn skip_rule_and_exact_arithmetic() {
    let data = generate_games(40, 1);
    let one = eval_1hop(&Uniform { seed: 1 }, &data, "u");
    let two = eval_2hop(&Uniform { seed: 1 }, &data, "u");
    assert_eq!(two.total_prefixes, one.total_prefixes - 40);
    for r in [&one, &two] {
        assert_eq!(r.error_rate, r.errors as f64 / r.total_prefixes as f64);
        let weighted: f64 = r.per_position.iter().map(|p| p.rate() * p.prefixes as f64).sum::<f64>();
        assert!((weighted / r.total_prefixes as f64 - r.error_rate).abs() < 1e-12);
        assert_eq!(r.per_position_breakdown().len(), r.per_position.len());
    }
}

#[test]
fn model_evaluation_is_deterministic_and_two_hop_is_harder() {
    let model = Transformer::<f32>::new(ModelConfig { layers: 1, hidden_dim: 16, heads: 2, ..ModelConfig::decoder_default() })
        .unwrap();
    let data = generate_games(30, 2);
    let a = eval_1hop(&model, &data, "m");
    assert_eq!(a, eval_1hop(&model, &data, "m"));
    let two = eval_2hop(&model, &data, "m");
    assert!(two.error_rate >= a.error_rate - 0.05);
}

/// Only the per-prefix path, so the trait defaults are exercised.
struct Slow<'a>(&'a Transformer<f32>);
impl MovePredictor for Slow<'_> {
    fn generate(&self, prefix: &[Tile], k: usize) -> Vec<Tile> {
        self.0.generate(prefix, k)
    }
}

#[test]
fn batched_and_per_prefix_paths_agree() {
    for cfg in [
        ModelConfig { layers: 1, hidden_dim: 16, heads: 2, seed: 4, ..ModelConfig::decoder_default() },
        ModelConfig { layers: 1, encoder_layers: 1, hidden_dim: 16, heads: 2, seed: 4, ..ModelConfig::encoder_decoder_default() },
    ] {
        let mut model = Transformer::<f32>::new(cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for p in model.params_mut() {
            *p += rng.random_range(-0.3..0.3);
        }
        let data = generate_games(6, 3);
        assert_eq!(eval_1hop(&model, &data, "m"), eval_1hop(&Slow(&model), &data, "m"));
        assert_eq!(eval_2hop(&model, &data, "m"), eval_2hop(&Slow(&model), &data, "m"));
    }
}

#[test]
fn report_text_round_trip() {
    let data = generate_games(10, 2);
    let report = eval_2hop(&Uniform { seed: 3 }, &data, "ck").with_provenance("manifest", "abc");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.txt");
    report.save(&path).unwrap();
    assert_eq!(read_report(&path).unwrap(), report);
    let mut text = report.to_text();
    text = text.replacen("errors=", "errors=9", 1);
    assert!(matches!(ErrorReport::parse(&text), Err(EvalError::Report(_))));
}

#[test]
fn sweep_has_one_row_per_cell_and_continues_after_failures() {
    let pool = generate_games(60, 1);
    let test = generate_games(5, 2);
    let scales: Vec<ScaleSpec> = ["10", "20", "40"]
        .iter()
        .map(|s| ScaleSpec { label: s.to_string(), games: parse_scale(s).unwrap(), total_steps: 1 })
        .collect();
    let cfg = ModelConfig { layers: 1, hidden_dim: 16, heads: 2, ..ModelConfig::decoder_default() };
    let configs = vec![("tiny".to_string(), cfg)];
    let table = sweep::<f32>(&configs, &scales, &[1, 2], &pool, &test, |cell| {
        if cell.scale.games == 20 {
            return Err(ModelError::Config("boom".into()));
        }
        assert_eq!(cell.train.len(), cell.scale.games);
        assert_eq!(cell.train.games[..], pool.games[..cell.scale.games]);
        Ok(ModelCheckpoint::untrained(Transformer::new(cell.config.clone())?))
    })
    .unwrap();
    assert_eq!(table.rows.len(), 6);
    assert!(table.row("tiny", "20", 1).unwrap().report.is_none());
    assert!(table.row("tiny", "40", 2).unwrap().report.is_some());
    let text = table.to_text();
    assert_eq!(text.lines().next().unwrap().split('\t').collect::<Vec<_>>(), ["model", "scale", "hop", "prefixes", "errors", "rate"]);
    assert!(text.contains("NA"));
    assert_eq!(sweep_plot_data(&table, &scales).lines().count(), 1 + 4);

    let unsorted = vec![scales[1].clone(), scales[0].clone()];
    let err = sweep::<f32>(&configs, &unsorted, &[1], &pool, &test, |_| unreachable!());
    assert!(matches!(err, Err(EvalError::ScaleOrder)));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn oracle_never_errs(seed in any::<u64>()) {
        let data = generate_games(3, seed);
        prop_assert_eq!(eval_1hop(&Oracle, &data, "o").errors, 0);
        prop_assert_eq!(eval_2hop(&Oracle, &data, "o").errors, 0);
    }
}
