//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `cargo test -p othello-probe-cli --test acceptance -- 5 8` runs a subset.
//! Trained checkpoints are cached under the cargo target tmpdir, keyed by
//! model config, training config and dataset hash.

#[path = "../../core/tests/support/gradcheck.rs"]
mod gradcheck;
#[path = "../../core/tests/support/naive.rs"]
mod naive;
#[path = "../../core/tests/support/schema.rs"]
mod schema;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, OnceLock};
use std::time::Instant;

use mimalloc::MiMalloc;
use othello_probe::align::{
    align_supervised, align_unsupervised, layer_similarity_matrix, split_and_preprocess, AlignData, AlignMode,
    AlignmentMap, HeatmapGrid, HeatmapOptions, SimilarityReport, SupervisedOptions, UnsupervisedOptions,
};
use othello_probe::engine::{generate_games, length_stats, Board, Dataset, GameRecord};
use othello_probe::eval::{eval_1hop, eval_2hop, ErrorReport};
use othello_probe::linalg::Matrix;
use othello_probe::model::{
    extract_all_layers, train_with, Architecture, FeatureMatrix, FeatureMeta, ModelCheckpoint, ModelConfig,
    TrainConfig,
};
use othello_probe::viz::{board_svg, latent_move_projection, project_game};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use sha2::{Digest, Sha256};

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

type Outcome = Result<String, String>;

const DATA_SEED: u64 = 7;
const POOL_GAMES: usize = 220_000;
/// (label, training games, optimizer steps)
const SCALES: [(&str, usize, usize); 3] = [("2k", 2_000, 1_500), ("20k", 20_000, 4_000), ("200k", 200_000, 12_000)];
const FEATURE_GAMES: usize = 500;

fn main() {
    let args: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let picked: Vec<u32> = args.iter().filter_map(|a| a.parse().ok()).collect();
    let names: Vec<&String> = args.iter().filter(|a| a.parse::<u32>().is_err()).collect();
    if !names.is_empty() && !names.iter().any(|n| "acceptance".contains(n.as_str())) {
        return;
    }
    let criteria: [(u32, fn() -> Outcome); 11] = [
        (1, engine_equivalence),
        (2, perft_counts),
        (3, generator_statistics),
        (4, gradient_check),
        (5, data_size_trend),
        (6, two_hop_dominance),
        (7, synthetic_recovery),
        (8, cross_model_alignment),
        (9, heatmap_structure),
        (10, projection_legality),
        (11, smoke_manifest),
    ];
    let mut failed = 0;
    for (id, run) in criteria {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} {tag} {detail} [{secs:.1}s]");
    }
    if failed > 0 {
        std::process::exit(1);
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn timed<R>(f: impl FnOnce() -> R) -> (R, f64) {
    let t = Instant::now();
    let r = f();
    (r, t.elapsed().as_secs_f64())
}

// ---------------------------------------------------------------- engine

fn engine_equivalence() -> Outcome {
    let (mismatch, secs) = timed(|| {
        let data = generate_games(10_000, 2024);
        for (g, game) in data.games.iter().enumerate() {
            let mut board = Board::initial();
            let mut nv = naive::Naive::start();
            for &tile in &game.moves {
                let mut ours: Vec<usize> = board.legal_moves().iter().map(|t| t.square()).collect();
                let mut theirs: Vec<usize> = nv.legal_for(nv.to_move).iter().map(|&(r, c)| r * 8 + c).collect();
                ours.sort_unstable();
                theirs.sort_unstable();
                if ours != theirs {
                    return Some(format!("game {g}: legal sets differ before {tile}"));
                }
                board = board.apply_move(tile).expect("generated move is legal");
                match nv.play(tile.row(), tile.col()) {
                    Some(n) => nv = n,
                    None => return Some(format!("game {g}: naive rejects {tile}")),
                }
                if !naive::same(&board, &nv) {
                    return Some(format!("game {g}: boards differ after {tile}"));
                }
            }
            if !board.is_terminal() || !nv.legal_for(1).is_empty() || !nv.legal_for(-1).is_empty() {
                return Some(format!("game {g}: final positions disagree on game end"));
            }
        }
        None
    });
    match mismatch {
        Some(m) => Err(m),
        None => check(secs <= 60.0, format!("10000 games agree at every ply, {secs:.1}s (limit 60s)")),
    }
}

fn perft_counts() -> Outcome {
    fn engine(board: &Board, depth: u32) -> u64 {
        if depth == 0 {
            return 1;
        }
        board.legal_moves().into_iter().map(|t| engine(&board.apply_move(t).unwrap(), depth - 1)).sum()
    }
    let ((ours, theirs), secs) = timed(|| {
        let ours: Vec<u64> = (1..=6).map(|d| engine(&Board::initial(), d)).collect();
        let theirs: Vec<u64> = (1..=6).map(|d| naive::Naive::start().perft(d)).collect();
        (ours, theirs)
    });
    check(
        ours == theirs && ours[0] == 4 && secs <= 120.0,
        format!("depths 1-6 engine {ours:?} naive {theirs:?}, {secs:.1}s (limit 120s)"),
    )
}

fn generator_statistics() -> Outcome {
    let stats = length_stats(&generate_games(100_000, 3));
    check(
        (59.5..=60.0).contains(&stats.mean) && stats.full_length_fraction >= 0.97,
        format!(
            "100000 games: mean length {:.4} (need 59.5-60.0), full-length fraction {:.4} (need >= 0.97)",
            stats.mean, stats.full_length_fraction
        ),
    )
}

fn gradient_check() -> Outcome {
    let (worst, secs) = timed(|| {
        let mut worst = (String::new(), 0.0f64);
        for (arch, tie) in
            [(Architecture::DecoderOnly, true), (Architecture::DecoderOnly, false), (Architecture::EncoderDecoder, true)]
        {
            let model = gradcheck::perturbed(gradcheck::tiny(arch, tie));
            for (name, rel, scale) in gradcheck::relative_errors(&model) {
                if scale <= 1e-8 {
                    return Err(format!("{arch:?}/{name}: gradient vanishes"));
                }
                if rel > worst.1 {
                    worst = (format!("{arch:?}/{name}"), rel);
                }
            }
        }
        Ok(worst)
    });
    let (name, rel) = worst?;
    check(
        rel < gradcheck::TOL && secs <= 60.0,
        format!("worst relative error {rel:.2e} at {name} (limit {:.0e}), {secs:.1}s (limit 60s)", gradcheck::TOL),
    )
}

// ---------------------------------------------------------------- trained models

struct Trained {
    ckpt: ModelCheckpoint<f32>,
    train_secs: f64,
    one_hop: ErrorReport,
    two_hop: ErrorReport,
}

fn data() -> &'static (Dataset, Dataset) {
    static DATA: OnceLock<(Dataset, Dataset)> = OnceLock::new();
    DATA.get_or_init(|| {
        let split = generate_games(POOL_GAMES, DATA_SEED).split();
        (split.train, split.test)
    })
}

fn cache_dir() -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    std::fs::create_dir_all(&dir).expect("cache dir");
    dir
}

/// Default decoder trained on the first `games` training games.
fn trained(games: usize, steps: usize, seed: u64) -> &'static Trained {
    static MODELS: OnceLock<Mutex<HashMap<(usize, usize, u64), &'static Trained>>> = OnceLock::new();
    let map = MODELS.get_or_init(Default::default);
    if let Some(t) = map.lock().unwrap().get(&(games, steps, seed)) {
        return t;
    }
    let (pool, test) = data();
    let train = pool.subset(0..games);
    let cfg = ModelConfig::decoder_default().with_seed(seed);
    let tcfg = TrainConfig { total_steps: steps, seed, eval_interval: 250, ..TrainConfig::default() };
    let mut h = Sha256::new();
    h.update(cfg.to_kv());
    h.update(format!("{tcfg:?}"));
    h.update(train.content_hash());
    let key: String = h.finalize().iter().take(12).map(|b| format!("{b:02x}")).collect();
    let path = cache_dir().join(format!("decoder-{games}-{seed}-{key}.ckpt"));
    let secs_path = path.with_extension("secs");
    let (ckpt, train_secs) = match (ModelCheckpoint::<f32>::load(&path), std::fs::read_to_string(&secs_path)) {
        (Ok(c), Ok(s)) => (c, s.trim().parse().expect("cached training time")),
        _ => {
            eprintln!("training {games} games, {steps} steps, seed {seed}");
            let (ckpt, secs) = timed(|| {
                train_with::<f32>(cfg, tcfg, &train, |p| {
                    if p.step % 1000 == 0 {
                        eprintln!("  step {:>6} loss {:.4}", p.step, p.loss);
                    }
                })
                .expect("training")
            });
            ckpt.save(&path).expect("save checkpoint");
            std::fs::write(&secs_path, format!("{secs}\n")).expect("save training time");
            (ckpt, secs)
        }
    };
    let id = ckpt.content_hash();
    let one_hop = eval_1hop(&ckpt.model, test, &id);
    let two_hop = eval_2hop(&ckpt.model, test, &id);
    eprintln!("  {games} games seed {seed}: 1-hop {:.4}, 2-hop {:.4}", one_hop.error_rate, two_hop.error_rate);
    let t: &'static Trained = Box::leak(Box::new(Trained { ckpt, train_secs, one_hop, two_hop }));
    map.lock().unwrap().insert((games, steps, seed), t);
    t
}

fn scale_models() -> Vec<(&'static str, &'static Trained)> {
    SCALES.iter().map(|&(label, games, steps)| (label, trained(games, steps, 0))).collect()
}

/// Second 20k model: same data, different initialization and batch order.
fn second_20k() -> &'static Trained {
    trained(SCALES[1].1, SCALES[1].2, 1)
}

fn data_size_trend() -> Outcome {
    let models = scale_models();
    let rates: Vec<f64> = models.iter().map(|(_, t)| t.one_hop.error_rate).collect();
    let hours: f64 = models.iter().map(|(_, t)| t.train_secs).sum::<f64>() / 3600.0;
    let decreasing = rates.windows(2).all(|w| w[1] < w[0]);
    check(
        decreasing && rates[1] <= 0.45 && rates[2] <= 0.20 && hours <= 4.0,
        format!(
            "1-hop error 2k={:.4} 20k={:.4} (limit 0.45) 200k={:.4} (limit 0.20), strictly decreasing={decreasing}, training {hours:.2}h (limit 4h)",
            rates[0], rates[1], rates[2]
        ),
    )
}

fn two_hop_dominance() -> Outcome {
    let mut models = scale_models();
    models.push(("20k-seed1", second_20k()));
    let mut parts = Vec::new();
    let mut ok = true;
    for (label, t) in models {
        ok &= t.two_hop.error_rate >= t.one_hop.error_rate;
        parts.push(format!("{label} 1-hop={:.4} 2-hop={:.4}", t.one_hop.error_rate, t.two_hop.error_rate));
    }
    check(ok, parts.join(", "))
}

// ---------------------------------------------------------------- alignment

fn features(m: Matrix<f64>) -> FeatureMatrix<f64> {
    let rows = (0..m.rows() as u32).map(|i| (i, 1)).collect();
    FeatureMatrix::new(m, FeatureMeta { rows, ..Default::default() })
}

fn is_fit_game(g: u32) -> bool {
    g % 5 != 0
}

fn synthetic_case(src: Matrix<f64>, tgt: Matrix<f64>, mode: AlignMode) -> SimilarityReport {
    let [fs, ft, es, et] = split_and_preprocess(&features(src), &features(tgt), is_fit_game).expect("preprocess");
    let data = AlignData { fit_src: &fs, fit_tgt: &ft, eval_src: &es, eval_tgt: &et };
    match mode {
        AlignMode::Supervised => align_supervised(&data, &SupervisedOptions::default()).expect("supervised").1,
        AlignMode::Unsupervised => align_unsupervised(&data, &UnsupervisedOptions::default()).expect("unsupervised").1,
    }
}

fn synthetic_recovery() -> Outcome {
    let ((sup, noisy, unsup), secs) = timed(|| {
        let (n, h) = (2000, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let r = Matrix::<f64>::random_orthogonal(h, &mut rng);
        let f = Matrix::<f64>::random_normal(n, h, 1.0, &mut rng);
        let sup = synthetic_case(f.clone(), f.matmul(&r), AlignMode::Supervised).mean_cosine;
        let noise = Normal::new(0.0, 0.01).unwrap();
        let fr = f.matmul(&r);
        let g = Matrix::from_fn(n, h, |i, j| fr[(i, j)] + noise.sample(&mut rng));
        let noisy = synthetic_case(f, g, AlignMode::Supervised).mean_cosine;
        // Independent skewed coordinates: a rotation is identifiable from the
        // distribution alone.
        let exp = Exp::new(1.0).unwrap();
        let s = Matrix::from_fn(n, h, |_, j| (exp.sample(&mut rng) - 1.0) / (1.0 + 0.3 * j as f64));
        let unsup = synthetic_case(s.clone(), s.matmul(&r), AlignMode::Unsupervised).mean_cosine;
        (sup, noisy, unsup)
    });
    check(
        sup >= 0.999 && noisy >= 0.99 && unsup >= 0.95 && secs <= 300.0,
        format!(
            "supervised {sup:.6} (need 0.999), noise 0.01 {noisy:.6} (need 0.99), unsupervised {unsup:.6} (need 0.95), {secs:.1}s (limit 300s)"
        ),
    )
}

/// All-layer features of both 20k models on held-out test games.
fn layer_features() -> &'static (Vec<FeatureMatrix<f32>>, Vec<FeatureMatrix<f32>>) {
    static FEATS: OnceLock<(Vec<FeatureMatrix<f32>>, Vec<FeatureMatrix<f32>>)> = OnceLock::new();
    FEATS.get_or_init(|| {
        let games = data().1.subset(0..FEATURE_GAMES);
        let a = extract_all_layers(&trained(SCALES[1].1, SCALES[1].2, 0).ckpt.model, &games);
        let b = extract_all_layers(&second_20k().ckpt.model, &games);
        (a, b)
    })
}

type PairResult = Result<(AlignmentMap<f32>, SimilarityReport), String>;

/// Final-layer alignment of the second 20k model onto the first.
fn final_layer_alignment() -> &'static (PairResult, PairResult) {
    static ALIGN: OnceLock<(PairResult, PairResult)> = OnceLock::new();
    ALIGN.get_or_init(|| {
        let (a, b) = layer_features();
        let [fs, ft, es, et] =
            split_and_preprocess(b.last().unwrap(), a.last().unwrap(), is_fit_game).expect("preprocess");
        let data = AlignData { fit_src: &fs, fit_tgt: &ft, eval_src: &es, eval_tgt: &et };
        let sup = align_supervised(&data, &SupervisedOptions::default()).map_err(|e| e.to_string());
        let unsup = align_unsupervised(&data, &UnsupervisedOptions::default()).map_err(|e| e.to_string());
        (sup, unsup)
    })
}

fn cross_model_alignment() -> Outcome {
    let (sup, unsup) = final_layer_alignment();
    let (_, s) = sup.as_ref().map_err(|e| format!("supervised failed: {e}"))?;
    let detail = format!(
        "supervised {:.4} (need 0.60), baseline {:.4} (need supervised >= baseline + 0.20), {} held-out pairs",
        s.mean_cosine, s.baseline_mean_cosine, s.pairs
    );
    let (_, u) = unsup.as_ref().map_err(|e| format!("{detail}; unsupervised failed: {e}"))?;
    let gap = u.mean_cosine - s.mean_cosine;
    check(
        s.mean_cosine >= 0.60 && s.mean_cosine >= s.baseline_mean_cosine + 0.20 && gap.abs() <= 0.15,
        format!("{detail}; unsupervised {:.4} (gap {gap:+.4}, limit 0.15)", u.mean_cosine),
    )
}

fn heatmap() -> &'static Result<HeatmapGrid, String> {
    static GRID: OnceLock<Result<HeatmapGrid, String>> = OnceLock::new();
    GRID.get_or_init(|| {
        let (a, b) = layer_features();
        layer_similarity_matrix(a, b, is_fit_game, AlignMode::Supervised, &HeatmapOptions::default())
            .map_err(|e| e.to_string())
    })
}

fn heatmap_structure() -> Outcome {
    let grid = heatmap().as_ref().map_err(|e| format!("heatmap failed: {e}"))?;
    let (r, c) = grid.shape();
    let cells = r * c;
    let rank = grid.rank_of(r - 1, c - 1).ok_or("last cell missing")?;
    let quartile = cells.div_ceil(4);
    let last = grid.values[r - 1][c - 1].unwrap();
    check(
        rank <= quartile,
        format!("{r}x{c} grid, (last, last) = {last:.4} ranks {rank} of {cells} (need <= {quartile})"),
    )
}

// ---------------------------------------------------------------- visualization

fn emit_figures(dir: &Path) -> Result<Vec<PathBuf>, String> {
    std::fs::create_dir_all(dir).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    let big = &trained(SCALES[2].1, SCALES[2].2, 0).ckpt.model;
    let game = &data().1.games[0];
    for k in [0, 20, 45] {
        let bp = latent_move_projection(big, &GameRecord::new(game.moves[..k].to_vec())).map_err(|e| e.to_string())?;
        let path = dir.join(format!("board-{k}.svg"));
        std::fs::write(&path, board_svg(&bp)).map_err(|e| e.to_string())?;
        out.push(path);
    }
    let a = &trained(SCALES[1].1, SCALES[1].2, 0).ckpt.model;
    let b = &second_20k().ckpt.model;
    let map = final_layer_alignment().0.as_ref().ok().map(|(m, _)| m);
    for (name, map) in [("pca-fitted.txt", None), ("pca-supervised.txt", map)] {
        let plot = project_game(("a", a), ("b", b), game, 2, map).map_err(|e| e.to_string())?;
        let path = dir.join(name);
        std::fs::write(&path, plot.to_text()).map_err(|e| e.to_string())?;
        out.push(path);
    }
    if let Ok(grid) = heatmap() {
        let path = dir.join("heatmap.svg");
        std::fs::write(&path, grid.to_svg()).map_err(|e| e.to_string())?;
        out.push(path);
    }
    Ok(out)
}

fn validate(path: &Path) -> Result<(), String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let name = path.file_name().unwrap().to_string_lossy();
    let result = if name.starts_with("board-") {
        schema::validate_board_svg(&text)
    } else if name.starts_with("heatmap") {
        let layers = layer_features().0.len();
        schema::validate_heatmap_svg(&text, layers, layers)
    } else {
        schema::validate_plot_data(&text, &["model", "step", "x", "y"]).map(|_| ())
    };
    result.map_err(|e| format!("{name}: {e}"))
}

fn projection_legality() -> Outcome {
    let big = &trained(SCALES[2].1, SCALES[2].2, 0).ckpt.model;
    let test = &data().1;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut legal = 0;
    for _ in 0..500 {
        let game = &test.games[rng.random_range(0..test.len())];
        let k = rng.random_range(0..game.len());
        let bp = latent_move_projection(big, &GameRecord::new(game.moves[..k].to_vec())).map_err(|e| e.to_string())?;
        legal += bp.top_is_legal() as usize;
    }
    let frac = legal as f64 / 500.0;

    let root = tempfile::tempdir().map_err(|e| e.to_string())?;
    let first = emit_figures(&root.path().join("a"))?;
    let second = emit_figures(&root.path().join("b"))?;
    let mut problems = Vec::new();
    for (p, q) in first.iter().zip(&second) {
        if let Err(e) = validate(p) {
            problems.push(e);
        }
        if std::fs::read(p).ok() != std::fs::read(q).ok() {
            problems.push(format!("{} differs between runs", p.display()));
        }
    }
    let detail = format!(
        "top candidate legal on {legal}/500 = {frac:.3} (need 0.80); {} figure files validated and reproduced",
        first.len()
    );
    if !problems.is_empty() {
        return Err(format!("{detail}; {}", problems.join("; ")));
    }
    check(frac >= 0.80 && first.len() == 6, detail)
}

// ---------------------------------------------------------------- CLI

fn smoke_manifest() -> Outcome {
    let manifest = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../manifests/smoke.toml");
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let (status, secs) = timed(|| {
        Command::new(env!("CARGO_BIN_EXE_othello-probe"))
            .args(["run", "--manifest"])
            .arg(&manifest)
            .arg("--out")
            .arg(out.path())
            .status()
    });
    let status = status.map_err(|e| e.to_string())?;
    let list = |sub: &str| -> Vec<String> {
        std::fs::read_dir(out.path().join(sub))
            .map(|d| d.filter_map(|e| e.ok()).map(|e| e.file_name().to_string_lossy().into_owned()).collect())
            .unwrap_or_default()
    };
    let reports = list("reports");
    let figures = list("figures");
    let has = |v: &[String], p: &str| v.iter().any(|n| n.starts_with(p));
    let mut missing: Vec<&str> = Vec::new();
    for (v, p) in [
        (&reports, "eval-"),
        (&reports, "align-supervised"),
        (&reports, "align-unsupervised"),
        (&reports, "board-"),
        (&figures, "board-"),
    ] {
        if !has(v, p) {
            missing.push(p);
        }
    }
    for f in figures.iter().filter(|f| f.starts_with("board-")) {
        let text = std::fs::read_to_string(out.path().join("figures").join(f)).map_err(|e| e.to_string())?;
        schema::validate_board_svg(&text).map_err(|e| format!("{f}: {e}"))?;
    }
    check(
        status.success() && secs <= 600.0 && missing.is_empty(),
        format!(
            "exit {:?}, {secs:.1}s (limit 600s), {} reports, {} figures, missing {missing:?}",
            status.code(),
            reports.len(),
            figures.len()
        ),
    )
}
