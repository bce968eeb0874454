use std::path::{Path, PathBuf};

use othello_probe::align::{
    align_supervised, align_unsupervised, layer_similarity_matrix, split_and_preprocess, AlignData, AlignMode,
    AlignmentMap, HeatmapOptions, SimilarityReport,
};
use othello_probe::engine::{generate_games, length_stats, read_dataset, Dataset, GameRecord};
use othello_probe::eval::{eval_hop, parse_scale, sweep, sweep_plot_data, write_table, ScaleSpec, TableRow};
use othello_probe::model::{extract_all_layers, train_with, FeatureMatrix, ModelCheckpoint, ModelConfig, TrainConfig};
use othello_probe::viz::{board_svg, latent_move_projection, project_game};

use crate::error::CliError;
use crate::manifest::Manifest;
use crate::store::{key, Store};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Games with index divisible by 5 are held out of alignment fitting.
fn is_fit_game(g: u32) -> bool {
    g % 5 != 0
}

pub struct Ctx {
    pub manifest: Manifest,
    pub manifest_hash: String,
    pub store: Store,
}

type Ckpt = ModelCheckpoint<f32>;

impl Ctx {
    fn provenance(&self) -> String {
        format!("# manifest={} version={VERSION}\n", self.manifest_hash)
    }

    fn write(&self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if self.store.write_once(path, bytes)? {
            log::info!("wrote {}", path.display());
        }
        Ok(())
    }

    /// The manifest's dataset, materialized under `datasets/`.
    pub fn dataset(&self) -> Result<(Dataset, PathBuf), CliError> {
        let ds = match &self.manifest.dataset.path {
            Some(p) => read_dataset(p)?,
            None => generate_games(self.manifest.dataset.count, self.manifest.dataset.seed),
        };
        let path = self.store.path("datasets", &format!("{}.txt", &ds.content_hash()[..16]));
        self.write(&path, ds.to_text().as_bytes())?;
        Ok((ds, path))
    }

    fn test_set(&self, ds: &Dataset) -> Dataset {
        let test = ds.split().test;
        match self.manifest.eval.test_games {
            0 => test,
            n => test.subset(0..n.min(test.len())),
        }
    }

    fn train_set(&self, ds: &Dataset, scale: Option<usize>) -> Result<Dataset, CliError> {
        let pool = ds.split().train;
        match scale {
            None => Ok(pool),
            Some(n) if n <= pool.len() => Ok(pool.subset(0..n)),
            Some(n) => Err(CliError::Usage(format!("scale {n} exceeds the {} training games", pool.len()))),
        }
    }

    fn checkpoint_path(&self, name: &str, cfg: &ModelConfig, tcfg: &TrainConfig, train: &Dataset) -> PathBuf {
        let t = toml::to_string(tcfg).expect("train config serializes");
        let k = key(&[&cfg.to_kv(), &t, &train.content_hash()]);
        self.store.path("checkpoints", &format!("{name}-{k}.ckpt"))
    }

    fn train_one(&self, name: &str, cfg: &ModelConfig, tcfg: &TrainConfig, train: &Dataset) -> Result<Ckpt, CliError> {
        let path = self.checkpoint_path(name, cfg, tcfg, train);
        if path.exists() {
            log::info!("{name}: reusing {}", path.display());
            return Ok(ModelCheckpoint::load(&path)?);
        }
        eprintln!("training {name} on {} games for {} steps", train.len(), tcfg.total_steps);
        let ckpt = train_with::<f32>(cfg.clone(), tcfg.clone(), train, |p| {
            log::info!("{name} step {} loss {:.4}", p.step, p.loss);
        })?;
        self.write(&path, &ckpt.to_bytes())?;
        Ok(ckpt)
    }

    fn load(&self, name: &str, cfg: &ModelConfig, train: &Dataset) -> Result<Ckpt, CliError> {
        let path = self.checkpoint_path(name, cfg, &self.manifest.train, train);
        if !path.exists() {
            return Err(CliError::MissingArtifact("checkpoint", path));
        }
        Ok(ModelCheckpoint::load(&path)?)
    }

    fn model(&self, name: &str) -> Result<ModelConfig, CliError> {
        self.manifest
            .model_list()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| CliError::Usage(format!("no model named {name:?}")))
    }

    /// All decoder layers on `games`, cached under `features/`.
    fn features(&self, name: &str, ckpt: &Ckpt, games: &Dataset) -> Result<Vec<FeatureMatrix<f32>>, CliError> {
        let k = key(&[&ckpt.content_hash(), &games.content_hash()]);
        let paths: Vec<PathBuf> =
            (0..ckpt.config().layers).map(|l| self.store.path("features", &format!("{name}-L{l}-{k}.feat"))).collect();
        if paths.iter().all(|p| p.exists()) {
            return paths.iter().map(|p| FeatureMatrix::load(p).map_err(CliError::from)).collect();
        }
        let layers = extract_all_layers(&ckpt.model, games);
        for (f, p) in layers.iter().zip(&paths) {
            self.write(p, &f.to_bytes())?;
        }
        Ok(layers)
    }
}

pub fn gen(ctx: &Ctx) -> Result<String, CliError> {
    let (ds, path) = ctx.dataset()?;
    let s = length_stats(&ds);
    Ok(format!(
        "gen: {} games, mean length {:.3}, full-length fraction {:.4} -> {}",
        ds.len(),
        s.mean,
        s.full_length_fraction,
        path.display()
    ))
}

pub fn train(ctx: &Ctx, scale: Option<usize>) -> Result<String, CliError> {
    let (ds, _) = ctx.dataset()?;
    let train = ctx.train_set(&ds, scale)?;
    let mut done = Vec::new();
    for (name, cfg) in ctx.manifest.model_list() {
        let ckpt = ctx.train_one(&name, &cfg, &ctx.manifest.train, &train)?;
        done.push(format!("{name} loss {:.4}", ckpt.meta.final_loss));
    }
    Ok(format!("train: {} games, {} steps: {}", train.len(), ctx.manifest.train.total_steps, done.join(", ")))
}

pub fn eval(ctx: &Ctx, hop: Option<u8>, scale: Option<usize>) -> Result<String, CliError> {
    let (ds, _) = ctx.dataset()?;
    let train = ctx.train_set(&ds, scale)?;
    let test = ctx.test_set(&ds);
    let hops = hop.map_or_else(|| ctx.manifest.eval.hops.clone(), |h| vec![h]);
    let scale_label = scale.map_or_else(|| "all".to_string(), |s| s.to_string());
    let mut rows = Vec::new();
    let mut parts = Vec::new();
    for (name, cfg) in ctx.manifest.model_list() {
        let ckpt = ctx.load(&name, &cfg, &train)?;
        let id = ckpt.content_hash();
        for &h in &hops {
            let report = eval_hop(&ckpt.model, &test, h, &id)
                .with_provenance("manifest", &ctx.manifest_hash)
                .with_provenance("version", VERSION)
                .with_provenance("model", &name);
            let k = key(&[&ctx.manifest_hash, &id, &test.content_hash()]);
            ctx.write(&ctx.store.path("reports", &format!("eval-{name}-hop{h}-{k}.txt")), report.to_text().as_bytes())?;
            parts.push(format!("{name} {h}-hop {:.4}", report.error_rate));
            rows.push(TableRow { model: name.clone(), scale: scale_label.clone(), hop: h, report: Some(report), error: None });
        }
    }
    let k = key(&[&ctx.manifest_hash, &train.content_hash(), &test.content_hash(), &format!("{hops:?}")]);
    let table = ctx.store.path("reports", &format!("eval-table-{k}.tsv"));
    ctx.write(&table, write_table(&rows).as_bytes())?;
    Ok(format!("eval: {} test games: {} -> {}", test.len(), parts.join(", "), table.display()))
}

fn fit(data: &AlignData<'_, f32>, mode: AlignMode, m: &Manifest) -> Result<(AlignmentMap<f32>, SimilarityReport), CliError> {
    Ok(match mode {
        AlignMode::Supervised => align_supervised(data, &m.align.supervised())?,
        AlignMode::Unsupervised => align_unsupervised(data, &m.align.unsupervised())?,
    })
}

pub fn align(ctx: &Ctx, mode: Option<AlignMode>, layers: Option<[usize; 2]>) -> Result<String, CliError> {
    let m = &ctx.manifest;
    let (ds, _) = ctx.dataset()?;
    let train = ctx.train_set(&ds, None)?;
    let test = ds.split().test;
    let games = test.subset(0..m.align.feature_games.min(test.len()));
    let (src, tgt) = m.align_pair()?;
    let src_ckpt = ctx.load(&src, &ctx.model(&src)?, &train)?;
    let tgt_ckpt = ctx.load(&tgt, &ctx.model(&tgt)?, &train)?;
    let fs = ctx.features(&src, &src_ckpt, &games)?;
    let ft = ctx.features(&tgt, &tgt_ckpt, &games)?;
    let [ls, lt] = layers.or(m.align.layers).unwrap_or([fs.len() - 1, ft.len() - 1]);
    for (l, n, who) in [(ls, fs.len(), &src), (lt, ft.len(), &tgt)] {
        if l >= n {
            return Err(CliError::Usage(format!("layer {l} out of range for {who} ({n} layers)")));
        }
    }
    let [a, b, c, d] = split_and_preprocess(&fs[ls], &ft[lt], is_fit_game)?;
    let data = AlignData { fit_src: &a, fit_tgt: &b, eval_src: &c, eval_tgt: &d };
    let modes = mode.map_or_else(|| m.modes(), |x| vec![x]);
    let mut parts = Vec::new();
    for mode in modes {
        let (map, report) = fit(&data, mode, m)?;
        let k = key(&[&ctx.manifest_hash, &src_ckpt.content_hash(), &tgt_ckpt.content_hash(), &games.content_hash()]);
        let stem = format!("align-{mode}-{src}-L{ls}-{tgt}-L{lt}-{k}");
        ctx.write(&ctx.store.path("reports", &format!("{stem}.map")), &map.to_bytes())?;
        let text = format!(
            "{}# mode={mode} source={src} source_layer={ls} target={tgt} target_layer={lt} fit_rows={} eval_rows={}\n{}",
            ctx.provenance(),
            a.rows(),
            c.rows(),
            report.to_text()
        );
        ctx.write(&ctx.store.path("reports", &format!("{stem}.txt")), text.as_bytes())?;
        parts.push(format!("{mode} {:.4} (baseline {:.4})", report.mean_cosine, report.baseline_mean_cosine));
        if m.align.heatmap {
            let opts = HeatmapOptions { supervised: m.align.supervised(), unsupervised: m.align.unsupervised() };
            let grid = layer_similarity_matrix(&fs, &ft, is_fit_game, mode, &opts)?;
            let hk = key(&[&k, "heatmap"]);
            let tsv = format!("{}{}", ctx.provenance(), grid.to_text());
            ctx.write(&ctx.store.path("reports", &format!("heatmap-{mode}-{hk}.tsv")), tsv.as_bytes())?;
            ctx.write(&ctx.store.path("figures", &format!("heatmap-{mode}-{hk}.svg")), grid.to_svg().as_bytes())?;
        }
    }
    Ok(format!("align: {src} L{ls} onto {tgt} L{lt}, {} held-out rows: {}", c.rows(), parts.join(", ")))
}

pub fn viz(ctx: &Ctx) -> Result<String, CliError> {
    let m = &ctx.manifest;
    let (ds, _) = ctx.dataset()?;
    let train = ctx.train_set(&ds, None)?;
    let test = ds.split().test;
    let game = test
        .games
        .get(m.viz.game)
        .ok_or_else(|| CliError::Usage(format!("viz.game {} outside the {} test games", m.viz.game, test.len())))?;
    let models = m.model_list();
    let (name, cfg) = &models[0];
    let ckpt = ctx.load(name, cfg, &train)?;
    let k = key(&[&ctx.manifest_hash, &ckpt.content_hash(), &game.labels()]);
    let mut legal = 0;
    for i in 0..m.viz.projections {
        let len = i * game.len() / m.viz.projections.max(1);
        let bp = latent_move_projection(&ckpt.model, &GameRecord::new(game.moves[..len].to_vec()))?;
        legal += bp.top_is_legal() as usize;
        let stem = format!("board-{name}-{len}-{k}");
        ctx.write(&ctx.store.path("figures", &format!("{stem}.svg")), board_svg(&bp).as_bytes())?;
        ctx.write(&ctx.store.path("reports", &format!("{stem}.txt")), format!("{}{}", ctx.provenance(), bp.to_text()).as_bytes())?;
    }
    let mut plot = String::new();
    if models.len() >= 2 {
        let (src, tgt) = m.align_pair()?;
        let s = ctx.load(&src, &ctx.model(&src)?, &train)?;
        let t = ctx.load(&tgt, &ctx.model(&tgt)?, &train)?;
        let p = project_game((tgt.as_str(), &t.model), (src.as_str(), &s.model), game, m.viz.pca_dim, None)?;
        let pk = key(&[&k, &s.content_hash(), &t.content_hash()]);
        let path = ctx.store.path("figures", &format!("pca-{tgt}-{src}-{pk}.txt"));
        ctx.write(&path, p.to_text().as_bytes())?;
        plot = format!(", PCA explained {:.3}", p.pca.explained_variance_ratio.iter().sum::<f64>());
    }
    Ok(format!("viz: {} board projections for {name}, {legal} with a legal top candidate{plot}", m.viz.projections))
}

pub fn run_sweep(ctx: &Ctx) -> Result<String, CliError> {
    let m = &ctx.manifest;
    let s = m.sweep.as_ref().ok_or_else(|| CliError::Manifest { path: "sweep".into(), message: "section required".into() })?;
    let scales: Vec<ScaleSpec> = s
        .scales
        .iter()
        .zip(&s.steps)
        .map(|(label, &steps)| ScaleSpec { label: label.clone(), games: parse_scale(label).expect("validated"), total_steps: steps })
        .collect();
    let (ds, _) = ctx.dataset()?;
    let pool = ds.split().train;
    let test = ctx.test_set(&ds);
    let configs = m.model_list();
    let table = sweep::<f32>(&configs, &scales, &s.hops, &pool, &test, |cell| {
        let tcfg = TrainConfig { total_steps: cell.scale.total_steps, ..m.train.clone() };
        ctx.train_one(cell.model, cell.config, &tcfg, &cell.train).map_err(|e| match e {
            CliError::Model(e) => e,
            other => othello_probe::model::ModelError::Data(other.to_string()),
        })
    })?;
    let k = key(&[&ctx.manifest_hash, &ds.content_hash()]);
    let tsv = ctx.store.path("reports", &format!("sweep-table-{k}.tsv"));
    ctx.write(&tsv, format!("{}{}", ctx.provenance(), table.to_text()).as_bytes())?;
    ctx.write(&ctx.store.path("figures", &format!("sweep-{k}.txt")), sweep_plot_data(&table, &scales).as_bytes())?;
    let failed = table.rows.iter().filter(|r| r.report.is_none()).count();
    Ok(format!("sweep: {} cells, {failed} failed -> {}", table.rows.len(), tsv.display()))
}

pub fn run(ctx: &Ctx) -> Result<String, CliError> {
    let steps = [gen(ctx)?, train(ctx, None)?, eval(ctx, None, None)?];
    let mut lines: Vec<String> = steps.into_iter().collect();
    if ctx.manifest.model_list().len() >= 2 {
        lines.push(align(ctx, None, None)?);
    }
    lines.push(viz(ctx)?);
    if ctx.manifest.sweep.is_some() {
        lines.push(run_sweep(ctx)?);
    }
    for l in &lines {
        eprintln!("{l}");
    }
    let name = if ctx.manifest.name.is_empty() { "unnamed" } else { &ctx.manifest.name };
    Ok(format!("run: {} stages complete for manifest {name} ({})", lines.len(), &ctx.manifest_hash[..16]))
}
