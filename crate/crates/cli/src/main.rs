mod commands;
mod error;
mod manifest;
mod store;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mimalloc::MiMalloc;
use othello_probe::align::AlignMode;
use othello_probe::eval::parse_scale;

use crate::commands::Ctx;
use crate::error::CliError;
use crate::manifest::Manifest;
use crate::store::{sha256_hex, Store};

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

/// Othello sequence models: data generation, training, legal-move
/// evaluation, representation alignment and figures.
#[derive(Parser)]
#[command(name = "othello-probe", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment manifest (TOML). Built-in defaults when omitted.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output root; overrides the manifest's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dataset seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Dataset size override.
    #[arg(long)]
    count: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate (or ingest) the dataset.
    Gen(Common),
    /// Train every manifest model.
    Train {
        #[command(flatten)]
        common: Common,
        /// Train on the first N training games, e.g. `2k`.
        #[arg(long)]
        scale: Option<String>,
    },
    /// Score trained models with the 1-hop and 2-hop error rate.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=2))]
        hop: Option<u8>,
        #[arg(long)]
        scale: Option<String>,
    },
    /// Align the hidden states of two trained models.
    Align {
        #[command(flatten)]
        common: Common,
        /// `supervised` or `unsupervised`; both manifest modes when omitted.
        #[arg(long)]
        mode: Option<String>,
        /// Source and target layer, e.g. `3,3`.
        #[arg(long)]
        layers: Option<String>,
    },
    /// Board projections and PCA plot data.
    Viz(Common),
    /// Train and evaluate across data scales.
    Sweep(Common),
    /// gen, train, eval, align, viz (and sweep when configured).
    Run(Common),
}

fn context(c: &Common) -> Result<Ctx, CliError> {
    let (mut manifest, text) = match &c.manifest {
        Some(p) => Manifest::load(p)?,
        None => (Manifest::parse("")?, String::new()),
    };
    if let Some(s) = c.seed {
        manifest.dataset.seed = s;
    }
    if let Some(n) = c.count {
        manifest.dataset.count = n;
        manifest.validate()?;
    }
    let overrides = format!("seed={:?} count={:?}", c.seed, c.count);
    let manifest_hash = sha256_hex(&[text.as_bytes(), overrides.as_bytes()]);
    let out = c.out.clone().or_else(|| manifest.out_dir.clone()).unwrap_or_else(|| Path::new("out").to_path_buf());
    Ok(Ctx { manifest, manifest_hash, store: Store::open(&out)? })
}

fn scale(s: &Option<String>) -> Result<Option<usize>, CliError> {
    s.as_deref().map(parse_scale).transpose().map_err(CliError::from)
}

fn layers(s: &Option<String>) -> Result<Option<[usize; 2]>, CliError> {
    let Some(s) = s else { return Ok(None) };
    let bad = || CliError::Usage(format!("--layers expects `source,target`, got {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok(Some([a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?]))
}

fn dispatch(cmd: Command) -> Result<String, CliError> {
    match cmd {
        Command::Gen(c) => commands::gen(&context(&c)?),
        Command::Train { common, scale: s } => commands::train(&context(&common)?, scale(&s)?),
        Command::Eval { common, hop, scale: s } => commands::eval(&context(&common)?, hop, scale(&s)?),
        Command::Align { common, mode, layers: l } => {
            let mode = mode.map(|m| m.parse::<AlignMode>()).transpose()?;
            commands::align(&context(&common)?, mode, layers(&l)?)
        }
        Command::Viz(c) => commands::viz(&context(&c)?),
        Command::Sweep(c) => commands::run_sweep(&context(&c)?),
        Command::Run(c) => commands::run(&context(&c)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = std::env::var("OTHELLO_PROBE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size thread pool: {e}");
        }
    }
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
