//! `resiren`: generate grids, pretrain encoders, embed points, run probes and analyses.
//!
//! Every command writes into `--out` and leaves a `manifest.json` there with the
//! merged configuration; passing that manifest back as `--config` replays the run.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use resiren_core::analysis::Ablation;
use resiren_core::net::{FirstLayer, ResidualMode};
use resiren_core::probe::{FeaturePolicy, ProbeKind};

use config::{RunConfig, TaskName};

#[derive(Parser)]
#[command(name = "resiren", version, about = "Residual sinusoidal location encoder")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and normalize a synthetic climatology grid.
    Gen(GenArgs),
    /// Pretrain an encoder on a grid.
    Pretrain(PretrainArgs),
    /// Write embeddings for the points of a CSV file.
    Embed(EmbedArgs),
    /// Probe frozen embeddings, or train a from-scratch baseline, on a task.
    Probe(ProbeArgs),
    /// Reconstruction-error report and optional prediction-grid export.
    Analyze(AnalyzeArgs),
    /// Depth sweep and ablation table.
    Scale(ScaleArgs),
}

#[derive(Args)]
struct GenArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    vars: Option<usize>,
}

#[derive(Args)]
struct PretrainArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    embedding: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    march_only: bool,
    #[arg(long)]
    concat_months: bool,
    /// off, half or sqrt2.
    #[arg(long)]
    residual: Option<ResidualMode>,
    /// hsiren or sine.
    #[arg(long)]
    first_layer: Option<FirstLayer>,
}

#[derive(Args)]
struct EmbedArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV with columns lon_deg, lat_deg and optionally month.
    #[arg(long)]
    points: PathBuf,
    /// obs, seasonal or rec.
    #[arg(long)]
    months: Option<FeaturePolicy>,
}

#[derive(Args)]
struct ProbeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: PathBuf,
    /// Required unless --baseline is given.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_enum)]
    task: Option<TaskName>,
    /// Use an existing task CSV instead of building one.
    #[arg(long)]
    task_file: Option<PathBuf>,
    /// obs, seasonal or rec.
    #[arg(long)]
    months: Option<FeaturePolicy>,
    /// linear or mlp.
    #[arg(long)]
    probe: Option<ProbeKind>,
    /// fs-loc, fs-ch or fs-loc-ch.
    #[arg(long)]
    baseline: Option<ProbeKind>,
    #[arg(long)]
    n_inits: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    n_locations: Option<usize>,
    /// Spatial aggregation cells as ROWSxCOLS.
    #[arg(long)]
    cells: Option<String>,
    /// Train a probe on this task and export its predictions.
    #[arg(long, value_enum)]
    export_task: Option<TaskName>,
    #[arg(long)]
    export_month: Option<u8>,
    #[arg(long)]
    export_output: Option<usize>,
    /// Export resolution as ROWSxCOLS.
    #[arg(long)]
    export_size: Option<String>,
}

#[derive(Args)]
struct ScaleArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    grid: PathBuf,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    modes: Option<Vec<ResidualMode>>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    max_steps: Option<u64>,
    /// Ablation rows, e.g. full,siren,march-only,rec-values.
    #[arg(long, value_delimiter = ',')]
    ablations: Option<Vec<Ablation>>,
    /// Skip the depth sweep and only run ablations.
    #[arg(long)]
    no_sweep: bool,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn parse_size(s: &str) -> anyhow::Result<(usize, usize)> {
    let (r, c) = s
        .split_once('x')
        .ok_or_else(|| anyhow::anyhow!("expected ROWSxCOLS, got {s:?}"))?;
    Ok((r.trim().parse()?, c.trim().parse()?))
}

fn base_config(common: &Common) -> anyhow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, common.seed);
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Gen(a) => {
            let mut cfg = base_config(&a.common)?;
            set(&mut cfg.grid.width, a.width);
            set(&mut cfg.grid.height, a.height);
            set(&mut cfg.grid.vars, a.vars);
            commands::gen(&cfg, &a.common.out)
        }
        Command::Pretrain(a) => {
            let mut cfg = base_config(&a.common)?;
            set(&mut cfg.network.depth, a.depth);
            set(&mut cfg.network.hidden_dim, a.hidden);
            set(&mut cfg.network.embedding_dim, a.embedding);
            set(&mut cfg.network.residual, a.residual);
            set(&mut cfg.network.first_layer, a.first_layer);
            set(&mut cfg.train.max_epochs, a.epochs);
            set(&mut cfg.train.batch_size, a.batch_size);
            set(&mut cfg.train.adam.learning_rate, a.lr);
            set(&mut cfg.train.patience, a.patience);
            if a.max_steps.is_some() {
                cfg.train.max_steps = a.max_steps;
            }
            cfg.train.march_only |= a.march_only;
            cfg.train.concat_months |= a.concat_months;
            commands::pretrain(&mut cfg, &a.grid, &a.common.out)
        }
        Command::Embed(a) => {
            let mut cfg = base_config(&a.common)?;
            if a.months.is_some() {
                cfg.task.months = a.months;
            }
            commands::embed(&cfg, &a.checkpoint, &a.points, &a.common.out)
        }
        Command::Probe(a) => {
            let mut cfg = base_config(&a.common)?;
            set(&mut cfg.task.name, a.task);
            if a.months.is_some() {
                cfg.task.months = a.months;
            }
            match (a.probe, a.baseline) {
                (Some(_), Some(_)) => {
                    anyhow::bail!("--probe and --baseline are mutually exclusive")
                }
                (Some(k), None) if !matches!(k, ProbeKind::Linear | ProbeKind::Mlp) => {
                    anyhow::bail!("--probe takes linear or mlp; use --baseline for {}", k.name())
                }
                (None, Some(ProbeKind::Linear | ProbeKind::Mlp)) => {
                    anyhow::bail!("--baseline takes fs-loc, fs-ch or fs-loc-ch")
                }
                (p, b) => set(&mut cfg.probe.kind, p.or(b)),
            }
            set(&mut cfg.probe.n_inits, a.n_inits);
            set(&mut cfg.probe.epochs, a.epochs);
            set(&mut cfg.probe.adam.learning_rate, a.lr);
            commands::probe(
                &cfg,
                &a.grid,
                a.checkpoint.as_deref(),
                a.task_file.as_deref(),
                &a.common.out,
            )
        }
        Command::Analyze(a) => {
            let mut cfg = base_config(&a.common)?;
            set(&mut cfg.analysis.n_locations, a.n_locations);
            if let Some(s) = &a.cells {
                (cfg.analysis.cell_rows, cfg.analysis.cell_cols) = parse_size(s)?;
            }
            if a.export_task.is_some() {
                cfg.analysis.export_task = a.export_task;
            }
            set(&mut cfg.analysis.export_month, a.export_month);
            set(&mut cfg.analysis.export_output, a.export_output);
            if let Some(s) = &a.export_size {
                (cfg.analysis.export_rows, cfg.analysis.export_cols) = parse_size(s)?;
            }
            commands::analyze(&cfg, &a.grid, &a.checkpoint, &a.common.out)
        }
        Command::Scale(a) => {
            let mut cfg = base_config(&a.common)?;
            set(&mut cfg.scale.depths, a.depths);
            set(&mut cfg.scale.modes, a.modes);
            set(&mut cfg.scale.seeds, a.seeds);
            set(&mut cfg.scale.max_steps, a.max_steps);
            set(&mut cfg.scale.ablations, a.ablations);
            commands::scale(&mut cfg, &a.grid, !a.no_sweep, &a.common.out)
        }
    }
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    for cause in e.chain() {
        if let Some(err) = cause.downcast_ref::<resiren_core::Error>() {
            return err.kind();
        }
        if cause.is::<std::io::Error>() {
            return "io";
        }
        if cause.is::<toml::de::Error>() {
            return "config";
        }
        if cause.is::<serde_json::Error>() {
            return "json";
        }
        if cause.is::<csv::Error>() {
            return "csv";
        }
    }
    "invalid_argument"
}

/// Prints `error kind=<kind> msg=<json string>` on one line.
fn report(kind: &str, msg: &str) {
    let flat = msg.split_whitespace().collect::<Vec<_>>().join(" ");
    eprintln!("error kind={kind} msg={}", serde_json::Value::from(flat));
}

fn init_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("RESIREN_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| anyhow::anyhow!("RESIREN_THREADS must be a positive integer, got {v:?}"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or_default();
            report("usage", first.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    if let Err(e) = init_threads().and_then(|()| run(cli)) {
        report(error_kind(&e), &format!("{e:#}"));
        return ExitCode::FAILURE;
    }
    ExitCode::SUCCESS
}
