use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use resiren_core::analysis::{
    export_prediction_grid, reconstruction_error, run_ablations, scaling_sweep, write_ablation_csv, write_scaling_csv,
    AblationConfig, AblationTasks, CheckpointReconstructor, ErrorConfig, PredictionRegion, ScalingConfig,
};
use resiren_core::data::{
    build_biomes_task, build_sdm_task, build_traits_task, fit_normalization, generate_synthetic_climatology, ClimGrid,
    SplitFractions, TaskDataset, TaskKind,
};
use resiren_core::net::{load_checkpoint, save_checkpoint, Checkpoint};
use resiren_core::probe::{
    embed as embed_points, fit_probe, run_probe_suite, write_reports_csv, ClimateFeatures, ConcatFeatures,
    EmbeddingProvider, FeaturePolicy, FeatureSource, LocationFeatures, ProbeData, ProbeKind, ProbeSpec, QueryPoint,
};
use resiren_core::train::{pretrain as run_pretrain, write_history_csv};
use serde::Deserialize;

use crate::config::{RunConfig, TaskName};
use crate::manifest::{sub_seeds, RunManifest};

pub const GRID_FILE: &str = "grid.cgrd";
pub const CHECKPOINT_FILE: &str = "checkpoint.rsn";

/// Collects outputs and writes the manifest once the command succeeds.
struct Run {
    out: PathBuf,
    manifest: RunManifest,
    started: Instant,
}

impl Run {
    fn start(command: &str, cfg: &RunConfig, out: &Path, inputs: &[&Path]) -> anyhow::Result<Self> {
        std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        let mut manifest = RunManifest::new(command, cfg);
        manifest.inputs = inputs.iter().map(|p| p.to_path_buf()).collect();
        Ok(Self {
            out: out.to_path_buf(),
            manifest,
            started: Instant::now(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.out.join(name);
        self.manifest.outputs.push(p.clone());
        p
    }

    fn writer(&mut self, name: &str) -> anyhow::Result<BufWriter<File>> {
        let p = self.path(name);
        Ok(BufWriter::new(
            File::create(&p).with_context(|| format!("creating {}", p.display()))?,
        ))
    }

    fn text(&mut self, name: &str, body: String) -> anyhow::Result<()> {
        let p = self.path(name);
        std::fs::write(&p, body + "\n").with_context(|| format!("writing {}", p.display()))
    }

    fn finish(mut self, cfg: &RunConfig) -> anyhow::Result<()> {
        self.manifest.config = cfg.clone();
        self.manifest.wallclock_s = self.started.elapsed().as_secs_f64();
        self.manifest.write(&self.out)
    }
}

fn seed(cfg: &RunConfig, name: &str) -> u64 {
    sub_seeds(cfg.seed)[name]
}

fn default_policy(kind: TaskKind) -> FeaturePolicy {
    match kind {
        TaskKind::Sdm { .. } => FeaturePolicy::ObservationMonth,
        _ => FeaturePolicy::Seasonal,
    }
}

fn build_task(cfg: &RunConfig, grid: &ClimGrid, name: TaskName) -> anyhow::Result<TaskDataset> {
    let t = &cfg.task;
    let s = seed(cfg, "task");
    Ok(match name {
        TaskName::Biomes => build_biomes_task(grid, t.n_points, t.n_classes, SplitFractions::BIOMES, s)?,
        TaskName::Sdm => build_sdm_task(grid, t.n_species, t.n_occurrences, SplitFractions::SDM, s)?,
        TaskName::Traits => build_traits_task(grid, t.n_points, t.n_targets, SplitFractions::TRAITS, s)?,
    })
}

fn load_grid(path: &Path) -> anyhow::Result<ClimGrid> {
    ClimGrid::load(path).with_context(|| format!("loading grid {}", path.display()))
}

fn load_ckpt(path: &Path) -> anyhow::Result<Checkpoint> {
    load_checkpoint(path).with_context(|| format!("loading checkpoint {}", path.display()))
}

pub fn gen(cfg: &RunConfig, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("gen", cfg, out, &[])?;
    let g = &cfg.grid;
    let grid = fit_normalization(generate_synthetic_climatology(
        g.width,
        g.height,
        g.vars,
        seed(cfg, "grid"),
    )?)?;
    grid.save(run.path(GRID_FILE))?;
    run.finish(cfg)
}

pub fn pretrain(cfg: &mut RunConfig, grid_path: &Path, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("pretrain", cfg, out, &[grid_path])?;
    let grid = load_grid(grid_path)?;
    let (input_dim, output_dim) = cfg.train.io_dims(grid.n_vars());
    if cfg.network.input_dim != 5 || cfg.train.concat_months {
        cfg.network.input_dim = input_dim;
    }
    cfg.network.output_dim = output_dim;
    cfg.train.seed = seed(cfg, "train");
    cfg.train.init_seed = seed(cfg, "init");
    let outcome = run_pretrain(&grid, &cfg.network, &cfg.train)?;
    save_checkpoint(run.path(CHECKPOINT_FILE), &outcome.checkpoint)?;
    write_history_csv(&outcome.history, run.writer("loss.csv")?)?;
    run.finish(cfg)
}

#[derive(Deserialize)]
struct PointRow {
    lon_deg: f64,
    lat_deg: f64,
    #[serde(default)]
    month: Option<u8>,
}

pub fn embed(cfg: &RunConfig, ckpt_path: &Path, points_path: &Path, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("embed", cfg, out, &[ckpt_path, points_path])?;
    let ckpt = load_ckpt(ckpt_path)?;
    let mut reader =
        csv::Reader::from_path(points_path).with_context(|| format!("reading {}", points_path.display()))?;
    let points = reader
        .deserialize::<PointRow>()
        .map(|r| {
            let r = r?;
            Ok(QueryPoint::new(r.lon_deg, r.lat_deg, r.month)?)
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    let policy = cfg.task.months.unwrap_or(FeaturePolicy::ObservationMonth);
    let provider = EmbeddingProvider::new(ckpt, policy);
    let features = embed_points(&provider, &points)?;
    let mut w = csv::Writer::from_writer(run.writer("embeddings.csv")?);
    let mut header = vec!["lon_deg".to_string(), "lat_deg".into(), "month".into()];
    header.extend((0..features.ncols()).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for (p, row) in points.iter().zip(features.rows()) {
        let mut rec = vec![
            p.lon_deg.to_string(),
            p.lat_deg.to_string(),
            p.month.map(|m| m.to_string()).unwrap_or_default(),
        ];
        rec.extend(row.iter().map(f32::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    drop(w);
    run.finish(cfg)
}

fn feature_source<'g>(
    kind: ProbeKind,
    grid: &'g ClimGrid,
    ckpt: Option<Checkpoint>,
    policy: FeaturePolicy,
) -> anyhow::Result<Box<dyn FeatureSource + 'g>> {
    Ok(match kind {
        ProbeKind::FsLoc => Box::new(LocationFeatures),
        ProbeKind::FsCh => Box::new(ClimateFeatures { grid }),
        ProbeKind::FsLocCh => Box::new(ConcatFeatures(LocationFeatures, ClimateFeatures { grid })),
        ProbeKind::Linear | ProbeKind::Mlp => match ckpt {
            Some(c) => Box::new(EmbeddingProvider::new(c, policy)),
            None => bail!("--checkpoint is required for embedding probes"),
        },
    })
}

pub fn probe(
    cfg: &RunConfig,
    grid_path: &Path,
    ckpt_path: Option<&Path>,
    task_file: Option<&Path>,
    out: &Path,
) -> anyhow::Result<()> {
    let mut inputs = vec![grid_path];
    inputs.extend(ckpt_path);
    inputs.extend(task_file);
    let mut run = Run::start("probe", cfg, out, &inputs)?;
    let grid = load_grid(grid_path)?;
    let dataset = match task_file {
        Some(p) => TaskDataset::load(p).with_context(|| format!("loading task {}", p.display()))?,
        None => build_task(cfg, &grid, cfg.task.name)?,
    };
    dataset.save(run.path("task.csv"))?;
    let ckpt = ckpt_path.map(load_ckpt).transpose()?;
    let policy = cfg.task.months.unwrap_or_else(|| default_policy(dataset.kind));
    let source = feature_source(cfg.probe.kind, &grid, ckpt, policy)?;
    let data = ProbeData::build(source.as_ref(), &dataset, &grid, seed(cfg, "probe"))?;
    let report = run_probe_suite(&data, &cfg.probe)?;
    run.text("report.json", report.to_json()?)?;
    write_reports_csv(std::slice::from_ref(&report), run.writer("report.csv")?)?;
    run.finish(cfg)
}

pub fn analyze(cfg: &RunConfig, grid_path: &Path, ckpt_path: &Path, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("analyze", cfg, out, &[grid_path, ckpt_path])?;
    let grid = load_grid(grid_path)?;
    let ckpt = load_ckpt(ckpt_path)?;
    let a = &cfg.analysis;
    let report = reconstruction_error(
        &CheckpointReconstructor::new(&ckpt),
        &grid,
        &ErrorConfig {
            n_locations: a.n_locations,
            seed: cfg.seed,
            cells: (a.cell_rows, a.cell_cols),
        },
    )?;
    run.text("error_report.json", report.to_json()?)?;
    report.write_summary_csv(run.writer("error_summary.csv")?)?;
    report.write_cells_csv(run.writer("error_cells.csv")?)?;
    if let Some(task) = a.export_task {
        let kind = match cfg.probe.kind {
            k @ (ProbeKind::Linear | ProbeKind::Mlp) => k,
            _ => ProbeKind::Linear,
        };
        let dataset = build_task(cfg, &grid, task)?;
        let policy = cfg.task.months.unwrap_or_else(|| default_policy(dataset.kind));
        let provider = EmbeddingProvider::new(ckpt, policy);
        let data = ProbeData::build(&provider, &dataset, &grid, seed(cfg, "probe"))?;
        let fitted = fit_probe(
            &data,
            &ProbeSpec {
                kind,
                ..cfg.probe.clone()
            },
            0,
        )?;
        let region = PredictionRegion {
            extent: grid.extent(),
            rows: a.export_rows,
            cols: a.export_cols,
        };
        let pred = export_prediction_grid(&provider, &fitted, &region, Some(a.export_month), a.export_output)?;
        pred.write_csv(run.writer("prediction_grid.csv")?)?;
        run.text("probe.json", fitted.to_json()?)?;
    }
    run.finish(cfg)
}

pub fn scale(cfg: &mut RunConfig, grid_path: &Path, sweep: bool, out: &Path) -> anyhow::Result<()> {
    let mut run = Run::start("scale", cfg, out, &[grid_path])?;
    let grid = load_grid(grid_path)?;
    let (input_dim, output_dim) = cfg.train.io_dims(grid.n_vars());
    cfg.network.input_dim = input_dim;
    cfg.network.output_dim = output_dim;
    if sweep {
        let mut sc = ScalingConfig::new(
            cfg.network,
            resiren_core::train::TrainConfig {
                max_epochs: usize::MAX,
                patience: usize::MAX,
                max_steps: Some(cfg.scale.max_steps),
                ..cfg.train
            },
        );
        sc.depths = cfg.scale.depths.clone();
        sc.modes = cfg.scale.modes.clone();
        sc.seeds = cfg.scale.seeds.clone();
        let results = scaling_sweep(&grid, &sc)?;
        write_scaling_csv(&results, run.writer("scaling.csv")?)?;
        run.text("scaling.json", serde_json::to_string_pretty(&results)?)?;
    }
    if !cfg.scale.ablations.is_empty() {
        let tasks = if cfg.scale.ablations.iter().any(|a| a.in_scope()) {
            AblationTasks {
                biomes: Some(build_task(cfg, &grid, TaskName::Biomes)?),
                sdm: Some(build_task(cfg, &grid, TaskName::Sdm)?),
                traits: Some(build_task(cfg, &grid, TaskName::Traits)?),
            }
        } else {
            AblationTasks::default()
        };
        let rows = run_ablations(
            &grid,
            &AblationConfig {
                ablations: cfg.scale.ablations.clone(),
                net: cfg.network,
                train: cfg.train,
                seeds: cfg.scale.seeds.clone(),
                probe: cfg.probe.clone(),
                probe_seed: seed(cfg, "probe"),
                tasks,
            },
        )?;
        write_ablation_csv(&rows, run.writer("ablations.csv")?)?;
        run.text("ablations.json", serde_json::to_string_pretty(&rows)?)?;
    }
    run.finish(cfg)
}
