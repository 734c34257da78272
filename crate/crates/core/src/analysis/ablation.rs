use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::scaling::median;
use crate::data::{ClimGrid, TaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::net::{Checkpoint, FirstLayer, NetworkConfig, ResidualMode};
use crate::probe::{run_probe_suite, EmbeddingProvider, FeaturePolicy, ProbeData, ProbeSpec};
use crate::train::{pretrain, TrainConfig};

/// Variants of the pretrained encoder compared under the probing protocol.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Residual sinusoidal network with H-SIREN first layer, all months.
    Full,
    /// No residual mixing.
    Siren,
    /// Location-only input regressing all twelve months at once.
    ConcatMonths,
    /// Trained on month 3 only.
    MarchOnly,
    /// Plain sine first layer.
    #[serde(rename = "no-hsiren")]
    NoHSiren,
    /// Full model probed on its reconstructed values instead of embeddings.
    RecValues,
    /// Contrastive pretraining; not implemented.
    ChClip,
    /// Reanalysis pretraining data; not implemented.
    Era5,
}

impl Ablation {
    pub const ALL: [Ablation; 8] = [
        Ablation::Full,
        Ablation::Siren,
        Ablation::ConcatMonths,
        Ablation::MarchOnly,
        Ablation::NoHSiren,
        Ablation::RecValues,
        Ablation::ChClip,
        Ablation::Era5,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Full => "full",
            Ablation::Siren => "siren",
            Ablation::ConcatMonths => "concat-months",
            Ablation::MarchOnly => "march-only",
            Ablation::NoHSiren => "no-hsiren",
            Ablation::RecValues => "rec-values",
            Ablation::ChClip => "ch-clip",
            Ablation::Era5 => "era5",
        }
    }

    pub fn in_scope(self) -> bool {
        !matches!(self, Ablation::ChClip | Ablation::Era5)
    }

    /// Network and training settings of the variant, derived from the full
    /// model's settings on a grid with `n_vars` variables.
    pub fn variant(
        self,
        net: &NetworkConfig,
        train: &TrainConfig,
        n_vars: usize,
    ) -> Result<(NetworkConfig, TrainConfig)> {
        let (input_dim, output_dim) = train.io_dims(n_vars);
        let input_dim = if net.input_dim == 5 { 5 } else { input_dim };
        let base_net = NetworkConfig {
            input_dim,
            output_dim,
            ..*net
        };
        let base_train = TrainConfig {
            march_only: false,
            concat_months: false,
            ..*train
        };
        Ok(match self {
            Ablation::Full | Ablation::RecValues => (base_net, base_train),
            Ablation::Siren => (
                NetworkConfig {
                    residual: ResidualMode::Off,
                    ..base_net
                },
                base_train,
            ),
            Ablation::ConcatMonths => {
                let t = TrainConfig {
                    concat_months: true,
                    ..base_train
                };
                let (input_dim, output_dim) = t.io_dims(n_vars);
                (
                    NetworkConfig {
                        input_dim,
                        output_dim,
                        ..base_net
                    },
                    t,
                )
            }
            Ablation::MarchOnly => (
                base_net,
                TrainConfig {
                    march_only: true,
                    ..base_train
                },
            ),
            Ablation::NoHSiren => (
                NetworkConfig {
                    first_layer: FirstLayer::Sine,
                    ..base_net
                },
                base_train,
            ),
            Ablation::ChClip | Ablation::Era5 => {
                return Err(Error::invalid("ablation", format!("{self} is out of scope")));
            }
        })
    }

    /// Features probed for a task: the observation month when records carry
    /// one, otherwise the seasonal concatenation.
    pub fn policy(self, task: TaskKind) -> FeaturePolicy {
        match (self, task) {
            (Ablation::RecValues, _) => FeaturePolicy::RecValues,
            (_, TaskKind::Sdm { .. }) => FeaturePolicy::ObservationMonth,
            (Ablation::ConcatMonths, _) => FeaturePolicy::ObservationMonth,
            _ => FeaturePolicy::Seasonal,
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid("ablation", format!("unknown ablation {s:?}")))
    }
}

#[derive(Debug, Clone, Default)]
pub struct AblationTasks {
    pub biomes: Option<TaskDataset>,
    pub sdm: Option<TaskDataset>,
    pub traits: Option<TaskDataset>,
}

#[derive(Debug, Clone)]
pub struct AblationConfig {
    pub ablations: Vec<Ablation>,
    pub net: NetworkConfig,
    pub train: TrainConfig,
    /// Pretraining seeds; each row reports the median over them.
    pub seeds: Vec<u64>,
    pub probe: ProbeSpec,
    /// Seed for probe background sampling.
    pub probe_seed: u64,
    pub tasks: AblationTasks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    pub metric: String,
    /// Median over pretraining seeds of the probe-suite mean.
    pub median: f64,
    pub per_seed: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub in_scope: bool,
    pub biomes: Option<TaskScore>,
    pub sdm: Option<TaskScore>,
    pub traits: Option<TaskScore>,
}

/// Pretrains each requested variant for each seed (sharing checkpoints between
/// variants with identical settings) and probes every provided task.
pub fn run_ablations(grid: &ClimGrid, cfg: &AblationConfig) -> Result<Vec<AblationRow>> {
    if cfg.seeds.is_empty() {
        return Err(Error::invalid("seeds", "at least one pretraining seed is required"));
    }
    let mut cache: Vec<((NetworkConfig, TrainConfig), Checkpoint)> = Vec::new();
    let mut rows = Vec::with_capacity(cfg.ablations.len());
    for &ablation in &cfg.ablations {
        if !ablation.in_scope() {
            rows.push(AblationRow {
                ablation,
                in_scope: false,
                biomes: None,
                sdm: None,
                traits: None,
            });
            continue;
        }
        let (net, train) = ablation.variant(&cfg.net, &cfg.train, grid.n_vars())?;
        let mut checkpoints = Vec::with_capacity(cfg.seeds.len());
        for &seed in &cfg.seeds {
            let key = (
                net,
                TrainConfig {
                    seed,
                    init_seed: seed,
                    ..train
                },
            );
            let ckpt = match cache.iter().find(|(k, _)| *k == key) {
                Some((_, c)) => c.clone(),
                None => {
                    let c = pretrain(grid, &key.0, &key.1)?.checkpoint;
                    cache.push((key, c.clone()));
                    c
                }
            };
            checkpoints.push(ckpt);
        }
        let score = |task: &Option<TaskDataset>| -> Result<Option<TaskScore>> {
            let Some(ds) = task else { return Ok(None) };
            let mut per_seed = Vec::with_capacity(checkpoints.len());
            let mut metric = String::new();
            for (ckpt, &seed) in checkpoints.iter().zip(&cfg.seeds) {
                let provider = EmbeddingProvider::new(ckpt.clone(), ablation.policy(ds.kind))
                    .with_label(format!("{ablation}-seed{seed}"));
                let data = ProbeData::build(&provider, ds, grid, cfg.probe_seed)?;
                let report = run_probe_suite(&data, &cfg.probe)?;
                metric = report.metric;
                per_seed.push(report.mean);
            }
            Ok(Some(TaskScore {
                metric,
                median: median(&per_seed).expect("seeds checked"),
                per_seed,
            }))
        };
        rows.push(AblationRow {
            ablation,
            in_scope: true,
            biomes: score(&cfg.tasks.biomes)?,
            sdm: score(&cfg.tasks.sdm)?,
            traits: score(&cfg.tasks.traits)?,
        });
    }
    Ok(rows)
}

/// `ablation, biomes_macro_f1, sdm_top1, traits_r2`; out-of-scope rows carry
/// the text `out of scope`, tasks that were not run are left empty.
pub fn write_ablation_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["ablation", "biomes_macro_f1", "sdm_top1", "traits_r2"])?;
    for r in rows {
        let cell = |s: &Option<TaskScore>| match (r.in_scope, s) {
            (false, _) => "out of scope".to_string(),
            (true, Some(s)) => s.median.to_string(),
            (true, None) => String::new(),
        };
        w.write_record([
            r.ablation.name().to_string(),
            cell(&r.biomes),
            cell(&r.sdm),
            cell(&r.traits),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ablations>", e))?;
    Ok(())
}
