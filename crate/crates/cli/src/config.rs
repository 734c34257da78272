use std::path::Path;

use anyhow::{bail, Context};
use resiren_core::analysis::Ablation;
use resiren_core::net::{NetworkConfig, ResidualMode};
use resiren_core::probe::{FeaturePolicy, ProbeSpec};
use resiren_core::train::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum TaskName {
    Biomes,
    Sdm,
    Traits,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSettings {
    pub width: usize,
    pub height: usize,
    pub vars: usize,
}

impl Default for GridSettings {
    fn default() -> Self {
        Self {
            width: 64,
            height: 32,
            vars: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskSettings {
    pub name: TaskName,
    pub n_points: usize,
    pub n_classes: usize,
    pub n_species: usize,
    pub n_occurrences: usize,
    pub n_targets: usize,
    /// Feature policy for embedding probes; per-task default when absent.
    pub months: Option<FeaturePolicy>,
}

impl Default for TaskSettings {
    fn default() -> Self {
        Self {
            name: TaskName::Biomes,
            n_points: 600,
            n_classes: 8,
            n_species: 10,
            n_occurrences: 2000,
            n_targets: 4,
            months: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisSettings {
    pub n_locations: usize,
    pub cell_rows: usize,
    pub cell_cols: usize,
    pub export_task: Option<TaskName>,
    pub export_month: u8,
    pub export_output: usize,
    pub export_rows: usize,
    pub export_cols: usize,
}

impl Default for AnalysisSettings {
    fn default() -> Self {
        Self {
            n_locations: 100_000,
            cell_rows: 136,
            cell_cols: 320,
            export_task: None,
            export_month: 3,
            export_output: 0,
            export_rows: 90,
            export_cols: 180,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaleSettings {
    pub depths: Vec<usize>,
    pub modes: Vec<ResidualMode>,
    pub seeds: Vec<u64>,
    pub max_steps: u64,
    pub ablations: Vec<Ablation>,
}

impl Default for ScaleSettings {
    fn default() -> Self {
        Self {
            depths: resiren_core::analysis::DEFAULT_DEPTHS.to_vec(),
            modes: vec![ResidualMode::Off, ResidualMode::PaperHalf],
            seeds: vec![0, 1, 2],
            max_steps: 600,
            ablations: Vec::new(),
        }
    }
}

/// Every setting of a run; commands read the sections they need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub grid: GridSettings,
    pub network: NetworkConfig,
    pub train: TrainConfig,
    pub task: TaskSettings,
    pub probe: ProbeSpec,
    pub analysis: AnalysisSettings,
    pub scale: ScaleSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            grid: GridSettings::default(),
            network: NetworkConfig {
                depth: 8,
                hidden_dim: 128,
                embedding_dim: 64,
                output_dim: 8,
                ..NetworkConfig::default()
            },
            train: TrainConfig {
                batch_size: 32,
                ..TrainConfig::default()
            },
            task: TaskSettings::default(),
            probe: ProbeSpec::default(),
            analysis: AnalysisSettings::default(),
            scale: ScaleSettings::default(),
        }
    }
}

impl RunConfig {
    /// Reads a TOML config, or the `config` field of a previous run's manifest.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value = serde_json::from_str(&text)?;
            let Some(config) = manifest.get("config") else {
                bail!("{} has no config field", path.display());
            };
            return Ok(serde_json::from_value(config.clone())?);
        }
        Ok(toml::from_str(&text)?)
    }
}
