use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClimGrid, TaskDataset};
use crate::error::{Error, Result};
use crate::net::{NetworkConfig, ResidualMode};
use crate::probe::{run_probe_suite, EmbeddingProvider, FeaturePolicy, ProbeData, ProbeSpec};
use crate::train::{evaluate_loss, pretrain, TrainConfig};

pub const DEFAULT_DEPTHS: [usize; 5] = [2, 4, 8, 16, 32];

/// Probe task evaluated on every sweep cell.
#[derive(Debug, Clone)]
pub struct SweepProbe {
    pub dataset: TaskDataset,
    pub spec: ProbeSpec,
    pub policy: FeaturePolicy,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ScalingConfig {
    pub depths: Vec<usize>,
    pub modes: Vec<ResidualMode>,
    pub seeds: Vec<u64>,
    /// Shared network shape; depth and residual mode are overridden per cell.
    pub base: NetworkConfig,
    /// Shared training settings; `seed` and `init_seed` are overridden per cell.
    /// Set `max_steps` to equalise budgets across depths.
    pub train: TrainConfig,
    pub probe: Option<SweepProbe>,
}

impl ScalingConfig {
    pub fn new(base: NetworkConfig, train: TrainConfig) -> Self {
        Self {
            depths: DEFAULT_DEPTHS.to_vec(),
            modes: vec![ResidualMode::Off, ResidualMode::PaperHalf],
            seeds: vec![0, 1, 2],
            base,
            train,
            probe: None,
        }
    }

    pub fn cells(&self) -> Vec<(usize, ResidualMode, u64)> {
        let mut out = Vec::new();
        for &d in &self.depths {
            for &m in &self.modes {
                for &s in &self.seeds {
                    out.push((d, m, s));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingResult {
    pub depth: usize,
    pub mode: ResidualMode,
    pub seed: u64,
    /// Normalized MSE of the retained parameters over every land pixel and month.
    pub final_loss: f64,
    pub steps: u64,
    pub probe_metric: Option<f64>,
    /// Only nondeterministic field.
    pub wallclock_s: f64,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

fn run_cell(
    grid: &ClimGrid,
    cfg: &ScalingConfig,
    depth: usize,
    mode: ResidualMode,
    seed: u64,
) -> Result<ScalingResult> {
    let network = NetworkConfig {
        depth,
        residual: mode,
        ..cfg.base
    };
    let train = TrainConfig {
        seed,
        init_seed: seed,
        ..cfg.train
    };
    let started = Instant::now();
    let out = pretrain(grid, &network, &train)?;
    let wallclock_s = started.elapsed().as_secs_f64();
    let final_loss = evaluate_loss(grid, &network, &out.checkpoint.params)?;
    let probe_metric = match &cfg.probe {
        Some(p) => {
            let provider = EmbeddingProvider::new(out.checkpoint.clone(), p.policy);
            let data = ProbeData::build(&provider, &p.dataset, grid, p.seed)?;
            Some(run_probe_suite(&data, &p.spec)?.mean)
        }
        None => None,
    };
    Ok(ScalingResult {
        depth,
        mode,
        seed,
        final_loss,
        steps: out.steps,
        probe_metric,
        wallclock_s,
        network,
        train,
    })
}

/// Trains every `(depth, mode, seed)` cell under identical settings. Results
/// come back in `cells()` order regardless of scheduling.
pub fn scaling_sweep(grid: &ClimGrid, cfg: &ScalingConfig) -> Result<Vec<ScalingResult>> {
    if cfg.depths.is_empty() || cfg.modes.is_empty() || cfg.seeds.is_empty() {
        return Err(Error::invalid("sweep", "depths, modes and seeds must be non-empty"));
    }
    cfg.cells()
        .into_par_iter()
        .map(|(d, m, s)| run_cell(grid, cfg, d, m, s))
        .collect()
}

/// Median of the values; the mean of the two central values for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// Median final loss per `(depth, mode)` over seeds.
pub fn median_losses(results: &[ScalingResult]) -> Vec<(usize, ResidualMode, f64)> {
    let mut keys: Vec<(usize, ResidualMode)> = Vec::new();
    for r in results {
        if !keys.contains(&(r.depth, r.mode)) {
            keys.push((r.depth, r.mode));
        }
    }
    keys.into_iter()
        .map(|(d, m)| {
            let losses: Vec<f64> = results
                .iter()
                .filter(|r| r.depth == d && r.mode == m)
                .map(|r| r.final_loss)
                .collect();
            (d, m, median(&losses).expect("non-empty group"))
        })
        .collect()
}

/// `depth, mode, seed, final_loss, steps, probe_metric, wallclock_s`.
pub fn write_scaling_csv<W: std::io::Write>(results: &[ScalingResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "depth",
        "mode",
        "seed",
        "final_loss",
        "steps",
        "probe_metric",
        "wallclock_s",
    ])?;
    for r in results {
        w.write_record([
            r.depth.to_string(),
            r.mode.name().to_string(),
            r.seed.to_string(),
            r.final_loss.to_string(),
            r.steps.to_string(),
            r.probe_metric.map(|m| m.to_string()).unwrap_or_default(),
            r.wallclock_s.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<scaling>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0]), Some(2.5));
        assert_eq!(median(&[]), None);
    }

    #[test]
    fn cell_enumeration() {
        let mut cfg = ScalingConfig::new(NetworkConfig::default(), TrainConfig::default());
        cfg.seeds = vec![7, 8];
        assert_eq!(cfg.cells().len(), 5 * 2 * 2);
        assert_eq!(cfg.cells()[0], (2, ResidualMode::Off, 7));
    }
}
