use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{adam_step, mse_loss, AdamConfig, OptimizerState};
use crate::data::{sample_epoch, ClimGrid, MonthPolicy, SampleBatch, MONTHS};
use crate::encoding::EncodingKind;
use crate::error::{Error, Result};
use crate::net::{
    backward, forward, init_parameters, Checkpoint, NetworkConfig, OutputGradient, ParameterSet, TrainingMeta,
};
use crate::rng::{derive_indexed, derive_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub min_delta: f64,
    /// Drives the per-epoch visit orders.
    pub seed: u64,
    /// Seed for [`init_parameters`].
    pub init_seed: u64,
    /// Train on month 3 only.
    pub march_only: bool,
    /// Drop the month inputs and regress all twelve months at once.
    pub concat_months: bool,
    /// Optional cap on optimizer steps across all epochs.
    pub max_steps: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            max_epochs: 20,
            batch_size: 8192,
            patience: 3,
            min_delta: 1e-5,
            seed: 0,
            init_seed: 0,
            march_only: false,
            concat_months: false,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.max_epochs == 0 {
            return Err(Error::invalid("max_epochs", "must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size", "must be positive"));
        }
        if self.patience == 0 {
            return Err(Error::invalid("patience", "must be at least 1"));
        }
        if !(self.min_delta >= 0.0) {
            return Err(Error::invalid("min_delta", "must be non-negative"));
        }
        if self.march_only && self.concat_months {
            return Err(Error::invalid("march_only", "cannot be combined with concat_months"));
        }
        Ok(())
    }

    pub fn month_policy(&self) -> MonthPolicy {
        if self.concat_months {
            MonthPolicy::AllMonths
        } else if self.march_only {
            MonthPolicy::Fixed(3)
        } else {
            MonthPolicy::Random
        }
    }

    /// Network shape expected by this configuration for a grid with `n_vars` variables.
    pub fn io_dims(&self, n_vars: usize) -> (usize, usize) {
        if self.concat_months {
            (2, MONTHS * n_vars)
        } else {
            (4, n_vars)
        }
    }
}

/// Early stopping on a monitored loss: a value counts as an improvement
/// when it beats the best so far by more than `min_delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    best: f64,
    bad_epochs: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records one epoch; returns `true` when training should stop.
    pub fn update(&mut self, loss: f64) -> bool {
        if loss < self.best - self.min_delta {
            self.best = loss;
            self.bad_epochs = 0;
        } else {
            self.bad_epochs += 1;
        }
        self.bad_epochs >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wallclock_s: f64,
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    /// Parameters of the epoch with the lowest mean loss.
    pub checkpoint: Checkpoint,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub steps: u64,
    pub stopped_early: bool,
}

/// One forward/backward/Adam step on a batch; returns the batch loss before the update.
pub fn train_step(
    cfg: &NetworkConfig,
    params: &mut ParameterSet<f32>,
    state: &mut OptimizerState<f32>,
    adam: &AdamConfig,
    batch: &SampleBatch,
) -> Result<f64> {
    let out = forward(cfg, params, batch.encodings.view(), true, true)?;
    let head = out.head.as_ref().ok_or(Error::Missing("head output"))?;
    let (loss, grad) = mse_loss(head.view(), batch.targets.view())?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            location: "training loss".into(),
        });
    }
    let grads = backward(cfg, params, out.trace.as_ref(), OutputGradient::Head(grad.view()))?;
    adam_step(params, &grads, state, adam)?;
    Ok(loss)
}

fn check_shapes(grid: &ClimGrid, net: &NetworkConfig, train: &TrainConfig) -> Result<EncodingKind> {
    net.validate()?;
    let (input_dim, output_dim) = train.io_dims(grid.n_vars());
    if net.input_dim != input_dim && !(input_dim == 4 && net.input_dim == 5) {
        return Err(Error::Shape {
            context: "network input_dim",
            expected: input_dim,
            found: net.input_dim,
        });
    }
    if net.output_dim != output_dim {
        return Err(Error::Shape {
            context: "network output_dim",
            expected: output_dim,
            found: net.output_dim,
        });
    }
    EncodingKind::for_input_dim(net.input_dim, None)
}

/// Fits the network head output to the normalized grid values.
///
/// Each epoch visits every land pixel once (see [`sample_epoch`]); epoch `e`
/// uses the seed `derive_indexed(train.seed, "epoch", e)`. Early stopping
/// monitors the epoch-mean training loss, and the parameters of the epoch
/// with the lowest mean loss are returned.
pub fn pretrain(grid: &ClimGrid, net: &NetworkConfig, train: &TrainConfig) -> Result<PretrainOutcome> {
    train.validate()?;
    let encoding = check_shapes(grid, net, train)?;
    let policy = train.month_policy();
    let mut params = init_parameters(net, train.init_seed)?;
    let mut state = OptimizerState::new(&params);
    let mut stopper = EarlyStopping::new(train.patience, train.min_delta);
    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ParameterSet<f32>)> = None;
    let mut steps = 0u64;
    let mut stopped_early = false;
    let started = Instant::now();
    'epochs: for epoch in 0..train.max_epochs {
        if train.max_steps.is_some_and(|cap| steps >= cap) {
            break;
        }
        let sampler = sample_epoch(
            grid,
            train.batch_size,
            derive_indexed(train.seed, "epoch", epoch as u64),
            policy,
            encoding,
        )?;
        let (mut total, mut count) = (0.0, 0usize);
        let mut budget_hit = false;
        for batch in sampler {
            let loss = train_step(net, &mut params, &mut state, &train.adam, &batch).map_err(|e| match e {
                Error::NonFinite { location } => Error::NonFinite {
                    location: format!("{location} (epoch {epoch}, step {steps})"),
                },
                e => e,
            })?;
            total += loss * batch.len() as f64;
            count += batch.len();
            steps += 1;
            if train.max_steps.is_some_and(|cap| steps >= cap) {
                budget_hit = true;
                break;
            }
        }
        let mean_loss = total / count as f64;
        history.push(EpochRecord {
            epoch,
            mean_loss,
            wallclock_s: started.elapsed().as_secs_f64(),
        });
        // Retention follows the strict minimum; min_delta only affects patience.
        if best.as_ref().is_none_or(|(b, _, _)| mean_loss < *b) {
            best = Some((mean_loss, epoch, params.clone()));
        }
        let stop = stopper.update(mean_loss);
        if budget_hit {
            break 'epochs;
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    let (final_loss, best_epoch, params) = best.ok_or(Error::Missing("completed epoch"))?;
    Ok(PretrainOutcome {
        checkpoint: Checkpoint {
            config: *net,
            params,
            norm: grid.stats().clone(),
            meta: TrainingMeta {
                steps,
                final_loss,
                seed: train.seed,
            },
        },
        history,
        best_epoch,
        steps,
        stopped_early,
    })
}

/// Mean squared error in normalized space over every land pixel and every
/// month. Location-only networks (`input_dim` 2) are scored on all `12·V`
/// outputs at once.
pub fn evaluate_loss(grid: &ClimGrid, net: &NetworkConfig, params: &ParameterSet<f32>) -> Result<f64> {
    let concat = net.input_dim == 2;
    let probe = TrainConfig {
        concat_months: concat,
        ..TrainConfig::default()
    };
    let encoding = check_shapes(grid, net, &probe)?;
    let chunk = 4096;
    let (mut total, mut count) = (0.0, 0usize);
    let policies: Vec<MonthPolicy> = if concat {
        vec![MonthPolicy::AllMonths]
    } else {
        (1..=MONTHS as u8).map(MonthPolicy::Fixed).collect()
    };
    for policy in policies {
        for batch in sample_epoch(grid, chunk, derive_seed(0, "evaluate"), policy, encoding)? {
            let out = forward(net, params, batch.encodings.view(), false, true)?;
            let head = out.head.ok_or(Error::Missing("head output"))?;
            let (loss, _) = mse_loss(head.view(), batch.targets.view())?;
            total += loss * head.len() as f64;
            count += head.len();
        }
    }
    Ok(total / count as f64)
}

pub fn write_history_csv<W: Write>(history: &[EpochRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epoch", "mean_loss", "wallclock_s"])?;
    for r in history {
        w.write_record([r.epoch.to_string(), r.mean_loss.to_string(), r.wallclock_s.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<history>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_normalization, generate_synthetic_climatology};

    #[test]
    fn early_stopping_patience() {
        let mut s = EarlyStopping::new(3, 1e-5);
        assert!(!s.update(1.0));
        assert!(!s.update(1.1));
        assert!(!s.update(1.2));
        assert!(s.update(1.3));
    }

    #[test]
    fn history_and_retention() {
        let grid = fit_normalization(generate_synthetic_climatology(16, 8, 2, 1).unwrap()).unwrap();
        let net = NetworkConfig {
            depth: 3,
            hidden_dim: 16,
            embedding_dim: 8,
            output_dim: 2,
            ..NetworkConfig::default()
        };
        let train = TrainConfig {
            batch_size: 16,
            max_epochs: 4,
            adam: AdamConfig::default().with_learning_rate(1e-3),
            ..TrainConfig::default()
        };
        let out = pretrain(&grid, &net, &train).unwrap();
        assert!(out.history.iter().all(|r| r.mean_loss.is_finite()));
        let min = out.history.iter().map(|r| r.mean_loss).fold(f64::INFINITY, f64::min);
        assert_eq!(out.checkpoint.meta.final_loss, min);
        assert_eq!(out.history[out.best_epoch].mean_loss, min);
        let again = pretrain(&grid, &net, &train).unwrap();
        let losses = |o: &PretrainOutcome| o.history.iter().map(|r| r.mean_loss).collect::<Vec<_>>();
        assert_eq!(losses(&out), losses(&again));
        let capped = pretrain(
            &grid,
            &net,
            &TrainConfig {
                max_steps: Some(5),
                ..train
            },
        )
        .unwrap();
        assert_eq!(capped.steps, 5);
    }

    #[test]
    fn shape_checks() {
        let grid = fit_normalization(generate_synthetic_climatology(8, 8, 2, 1).unwrap()).unwrap();
        let net = NetworkConfig {
            depth: 2,
            output_dim: 3,
            ..NetworkConfig::default()
        };
        assert!(pretrain(&grid, &net, &TrainConfig::default()).is_err());
        let both = TrainConfig {
            march_only: true,
            concat_months: true,
            ..TrainConfig::default()
        };
        assert!(both.validate().is_err());
    }
}
