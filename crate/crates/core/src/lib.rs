//! Residual sinusoidal location encoder.
//!
//! A coordinate network maps longitude, latitude and month to an embedding
//! and is pretrained to regress a gridded monthly climatology. Frozen
//! embeddings are then evaluated with small probes on downstream tasks.
//!
//! * [`encoding`]: positional encoding of `(lon, lat, month[, epoch])`.
//! * [`net`]: network, initialization, forward/backward passes, checkpoints.
//! * [`data`]: raster container, synthetic generator, sampler, task builders.
//! * [`train`]: MSE pretraining with Adam and early stopping.
//! * [`probe`]: embedding providers, linear/MLP probes, metrics, reports.
//! * [`analysis`]: reconstruction error, depth sweeps, ablations, map export.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
mod codec;
pub mod data;
pub mod encoding;
pub mod error;
pub mod net;
pub mod probe;
pub mod rng;
pub mod train;

pub use data::{ClimGrid, NormStats, SampleBatch, TaskDataset};
pub use encoding::{encode_position, Epoch, GeoTemporalPoint, PositionalEncoding};
pub use error::{Error, Result};
pub use net::{ActivationKind, Checkpoint, ForwardTrace, NetworkConfig, ParameterSet, ResidualMode};
