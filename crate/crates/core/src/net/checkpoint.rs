//! Checkpoint file layout (all little-endian):
//!
//! ```text
//! "RSRN"  u32 version
//! u32 depth, u32 input_dim, u32 hidden_dim, u32 embedding_dim, u32 output_dim,
//! f64 omega0, u8 residual (0 off, 1 half, 2 sqrt2), u8 first_layer (0 hsiren, 1 sine)
//! u32 n_vars, n_vars × (f64 mean, f64 std)
//! u64 steps, f64 final_loss, u64 seed
//! u64 parameter count, count × f32 (layer weights row-major then bias, ..., head)
//! u32 CRC32 of all preceding bytes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{FirstLayer, NetworkConfig, ParameterSet, Parameters, ResidualMode};
use crate::codec::{read_file, write_file, Reader, Writer};
use crate::data::NormStats;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "RSRN";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub steps: u64,
    pub final_loss: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: ParameterSet<f32>,
    pub norm: NormStats,
    pub meta: TrainingMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.params.conforms(&self.config)?;
        let cfg = &self.config;
        let n = self.params.parameter_count();
        let mut w = Writer::new(b"RSRN", CHECKPOINT_VERSION, 128 + 16 * self.norm.len() + 4 * n);
        for v in [
            cfg.depth,
            cfg.input_dim,
            cfg.hidden_dim,
            cfg.embedding_dim,
            cfg.output_dim,
        ] {
            w.u32(v as u32);
        }
        w.f64(cfg.omega0);
        w.u8(cfg.residual.code());
        w.u8(match cfg.first_layer {
            FirstLayer::HSiren => 0,
            FirstLayer::Sine => 1,
        });
        w.u32(self.norm.len() as u32);
        for (m, s) in self.norm.mean.iter().zip(&self.norm.std) {
            w.f64(*m);
            w.f64(*s);
        }
        w.u64(self.meta.steps);
        w.f64(self.meta.final_loss);
        w.u64(self.meta.seed);
        w.u64(n as u64);
        for t in self.params.tensors() {
            w.f32s(t);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")?;
        let mut dims = [0usize; 5];
        for d in dims.iter_mut() {
            *d = r.u32()? as usize;
        }
        let omega0 = r.f64()?;
        let residual = ResidualMode::from_code(r.u8()?)?;
        let first_layer = match r.u8()? {
            0 => FirstLayer::HSiren,
            1 => FirstLayer::Sine,
            c => return Err(Error::invalid("first_layer", format!("unknown code {c}"))),
        };
        let n_vars = r.u32()? as usize;
        let mut mean = Vec::with_capacity(n_vars.min(1 << 16));
        let mut std = Vec::with_capacity(n_vars.min(1 << 16));
        for _ in 0..n_vars {
            mean.push(r.f64()?);
            std.push(r.f64()?);
        }
        let meta = TrainingMeta {
            steps: r.u64()?,
            final_loss: r.f64()?,
            seed: r.u64()?,
        };
        let count = r.u64()? as usize;
        r.expect_remaining(count.saturating_mul(4))?;
        r.verify_checksum()?;
        let config = NetworkConfig {
            depth: dims[0],
            input_dim: dims[1],
            hidden_dim: dims[2],
            embedding_dim: dims[3],
            output_dim: dims[4],
            omega0,
            residual,
            first_layer,
        };
        config.validate()?;
        let flat = r.f32s(count)?;
        r.finish()?;
        let params = ParameterSet::from_flat(&config, &flat)?;
        Ok(Self {
            config,
            params,
            norm: NormStats { mean, std },
            meta,
        })
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_file(path.as_ref(), &ckpt.to_bytes()?)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    Checkpoint::from_bytes(&read_file(path.as_ref())?)
}
