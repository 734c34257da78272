use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{forward_observed, ActivationKind, NetworkConfig, ParameterSet};
use crate::error::Result;

/// Spread of one layer's mixed pre-activation `h'_j` over a batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpread {
    /// 1-based layer index.
    pub layer: usize,
    pub activation: ActivationKind,
    pub mean: f64,
    /// Standard deviation of `h'_j`.
    pub std: f64,
    /// Standard deviation of `ω₀·h'_j`, the argument of the sine.
    pub scaled_std: f64,
}

#[derive(Clone, Default)]
struct Moments {
    n: f64,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Moments {
    fn merge(mut self, other: Moments) -> Moments {
        if self.sum.is_empty() {
            return other;
        }
        self.n += other.n;
        for (a, b) in self.sum.iter_mut().zip(other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(other.sumsq) {
            *a += b;
        }
        self
    }
}

/// Per-layer moments of `h'_j` at the given parameters, pooled over all
/// units and inputs. Inputs are processed in chunks across the thread pool.
pub fn stability_profile(
    cfg: &NetworkConfig,
    params: &ParameterSet<f32>,
    inputs: &Array2<f32>,
    chunk: usize,
) -> Result<Vec<LayerSpread>> {
    let chunks: Vec<_> = inputs.axis_chunks_iter(Axis(0), chunk.max(1)).collect();
    let partial: Vec<Result<Moments>> = chunks
        .into_par_iter()
        .map(|x| {
            let mut m = Moments {
                n: 0.0,
                sum: vec![0.0; cfg.depth],
                sumsq: vec![0.0; cfg.depth],
            };
            forward_observed(cfg, params, x, |l, h| {
                let (s, s2) = h.iter().fold((0.0f64, 0.0f64), |(s, s2), &v| {
                    let v = f64::from(v);
                    (s + v, s2 + v * v)
                });
                m.sum[l] += s;
                m.sumsq[l] += s2;
            })?;
            m.n = x.nrows() as f64;
            Ok(m)
        })
        .collect();
    let mut total = Moments::default();
    for p in partial {
        total = total.merge(p?);
    }
    Ok((0..cfg.depth)
        .map(|l| {
            let width = cfg.layer_dims(l).1 as f64;
            let count = total.n * width;
            let mean = total.sum[l] / count;
            let var = (total.sumsq[l] / count - mean * mean).max(0.0);
            LayerSpread {
                layer: l + 1,
                activation: cfg.activation(l),
                mean,
                std: var.sqrt(),
                scaled_std: cfg.omega0 * var.sqrt(),
            }
        })
        .collect())
}
