use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::{NetworkConfig, Real};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Affine map `y = x Wᵀ + b` with `W` stored as `[out, in]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Weights uniform on `(-bound, bound)` drawn row-major, zero bias.
    pub fn uniform(fan_in: usize, fan_out: usize, bound: f64, rng: &mut SplitMix64) -> Self {
        let weight = Array2::from_shape_simple_fn((fan_out, fan_in), || T::of(rng.uniform(-bound, bound)));
        Self {
            weight,
            bias: Array1::zeros(fan_out),
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weight.ncols()
    }

    pub fn fan_out(&self) -> usize {
        self.weight.nrows()
    }

    pub fn apply(&self, x: ndarray::ArrayView2<T>) -> Array2<T> {
        let mut y = x.dot(&self.weight.t());
        y += &self.bias;
        y
    }

    pub fn cast<U: Real>(&self) -> Dense<U> {
        Dense {
            weight: self.weight.mapv(|v| U::of(v.as_f64())),
            bias: self.bias.mapv(|v| U::of(v.as_f64())),
        }
    }

    pub fn len(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Anything the optimizer can update: an ordered list of flat tensors.
pub trait Parameters {
    type Scalar: Real;

    fn tensors(&self) -> Vec<&[Self::Scalar]>;
    fn tensors_mut(&mut self) -> Vec<&mut [Self::Scalar]>;
    /// Human-readable name per tensor, same order as [`Parameters::tensors`].
    fn tensor_names(&self) -> Vec<String>;

    fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }
}

pub(crate) fn dense_tensors<T: Real>(d: &Dense<T>) -> [&[T]; 2] {
    [
        d.weight.as_slice().expect("standard layout"),
        d.bias.as_slice().expect("standard layout"),
    ]
}

pub(crate) fn dense_tensors_mut<T: Real>(d: &mut Dense<T>) -> [&mut [T]; 2] {
    [
        d.weight.as_slice_mut().expect("standard layout"),
        d.bias.as_slice_mut().expect("standard layout"),
    ]
}

/// Weights of layers `1..=D` plus the affine head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSet<T> {
    pub layers: Vec<Dense<T>>,
    pub head: Dense<T>,
}

impl<T: Real> ParameterSet<T> {
    pub fn zeros(cfg: &NetworkConfig) -> Self {
        Self {
            layers: (0..cfg.depth)
                .map(|l| {
                    let (i, o) = cfg.layer_dims(l);
                    Dense::zeros(i, o)
                })
                .collect(),
            head: Dense::zeros(cfg.embedding_dim, cfg.output_dim),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|d| Dense::zeros(d.fan_in(), d.fan_out()))
                .collect(),
            head: Dense::zeros(self.head.fan_in(), self.head.fan_out()),
        }
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        ParameterSet {
            layers: self.layers.iter().map(Dense::cast).collect(),
            head: self.head.cast(),
        }
    }

    /// Checks every shape against `cfg`.
    pub fn conforms(&self, cfg: &NetworkConfig) -> Result<()> {
        if self.layers.len() != cfg.depth {
            return Err(Error::Shape {
                context: "layer count",
                expected: cfg.depth,
                found: self.layers.len(),
            });
        }
        for (l, d) in self.layers.iter().enumerate() {
            let (i, o) = cfg.layer_dims(l);
            check_dense(d, i, o)?;
        }
        check_dense(&self.head, cfg.embedding_dim, cfg.output_dim)
    }

    /// All values in storage order: per layer weight (row-major) then bias, then the head.
    pub fn flatten(&self) -> Vec<T> {
        self.tensors().into_iter().flatten().copied().collect()
    }

    /// Inverse of [`ParameterSet::flatten`].
    pub fn from_flat(cfg: &NetworkConfig, values: &[T]) -> Result<Self> {
        let mut out = Self::zeros(cfg);
        let n = out.parameter_count();
        if values.len() != n {
            return Err(Error::Shape {
                context: "flat parameter vector",
                expected: n,
                found: values.len(),
            });
        }
        let mut pos = 0;
        for t in out.tensors_mut() {
            t.copy_from_slice(&values[pos..pos + t.len()]);
            pos += t.len();
        }
        Ok(out)
    }

    pub fn scale(&mut self, k: T) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= k);
        }
    }
}

fn check_dense<T>(d: &Dense<T>, fan_in: usize, fan_out: usize) -> Result<()> {
    let (o, i) = d.weight.dim();
    if i != fan_in {
        return Err(Error::Shape {
            context: "weight fan-in",
            expected: fan_in,
            found: i,
        });
    }
    if o != fan_out || d.bias.len() != fan_out {
        return Err(Error::Shape {
            context: "weight fan-out",
            expected: fan_out,
            found: o,
        });
    }
    Ok(())
}

impl<T: Real> Parameters for ParameterSet<T> {
    type Scalar = T;

    fn tensors(&self) -> Vec<&[T]> {
        self.layers
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(dense_tensors)
            .collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [T]> {
        self.layers
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .flat_map(dense_tensors_mut)
            .collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(2 * self.layers.len() + 2);
        for l in 1..=self.layers.len() {
            names.push(format!("layer {l} weight"));
            names.push(format!("layer {l} bias"));
        }
        names.push("head weight".into());
        names.push("head bias".into());
        names
    }
}

/// SIREN-style initialization.
///
/// Draws come from one [`SplitMix64`] stream seeded with `seed`, consumed in
/// storage order (layer 1 weights row-major, layer 2, ..., head). Bounds:
///
/// * layer 1: `1 / fan_in`
/// * layers `2..=D`: `sqrt(6 / fan_in) / ω₀`
/// * head: `sqrt(6 / fan_in)`
///
/// Biases start at zero.
pub fn init_parameters(cfg: &NetworkConfig, seed: u64) -> Result<ParameterSet<f32>> {
    cfg.validate()?;
    let mut rng = SplitMix64::new(seed);
    let layers = (0..cfg.depth)
        .map(|l| {
            let (fan_in, fan_out) = cfg.layer_dims(l);
            let bound = if l == 0 {
                1.0 / fan_in as f64
            } else {
                (6.0 / fan_in as f64).sqrt() / cfg.omega0
            };
            Dense::uniform(fan_in, fan_out, bound, &mut rng)
        })
        .collect();
    let head_bound = (6.0 / cfg.embedding_dim as f64).sqrt();
    let head = Dense::uniform(cfg.embedding_dim, cfg.output_dim, head_bound, &mut rng);
    Ok(ParameterSet { layers, head })
}
