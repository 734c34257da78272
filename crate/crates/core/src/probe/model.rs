//! Trainable score models shared by probes and from-scratch baselines.

use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{
    backward, dense_tensors, dense_tensors_mut, forward, init_parameters, Dense, ForwardTrace, NetworkConfig,
    OutputGradient, ParameterSet, Parameters,
};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Nonlinearity {
    Tanh,
    Relu,
}

impl Nonlinearity {
    fn apply(self, x: f32) -> f32 {
        match self {
            Nonlinearity::Tanh => x.tanh(),
            Nonlinearity::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation output `y`.
    fn derivative_from_output(self, y: f32) -> f32 {
        match self {
            Nonlinearity::Tanh => 1.0 - y * y,
            Nonlinearity::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Fully connected network; with `residual`, equal-width hidden layers add
/// their input: `a ← a + act(W a + b)`. The last layer is affine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense<f32>>,
    pub activation: Nonlinearity,
    pub residual: bool,
}

pub struct MlpCache {
    inputs: Vec<Array2<f32>>,
    outputs: Vec<Array2<f32>>,
}

impl Mlp {
    /// Layer weights and biases uniform in `±1/sqrt(fan_in)`.
    pub fn new(dims: &[usize], activation: Nonlinearity, residual: bool, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::invalid("mlp dims", format!("{dims:?}")));
        }
        let mut rng = SplitMix64::new(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = 1.0 / (w[0] as f64).sqrt();
                let mut d = Dense::uniform(w[0], w[1], bound, &mut rng);
                d.bias.iter_mut().for_each(|b| *b = rng.uniform(-bound, bound) as f32);
                d
            })
            .collect();
        Ok(Self {
            layers,
            activation,
            residual,
        })
    }

    pub fn affine(input: usize, output: usize, seed: u64) -> Result<Self> {
        Self::new(&[input, output], Nonlinearity::Tanh, false, seed)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out()
    }

    fn skips(&self, l: usize) -> bool {
        let d = &self.layers[l];
        self.residual && l + 1 < self.layers.len() && d.fan_in() == d.fan_out()
    }

    pub fn forward(&self, x: ArrayView2<f32>) -> Result<(Array2<f32>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape {
                context: "probe input width",
                expected: self.input_dim(),
                found: x.ncols(),
            });
        }
        let last = self.layers.len() - 1;
        let mut a = x.to_owned();
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        for (l, d) in self.layers.iter().enumerate() {
            let pre = d.apply(a.view());
            let (act, next) = if l == last {
                (pre.clone(), pre)
            } else {
                let act = pre.mapv(|v| self.activation.apply(v));
                let next = if self.skips(l) { &a + &act } else { act.clone() };
                (act, next)
            };
            cache.inputs.push(std::mem::replace(&mut a, next));
            cache.outputs.push(act);
        }
        Ok((a, cache))
    }

    pub fn predict(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        Ok(self.forward(x)?.0)
    }

    /// Parameter gradients and the gradient with respect to the input.
    pub fn backward(&self, cache: &MlpCache, grad: ArrayView2<f32>) -> (Mlp, Array2<f32>) {
        let last = self.layers.len() - 1;
        let mut grads = self.zeros_like();
        let mut g_out = grad.to_owned();
        for l in (0..self.layers.len()).rev() {
            let g_pre = if l == last {
                g_out.clone()
            } else {
                let a = self.activation;
                Zip::from(&cache.outputs[l])
                    .and(&g_out)
                    .map_collect(|&y, &g| a.derivative_from_output(y) * g)
            };
            grads.layers[l].weight = g_pre.t().dot(&cache.inputs[l]);
            grads.layers[l].bias = g_pre.sum_axis(Axis(0));
            let mut g_in = g_pre.dot(&self.layers[l].weight);
            if l != last && self.skips(l) {
                g_in += &g_out;
            }
            g_out = g_in;
        }
        (grads, g_out)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|d| Dense::zeros(d.fan_in(), d.fan_out()))
                .collect(),
            activation: self.activation,
            residual: self.residual,
        }
    }
}

impl Parameters for Mlp {
    type Scalar = f32;

    fn tensors(&self) -> Vec<&[f32]> {
        self.layers.iter().flat_map(dense_tensors).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        self.layers.iter_mut().flat_map(dense_tensors_mut).collect()
    }

    fn tensor_names(&self) -> Vec<String> {
        (1..=self.layers.len())
            .flat_map(|l| [format!("probe layer {l} weight"), format!("probe layer {l} bias")])
            .collect()
    }
}

/// Sinusoidal network on `[λ, φ]` trained end to end; its head emits task scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationNet {
    pub config: NetworkConfig,
    pub params: ParameterSet<f32>,
}

impl LocationNet {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        if config.input_dim != 2 {
            return Err(Error::invalid("input_dim", "location networks take [lon, lat]"));
        }
        let params = init_parameters(&config, seed)?;
        Ok(Self { config, params })
    }
}

/// Location network and climate MLP whose outputs are summed, which is an
/// affine layer over the concatenation of their final features. The first
/// two input columns feed the location branch, the rest the climate branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocationClimateNet {
    pub location: LocationNet,
    pub climate: Mlp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ScoreModel {
    Mlp(Mlp),
    Location(LocationNet),
    LocationClimate(LocationClimateNet),
}

pub enum ModelCache {
    Mlp(MlpCache),
    Location(ForwardTrace<f32>),
    LocationClimate(ForwardTrace<f32>, MlpCache),
}

fn location_forward(
    net: &LocationNet,
    x: ArrayView2<f32>,
    keep: bool,
) -> Result<(Array2<f32>, Option<ForwardTrace<f32>>)> {
    let out = forward(&net.config, &net.params, x, keep, true)?;
    Ok((out.head.ok_or(Error::Missing("head output"))?, out.trace))
}

impl ScoreModel {
    pub fn input_dim(&self) -> usize {
        match self {
            ScoreModel::Mlp(m) => m.input_dim(),
            ScoreModel::Location(_) => 2,
            ScoreModel::LocationClimate(lc) => 2 + lc.climate.input_dim(),
        }
    }

    pub fn forward(&self, x: ArrayView2<f32>) -> Result<(Array2<f32>, ModelCache)> {
        match self {
            ScoreModel::Mlp(m) => {
                let (y, c) = m.forward(x)?;
                Ok((y, ModelCache::Mlp(c)))
            }
            ScoreModel::Location(net) => {
                let (y, t) = location_forward(net, x, true)?;
                Ok((y, ModelCache::Location(t.expect("trace kept"))))
            }
            ScoreModel::LocationClimate(lc) => {
                if x.ncols() != self.input_dim() {
                    return Err(Error::Shape {
                        context: "probe input width",
                        expected: self.input_dim(),
                        found: x.ncols(),
                    });
                }
                let (yl, t) = location_forward(&lc.location, x.slice(s![.., ..2]), true)?;
                let (yc, c) = lc.climate.forward(x.slice(s![.., 2..]))?;
                Ok((yl + yc, ModelCache::LocationClimate(t.expect("trace kept"), c)))
            }
        }
    }

    pub fn predict(&self, x: ArrayView2<f32>) -> Result<Array2<f32>> {
        match self {
            ScoreModel::Mlp(m) => m.predict(x),
            ScoreModel::Location(net) => Ok(location_forward(net, x, false)?.0),
            ScoreModel::LocationClimate(_) => Ok(self.forward(x)?.0),
        }
    }

    pub fn backward(&self, cache: &ModelCache, grad: ArrayView2<f32>) -> Result<ScoreModel> {
        Ok(match (self, cache) {
            (ScoreModel::Mlp(m), ModelCache::Mlp(c)) => ScoreModel::Mlp(m.backward(c, grad).0),
            (ScoreModel::Location(net), ModelCache::Location(t)) => ScoreModel::Location(LocationNet {
                config: net.config,
                params: backward(&net.config, &net.params, Some(t), OutputGradient::Head(grad))?,
            }),
            (ScoreModel::LocationClimate(lc), ModelCache::LocationClimate(t, c)) => {
                let loc = &lc.location;
                ScoreModel::LocationClimate(LocationClimateNet {
                    location: LocationNet {
                        config: loc.config,
                        params: backward(&loc.config, &loc.params, Some(t), OutputGradient::Head(grad))?,
                    },
                    climate: lc.climate.backward(c, grad).0,
                })
            }
            _ => return Err(Error::invalid("cache", "does not belong to this model")),
        })
    }
}

impl Parameters for ScoreModel {
    type Scalar = f32;

    fn tensors(&self) -> Vec<&[f32]> {
        match self {
            ScoreModel::Mlp(m) => m.tensors(),
            ScoreModel::Location(n) => n.params.tensors(),
            ScoreModel::LocationClimate(lc) => {
                let mut t = lc.location.params.tensors();
                t.extend(lc.climate.tensors());
                t
            }
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f32]> {
        match self {
            ScoreModel::Mlp(m) => m.tensors_mut(),
            ScoreModel::Location(n) => n.params.tensors_mut(),
            ScoreModel::LocationClimate(lc) => {
                let mut t = lc.location.params.tensors_mut();
                t.extend(lc.climate.tensors_mut());
                t
            }
        }
    }

    fn tensor_names(&self) -> Vec<String> {
        match self {
            ScoreModel::Mlp(m) => m.tensor_names(),
            ScoreModel::Location(n) => n.params.tensor_names(),
            ScoreModel::LocationClimate(lc) => {
                let mut t = lc.location.params.tensor_names();
                t.extend(lc.climate.tensor_names());
                t
            }
        }
    }
}

/// Column means and population standard deviations of the training rows;
/// constant columns keep unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Array1<f32>,
    pub std: Array1<f32>,
}

impl Standardizer {
    pub fn fit(x: ArrayView2<f32>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::invalid("features", "no training rows"));
        }
        let n = x.nrows() as f64;
        let mut mean = Array1::zeros(x.ncols());
        let mut std = Array1::ones(x.ncols());
        for (c, col) in x.axis_iter(Axis(1)).enumerate() {
            let m = col.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
            let var = col.iter().map(|&v| (f64::from(v) - m).powi(2)).sum::<f64>() / n;
            mean[c] = m as f32;
            if var > 1e-12 {
                std[c] = var.sqrt() as f32;
            }
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, x: ArrayView2<f32>) -> Array2<f32> {
        (&x - &self.mean) / &self.std
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd_check(model: &Mlp, x: &Array2<f32>) {
        // Loss = sum of outputs weighted by a fixed pattern.
        let (y, cache) = model.forward(x.view()).unwrap();
        let w = Array2::from_shape_fn(y.dim(), |(i, j)| ((i * 7 + j * 3) % 5) as f32 - 2.0);
        let (g, _) = model.backward(&cache, w.view());
        let loss = |m: &Mlp| -> f64 {
            let y = m.predict(x.view()).unwrap();
            (&y * &w).iter().map(|&v| f64::from(v)).sum()
        };
        let h = 1e-2f32;
        for (ti, t) in g.tensors().iter().enumerate() {
            for i in (0..t.len()).step_by(3) {
                let mut p = model.clone();
                p.tensors_mut()[ti][i] += h;
                let mut m = model.clone();
                m.tensors_mut()[ti][i] -= h;
                let fd = (loss(&p) - loss(&m)) / (2.0 * f64::from(h));
                let an = f64::from(t[i]);
                assert!(
                    (fd - an).abs() <= 2e-2 * fd.abs().max(an.abs()).max(1.0),
                    "tensor {ti}[{i}]: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn mlp_gradients() {
        let mut rng = SplitMix64::new(3);
        let x = Array2::from_shape_simple_fn((5, 4), || rng.uniform(-1.0, 1.0) as f32);
        fd_check(&Mlp::new(&[4, 6, 6, 3], Nonlinearity::Tanh, false, 1).unwrap(), &x);
        fd_check(&Mlp::new(&[4, 6, 6, 6, 3], Nonlinearity::Tanh, true, 2).unwrap(), &x);
    }

    #[test]
    fn standardizer_constant_column() {
        let x = ndarray::array![[1.0f32, 5.0], [3.0, 5.0]];
        let s = Standardizer::fit(x.view()).unwrap();
        let z = s.apply(x.view());
        assert_eq!(z, ndarray::array![[-1.0f32, 0.0], [1.0, 0.0]]);
    }
}
