//! Residual sinusoidal network: configuration, parameters, forward and
//! reverse passes, and the checkpoint file format.
//!
//! Layer `j` (1-based) computes `h_j = W_j z_j + b_j`, optionally mixes it with
//! the running residual `h'_{j-1}`, and applies its activation:
//!
//! ```text
//! h'_j = r * (h_j + h'_{j-1})   if layer j mixes
//! h'_j = h_j                    otherwise
//! z_{j+1} = A_j(h'_j)
//! ```
//!
//! with `r = 1/2` ([`ResidualMode::PaperHalf`]) or `r = 1/sqrt(2)`
//! ([`ResidualMode::SqrtTwo`]). Mixing only happens between hidden-to-hidden
//! layers: layer 2 starts the chain and layers `3..D-1` mix. The input
//! projection (layer 1) and the embedding projection (layer `D`) never mix.

mod backward;
mod checkpoint;
mod forward;
mod params;
mod stability;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use backward::{backward, OutputGradient};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, TrainingMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use forward::{forward, forward_observed, ForwardOutput, ForwardTrace, LayerTrace};
pub(crate) use params::{dense_tensors, dense_tensors_mut};
pub use params::{init_parameters, Dense, ParameterSet, Parameters};
pub use stability::{stability_profile, LayerSpread};

/// Floating point element type of a network replica (`f32` for training,
/// `f64` for gradient checks).
pub trait Real:
    num_traits::Float
    + num_traits::FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + fmt::Debug
    + fmt::Display
    + Default
    + Send
    + Sync
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + 'static
{
    fn of(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn of(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ActivationKind {
    /// `sin(ω₀ sinh(2x))`
    HSiren,
    /// `sin(ω₀ x)`
    Sine,
    Identity,
}

impl ActivationKind {
    #[inline]
    pub fn apply<T: Real>(self, omega0: T, x: T) -> T {
        match self {
            ActivationKind::HSiren => (omega0 * (x + x).sinh()).sin(),
            ActivationKind::Sine => (omega0 * x).sin(),
            ActivationKind::Identity => x,
        }
    }

    #[inline]
    pub fn derivative<T: Real>(self, omega0: T, x: T) -> T {
        match self {
            ActivationKind::HSiren => {
                let two = T::of(2.0);
                two * omega0 * (two * x).cosh() * (omega0 * (two * x).sinh()).cos()
            }
            ActivationKind::Sine => omega0 * (omega0 * x).cos(),
            ActivationKind::Identity => T::one(),
        }
    }
}

pub fn activation(kind: ActivationKind, omega0: f64, x: f64) -> f64 {
    kind.apply(omega0, x)
}

pub fn activation_derivative(kind: ActivationKind, omega0: f64, x: f64) -> f64 {
    kind.derivative(omega0, x)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// Plain SIREN, no skip connections.
    Off,
    /// `h' = (h + h'_prev) / 2`.
    #[serde(rename = "half")]
    PaperHalf,
    /// `h' = (h + h'_prev) / sqrt(2)`, variance preserving for independent inputs.
    #[serde(rename = "sqrt2")]
    SqrtTwo,
}

impl ResidualMode {
    pub fn factor(self) -> Option<f64> {
        match self {
            ResidualMode::Off => None,
            ResidualMode::PaperHalf => Some(0.5),
            ResidualMode::SqrtTwo => Some(std::f64::consts::FRAC_1_SQRT_2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ResidualMode::Off => "off",
            ResidualMode::PaperHalf => "half",
            ResidualMode::SqrtTwo => "sqrt2",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            ResidualMode::Off => 0,
            ResidualMode::PaperHalf => 1,
            ResidualMode::SqrtTwo => 2,
        }
    }

    pub(crate) fn from_code(c: u8) -> Result<Self> {
        match c {
            0 => Ok(ResidualMode::Off),
            1 => Ok(ResidualMode::PaperHalf),
            2 => Ok(ResidualMode::SqrtTwo),
            _ => Err(Error::invalid("residual", format!("unknown code {c}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirstLayer {
    HSiren,
    Sine,
}

impl std::str::FromStr for ResidualMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(ResidualMode::Off),
            "half" => Ok(ResidualMode::PaperHalf),
            "sqrt2" => Ok(ResidualMode::SqrtTwo),
            _ => Err(Error::invalid(
                "residual",
                format!("expected off, half or sqrt2, got {s:?}"),
            )),
        }
    }
}

impl FirstLayer {
    pub fn name(self) -> &'static str {
        match self {
            FirstLayer::HSiren => "hsiren",
            FirstLayer::Sine => "sine",
        }
    }

    pub fn activation(self) -> ActivationKind {
        match self {
            FirstLayer::HSiren => ActivationKind::HSiren,
            FirstLayer::Sine => ActivationKind::Sine,
        }
    }
}

impl std::str::FromStr for FirstLayer {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hsiren" => Ok(FirstLayer::HSiren),
            "sine" => Ok(FirstLayer::Sine),
            _ => Err(Error::invalid(
                "first_layer",
                format!("expected hsiren or sine, got {s:?}"),
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetworkConfig {
    pub depth: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub embedding_dim: usize,
    pub output_dim: usize,
    pub omega0: f64,
    pub residual: ResidualMode,
    pub first_layer: FirstLayer,
}

impl Default for NetworkConfig {
    /// Full-size encoder: 16 layers, width 512, 256-d embedding, 11 outputs.
    fn default() -> Self {
        Self {
            depth: 16,
            input_dim: 4,
            hidden_dim: 512,
            embedding_dim: 256,
            output_dim: 11,
            omega0: 30.0,
            residual: ResidualMode::PaperHalf,
            first_layer: FirstLayer::HSiren,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(Error::invalid("depth", format!("{} < 2", self.depth)));
        }
        if ![2, 4, 5].contains(&self.input_dim) {
            return Err(Error::invalid(
                "input_dim",
                format!("{} is not 2, 4 or 5", self.input_dim),
            ));
        }
        for (name, v) in [
            ("hidden_dim", self.hidden_dim),
            ("embedding_dim", self.embedding_dim),
            ("output_dim", self.output_dim),
        ] {
            if v == 0 {
                return Err(Error::invalid(name, "must be at least 1"));
            }
        }
        if !(self.omega0.is_finite() && self.omega0 > 0.0) {
            return Err(Error::invalid("omega0", format!("{} must be positive", self.omega0)));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of layer `l` (0-based).
    pub fn layer_dims(&self, l: usize) -> (usize, usize) {
        if l == 0 {
            (self.input_dim, self.hidden_dim)
        } else if l + 1 == self.depth {
            (self.hidden_dim, self.embedding_dim)
        } else {
            (self.hidden_dim, self.hidden_dim)
        }
    }

    /// Activation of layer `l` (0-based).
    pub fn activation(&self, l: usize) -> ActivationKind {
        if l + 1 == self.depth {
            ActivationKind::Identity
        } else if l == 0 {
            self.first_layer.activation()
        } else {
            ActivationKind::Sine
        }
    }

    /// Whether layer `l` (0-based) adds the running residual.
    pub fn mixes(&self, l: usize) -> bool {
        self.residual != ResidualMode::Off && l >= 2 && l + 1 < self.depth
    }

    pub fn parameter_count(&self) -> usize {
        let layers: usize = (0..self.depth)
            .map(|l| {
                let (i, o) = self.layer_dims(l);
                i * o + o
            })
            .sum();
        layers + self.embedding_dim * self.output_dim + self.output_dim
    }

    /// Names of the fields whose values differ between two configurations.
    pub fn differing_fields(&self, other: &NetworkConfig) -> Vec<&'static str> {
        let mut out = Vec::new();
        macro_rules! cmp {
            ($($f:ident),*) => {$(
                if self.$f != other.$f { out.push(stringify!($f)); }
            )*};
        }
        cmp!(
            depth,
            input_dim,
            hidden_dim,
            embedding_dim,
            output_dim,
            omega0,
            residual,
            first_layer
        );
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn activation_values() {
        assert_eq!(activation(ActivationKind::HSiren, 30.0, 0.0), 0.0);
        assert!((activation(ActivationKind::Sine, 30.0, PI / 60.0) - 1.0).abs() < 1e-15);
        assert_eq!(activation(ActivationKind::Identity, 30.0, 0.7), 0.7);
        assert_eq!(activation_derivative(ActivationKind::HSiren, 30.0, 0.0), 60.0);
        assert_eq!(activation_derivative(ActivationKind::Sine, 30.0, 0.0), 30.0);
        assert_eq!(activation_derivative(ActivationKind::Identity, 30.0, 5.0), 1.0);
    }

    #[test]
    fn derivative_matches_central_difference() {
        let h = 1e-5;
        let mut rng = crate::rng::SplitMix64::new(11);
        for kind in [ActivationKind::HSiren, ActivationKind::Sine, ActivationKind::Identity] {
            for _ in 0..200 {
                let x = rng.uniform(-1.0, 1.0);
                let f = |x: f64| activation(kind, 30.0, x);
                // Five-point central stencil: the three-point rule's h²·f'''/6 term
                // is ~2e-4 for HSiren near |x| = 1.
                let fd = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
                let an = activation_derivative(kind, 30.0, x);
                let rel = (fd - an).abs() / an.abs().max(1.0);
                assert!(rel < 1e-6, "{kind:?} x={x}: fd={fd} an={an}");
            }
        }
    }

    #[test]
    fn layer_layout() {
        let cfg = NetworkConfig::default();
        assert_eq!(cfg.layer_dims(0), (4, 512));
        assert_eq!(cfg.layer_dims(7), (512, 512));
        assert_eq!(cfg.layer_dims(15), (512, 256));
        assert_eq!(cfg.activation(0), ActivationKind::HSiren);
        assert_eq!(cfg.activation(14), ActivationKind::Sine);
        assert_eq!(cfg.activation(15), ActivationKind::Identity);
        assert!(!cfg.mixes(0) && !cfg.mixes(1) && cfg.mixes(2) && cfg.mixes(14) && !cfg.mixes(15));
        let two = NetworkConfig { depth: 2, ..cfg };
        assert_eq!(two.layer_dims(0), (4, 512));
        assert_eq!(two.layer_dims(1), (512, 256));
        assert!(!(0..2).any(|l| two.mixes(l)));
    }

    #[test]
    fn full_size_parameter_count() {
        let expected = (4 * 512 + 512) + 14 * (512 * 512 + 512) + (512 * 256 + 256) + (256 * 11 + 11);
        assert_eq!(NetworkConfig::default().parameter_count(), expected);
        assert_eq!(expected, 3_813_899);
    }

    #[test]
    fn validation() {
        let ok = NetworkConfig::default();
        assert!(ok.validate().is_ok());
        for (bad, field) in [
            (NetworkConfig { depth: 1, ..ok }, "depth"),
            (NetworkConfig { input_dim: 3, ..ok }, "input_dim"),
            (NetworkConfig { hidden_dim: 0, ..ok }, "hidden_dim"),
            (NetworkConfig { omega0: 0.0, ..ok }, "omega0"),
        ] {
            match bad.validate() {
                Err(Error::Validation { field: f, .. }) => assert_eq!(f, field),
                other => panic!("expected validation error, got {other:?}"),
            }
        }
    }

    #[test]
    fn config_diff() {
        let a = NetworkConfig::default();
        let b = NetworkConfig {
            first_layer: FirstLayer::Sine,
            ..a
        };
        assert_eq!(a.differing_fields(&b), vec!["first_layer"]);
        assert!(a.differing_fields(&a).is_empty());
    }
}
