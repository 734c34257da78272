//! Deterministic synthetic climatology.
//!
//! For variable `v`, month `m`, longitude `λ` and latitude `φ` (degrees;
//! `λr`, `φr` in radians):
//!
//! ```text
//! value = a_v · cos(π φ / 90)
//!       + b_v · cos(2π (m − ϕ_v) / 12) · sign(φ)
//!       + Σ_{k=1..8} c_{v,k} · sin(α_k λr + β_k φr + γ_k)
//!       + d_v · E(λ, φ)
//! ```
//!
//! `E` is a ridged elevation field shared by all variables:
//!
//! ```text
//! M(λ, φ) = max(0, (1/3) Σ_{i=1..3} sin(μ_i λr + ν_i φr + ρ_i))
//! E(λ, φ) = 2 · M² · Σ_{o=0..2} 2^{-o} (1 − |sin(f_o (cos θ_o λr + sin θ_o φr) + ψ_o)|)²,  f_o = f_0 2^o
//! ```
//!
//! Coefficients come from `SplitMix64(derive_seed(seed, "climate"))` in this
//! order: texture waves `(α_k, β_k, γ_k)` for k = 1..8 with α, β ~ U(1, 4),
//! γ ~ U(0, 2π); then per variable `a_v` (magnitude U(0.5, 2), negative when a
//! further draw is below 0.5), `b_v ~ U(0.3, 1.5)`, `ϕ_v ~ U(0, 12)`,
//! `c_{v,k} ~ U(-0.4, 0.4)`, `d_v ~ U(-1.5, 1.5)`; then mountain waves
//! `(μ_i, ν_i, ρ_i)` with μ, ν ~ U(0.5, 1.5), ρ ~ U(0, 2π); then ridge octaves
//! `(θ_o ~ U(0, π), ψ_o ~ U(0, 2π))` preceded by a single `f_0 ~ U(3, 5)`.
//! The land field uses a separate stream `derive_seed(seed, "land")`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use super::grid::{ClimGrid, GeoExtent, MONTHS};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

/// Fraction of pixels marked as land by the generator.
pub const LAND_FRACTION: f64 = 0.4;

const TEXTURE_WAVES: usize = 8;
const MOUNTAIN_WAVES: usize = 3;
const RIDGE_OCTAVES: usize = 3;
const ELEVATION_SCALE: f64 = 2.0;

/// `sin(lon_freq · λr + lat_freq · φr + phase)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub lon_freq: f64,
    pub lat_freq: f64,
    pub phase: f64,
}

impl Wave {
    fn draw(rng: &mut SplitMix64, lo: f64, hi: f64) -> Self {
        Self {
            lon_freq: rng.uniform(lo, hi),
            lat_freq: rng.uniform(lo, hi),
            phase: rng.uniform(0.0, TAU),
        }
    }

    #[inline]
    pub fn eval(&self, lon_deg: f64, lat_deg: f64) -> f64 {
        (self.lon_freq * lon_deg.to_radians() + self.lat_freq * lat_deg.to_radians() + self.phase).sin()
    }
}

/// Mean of a few low-frequency waves, in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothField {
    pub waves: Vec<Wave>,
}

impl SmoothField {
    pub fn draw(rng: &mut SplitMix64, n: usize, freq_lo: f64, freq_hi: f64) -> Self {
        Self {
            waves: (0..n).map(|_| Wave::draw(rng, freq_lo, freq_hi)).collect(),
        }
    }

    pub fn eval(&self, lon_deg: f64, lat_deg: f64) -> f64 {
        self.waves.iter().map(|w| w.eval(lon_deg, lat_deg)).sum::<f64>() / self.waves.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RidgeOctave {
    pub freq: f64,
    pub angle: f64,
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeField {
    pub mountains: SmoothField,
    pub octaves: Vec<RidgeOctave>,
}

impl RidgeField {
    pub fn eval(&self, lon_deg: f64, lat_deg: f64) -> f64 {
        let mask = self.mountains.eval(lon_deg, lat_deg).max(0.0);
        if mask == 0.0 {
            return 0.0;
        }
        let (x, y) = (lon_deg.to_radians(), lat_deg.to_radians());
        let ridges: f64 = self
            .octaves
            .iter()
            .enumerate()
            .map(|(o, r)| {
                let t = r.freq * (r.angle.cos() * x + r.angle.sin() * y) + r.phase;
                0.5f64.powi(o as i32) * (1.0 - t.sin().abs()).powi(2)
            })
            .sum();
        ELEVATION_SCALE * mask * mask * ridges
    }
}

/// Coefficients of the synthetic climatology; see the module docs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthClimate {
    pub texture_waves: Vec<Wave>,
    pub lat_amp: Vec<f64>,
    pub seasonal_amp: Vec<f64>,
    pub seasonal_phase: Vec<f64>,
    pub texture_amp: Vec<[f64; TEXTURE_WAVES]>,
    pub elevation_amp: Vec<f64>,
    pub elevation: RidgeField,
    pub land: SmoothField,
}

fn check_vars(n_vars: usize) -> Result<()> {
    if (1..=16).contains(&n_vars) {
        Ok(())
    } else {
        Err(Error::invalid("n_vars", format!("{n_vars} is outside 1..=16")))
    }
}

impl SynthClimate {
    pub fn draw(n_vars: usize, seed: u64) -> Result<Self> {
        check_vars(n_vars)?;
        let mut rng = SplitMix64::new(derive_seed(seed, "climate"));
        let texture_waves = (0..TEXTURE_WAVES).map(|_| Wave::draw(&mut rng, 1.0, 4.0)).collect();
        let mut c = Self {
            texture_waves,
            lat_amp: Vec::with_capacity(n_vars),
            seasonal_amp: Vec::with_capacity(n_vars),
            seasonal_phase: Vec::with_capacity(n_vars),
            texture_amp: Vec::with_capacity(n_vars),
            elevation_amp: Vec::with_capacity(n_vars),
            elevation: RidgeField {
                mountains: SmoothField { waves: Vec::new() },
                octaves: Vec::new(),
            },
            land: SmoothField { waves: Vec::new() },
        };
        for _ in 0..n_vars {
            let magnitude = rng.uniform(0.5, 2.0);
            let sign = if rng.next_f64() < 0.5 { -1.0 } else { 1.0 };
            c.lat_amp.push(sign * magnitude);
            c.seasonal_amp.push(rng.uniform(0.3, 1.5));
            c.seasonal_phase.push(rng.uniform(0.0, 12.0));
            let mut amps = [0.0; TEXTURE_WAVES];
            for a in amps.iter_mut() {
                *a = rng.uniform(-0.4, 0.4);
            }
            c.texture_amp.push(amps);
            c.elevation_amp.push(rng.uniform(-1.5, 1.5));
        }
        c.elevation.mountains = SmoothField::draw(&mut rng, MOUNTAIN_WAVES, 0.5, 1.5);
        let f0 = rng.uniform(3.0, 5.0);
        c.elevation.octaves = (0..RIDGE_OCTAVES)
            .map(|o| RidgeOctave {
                freq: f0 * f64::from(1u32 << o),
                angle: rng.uniform(0.0, PI),
                phase: rng.uniform(0.0, TAU),
            })
            .collect();
        let mut land_rng = SplitMix64::new(derive_seed(seed, "land"));
        c.land = SmoothField::draw(&mut land_rng, 4, 0.5, 2.5);
        Ok(c)
    }

    /// Same draw with the latitudinal, texture, and elevation terms zeroed.
    pub fn pure_seasonal(n_vars: usize, seed: u64) -> Result<Self> {
        let mut c = Self::draw(n_vars, seed)?;
        c.lat_amp.iter_mut().for_each(|a| *a = 0.0);
        c.texture_amp.iter_mut().for_each(|a| *a = [0.0; TEXTURE_WAVES]);
        c.elevation_amp.iter_mut().for_each(|a| *a = 0.0);
        Ok(c)
    }

    pub fn n_vars(&self) -> usize {
        self.lat_amp.len()
    }

    /// Field value for a 1-based month.
    pub fn value(&self, var: usize, month: u8, lon_deg: f64, lat_deg: f64) -> f64 {
        let lat_term = self.lat_amp[var] * (PI * lat_deg / 90.0).cos();
        let sign = if lat_deg > 0.0 {
            1.0
        } else if lat_deg < 0.0 {
            -1.0
        } else {
            0.0
        };
        let season = self.seasonal_amp[var] * (TAU * (f64::from(month) - self.seasonal_phase[var]) / 12.0).cos() * sign;
        let texture: f64 = self.texture_amp[var]
            .iter()
            .zip(&self.texture_waves)
            .map(|(c, w)| c * w.eval(lon_deg, lat_deg))
            .sum();
        let elevation = if self.elevation_amp[var] == 0.0 {
            0.0
        } else {
            self.elevation_amp[var] * self.elevation.eval(lon_deg, lat_deg)
        };
        lat_term + season + texture + elevation
    }

    /// Land where the land field reaches its `(1 − fraction)` quantile over
    /// pixel centers; ties at the threshold count as land.
    pub fn land_mask(&self, grid_shape: (usize, usize), extent: GeoExtent, fraction: f64) -> Vec<bool> {
        let (width, height) = grid_shape;
        let field: Vec<f64> = (0..width * height)
            .map(|p| {
                let (lon, lat) = pixel_center(extent, width, height, p);
                self.land.eval(lon, lat)
            })
            .collect();
        let mut sorted = field.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let idx = (((1.0 - fraction) * n as f64).floor() as usize).min(n - 1);
        let threshold = sorted[idx];
        field.iter().map(|&f| f >= threshold).collect()
    }

    /// Renders onto a `width × height` grid over `extent` (identity normalization).
    pub fn render(&self, width: usize, height: usize, extent: GeoExtent) -> Result<ClimGrid> {
        if width < 8 || height < 8 {
            return Err(Error::invalid("grid dims", format!("{width}x{height} is below 8x8")));
        }
        extent.validate()?;
        let n_vars = self.n_vars();
        let n_pixels = width * height;
        let centers: Vec<(f64, f64)> = (0..n_pixels).map(|p| pixel_center(extent, width, height, p)).collect();
        let mut values = Vec::with_capacity(MONTHS * n_vars * n_pixels);
        for m in 1..=MONTHS as u8 {
            for v in 0..n_vars {
                values.extend(centers.iter().map(|&(lon, lat)| self.value(v, m, lon, lat) as f32));
            }
        }
        let land = self.land_mask((width, height), extent, LAND_FRACTION);
        ClimGrid::new(width, height, n_vars, extent, values, land)
    }
}

fn pixel_center(extent: GeoExtent, width: usize, height: usize, p: usize) -> (f64, f64) {
    let dx = (extent.lon_max - extent.lon_min) / width as f64;
    let dy = (extent.lat_max - extent.lat_min) / height as f64;
    (
        extent.lon_min + ((p % width) as f64 + 0.5) * dx,
        extent.lat_max - ((p / width) as f64 + 0.5) * dy,
    )
}

/// Global synthetic grid with identity normalization statistics; pass the
/// result through [`fit_normalization`](super::fit_normalization) before training.
pub fn generate_synthetic_climatology(width: usize, height: usize, n_vars: usize, seed: u64) -> Result<ClimGrid> {
    SynthClimate::draw(n_vars, seed)?.render(width, height, GeoExtent::GLOBAL)
}
