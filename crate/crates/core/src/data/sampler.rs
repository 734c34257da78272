//! Epoch sampling for pretraining.
//!
//! An epoch is a seeded permutation of the land pixels. Two independent
//! streams are derived from the epoch seed: `"visit-order"` shuffles the
//! pixels and `"months"` draws one month per visit. The month stream is
//! consumed identically under every [`MonthPolicy`], so switching policy never
//! changes the visit order.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::grid::{ClimGrid, MONTHS};
use crate::encoding::EncodingKind;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MonthPolicy {
    /// One uniformly drawn month per visit.
    Random,
    /// The same month for every visit.
    Fixed(u8),
    /// All twelve months at once; targets are `[month][var]`, `12·V` wide.
    AllMonths,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    /// `[B, encoding.dim()]`.
    pub encodings: Array2<f32>,
    /// Normalized targets, `[B, V]` or `[B, 12·V]`.
    pub targets: Array2<f32>,
    /// Month per row; `0` under [`MonthPolicy::AllMonths`].
    pub months: Vec<u8>,
    pub pixels: Vec<usize>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Pre-generated visit order for one epoch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpochPlan {
    pub pixels: Vec<usize>,
    pub months: Vec<u8>,
}

pub fn plan_epoch(grid: &ClimGrid, seed: u64, policy: MonthPolicy) -> Result<EpochPlan> {
    let mut pixels = grid.land_pixels();
    if pixels.is_empty() {
        return Err(Error::invalid("land mask", "no land pixels to sample"));
    }
    if let MonthPolicy::Fixed(m) = policy {
        if !(1..=12).contains(&m) {
            return Err(Error::invalid("month", format!("{m} is outside 1..=12")));
        }
    }
    SplitMix64::new(derive_seed(seed, "visit-order")).shuffle(&mut pixels);
    let mut month_rng = SplitMix64::new(derive_seed(seed, "months"));
    let months = pixels
        .iter()
        .map(|_| {
            let drawn = month_rng.below(MONTHS) as u8 + 1;
            match policy {
                MonthPolicy::Random => drawn,
                MonthPolicy::Fixed(m) => m,
                MonthPolicy::AllMonths => 0,
            }
        })
        .collect();
    Ok(EpochPlan { pixels, months })
}

/// Iterator over the batches of one epoch.
#[derive(Debug)]
pub struct EpochSampler<'g> {
    grid: &'g ClimGrid,
    plan: EpochPlan,
    batch_size: usize,
    encoding: EncodingKind,
    all_months: bool,
    pos: usize,
}

impl<'g> EpochSampler<'g> {
    pub fn plan(&self) -> &EpochPlan {
        &self.plan
    }

    pub fn n_batches(&self) -> usize {
        self.plan.pixels.len().div_ceil(self.batch_size)
    }

    /// Assembles the batch covering visits `start..end`.
    pub fn batch_at(&self, start: usize, end: usize) -> SampleBatch {
        let grid = self.grid;
        let n_vars = grid.n_vars();
        let pixels = self.plan.pixels[start..end].to_vec();
        let months = self.plan.months[start..end].to_vec();
        let b = pixels.len();
        let dim = self.encoding.dim();
        let width = if self.all_months { MONTHS * n_vars } else { n_vars };
        let mut encodings = Array2::<f32>::zeros((b, dim));
        let mut targets = Array2::<f32>::zeros((b, width));
        let mut enc = vec![0.0f64; dim];
        for (i, (&p, &m)) in pixels.iter().zip(&months).enumerate() {
            let (lon, lat) = grid.pixel_center(p);
            self.encoding.write(lon, lat, m.max(1), &mut enc);
            for (dst, &src) in encodings.row_mut(i).iter_mut().zip(&enc) {
                *dst = src as f32;
            }
            let mut row = targets.row_mut(i);
            if self.all_months {
                for month in 1..=MONTHS as u8 {
                    for v in 0..n_vars {
                        row[(usize::from(month) - 1) * n_vars + v] = grid.normalized(month, v, p) as f32;
                    }
                }
            } else {
                for v in 0..n_vars {
                    row[v] = grid.normalized(m, v, p) as f32;
                }
            }
        }
        SampleBatch {
            encodings,
            targets,
            months,
            pixels,
        }
    }
}

impl Iterator for EpochSampler<'_> {
    type Item = SampleBatch;

    fn next(&mut self) -> Option<SampleBatch> {
        let n = self.plan.pixels.len();
        if self.pos >= n {
            return None;
        }
        let end = (self.pos + self.batch_size).min(n);
        let batch = self.batch_at(self.pos, end);
        self.pos = end;
        Some(batch)
    }
}

/// One epoch over the land pixels of a normalized grid.
///
/// [`MonthPolicy::AllMonths`] requires the location-only encoding; the other
/// policies require an encoding that carries the month.
pub fn sample_epoch(
    grid: &ClimGrid,
    batch_size: usize,
    seed: u64,
    policy: MonthPolicy,
    encoding: EncodingKind,
) -> Result<EpochSampler<'_>> {
    if batch_size == 0 {
        return Err(Error::invalid("batch_size", "must be positive"));
    }
    let all_months = policy == MonthPolicy::AllMonths;
    if all_months == encoding.uses_month() {
        return Err(Error::invalid(
            "encoding",
            format!("{encoding:?} does not fit month policy {policy:?}"),
        ));
    }
    Ok(EpochSampler {
        grid,
        plan: plan_epoch(grid, seed, policy)?,
        batch_size,
        encoding,
        all_months,
        pos: 0,
    })
}
