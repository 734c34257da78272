use std::io::Write;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{ClimGrid, GeoExtent, MONTHS};
use crate::encoding::{EncodingKind, Epoch};
use crate::error::{Error, Result};
use crate::net::{forward, Checkpoint};
use crate::rng::{derive_seed, SplitMix64};

/// Default spatial aggregation raster, rows × columns.
pub const DEFAULT_CELLS: (usize, usize) = (136, 320);

/// Offset inside the logarithm of summary statistics, so exact predictions stay finite.
pub const LOG_EPS: f64 = 1e-6;

/// Quantile levels reported for every error distribution.
pub const QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// Anything that predicts normalized grid values at pixels for one month.
pub trait Reconstructor: Sync {
    /// Normalized predictions, one row per pixel and one column per variable.
    fn reconstruct(&self, grid: &ClimGrid, pixels: &[usize], month: u8) -> Result<Array2<f64>>;
}

/// Returns the grid's own normalized values.
#[derive(Debug, Clone, Copy, Default)]
pub struct GroundTruth;

impl Reconstructor for GroundTruth {
    fn reconstruct(&self, grid: &ClimGrid, pixels: &[usize], month: u8) -> Result<Array2<f64>> {
        Ok(Array2::from_shape_fn((pixels.len(), grid.n_vars()), |(i, v)| {
            grid.normalized(month, v, pixels[i])
        }))
    }
}

/// A pretrained network evaluated at pixel centers.
#[derive(Debug, Clone, Copy)]
pub struct CheckpointReconstructor<'a> {
    pub checkpoint: &'a Checkpoint,
    pub epoch: Option<Epoch>,
}

impl<'a> CheckpointReconstructor<'a> {
    pub fn new(checkpoint: &'a Checkpoint) -> Self {
        Self {
            checkpoint,
            epoch: None,
        }
    }
}

impl Reconstructor for CheckpointReconstructor<'_> {
    fn reconstruct(&self, grid: &ClimGrid, pixels: &[usize], month: u8) -> Result<Array2<f64>> {
        let cfg = &self.checkpoint.config;
        let enc = EncodingKind::for_input_dim(cfg.input_dim, self.epoch)?;
        let v = grid.n_vars();
        // Location-only networks emit all months at once, laid out [month][var].
        let offset = if enc.uses_month() {
            if cfg.output_dim != v {
                return Err(Error::Shape {
                    context: "head width",
                    expected: v,
                    found: cfg.output_dim,
                });
            }
            0
        } else {
            if cfg.output_dim != MONTHS * v {
                return Err(Error::Shape {
                    context: "head width",
                    expected: MONTHS * v,
                    found: cfg.output_dim,
                });
            }
            (month as usize - 1) * v
        };
        let mut x = Array2::<f32>::zeros((pixels.len(), enc.dim()));
        let mut buf = vec![0.0; enc.dim()];
        for (i, &p) in pixels.iter().enumerate() {
            let (lon, lat) = grid.pixel_center(p);
            enc.write(lon, lat, month, &mut buf);
            for (dst, &b) in x.row_mut(i).iter_mut().zip(&buf) {
                *dst = b as f32;
            }
        }
        let out = forward(cfg, &self.checkpoint.params, x.view(), false, true)?;
        let head = out.head.ok_or(Error::Missing("reconstruction head"))?;
        Ok(Array2::from_shape_fn((pixels.len(), v), |(i, j)| {
            f64::from(head[[i, offset + j]])
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorSummary {
    pub count: usize,
    pub mean: f64,
    /// Values at [`QUANTILES`], linear interpolation between order statistics.
    pub quantiles: Vec<f64>,
    /// Mean of `ln(error + LOG_EPS)`.
    pub mean_log: f64,
}

impl ErrorSummary {
    pub fn from_errors(errors: &[f64]) -> Self {
        if errors.is_empty() {
            return Self {
                count: 0,
                mean: 0.0,
                quantiles: vec![0.0; QUANTILES.len()],
                mean_log: LOG_EPS.ln(),
            };
        }
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len() as f64;
        Self {
            count: sorted.len(),
            mean: sorted.iter().sum::<f64>() / n,
            quantiles: QUANTILES.iter().map(|&q| quantile(&sorted, q)).collect(),
            mean_log: sorted.iter().map(|e| (e + LOG_EPS).ln()).sum::<f64>() / n,
        }
    }
}

/// Quantile of sorted data, interpolating linearly at position `q·(n−1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean absolute error per spatial cell; cells partition the grid extent evenly,
/// row 0 northernmost. Locations fall into the cell containing their pixel center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellErrors {
    pub rows: usize,
    pub cols: usize,
    pub extent: GeoExtent,
    pub counts: Vec<usize>,
    /// `None` for cells without sampled locations.
    pub mae: Vec<Option<f64>>,
}

impl CellErrors {
    pub fn cell_of(&self, lon: f64, lat: f64) -> usize {
        let e = self.extent;
        let col = (((lon - e.lon_min) / (e.lon_max - e.lon_min) * self.cols as f64) as usize).min(self.cols - 1);
        let row = (((e.lat_max - lat) / (e.lat_max - e.lat_min) * self.rows as f64) as usize).min(self.rows - 1);
        row * self.cols + col
    }

    /// `(lon_min, lon_max, lat_min, lat_max)` of a cell.
    pub fn cell_bounds(&self, cell: usize) -> (f64, f64, f64, f64) {
        let e = self.extent;
        let dx = (e.lon_max - e.lon_min) / self.cols as f64;
        let dy = (e.lat_max - e.lat_min) / self.rows as f64;
        let (r, c) = (cell / self.cols, cell % self.cols);
        let lon0 = e.lon_min + c as f64 * dx;
        let lat1 = e.lat_max - r as f64 * dy;
        (lon0, lon0 + dx, lat1 - dy, lat1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub n_locations: usize,
    pub seed: u64,
    /// Sampled land pixels, in sampling order.
    pub pixels: Vec<usize>,
    pub global_mae: f64,
    pub per_variable: Vec<ErrorSummary>,
    /// Months 1..=12 in order.
    pub per_month: Vec<ErrorSummary>,
    pub cells: CellErrors,
}

impl ErrorReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per variable and per month: `scope, index, count, mean, q05, q25, q50, q75, q95, mean_log`.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "scope", "index", "count", "mean", "q05", "q25", "q50", "q75", "q95", "mean_log",
        ])?;
        let rows = self
            .per_variable
            .iter()
            .enumerate()
            .map(|(i, s)| ("variable", i, s))
            .chain(self.per_month.iter().enumerate().map(|(i, s)| ("month", i + 1, s)));
        for (scope, index, s) in rows {
            let mut rec = vec![
                scope.to_string(),
                index.to_string(),
                s.count.to_string(),
                s.mean.to_string(),
            ];
            rec.extend(s.quantiles.iter().map(f64::to_string));
            rec.push(s.mean_log.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<summary>", e))?;
        Ok(())
    }

    /// `row, col, lon_min, lon_max, lat_min, lat_max, count, mae` for populated cells.
    pub fn write_cells_csv<W: Write>(&self, out: W) -> Result<()> {
        let c = &self.cells;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["row", "col", "lon_min", "lon_max", "lat_min", "lat_max", "count", "mae"])?;
        for (cell, mae) in c.mae.iter().enumerate() {
            if let Some(mae) = mae {
                let (a, b, s, n) = c.cell_bounds(cell);
                w.write_record([
                    (cell / c.cols).to_string(),
                    (cell % c.cols).to_string(),
                    a.to_string(),
                    b.to_string(),
                    s.to_string(),
                    n.to_string(),
                    c.counts[cell].to_string(),
                    mae.to_string(),
                ])?;
            }
        }
        w.flush().map_err(|e| Error::io("<cells>", e))?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorConfig {
    pub n_locations: usize,
    pub seed: u64,
    pub cells: (usize, usize),
}

impl Default for ErrorConfig {
    fn default() -> Self {
        Self {
            n_locations: 100_000,
            seed: 0,
            cells: DEFAULT_CELLS,
        }
    }
}

/// Land pixels to score: all of them when `n` reaches the land count,
/// otherwise `n` drawn without replacement.
fn sample_pixels(grid: &ClimGrid, n: usize, seed: u64) -> Vec<usize> {
    let mut land = grid.land_pixels();
    if n < land.len() {
        let mut rng = SplitMix64::new(derive_seed(seed, "error-locations"));
        for i in 0..n {
            let j = i + rng.below(land.len() - i);
            land.swap(i, j);
        }
        land.truncate(n);
    }
    land
}

/// Absolute errors in normalized space at sampled land pixels for all twelve
/// months, summarised per variable, per month and per spatial cell.
pub fn reconstruction_error(model: &dyn Reconstructor, grid: &ClimGrid, cfg: &ErrorConfig) -> Result<ErrorReport> {
    if cfg.n_locations == 0 {
        return Err(Error::invalid("n_locations", "must be positive"));
    }
    if cfg.cells.0 == 0 || cfg.cells.1 == 0 {
        return Err(Error::invalid("cells", "need at least one row and column"));
    }
    let pixels = sample_pixels(grid, cfg.n_locations, cfg.seed);
    if pixels.is_empty() {
        return Err(Error::invalid("land mask", "no land pixels"));
    }
    let v = grid.n_vars();
    let mut cells = CellErrors {
        rows: cfg.cells.0,
        cols: cfg.cells.1,
        extent: grid.extent(),
        counts: vec![0; cfg.cells.0 * cfg.cells.1],
        mae: vec![None; cfg.cells.0 * cfg.cells.1],
    };
    let cell_of: Vec<usize> = pixels
        .iter()
        .map(|&p| {
            let (lon, lat) = grid.pixel_center(p);
            cells.cell_of(lon, lat)
        })
        .collect();
    let mut cell_sum = vec![0.0; cells.counts.len()];
    let mut per_var: Vec<Vec<f64>> = vec![Vec::with_capacity(pixels.len() * MONTHS); v];
    let mut per_month = Vec::with_capacity(MONTHS);
    for month in 1..=MONTHS as u8 {
        let pred = model.reconstruct(grid, &pixels, month)?;
        if pred.dim() != (pixels.len(), v) {
            return Err(Error::Shape {
                context: "reconstruction",
                expected: pixels.len() * v,
                found: pred.len(),
            });
        }
        let mut errs = Vec::with_capacity(pixels.len() * v);
        for (i, &p) in pixels.iter().enumerate() {
            for (var, bucket) in per_var.iter_mut().enumerate() {
                let e = (pred[[i, var]] - grid.normalized(month, var, p)).abs();
                if !e.is_finite() {
                    return Err(Error::NonFinite {
                        location: format!("reconstruction at pixel {p}, month {month}"),
                    });
                }
                errs.push(e);
                bucket.push(e);
                cell_sum[cell_of[i]] += e;
                cells.counts[cell_of[i]] += 1;
            }
        }
        per_month.push(ErrorSummary::from_errors(&errs));
    }
    for (c, &n) in cells.counts.iter().enumerate() {
        if n > 0 {
            cells.mae[c] = Some(cell_sum[c] / n as f64);
        }
    }
    let total: f64 = cell_sum.iter().sum();
    let count: usize = cells.counts.iter().sum();
    Ok(ErrorReport {
        n_locations: pixels.len(),
        seed: cfg.seed,
        pixels,
        global_mae: total / count as f64,
        per_variable: per_var.iter().map(|e| ErrorSummary::from_errors(e)).collect(),
        per_month,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_normalization, generate_synthetic_climatology};

    #[test]
    fn quantile_interpolates() {
        let s = [0.0, 1.0, 2.0, 10.0];
        assert_eq!(quantile(&s, 0.0), 0.0);
        assert_eq!(quantile(&s, 1.0), 10.0);
        assert!((quantile(&s, 0.5) - 1.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_scores_zero() {
        let grid = fit_normalization(generate_synthetic_climatology(16, 8, 2, 3).unwrap()).unwrap();
        let cfg = ErrorConfig {
            n_locations: 20,
            seed: 1,
            cells: (4, 8),
        };
        let r = reconstruction_error(&GroundTruth, &grid, &cfg).unwrap();
        assert_eq!(r.global_mae, 0.0);
        assert_eq!(r.n_locations, 20);
        assert!(r
            .per_variable
            .iter()
            .all(|s| s.mean == 0.0 && s.quantiles.iter().all(|&q| q == 0.0)));
        assert_eq!(r.cells.counts.iter().sum::<usize>(), 20 * 12 * 2);
        assert_eq!(reconstruction_error(&GroundTruth, &grid, &cfg).unwrap(), r);
    }

    #[test]
    fn cells_cover_extent() {
        let c = CellErrors {
            rows: 3,
            cols: 4,
            extent: GeoExtent::GLOBAL,
            counts: vec![0; 12],
            mae: vec![None; 12],
        };
        assert_eq!(c.cell_of(-180.0, 90.0), 0);
        assert_eq!(c.cell_of(180.0, -90.0), 11);
        let (a, _, _, n) = c.cell_bounds(0);
        let (_, b, s, _) = c.cell_bounds(11);
        assert_eq!((a, b, s, n), (-180.0, 180.0, -90.0, 90.0));
    }
}
