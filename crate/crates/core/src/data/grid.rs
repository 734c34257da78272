//! Multi-variable monthly raster with a land mask.
//!
//! File layout (little-endian):
//!
//! ```text
//! "CGRD"  u32 version
//! u32 W, u32 H, u32 V, u32 M (= 12)
//! f64 lon_min, f64 lon_max, f64 lat_min, f64 lat_max
//! V × (f64 mean, f64 std)
//! M·V·H·W × f32 values, index ((m·V + v)·H + y)·W + x, row 0 northernmost
//! ceil(H·W / 8) mask bytes, pixel y·W + x at bit (i % 8) of byte i / 8
//! u32 CRC32 of all preceding bytes
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{read_file, write_file, Reader, Writer};
use crate::error::{Error, Result};

pub const MONTHS: usize = 12;
pub const GRID_MAGIC: &str = "CGRD";
pub const GRID_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoExtent {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
}

impl GeoExtent {
    pub const GLOBAL: GeoExtent = GeoExtent {
        lon_min: -180.0,
        lon_max: 180.0,
        lat_min: -90.0,
        lat_max: 90.0,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.lon_min >= -180.0
            && self.lon_max <= 180.0
            && self.lat_min >= -90.0
            && self.lat_max <= 90.0
            && self.lon_min < self.lon_max
            && self.lat_min < self.lat_max;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(
                "extent",
                format!("{self:?} is empty or outside the globe"),
            ))
        }
    }

    pub fn contains(&self, lon: f64, lat: f64) -> bool {
        (self.lon_min..=self.lon_max).contains(&lon) && (self.lat_min..=self.lat_max).contains(&lat)
    }
}

/// Per-variable Gaussian normalization statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    pub fn identity(n_vars: usize) -> Self {
        Self {
            mean: vec![0.0; n_vars],
            std: vec![1.0; n_vars],
        }
    }

    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn normalize(&self, var: usize, x: f64) -> f64 {
        (x - self.mean[var]) / self.std[var]
    }

    pub fn denormalize(&self, var: usize, z: f64) -> f64 {
        z * self.std[var] + self.mean[var]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimGrid {
    width: usize,
    height: usize,
    n_vars: usize,
    extent: GeoExtent,
    values: Vec<f32>,
    land: Vec<bool>,
    stats: NormStats,
}

impl ClimGrid {
    /// `values` in `[month][var][row][col]` order, `land` in `[row][col]` order.
    pub fn new(
        width: usize,
        height: usize,
        n_vars: usize,
        extent: GeoExtent,
        values: Vec<f32>,
        land: Vec<bool>,
    ) -> Result<Self> {
        if width == 0 || height == 0 || n_vars == 0 {
            return Err(Error::invalid("grid dims", format!("{width}x{height}x{n_vars}")));
        }
        extent.validate()?;
        let n = MONTHS * n_vars * height * width;
        if values.len() != n {
            return Err(Error::Shape {
                context: "grid values",
                expected: n,
                found: values.len(),
            });
        }
        if land.len() != width * height {
            return Err(Error::Shape {
                context: "land mask",
                expected: width * height,
                found: land.len(),
            });
        }
        let grid = Self {
            width,
            height,
            n_vars,
            extent,
            values,
            land,
            stats: NormStats::identity(n_vars),
        };
        for p in grid.land_pixels() {
            for m in 1..=MONTHS as u8 {
                for v in 0..n_vars {
                    if !grid.value(m, v, p).is_finite() {
                        return Err(Error::NonFinite {
                            location: format!("grid pixel {p} month {m} variable {v}"),
                        });
                    }
                }
            }
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_pixels(&self) -> usize {
        self.width * self.height
    }

    pub fn extent(&self) -> GeoExtent {
        self.extent
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn land(&self) -> &[bool] {
        &self.land
    }

    pub fn stats(&self) -> &NormStats {
        &self.stats
    }

    pub fn with_stats(mut self, stats: NormStats) -> Result<Self> {
        if stats.len() != self.n_vars || stats.std.len() != self.n_vars {
            return Err(Error::Shape {
                context: "normalization statistics",
                expected: self.n_vars,
                found: stats.len(),
            });
        }
        if let Some(v) = stats.std.iter().position(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::invalid("std", format!("variable {v} has non-positive spread")));
        }
        self.stats = stats;
        Ok(self)
    }

    /// Raw value; `month` is 1-based, `pixel = row * width + col`.
    #[inline]
    pub fn value(&self, month: u8, var: usize, pixel: usize) -> f32 {
        let m = usize::from(month) - 1;
        self.values[(m * self.n_vars + var) * self.n_pixels() + pixel]
    }

    #[inline]
    pub fn normalized(&self, month: u8, var: usize, pixel: usize) -> f64 {
        self.stats.normalize(var, f64::from(self.value(month, var, pixel)))
    }

    pub fn land_pixels(&self) -> Vec<usize> {
        (0..self.n_pixels()).filter(|&p| self.land[p]).collect()
    }

    pub fn land_count(&self) -> usize {
        self.land.iter().filter(|&&l| l).count()
    }

    fn cell_size(&self) -> (f64, f64) {
        (
            (self.extent.lon_max - self.extent.lon_min) / self.width as f64,
            (self.extent.lat_max - self.extent.lat_min) / self.height as f64,
        )
    }

    /// `(lon, lat)` of the pixel center.
    pub fn pixel_center(&self, pixel: usize) -> (f64, f64) {
        let (dx, dy) = self.cell_size();
        let (row, col) = (pixel / self.width, pixel % self.width);
        (
            self.extent.lon_min + (col as f64 + 0.5) * dx,
            self.extent.lat_max - (row as f64 + 0.5) * dy,
        )
    }

    /// `(lon_min, lon_max, lat_min, lat_max)` of the pixel.
    pub fn pixel_bounds(&self, pixel: usize) -> (f64, f64, f64, f64) {
        let (dx, dy) = self.cell_size();
        let (row, col) = (pixel / self.width, pixel % self.width);
        let lon0 = self.extent.lon_min + col as f64 * dx;
        let lat1 = self.extent.lat_max - row as f64 * dy;
        (lon0, lon0 + dx, lat1 - dy, lat1)
    }

    /// Pixel containing a coordinate; the eastern and southern edges belong
    /// to the last column and row.
    pub fn pixel_at(&self, lon: f64, lat: f64) -> Option<usize> {
        if !self.extent.contains(lon, lat) {
            return None;
        }
        let (dx, dy) = self.cell_size();
        let col = (((lon - self.extent.lon_min) / dx) as usize).min(self.width - 1);
        let row = (((self.extent.lat_max - lat) / dy) as usize).min(self.height - 1);
        Some(row * self.width + col)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mask_len = self.n_pixels().div_ceil(8);
        let mut w = Writer::new(
            b"CGRD",
            GRID_VERSION,
            64 + 16 * self.n_vars + 4 * self.values.len() + mask_len,
        );
        for d in [self.width, self.height, self.n_vars, MONTHS] {
            w.u32(d as u32);
        }
        let e = self.extent;
        for v in [e.lon_min, e.lon_max, e.lat_min, e.lat_max] {
            w.f64(v);
        }
        for (m, s) in self.stats.mean.iter().zip(&self.stats.std) {
            w.f64(*m);
            w.f64(*s);
        }
        w.f32s(&self.values);
        let mut mask = vec![0u8; mask_len];
        for (i, _) in self.land.iter().enumerate().filter(|(_, &l)| l) {
            mask[i / 8] |= 1 << (i % 8);
        }
        w.bytes(&mask);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::open(bytes, GRID_MAGIC, GRID_VERSION, "grid")?;
        let width = r.u32()? as usize;
        let height = r.u32()? as usize;
        let n_vars = r.u32()? as usize;
        let months = r.u32()? as usize;
        if months != MONTHS {
            return Err(Error::invalid("months", format!("{months} != 12")));
        }
        let extent = GeoExtent {
            lon_min: r.f64()?,
            lon_max: r.f64()?,
            lat_min: r.f64()?,
            lat_max: r.f64()?,
        };
        let n_pixels = width.checked_mul(height).ok_or(Error::Truncated { what: "grid" })?;
        let n_values = MONTHS
            .checked_mul(n_vars)
            .and_then(|x| x.checked_mul(n_pixels))
            .ok_or(Error::Truncated { what: "grid" })?;
        let mask_len = n_pixels.div_ceil(8);
        r.expect_remaining(16 * n_vars + 4 * n_values + mask_len)?;
        r.verify_checksum()?;
        let mut stats = NormStats {
            mean: Vec::with_capacity(n_vars),
            std: Vec::with_capacity(n_vars),
        };
        for _ in 0..n_vars {
            stats.mean.push(r.f64()?);
            stats.std.push(r.f64()?);
        }
        let values = r.f32s(n_values)?;
        let mask = r.bytes(mask_len)?;
        r.finish()?;
        let land = (0..n_pixels).map(|i| mask[i / 8] >> (i % 8) & 1 == 1).collect();
        ClimGrid::new(width, height, n_vars, extent, values, land)?.with_stats(stats)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.to_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&read_file(path.as_ref())?)
    }
}

/// Per-variable mean and population standard deviation over all months and
/// land pixels, stored in the returned grid. Raw values are untouched;
/// normalized values are derived on access.
pub fn fit_normalization(grid: ClimGrid) -> Result<ClimGrid> {
    let land = grid.land_pixels();
    if land.is_empty() {
        return Err(Error::invalid("land mask", "no land pixels"));
    }
    let n = (land.len() * MONTHS) as f64;
    let mut stats = NormStats::identity(grid.n_vars);
    for v in 0..grid.n_vars {
        let g = &grid;
        let land = &land;
        let values = || (1..=MONTHS as u8).flat_map(move |m| land.iter().map(move |&p| f64::from(g.value(m, v, p))));
        let mean = values().sum::<f64>() / n;
        let var = values().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let std = var.sqrt();
        if !(std > 1e-12 * mean.abs().max(1.0)) {
            return Err(Error::invalid("variable", format!("variable {v} has zero variance")));
        }
        stats.mean[v] = mean;
        stats.std[v] = std;
    }
    grid.with_stats(stats)
}
