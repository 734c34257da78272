//! Direct positional encoding of longitude, latitude and month.
//!
//! A point maps to `[lon/180, lat/90, sin(2πm/12), cos(2πm/12)]`, optionally
//! followed by a climatology-epoch code. Location-only networks consume just
//! the first two components.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Climatology window code appended as a fifth input component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Epoch {
    /// 1981–2010, encoded as -1.
    Reference,
    /// 2011–2040, encoded as -0.33.
    Near,
    /// 2041–2070, encoded as 0.33.
    Mid,
    /// 2071–2100, encoded as 1.
    Far,
}

impl Epoch {
    pub const ALL: [Epoch; 4] = [Epoch::Reference, Epoch::Near, Epoch::Mid, Epoch::Far];

    pub fn value(self) -> f64 {
        match self {
            Epoch::Reference => -1.0,
            Epoch::Near => -0.33,
            Epoch::Mid => 0.33,
            Epoch::Far => 1.0,
        }
    }

    /// Accepts exactly one of the four codes.
    pub fn from_value(v: f64) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.value() == v)
            .ok_or_else(|| Error::invalid("epoch", format!("{v} is not one of -1, -0.33, 0.33, 1")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTemporalPoint {
    lon_deg: f64,
    lat_deg: f64,
    month: u8,
    epoch: Option<Epoch>,
}

impl GeoTemporalPoint {
    pub fn new(lon_deg: f64, lat_deg: f64, month: u8) -> Result<Self> {
        Self::with_epoch(lon_deg, lat_deg, month, None)
    }

    pub fn with_epoch(lon_deg: f64, lat_deg: f64, month: u8, epoch: Option<Epoch>) -> Result<Self> {
        validate_lon_lat(lon_deg, lat_deg)?;
        if !(1..=12).contains(&month) {
            return Err(Error::invalid("month", format!("{month} not in 1..=12")));
        }
        Ok(Self {
            lon_deg,
            lat_deg,
            month,
            epoch,
        })
    }

    pub fn lon_deg(&self) -> f64 {
        self.lon_deg
    }

    pub fn lat_deg(&self) -> f64 {
        self.lat_deg
    }

    pub fn month(&self) -> u8 {
        self.month
    }

    pub fn epoch(&self) -> Option<Epoch> {
        self.epoch
    }
}

pub(crate) fn validate_lon_lat(lon_deg: f64, lat_deg: f64) -> Result<()> {
    if !(-180.0..=180.0).contains(&lon_deg) {
        return Err(Error::invalid("lon_deg", format!("{lon_deg} not in [-180, 180]")));
    }
    if !(-90.0..=90.0).contains(&lat_deg) {
        return Err(Error::invalid("lat_deg", format!("{lat_deg} not in [-90, 90]")));
    }
    Ok(())
}

/// Maps any integer month onto `1..=12` (13 -> 1, 0 -> 12, -1 -> 11).
pub fn wrap_month(month: i64) -> u8 {
    (month - 1).rem_euclid(12) as u8 + 1
}

/// `[sin(2πm/12), cos(2πm/12)]`.
pub fn month_terms(month: u8) -> [f64; 2] {
    let angle = TAU * f64::from(month) / 12.0;
    [angle.sin(), angle.cos()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    values: Vec<f64>,
}

impl PositionalEncoding {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

pub fn encode_position(pt: &GeoTemporalPoint) -> PositionalEncoding {
    let [s, c] = month_terms(pt.month);
    let mut values = vec![pt.lon_deg / 180.0, pt.lat_deg / 90.0, s, c];
    if let Some(e) = pt.epoch {
        values.push(e.value());
    }
    PositionalEncoding { values }
}

/// Which inputs a network consumes, derived from its input width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EncodingKind {
    /// `[λ, φ]`.
    Location,
    /// `[λ, φ, sin, cos]`.
    LocationMonth,
    /// `[λ, φ, sin, cos, c]` with a fixed epoch code.
    LocationMonthEpoch(Epoch),
}

impl EncodingKind {
    pub fn for_input_dim(input_dim: usize, epoch: Option<Epoch>) -> Result<Self> {
        match input_dim {
            2 => Ok(EncodingKind::Location),
            4 => Ok(EncodingKind::LocationMonth),
            5 => Ok(EncodingKind::LocationMonthEpoch(epoch.unwrap_or(Epoch::Reference))),
            d => Err(Error::invalid("input_dim", format!("{d} is not 2, 4 or 5"))),
        }
    }

    pub fn dim(self) -> usize {
        match self {
            EncodingKind::Location => 2,
            EncodingKind::LocationMonth => 4,
            EncodingKind::LocationMonthEpoch(_) => 5,
        }
    }

    pub fn uses_month(self) -> bool {
        !matches!(self, EncodingKind::Location)
    }

    /// Writes the encoding into `out` (length `self.dim()`). Inputs are assumed valid.
    pub fn write(self, lon_deg: f64, lat_deg: f64, month: u8, out: &mut [f64]) {
        out[0] = lon_deg / 180.0;
        out[1] = lat_deg / 90.0;
        if self.uses_month() {
            let [s, c] = month_terms(month);
            out[2] = s;
            out[3] = c;
        }
        if let EncodingKind::LocationMonthEpoch(e) = self {
            out[4] = e.value();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn spring_equator() {
        let p = GeoTemporalPoint::new(0.0, 0.0, 3).unwrap();
        assert!(close(encode_position(&p).values(), &[0.0, 0.0, 1.0, 0.0], 1e-15));
    }

    #[test]
    fn corner_december() {
        let p = GeoTemporalPoint::new(-180.0, 90.0, 12).unwrap();
        assert!(close(encode_position(&p).values(), &[-1.0, 1.0, 0.0, 1.0], 1e-12));
    }

    #[test]
    fn epoch_appended() {
        let p = GeoTemporalPoint::with_epoch(0.0, 0.0, 6, Some(Epoch::Near)).unwrap();
        let enc = encode_position(&p);
        assert_eq!(enc.dim(), 5);
        assert!(close(enc.values(), &[0.0, 0.0, 0.0, -1.0, -0.33], 1e-12));
    }

    #[test]
    fn validation_names_field() {
        let err = GeoTemporalPoint::new(181.0, 0.0, 1).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "lon_deg", .. }));
        let err = GeoTemporalPoint::new(0.0, -90.5, 1).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "lat_deg", .. }));
        let err = GeoTemporalPoint::new(0.0, 0.0, 13).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "month", .. }));
        let err = Epoch::from_value(1.0 / 3.0).unwrap_err();
        assert!(matches!(err, Error::Validation { field: "epoch", .. }));
        assert_eq!(Epoch::from_value(0.33).unwrap(), Epoch::Mid);
    }

    #[test]
    fn december_january_adjacent() {
        let step = 2.0 * (std::f64::consts::PI / 12.0).sin();
        for m in 1..=12u8 {
            let a = month_terms(m);
            let b = month_terms(wrap_month(i64::from(m) + 1));
            let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
            assert!((d - step).abs() < 1e-12, "month {m}: {d}");
        }
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_month(13), 1);
        assert_eq!(wrap_month(0), 12);
        assert_eq!(wrap_month(-1), 11);
        assert_eq!(wrap_month(24), 12);
    }

    #[test]
    fn kind_matches_encode_position() {
        let p = GeoTemporalPoint::new(42.5, -13.0, 7).unwrap();
        let mut buf = [0.0; 4];
        EncodingKind::LocationMonth.write(42.5, -13.0, 7, &mut buf);
        assert_eq!(&buf[..], encode_position(&p).values());
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn bounded_and_unit_circle(lon in -180.0f64..=180.0, lat in -90.0f64..=90.0, m in 1u8..=12) {
                let enc = encode_position(&GeoTemporalPoint::new(lon, lat, m).unwrap());
                prop_assert_eq!(enc.dim(), 4);
                for v in enc.values() {
                    prop_assert!((-1.0..=1.0).contains(v));
                }
                let r = enc.values()[2].powi(2) + enc.values()[3].powi(2);
                prop_assert!((r - 1.0).abs() < 1e-12);
            }

            #[test]
            fn month_periodic(m in -48i64..48, k in -3i64..3) {
                prop_assert_eq!(month_terms(wrap_month(m)), month_terms(wrap_month(m + 12 * k)));
            }
        }
    }
}
