//! Feature extraction for probes: frozen embeddings, raw coordinates, and
//! raw climate values.

use ndarray::{s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ClimGrid, TaskRecord};
use crate::encoding::{validate_lon_lat, EncodingKind, Epoch};
use crate::error::{Error, Result};
use crate::net::{forward, Checkpoint};

/// Months whose embeddings are concatenated for tasks without an observation date.
pub const SEASONAL_MONTHS: [u8; 4] = [3, 6, 9, 12];

const CHUNK: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryPoint {
    pub lon_deg: f64,
    pub lat_deg: f64,
    pub month: Option<u8>,
}

impl QueryPoint {
    pub fn new(lon_deg: f64, lat_deg: f64, month: Option<u8>) -> Result<Self> {
        validate_lon_lat(lon_deg, lat_deg)?;
        if let Some(m) = month {
            if !(1..=12).contains(&m) {
                return Err(Error::invalid("month", format!("{m} is outside 1..=12")));
            }
        }
        Ok(Self {
            lon_deg,
            lat_deg,
            month,
        })
    }
}

impl From<&TaskRecord> for QueryPoint {
    fn from(r: &TaskRecord) -> Self {
        Self {
            lon_deg: r.lon_deg,
            lat_deg: r.lat_deg,
            month: r.month,
        }
    }
}

/// Anything that turns coordinates into a feature matrix.
pub trait FeatureSource: Sync {
    fn name(&self) -> String;
    fn width(&self) -> usize;
    fn features(&self, points: &[QueryPoint]) -> Result<Array2<f32>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeaturePolicy {
    /// Embedding at each point's own month.
    #[serde(rename = "obs")]
    ObservationMonth,
    /// Embeddings at months 3, 6, 9, 12, concatenated in that order.
    Seasonal,
    /// Head outputs (reconstructed values) instead of embeddings: at the
    /// observation month when present, otherwise averaged over the seasonal months.
    #[serde(rename = "rec")]
    RecValues,
}

impl FeaturePolicy {
    pub fn name(self) -> &'static str {
        match self {
            FeaturePolicy::ObservationMonth => "obs",
            FeaturePolicy::Seasonal => "seasonal",
            FeaturePolicy::RecValues => "rec",
        }
    }
}

impl std::str::FromStr for FeaturePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "obs" => Ok(FeaturePolicy::ObservationMonth),
            "seasonal" => Ok(FeaturePolicy::Seasonal),
            "rec" => Ok(FeaturePolicy::RecValues),
            _ => Err(Error::invalid(
                "months",
                format!("expected obs, seasonal or rec, got {s:?}"),
            )),
        }
    }
}

/// A frozen pretrained network queried under a month policy.
#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    pub checkpoint: Checkpoint,
    pub policy: FeaturePolicy,
    /// Epoch code for five-input networks.
    pub epoch: Option<Epoch>,
    pub label: String,
}

impl EmbeddingProvider {
    pub fn new(checkpoint: Checkpoint, policy: FeaturePolicy) -> Self {
        Self {
            checkpoint,
            policy,
            epoch: None,
            label: "resiren".into(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    fn encoding(&self) -> Result<EncodingKind> {
        EncodingKind::for_input_dim(self.checkpoint.config.input_dim, self.epoch)
    }

    /// Runs the network on `(point, month)` pairs; returns embeddings or head outputs.
    fn evaluate(&self, points: &[QueryPoint], months: &[u8], head: bool) -> Result<Array2<f32>> {
        let enc = self.encoding()?;
        let cfg = &self.checkpoint.config;
        let width = if head { cfg.output_dim } else { cfg.embedding_dim };
        let parts: Vec<Array2<f32>> = points
            .par_chunks(CHUNK)
            .zip(months.par_chunks(CHUNK))
            .map(|(pts, ms)| {
                let mut x = Array2::<f32>::zeros((pts.len(), enc.dim()));
                let mut buf = vec![0.0; enc.dim()];
                for (i, (p, &m)) in pts.iter().zip(ms).enumerate() {
                    enc.write(p.lon_deg, p.lat_deg, m, &mut buf);
                    for (dst, &v) in x.row_mut(i).iter_mut().zip(&buf) {
                        *dst = v as f32;
                    }
                }
                let out = forward(cfg, &self.checkpoint.params, x.view(), false, head)?;
                Ok(if head {
                    out.head.expect("head requested")
                } else {
                    out.embedding
                })
            })
            .collect::<Result<_>>()?;
        let mut all = Array2::zeros((0, width));
        for p in parts {
            all.append(Axis(0), p.view()).expect("matching widths");
        }
        Ok(all)
    }

    fn observation_months(&self, points: &[QueryPoint]) -> Result<Vec<u8>> {
        let uses_month = self.encoding()?.uses_month();
        points
            .iter()
            .map(|p| match p.month {
                Some(m) => Ok(m),
                None if !uses_month => Ok(1),
                None => Err(Error::Missing("observation month for the observation-month policy")),
            })
            .collect()
    }
}

impl FeatureSource for EmbeddingProvider {
    fn name(&self) -> String {
        format!("{}/{}", self.label, self.policy.name())
    }

    fn width(&self) -> usize {
        let cfg = &self.checkpoint.config;
        match self.policy {
            FeaturePolicy::ObservationMonth => cfg.embedding_dim,
            FeaturePolicy::Seasonal => SEASONAL_MONTHS.len() * cfg.embedding_dim,
            FeaturePolicy::RecValues => cfg.output_dim,
        }
    }

    fn features(&self, points: &[QueryPoint]) -> Result<Array2<f32>> {
        let e = self.checkpoint.config.embedding_dim;
        match self.policy {
            FeaturePolicy::ObservationMonth => self.evaluate(points, &self.observation_months(points)?, false),
            FeaturePolicy::Seasonal => {
                let mut out = Array2::zeros((points.len(), self.width()));
                for (k, &m) in SEASONAL_MONTHS.iter().enumerate() {
                    let emb = self.evaluate(points, &vec![m; points.len()], false)?;
                    out.slice_mut(s![.., k * e..(k + 1) * e]).assign(&emb);
                }
                Ok(out)
            }
            FeaturePolicy::RecValues => {
                let dated: Vec<usize> = (0..points.len()).filter(|&i| points[i].month.is_some()).collect();
                let mut out = Array2::zeros((points.len(), self.width()));
                if dated.len() < points.len() {
                    for &m in &SEASONAL_MONTHS {
                        out += &(self.evaluate(points, &vec![m; points.len()], true)? / SEASONAL_MONTHS.len() as f32);
                    }
                }
                if !dated.is_empty() {
                    let pts: Vec<QueryPoint> = dated.iter().map(|&i| points[i]).collect();
                    let months: Vec<u8> = pts.iter().map(|p| p.month.expect("dated")).collect();
                    let rec = self.evaluate(&pts, &months, true)?;
                    for (r, &i) in dated.iter().enumerate() {
                        out.row_mut(i).assign(&rec.row(r));
                    }
                }
                Ok(out)
            }
        }
    }
}

/// `[lon / 180, lat / 90]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct LocationFeatures;

impl FeatureSource for LocationFeatures {
    fn name(&self) -> String {
        "location".into()
    }

    fn width(&self) -> usize {
        2
    }

    fn features(&self, points: &[QueryPoint]) -> Result<Array2<f32>> {
        Ok(Array2::from_shape_fn((points.len(), 2), |(i, j)| {
            let p = &points[i];
            (if j == 0 { p.lon_deg / 180.0 } else { p.lat_deg / 90.0 }) as f32
        }))
    }
}

/// Normalized grid values at the containing pixel for the seasonal months,
/// laid out `[month][var]`.
#[derive(Debug, Clone, Copy)]
pub struct ClimateFeatures<'g> {
    pub grid: &'g ClimGrid,
}

impl FeatureSource for ClimateFeatures<'_> {
    fn name(&self) -> String {
        "climate".into()
    }

    fn width(&self) -> usize {
        SEASONAL_MONTHS.len() * self.grid.n_vars()
    }

    fn features(&self, points: &[QueryPoint]) -> Result<Array2<f32>> {
        let v = self.grid.n_vars();
        let mut out = Array2::zeros((points.len(), self.width()));
        for (i, p) in points.iter().enumerate() {
            let pixel = self.grid.pixel_at(p.lon_deg, p.lat_deg).ok_or_else(|| {
                Error::invalid("point", format!("({}, {}) is outside the grid", p.lon_deg, p.lat_deg))
            })?;
            for (k, &m) in SEASONAL_MONTHS.iter().enumerate() {
                for var in 0..v {
                    out[[i, k * v + var]] = self.grid.normalized(m, var, pixel) as f32;
                }
            }
        }
        Ok(out)
    }
}

/// Column-wise concatenation of two sources.
pub struct ConcatFeatures<A, B>(pub A, pub B);

impl<A: FeatureSource, B: FeatureSource> FeatureSource for ConcatFeatures<A, B> {
    fn name(&self) -> String {
        format!("{}+{}", self.0.name(), self.1.name())
    }

    fn width(&self) -> usize {
        self.0.width() + self.1.width()
    }

    fn features(&self, points: &[QueryPoint]) -> Result<Array2<f32>> {
        let a = self.0.features(points)?;
        let b = self.1.features(points)?;
        ndarray::concatenate(Axis(1), &[a.view(), b.view()]).map_err(|_| Error::Shape {
            context: "concatenated features",
            expected: a.nrows(),
            found: b.nrows(),
        })
    }
}

/// Feature matrix for a set of points under a provider.
pub fn embed(source: &dyn FeatureSource, points: &[QueryPoint]) -> Result<Array2<f32>> {
    source.features(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::NormStats;
    use crate::net::{init_parameters, NetworkConfig, TrainingMeta};

    fn provider(policy: FeaturePolicy) -> EmbeddingProvider {
        let config = NetworkConfig {
            depth: 3,
            hidden_dim: 16,
            embedding_dim: 8,
            output_dim: 3,
            ..NetworkConfig::default()
        };
        let ckpt = Checkpoint {
            params: init_parameters(&config, 4).unwrap(),
            config,
            norm: NormStats::identity(3),
            meta: TrainingMeta::default(),
        };
        EmbeddingProvider::new(ckpt, policy)
    }

    fn points() -> Vec<QueryPoint> {
        vec![
            QueryPoint::new(10.0, 20.0, Some(3)).unwrap(),
            QueryPoint::new(-120.0, -45.0, Some(8)).unwrap(),
            QueryPoint::new(10.0, 20.0, Some(3)).unwrap(),
        ]
    }

    #[test]
    fn widths() {
        let pts = points();
        for (policy, w) in [
            (FeaturePolicy::ObservationMonth, 8),
            (FeaturePolicy::Seasonal, 32),
            (FeaturePolicy::RecValues, 3),
        ] {
            let p = provider(policy);
            let f = embed(&p, &pts).unwrap();
            assert_eq!(f.dim(), (3, w));
            assert_eq!(p.width(), w);
            assert_eq!(f.row(0), f.row(2));
        }
    }

    #[test]
    fn seasonal_blocks_match_observation_embeddings() {
        let pts = points();
        let seasonal = embed(&provider(FeaturePolicy::Seasonal), &pts).unwrap();
        let obs = embed(&provider(FeaturePolicy::ObservationMonth), &pts).unwrap();
        // Point 0 is observed in March, the first seasonal block.
        assert_eq!(seasonal.slice(s![0, ..8]), obs.row(0));
    }

    #[test]
    fn observation_month_required() {
        let undated = [QueryPoint::new(0.0, 0.0, None).unwrap()];
        assert!(matches!(
            embed(&provider(FeaturePolicy::ObservationMonth), &undated),
            Err(Error::Missing(_))
        ));
        assert!(embed(&provider(FeaturePolicy::Seasonal), &undated).is_ok());
    }
}
