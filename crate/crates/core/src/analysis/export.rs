use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::GeoExtent;
use crate::error::{Error, Result};
use crate::probe::{FeatureSource, FittedProbe, ProbeTask, QueryPoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionRegion {
    pub extent: GeoExtent,
    pub rows: usize,
    pub cols: usize,
}

impl PredictionRegion {
    pub fn validate(&self) -> Result<()> {
        self.extent.validate()?;
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::invalid("resolution", "rows and cols must be positive"));
        }
        Ok(())
    }

    /// Cell centers, row 0 northernmost, row-major.
    pub fn centers(&self) -> Vec<(f64, f64)> {
        let e = self.extent;
        let dx = (e.lon_max - e.lon_min) / self.cols as f64;
        let dy = (e.lat_max - e.lat_min) / self.rows as f64;
        (0..self.rows)
            .flat_map(|r| {
                (0..self.cols).map(move |c| (e.lon_min + (c as f64 + 0.5) * dx, e.lat_max - (r as f64 + 0.5) * dy))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionGrid {
    pub region: PredictionRegion,
    pub month: Option<u8>,
    pub output: usize,
    /// `(lon, lat, value)` per cell, in [`PredictionRegion::centers`] order.
    pub cells: Vec<(f64, f64, f64)>,
}

impl PredictionGrid {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["lon", "lat", "value"])?;
        for (lon, lat, v) in &self.cells {
            w.write_record([lon.to_string(), lat.to_string(), v.to_string()])?;
        }
        w.flush().map_err(|e| Error::io("<prediction grid>", e))?;
        Ok(())
    }
}

/// Evaluates one probe output over a regular grid at a given month.
///
/// Values are class probabilities (softmax) for classification, presence
/// probabilities (sigmoid) for species, and raw outputs for regression.
pub fn export_prediction_grid(
    source: &dyn FeatureSource,
    probe: &FittedProbe,
    region: &PredictionRegion,
    month: Option<u8>,
    output: usize,
) -> Result<PredictionGrid> {
    region.validate()?;
    if output >= probe.task.width() {
        return Err(Error::invalid(
            "output",
            format!("{output} exceeds {} outputs", probe.task.width()),
        ));
    }
    let centers = region.centers();
    let points = centers
        .iter()
        .map(|&(lon, lat)| QueryPoint::new(lon, lat, month))
        .collect::<Result<Vec<_>>>()?;
    let scores = probe.scores(source.features(&points)?.view())?;
    let cells = scores
        .rows()
        .into_iter()
        .zip(&centers)
        .map(|(row, &(lon, lat))| {
            let s = f64::from(row[output]);
            let v = match probe.task {
                ProbeTask::Classification { .. } => {
                    let m = row.iter().fold(f32::NEG_INFINITY, |a, &b| a.max(b));
                    let z: f64 = row.iter().map(|&x| f64::from(x - m).exp()).sum();
                    f64::from(row[output] - m).exp() / z
                }
                ProbeTask::Sdm { .. } => 1.0 / (1.0 + (-s).exp()),
                ProbeTask::Regression { .. } => s,
            };
            (lon, lat, v)
        })
        .collect();
    Ok(PredictionGrid {
        region: *region,
        month,
        output,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::Parameters;
    use crate::probe::{LocationFeatures, Mlp, ProbeKind, ScoreModel};

    fn constant_probe() -> FittedProbe {
        let mut m = Mlp::affine(2, 1, 0).unwrap();
        for t in m.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
        FittedProbe {
            kind: ProbeKind::Linear,
            task: ProbeTask::Regression { n_targets: 1 },
            model: ScoreModel::Mlp(m),
            standardizer: None,
            best_epoch: 0,
            val_metric: 0.0,
        }
    }

    #[test]
    fn constant_probe_gives_constant_grid() {
        let region = PredictionRegion {
            extent: GeoExtent::GLOBAL,
            rows: 5,
            cols: 7,
        };
        let g = export_prediction_grid(&LocationFeatures, &constant_probe(), &region, Some(3), 0).unwrap();
        assert_eq!(g.cells.len(), 35);
        assert!(g.cells.iter().all(|c| c.2 == 0.0));
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 36);
    }

    #[test]
    fn bad_output_rejected() {
        let region = PredictionRegion {
            extent: GeoExtent::GLOBAL,
            rows: 1,
            cols: 1,
        };
        assert!(export_prediction_grid(&LocationFeatures, &constant_probe(), &region, None, 1).is_err());
    }
}
