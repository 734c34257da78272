use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_probe, ProbeData, ProbeSpec};
use crate::error::{Error, Result};

/// Test-split metric of one probe configuration over several initialisations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub provider: String,
    pub task: String,
    pub probe_kind: String,
    pub metric: String,
    pub mean: f64,
    /// Population standard deviation over seeds.
    pub std: f64,
    pub seeds: Vec<u64>,
    pub values: Vec<f64>,
}

impl ProbeReport {
    pub fn from_values(
        provider: impl Into<String>,
        task: impl Into<String>,
        probe_kind: impl Into<String>,
        metric: impl Into<String>,
        seeds: Vec<u64>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.is_empty() || values.len() != seeds.len() {
            return Err(Error::invalid("values", "need one value per seed"));
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        Ok(Self {
            provider: provider.into(),
            task: task.into(),
            probe_kind: probe_kind.into(),
            metric: metric.into(),
            mean,
            std,
            seeds,
            values,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Writes reports as CSV with columns `provider, task, probe_kind, metric,
/// mean, std, seed_0, ..`; rows with fewer seeds leave trailing cells empty.
pub fn write_reports_csv<W: Write>(reports: &[ProbeReport], out: W) -> Result<()> {
    let n_seeds = reports.iter().map(|r| r.values.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = ["provider", "task", "probe_kind", "metric", "mean", "std"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((0..n_seeds).map(|i| format!("seed_{i}")));
    w.write_record(&header)?;
    for r in reports {
        let mut row = vec![
            r.provider.clone(),
            r.task.clone(),
            r.probe_kind.clone(),
            r.metric.clone(),
            r.mean.to_string(),
            r.std.to_string(),
        ];
        row.extend((0..n_seeds).map(|i| r.values.get(i).map(f64::to_string).unwrap_or_default()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Trains `spec.n_inits` probes with seeds `0..n_inits` in parallel and
/// summarises their test-split metric.
pub fn run_probe_suite(data: &ProbeData, spec: &ProbeSpec) -> Result<ProbeReport> {
    spec.validate()?;
    if data.test.is_empty() {
        return Err(Error::invalid("test split", "no test records"));
    }
    let seeds: Vec<u64> = (0..spec.n_inits as u64).collect();
    let values = seeds
        .par_iter()
        .map(|&seed| fit_probe(data, spec, seed)?.evaluate(&data.test))
        .collect::<Result<Vec<f64>>>()?;
    ProbeReport::from_values(
        data.source.clone(),
        data.task_name.clone(),
        spec.kind.name(),
        data.task.metric_name(),
        seeds,
        values,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let r = ProbeReport::from_values("p", "t", "linear", "r2", vec![0, 1], vec![1.0, 3.0]).unwrap();
        assert_eq!(r.mean, 2.0);
        assert_eq!(r.std, 1.0);
    }

    #[test]
    fn csv_layout() {
        let a = ProbeReport::from_values("p", "t", "linear", "r2", vec![0, 1], vec![0.5, 0.25]).unwrap();
        let b = ProbeReport::from_values("q", "t", "mlp", "r2", vec![0], vec![1.0]).unwrap();
        let mut buf = Vec::new();
        write_reports_csv(&[a, b], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "provider,task,probe_kind,metric,mean,std,seed_0,seed_1");
        assert_eq!(lines[1], "p,t,linear,r2,0.375,0.125,0.5,0.25");
        assert_eq!(lines[2], "q,t,mlp,r2,1,0,1,");
    }
}
