use std::sync::OnceLock;

use resiren_core::analysis::{
    export_prediction_grid, reconstruction_error, scaling_sweep, CheckpointReconstructor, ErrorConfig, GroundTruth,
    PredictionRegion, ScalingConfig,
};
use resiren_core::data::{
    build_sdm_task, fit_normalization, generate_synthetic_climatology, ClimGrid, SplitFractions, MONTHS,
};
use resiren_core::net::{Checkpoint, NetworkConfig, ResidualMode};
use resiren_core::probe::{fit_probe, EmbeddingProvider, FeaturePolicy, ProbeData, ProbeKind, ProbeSpec};
use resiren_core::train::{pretrain, AdamConfig, TrainConfig};

fn desk() -> &'static (ClimGrid, Checkpoint) {
    static CELL: OnceLock<(ClimGrid, Checkpoint)> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = fit_normalization(generate_synthetic_climatology(64, 32, 8, 7).unwrap()).unwrap();
        let net = NetworkConfig {
            depth: 8,
            hidden_dim: 128,
            embedding_dim: 64,
            output_dim: 8,
            ..NetworkConfig::default()
        };
        let train = TrainConfig {
            adam: AdamConfig::default().with_learning_rate(1e-4),
            batch_size: 32,
            max_epochs: 60,
            ..TrainConfig::default()
        };
        let ckpt = pretrain(&grid, &net, &train).unwrap().checkpoint;
        (grid, ckpt)
    })
}

fn config(n: usize, cells: (usize, usize)) -> ErrorConfig {
    ErrorConfig {
        n_locations: n,
        seed: 1,
        cells,
    }
}

#[test]
fn ground_truth_has_zero_error() {
    let (grid, _) = desk();
    let report = reconstruction_error(&GroundTruth, grid, &config(300, (4, 8))).unwrap();
    assert_eq!(report.global_mae, 0.0);
    assert!(report
        .per_variable
        .iter()
        .all(|s| s.mean == 0.0 && s.quantiles.iter().all(|&q| q == 0.0)));
    assert!(report.cells.mae.iter().flatten().all(|&m| m == 0.0));
}

#[test]
fn monthly_means_partition_the_global_mean() {
    let (grid, ckpt) = desk();
    let report = reconstruction_error(&CheckpointReconstructor::new(ckpt), grid, &config(400, (8, 16))).unwrap();
    let (weighted, count) = report
        .per_month
        .iter()
        .fold((0.0, 0usize), |(s, n), m| (s + m.mean * m.count as f64, n + m.count));
    assert_eq!(count, 400 * MONTHS * grid.n_vars());
    assert!((weighted / count as f64 - report.global_mae).abs() <= 1e-6);
    let cell_weighted: f64 = report
        .cells
        .mae
        .iter()
        .zip(&report.cells.counts)
        .filter_map(|(m, &n)| m.map(|m| m * n as f64))
        .sum();
    assert!((cell_weighted / count as f64 - report.global_mae).abs() <= 1e-6);
}

#[test]
fn report_is_deterministic() {
    let (grid, ckpt) = desk();
    let model = CheckpointReconstructor::new(ckpt);
    let a = reconstruction_error(&model, grid, &config(200, (4, 8))).unwrap();
    let b = reconstruction_error(&model, grid, &config(200, (4, 8))).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |xs: &[f64]| {
        let mut idx: Vec<usize> = (0..xs.len()).collect();
        idx.sort_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut r = vec![0.0; xs.len()];
        for (k, &i) in idx.iter().enumerate() {
            r[i] = k as f64;
        }
        r
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let m = (n - 1.0) / 2.0;
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - m) * (y - m)).sum();
    let var: f64 = ra.iter().map(|x| (x - m).powi(2)).sum();
    cov / var
}

#[test]
fn cell_error_tracks_local_variance() {
    let (grid, ckpt) = desk();
    let report =
        reconstruction_error(&CheckpointReconstructor::new(ckpt), grid, &config(usize::MAX, (16, 32))).unwrap();
    let land = grid.land_pixels();
    let mut mae = Vec::new();
    let mut spread = Vec::new();
    for (cell, m) in report.cells.mae.iter().enumerate() {
        let members: Vec<usize> = land
            .iter()
            .copied()
            .filter(|&p| {
                let (lon, lat) = grid.pixel_center(p);
                report.cells.cell_of(lon, lat) == cell
            })
            .collect();
        let (Some(m), true) = (m, members.len() >= 3) else {
            continue;
        };
        let mut var_sum = 0.0;
        for month in 1..=MONTHS as u8 {
            for v in 0..grid.n_vars() {
                let xs: Vec<f64> = members.iter().map(|&p| grid.normalized(month, v, p)).collect();
                let mean = xs.iter().sum::<f64>() / xs.len() as f64;
                var_sum += xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
            }
        }
        mae.push(*m);
        spread.push(var_sum);
    }
    assert!(mae.len() >= 100, "{} cells", mae.len());
    let rho = spearman(&mae, &spread);
    assert!(rho > 0.2, "spearman {rho} over {} cells", mae.len());
}

#[test]
fn month_changes_exported_predictions() {
    let (grid, ckpt) = desk();
    let task = build_sdm_task(grid, 4, 800, SplitFractions::SDM, 3).unwrap();
    let provider = EmbeddingProvider::new(ckpt.clone(), FeaturePolicy::ObservationMonth);
    let data = ProbeData::build(&provider, &task, grid, 2).unwrap();
    let spec = ProbeSpec {
        epochs: 20,
        ..ProbeSpec::with_kind(ProbeKind::Linear)
    };
    let probe = fit_probe(&data, &spec, 0).unwrap();
    let region = PredictionRegion {
        extent: grid.extent(),
        rows: 9,
        cols: 18,
    };
    let march = export_prediction_grid(&provider, &probe, &region, Some(3), 0).unwrap();
    let sept = export_prediction_grid(&provider, &probe, &region, Some(9), 0).unwrap();
    assert_eq!(march.cells.len(), 9 * 18);
    let diff = march
        .cells
        .iter()
        .zip(&sept.cells)
        .map(|(a, b)| (a.2 - b.2).abs())
        .fold(0.0, f64::max);
    assert!(diff > 0.0);
    assert!(march.cells.iter().all(|c| (0.0..=1.0).contains(&c.2)));
}

#[test]
fn sweep_has_one_result_per_cell() {
    let grid = fit_normalization(generate_synthetic_climatology(16, 8, 2, 1).unwrap()).unwrap();
    let base = NetworkConfig {
        hidden_dim: 8,
        embedding_dim: 4,
        output_dim: 2,
        ..NetworkConfig::default()
    };
    let train = TrainConfig {
        batch_size: 16,
        max_steps: Some(5),
        ..TrainConfig::default()
    };
    let cfg = ScalingConfig {
        depths: vec![2, 3, 4],
        modes: vec![ResidualMode::Off, ResidualMode::PaperHalf, ResidualMode::SqrtTwo],
        seeds: vec![0, 1],
        ..ScalingConfig::new(base, train)
    };
    let results = scaling_sweep(&grid, &cfg).unwrap();
    assert_eq!(results.len(), 3 * 3 * 2);
    for (r, (d, m, s)) in results.iter().zip(cfg.cells()) {
        assert_eq!((r.depth, r.mode, r.seed), (d, m, s));
        assert!(r.final_loss.is_finite() && r.steps <= 5);
    }
    let shallow: Vec<u64> = results
        .iter()
        .filter(|r| r.depth == 2)
        .map(|r| r.final_loss.to_bits())
        .collect();
    assert_eq!(shallow[0..2], shallow[2..4]);
    assert_eq!(shallow[0..2], shallow[4..6]);
}
