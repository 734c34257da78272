use std::collections::HashMap;

use proptest::prelude::*;
use resiren_core::data::{
    build_biomes_task, build_sdm_task_with, build_traits_task_with, draw_species, fit_normalization,
    generate_synthetic_climatology, plan_epoch, sample_epoch, ClimGrid, MonthPolicy, SplitFractions, Target,
    TaskDataset, TraitFunction, MONTHS,
};
use resiren_core::encoding::EncodingKind;
use resiren_core::rng::SplitMix64;

fn grid(width: usize, height: usize, vars: usize, seed: u64) -> ClimGrid {
    fit_normalization(generate_synthetic_climatology(width, height, vars, seed).unwrap()).unwrap()
}

fn record_pixel(grid: &ClimGrid, data: &TaskDataset, i: usize) -> usize {
    let r = &data.records[i];
    grid.pixel_at(r.lon_deg, r.lat_deg).unwrap()
}

/// Average ranks, ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &k in &idx[i..=j] {
            out[k] = (i + j) as f64 / 2.0;
        }
        i = j + 1;
    }
    out
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    pearson(&ranks(a), &ranks(b))
}

#[test]
fn biome_classes_are_balanced_over_1e5_points() {
    let g = grid(512, 512, 1, 4);
    assert!(g.land_count() >= 100_000);
    let data = build_biomes_task(&g, 100_000, 5, SplitFractions::BIOMES, 8).unwrap();
    let mut counts = [0usize; 5];
    for r in &data.records {
        match r.target {
            Target::Class(c) => counts[c] += 1,
            ref t => panic!("unexpected target {t:?}"),
        }
    }
    for c in counts {
        let share = c as f64 / 100_000.0;
        assert!((share - 0.2).abs() <= 0.02, "{counts:?}");
    }
}

#[test]
fn occurrence_density_follows_suitability() {
    let g = grid(64, 32, 4, 3);
    let species = draw_species(4, 2, 9);
    let data = build_sdm_task_with(&g, &species, 40_000, SplitFractions::SDM, 9).unwrap();
    let mut counts: HashMap<usize, f64> = HashMap::new();
    for (i, r) in data.records.iter().enumerate() {
        if r.target == Target::Species(0) {
            *counts.entry(record_pixel(&g, &data, i)).or_default() += 1.0;
        }
    }
    let mut land = g.land_pixels();
    SplitMix64::new(77).shuffle(&mut land);
    let sample = &land[..300];
    let density: Vec<f64> = sample.iter().map(|p| counts.get(p).copied().unwrap_or(0.0)).collect();
    let suitability: Vec<f64> = sample
        .iter()
        .map(|&p| (1..=MONTHS as u8).map(|m| species[0].suitability(&g, p, m)).sum())
        .collect();
    let rho = spearman(&density, &suitability);
    assert!(rho > 0.3, "spearman {rho}");
}

/// Least squares with an intercept via the normal equations.
#[allow(clippy::needless_range_loop)]
fn least_squares(x: &[Vec<f64>], y: &[f64]) -> Vec<f64> {
    let k = x[0].len() + 1;
    let mut a = vec![vec![0.0; k + 1]; k];
    for (row, &t) in x.iter().zip(y) {
        let f: Vec<f64> = std::iter::once(1.0).chain(row.iter().copied()).collect();
        for i in 0..k {
            for j in 0..k {
                a[i][j] += f[i] * f[j];
            }
            a[i][k] += f[i] * t;
        }
    }
    for col in 0..k {
        let pivot = (col..k)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for r in 0..k {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=k {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    (0..k).map(|i| a[i][k] / a[i][i]).collect()
}

#[test]
fn annual_mean_trait_is_linear_in_raw_values() {
    let g = grid(64, 32, 3, 6);
    let data = build_traits_task_with(
        &g,
        &[TraitFunction::AnnualMean { var: 0 }],
        500,
        SplitFractions::TRAITS,
        2,
    )
    .unwrap();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (i, r) in data.records.iter().enumerate() {
        let p = record_pixel(&g, &data, i);
        x.push(
            (1..=MONTHS as u8)
                .map(|m| f64::from(g.value(m, 0, p)))
                .collect::<Vec<_>>(),
        );
        match &r.target {
            Target::Values(v) => y.push(v[0]),
            t => panic!("unexpected target {t:?}"),
        }
    }
    let beta = least_squares(&x, &y);
    let pred: Vec<f64> = x
        .iter()
        .map(|row| beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>())
        .collect();
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let sst: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let sse: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
    let r2 = 1.0 - sse / sst;
    assert!(r2 > 0.99, "R² {r2}");
}

#[test]
fn sampled_months_are_uniform() {
    let g = grid(64, 32, 1, 2);
    let mut counts = [0usize; MONTHS];
    let mut visits = 0;
    let mut seed = 0;
    while visits < 10_000 {
        for m in plan_epoch(&g, seed, MonthPolicy::Random).unwrap().months {
            counts[usize::from(m) - 1] += 1;
            visits += 1;
        }
        seed += 1;
    }
    let expected = visits as f64 / MONTHS as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // Upper 0.001 quantile of χ² with 11 degrees of freedom.
    assert!(chi2 < 31.264, "χ² {chi2} over {counts:?}");
}

#[test]
fn grid_file_size_at_desk_scale() {
    let g = grid(64, 32, 8, 1);
    let payload = 12 * 8 * 32 * 64 * 4;
    assert_eq!(payload, 786_432);
    let n = g.to_bytes().len();
    assert!(n >= payload && n < payload + 64 * 32 + 1024, "{n}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn epoch_visits_every_land_pixel_once(seed in any::<u64>(), batch in 1usize..300) {
        let g = grid(24, 12, 2, 5);
        let mut seen: Vec<usize> = sample_epoch(&g, batch, seed, MonthPolicy::Random, EncodingKind::for_input_dim(4, None).unwrap())
            .unwrap()
            .flat_map(|b| b.pixels)
            .collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, g.land_pixels());
    }

    #[test]
    fn month_policy_keeps_visit_order(seed in any::<u64>(), month in 1u8..=12) {
        let g = grid(24, 12, 2, 5);
        let random = plan_epoch(&g, seed, MonthPolicy::Random).unwrap();
        let fixed = plan_epoch(&g, seed, MonthPolicy::Fixed(month)).unwrap();
        prop_assert_eq!(random.pixels, fixed.pixels);
        prop_assert!(fixed.months.iter().all(|&m| m == month));
    }

    #[test]
    fn normalization_round_trips(var in 0usize..2, z in -5.0f64..5.0) {
        let g = grid(24, 12, 2, 5);
        let x = g.stats().denormalize(var, z);
        let back = g.stats().normalize(var, x);
        prop_assert!((back - z).abs() <= 1e-6 * z.abs().max(1.0));
    }

    #[test]
    fn task_points_lie_on_land(seed in 0u64..1000) {
        let g = grid(24, 12, 2, 5);
        let data = build_biomes_task(&g, 40, 3, SplitFractions::BIOMES, seed).unwrap();
        for i in 0..data.records.len() {
            prop_assert!(g.land()[record_pixel(&g, &data, i)]);
        }
    }
}
