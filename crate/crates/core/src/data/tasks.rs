//! Synthetic downstream tasks: biome classification, presence-only species
//! distributions, and seasonal trait regression.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::grid::{ClimGrid, MONTHS};
use super::synth::SmoothField;
use crate::encoding::{validate_lon_lat, GeoTemporalPoint};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::invalid("split", format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl SplitFractions {
    pub const BIOMES: SplitFractions = SplitFractions::new(0.5, 0.1, 0.4);
    pub const SDM: SplitFractions = SplitFractions::new(0.7, 0.05, 0.25);
    pub const TRAITS: SplitFractions = SplitFractions::new(0.5, 0.1, 0.4);

    pub const fn new(train: f64, val: f64, test: f64) -> Self {
        Self { train, val, test }
    }

    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(0.0..=1.0).contains(f)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(
                "split",
                format!("{parts:?} must be in [0,1] and sum to 1"),
            ));
        }
        Ok(())
    }

    /// Record counts per split: train and val rounded, test takes the rest.
    pub fn sizes(&self, n: usize) -> [usize; 3] {
        let train = ((self.train * n as f64).round() as usize).min(n);
        let val = ((self.val * n as f64).round() as usize).min(n - train);
        [train, val, n - train - val]
    }

    /// Seeded assignment of `n` record indices to splits.
    pub fn assign(&self, n: usize, seed: u64) -> Result<Vec<Split>> {
        self.validate()?;
        let [train, val, _] = self.sizes(n);
        let mut order: Vec<usize> = (0..n).collect();
        SplitMix64::new(derive_seed(seed, "split")).shuffle(&mut order);
        let mut splits = vec![Split::Test; n];
        for (rank, &i) in order.iter().enumerate() {
            if rank < train {
                splits[i] = Split::Train;
            } else if rank < train + val {
                splits[i] = Split::Val;
            }
        }
        Ok(splits)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Target {
    Class(usize),
    Species(usize),
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub lon_deg: f64,
    pub lat_deg: f64,
    /// Observation month; present for SDM records only.
    pub month: Option<u8>,
    pub split: Split,
    pub target: Target,
}

impl TaskRecord {
    /// The record's coordinate at `month`, or at its own observation month.
    pub fn point(&self, month: Option<u8>) -> Result<GeoTemporalPoint> {
        let m = month.or(self.month).ok_or(Error::Missing("observation month"))?;
        GeoTemporalPoint::new(self.lon_deg, self.lat_deg, m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskKind {
    Biomes { n_classes: usize },
    Sdm { n_species: usize },
    Traits { n_targets: usize },
}

impl TaskKind {
    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Biomes { .. } => "biomes",
            TaskKind::Sdm { .. } => "sdm",
            TaskKind::Traits { .. } => "traits",
        }
    }

    /// Number of classes, species, or regression targets.
    pub fn width(self) -> usize {
        match self {
            TaskKind::Biomes { n_classes } => n_classes,
            TaskKind::Sdm { n_species } => n_species,
            TaskKind::Traits { n_targets } => n_targets,
        }
    }

    fn target_columns(self) -> Vec<String> {
        match self {
            TaskKind::Biomes { .. } => vec!["class".into()],
            TaskKind::Sdm { .. } => vec!["species".into()],
            TaskKind::Traits { n_targets } => (0..n_targets).map(|i| format!("trait_{i}")).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskDataset {
    pub kind: TaskKind,
    pub records: Vec<TaskRecord>,
}

impl TaskDataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.records.len())
            .filter(|&i| self.records[i].split == split)
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let width = self.kind.width();
        for (i, r) in self.records.iter().enumerate() {
            validate_lon_lat(r.lon_deg, r.lat_deg)?;
            if let Some(m) = r.month {
                if !(1..=12).contains(&m) {
                    return Err(Error::invalid("month", format!("record {i}: {m}")));
                }
            }
            let ok = match (&r.target, self.kind) {
                (Target::Class(c), TaskKind::Biomes { .. }) => *c < width,
                (Target::Species(s), TaskKind::Sdm { .. }) => *s < width && r.month.is_some(),
                (Target::Values(v), TaskKind::Traits { .. }) => v.len() == width && v.iter().all(|x| x.is_finite()),
                _ => false,
            };
            if !ok {
                return Err(Error::invalid(
                    "target",
                    format!("record {i} does not fit {:?}", self.kind),
                ));
            }
        }
        Ok(())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["lon_deg", "lat_deg", "month", "split"].map(String::from).to_vec();
        header.extend(self.kind.target_columns());
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![
                r.lon_deg.to_string(),
                r.lat_deg.to_string(),
                r.month.map(|m| m.to_string()).unwrap_or_default(),
                r.split.to_string(),
            ];
            match &r.target {
                Target::Class(c) | Target::Species(c) => row.push(c.to_string()),
                Target::Values(v) => row.extend(v.iter().map(f64::to_string)),
            }
            w.write_record(&row)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(input: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 5 || cols[..4] != ["lon_deg", "lat_deg", "month", "split"] {
            return Err(Error::invalid("csv header", format!("{cols:?}")));
        }
        let kind = match cols[4] {
            "class" | "species" if cols.len() != 5 => {
                return Err(Error::invalid("csv header", "extra target columns"));
            }
            "class" => TaskKind::Biomes { n_classes: 0 },
            "species" => TaskKind::Sdm { n_species: 0 },
            c if c.starts_with("trait_") => TaskKind::Traits {
                n_targets: cols.len() - 4,
            },
            other => return Err(Error::invalid("csv header", format!("unknown target column {other:?}"))),
        };
        let parse = |s: &str, field: &'static str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::invalid(field, format!("cannot parse {s:?}")))
        };
        let mut records = Vec::new();
        let mut max_id = 0usize;
        for row in rdr.records() {
            let row = row?;
            let month = match row[2].trim() {
                "" => None,
                m => Some(
                    m.parse()
                        .map_err(|_| Error::invalid("month", format!("cannot parse {m:?}")))?,
                ),
            };
            let id = || -> Result<usize> {
                row[4]
                    .trim()
                    .parse()
                    .map_err(|_| Error::invalid("target", format!("cannot parse {:?}", &row[4])))
            };
            let target = match kind {
                TaskKind::Biomes { .. } => Target::Class(id()?),
                TaskKind::Sdm { .. } => Target::Species(id()?),
                TaskKind::Traits { .. } => Target::Values(
                    (4..row.len())
                        .map(|c| parse(&row[c], "target"))
                        .collect::<Result<_>>()?,
                ),
            };
            if let Target::Class(c) | Target::Species(c) = target {
                max_id = max_id.max(c + 1);
            }
            records.push(TaskRecord {
                lon_deg: parse(&row[0], "lon_deg")?,
                lat_deg: parse(&row[1], "lat_deg")?,
                month,
                split: row[3].trim().parse()?,
                target,
            });
        }
        // Class counts are not stored; the largest id seen defines them.
        let kind = match kind {
            TaskKind::Biomes { .. } => TaskKind::Biomes { n_classes: max_id },
            TaskKind::Sdm { .. } => TaskKind::Sdm { n_species: max_id },
            k => k,
        };
        let ds = TaskDataset { kind, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(f))
    }
}

/// Distinct land pixels in seeded random order.
fn sample_land(grid: &ClimGrid, n_points: usize, seed: u64) -> Result<Vec<usize>> {
    let mut land = grid.land_pixels();
    if n_points == 0 {
        return Err(Error::invalid("n_points", "must be positive"));
    }
    if n_points > land.len() {
        return Err(Error::invalid(
            "n_points",
            format!("{n_points} exceeds the {} land pixels", land.len()),
        ));
    }
    SplitMix64::new(derive_seed(seed, "locations")).shuffle(&mut land);
    land.truncate(n_points);
    Ok(land)
}

/// Smooth field whose quantile bins define the biome classes.
pub fn biome_field(seed: u64) -> SmoothField {
    SmoothField::draw(&mut SplitMix64::new(derive_seed(seed, "biome-field")), 6, 0.5, 3.0)
}

/// Biome labels by quantile-binning [`biome_field`] over the sampled points,
/// which balances the classes up to ties.
pub fn build_biomes_task(
    grid: &ClimGrid,
    n_points: usize,
    n_classes: usize,
    split: SplitFractions,
    seed: u64,
) -> Result<TaskDataset> {
    if n_classes < 2 {
        return Err(Error::invalid("n_classes", "at least two classes are required"));
    }
    split.validate()?;
    let pixels = sample_land(grid, n_points, seed)?;
    let field = biome_field(seed);
    let scores: Vec<f64> = pixels
        .iter()
        .map(|&p| {
            let (lon, lat) = grid.pixel_center(p);
            field.eval(lon, lat)
        })
        .collect();
    let mut order: Vec<usize> = (0..n_points).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut classes = vec![0usize; n_points];
    for (rank, &i) in order.iter().enumerate() {
        classes[i] = rank * n_classes / n_points;
    }
    let splits = split.assign(n_points, seed)?;
    let records = pixels
        .iter()
        .zip(classes)
        .zip(splits)
        .map(|((&p, c), s)| {
            let (lon, lat) = grid.pixel_center(p);
            TaskRecord {
                lon_deg: lon,
                lat_deg: lat,
                month: None,
                split: s,
                target: Target::Class(c),
            }
        })
        .collect();
    Ok(TaskDataset {
        kind: TaskKind::Biomes { n_classes },
        records,
    })
}

/// A synthetic species: logistic response to the normalized variables,
/// active only in the months of its gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Species {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// `gate[m - 1]` is true when the species can be observed in month `m`.
    pub gate: [bool; MONTHS],
}

impl Species {
    pub fn suitability(&self, grid: &ClimGrid, pixel: usize, month: u8) -> f64 {
        if !self.gate[usize::from(month) - 1] {
            return 0.0;
        }
        let score: f64 = self
            .weights
            .iter()
            .enumerate()
            .map(|(v, w)| w * grid.normalized(month, v, pixel))
            .sum();
        1.0 / (1.0 + (-(score + self.bias)).exp())
    }

    pub fn with_gate(mut self, months: impl IntoIterator<Item = u8>) -> Self {
        self.gate = [false; MONTHS];
        for m in months {
            self.gate[usize::from(m) - 1] = true;
        }
        self
    }
}

/// Weights `N(0, 1)·2/√V`, bias `U(-2, 0)`, and a gate of 4 to 12
/// consecutive months starting at a uniform month.
pub fn draw_species(n_vars: usize, n_species: usize, seed: u64) -> Vec<Species> {
    let mut rng = SplitMix64::new(derive_seed(seed, "species"));
    let scale = 2.0 / (n_vars as f64).sqrt();
    (0..n_species)
        .map(|_| {
            let weights = (0..n_vars).map(|_| rng.normal() * scale).collect();
            let bias = rng.uniform(-2.0, 0.0);
            let start = rng.below(MONTHS);
            let len = 4 + rng.below(9);
            let mut gate = [false; MONTHS];
            for k in 0..len {
                gate[(start + k) % MONTHS] = true;
            }
            Species { weights, bias, gate }
        })
        .collect()
}

pub fn build_sdm_task(
    grid: &ClimGrid,
    n_species: usize,
    n_occurrences: usize,
    split: SplitFractions,
    seed: u64,
) -> Result<TaskDataset> {
    let species = draw_species(grid.n_vars(), n_species, seed);
    build_sdm_task_with(grid, &species, n_occurrences, split, seed)
}

/// Presence-only occurrences: species are visited round robin and each
/// occurrence draws a `(land pixel, month)` cell with probability
/// proportional to the species' suitability.
pub fn build_sdm_task_with(
    grid: &ClimGrid,
    species: &[Species],
    n_occurrences: usize,
    split: SplitFractions,
    seed: u64,
) -> Result<TaskDataset> {
    if species.len() < 2 {
        return Err(Error::invalid("n_species", "at least two species are required"));
    }
    if n_occurrences == 0 {
        return Err(Error::invalid("n_occurrences", "must be positive"));
    }
    if let Some(s) = species.iter().position(|s| s.weights.len() != grid.n_vars()) {
        return Err(Error::Shape {
            context: "species weights",
            expected: grid.n_vars(),
            found: species[s].weights.len(),
        });
    }
    split.validate()?;
    let land = grid.land_pixels();
    if land.is_empty() {
        return Err(Error::invalid("land mask", "no land pixels"));
    }
    let cells: Vec<(usize, u8)> = (1..=MONTHS as u8)
        .flat_map(|m| land.iter().map(move |&p| (p, m)))
        .collect();
    let cdfs: Vec<Vec<f64>> = species
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let mut acc = 0.0;
            let cdf: Vec<f64> = cells
                .iter()
                .map(|&(p, m)| {
                    acc += s.suitability(grid, p, m);
                    acc
                })
                .collect();
            if acc > 0.0 {
                Ok(cdf)
            } else {
                Err(Error::invalid(
                    "species",
                    format!("species {i} has zero suitability everywhere"),
                ))
            }
        })
        .collect::<Result<_>>()?;
    let mut rng = SplitMix64::new(derive_seed(seed, "occurrences"));
    let splits = split.assign(n_occurrences, seed)?;
    let records = (0..n_occurrences)
        .zip(splits)
        .map(|(i, split)| {
            let s = i % species.len();
            let cdf = &cdfs[s];
            let u = rng.next_f64() * cdf[cdf.len() - 1];
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            let (p, m) = cells[k];
            let (lon, lat) = grid.pixel_center(p);
            TaskRecord {
                lon_deg: lon,
                lat_deg: lat,
                month: Some(m),
                split,
                target: Target::Species(s),
            }
        })
        .collect();
    Ok(TaskDataset {
        kind: TaskKind::Sdm {
            n_species: species.len(),
        },
        records,
    })
}

/// Raw trait value at a pixel, before standardization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraitFunction {
    /// Mean over the year of one normalized variable.
    AnnualMean { var: usize },
    /// `(1/12) Σ_m g(m) · tanh(w · x̃(m) + b)` with the seasonal weighting
    /// `g(m) = 1 + cos(2π (m − peak) / 12)`.
    Seasonal { weights: Vec<f64>, bias: f64, peak: f64 },
}

impl TraitFunction {
    pub fn eval(&self, grid: &ClimGrid, pixel: usize) -> f64 {
        let months = 1..=MONTHS as u8;
        match self {
            TraitFunction::AnnualMean { var } => {
                months.map(|m| grid.normalized(m, *var, pixel)).sum::<f64>() / MONTHS as f64
            }
            TraitFunction::Seasonal { weights, bias, peak } => {
                months
                    .map(|m| {
                        let g = 1.0 + (std::f64::consts::TAU * (f64::from(m) - peak) / 12.0).cos();
                        let s: f64 = weights
                            .iter()
                            .enumerate()
                            .map(|(v, w)| w * grid.normalized(m, v, pixel))
                            .sum();
                        g * (s + bias).tanh()
                    })
                    .sum::<f64>()
                    / MONTHS as f64
            }
        }
    }

    fn check(&self, n_vars: usize) -> Result<()> {
        match self {
            TraitFunction::AnnualMean { var } if *var >= n_vars => {
                Err(Error::invalid("var", format!("{var} exceeds {n_vars} variables")))
            }
            TraitFunction::Seasonal { weights, .. } if weights.len() != n_vars => Err(Error::Shape {
                context: "trait weights",
                expected: n_vars,
                found: weights.len(),
            }),
            _ => Ok(()),
        }
    }
}

/// Seasonal traits with weights `N(0, 1)·1.5/√V`, bias `U(-0.5, 0.5)`, peak `U(0, 12)`.
pub fn draw_traits(n_vars: usize, n_targets: usize, seed: u64) -> Vec<TraitFunction> {
    let mut rng = SplitMix64::new(derive_seed(seed, "traits"));
    let scale = 1.5 / (n_vars as f64).sqrt();
    (0..n_targets)
        .map(|_| TraitFunction::Seasonal {
            weights: (0..n_vars).map(|_| rng.normal() * scale).collect(),
            bias: rng.uniform(-0.5, 0.5),
            peak: rng.uniform(0.0, 12.0),
        })
        .collect()
}

pub fn build_traits_task(
    grid: &ClimGrid,
    n_points: usize,
    n_targets: usize,
    split: SplitFractions,
    seed: u64,
) -> Result<TaskDataset> {
    if n_targets == 0 {
        return Err(Error::invalid("n_targets", "must be positive"));
    }
    let traits = draw_traits(grid.n_vars(), n_targets, seed);
    build_traits_task_with(grid, &traits, n_points, split, seed)
}

/// Evaluates each trait at sampled land pixels, then standardizes every
/// target to mean 0 and population std 1 over the train split.
pub fn build_traits_task_with(
    grid: &ClimGrid,
    traits: &[TraitFunction],
    n_points: usize,
    split: SplitFractions,
    seed: u64,
) -> Result<TaskDataset> {
    if traits.is_empty() {
        return Err(Error::invalid("n_targets", "must be positive"));
    }
    for t in traits {
        t.check(grid.n_vars())?;
    }
    split.validate()?;
    let pixels = sample_land(grid, n_points, seed)?;
    let splits = split.assign(n_points, seed)?;
    let raw: Vec<Vec<f64>> = pixels
        .iter()
        .map(|&p| traits.iter().map(|t| t.eval(grid, p)).collect())
        .collect();
    let train: Vec<usize> = (0..n_points).filter(|&i| splits[i] == Split::Train).collect();
    if train.is_empty() {
        return Err(Error::invalid("split", "train split is empty"));
    }
    let mut stats = Vec::with_capacity(traits.len());
    for t in 0..traits.len() {
        let n = train.len() as f64;
        let mean = train.iter().map(|&i| raw[i][t]).sum::<f64>() / n;
        let std = (train.iter().map(|&i| (raw[i][t] - mean).powi(2)).sum::<f64>() / n).sqrt();
        if !(std > 0.0) {
            return Err(Error::invalid(
                "target",
                format!("trait {t} is constant on the train split"),
            ));
        }
        stats.push((mean, std));
    }
    let records = pixels
        .iter()
        .zip(raw)
        .zip(splits)
        .map(|((&p, values), split)| {
            let (lon, lat) = grid.pixel_center(p);
            TaskRecord {
                lon_deg: lon,
                lat_deg: lat,
                month: None,
                split,
                target: Target::Values(values.iter().zip(&stats).map(|(x, (m, s))| (x - m) / s).collect()),
            }
        })
        .collect();
    Ok(TaskDataset {
        kind: TaskKind::Traits {
            n_targets: traits.len(),
        },
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{fit_normalization, generate_synthetic_climatology};

    fn grid() -> ClimGrid {
        fit_normalization(generate_synthetic_climatology(32, 16, 4, 3).unwrap()).unwrap()
    }

    #[test]
    fn split_sizes() {
        assert_eq!(SplitFractions::BIOMES.sizes(1000), [500, 100, 400]);
        assert_eq!(SplitFractions::SDM.sizes(1000), [700, 50, 250]);
        assert!(SplitFractions::new(0.5, 0.5, 0.5).validate().is_err());
        let s = SplitFractions::BIOMES.assign(1000, 4).unwrap();
        assert_eq!(s.iter().filter(|&&x| x == Split::Val).count(), 100);
    }

    #[test]
    fn biomes_balanced_and_disjoint() {
        let g = grid();
        let ds = build_biomes_task(&g, 200, 5, SplitFractions::BIOMES, 1).unwrap();
        let mut counts = [0usize; 5];
        for r in &ds.records {
            let Target::Class(c) = r.target else { panic!() };
            counts[c] += 1;
            assert!(g.land()[g.pixel_at(r.lon_deg, r.lat_deg).unwrap()]);
        }
        assert_eq!(counts, [40; 5]);
        let total: usize = Split::ALL.iter().map(|&s| ds.indices(s).len()).sum();
        assert_eq!(total, 200);
        assert!(build_biomes_task(&g, g.land_count() + 1, 5, SplitFractions::BIOMES, 1).is_err());
    }

    #[test]
    fn sdm_gate_respected() {
        let g = grid();
        let mut species = draw_species(4, 3, 2);
        species[0] = species[0].clone().with_gate(5..=8);
        let ds = build_sdm_task_with(&g, &species, 600, SplitFractions::SDM, 2).unwrap();
        for r in &ds.records {
            if r.target == Target::Species(0) {
                assert!((5..=8).contains(&r.month.unwrap()));
            }
        }
        assert!(build_sdm_task(&g, 1, 10, SplitFractions::SDM, 0).is_err());
    }

    #[test]
    fn traits_standardized_on_train() {
        let g = grid();
        let ds = build_traits_task(&g, 150, 3, SplitFractions::TRAITS, 8).unwrap();
        let train = ds.indices(Split::Train);
        for t in 0..3 {
            let xs: Vec<f64> = train
                .iter()
                .map(|&i| match &ds.records[i].target {
                    Target::Values(v) => v[t],
                    _ => unreachable!(),
                })
                .collect();
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            assert!(mean.abs() < 1e-3 && (var.sqrt() - 1.0).abs() < 1e-3);
        }
        assert_eq!(ds, build_traits_task(&g, 150, 3, SplitFractions::TRAITS, 8).unwrap());
    }

    #[test]
    fn csv_round_trip() {
        let g = grid();
        for ds in [
            build_biomes_task(&g, 30, 3, SplitFractions::BIOMES, 1).unwrap(),
            build_sdm_task(&g, 3, 30, SplitFractions::SDM, 1).unwrap(),
            build_traits_task(&g, 30, 2, SplitFractions::TRAITS, 1).unwrap(),
        ] {
            let mut buf = Vec::new();
            ds.write_csv(&mut buf).unwrap();
            assert_eq!(TaskDataset::read_csv(buf.as_slice()).unwrap(), ds);
        }
    }
}
