use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use super::features::{FeatureSource, QueryPoint};
use super::loss::{anfull_loss, softmax_cross_entropy};
use super::metrics::{argmax_rows, macro_f1, r2, top1};
use super::model::{LocationClimateNet, LocationNet, Mlp, Nonlinearity, ScoreModel, Standardizer};
use crate::data::{ClimGrid, Split, Target, TaskDataset, TaskKind};
use crate::error::{Error, Result};
use crate::net::{NetworkConfig, ResidualMode};
use crate::rng::{derive_indexed, derive_seed, SplitMix64};
use crate::train::{adam_step, mse_loss, AdamConfig, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeTask {
    Classification { n_classes: usize },
    Sdm { n_species: usize },
    Regression { n_targets: usize },
}

impl ProbeTask {
    pub fn width(self) -> usize {
        match self {
            ProbeTask::Classification { n_classes } => n_classes,
            ProbeTask::Sdm { n_species } => n_species,
            ProbeTask::Regression { n_targets } => n_targets,
        }
    }

    pub fn metric_name(self) -> &'static str {
        match self {
            ProbeTask::Classification { .. } => "macro_f1",
            ProbeTask::Sdm { .. } => "top1",
            ProbeTask::Regression { .. } => "r2",
        }
    }
}

impl From<TaskKind> for ProbeTask {
    fn from(kind: TaskKind) -> Self {
        match kind {
            TaskKind::Biomes { n_classes } => ProbeTask::Classification { n_classes },
            TaskKind::Sdm { n_species } => ProbeTask::Sdm { n_species },
            TaskKind::Traits { n_targets } => ProbeTask::Regression { n_targets },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProbeKind {
    /// One affine layer on standardized features.
    Linear,
    /// Three tanh hidden layers on standardized features.
    Mlp,
    /// Sinusoidal network on `[λ, φ]`, trained from scratch.
    FsLoc,
    /// Residual ReLU network on seasonal climate values, trained from scratch.
    FsCh,
    /// Both from-scratch branches with a shared output layer.
    FsLocCh,
}

impl ProbeKind {
    pub fn name(self) -> &'static str {
        match self {
            ProbeKind::Linear => "linear",
            ProbeKind::Mlp => "mlp",
            ProbeKind::FsLoc => "fs-loc",
            ProbeKind::FsCh => "fs-ch",
            ProbeKind::FsLocCh => "fs-loc-ch",
        }
    }

    pub const ALL: [ProbeKind; 5] = [
        ProbeKind::Linear,
        ProbeKind::Mlp,
        ProbeKind::FsLoc,
        ProbeKind::FsCh,
        ProbeKind::FsLocCh,
    ];

    fn standardizes(self) -> bool {
        matches!(self, ProbeKind::Linear | ProbeKind::Mlp)
    }
}

impl std::str::FromStr for ProbeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProbeKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid("probe", format!("unknown probe kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProbeSpec {
    pub kind: ProbeKind,
    pub adam: AdamConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub n_inits: usize,
    pub mlp_hidden: usize,
    pub mlp_layers: usize,
    /// Shape of the from-scratch location branch; input and output widths are set per task.
    pub location_net: NetworkConfig,
}

impl Default for ProbeSpec {
    fn default() -> Self {
        Self {
            kind: ProbeKind::Linear,
            adam: AdamConfig::default().with_learning_rate(1e-3),
            epochs: 100,
            batch_size: 256,
            n_inits: 10,
            mlp_hidden: 64,
            mlp_layers: 3,
            location_net: NetworkConfig {
                depth: 4,
                input_dim: 2,
                hidden_dim: 64,
                embedding_dim: 32,
                output_dim: 1,
                omega0: 30.0,
                residual: ResidualMode::PaperHalf,
                first_layer: crate::net::FirstLayer::HSiren,
            },
        }
    }
}

impl ProbeSpec {
    pub fn with_kind(kind: ProbeKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.n_inits == 0 {
            return Err(Error::invalid("n_inits", "must be at least 1"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs", "epochs and batch_size must be positive"));
        }
        Ok(())
    }

    fn build_model(&self, input: usize, task: ProbeTask, seed: u64) -> Result<ScoreModel> {
        let out = task.width();
        let hidden = || -> Vec<usize> {
            let mut dims = vec![input];
            dims.extend(std::iter::repeat_n(self.mlp_hidden, self.mlp_layers));
            dims.push(out);
            dims
        };
        let location = |seed| {
            LocationNet::new(
                NetworkConfig {
                    input_dim: 2,
                    output_dim: out,
                    ..self.location_net
                },
                seed,
            )
        };
        let climate = |input: usize, seed| {
            // Input projection, two residual layers, output layer.
            Mlp::new(
                &[input, self.mlp_hidden, self.mlp_hidden, self.mlp_hidden, out],
                Nonlinearity::Relu,
                true,
                seed,
            )
        };
        Ok(match self.kind {
            ProbeKind::Linear => ScoreModel::Mlp(Mlp::affine(input, out, seed)?),
            ProbeKind::Mlp => ScoreModel::Mlp(Mlp::new(&hidden(), Nonlinearity::Tanh, false, seed)?),
            ProbeKind::FsLoc => {
                if input != 2 {
                    return Err(Error::Shape {
                        context: "location features",
                        expected: 2,
                        found: input,
                    });
                }
                ScoreModel::Location(location(seed)?)
            }
            ProbeKind::FsCh => ScoreModel::Mlp(climate(input, seed)?),
            ProbeKind::FsLocCh => {
                if input <= 2 {
                    return Err(Error::invalid("features", "location and climate columns are required"));
                }
                ScoreModel::LocationClimate(LocationClimateNet {
                    location: location(seed)?,
                    climate: climate(input - 2, derive_seed(seed, "climate-branch"))?,
                })
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SplitTargets {
    Labels(Vec<usize>),
    Values(Array2<f64>),
}

impl SplitTargets {
    fn len(&self) -> usize {
        match self {
            SplitTargets::Labels(l) => l.len(),
            SplitTargets::Values(v) => v.nrows(),
        }
    }

    fn select(&self, idx: &[usize]) -> SplitTargets {
        match self {
            SplitTargets::Labels(l) => SplitTargets::Labels(idx.iter().map(|&i| l[i]).collect()),
            SplitTargets::Values(v) => SplitTargets::Values(v.select(Axis(0), idx)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSplit {
    pub features: Array2<f32>,
    pub targets: SplitTargets,
}

impl ProbeSplit {
    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.nrows() == 0
    }
}

/// Features and targets of one task under one feature source.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeData {
    pub task: ProbeTask,
    pub source: String,
    pub task_name: String,
    pub train: ProbeSplit,
    pub val: ProbeSplit,
    pub test: ProbeSplit,
    /// Features at one background land location per training record (SDM only).
    pub background: Option<Array2<f32>>,
}

impl ProbeData {
    /// Extracts features for every split. For SDM tasks one background land
    /// pixel center is drawn uniformly per training record, at the record's month.
    pub fn build(source: &dyn FeatureSource, dataset: &TaskDataset, grid: &ClimGrid, seed: u64) -> Result<Self> {
        dataset.validate()?;
        let task = ProbeTask::from(dataset.kind);
        let split = |s: Split| -> Result<ProbeSplit> {
            let idx = dataset.indices(s);
            let points: Vec<QueryPoint> = idx.iter().map(|&i| QueryPoint::from(&dataset.records[i])).collect();
            let features = source.features(&points)?;
            let targets = match task {
                ProbeTask::Regression { n_targets } => {
                    let mut v = Array2::zeros((idx.len(), n_targets));
                    for (r, &i) in idx.iter().enumerate() {
                        if let Target::Values(vals) = &dataset.records[i].target {
                            v.row_mut(r).assign(&ndarray::ArrayView1::from(vals.as_slice()));
                        }
                    }
                    SplitTargets::Values(v)
                }
                _ => SplitTargets::Labels(
                    idx.iter()
                        .map(|&i| match dataset.records[i].target {
                            Target::Class(c) | Target::Species(c) => c,
                            Target::Values(_) => unreachable!("validated"),
                        })
                        .collect(),
                ),
            };
            Ok(ProbeSplit { features, targets })
        };
        let train = split(Split::Train)?;
        let background = match task {
            ProbeTask::Sdm { .. } => {
                let land = grid.land_pixels();
                if land.is_empty() {
                    return Err(Error::invalid("land mask", "no land pixels for background sampling"));
                }
                let mut rng = SplitMix64::new(derive_seed(seed, "background"));
                let points: Vec<QueryPoint> = dataset
                    .indices(Split::Train)
                    .iter()
                    .map(|&i| {
                        let (lon, lat) = grid.pixel_center(land[rng.below(land.len())]);
                        QueryPoint {
                            lon_deg: lon,
                            lat_deg: lat,
                            month: dataset.records[i].month,
                        }
                    })
                    .collect();
                Some(source.features(&points)?)
            }
            _ => None,
        };
        Ok(Self {
            task,
            source: source.name(),
            task_name: dataset.kind.name().into(),
            train,
            val: split(Split::Val)?,
            test: split(Split::Test)?,
            background,
        })
    }
}

/// A trained probe together with its input scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedProbe {
    pub kind: ProbeKind,
    pub task: ProbeTask,
    pub model: ScoreModel,
    pub standardizer: Option<Standardizer>,
    pub best_epoch: usize,
    pub val_metric: f64,
}

impl FittedProbe {
    /// Raw task scores (logits or regression outputs) for unscaled features.
    pub fn scores(&self, features: ArrayView2<f32>) -> Result<Array2<f32>> {
        match &self.standardizer {
            Some(s) => self.model.predict(s.apply(features).view()),
            None => self.model.predict(features),
        }
    }

    /// Task metric on a split.
    pub fn evaluate(&self, split: &ProbeSplit) -> Result<f64> {
        metric(self.task, self.scores(split.features.view())?.view(), &split.targets)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn metric(task: ProbeTask, scores: ArrayView2<f32>, targets: &SplitTargets) -> Result<f64> {
    match (task, targets) {
        (ProbeTask::Classification { n_classes }, SplitTargets::Labels(y)) => {
            macro_f1(&argmax_rows(scores), y, n_classes)
        }
        (ProbeTask::Sdm { .. }, SplitTargets::Labels(y)) => top1(scores, y),
        (ProbeTask::Regression { .. }, SplitTargets::Values(y)) => r2(scores.mapv(f64::from).view(), y.view()),
        _ => Err(Error::invalid("targets", "do not match the task")),
    }
}

fn check_targets(task: ProbeTask, train: &ProbeSplit) -> Result<()> {
    if train.is_empty() {
        return Err(Error::invalid("train split", "no training records"));
    }
    if let SplitTargets::Labels(y) = &train.targets {
        let first = y[0];
        if y.iter().all(|&c| c == first) {
            return Err(Error::invalid("targets", "training labels contain a single class"));
        }
        if let Some(&c) = y.iter().find(|&&c| c >= task.width()) {
            return Err(Error::invalid(
                "targets",
                format!("label {c} exceeds {} outputs", task.width()),
            ));
        }
    }
    Ok(())
}

/// Trains one probe with Adam on the task loss and keeps the epoch with the
/// best validation metric (the training metric when the validation split is empty).
pub fn fit_probe(data: &ProbeData, spec: &ProbeSpec, seed: u64) -> Result<FittedProbe> {
    spec.validate()?;
    let task = data.task;
    check_targets(task, &data.train)?;
    if data.train.targets.len() != data.train.len() {
        return Err(Error::Shape {
            context: "training targets",
            expected: data.train.len(),
            found: data.train.targets.len(),
        });
    }
    let standardizer = if spec.kind.standardizes() {
        Some(Standardizer::fit(data.train.features.view())?)
    } else {
        None
    };
    let scale = |x: &Array2<f32>| match &standardizer {
        Some(s) => s.apply(x.view()),
        None => x.clone(),
    };
    let x_train = scale(&data.train.features);
    let background = match (task, &data.background) {
        (ProbeTask::Sdm { .. }, Some(bg)) if bg.nrows() == x_train.nrows() => Some(scale(bg)),
        (ProbeTask::Sdm { .. }, _) => return Err(Error::Missing("background features for every training record")),
        _ => None,
    };
    let x_val = scale(&data.val.features);
    let (monitor_x, monitor_y) = if data.val.is_empty() {
        (&x_train, &data.train.targets)
    } else {
        (&x_val, &data.val.targets)
    };

    let mut model = spec.build_model(x_train.ncols(), task, derive_seed(seed, "probe-init"))?;
    let mut state = OptimizerState::new(&model);
    let mut best: Option<(f64, usize, ScoreModel)> = None;
    let n = x_train.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..spec.epochs {
        SplitMix64::new(derive_indexed(seed, "probe-epoch", epoch as u64)).shuffle(&mut order);
        for idx in order.chunks(spec.batch_size) {
            let xb = x_train.select(Axis(0), idx);
            let yb = data.train.targets.select(idx);
            let grads = match (&yb, task) {
                (SplitTargets::Labels(y), ProbeTask::Sdm { .. }) => {
                    let bg = background.as_ref().expect("checked above").select(Axis(0), idx);
                    let stacked = concatenate(Axis(0), &[xb.view(), bg.view()]).expect("equal widths");
                    let (scores, cache) = model.forward(stacked.view())?;
                    let b = idx.len();
                    let (_, g_pos, g_bg) = anfull_loss(scores.slice(s![..b, ..]), y, scores.slice(s![b.., ..]))?;
                    let g = concatenate(Axis(0), &[g_pos.view(), g_bg.view()]).expect("equal widths");
                    model.backward(&cache, g.view())?
                }
                (SplitTargets::Labels(y), _) => {
                    let (scores, cache) = model.forward(xb.view())?;
                    let (_, g) = softmax_cross_entropy(scores.view(), y)?;
                    model.backward(&cache, g.view())?
                }
                (SplitTargets::Values(y), _) => {
                    let (pred, cache) = model.forward(xb.view())?;
                    let (_, g) = mse_loss(pred.view(), y.mapv(|v| v as f32).view())?;
                    model.backward(&cache, g.view())?
                }
            };
            adam_step(&mut model, &grads, &mut state, &spec.adam)?;
        }
        let m = metric(task, model.predict(monitor_x.view())?.view(), monitor_y)?;
        let m = if m.is_nan() { f64::NEG_INFINITY } else { m };
        if best.as_ref().is_none_or(|(b, _, _)| m > *b) {
            best = Some((m, epoch, model.clone()));
        }
    }
    let (val_metric, best_epoch, model) = best.expect("at least one epoch");
    Ok(FittedProbe {
        kind: spec.kind,
        task,
        model,
        standardizer,
        best_epoch,
        val_metric,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn split(n: usize, seed: u64, regression: bool) -> ProbeSplit {
        let mut rng = SplitMix64::new(seed);
        let features = Array2::from_shape_fn((n, 3), |_| rng.uniform(-1.0, 1.0) as f32);
        let targets = if regression {
            SplitTargets::Values(Array2::from_shape_fn((n, 1), |(i, _)| {
                let r = features.row(i);
                f64::from(2.0 * r[0] - r[1] + 0.5)
            }))
        } else {
            SplitTargets::Labels(
                features
                    .rows()
                    .into_iter()
                    .map(|r| usize::from(r[0] + r[1] > 0.0))
                    .collect(),
            )
        };
        ProbeSplit { features, targets }
    }

    fn data(task: ProbeTask, regression: bool) -> ProbeData {
        ProbeData {
            task,
            source: "toy".into(),
            task_name: "toy".into(),
            train: split(400, 1, regression),
            val: split(100, 2, regression),
            test: split(200, 3, regression),
            background: None,
        }
    }

    fn spec(kind: ProbeKind) -> ProbeSpec {
        ProbeSpec {
            epochs: 30,
            batch_size: 32,
            adam: AdamConfig::default().with_learning_rate(1e-2),
            ..ProbeSpec::with_kind(kind)
        }
    }

    #[test]
    fn linear_probe_separates_halfplane() {
        let d = data(ProbeTask::Classification { n_classes: 2 }, false);
        let fitted = fit_probe(&d, &spec(ProbeKind::Linear), 0).unwrap();
        assert!(fitted.evaluate(&d.test).unwrap() > 0.9);
    }

    #[test]
    fn mlp_probe_fits_linear_target() {
        let d = data(ProbeTask::Regression { n_targets: 1 }, true);
        let fitted = fit_probe(&d, &spec(ProbeKind::Mlp), 0).unwrap();
        assert!(fitted.evaluate(&d.test).unwrap() > 0.9);
        let back = FittedProbe::from_json(&fitted.to_json().unwrap()).unwrap();
        assert_eq!(
            back.scores(d.test.features.view()).unwrap(),
            fitted.scores(d.test.features.view()).unwrap()
        );
    }

    #[test]
    fn deterministic_per_seed() {
        let d = data(ProbeTask::Classification { n_classes: 2 }, false);
        let s = spec(ProbeKind::Linear);
        assert_eq!(fit_probe(&d, &s, 4).unwrap(), fit_probe(&d, &s, 4).unwrap());
    }

    #[test]
    fn single_class_rejected() {
        let mut d = data(ProbeTask::Classification { n_classes: 2 }, false);
        d.train.targets = SplitTargets::Labels(vec![1; 400]);
        assert!(matches!(
            fit_probe(&d, &spec(ProbeKind::Linear), 0),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn sdm_requires_background() {
        let d = data(ProbeTask::Sdm { n_species: 2 }, false);
        assert!(matches!(
            fit_probe(&d, &spec(ProbeKind::Linear), 0),
            Err(Error::Missing(_))
        ));
    }

    #[test]
    fn sdm_probe_ranks_true_species() {
        let mut d = data(ProbeTask::Sdm { n_species: 2 }, false);
        d.background = Some(split(400, 9, false).features);
        let fitted = fit_probe(&d, &spec(ProbeKind::Linear), 0).unwrap();
        assert!(fitted.evaluate(&d.test).unwrap() > 0.8);
    }

    #[test]
    fn location_probe_requires_two_columns() {
        let d = data(ProbeTask::Classification { n_classes: 2 }, false);
        assert!(matches!(
            fit_probe(&d, &spec(ProbeKind::FsLoc), 0),
            Err(Error::Shape { .. })
        ));
    }
}
