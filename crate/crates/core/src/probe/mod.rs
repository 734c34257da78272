//! Downstream probes on frozen features: linear and MLP heads, from-scratch
//! baselines, losses, metrics and multi-seed reporting.

mod features;
mod fit;
mod loss;
mod metrics;
mod model;
mod report;

pub use features::{
    embed, ClimateFeatures, ConcatFeatures, EmbeddingProvider, FeaturePolicy, FeatureSource, LocationFeatures,
    QueryPoint, SEASONAL_MONTHS,
};
pub use fit::{fit_probe, metric, FittedProbe, ProbeData, ProbeKind, ProbeSpec, ProbeSplit, ProbeTask, SplitTargets};
pub use loss::{anfull_loss, softmax_cross_entropy};
pub use metrics::{argmax_rows, macro_f1, r2, top1};
pub use model::{LocationClimateNet, LocationNet, Mlp, MlpCache, ModelCache, Nonlinearity, ScoreModel, Standardizer};
pub use report::{run_probe_suite, write_reports_csv, ProbeReport};
