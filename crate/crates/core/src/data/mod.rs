//! Gridded climatologies, pretraining samples, and downstream task datasets.

mod grid;
mod sampler;
mod synth;
mod tasks;

pub use grid::{fit_normalization, ClimGrid, GeoExtent, NormStats, GRID_MAGIC, GRID_VERSION, MONTHS};
pub use sampler::{plan_epoch, sample_epoch, EpochPlan, EpochSampler, MonthPolicy, SampleBatch};
pub use synth::{
    generate_synthetic_climatology, RidgeField, RidgeOctave, SmoothField, SynthClimate, Wave, LAND_FRACTION,
};
pub use tasks::{
    biome_field, build_biomes_task, build_sdm_task, build_sdm_task_with, build_traits_task, build_traits_task_with,
    draw_species, draw_traits, Species, Split, SplitFractions, Target, TaskDataset, TaskKind, TaskRecord,
    TraitFunction,
};
