use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use resiren_core::rng::derive_seed;
use serde::Serialize;

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Named sub-seeds fanned out from the run seed.
pub fn sub_seeds(seed: u64) -> BTreeMap<&'static str, u64> {
    ["grid", "init", "train", "task", "probe"]
        .into_iter()
        .map(|name| (name, derive_seed(seed, name)))
        .collect()
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: &'static str,
    pub config: RunConfig,
    pub seeds: BTreeMap<&'static str, u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub wallclock_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            seeds: sub_seeds(config.seed),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wallclock_s: 0.0,
        }
    }

    pub fn write(&self, out_dir: &Path) -> anyhow::Result<()> {
        let path = out_dir.join(MANIFEST_FILE);
        std::fs::write(&path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing {}", path.display()))
    }
}
