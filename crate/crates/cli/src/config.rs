//! Run configuration: built-in defaults, then the TOML file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;
use spreadcast::eval::{GridLearner, LearnerParams, StackingConfig};
use spreadcast::info::DEFAULT_TOP_K;
use spreadcast::learners::LearnerKind;
use spreadcast::preprocess::InputConfig;
use spreadcast::PipelineConfig;

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Input CSV files, merged on month.
    pub inputs: Vec<PathBuf>,
    pub date_column: String,
    pub target: String,
    /// Whether `ingest` adds first differences of every non-target column.
    pub differences: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            inputs: Vec::new(),
            date_column: spreadcast::data::DATE_HEADER.to_string(),
            target: "spread".to_string(),
            differences: true,
        }
    }
}

/// Everything a command needs. Field names are the config-file keys.
#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub out: PathBuf,
    pub data: DataConfig,
    pub top_k: usize,
    pub train_fraction: f64,
    pub window: Option<usize>,
    pub window_learner: LearnerKind,
    pub inputs: InputConfig,
    pub learners: LearnerParams,
    pub stacking: StackingConfig,
    pub grid: Vec<GridLearner>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let p = PipelineConfig::default();
        RunConfig {
            seed: p.seed,
            out: PathBuf::from("out"),
            data: DataConfig::default(),
            top_k: DEFAULT_TOP_K,
            train_fraction: p.train_fraction,
            window: p.window,
            window_learner: p.window_learner,
            inputs: p.inputs,
            learners: p.learners,
            stacking: p.stacking,
            grid: p.grid,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Relative data paths in a config file are relative to the file.
        if let Some(dir) = path.parent() {
            for input in &mut cfg.data.inputs {
                if input.is_relative() {
                    *input = dir.join(&*input);
                }
            }
        }
        Ok(cfg)
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            top_k: self.top_k,
            train_fraction: self.train_fraction,
            window: self.window,
            window_learner: self.window_learner,
            inputs: self.inputs,
            learners: self.learners.clone(),
            stacking: self.stacking.clone(),
            grid: self.grid.clone(),
        }
    }
}
