//! `spreadcast`: credit-spread forecasting from monthly macro series.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

use config::RunConfig;
use spreadcast::eval::GridLearner;
use spreadcast::learners::LearnerKind;
use spreadcast::{Recipe, StackingMode};

#[derive(Debug, Parser)]
#[command(name = "spreadcast", version, about = "Forecast monthly credit spreads with stacked regressors")]
struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Root seed for every random component.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge input CSVs by month, add differences and fill gaps; writes merged.csv.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// Do not add first differences.
        #[arg(long)]
        no_differences: bool,
    },
    /// Rank features by mutual information with the target; writes ranking.csv.
    Select {
        #[command(flatten)]
        data: DataArgs,
        /// Number of features marked as selected.
        #[arg(long)]
        k: Option<usize>,
    },
    /// Fit one pipeline on all rows and save it as model.json.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        model: ModelArgs,
    },
    /// Run the learner x feature-selection backtest; writes report.{txt,csv,json} and predictions/.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Forecast the months after the data ends; writes forecast.csv.
    Forecast {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        pipeline: PipelineArgs,
        #[command(flatten)]
        model: ModelArgs,
        /// Saved pipeline from `train`; without it a pipeline is fitted on the data first.
        #[arg(long, value_name = "FILE")]
        model_file: Option<PathBuf>,
        /// Refit the saved pipeline's configuration on all rows of the data before forecasting.
        #[arg(long, requires = "model_file")]
        refit: bool,
        /// Months to forecast.
        #[arg(long, default_value_t = 1)]
        horizon: usize,
    },
    /// Write a seeded synthetic dataset to synthetic.csv.
    Synth {
        /// Months.
        #[arg(long, default_value_t = 600)]
        n: usize,
        /// Features, the first six of which drive the target.
        #[arg(long, default_value_t = 40)]
        d: usize,
        /// Standard deviation of the idiosyncratic noise.
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        /// Generating rule: default, linear or noise_only.
        #[arg(long, default_value = "default")]
        recipe: Recipe,
    },
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Input CSV (repeatable); replaces the config's inputs.
    #[arg(long = "input", short = 'i', value_name = "CSV")]
    inputs: Vec<PathBuf>,
    /// Name of the date column in every input.
    #[arg(long)]
    date_column: Option<String>,
    /// Name of the spread column.
    #[arg(long)]
    target: Option<String>,
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Features kept by selection.
    #[arg(long)]
    k: Option<usize>,
    /// Leading fraction of months used for training.
    #[arg(long)]
    train_fraction: Option<f64>,
    /// Spread-average window in months (skips the 1..=12 search).
    #[arg(long)]
    window: Option<usize>,
    /// Learner that scores candidate windows.
    #[arg(long)]
    window_learner: Option<LearnerKind>,
    /// Whitening regularizer added to each eigenvalue.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Z-score features instead of whitening them.
    #[arg(long)]
    no_whiten: bool,
    /// Stacking mode: insample or kfold.
    #[arg(long)]
    mode: Option<StackingMode>,
    /// Folds for kfold stacking.
    #[arg(long)]
    folds: Option<usize>,
}

#[derive(Debug, Args)]
struct ModelArgs {
    /// Learner to fit: stacking, ols, knn, kernel_ridge, random_forest or mlp.
    #[arg(long, default_value = "stacking")]
    learner: GridLearner,
    /// Use all features instead of the top-k selected ones.
    #[arg(long)]
    no_selection: bool,
}

impl DataArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if !self.inputs.is_empty() {
            cfg.data.inputs = self.inputs.clone();
        }
        if let Some(c) = &self.date_column {
            cfg.data.date_column = c.clone();
        }
        if let Some(t) = &self.target {
            cfg.data.target = t.clone();
        }
    }
}

impl PipelineArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if let Some(k) = self.k {
            cfg.top_k = k;
        }
        if let Some(f) = self.train_fraction {
            cfg.train_fraction = f;
        }
        if self.window.is_some() {
            cfg.window = self.window;
        }
        if let Some(l) = self.window_learner {
            cfg.window_learner = l;
        }
        if let Some(e) = self.epsilon {
            cfg.inputs.epsilon = e;
        }
        if self.no_whiten {
            cfg.inputs.whiten = false;
        }
        if let Some(m) = self.mode {
            cfg.stacking.mode = m;
        }
        if let Some(f) = self.folds {
            cfg.stacking.folds = f;
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match cli.command {
        Command::Ingest { data, no_differences } => {
            data.apply(&mut cfg);
            if no_differences {
                cfg.data.differences = false;
            }
            commands::ingest(&cfg)
        }
        Command::Select { data, k } => {
            data.apply(&mut cfg);
            if let Some(k) = k {
                cfg.top_k = k;
            }
            commands::select(&cfg)
        }
        Command::Train { data, pipeline, model } => {
            data.apply(&mut cfg);
            pipeline.apply(&mut cfg);
            commands::train(&cfg, model.learner, !model.no_selection)
        }
        Command::Evaluate { data, pipeline } => {
            data.apply(&mut cfg);
            pipeline.apply(&mut cfg);
            commands::evaluate(&cfg)
        }
        Command::Forecast { data, pipeline, model, model_file, refit, horizon } => {
            data.apply(&mut cfg);
            pipeline.apply(&mut cfg);
            let source = match model_file {
                Some(path) if refit => commands::ModelSource::Refit(path),
                Some(path) => commands::ModelSource::Saved(path),
                None => commands::ModelSource::Fresh { learner: model.learner, selection: !model.no_selection },
            };
            commands::forecast(&cfg, source, horizon)
        }
        Command::Synth { n, d, noise, recipe } => commands::synth(&cfg, n, d, noise, recipe),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
