use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use spreadcast::data::{add_differences, fill_missing, ingest_csv, merge, to_dataset};
use spreadcast::eval::GridLearner;
use spreadcast::info::rank_features;
use spreadcast::{
    forecast_next, generate_synthetic, run_backtest_with_series, Dataset, Recipe, SeriesTable, SyntheticConfig,
    TrainedPipeline,
};

use crate::config::RunConfig;

pub enum ModelSource {
    Fresh { learner: GridLearner, selection: bool },
    Saved(PathBuf),
    Refit(PathBuf),
}

fn read_inputs(cfg: &RunConfig) -> Result<SeriesTable> {
    ensure!(!cfg.data.inputs.is_empty(), "no input files: pass --input or set data.inputs in the config");
    let tables = cfg
        .data
        .inputs
        .iter()
        .map(|p| ingest_csv(p, &cfg.data.date_column).with_context(|| format!("reading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(merge(&tables)?)
}

/// The modeling dataset and the merged table before gap filling.
fn load(cfg: &RunConfig) -> Result<(Dataset, SeriesTable)> {
    let raw = read_inputs(cfg)?;
    let filled = fill_missing(&raw)?;
    let ds = to_dataset(&filled, &cfg.data.target)?;
    Ok((ds, raw))
}

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    Ok(cfg.out.join(name))
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let mut table = read_inputs(cfg)?;
    if cfg.data.differences {
        table = add_differences(&table, &[cfg.data.target.as_str()])?;
    }
    let table = fill_missing(&table)?;
    let path = out_path(cfg, "merged.csv")?;
    table.write_csv_path(&path)?;
    println!("wrote {} ({} months, {} columns)", path.display(), table.n_rows(), table.n_cols());
    Ok(())
}

pub fn select(cfg: &RunConfig) -> Result<()> {
    let (ds, _) = load(cfg)?;
    ensure!(cfg.top_k >= 1, "k must be at least 1");
    let k = cfg.top_k.min(ds.d());
    if k < cfg.top_k {
        log::warn!("k = {} exceeds the {} available features; selecting all", cfg.top_k, ds.d());
    }
    let ranking = rank_features(&ds)?;
    let path = out_path(cfg, "ranking.csv")?;
    write(&path, &ranking.to_csv(k))?;
    for (i, e) in ranking.entries.iter().take(k).enumerate() {
        println!("{:>3}  {:<30} {:.4}", i + 1, e.feature_name, e.mi_nats);
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn train(cfg: &RunConfig, learner: GridLearner, selection: bool) -> Result<()> {
    let (ds, _) = load(cfg)?;
    let model = TrainedPipeline::fit(&ds, &cfg.pipeline(), learner, selection)?;
    let path = out_path(cfg, "model.json")?;
    write(&path, &model.to_json()?)?;
    println!(
        "trained {learner} on {} months through {} ({} features, window {}); wrote {}",
        ds.n(),
        model.trained_through,
        model.features.len(),
        model.window,
        path.display()
    );
    Ok(())
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let (ds, _) = load(cfg)?;
    let (report, series) = run_backtest_with_series(&ds, &cfg.pipeline())?;
    let text = report.to_text();
    write(&out_path(cfg, "report.txt")?, &text)?;
    write(&out_path(cfg, "report.json")?, &report.to_json()?)?;
    let csv_path = out_path(cfg, "report.csv")?;
    let file = fs::File::create(&csv_path).with_context(|| format!("writing {}", csv_path.display()))?;
    report.write_csv(file)?;

    let dir = cfg.out.join("predictions");
    fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    for s in &series {
        let path = dir.join(format!("{}.csv", s.stem()));
        let file = fs::File::create(&path).with_context(|| format!("writing {}", path.display()))?;
        s.write_csv(file)?;
    }
    print!("{text}");
    let failed = report.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        log::warn!("{failed} of {} grid rows failed; see the report", report.rows.len());
    }
    Ok(())
}

fn read_model(path: &Path) -> Result<TrainedPipeline> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    TrainedPipeline::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

/// Fails when the latest month lacks any column the model reads.
fn check_latest_row(raw: &SeriesTable, model: &TrainedPipeline) -> Result<()> {
    let last = raw.n_rows() - 1;
    let missing: Vec<&str> = model
        .features
        .iter()
        .chain(std::iter::once(&model.target_name))
        .filter(|name| raw.column(name).is_some_and(|c| c[last].is_none()))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        bail!("incomplete latest row {}: missing {}", raw.dates()[last], missing.join(", "));
    }
    Ok(())
}

pub fn forecast(cfg: &RunConfig, source: ModelSource, horizon: usize) -> Result<()> {
    ensure!(horizon >= 1, "horizon must be at least 1");
    let (ds, raw) = load(cfg)?;
    let model = match source {
        ModelSource::Fresh { learner, selection } => TrainedPipeline::fit(&ds, &cfg.pipeline(), learner, selection)?,
        ModelSource::Saved(path) => read_model(&path)?,
        ModelSource::Refit(path) => {
            let saved = read_model(&path)?;
            TrainedPipeline::fit(&ds, &saved.config, saved.learner, saved.selection)?
        }
    };
    if model.target_name != ds.target_name() {
        bail!("model predicts `{}` but the data's target is `{}`", model.target_name, ds.target_name());
    }
    check_latest_row(&raw, &model)?;
    let predictions = forecast_next(&ds, &model, horizon)?;

    let mut csv = String::from("date,spread_bps\n");
    for (month, value) in &predictions {
        csv.push_str(&format!("{month},{value}\n"));
    }
    let path = out_path(cfg, "forecast.csv")?;
    write(&path, &csv)?;
    for (month, value) in &predictions {
        println!("{month}  {value:.2}");
    }
    println!("wrote {}", path.display());
    Ok(())
}

pub fn synth(cfg: &RunConfig, n: usize, d: usize, noise: f64, recipe: Recipe) -> Result<()> {
    let ds = generate_synthetic(&SyntheticConfig { seed: cfg.seed, n, d, noise, recipe })?;
    let path = out_path(cfg, "synthetic.csv")?;
    ds.to_table().write_csv_path(&path)?;
    println!("wrote {} ({n} months, {d} features, target `{}`)", path.display(), ds.target_name());
    Ok(())
}
