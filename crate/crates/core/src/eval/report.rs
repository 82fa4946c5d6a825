//! Backtest report: one row per learner and selection setting.

use std::fmt::Write as _;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::Metrics;
use crate::data::Month;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub learner: String,
    pub selection: bool,
    pub train: Option<Metrics>,
    pub test: Option<Metrics>,
    /// Why the row has no metrics.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n_rows: usize,
    pub train_rows: usize,
    pub test_rows: usize,
    pub train_fraction: f64,
    pub top_k: usize,
    /// `top_k` clamped to the number of features.
    pub effective_k: usize,
    pub seed: u64,
    pub stacking_mode: String,
    pub folds: usize,
    pub whiten: bool,
    pub window_all_features: Option<usize>,
    pub window_selected: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub rows: Vec<ReportRow>,
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "yes"
    } else {
        "no"
    }
}

impl EvalReport {
    pub fn row(&self, learner: &str, selection: bool) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.learner == learner && r.selection == selection)
    }

    /// The fitted row with the lowest test MSE.
    pub fn best_by_test_mse(&self) -> Option<&ReportRow> {
        self.rows
            .iter()
            .filter(|r| r.test.is_some())
            .min_by(|a, b| a.test.unwrap().mse.total_cmp(&b.test.unwrap().mse))
    }

    pub fn to_text(&self) -> String {
        let m = &self.meta;
        let mut s = String::new();
        let _ = writeln!(
            s,
            "rows {} (train {}, test {}), seed {}, k {}, stacking {}{}",
            m.n_rows,
            m.train_rows,
            m.test_rows,
            m.seed,
            m.effective_k,
            m.stacking_mode,
            if m.stacking_mode == "kfold" { format!(" ({} folds)", m.folds) } else { String::new() }
        );
        let w = |o: Option<usize>| o.map_or("-".to_string(), |v| v.to_string());
        let _ = writeln!(
            s,
            "window: all features {}, selected {}; whitening {}",
            w(m.window_all_features),
            w(m.window_selected),
            if m.whiten { "on" } else { "off" }
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<14} {:<9} | {:>10} {:>12} {:>8} | {:>10} {:>12} {:>8}",
            "learner", "selection", "train MAE", "train MSE", "train R2", "test MAE", "test MSE", "test R2"
        );
        let _ = writeln!(s, "{}", "-".repeat(95));
        for r in &self.rows {
            match (r.train, r.test) {
                (Some(tr), Some(te)) => {
                    let _ = writeln!(
                        s,
                        "{:<14} {:<9} | {:>10.4} {:>12.4} {:>8.4} | {:>10.4} {:>12.4} {:>8.4}",
                        r.learner,
                        yes_no(r.selection),
                        tr.mae,
                        tr.mse,
                        tr.r2,
                        te.mae,
                        te.mse,
                        te.r2
                    );
                }
                _ => {
                    let _ = writeln!(
                        s,
                        "{:<14} {:<9} | failed: {}",
                        r.learner,
                        yes_no(r.selection),
                        r.error.as_deref().unwrap_or("unknown error")
                    );
                }
            }
        }
        s
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "learner", "selection", "train_mae", "train_mse", "train_r2", "test_mae", "test_mse", "test_r2", "error",
        ])?;
        let f = |m: Option<Metrics>, pick: fn(Metrics) -> f64| m.map_or(String::new(), |m| pick(m).to_string());
        for r in &self.rows {
            w.write_record([
                r.learner.clone(),
                r.selection.to_string(),
                f(r.train, |m| m.mae),
                f(r.train, |m| m.mse),
                f(r.train, |m| m.r2),
                f(r.test, |m| m.mae),
                f(r.test, |m| m.mse),
                f(r.test, |m| m.r2),
                r.error.clone().unwrap_or_default(),
            ])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionPoint {
    pub date: Month,
    pub actual: f64,
    pub predicted: f64,
    /// `train` or `test`.
    pub split: String,
}

/// In-sample and out-of-sample predictions of one grid row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionSeries {
    pub learner: String,
    pub selection: bool,
    pub points: Vec<PredictionPoint>,
}

impl PredictionSeries {
    /// File stem such as `stacking_selected`.
    pub fn stem(&self) -> String {
        format!("{}_{}", self.learner, if self.selection { "selected" } else { "all" })
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["date", "actual", "predicted", "split_label"])?;
        for p in &self.points {
            w.write_record([p.date.to_string(), p.actual.to_string(), p.predicted.to_string(), p.split.clone()])?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report() -> EvalReport {
        let m = |v: f64| Metrics { mae: v, mse: v * v, r2: 0.5 };
        EvalReport {
            meta: ReportMeta {
                n_rows: 120,
                train_rows: 84,
                test_rows: 36,
                train_fraction: 0.7,
                top_k: 20,
                effective_k: 20,
                seed: 3,
                stacking_mode: "insample".into(),
                folds: 5,
                whiten: true,
                window_all_features: Some(3),
                window_selected: None,
            },
            rows: vec![
                ReportRow { learner: "ols".into(), selection: false, train: Some(m(1.0)), test: Some(m(2.0)), error: None },
                ReportRow { learner: "knn".into(), selection: true, train: Some(m(1.0)), test: Some(m(1.5)), error: None },
                ReportRow { learner: "mlp".into(), selection: true, train: None, test: None, error: Some("diverged".into()) },
            ],
        }
    }

    #[test]
    fn json_round_trip() {
        let r = report();
        assert_eq!(EvalReport::from_json(&r.to_json().unwrap()).unwrap(), r);
    }

    #[test]
    fn text_lists_every_row() {
        let text = report().to_text();
        assert!(text.contains("ols"));
        assert!(text.contains("failed: diverged"));
        assert_eq!(text.lines().filter(|l| l.contains(" | ")).count(), 4);
    }

    #[test]
    fn best_skips_failed_rows() {
        assert_eq!(report().best_by_test_mse().unwrap().learner, "knn");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        report().write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert_eq!(s.lines().count(), 4);
        assert!(s.starts_with("learner,selection,train_mae"));
    }
}
