//! Monthly series ingestion, alignment and chronological splitting.
//!
//! A [`SeriesTable`] holds named series on a gap-free monthly calendar where
//! any cell may be missing. Once gaps are filled it converts into a dense
//! [`Dataset`] with the credit spread pulled out as the target.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Name prefix of differenced columns.
pub const DIFF_PREFIX: &str = "d_";

/// Header of the date column in every CSV this crate writes.
pub const DATE_HEADER: &str = "date";

/// A calendar month.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Month {
    year: i32,
    month: u32,
}

impl Month {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::invalid(format!("month {month} out of range")));
        }
        Ok(Month { year, month })
    }

    pub fn year(self) -> i32 {
        self.year
    }

    pub fn month(self) -> u32 {
        self.month
    }

    fn ordinal(self) -> i64 {
        i64::from(self.year) * 12 + i64::from(self.month) - 1
    }

    fn from_ordinal(ord: i64) -> Self {
        Month {
            year: ord.div_euclid(12) as i32,
            month: ord.rem_euclid(12) as u32 + 1,
        }
    }

    pub fn succ(self) -> Self {
        self.plus(1)
    }

    pub fn plus(self, months: i64) -> Self {
        Month::from_ordinal(self.ordinal() + months)
    }

    /// Number of months from `self` to `later`.
    pub fn months_until(self, later: Month) -> i64 {
        later.ordinal() - self.ordinal()
    }
}

/// Parses `YYYY-MM` or `YYYY-MM-DD`; returns the month and day-of-month
/// (0 when no day was given, so a bare month sorts before its days).
fn parse_date(s: &str) -> Option<(Month, u32)> {
    let s = s.trim();
    match s.len() {
        7 => {
            let date = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d").ok()?;
            Some((Month::new(date.year(), date.month()).ok()?, 0))
        }
        10 => {
            let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").ok()?;
            Some((Month::new(date.year(), date.month()).ok()?, date.day()))
        }
        _ => None,
    }
}

impl FromStr for Month {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        parse_date(s)
            .map(|(m, _)| m)
            .ok_or_else(|| Error::invalid(format!("unparseable date `{s}`")))
    }
}

impl TryFrom<String> for Month {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Month> for String {
    fn from(m: Month) -> String {
        m.to_string()
    }
}

impl fmt::Display for Month {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Strict numeric cell parser: optional sign, digits, optional fraction and
/// exponent. Empty cells and `NA` are missing.
fn parse_cell(raw: &str) -> std::result::Result<Option<f64>, String> {
    let s = raw.trim();
    if s.is_empty() || s == "NA" {
        return Ok(None);
    }
    let allowed = s
        .bytes()
        .all(|b| b.is_ascii_digit() || matches!(b, b'+' | b'-' | b'.' | b'e' | b'E'));
    if !allowed || !s.bytes().any(|b| b.is_ascii_digit()) {
        return Err(format!("not a plain decimal number: `{raw}`"));
    }
    let v: f64 = s.parse().map_err(|_| format!("not a plain decimal number: `{raw}`"))?;
    if !v.is_finite() {
        return Err(format!("value out of range: `{raw}`"));
    }
    Ok(Some(v))
}

/// Named monthly series on a gap-free calendar.
#[derive(Clone, Debug, PartialEq)]
pub struct SeriesTable {
    dates: Vec<Month>,
    names: Vec<String>,
    columns: Vec<Vec<Option<f64>>>,
}

impl SeriesTable {
    pub fn new(dates: Vec<Month>, names: Vec<String>, columns: Vec<Vec<Option<f64>>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid("column names and columns differ in count"));
        }
        for w in dates.windows(2) {
            if w[0].months_until(w[1]) != 1 {
                return Err(Error::invalid(format!(
                    "dates must be consecutive months, found {} then {}",
                    w[0], w[1]
                )));
            }
        }
        let mut seen = HashSet::new();
        for name in &names {
            if !seen.insert(name.as_str()) {
                return Err(Error::invalid(format!("duplicate column name `{name}`")));
            }
        }
        if let Some((name, _)) = names.iter().zip(&columns).find(|(_, c)| c.len() != dates.len()) {
            return Err(Error::invalid(format!("column `{name}` has the wrong length")));
        }
        Ok(SeriesTable { dates, names, columns })
    }

    pub fn dates(&self) -> &[Month] {
        &self.dates
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<Option<f64>>] {
        &self.columns
    }

    pub fn n_rows(&self) -> usize {
        self.dates.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn column(&self, name: &str) -> Option<&[Option<f64>]> {
        self.names.iter().position(|n| n == name).map(|i| self.columns[i].as_slice())
    }

    pub fn missing_count(&self) -> usize {
        self.columns.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Writes the table as CSV with a leading `date` column (`YYYY-MM`).
    /// Missing cells are written empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![DATE_HEADER.to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header)?;
        for (i, date) in self.dates.iter().enumerate() {
            let mut record = vec![date.to_string()];
            record.extend(self.columns.iter().map(|c| c[i].map(|v| v.to_string()).unwrap_or_default()));
            w.write_record(&record)?;
        }
        w.flush().map_err(|e| Error::Io { path: "<csv writer>".into(), source: e })?;
        Ok(())
    }

    pub fn write_csv_path(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

/// Reads a CSV file into a [`SeriesTable`].
pub fn ingest_csv(path: &Path, date_column: &str) -> Result<SeriesTable> {
    let file = File::open(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    read_csv(file, date_column)
}

/// Reads CSV from any reader. Higher-frequency rows collapse to the last
/// non-missing observation of each month; months absent from the input are
/// filled with missing markers.
pub fn read_csv<R: Read>(reader: R, date_column: &str) -> Result<SeriesTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let date_idx = headers
        .iter()
        .position(|h| h == date_column)
        .ok_or_else(|| Error::invalid(format!("date column `{date_column}` not found in header")))?;
    let mut seen = HashSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(Error::invalid(format!("duplicate column name `{h}`")));
        }
    }
    let value_idx: Vec<usize> = (0..headers.len()).filter(|&i| i != date_idx).collect();
    let names: Vec<String> = value_idx.iter().map(|&i| headers[i].clone()).collect();

    let mut rows: Vec<((Month, u32), Vec<Option<f64>>)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw_date = record.get(date_idx).unwrap_or("");
        let stamp = parse_date(raw_date)
            .ok_or_else(|| Error::Parse { line, message: format!("unparseable date `{raw_date}`") })?;
        let values = value_idx
            .iter()
            .map(|&i| parse_cell(record.get(i).unwrap_or("")))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|message| Error::Parse { line, message })?;
        rows.push((stamp, values));
    }
    if rows.is_empty() {
        return Err(Error::invalid("no data rows"));
    }
    // Stable: rows sharing a timestamp keep file order, so the later one wins.
    rows.sort_by_key(|(stamp, _)| *stamp);

    let first = rows[0].0 .0;
    let last = rows[rows.len() - 1].0 .0;
    let len = first.months_until(last) as usize + 1;
    let mut columns = vec![vec![None; len]; names.len()];
    for ((month, _), values) in &rows {
        let t = first.months_until(*month) as usize;
        for (col, v) in columns.iter_mut().zip(values) {
            if v.is_some() {
                col[t] = *v;
            }
        }
    }
    let dates = (0..len as i64).map(|k| first.plus(k)).collect();
    SeriesTable::new(dates, names, columns)
}

/// Outer join of tables on month. Column names must not collide.
pub fn merge(tables: &[SeriesTable]) -> Result<SeriesTable> {
    if tables.is_empty() {
        return Err(Error::invalid("merge needs at least one table"));
    }
    let mut seen = HashSet::new();
    for name in tables.iter().flat_map(|t| t.names.iter()) {
        if !seen.insert(name.as_str()) {
            return Err(Error::invalid(format!("column `{name}` appears in more than one table")));
        }
    }
    let non_empty: Vec<&SeriesTable> = tables.iter().filter(|t| !t.dates.is_empty()).collect();
    let (first, last) = match (
        non_empty.iter().map(|t| t.dates[0]).min(),
        non_empty.iter().map(|t| *t.dates.last().unwrap()).max(),
    ) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            let names = tables.iter().flat_map(|t| t.names.clone()).collect::<Vec<_>>();
            let columns = vec![Vec::new(); names.len()];
            return SeriesTable::new(Vec::new(), names, columns);
        }
    };
    let len = first.months_until(last) as usize + 1;
    let mut names = Vec::new();
    let mut columns = Vec::new();
    for t in tables {
        let offset = t.dates.first().map(|d| first.months_until(*d) as usize).unwrap_or(0);
        for (name, col) in t.names.iter().zip(&t.columns) {
            let mut out = vec![None; len];
            out[offset..offset + col.len()].copy_from_slice(col);
            names.push(name.clone());
            columns.push(out);
        }
    }
    let dates = (0..len as i64).map(|k| first.plus(k)).collect();
    SeriesTable::new(dates, names, columns)
}

/// Appends a first-difference column `d_<name>` for every column. The first
/// month of each difference is missing, as is any difference touching a
/// missing cell.
///
/// Columns listed in `exclude` (typically the target, whose change would
/// reveal the value being predicted), columns that are already differences
/// and columns whose difference is present are skipped, so differencing an
/// already differenced table changes nothing.
pub fn add_differences(table: &SeriesTable, exclude: &[&str]) -> Result<SeriesTable> {
    if table.n_rows() < 2 {
        return Err(Error::invalid("differencing needs at least 2 rows"));
    }
    let mut names = table.names.clone();
    let mut columns = table.columns.clone();
    for (name, col) in table.names.iter().zip(&table.columns) {
        let diff_name = format!("{DIFF_PREFIX}{name}");
        if exclude.contains(&name.as_str()) || name.starts_with(DIFF_PREFIX) || table.names.contains(&diff_name) {
            continue;
        }
        let mut diff = vec![None; col.len()];
        for t in 1..col.len() {
            if let (Some(a), Some(b)) = (col[t - 1], col[t]) {
                diff[t] = Some(b - a);
            }
        }
        names.push(diff_name);
        columns.push(diff);
    }
    SeriesTable::new(table.dates.clone(), names, columns)
}

/// Forward-fills gaps, then drops leading rows that are still incomplete.
pub fn fill_missing(table: &SeriesTable) -> Result<SeriesTable> {
    let mut start = 0;
    let mut columns = Vec::with_capacity(table.n_cols());
    for (name, col) in table.names.iter().zip(&table.columns) {
        let first_valid = col
            .iter()
            .position(Option::is_some)
            .ok_or_else(|| Error::invalid(format!("column `{name}` is entirely missing")))?;
        start = start.max(first_valid);
        let mut last = None;
        columns.push(
            col.iter()
                .map(|v| {
                    if v.is_some() {
                        last = *v;
                    }
                    last
                })
                .collect::<Vec<_>>(),
        );
    }
    let columns = columns.into_iter().map(|c| c[start..].to_vec()).collect();
    SeriesTable::new(table.dates[start..].to_vec(), table.names.clone(), columns)
}

/// Dense feature matrix plus target, ordered by month.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    dates: Vec<Month>,
    feature_names: Vec<String>,
    /// Row-major, `n * d`.
    features: Vec<f64>,
    target: Vec<f64>,
    target_name: String,
}

impl Dataset {
    pub fn new(
        dates: Vec<Month>,
        feature_names: Vec<String>,
        features: DMatrix<f64>,
        target: Vec<f64>,
        target_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = features.shape();
        if n < 2 || d < 1 {
            return Err(Error::invalid(format!("dataset needs n >= 2 and d >= 1, got {n}x{d}")));
        }
        if dates.len() != n || target.len() != n || feature_names.len() != d {
            return Err(Error::invalid("dataset parts disagree in shape"));
        }
        if dates.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid("dataset dates must be strictly increasing"));
        }
        if features.iter().chain(&target).any(|v| !v.is_finite()) {
            return Err(Error::invalid("dataset contains non-finite values"));
        }
        let mut row_major = Vec::with_capacity(n * d);
        for i in 0..n {
            row_major.extend(features.row(i).iter());
        }
        Ok(Dataset { dates, feature_names, features: row_major, target, target_name: target_name.into() })
    }

    pub fn n(&self) -> usize {
        self.dates.len()
    }

    pub fn d(&self) -> usize {
        self.feature_names.len()
    }

    pub fn dates(&self) -> &[Month] {
        &self.dates
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.d();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n()).map(|i| self.features[i * self.d() + j]).collect()
    }

    pub fn features(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n(), self.d(), &self.features)
    }

    /// Rows `range` as a new dataset (at least two rows).
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> Result<Dataset> {
        let d = self.d();
        let rows = &self.features[range.start * d..range.end * d];
        Dataset::new(
            self.dates[range.clone()].to_vec(),
            self.feature_names.clone(),
            DMatrix::from_row_slice(range.len(), d, rows),
            self.target[range].to_vec(),
            self.target_name.clone(),
        )
    }

    /// Keeps only the named feature columns, in the order given.
    pub fn select_features(&self, names: &[String]) -> Result<Dataset> {
        let idx = names
            .iter()
            .map(|name| {
                self.feature_names
                    .iter()
                    .position(|f| f == name)
                    .ok_or_else(|| Error::invalid(format!("feature `{name}` not in dataset")))
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.n();
        let m = DMatrix::from_fn(n, idx.len(), |i, j| self.features[i * self.d() + idx[j]]);
        Dataset::new(self.dates.clone(), names.to_vec(), m, self.target.clone(), self.target_name.clone())
    }

    /// Appends one feature column.
    pub fn with_feature(&self, name: &str, values: &[f64]) -> Result<Dataset> {
        if values.len() != self.n() {
            return Err(Error::invalid("new feature column has the wrong length"));
        }
        let mut names = self.feature_names.clone();
        names.push(name.to_string());
        let d = self.d();
        let m = DMatrix::from_fn(self.n(), d + 1, |i, j| if j < d { self.features[i * d + j] } else { values[i] });
        Dataset::new(self.dates.clone(), names, m, self.target.clone(), self.target_name.clone())
    }

    /// The dataset as a table whose last column is the target.
    pub fn to_table(&self) -> SeriesTable {
        let mut names = self.feature_names.clone();
        names.push(self.target_name.clone());
        let mut columns: Vec<Vec<Option<f64>>> = (0..self.d()).map(|j| self.column(j).into_iter().map(Some).collect()).collect();
        columns.push(self.target.iter().copied().map(Some).collect());
        // Dates of a dataset may skip months only if built by hand; tables
        // need a contiguous calendar.
        SeriesTable { dates: self.dates.clone(), names, columns }
    }
}

/// Splits a gap-free table into features and target.
pub fn to_dataset(table: &SeriesTable, target_column: &str) -> Result<Dataset> {
    let target_idx = table
        .names
        .iter()
        .position(|n| n == target_column)
        .ok_or_else(|| Error::invalid(format!("target column `{target_column}` not found")))?;
    if let Some((name, _)) = table.names.iter().zip(&table.columns).find(|(_, c)| c.iter().any(Option::is_none)) {
        return Err(Error::invalid(format!("column `{name}` still has missing values")));
    }
    let n = table.n_rows();
    let feature_idx: Vec<usize> = (0..table.n_cols()).filter(|&j| j != target_idx).collect();
    let features = DMatrix::from_fn(n, feature_idx.len(), |i, j| table.columns[feature_idx[j]][i].unwrap());
    let target = table.columns[target_idx].iter().map(|v| v.unwrap()).collect();
    Dataset::new(
        table.dates.clone(),
        feature_idx.iter().map(|&j| table.names[j].clone()).collect(),
        features,
        target,
        target_column,
    )
}

/// Reads a dataset CSV (date column, target column, numeric features),
/// filling gaps with the same policy as [`fill_missing`].
pub fn load_dataset(path: &Path, date_column: &str, target_column: &str) -> Result<Dataset> {
    let table = fill_missing(&ingest_csv(path, date_column)?)?;
    to_dataset(&table, target_column)
}

/// Fraction of rows, from the start, used for training.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec { train_fraction: 0.7 }
    }
}

impl SplitSpec {
    pub fn new(train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::invalid(format!("train fraction {train_fraction} not in (0, 1)")));
        }
        Ok(SplitSpec { train_fraction })
    }

    /// `floor(fraction * n)` clamped to `[1, n - 1]`.
    pub fn boundary(&self, n: usize) -> Result<usize> {
        if n < 2 {
            return Err(Error::invalid("cannot split fewer than 2 rows"));
        }
        SplitSpec::new(self.train_fraction)?;
        // The small bias absorbs representation error, e.g. 0.7 * 120.
        let raw = (self.train_fraction * n as f64 + 1e-9).floor() as usize;
        Ok(raw.clamp(1, n - 1))
    }
}

/// First `boundary` rows train, the rest test. Both sides need two rows to
/// form a [`Dataset`].
pub fn chronological_split(ds: &Dataset, spec: SplitSpec) -> Result<(Dataset, Dataset)> {
    let b = spec.boundary(ds.n())?;
    if b < 2 || ds.n() - b < 2 {
        return Err(Error::invalid(format!(
            "split of {} rows at {} leaves a side with fewer than 2 rows",
            ds.n(),
            b
        )));
    }
    Ok((ds.slice_rows(0..b)?, ds.slice_rows(b..ds.n())?))
}

/// Per-month `(train, test)` labels for a split boundary.
pub fn split_labels(n: usize, boundary: usize) -> Vec<&'static str> {
    (0..n).map(|i| if i < boundary { "train" } else { "test" }).collect()
}
