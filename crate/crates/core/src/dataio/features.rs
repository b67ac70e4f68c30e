use std::f64::consts::PI;

use chrono::{Datelike, NaiveDateTime, Timelike};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::{Error, Real, Result};

pub const WEATHER_FEATURES: usize = 4;
pub const CALENDAR_FEATURES: usize = 3;

/// Half-open interval `[start, end)` of target timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: NaiveDateTime,
    pub end: NaiveDateTime,
}

impl TimeRange {
    pub fn new(start: NaiveDateTime, end: NaiveDateTime) -> Self {
        TimeRange { start, end }
    }

    pub fn contains(&self, ts: NaiveDateTime) -> bool {
        self.start <= ts && ts < self.end
    }

    pub fn hours(&self) -> i64 {
        (self.end - self.start).num_hours()
    }
}

/// Chronological train / validation / test partition of target timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: TimeRange,
    pub valid: TimeRange,
    pub test: TimeRange,
}

impl SplitSpec {
    pub fn new(train: TimeRange, valid: TimeRange, test: TimeRange) -> Result<Self> {
        let s = SplitSpec { train, valid, test };
        s.validate()?;
        Ok(s)
    }

    /// Contiguous split of `dataset` at two boundaries; the test range runs to
    /// the end of the series.
    pub fn at_boundaries(
        dataset: &Dataset,
        valid_start: NaiveDateTime,
        test_start: NaiveDateTime,
    ) -> Result<Self> {
        let (start, last) = dataset
            .start()
            .zip(dataset.end())
            .ok_or_else(|| Error::InvalidSplit("empty dataset".into()))?;
        let end = last + chrono::Duration::hours(1);
        Self::new(
            TimeRange::new(start, valid_start),
            TimeRange::new(valid_start, test_start),
            TimeRange::new(test_start, end),
        )
    }

    /// Contiguous split by fractions of the series length (rounded down to whole hours).
    pub fn from_fractions(dataset: &Dataset, train: f64, valid: f64) -> Result<Self> {
        if !(train > 0.0 && valid > 0.0 && train + valid < 1.0) {
            return Err(Error::InvalidSplit(format!(
                "fractions train={train} valid={valid} must be positive and sum below 1"
            )));
        }
        let start = dataset
            .start()
            .ok_or_else(|| Error::InvalidSplit("empty dataset".into()))?;
        let n = dataset.len() as f64;
        let h = |x: f64| start + chrono::Duration::hours(x.floor() as i64);
        Self::at_boundaries(dataset, h(n * train), h(n * (train + valid)))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, r) in [("train", self.train), ("valid", self.valid), ("test", self.test)] {
            if r.end <= r.start {
                return Err(Error::InvalidSplit(format!("{name} range is empty")));
            }
        }
        if self.train.end > self.valid.start || self.valid.end > self.test.start {
            return Err(Error::InvalidSplit(
                "ranges must be disjoint and ordered train < valid < test".into(),
            ));
        }
        Ok(())
    }
}

/// Column composition of a feature matrix.
///
/// Logical features are `lags + 4 weather + 3 calendar`; each calendar value
/// is encoded as a (sin, cos) pair, so the encoded width is `lags + 4 + 6`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub lags: usize,
}

impl FeatureLayout {
    pub fn logical_count(&self) -> usize {
        self.lags + WEATHER_FEATURES + CALENDAR_FEATURES
    }

    pub fn width(&self) -> usize {
        self.lags + WEATHER_FEATURES + 2 * CALENDAR_FEATURES
    }

    /// Leading columns that are standardized.
    pub fn continuous(&self) -> usize {
        self.lags + WEATHER_FEATURES
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.lags)
            .map(|k| if k == 0 { "load_t".to_string() } else { format!("load_t-{k}") })
            .collect();
        names.extend(
            ["temperature", "humidity", "ghi", "wind_speed"]
                .iter()
                .map(|s| s.to_string()),
        );
        for c in ["hour", "dow", "month"] {
            names.push(format!("{c}_sin"));
            names.push(format!("{c}_cos"));
        }
        names
    }
}

/// Per-column affine scaling fitted on the training split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    fn fit(rows: &[Vec<f64>], cols: usize) -> Self {
        let n = rows.len().max(1) as f64;
        let mut means = vec![0.0; cols];
        let mut stds = vec![0.0; cols];
        for r in rows {
            for c in 0..cols {
                means[c] += r[c];
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        for r in rows {
            for c in 0..cols {
                stds[c] += (r[c] - means[c]).powi(2);
            }
        }
        for s in stds.iter_mut() {
            *s = (*s / n).sqrt();
            // zero-variance guard
            if !(*s > 1e-12) {
                *s = 1.0;
            }
        }
        Standardizer { means, stds }
    }

    fn apply(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().take(self.means.len()).enumerate() {
            *v = (*v - self.means[c]) / self.stds[c];
        }
    }
}

/// Row-major design matrix with aligned targets.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    /// Present when the matrix was assembled from a dataset.
    pub layout: Option<FeatureLayout>,
    /// Target timestamps (time t+1 of each row).
    pub timestamps: Vec<NaiveDateTime>,
    /// Raw calendar values of the target hour: hour 0-23, weekday 0-6 (Monday = 0), month 1-12.
    pub calendar: Vec<[u32; 3]>,
    pub targets: Vec<T>,
    n_cols: usize,
    data: Vec<T>,
}

impl<T: Real> FeatureMatrix<T> {
    /// Matrix from explicit rows with synthetic hourly timestamps.
    pub fn from_rows(rows: &[Vec<T>], targets: Vec<T>) -> Result<Self> {
        if rows.len() != targets.len() {
            return Err(Error::LengthMismatch(rows.len(), targets.len()));
        }
        let n_cols = rows.first().map_or(0, |r| r.len());
        if let Some(r) = rows.iter().find(|r| r.len() != n_cols) {
            return Err(Error::SchemaMismatch {
                expected: n_cols,
                got: r.len(),
            });
        }
        let epoch = NaiveDateTime::default();
        Ok(FeatureMatrix {
            layout: None,
            timestamps: (0..rows.len())
                .map(|i| epoch + chrono::Duration::hours(i as i64))
                .collect(),
            calendar: vec![[0, 0, 1]; rows.len()],
            targets,
            n_cols,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn empty(n_cols: usize) -> Self {
        FeatureMatrix {
            layout: None,
            timestamps: Vec::new(),
            calendar: Vec::new(),
            targets: Vec::new(),
            n_cols,
            data: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    /// Subset of rows in the given order.
    pub fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.n_cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            layout: self.layout,
            timestamps: idx.iter().map(|&i| self.timestamps[i]).collect(),
            calendar: idx.iter().map(|&i| self.calendar[i]).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            n_cols: self.n_cols,
            data,
        }
    }

    /// Rows of `self` followed by the rows of `other`.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if self.n_cols != other.n_cols {
            return Err(Error::SchemaMismatch {
                expected: self.n_cols,
                got: other.n_cols,
            });
        }
        let mut out = self.clone();
        out.timestamps.extend_from_slice(&other.timestamps);
        out.calendar.extend_from_slice(&other.calendar);
        out.targets.extend_from_slice(&other.targets);
        out.data.extend_from_slice(&other.data);
        Ok(out)
    }
}

/// Output of [`build_features`].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSplits<T> {
    pub train: FeatureMatrix<T>,
    pub valid: FeatureMatrix<T>,
    pub test: FeatureMatrix<T>,
    pub standardizer: Standardizer,
}

fn cyclic(v: f64, period: f64) -> [f64; 2] {
    let a = 2.0 * PI * v / period;
    [a.sin(), a.cos()]
}

/// Assembles lagged-load, weather and calendar features for each split.
///
/// Row `h` predicts the load at hour `h` from loads `h-1 .. h-L`, weather at
/// `h-1` and the calendar of hour `h`. Rows are only emitted for targets with a
/// full lag window, so the first `L` hours of the series are warm-up. Lags may
/// reach back into an earlier split; targets never leave their own split.
pub fn build_features<T: Real>(
    dataset: &Dataset,
    lags: usize,
    split: &SplitSpec,
) -> Result<FeatureSplits<T>> {
    if lags < 1 {
        return Err(Error::InvalidInput("lag count must be at least 1".into()));
    }
    if dataset.len() <= lags + 1 {
        return Err(Error::TooShort(format!(
            "{} hours cannot supply {} lags plus a target",
            dataset.len(),
            lags
        )));
    }
    split.validate()?;
    let layout = FeatureLayout { lags };
    let obs = dataset.observations();

    let raw_split = |range: &TimeRange| {
        let mut ts = Vec::new();
        let mut cal = Vec::new();
        let mut y = Vec::new();
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for h in lags..obs.len() {
            let o = &obs[h];
            if !range.contains(o.timestamp) {
                continue;
            }
            let mut r = Vec::with_capacity(layout.width());
            r.extend((1..=lags).map(|k| obs[h - k].load));
            r.extend_from_slice(&obs[h - 1].weather());
            let hour = o.timestamp.hour();
            let dow = o.timestamp.weekday().num_days_from_monday();
            let month = o.timestamp.month();
            r.extend_from_slice(&cyclic(hour as f64, 24.0));
            r.extend_from_slice(&cyclic(dow as f64, 7.0));
            r.extend_from_slice(&cyclic(month as f64, 12.0));
            rows.push(r);
            ts.push(o.timestamp);
            cal.push([hour, dow, month]);
            y.push(o.load);
        }
        (ts, cal, y, rows)
    };

    let train_raw = raw_split(&split.train);
    if train_raw.3.is_empty() {
        return Err(Error::TooShort(format!(
            "training split has no rows after a {lags}-hour warm-up"
        )));
    }
    let standardizer = Standardizer::fit(&train_raw.3, layout.continuous());

    let finish = |(ts, cal, y, rows): (Vec<NaiveDateTime>, Vec<[u32; 3]>, Vec<f64>, Vec<Vec<f64>>)| {
        let mut data = Vec::with_capacity(rows.len() * layout.width());
        for mut r in rows {
            standardizer.apply(&mut r);
            data.extend(r.into_iter().map(T::of));
        }
        FeatureMatrix {
            layout: Some(layout),
            timestamps: ts,
            calendar: cal,
            targets: y.into_iter().map(T::of).collect(),
            n_cols: layout.width(),
            data,
        }
    };

    let train = finish(train_raw);
    let valid = finish(raw_split(&split.valid));
    let test = finish(raw_split(&split.test));
    for (name, m) in [("validation", &valid), ("test", &test)] {
        if m.is_empty() {
            return Err(Error::TooShort(format!("{name} split has no rows")));
        }
    }
    Ok(FeatureSplits {
        train,
        valid,
        test,
        standardizer,
    })
}
