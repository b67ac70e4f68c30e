use std::io::{Read, Write};
use std::ops::Range;

use chrono::NaiveDateTime;

use crate::dataio::TIMESTAMP_FORMAT;
use crate::metrics::ape;
use crate::{Error, Real, Result};

/// T×N forecasts aligned with actuals; column `n` belongs to `model_ids[n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastMatrix<T> {
    timestamps: Vec<NaiveDateTime>,
    actuals: Vec<T>,
    forecasts: Vec<Vec<T>>,
    model_ids: Vec<String>,
}

impl<T: Real> ForecastMatrix<T> {
    pub fn new(
        timestamps: Vec<NaiveDateTime>,
        actuals: Vec<T>,
        forecasts: Vec<Vec<T>>,
        model_ids: Vec<String>,
    ) -> Result<Self> {
        let t = actuals.len();
        if timestamps.len() != t {
            return Err(Error::LengthMismatch(timestamps.len(), t));
        }
        if forecasts.len() != t {
            return Err(Error::LengthMismatch(forecasts.len(), t));
        }
        if let Some(row) = forecasts.iter().find(|r| r.len() != model_ids.len()) {
            return Err(Error::LengthMismatch(row.len(), model_ids.len()));
        }
        if let Some(i) = actuals.iter().position(|a| !(*a > T::zero()) || !a.is_finite()) {
            return Err(Error::InvalidInput(format!("actual at step {i} must be positive and finite")));
        }
        if let Some(i) = forecasts.iter().position(|r| r.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput(format!("non-finite forecast at step {i}")));
        }
        Ok(ForecastMatrix {
            timestamps,
            actuals,
            forecasts,
            model_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.actuals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actuals.is_empty()
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn model_ids(&self) -> &[String] {
        &self.model_ids
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn actuals(&self) -> &[T] {
        &self.actuals
    }

    pub fn forecast(&self, t: usize, model: usize) -> T {
        self.forecasts[t][model]
    }

    pub fn row(&self, t: usize) -> &[T] {
        &self.forecasts[t]
    }

    pub fn column(&self, model: usize) -> Vec<T> {
        self.forecasts.iter().map(|r| r[model]).collect()
    }

    /// Absolute percentage errors of every model at step `t`.
    pub fn apes(&self, t: usize) -> Vec<T> {
        self.forecasts[t].iter().map(|&f| ape(f, self.actuals[t])).collect()
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        ForecastMatrix {
            timestamps: self.timestamps[range.clone()].to_vec(),
            actuals: self.actuals[range.clone()].to_vec(),
            forecasts: self.forecasts[range].to_vec(),
            model_ids: self.model_ids.clone(),
        }
    }

    /// Appends `later`, which must share the model ids and start after `self` ends.
    pub fn concat(&self, later: &Self) -> Result<Self> {
        if self.model_ids != later.model_ids {
            return Err(Error::InvalidInput("forecast matrices have different model ids".into()));
        }
        if let (Some(a), Some(b)) = (self.timestamps.last(), later.timestamps.first()) {
            if a >= b {
                return Err(Error::InvalidInput(format!("{b} does not follow {a}")));
            }
        }
        let mut out = self.clone();
        out.timestamps.extend_from_slice(&later.timestamps);
        out.actuals.extend_from_slice(&later.actuals);
        out.forecasts.extend_from_slice(&later.forecasts);
        Ok(out)
    }

    /// Step index of `ts`, if present.
    pub fn position(&self, ts: NaiveDateTime) -> Option<usize> {
        self.timestamps.binary_search(&ts).ok()
    }

    /// `timestamp,actual,<model ids...>` with shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        let mut header = vec!["timestamp".to_string(), "actual".to_string()];
        header.extend(self.model_ids.iter().cloned());
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![
                self.timestamps[t].format(TIMESTAMP_FORMAT).to_string(),
                self.actuals[t].to_string(),
            ];
            rec.extend(self.forecasts[t].iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rdr.headers()?.clone();
        if header.len() < 2 || &header[0] != "timestamp" || &header[1] != "actual" {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "forecast header must start with `timestamp,actual`".into(),
            });
        }
        let model_ids: Vec<String> = header.iter().skip(2).map(String::from).collect();
        let (mut ts, mut actuals, mut forecasts) = (Vec::new(), Vec::new(), Vec::new());
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            let bad = |reason: String| Error::MalformedRow { line, reason };
            ts.push(
                NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT)
                    .map_err(|e| bad(format!("timestamp: {e}")))?,
            );
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map(T::of)
                    .map_err(|e| bad(format!("value `{s}`: {e}")))
            };
            actuals.push(parse(&rec[1])?);
            forecasts.push(rec.iter().skip(2).map(parse).collect::<Result<Vec<T>>>()?);
        }
        Self::new(ts, actuals, forecasts, model_ids)
    }
}
