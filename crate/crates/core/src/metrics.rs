//! Error metrics, improvement percentages, rank distributions and
//! learning-curve summaries.

use std::io::Write;

use serde::Serialize;

use crate::backtest::SelectionLog;
use crate::pool::ForecastMatrix;
use crate::qdms::{rank_models, LearningCurve};
use crate::{Error, Real, Result};

/// Row label of the dynamic-selection forecaster in reports.
pub const DMS_ID: &str = "M_Q";

fn check_lengths<T>(forecasts: &[T], actuals: &[T]) -> Result<()> {
    if forecasts.len() != actuals.len() {
        return Err(Error::LengthMismatch(forecasts.len(), actuals.len()));
    }
    if forecasts.is_empty() {
        return Err(Error::InvalidInput("no points to score".into()));
    }
    Ok(())
}

/// Absolute percentage error of one forecast, as a fraction.
pub fn ape<T: Real>(forecast: T, actual: T) -> T {
    (forecast - actual).abs() / actual
}

/// Mean absolute percentage error, in percent.
pub fn mape<T: Real>(forecasts: &[T], actuals: &[T]) -> Result<T> {
    check_lengths(forecasts, actuals)?;
    if let Some(a) = actuals.iter().find(|a| !(**a > T::zero())) {
        return Err(Error::InvalidInput(format!("non-positive actual {a}")));
    }
    let s: T = forecasts.iter().zip(actuals).map(|(&f, &a)| ape(f, a)).sum();
    Ok(T::of(100.0) * s / T::of_usize(actuals.len()))
}

/// Mean absolute error normalized by `capacity`, in percent.
pub fn nmae<T: Real>(forecasts: &[T], actuals: &[T], capacity: T) -> Result<T> {
    check_lengths(forecasts, actuals)?;
    if !(capacity > T::zero()) {
        return Err(Error::InvalidInput(format!("non-positive capacity {capacity}")));
    }
    let s: T = forecasts.iter().zip(actuals).map(|(&f, &a)| (f - a).abs()).sum();
    Ok(T::of(100.0) * s / T::of_usize(actuals.len()) / capacity)
}

/// Percentage reduction of `dms_err` relative to `base_err`.
pub fn improvement<T: Real>(base_err: T, dms_err: T) -> Result<T> {
    if !(base_err > T::zero()) {
        return Err(Error::InvalidInput(format!("base error {base_err} must be positive")));
    }
    Ok(T::of(100.0) * (base_err - dms_err) / base_err)
}

/// Per-model counts of realized ranks `1..=N` over the test steps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankCounts {
    /// Pool ids, then [`DMS_ID`] when a selection log was supplied.
    pub model_ids: Vec<String>,
    /// `counts[m][r - 1]` = steps where model `m` ranked `r`.
    pub counts: Vec<Vec<usize>>,
    pub steps: usize,
}

impl RankCounts {
    /// Share of steps (percent) where `row` ranked within the top `k`.
    pub fn top_share(&self, row: usize, k: usize) -> f64 {
        if self.steps == 0 {
            return 0.0;
        }
        let hits: usize = self.counts[row].iter().take(k).sum();
        100.0 * hits as f64 / self.steps as f64
    }

    /// Models that ranked first at least once.
    pub fn distinct_winners(&self, pool_size: usize) -> usize {
        self.counts[..pool_size].iter().filter(|c| c[0] > 0).count()
    }

    /// `model,rank_1,...,rank_N`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let n = self.counts.first().map_or(0, |c| c.len());
        let header: Vec<String> = (1..=n).map(|r| format!("rank_{r}")).collect();
        writeln!(w, "model,{}", header.join(","))?;
        for (id, row) in self.model_ids.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(|c| c.to_string()).collect();
            writeln!(w, "{id},{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Rank histogram of every pool column of `fm`, plus the chosen model's rank
/// from `log` when given (its steps must match `fm` one to one).
pub fn rank_distribution<T: Real>(fm: &ForecastMatrix<T>, log: Option<&SelectionLog<T>>) -> Result<RankCounts> {
    let n = fm.n_models();
    let mut counts = vec![vec![0usize; n]; n];
    let mut ids = fm.model_ids().to_vec();
    let mut dms = log.map(|_| vec![0usize; n]);
    if let Some(log) = log {
        if log.len() != fm.len() {
            return Err(Error::LengthMismatch(log.len(), fm.len()));
        }
        if let Some((e, ts)) = log.entries.iter().zip(fm.timestamps()).find(|(e, ts)| e.timestamp != **ts) {
            return Err(Error::InvalidInput(format!(
                "selection log step {} does not line up with forecast step {ts}",
                e.timestamp
            )));
        }
        ids.push(DMS_ID.to_string());
    }
    for t in 0..fm.len() {
        let ranks = rank_models(&fm.apes(t))?;
        for (m, row) in counts.iter_mut().enumerate() {
            row[ranks.rank(m) - 1] += 1;
        }
        if let (Some(log), Some(d)) = (log, dms.as_mut()) {
            let e = &log.entries[t];
            if e.timestamp != fm.timestamps()[t] {
                return Err(Error::InvalidInput(format!("selection log misaligned at step {t}")));
            }
            d[ranks.rank(e.chosen) - 1] += 1;
        }
    }
    counts.extend(dms);
    Ok(RankCounts {
        model_ids: ids,
        counts,
        steps: fm.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub model: String,
    pub nmae: f64,
    pub mape: f64,
    /// nMAE reduction of the dynamic selection over this model; absent for
    /// the selection itself and when no selection is evaluated.
    pub imp_nmae: Option<f64>,
    pub imp_mape: Option<f64>,
}

/// Error table with improvements of the dynamic selection over each member.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    /// nMAE normalizer (kW).
    pub capacity: f64,
    pub steps: usize,
    pub rows: Vec<ReportRow>,
    pub rank_counts: RankCounts,
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

impl EvalReport {
    pub fn has_dms(&self) -> bool {
        self.rows.iter().any(|r| r.model == DMS_ID)
    }

    pub fn row(&self, model: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.model == model)
    }

    /// `model,nmae,mape[,imp_nmae,imp_mape]` with two decimals; `NA` where an
    /// improvement does not apply.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let imp = self.has_dms();
        if imp {
            writeln!(w, "model,nmae,mape,imp_nmae,imp_mape")?;
        } else {
            writeln!(w, "model,nmae,mape")?;
        }
        let fmt = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| format!("{x:.2}"));
        for r in &self.rows {
            write!(w, "{},{:.2},{:.2}", r.model, r.nmae, r.mape)?;
            if imp {
                write!(w, ",{},{}", fmt(r.imp_nmae), fmt(r.imp_mape))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    /// The whole report as one JSON document, percentages rounded to two decimals.
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let mut doc = self.clone();
        for r in &mut doc.rows {
            r.nmae = round2(r.nmae);
            r.mape = round2(r.mape);
            r.imp_nmae = r.imp_nmae.map(round2);
            r.imp_mape = r.imp_mape.map(round2);
        }
        serde_json::to_writer_pretty(w, &doc)?;
        Ok(())
    }
}

/// Scores every pool column of `fm` and, when given, the dynamic selection.
pub fn evaluate<T: Real>(
    fm: &ForecastMatrix<T>,
    log: Option<&SelectionLog<T>>,
    capacity: T,
) -> Result<EvalReport> {
    let actuals = fm.actuals();
    let mut rows = Vec::with_capacity(fm.n_models() + 1);
    for (m, id) in fm.model_ids().iter().enumerate() {
        let f = fm.column(m);
        rows.push(ReportRow {
            model: id.clone(),
            nmae: nmae(&f, actuals, capacity)?.as_f64(),
            mape: mape(&f, actuals)?.as_f64(),
            imp_nmae: None,
            imp_mape: None,
        });
    }
    if let Some(log) = log {
        if log.len() != fm.len() {
            return Err(Error::LengthMismatch(log.len(), fm.len()));
        }
        let f: Vec<T> = log.entries.iter().map(|e| e.forecast).collect();
        let dn = nmae(&f, actuals, capacity)?.as_f64();
        let dm = mape(&f, actuals)?.as_f64();
        for r in &mut rows {
            r.imp_nmae = Some(improvement(r.nmae, dn)?);
            r.imp_mape = Some(improvement(r.mape, dm)?);
        }
        rows.push(ReportRow {
            model: DMS_ID.to_string(),
            nmae: dn,
            mape: dm,
            imp_nmae: None,
            imp_mape: None,
        });
    }
    Ok(EvalReport {
        capacity: capacity.as_f64(),
        steps: fm.len(),
        rows,
        rank_counts: rank_distribution(fm, log)?,
    })
}

/// Spread (max - min) of the final `tail` fraction of a curve relative to its
/// spread over all episodes; 0 for a flat curve.
pub fn tail_variation<T: Real>(curve: &LearningCurve<T>, tail: f64) -> f64 {
    let v = curve.values();
    if v.is_empty() {
        return 0.0;
    }
    let spread = |s: &[T]| {
        let (lo, hi) = s.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| {
            (lo.min(x.as_f64()), hi.max(x.as_f64()))
        });
        hi - lo
    };
    let total = spread(v);
    if total == 0.0 {
        return 0.0;
    }
    let k = ((v.len() as f64 * tail).ceil() as usize).clamp(1, v.len());
    spread(&v[v.len() - k..]) / total
}

/// Per-episode min, quartiles and max of the Q-sum across agents.
pub fn curve_bands<T: Real>(curves: &[LearningCurve<T>]) -> Vec<[f64; 5]> {
    let episodes = curves.iter().map(|c| c.len()).max().unwrap_or(0);
    (0..episodes)
        .map(|e| {
            let mut v: Vec<f64> = curves.iter().filter_map(|c| c.values().get(e)).map(|x| x.as_f64()).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            let q = |p: f64| {
                let pos = p * (v.len() - 1) as f64;
                let (i, frac) = (pos.floor() as usize, pos.fract());
                if i + 1 < v.len() {
                    v[i] + frac * (v[i + 1] - v[i])
                } else {
                    v[i]
                }
            };
            [q(0.0), q(0.25), q(0.5), q(0.75), q(1.0)]
        })
        .collect()
}

/// `episode,min,q25,median,q75,max`.
pub fn write_curve_bands<W: Write>(bands: &[[f64; 5]], mut w: W) -> Result<()> {
    writeln!(w, "episode,min,q25,median,q75,max")?;
    for (e, b) in bands.iter().enumerate() {
        writeln!(w, "{},{},{},{},{},{}", e + 1, b[0], b[1], b[2], b[3], b[4])?;
    }
    Ok(())
}
