//! Moving-window dynamic model selection over a forecast matrix.
//!
//! For each block of `P` test steps: pre-select the `I` models with the lowest
//! mean APE over the trailing `R` steps, train a fresh Q-learning agent on that
//! window, and roll its greedy policy forward over the block.

use std::io::{Read, Write};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

use crate::dataio::TIMESTAMP_FORMAT;
use crate::pool::ForecastMatrix;
use crate::qdms::{apply_policy, rank_models, train_agent, AgentConfig, AgentWindow, LearningCurve, MdpSpace, RankVector};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    /// Trailing steps each agent learns from (`R`).
    pub history: usize,
    /// Steps each agent selects for (`P`).
    pub horizon: usize,
    /// Models pre-selected per window (`I`).
    pub candidates: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        WindowConfig {
            history: 72,
            horizon: 4,
            candidates: 4,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self, n_models: usize) -> Result<()> {
        if self.candidates < 2 || self.candidates > n_models {
            return Err(Error::InvalidConfig(format!(
                "candidates {} must lie in [2, {n_models}]",
                self.candidates
            )));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidConfig("horizon must be at least 1".into()));
        }
        if self.history < self.candidates.max(2) {
            return Err(Error::InvalidConfig(format!(
                "history {} must be at least max(candidates, 2)",
                self.history
            )));
        }
        Ok(())
    }

    /// Agents needed to cover `test_len` steps.
    pub fn agent_count(&self, test_len: usize) -> usize {
        test_len.div_ceil(self.horizon)
    }
}

/// The `count` models with the lowest mean APE over `apes` (steps × models),
/// best first, ties to the lower index.
pub fn preselect<T: Real>(apes: &[Vec<T>], count: usize) -> Result<Vec<usize>> {
    let Some(first) = apes.first() else {
        return Err(Error::InvalidInput("pre-selection window is empty".into()));
    };
    let n = first.len();
    if apes.iter().any(|r| r.len() != n) {
        return Err(Error::InvalidInput("ragged APE matrix".into()));
    }
    if count > n {
        return Err(Error::InvalidInput(format!("cannot pick {count} of {n} models")));
    }
    let mut sums = vec![T::zero(); n];
    for row in apes {
        for (s, &v) in sums.iter_mut().zip(row) {
            if !v.is_finite() {
                return Err(Error::InvalidInput("non-finite APE in pre-selection window".into()));
            }
            *s = *s + v;
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| sums[a].partial_cmp(&sums[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    idx.truncate(count);
    Ok(idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionEntry<T> {
    pub timestamp: NaiveDateTime,
    /// Pool column of the chosen model.
    pub chosen: usize,
    /// Rank of the chosen model among all pool members at this step.
    pub realized_rank: usize,
    pub forecast: T,
    pub actual: T,
    /// Pool columns pre-selected for this step's window, best first.
    pub candidates: Vec<usize>,
    pub agent_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectionLog<T> {
    pub model_ids: Vec<String>,
    pub entries: Vec<SelectionEntry<T>>,
}

impl<T: Real> SelectionLog<T> {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn chosen_ranks(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.realized_rank).collect()
    }

    /// `timestamp,chosen_model,realized_rank,forecast,actual,candidates,agent_index`;
    /// candidates are `;`-separated ids and agents are numbered from 1, as in the curves file.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record([
            "timestamp",
            "chosen_model",
            "realized_rank",
            "forecast",
            "actual",
            "candidates",
            "agent_index",
        ])?;
        for e in &self.entries {
            let cands: Vec<&str> = e.candidates.iter().map(|&c| self.model_ids[c].as_str()).collect();
            w.write_record([
                e.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                self.model_ids[e.chosen].clone(),
                e.realized_rank.to_string(),
                e.forecast.to_string(),
                e.actual.to_string(),
                cands.join(";"),
                (e.agent_index + 1).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a log written by [`SelectionLog::write_csv`]; ids are resolved against `model_ids`.
    pub fn read_csv<R: Read>(r: R, model_ids: &[String]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let lookup = |id: &str, line: usize| {
            model_ids.iter().position(|m| m == id).ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("unknown model `{id}`"),
            })
        };
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line() as usize);
            if rec.len() != 7 {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("expected 7 fields, got {}", rec.len()),
                });
            }
            let bad = |what: &str| Error::MalformedRow {
                line,
                reason: format!("invalid {what}"),
            };
            entries.push(SelectionEntry {
                timestamp: NaiveDateTime::parse_from_str(&rec[0], TIMESTAMP_FORMAT).map_err(|_| bad("timestamp"))?,
                chosen: lookup(&rec[1], line)?,
                realized_rank: rec[2].parse().map_err(|_| bad("rank"))?,
                forecast: T::of(rec[3].parse().map_err(|_| bad("forecast"))?),
                actual: T::of(rec[4].parse().map_err(|_| bad("actual"))?),
                candidates: rec[5].split(';').map(|c| lookup(c, line)).collect::<Result<_>>()?,
                agent_index: rec[6]
                    .parse::<usize>()
                    .ok()
                    .and_then(|k| k.checked_sub(1))
                    .ok_or_else(|| bad("agent index"))?,
            });
        }
        Ok(SelectionLog {
            model_ids: model_ids.to_vec(),
            entries,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmsOutcome<T> {
    /// Chosen model's forecast at each test step.
    pub forecasts: Vec<T>,
    pub log: SelectionLog<T>,
    /// One learning curve per agent, in window order.
    pub curves: Vec<LearningCurve<T>>,
}

impl<T: Real> DmsOutcome<T> {
    pub fn agent_count(&self) -> usize {
        self.curves.len()
    }

    /// `timestamp,forecast,actual,chosen_model`.
    pub fn write_forecast_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(w);
        w.write_record(["timestamp", "forecast", "actual", "chosen_model"])?;
        for e in &self.log.entries {
            w.write_record([
                e.timestamp.format(TIMESTAMP_FORMAT).to_string(),
                e.forecast.to_string(),
                e.actual.to_string(),
                self.log.model_ids[e.chosen].clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// `agent,episode,q_sum`, agents and episodes numbered from 1.
    pub fn write_curves_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "agent,episode,q_sum")?;
        for (k, c) in self.curves.iter().enumerate() {
            for (e, v) in c.values().iter().enumerate() {
                writeln!(w, "{},{},{}", k + 1, e + 1, v)?;
            }
        }
        Ok(())
    }
}

fn agent_seed(seed: u64, k: usize) -> u64 {
    // splitmix64 finalizer over the agent index
    let mut z = seed ^ (k as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Runs the moving-window selection over steps `test_start..fm.len()`, using
/// the `history` steps before each block for pre-selection and training.
pub fn run_dms<T: Real>(
    fm: &ForecastMatrix<T>,
    test_start: usize,
    wc: &WindowConfig,
    ac: &AgentConfig<T>,
) -> Result<DmsOutcome<T>> {
    wc.validate(fm.n_models())?;
    ac.validate()?;
    if test_start < wc.history {
        return Err(Error::TooShort(format!(
            "{} steps of history before the test period, need {}",
            test_start, wc.history
        )));
    }
    if test_start >= fm.len() {
        return Err(Error::TooShort("empty test period".into()));
    }
    let apes: Vec<Vec<T>> = (0..fm.len()).map(|t| fm.apes(t)).collect();
    let ranks: Vec<RankVector> = apes.iter().map(|a| rank_models(a)).collect::<Result<_>>()?;

    let test_len = fm.len() - test_start;
    let n_agents = wc.agent_count(test_len);
    let mut forecasts = Vec::with_capacity(test_len);
    let mut entries = Vec::with_capacity(test_len);
    let mut curves = Vec::with_capacity(n_agents);
    let mut last_pick: Option<usize> = None;

    for k in 0..n_agents {
        let start = test_start + k * wc.horizon;
        let end = (start + wc.horizon).min(fm.len());
        let trailing = &apes[start - wc.history..start];
        let cands = preselect(trailing, wc.candidates)?;
        let window = AgentWindow::from_apes(
            trailing
                .iter()
                .map(|row| cands.iter().map(|&c| row[c]).collect())
                .collect(),
        )?;
        let space = MdpSpace::new(cands.clone())?;
        let cfg = AgentConfig {
            seed: agent_seed(ac.seed, k),
            ..*ac
        };
        let (q, curve) = train_agent(space.clone(), &window, &cfg)?;
        let s0 = last_pick.and_then(|m| space.position(m)).unwrap_or(0);
        for (t, a) in (start..end).zip(apply_policy(&q, s0, end - start)?) {
            let model = space.model(a);
            let f = fm.forecast(t, model);
            forecasts.push(f);
            entries.push(SelectionEntry {
                timestamp: fm.timestamps()[t],
                chosen: model,
                realized_rank: ranks[t].rank(model),
                forecast: f,
                actual: fm.actuals()[t],
                candidates: cands.clone(),
                agent_index: k,
            });
            last_pick = Some(model);
        }
        curves.push(curve);
    }
    Ok(DmsOutcome {
        forecasts,
        log: SelectionLog {
            model_ids: fm.model_ids().to_vec(),
            entries,
        },
        curves,
    })
}
