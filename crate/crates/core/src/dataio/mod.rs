//! Hourly load and weather ingestion, supervised feature assembly and the
//! seeded synthetic generator used in place of metered campus data.

mod csvio;
mod features;
mod synth;

pub use csvio::{load_dataset, read_dataset, write_dataset, LoadOptions, TIMESTAMP_FORMAT};
pub use features::{
    build_features, FeatureLayout, FeatureMatrix, FeatureSplits, SplitSpec, Standardizer,
    TimeRange, CALENDAR_FEATURES, WEATHER_FEATURES,
};
pub use synth::{generate_synthetic, RegimeInterval, RegimeKind, RegimeSchedule, SynthConfig};

use chrono::NaiveDateTime;
use serde::{Deserialize, Serialize};

/// One hourly record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub timestamp: NaiveDateTime,
    /// kW, strictly positive.
    pub load: f64,
    /// °C
    pub temperature: f64,
    /// %
    pub humidity: f64,
    /// W/m²
    pub ghi: f64,
    /// m/s
    pub wind_speed: f64,
}

impl Observation {
    pub fn weather(&self) -> [f64; 4] {
        [self.temperature, self.humidity, self.ghi, self.wind_speed]
    }
}

/// A gap-free, strictly increasing hourly series.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    observations: Vec<Observation>,
    imputed_hours: usize,
}

impl Dataset {
    /// Wraps observations that already satisfy the hourly-grid contract.
    pub fn from_observations(observations: Vec<Observation>) -> crate::Result<Self> {
        for (i, w) in observations.windows(2).enumerate() {
            if w[1].timestamp - w[0].timestamp != chrono::Duration::hours(1) {
                return Err(crate::Error::InvalidInput(format!(
                    "observations {} and {} are not one hour apart",
                    i,
                    i + 1
                )));
            }
        }
        if let Some(o) = observations.iter().find(|o| !(o.load > 0.0)) {
            return Err(crate::Error::InvalidInput(format!(
                "non-positive load {} at {}",
                o.load, o.timestamp
            )));
        }
        Ok(Dataset {
            observations,
            imputed_hours: 0,
        })
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Number of hours filled in by linear interpolation during ingestion.
    pub fn imputed_hours(&self) -> usize {
        self.imputed_hours
    }

    pub fn start(&self) -> Option<NaiveDateTime> {
        self.observations.first().map(|o| o.timestamp)
    }

    pub fn end(&self) -> Option<NaiveDateTime> {
        self.observations.last().map(|o| o.timestamp)
    }

    pub fn loads(&self) -> Vec<f64> {
        self.observations.iter().map(|o| o.load).collect()
    }

    /// Largest observed load, the default nMAE normalizer.
    pub fn max_load(&self) -> f64 {
        self.observations
            .iter()
            .map(|o| o.load)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean_load(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.observations.iter().map(|o| o.load).sum::<f64>() / self.len() as f64
    }

    /// Position of `ts` on the hourly grid, if inside the series.
    pub fn index_of(&self, ts: NaiveDateTime) -> Option<usize> {
        let start = self.start()?;
        let hours = (ts - start).num_hours();
        if hours < 0 || start + chrono::Duration::hours(hours) != ts {
            return None;
        }
        let idx = hours as usize;
        (idx < self.len()).then_some(idx)
    }
}
