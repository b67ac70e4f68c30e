//! Short-term load forecasting with Q-learning based dynamic model selection.
//!
//! A pool of ten forecasters (three MLPs, three SVRs, three GBMs and a random
//! forest) produces competing one-hour-ahead forecasts. Per moving window, a
//! tabular Q-learning agent learns a model-switching policy from rank
//! improvements and picks which forecaster to trust at each step.
//!
//! Numeric code is generic over [`Real`]; the `*64` aliases below fix it to `f64`.

pub mod backtest;
pub mod dataio;
mod error;
pub mod metrics;
pub mod pool;
pub mod qdms;
mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type FeatureMatrix64 = dataio::FeatureMatrix<f64>;
pub type ForecastMatrix64 = pool::ForecastMatrix<f64>;
pub type ModelPool64 = pool::ModelPool<f64>;
pub type TrainedModel64 = pool::TrainedModel<f64>;
pub type QTable64 = qdms::QTable<f64>;
pub type AgentConfig64 = qdms::AgentConfig<f64>;
