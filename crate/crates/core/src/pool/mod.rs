//! The ten-member forecasting pool behind a uniform train/predict interface.

mod artifact;
pub mod forest;
pub mod gbm;
mod gradcheck;
mod matrix;
pub mod mlp;
pub mod svr;
pub mod tree;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use artifact::{read_pool, write_pool, POOL_FORMAT, POOL_FORMAT_VERSION};
pub use gradcheck::{check_gradients, GradientReport};
pub use matrix::ForecastMatrix;

use crate::dataio::FeatureMatrix;
use crate::metrics::mape;
use crate::{Error, Real, Result};
use forest::{fit_forest, ForestParams, RandomForest};
use gbm::{fit_gbm, Gbm, GbmLoss, GbmParams};
use mlp::{fit_mlp, Mlp, MlpParams, MlpTraining};
use svr::{tune_svr, KernelKind, Svr, SvrParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelFamily {
    Mlp,
    Svr,
    Gbm,
    Rf,
}

/// The ten pool members: family plus the training rule, kernel or loss that
/// distinguishes them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    MlpStandardBp,
    MlpMomentumBp,
    MlpResilientBp,
    SvrRbf,
    SvrLinear,
    SvrPolynomial,
    GbmSquared,
    GbmLaplace,
    GbmStudentT,
    RfCart,
}

impl ModelKind {
    /// Pool order M1..M10.
    pub const ALL: [ModelKind; 10] = [
        ModelKind::MlpStandardBp,
        ModelKind::MlpMomentumBp,
        ModelKind::MlpResilientBp,
        ModelKind::SvrRbf,
        ModelKind::SvrLinear,
        ModelKind::SvrPolynomial,
        ModelKind::GbmSquared,
        ModelKind::GbmLaplace,
        ModelKind::GbmStudentT,
        ModelKind::RfCart,
    ];

    pub fn family(self) -> ModelFamily {
        use ModelKind::*;
        match self {
            MlpStandardBp | MlpMomentumBp | MlpResilientBp => ModelFamily::Mlp,
            SvrRbf | SvrLinear | SvrPolynomial => ModelFamily::Svr,
            GbmSquared | GbmLaplace | GbmStudentT => ModelFamily::Gbm,
            RfCart => ModelFamily::Rf,
        }
    }

    pub fn description(self) -> &'static str {
        use ModelKind::*;
        match self {
            MlpStandardBp => "MLP, standard back-propagation",
            MlpMomentumBp => "MLP, momentum back-propagation",
            MlpResilientBp => "MLP, resilient back-propagation",
            SvrRbf => "SVR, RBF kernel",
            SvrLinear => "SVR, linear kernel",
            SvrPolynomial => "SVR, polynomial kernel",
            GbmSquared => "GBM, squared loss",
            GbmLaplace => "GBM, Laplace loss",
            GbmStudentT => "GBM, t-distribution loss",
            RfCart => "RF, CART aggregation",
        }
    }
}

/// Per-family hyperparameters and tuning grids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    pub mlp: MlpParams,
    pub svr: SvrParams,
    pub gbm: GbmParams,
    /// Degrees of freedom of the t-distribution loss.
    pub t_dof: f64,
    pub rf: ForestParams,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            mlp: MlpParams::default(),
            svr: SvrParams::default(),
            gbm: GbmParams::default(),
            t_dof: 4.0,
            rf: ForestParams::default(),
        }
    }
}

impl Hyperparameters {
    pub fn standard() -> Self {
        Self::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub id: String,
    pub kind: ModelKind,
    pub hyper: Hyperparameters,
}

impl ModelSpec {
    pub fn new(id: impl Into<String>, kind: ModelKind, hyper: Hyperparameters) -> Self {
        ModelSpec {
            id: id.into(),
            kind,
            hyper,
        }
    }

    pub fn family(&self) -> ModelFamily {
        self.kind.family()
    }

    /// M1..M10 with shared hyperparameters.
    pub fn default_pool(hyper: &Hyperparameters) -> Vec<ModelSpec> {
        ModelKind::ALL
            .iter()
            .enumerate()
            .map(|(i, &k)| ModelSpec::new(format!("M{}", i + 1), k, hyper.clone()))
            .collect()
    }
}

/// Learned parameters of one member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family")]
pub enum Learned<T> {
    Mlp(Mlp<T>),
    Svr(Svr<T>),
    Gbm(Gbm<T>),
    Rf(RandomForest<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    /// Epochs, SMO iterations, boosting stages or trees.
    pub iterations: usize,
    pub train_loss: f64,
    pub valid_mape: f64,
    /// Hyperparameters picked on validation.
    pub selected: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel<T> {
    pub spec: ModelSpec,
    pub n_features: usize,
    pub learned: Learned<T>,
    pub meta: TrainingMeta,
}

impl<T: Real> TrainedModel<T> {
    pub fn id(&self) -> &str {
        &self.spec.id
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        match &self.learned {
            Learned::Mlp(m) => m.predict_row(x),
            Learned::Svr(m) => m.predict_row(x),
            Learned::Gbm(m) => m.predict_row(x),
            Learned::Rf(m) => m.predict_row(x),
        }
    }

    /// One finite forecast (kW) per row.
    pub fn predict(&self, rows: &FeatureMatrix<T>) -> Result<Vec<T>> {
        if rows.n_cols() != self.n_features && !rows.is_empty() {
            return Err(Error::SchemaMismatch {
                expected: self.n_features,
                got: rows.n_cols(),
            });
        }
        let out: Vec<T> = rows.rows().map(|x| self.predict_row(x)).collect();
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Model {
                model: self.spec.id.clone(),
                source: Box::new(Error::Diverged(format!("non-finite forecast at row {i}"))),
            });
        }
        Ok(out)
    }
}

fn train_loss_mse<T: Real>(pred: &[T], y: &[T]) -> f64 {
    let n = y.len().max(1) as f64;
    pred.iter()
        .zip(y)
        .map(|(&p, &t)| (p - t).as_f64().powi(2))
        .sum::<f64>()
        / n
}

/// Trains one member, tuning its grid on `valid`.
pub fn train_model<T: Real>(
    spec: &ModelSpec,
    train: &FeatureMatrix<T>,
    valid: &FeatureMatrix<T>,
    seed: u64,
) -> Result<TrainedModel<T>> {
    if train.is_empty() || valid.is_empty() {
        return Err(Error::InvalidInput("training and validation splits must be non-empty".into()));
    }
    if train.n_cols() != valid.n_cols() {
        return Err(Error::SchemaMismatch {
            expected: train.n_cols(),
            got: valid.n_cols(),
        });
    }
    let h = &spec.hyper;
    let mut selected = BTreeMap::new();
    let (learned, iterations, valid_mape) = match spec.kind.family() {
        ModelFamily::Mlp => {
            let rule = match spec.kind {
                ModelKind::MlpStandardBp => h.mlp.standard(),
                ModelKind::MlpMomentumBp => h.mlp.with_momentum(),
                _ => h.mlp.resilient(),
            };
            let mut best: Option<(mlp::MlpFit<T>, usize)> = None;
            for (k, &width) in h.mlp.widths.iter().enumerate() {
                let fit = fit_mlp(train, valid, rule, width, h.mlp.epochs, h.mlp.eval_every, seed.wrapping_add(k as u64))?;
                if best.as_ref().is_none_or(|(b, _)| fit.valid_mape < b.valid_mape) {
                    best = Some((fit, width));
                }
            }
            let (fit, width) = best.ok_or_else(|| Error::InvalidConfig("empty MLP width grid".into()))?;
            selected.insert("width".into(), width as f64);
            selected.insert("best_epoch".into(), fit.best_epoch as f64);
            if let MlpTraining::Standard { learning_rate } | MlpTraining::Momentum { learning_rate, .. } = rule {
                selected.insert("learning_rate".into(), learning_rate);
            }
            (Learned::Mlp(fit.model), fit.epochs_run, fit.valid_mape)
        }
        ModelFamily::Svr => {
            let kind = match spec.kind {
                ModelKind::SvrRbf => KernelKind::Rbf,
                ModelKind::SvrLinear => KernelKind::Linear,
                _ => KernelKind::Polynomial,
            };
            let fit = tune_svr(train, valid, kind, &h.svr)?;
            selected.insert("c".into(), fit.c);
            selected.insert("epsilon".into(), fit.epsilon);
            selected.insert("support_vectors".into(), fit.model.coef.len() as f64);
            (Learned::Svr(fit.model), fit.iterations, fit.valid_mape)
        }
        ModelFamily::Gbm => {
            let loss = match spec.kind {
                ModelKind::GbmSquared => GbmLoss::Squared,
                ModelKind::GbmLaplace => GbmLoss::Laplace,
                _ => GbmLoss::StudentT { dof: h.t_dof },
            };
            let fit = fit_gbm(train, valid, loss, &h.gbm)?;
            selected.insert("stages".into(), fit.stages as f64);
            (Learned::Gbm(fit.model), fit.stages, fit.valid_mape)
        }
        ModelFamily::Rf => {
            let rf = fit_forest(train, &h.rf, seed)?;
            let pred: Vec<T> = valid.rows().map(|x| rf.predict_row(x)).collect();
            let m = mape(&pred, &valid.targets)?;
            selected.insert("trees".into(), rf.trees.len() as f64);
            let n = rf.trees.len();
            (Learned::Rf(rf), n, m)
        }
    };
    let mut model = TrainedModel {
        spec: spec.clone(),
        n_features: train.n_cols(),
        learned,
        meta: TrainingMeta {
            iterations,
            train_loss: 0.0,
            valid_mape: valid_mape.as_f64(),
            selected,
        },
    };
    let fitted = model.predict(train)?;
    model.meta.train_loss = train_loss_mse(&fitted, &train.targets);
    if !valid_mape.is_finite() {
        return Err(Error::Diverged(format!("validation MAPE {valid_mape}")));
    }
    Ok(model)
}

/// Ordered collection of trained members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelPool<T> {
    pub models: Vec<TrainedModel<T>>,
}

impl<T: Real> ModelPool<T> {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.models.iter().map(|m| m.spec.id.clone()).collect()
    }

    /// `(id, validation MAPE %)` per member.
    pub fn validation_mapes(&self) -> Vec<(String, f64)> {
        self.models
            .iter()
            .map(|m| (m.spec.id.clone(), m.meta.valid_mape))
            .collect()
    }
}

fn member_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add((k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Trains every spec (in parallel); fails if any member fails.
pub fn train_pool<T: Real>(
    specs: &[ModelSpec],
    train: &FeatureMatrix<T>,
    valid: &FeatureMatrix<T>,
    seed: u64,
) -> Result<ModelPool<T>> {
    if specs.is_empty() {
        return Err(Error::InvalidConfig("no model specs".into()));
    }
    for (i, s) in specs.iter().enumerate() {
        if specs[..i].iter().any(|o| o.id == s.id) {
            return Err(Error::InvalidConfig(format!("duplicate model id {}", s.id)));
        }
    }
    let models = specs
        .par_iter()
        .enumerate()
        .map(|(k, spec)| {
            train_model(spec, train, valid, member_seed(seed, k)).map_err(|e| Error::Model {
                model: spec.id.clone(),
                source: Box::new(e),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ModelPool { models })
}

/// Forecasts of every member for every row, columns in pool order.
pub fn forecast_matrix<T: Real>(pool: &ModelPool<T>, rows: &FeatureMatrix<T>) -> Result<ForecastMatrix<T>> {
    let columns = pool
        .models
        .par_iter()
        .map(|m| m.predict(rows))
        .collect::<Result<Vec<_>>>()?;
    let t = rows.n_rows();
    let forecasts = (0..t)
        .map(|i| columns.iter().map(|c| c[i]).collect())
        .collect();
    ForecastMatrix::new(rows.timestamps.clone(), rows.targets.clone(), forecasts, pool.ids())
}
