//! Finite-difference verification of analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::gbm::GbmLoss;
use super::mlp::Mlp;
use super::{ModelFamily, ModelKind, ModelSpec};
use crate::dataio::FeatureMatrix;
use crate::scalar::{mean, std_dev};
use crate::{Error, Real, Result};

/// Central-difference step.
const STEP: f64 = 1e-6;
/// Denominator floor for relative errors of near-zero gradients.
const REL_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientReport {
    pub model_id: String,
    pub checked: usize,
    /// Laplace points within a few steps of the kink.
    pub skipped: usize,
    pub max_abs_error: f64,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub pass: bool,
}

fn rel_error(analytic: f64, numeric: f64) -> (f64, f64) {
    let abs = (analytic - numeric).abs();
    (abs, abs / analytic.abs().max(numeric.abs()).max(REL_FLOOR))
}

fn standardized_targets<T: Real>(rows: &FeatureMatrix<T>) -> Vec<f64> {
    let m = mean(&rows.targets);
    let mut s = std_dev(&rows.targets);
    if !(s > T::zero()) {
        s = T::one();
    }
    rows.targets.iter().map(|&y| ((y - m) / s).as_f64()).collect()
}

/// Compares backprop (MLP) or pseudo-residuals (GBM) with central differences.
///
/// MLP: a randomly initialized network of the smallest configured width on
/// `rows`, every parameter checked. GBM: the loss gradient at each row's
/// standardized target against several offsets of `F`.
pub fn check_gradients<T: Real>(spec: &ModelSpec, rows: &FeatureMatrix<T>, tolerance: f64) -> Result<GradientReport> {
    if rows.is_empty() {
        return Err(Error::InvalidInput("gradient check needs at least one row".into()));
    }
    let z = standardized_targets(rows);
    let mut report = GradientReport {
        model_id: spec.id.clone(),
        checked: 0,
        skipped: 0,
        max_abs_error: 0.0,
        max_rel_error: 0.0,
        tolerance,
        pass: false,
    };
    let mut record = |a: f64, n: f64| {
        let (abs, rel) = rel_error(a, n);
        report.checked += 1;
        report.max_abs_error = report.max_abs_error.max(abs);
        report.max_rel_error = report.max_rel_error.max(rel);
    };
    match spec.family() {
        ModelFamily::Mlp => {
            let width = spec.hyper.mlp.widths.iter().copied().min().unwrap_or(8);
            let x: Vec<Vec<f64>> = rows.rows().map(|r| r.iter().map(|v| v.as_f64()).collect()).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
            let mut net = Mlp::<f64>::random(rows.n_cols(), width, &mut rng);
            let (_, grad) = net.loss_and_grad(x.iter().map(|r| r.as_slice()), &z);
            for k in 0..grad.len() {
                let p0 = net.params[k];
                net.params[k] = p0 + STEP;
                let up = net.loss(x.iter().map(|r| r.as_slice()), &z);
                net.params[k] = p0 - STEP;
                let down = net.loss(x.iter().map(|r| r.as_slice()), &z);
                net.params[k] = p0;
                record(grad[k], (up - down) / (2.0 * STEP));
            }
        }
        ModelFamily::Gbm => {
            let loss = match spec.kind {
                ModelKind::GbmSquared => GbmLoss::Squared,
                ModelKind::GbmLaplace => GbmLoss::Laplace,
                _ => GbmLoss::StudentT { dof: spec.hyper.t_dof },
            };
            for &y in &z {
                for offset in [-2.5, -0.7, 0.3, 1.9] {
                    let f = y + offset;
                    if matches!(loss, GbmLoss::Laplace) && (y - f).abs() < 10.0 * STEP {
                        report.skipped += 1;
                        continue;
                    }
                    let numeric = -(loss.loss(y, f + STEP) - loss.loss(y, f - STEP)) / (2.0 * STEP);
                    record(loss.negative_gradient(y, f), numeric);
                }
            }
        }
        family => {
            return Err(Error::InvalidInput(format!(
                "gradient check applies to MLP and GBM members, not {family:?}"
            )))
        }
    }
    report.pass = report.max_rel_error.is_finite() && report.max_rel_error <= tolerance;
    Ok(report)
}
