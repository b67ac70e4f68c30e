//! Gradient boosting with depth-limited regression trees.
//!
//! Targets are standardized internally; all losses act on the standardized
//! residual `u = z - F`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow_tree, RegressionTree, SortedColumns, TreeParams};
use crate::dataio::FeatureMatrix;
use crate::metrics::mape;
use crate::scalar::{mean, median, std_dev};
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum GbmLoss {
    /// `(y - F)^2 / 2`
    Squared,
    /// `|y - F|`
    Laplace,
    /// Negative log-likelihood of a Student-t residual with `dof` degrees of freedom,
    /// `(dof + 1)/2 * ln(1 + (y - F)^2 / dof)`.
    StudentT { dof: f64 },
}

impl GbmLoss {
    pub fn loss<T: Real>(&self, y: T, f: T) -> T {
        let u = y - f;
        match *self {
            GbmLoss::Squared => u * u / T::of(2.0),
            GbmLoss::Laplace => u.abs(),
            GbmLoss::StudentT { dof } => {
                let nu = T::of(dof);
                (nu + T::one()) / T::of(2.0) * (T::one() + u * u / nu).ln()
            }
        }
    }

    /// Pseudo-residual `-dL/dF`.
    pub fn negative_gradient<T: Real>(&self, y: T, f: T) -> T {
        let u = y - f;
        match *self {
            GbmLoss::Squared => u,
            GbmLoss::Laplace => {
                if u > T::zero() {
                    T::one()
                } else if u < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                }
            }
            GbmLoss::StudentT { dof } => {
                let nu = T::of(dof);
                (nu + T::one()) * u / (nu + u * u)
            }
        }
    }

    fn initial<T: Real>(&self, z: &[T]) -> T {
        match self {
            GbmLoss::Squared => mean(z),
            GbmLoss::Laplace | GbmLoss::StudentT { .. } => median(z),
        }
    }

    /// Step for one leaf given the residuals `u = z - F` of its samples.
    ///
    /// Squared: mean residual. Laplace: median residual. Student-t: one
    /// reweighted least-squares step with weights `(dof+1)/(dof+u^2)`, the
    /// minimizer of a quadratic majorizer of the loss, so any shrunken step
    /// cannot increase the leaf loss.
    fn leaf_value<T: Real>(&self, u: &[T]) -> T {
        match *self {
            GbmLoss::Squared => mean(u),
            GbmLoss::Laplace => median(u),
            GbmLoss::StudentT { dof } => {
                let nu = T::of(dof);
                let (mut num, mut den) = (T::zero(), T::zero());
                for &r in u {
                    let w = (nu + T::one()) / (nu + r * r);
                    num = num + w * r;
                    den = den + w;
                }
                if den > T::zero() {
                    num / den
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbmParams {
    pub max_depth: usize,
    pub shrinkage: f64,
    /// Upper bound on boosting stages; the count is tuned on validation MAPE.
    pub max_stages: usize,
    pub min_samples_leaf: usize,
}

impl Default for GbmParams {
    fn default() -> Self {
        GbmParams {
            max_depth: 3,
            shrinkage: 0.1,
            max_stages: 500,
            min_samples_leaf: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbm<T> {
    pub loss: GbmLoss,
    pub init: T,
    pub shrinkage: T,
    pub trees: Vec<RegressionTree<T>>,
    pub y_mean: T,
    pub y_std: T,
}

impl<T: Real> Gbm<T> {
    /// Raw (standardized) ensemble output.
    fn score(&self, x: &[T]) -> T {
        self.trees
            .iter()
            .fold(self.init, |f, t| f + self.shrinkage * t.predict_row(x))
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        self.y_mean + self.y_std * self.score(x)
    }
}

pub struct GbmFit<T> {
    pub model: Gbm<T>,
    /// Mean training loss after the initial constant and after every stage grown.
    pub stage_losses: Vec<T>,
    pub stages: usize,
    pub valid_mape: T,
}

pub fn fit_gbm<T: Real>(
    train: &FeatureMatrix<T>,
    valid: &FeatureMatrix<T>,
    loss: GbmLoss,
    params: &GbmParams,
) -> Result<GbmFit<T>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    if !(params.shrinkage > 0.0) {
        return Err(Error::InvalidConfig("shrinkage must be positive".into()));
    }
    let n = train.n_rows();
    let y_mean = mean(&train.targets);
    let mut y_std = std_dev(&train.targets);
    if !(y_std > T::zero()) {
        y_std = T::one();
    }
    let z: Vec<T> = train.targets.iter().map(|&y| (y - y_mean) / y_std).collect();
    let init = loss.initial(&z);
    let shrinkage = T::of(params.shrinkage);
    let data = SortedColumns::new(train.rows(), train.n_cols());
    let slots: Vec<usize> = (0..n).collect();
    let tree_params = TreeParams {
        max_depth: Some(params.max_depth),
        min_samples_leaf: params.min_samples_leaf,
        max_features: None,
    };
    // trees use every feature, so the rng is never drawn from
    let mut rng = ChaCha8Rng::seed_from_u64(0);

    let mut f = vec![init; n];
    let mut fv = vec![init; valid.n_rows()];
    let mean_loss = |f: &[T]| -> T {
        z.iter().zip(f).map(|(&zi, &fi)| loss.loss(zi, fi)).sum::<T>() / T::of_usize(n)
    };
    let valid_mape = |fv: &[T]| -> Result<T> {
        let pred: Vec<T> = fv.iter().map(|&s| y_mean + y_std * s).collect();
        mape(&pred, &valid.targets)
    };

    let mut trees = Vec::with_capacity(params.max_stages);
    let mut stage_losses = vec![mean_loss(&f)];
    let mut best = (0usize, if valid.is_empty() { T::zero() } else { valid_mape(&fv)? });
    let mut u = vec![T::zero(); n];
    let mut g = vec![T::zero(); n];

    for stage in 1..=params.max_stages {
        for i in 0..n {
            u[i] = z[i] - f[i];
            g[i] = loss.negative_gradient(z[i], f[i]);
        }
        let fitted = grow_tree(&data, &slots, &g, tree_params, &mut rng);
        let mut tree = fitted.tree;
        let leaves: Vec<usize> = tree.leaves().collect();
        let mut members: Vec<Vec<T>> = vec![Vec::new(); tree.nodes().len()];
        for (s, &leaf) in fitted.leaf_of_slot.iter().enumerate() {
            members[leaf].push(u[s]);
        }
        for k in leaves {
            tree.set_leaf(k, loss.leaf_value(&members[k]));
        }
        for (i, fi) in f.iter_mut().enumerate() {
            *fi = *fi + shrinkage * tree.predict_row(train.row(i));
        }
        for (i, fi) in fv.iter_mut().enumerate() {
            *fi = *fi + shrinkage * tree.predict_row(valid.row(i));
        }
        let l = mean_loss(&f);
        if !l.is_finite() {
            return Err(Error::Diverged(format!("GBM training loss became {l} at stage {stage}")));
        }
        stage_losses.push(l);
        trees.push(tree);
        if !valid.is_empty() {
            let m = valid_mape(&fv)?;
            if m < best.1 {
                best = (stage, m);
            }
        } else {
            best = (stage, T::zero());
        }
    }

    trees.truncate(best.0);
    Ok(GbmFit {
        model: Gbm {
            loss,
            init,
            shrinkage,
            trees,
            y_mean,
            y_std,
        },
        stage_losses,
        stages: best.0,
        valid_mape: best.1,
    })
}
