//! Single-hidden-layer perceptron (tanh hidden units, linear output) trained
//! full-batch by plain gradient descent, momentum or Rprop.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::FeatureMatrix;
use crate::metrics::mape;
use crate::scalar::{mean, std_dev};
use crate::{Error, Real, Result};

/// Weight-update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum MlpTraining {
    Standard {
        learning_rate: f64,
    },
    Momentum {
        learning_rate: f64,
        momentum: f64,
    },
    /// iRprop-: per-weight step sizes adapted on gradient sign agreement.
    Resilient {
        eta_plus: f64,
        eta_minus: f64,
        delta0: f64,
        delta_min: f64,
        delta_max: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    /// Hidden widths tried; the best on validation MAPE is kept.
    pub widths: Vec<usize>,
    pub epochs: usize,
    /// Validation is scored every this many epochs.
    pub eval_every: usize,
    pub gd_learning_rate: f64,
    pub momentum_learning_rate: f64,
    pub momentum: f64,
    pub rprop_eta_plus: f64,
    pub rprop_eta_minus: f64,
    pub rprop_delta0: f64,
    pub rprop_delta_min: f64,
    pub rprop_delta_max: f64,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            widths: vec![8, 16, 32],
            epochs: 300,
            eval_every: 10,
            gd_learning_rate: 0.05,
            momentum_learning_rate: 0.01,
            momentum: 0.9,
            rprop_eta_plus: 1.2,
            rprop_eta_minus: 0.5,
            rprop_delta0: 0.1,
            rprop_delta_min: 1e-6,
            rprop_delta_max: 50.0,
        }
    }
}

impl MlpParams {
    pub fn standard(&self) -> MlpTraining {
        MlpTraining::Standard {
            learning_rate: self.gd_learning_rate,
        }
    }

    pub fn with_momentum(&self) -> MlpTraining {
        MlpTraining::Momentum {
            learning_rate: self.momentum_learning_rate,
            momentum: self.momentum,
        }
    }

    pub fn resilient(&self) -> MlpTraining {
        MlpTraining::Resilient {
            eta_plus: self.rprop_eta_plus,
            eta_minus: self.rprop_eta_minus,
            delta0: self.rprop_delta0,
            delta_min: self.rprop_delta_min,
            delta_max: self.rprop_delta_max,
        }
    }
}

/// Network parameters stored flat as `[w1 (hidden x inputs), b1, w2, b2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    pub n_inputs: usize,
    pub n_hidden: usize,
    pub params: Vec<T>,
    /// Output de-standardization.
    pub y_mean: T,
    pub y_std: T,
}

impl<T: Real> Mlp<T> {
    pub fn param_count(n_inputs: usize, n_hidden: usize) -> usize {
        n_hidden * n_inputs + 2 * n_hidden + 1
    }

    /// All-zero network with identity output scaling.
    pub fn zeros(n_inputs: usize, n_hidden: usize) -> Self {
        Mlp {
            n_inputs,
            n_hidden,
            params: vec![T::zero(); Self::param_count(n_inputs, n_hidden)],
            y_mean: T::zero(),
            y_std: T::one(),
        }
    }

    /// Uniform initialization in `±1/sqrt(fan_in)`.
    pub fn random<R: Rng>(n_inputs: usize, n_hidden: usize, rng: &mut R) -> Self {
        let mut m = Self::zeros(n_inputs, n_hidden);
        let b_in = 1.0 / (n_inputs.max(1) as f64).sqrt();
        let b_out = 1.0 / (n_hidden.max(1) as f64).sqrt();
        let w1 = n_hidden * n_inputs;
        for (k, p) in m.params.iter_mut().enumerate() {
            let bound = if k < w1 + n_hidden { b_in } else { b_out };
            *p = T::of(rng.random_range(-bound..bound));
        }
        m
    }

    fn offsets(&self) -> (usize, usize, usize) {
        let w1 = self.n_hidden * self.n_inputs;
        (w1, w1 + self.n_hidden, w1 + 2 * self.n_hidden)
    }

    /// Standardized-scale output.
    pub fn forward(&self, x: &[T]) -> T {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut out = p[b2];
        for j in 0..self.n_hidden {
            let w = &p[j * self.n_inputs..(j + 1) * self.n_inputs];
            let a = w.iter().zip(x).fold(p[b1 + j], |s, (&wi, &xi)| s + wi * xi);
            out = out + p[w2 + j] * a.tanh();
        }
        out
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        self.y_mean + self.y_std * self.forward(x)
    }

    /// Mean of `(out - z)^2 / 2` and its gradient with respect to `params`.
    pub fn loss_and_grad<'a>(
        &self,
        rows: impl Iterator<Item = &'a [T]>,
        z: &[T],
    ) -> (T, Vec<T>) {
        let (b1, w2, b2) = self.offsets();
        let p = &self.params;
        let ni = self.n_inputs;
        let mut grad = vec![T::zero(); p.len()];
        let mut hidden = vec![T::zero(); self.n_hidden];
        let mut loss = T::zero();
        let mut n = 0usize;
        for (x, &zi) in rows.zip(z) {
            n += 1;
            let mut out = p[b2];
            for j in 0..self.n_hidden {
                let w = &p[j * ni..(j + 1) * ni];
                let a = w.iter().zip(x).fold(p[b1 + j], |s, (&wi, &xi)| s + wi * xi);
                hidden[j] = a.tanh();
                out = out + p[w2 + j] * hidden[j];
            }
            let d = out - zi;
            loss = loss + d * d / T::of(2.0);
            grad[b2] = grad[b2] + d;
            for j in 0..self.n_hidden {
                let h = hidden[j];
                grad[w2 + j] = grad[w2 + j] + d * h;
                let delta = d * p[w2 + j] * (T::one() - h * h);
                grad[b1 + j] = grad[b1 + j] + delta;
                let g = &mut grad[j * ni..(j + 1) * ni];
                for (gi, &xi) in g.iter_mut().zip(x) {
                    *gi = *gi + delta * xi;
                }
            }
        }
        let inv = T::one() / T::of_usize(n.max(1));
        grad.iter_mut().for_each(|g| *g = *g * inv);
        (loss * inv, grad)
    }

    pub fn loss<'a>(&self, rows: impl Iterator<Item = &'a [T]>, z: &[T]) -> T {
        let mut s = T::zero();
        let mut n = 0usize;
        for (x, &zi) in rows.zip(z) {
            let d = self.forward(x) - zi;
            s = s + d * d / T::of(2.0);
            n += 1;
        }
        s / T::of_usize(n.max(1))
    }
}

pub struct MlpFit<T> {
    pub model: Mlp<T>,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub train_loss: T,
    pub valid_mape: T,
}

fn signum<T: Real>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Trains one network of the given width, keeping the weights with the best
/// validation MAPE among the periodic checkpoints.
pub fn fit_mlp<T: Real>(
    train: &FeatureMatrix<T>,
    valid: &FeatureMatrix<T>,
    training: MlpTraining,
    n_hidden: usize,
    epochs: usize,
    eval_every: usize,
    seed: u64,
) -> Result<MlpFit<T>> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let y_mean = mean(&train.targets);
    let mut y_std = std_dev(&train.targets);
    if !(y_std > T::zero()) {
        y_std = T::one();
    }
    let z: Vec<T> = train.targets.iter().map(|&y| (y - y_mean) / y_std).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::random(train.n_cols(), n_hidden, &mut rng);
    net.y_mean = y_mean;
    net.y_std = y_std;

    let np = net.params.len();
    let mut velocity = vec![T::zero(); np];
    let mut step = vec![T::zero(); np];
    let mut prev_grad = vec![T::zero(); np];
    if let MlpTraining::Resilient { delta0, .. } = training {
        step.iter_mut().for_each(|s| *s = T::of(delta0));
    }

    let score = |net: &Mlp<T>| -> Result<T> {
        if valid.is_empty() {
            return Ok(T::zero());
        }
        let pred: Vec<T> = valid.rows().map(|x| net.predict_row(x)).collect();
        mape(&pred, &valid.targets)
    };
    let eval_every = eval_every.max(1);
    let mut best = (net.clone(), 0usize, score(&net)?);
    let mut last_loss = T::zero();

    for epoch in 1..=epochs {
        let (loss, grad) = net.loss_and_grad(train.rows(), &z);
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged(format!("MLP loss {loss} at epoch {epoch}")));
        }
        last_loss = loss;
        match training {
            MlpTraining::Standard { learning_rate } => {
                let lr = T::of(learning_rate);
                for (p, g) in net.params.iter_mut().zip(&grad) {
                    *p = *p - lr * *g;
                }
            }
            MlpTraining::Momentum { learning_rate, momentum } => {
                let (lr, mu) = (T::of(learning_rate), T::of(momentum));
                for ((p, v), g) in net.params.iter_mut().zip(velocity.iter_mut()).zip(&grad) {
                    *v = mu * *v - lr * *g;
                    *p = *p + *v;
                }
            }
            MlpTraining::Resilient {
                eta_plus,
                eta_minus,
                delta_min,
                delta_max,
                ..
            } => {
                let (up, down) = (T::of(eta_plus), T::of(eta_minus));
                let (lo, hi) = (T::of(delta_min), T::of(delta_max));
                for k in 0..np {
                    let mut g = grad[k];
                    let agree = prev_grad[k] * g;
                    if agree > T::zero() {
                        step[k] = (step[k] * up).min(hi);
                    } else if agree < T::zero() {
                        step[k] = (step[k] * down).max(lo);
                        g = T::zero();
                    }
                    net.params[k] = net.params[k] - signum(g) * step[k];
                    prev_grad[k] = g;
                }
            }
        }
        if net.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Diverged(format!("non-finite MLP weight at epoch {epoch}")));
        }
        if epoch % eval_every == 0 || epoch == epochs {
            let m = score(&net)?;
            if m < best.2 {
                best = (net.clone(), epoch, m);
            }
        }
    }

    let (model, best_epoch, valid_mape) = best;
    Ok(MlpFit {
        model,
        epochs_run: epochs,
        best_epoch,
        train_loss: last_loss,
        valid_mape,
    })
}
