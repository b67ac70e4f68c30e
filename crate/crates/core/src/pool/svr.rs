//! ε-insensitive support vector regression trained by sequential minimal
//! optimization.
//!
//! The dual is posed over `2n` variables `(α, α*)` with labels `±1`:
//!
//! ```text
//! min  ½ aᵀQa + pᵀa   s.t.  yᵀa = 0,  0 ≤ a ≤ C
//! Q_ij = y_i y_j K(x_{i mod n}, x_{j mod n}),  p = (ε - t, ε + t)
//! ```
//!
//! Each iteration picks the maximal-violating first index and a second index
//! by the second-order gain rule, solves the two-variable subproblem in
//! closed form, and updates the gradient.

use serde::{Deserialize, Serialize};

use crate::dataio::FeatureMatrix;
use crate::scalar::{mean, median, std_dev};
use crate::{Error, Real, Result};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Kernel<T> {
    /// `exp(-gamma ‖u - v‖²)`, `gamma = 1 / (2σ²)`.
    Rbf { gamma: T },
    /// `⟨u, v⟩`
    Linear,
    /// `(scale ⟨u, v⟩ + 1)^degree`
    Polynomial { degree: i32, scale: T },
}

impl<T: Real> Kernel<T> {
    pub fn eval(&self, u: &[T], v: &[T]) -> T {
        match *self {
            Kernel::Rbf { gamma } => {
                let d2 = u.iter().zip(v).fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
                (-gamma * d2).exp()
            }
            Kernel::Linear => dot(u, v),
            Kernel::Polynomial { degree, scale } => (scale * dot(u, v) + T::one()).powi(degree),
        }
    }
}

fn dot<T: Real>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |s, (&a, &b)| s + a * b)
}

/// Median pairwise Euclidean distance over (at most the first 400 of) `rows`.
pub fn median_pairwise_distance<T: Real>(rows: &[&[T]]) -> T {
    let m = rows.len().min(400);
    let mut d = Vec::with_capacity(m * m.saturating_sub(1) / 2);
    for i in 0..m {
        for j in i + 1..m {
            let s = rows[i]
                .iter()
                .zip(rows[j])
                .fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
            d.push(s.sqrt());
        }
    }
    let med = median(&d);
    if med > T::zero() {
        med
    } else {
        T::one()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoParams<T> {
    pub c: T,
    pub epsilon: T,
    /// Stop when the maximal KKT violation drops below this.
    pub tolerance: T,
    pub max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoSolution<T> {
    /// `α_i - α*_i` per training point.
    pub coef: Vec<T>,
    pub bias: T,
    pub iterations: usize,
    /// Maximal KKT violation `m(a) - M(a)` at termination.
    pub violation: T,
}

struct Smo<'a, T> {
    k: &'a [T],
    diag: Vec<T>,
    n: usize,
    c: T,
    alpha: Vec<T>,
    grad: Vec<T>,
}

impl<'a, T: Real> Smo<'a, T> {
    fn y(&self, t: usize) -> T {
        if t < self.n {
            T::one()
        } else {
            -T::one()
        }
    }

    fn q(&self, i: usize, j: usize) -> T {
        let kij = self.k[(i % self.n) * self.n + (j % self.n)];
        if (i < self.n) == (j < self.n) {
            kij
        } else {
            -kij
        }
    }

    fn upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn lower(&self, t: usize) -> bool {
        self.alpha[t] <= T::zero()
    }

    /// `(m(a), M(a))`: the largest `-y G` over the up set and smallest over the low set.
    fn extremes(&self) -> (T, T) {
        let mut gmax = T::neg_infinity();
        let mut gmin = T::infinity();
        for t in 0..2 * self.n {
            let v = -self.y(t) * self.grad[t];
            let up = if self.y(t) > T::zero() { !self.upper(t) } else { !self.lower(t) };
            let low = if self.y(t) > T::zero() { !self.lower(t) } else { !self.upper(t) };
            if up && v > gmax {
                gmax = v;
            }
            if low && v < gmin {
                gmin = v;
            }
        }
        (gmax, gmin)
    }

    fn select(&self, tol: T) -> Option<(usize, usize, T)> {
        let n = self.n;
        let (c, zero) = (self.c, T::zero());
        let (g_pos, g_neg) = self.grad.split_at(n);
        let (a_pos, a_neg) = self.alpha.split_at(n);
        let mut gmax = T::neg_infinity();
        let mut i = None;
        for t in 0..n {
            if a_pos[t] < c && -g_pos[t] >= gmax {
                gmax = -g_pos[t];
                i = Some(t);
            }
        }
        for t in 0..n {
            if a_neg[t] > zero && g_neg[t] >= gmax {
                gmax = g_neg[t];
                i = Some(t + n);
            }
        }
        let i = i?;
        let qii = self.diag[i % n];
        let ki = &self.k[(i % n) * n..(i % n + 1) * n];
        let (two, tau) = (T::of(2.0), T::of(TAU));
        let mut gmax2 = T::neg_infinity();
        let mut j = None;
        let mut best_obj = T::infinity();
        // y_i y_t Q_it = K_it in both halves, so the curvature is the same expression
        let mut consider = |t: usize, diff: T, kit: T, qtt: T| {
            if diff > zero {
                let mut quad = qii + qtt - two * kit;
                if quad <= zero {
                    quad = tau;
                }
                let obj = -(diff * diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j = Some(t);
                }
            }
        };
        for t in 0..n {
            if a_pos[t] > zero {
                if g_pos[t] >= gmax2 {
                    gmax2 = g_pos[t];
                }
                consider(t, gmax + g_pos[t], ki[t], self.diag[t]);
            }
        }
        for t in 0..n {
            if a_neg[t] < c {
                if -g_neg[t] >= gmax2 {
                    gmax2 = -g_neg[t];
                }
                consider(t + n, gmax - g_neg[t], ki[t], self.diag[t]);
            }
        }
        let violation = gmax + gmax2;
        if violation < tol {
            return None;
        }
        j.map(|j| (i, j, violation))
    }

    fn step(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (yi, yj) = (self.y(i), self.y(j));
        let (qii, qjj, qij) = (self.q(i, i), self.q(j, j), self.q(i, j));
        let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
        let (mut ai, mut aj) = (old_i, old_j);
        if yi != yj {
            let mut quad = qii + qjj + T::of(2.0) * qij;
            if quad <= T::zero() {
                quad = T::of(TAU);
            }
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = ai - aj;
            ai = ai + delta;
            aj = aj + delta;
            if diff > T::zero() {
                if aj < T::zero() {
                    aj = T::zero();
                    ai = diff;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = -diff;
            }
            if diff > T::zero() {
                if ai > c {
                    ai = c;
                    aj = c - diff;
                }
            } else if aj > c {
                aj = c;
                ai = c + diff;
            }
        } else {
            let mut quad = qii + qjj - T::of(2.0) * qij;
            if quad <= T::zero() {
                quad = T::of(TAU);
            }
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = ai + aj;
            ai = ai - delta;
            aj = aj + delta;
            if sum > c {
                if ai > c {
                    ai = c;
                    aj = sum - c;
                }
            } else if aj < T::zero() {
                aj = T::zero();
                ai = sum;
            }
            if sum > c {
                if aj > c {
                    aj = c;
                    ai = sum - c;
                }
            } else if ai < T::zero() {
                ai = T::zero();
                aj = sum;
            }
        }
        self.alpha[i] = ai;
        self.alpha[j] = aj;
        let n = self.n;
        // Q_it = y_i K_it for t < n and -y_i K_it otherwise
        let (ci, cj) = (yi * (ai - old_i), yj * (aj - old_j));
        let ki = &self.k[(i % n) * n..(i % n + 1) * n];
        let kj = &self.k[(j % n) * n..(j % n + 1) * n];
        let (lo, hi) = self.grad.split_at_mut(n);
        for t in 0..n {
            let d = ki[t] * ci + kj[t] * cj;
            lo[t] = lo[t] + d;
            hi[t] = hi[t] - d;
        }
    }

    fn rho(&self) -> T {
        let (mut ub, mut lb) = (T::infinity(), T::neg_infinity());
        let (mut n_free, mut sum_free) = (0usize, T::zero());
        for t in 0..2 * self.n {
            let y = self.y(t);
            let yg = y * self.grad[t];
            if self.upper(t) {
                if y < T::zero() {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.lower(t) {
                if y > T::zero() {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                n_free += 1;
                sum_free = sum_free + yg;
            }
        }
        if n_free > 0 {
            sum_free / T::of_usize(n_free)
        } else {
            (ub + lb) / T::of(2.0)
        }
    }
}

/// Solves the ε-SVR dual for a precomputed `n × n` kernel matrix (row-major).
pub fn solve_smo<T: Real>(kernel: &[T], targets: &[T], params: &SmoParams<T>) -> Result<SmoSolution<T>> {
    let n = targets.len();
    if kernel.len() != n * n {
        return Err(Error::InvalidInput(format!("kernel matrix must be {n}x{n}")));
    }
    if !(params.c > T::zero()) || !(params.epsilon >= T::zero()) {
        return Err(Error::InvalidConfig("SVR needs C > 0 and epsilon >= 0".into()));
    }
    let mut grad = Vec::with_capacity(2 * n);
    grad.extend(targets.iter().map(|&t| params.epsilon - t));
    grad.extend(targets.iter().map(|&t| params.epsilon + t));
    let mut smo = Smo {
        k: kernel,
        diag: (0..n).map(|i| kernel[i * n + i]).collect(),
        n,
        c: params.c,
        alpha: vec![T::zero(); 2 * n],
        grad,
    };
    let mut iterations = 0;
    while let Some((i, j, violation)) = smo.select(params.tolerance) {
        if iterations >= params.max_iterations {
            return Err(Error::SmoNotConverged {
                iterations,
                violation: violation.as_f64(),
            });
        }
        smo.step(i, j);
        iterations += 1;
    }
    let (m_up, m_low) = smo.extremes();
    let violation = (m_up - m_low).max(T::zero());
    let bias = -smo.rho();
    let coef = (0..n).map(|t| smo.alpha[t] - smo.alpha[t + n]).collect();
    Ok(SmoSolution {
        coef,
        bias,
        iterations,
        violation,
    })
}

/// Kernel choice of a pool member; concrete parameters are fitted from data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    Rbf,
    Linear,
    Polynomial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrParams {
    pub c_grid: Vec<f64>,
    /// Tube half-widths, in standardized target units.
    pub epsilon_grid: Vec<f64>,
    /// Training rows beyond this are thinned by an even stride.
    pub max_train_rows: usize,
    pub tolerance: f64,
    /// Iteration cap per solve, as a multiple of the training rows.
    pub max_iterations_per_row: usize,
    pub poly_degree: i32,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c_grid: vec![1.0, 10.0],
            epsilon_grid: vec![0.05, 0.1],
            max_train_rows: 1500,
            tolerance: 1e-3,
            max_iterations_per_row: 1000,
            poly_degree: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svr<T> {
    pub kernel: Kernel<T>,
    pub support: Vec<Vec<T>>,
    pub coef: Vec<T>,
    pub bias: T,
    pub y_mean: T,
    pub y_std: T,
}

impl<T: Real> Svr<T> {
    /// Model from explicit dual coefficients with identity target scaling.
    pub fn from_parts(kernel: Kernel<T>, support: Vec<Vec<T>>, coef: Vec<T>, bias: T) -> Self {
        Svr {
            kernel,
            support,
            coef,
            bias,
            y_mean: T::zero(),
            y_std: T::one(),
        }
    }

    pub fn predict_row(&self, x: &[T]) -> T {
        let s = self
            .support
            .iter()
            .zip(&self.coef)
            .fold(self.bias, |s, (sv, &b)| s + b * self.kernel.eval(sv, x));
        self.y_mean + self.y_std * s
    }
}

pub struct SvrFit<T> {
    pub model: Svr<T>,
    pub c: f64,
    pub epsilon: f64,
    pub iterations: usize,
    pub violation: T,
    pub valid_mape: T,
}

/// Concrete kernel for `kind` given the (standardized) training rows.
pub fn kernel_for<T: Real>(kind: KernelKind, rows: &[&[T]], poly_degree: i32) -> Kernel<T> {
    match kind {
        KernelKind::Rbf => {
            let sigma = median_pairwise_distance(rows);
            Kernel::Rbf {
                gamma: T::one() / (T::of(2.0) * sigma * sigma),
            }
        }
        KernelKind::Linear => Kernel::Linear,
        KernelKind::Polynomial => Kernel::Polynomial {
            degree: poly_degree,
            scale: T::one() / T::of_usize(rows.first().map_or(1, |r| r.len()).max(1)),
        },
    }
}

/// Fits with one `(C, ε)` pair.
pub fn fit_svr<T: Real>(
    train: &FeatureMatrix<T>,
    kernel: Kernel<T>,
    c: f64,
    epsilon: f64,
    tolerance: f64,
    max_iterations: usize,
    standardize_target: bool,
) -> Result<(Svr<T>, SmoSolution<T>)> {
    let n = train.n_rows();
    if n == 0 {
        return Err(Error::InvalidInput("empty training set".into()));
    }
    let (y_mean, y_std) = if standardize_target {
        let s = std_dev(&train.targets);
        (mean(&train.targets), if s > T::zero() { s } else { T::one() })
    } else {
        (T::zero(), T::one())
    };
    let z: Vec<T> = train.targets.iter().map(|&y| (y - y_mean) / y_std).collect();
    let rows: Vec<&[T]> = train.rows().collect();
    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval(rows[i], rows[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    let sol = solve_smo(
        &k,
        &z,
        &SmoParams {
            c: T::of(c),
            epsilon: T::of(epsilon),
            tolerance: T::of(tolerance),
            max_iterations,
        },
    )?;
    let mut support = Vec::new();
    let mut coef = Vec::new();
    for (i, &b) in sol.coef.iter().enumerate() {
        if b != T::zero() {
            support.push(rows[i].to_vec());
            coef.push(b);
        }
    }
    let model = Svr {
        kernel,
        support,
        coef,
        bias: sol.bias,
        y_mean,
        y_std,
    };
    Ok((model, sol))
}

/// Evenly strided subset of at most `max_rows` rows, always keeping the last row.
pub fn thin_rows<T: Real>(train: &FeatureMatrix<T>, max_rows: usize) -> FeatureMatrix<T> {
    let n = train.n_rows();
    if max_rows == 0 || n <= max_rows {
        return train.clone();
    }
    let idx: Vec<usize> = (0..max_rows)
        .map(|k| n - 1 - (k * (n - 1)) / (max_rows - 1).max(1))
        .rev()
        .collect();
    train.select(&idx)
}

/// Grid search over `(C, ε)` on validation MAPE. Grid points whose solver
/// hits the iteration cap are skipped; the search fails only if all do.
pub fn tune_svr<T: Real>(
    train: &FeatureMatrix<T>,
    valid: &FeatureMatrix<T>,
    kind: KernelKind,
    params: &SvrParams,
) -> Result<SvrFit<T>> {
    let sub = thin_rows(train, params.max_train_rows);
    let rows: Vec<&[T]> = sub.rows().collect();
    let kernel = kernel_for(kind, &rows, params.poly_degree);
    let cap = params.max_iterations_per_row.saturating_mul(sub.n_rows()).max(10_000);
    let mut best: Option<SvrFit<T>> = None;
    let mut last_err = None;
    for &c in &params.c_grid {
        for &eps in &params.epsilon_grid {
            let (model, sol) = match fit_svr(&sub, kernel, c, eps, params.tolerance, cap, true) {
                Ok(fit) => fit,
                Err(e @ Error::SmoNotConverged { .. }) => {
                    log::warn!("{kind:?} SVR with C={c}, epsilon={eps} skipped: {e}");
                    last_err = Some(e);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let pred: Vec<T> = valid.rows().map(|x| model.predict_row(x)).collect();
            let m = if valid.is_empty() {
                T::zero()
            } else {
                crate::metrics::mape(&pred, &valid.targets)?
            };
            if best.as_ref().is_none_or(|b| m < b.valid_mape) {
                best = Some(SvrFit {
                    model,
                    c,
                    epsilon: eps,
                    iterations: sol.iterations,
                    violation: sol.violation,
                    valid_mape: m,
                });
            }
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| Error::InvalidConfig("empty SVR hyperparameter grid".into())))
}
