//! Logistic regression over an active subset of columns: prediction,
//! thresholded classification, log-likelihood and IRLS maximum likelihood.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{cholesky, solve, LinalgError, Matrix, SymMatrix};
use crate::scalar::{sigmoid, softplus, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("label at position {index} is {value}, expected 0 or 1")]
    NonBinaryLabel { index: usize, value: u8 },
    #[error("weighted normal equations are singular even with ridge {ridge}")]
    SingularSystem { ridge: f64 },
    #[error("classification threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
    #[error("coefficients must be finite")]
    NonFinite,
    #[error("fit needs at least one row and one active variable")]
    EmptyProblem,
    #[error("column {column} out of range for {cols} columns")]
    ColumnOutOfRange { column: usize, cols: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Ridge values tried in turn when the Newton system cannot be factored.
pub const RIDGE_LADDER: [f64; 4] = [1e-8, 1e-6, 1e-4, 1e-2];

/// Fitted (or hand-specified) logistic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel<T> {
    active_vars: Vec<usize>,
    beta: Vec<T>,
    alpha: T,
}

impl<T: Scalar> LogisticModel<T> {
    pub fn new(active_vars: Vec<usize>, beta: Vec<T>, alpha: T) -> Result<Self, ModelError> {
        if beta.len() != active_vars.len() {
            return Err(ModelError::DimensionMismatch {
                expected: active_vars.len(),
                found: beta.len(),
            });
        }
        if !(alpha > T::zero() && alpha < T::one()) {
            return Err(ModelError::InvalidThreshold(alpha.to_f64_lossy()));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(ModelError::NonFinite);
        }
        Ok(Self {
            active_vars,
            beta,
            alpha,
        })
    }

    /// All-zero coefficients on the given variables.
    pub fn null(active_vars: Vec<usize>, alpha: T) -> Result<Self, ModelError> {
        let beta = vec![T::zero(); active_vars.len()];
        Self::new(active_vars, beta, alpha)
    }

    pub fn active_vars(&self) -> &[usize] {
        &self.active_vars
    }

    pub fn beta(&self) -> &[T] {
        &self.beta
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn dim(&self) -> usize {
        self.beta.len()
    }

    /// Coefficient for a global variable index, zero when inactive.
    pub fn coefficient(&self, var: usize) -> T {
        self.active_vars
            .iter()
            .position(|&v| v == var)
            .map_or(T::zero(), |p| self.beta[p])
    }

    /// Linear predictor for a vector already restricted to `active_vars`.
    pub fn eta(&self, x: &[T]) -> Result<T, ModelError> {
        if x.len() != self.beta.len() {
            return Err(ModelError::DimensionMismatch {
                expected: self.beta.len(),
                found: x.len(),
            });
        }
        Ok(x.iter()
            .zip(&self.beta)
            .fold(T::zero(), |acc, (&a, &b)| acc + a * b))
    }

    pub fn predict_prob(&self, x: &[T]) -> Result<T, ModelError> {
        self.eta(x).map(sigmoid)
    }

    /// 1 iff the predicted probability strictly exceeds `alpha`.
    pub fn classify(&self, x: &[T]) -> Result<u8, ModelError> {
        Ok(u8::from(self.predict_prob(x)? > self.alpha))
    }

    /// Linear predictor for row `i` of a full feature table.
    #[inline]
    pub fn eta_row(&self, x: &Matrix<T>, i: usize) -> T {
        x.dot_row(i, &self.active_vars, &self.beta)
    }

    #[inline]
    pub fn prob_row(&self, x: &Matrix<T>, i: usize) -> T {
        sigmoid(self.eta_row(x, i))
    }

    #[inline]
    pub fn classify_row(&self, x: &Matrix<T>, i: usize) -> u8 {
        u8::from(self.prob_row(x, i) > self.alpha)
    }

    pub fn check_columns(&self, x: &Matrix<T>) -> Result<(), ModelError> {
        check_columns(x, &self.active_vars)
    }

    /// Log-likelihood over the listed rows of `x` with labels `y` (aligned with `rows`).
    pub fn log_likelihood(&self, x: &Matrix<T>, rows: &[usize], y: &[u8]) -> Result<T, ModelError> {
        self.check_columns(x)?;
        check_labels(rows.len(), y)?;
        Ok(rows.iter().zip(y).fold(T::zero(), |acc, (&i, &yi)| {
            acc + bernoulli_log_density(self.eta_row(x, i), yi)
        }))
    }

    /// Gradient of the log-likelihood with respect to `beta`.
    pub fn score(&self, x: &Matrix<T>, rows: &[usize], y: &[u8]) -> Result<Vec<T>, ModelError> {
        self.check_columns(x)?;
        check_labels(rows.len(), y)?;
        let mut g = vec![T::zero(); self.dim()];
        for (&i, &yi) in rows.iter().zip(y) {
            let r = residual(yi, self.eta_row(x, i));
            let row = x.row(i);
            for (gj, &v) in g.iter_mut().zip(&self.active_vars) {
                *gj += row[v] * r;
            }
        }
        Ok(g)
    }
}

/// `ln P(Y = y | eta)` in overflow-free form.
#[inline]
pub fn bernoulli_log_density<T: Scalar>(eta: T, y: u8) -> T {
    if y == 1 {
        -softplus(-eta)
    } else {
        -softplus(eta)
    }
}

/// `y - sigmoid(eta)`, computed so that saturated fits keep their small residuals.
#[inline]
pub fn residual<T: Scalar>(y: u8, eta: T) -> T {
    if y == 1 {
        sigmoid(-eta)
    } else {
        -sigmoid(eta)
    }
}

/// `p (1 - p)` without cancellation for saturated probabilities.
#[inline]
pub fn bernoulli_variance<T: Scalar>(eta: T) -> T {
    sigmoid(eta) * sigmoid(-eta)
}

pub(crate) fn check_columns<T: Scalar>(x: &Matrix<T>, cols: &[usize]) -> Result<(), ModelError> {
    match cols.iter().find(|&&c| c >= x.cols()) {
        Some(&column) => Err(ModelError::ColumnOutOfRange {
            column,
            cols: x.cols(),
        }),
        None => Ok(()),
    }
}

pub(crate) fn check_labels(rows: usize, y: &[u8]) -> Result<(), ModelError> {
    if y.len() != rows {
        return Err(ModelError::DimensionMismatch {
            expected: rows,
            found: y.len(),
        });
    }
    match y.iter().position(|&v| v > 1) {
        Some(index) => Err(ModelError::NonBinaryLabel {
            index,
            value: y[index],
        }),
        None => Ok(()),
    }
}

/// IRLS stopping and regularization controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrlsControls<T> {
    /// Gradient max-norm tolerance.
    pub tol: T,
    pub max_iter: usize,
    /// Ridge penalty applied from the start; the fallback ladder only raises it.
    pub ridge: T,
    /// Maximum step halvings per Newton iteration.
    pub max_halvings: usize,
    /// Escalate through [`RIDGE_LADDER`] on a singular Newton system instead of failing.
    pub ridge_fallback: bool,
}

impl<T: Scalar> Default for IrlsControls<T> {
    fn default() -> Self {
        Self {
            tol: T::default_fit_tolerance(),
            max_iter: 50,
            ridge: T::zero(),
            max_halvings: 30,
            ridge_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport<T> {
    pub converged: bool,
    pub iterations: usize,
    pub final_loglik: T,
    pub ridge_used: T,
    pub max_abs_step: T,
}

struct Workspace<'a, T> {
    x: &'a Matrix<T>,
    rows: &'a [usize],
    y: &'a [u8],
    active: &'a [usize],
    buf: Vec<T>,
}

impl<'a, T: Scalar> Workspace<'a, T> {
    fn objective(&self, beta: &[T], ridge: T) -> T {
        let ll = self
            .rows
            .iter()
            .zip(self.y)
            .fold(T::zero(), |acc, (&i, &yi)| {
                acc + bernoulli_log_density(self.x.dot_row(i, self.active, beta), yi)
            });
        ll - penalty(beta, ridge)
    }

    /// Penalized gradient and (unpenalized) Hessian `XᵀWX`.
    fn newton_system(&mut self, beta: &[T], ridge: T) -> (Vec<T>, SymMatrix<T>) {
        let k = self.active.len();
        let mut grad = vec![T::zero(); k];
        let mut lower = vec![T::zero(); k * k];
        for (&i, &yi) in self.rows.iter().zip(self.y) {
            self.x.gather_row(i, self.active, &mut self.buf);
            let eta = self
                .buf
                .iter()
                .zip(beta)
                .fold(T::zero(), |a, (&u, &b)| a + u * b);
            let r = residual(yi, eta);
            let w = bernoulli_variance(eta);
            for a in 0..k {
                let xa = self.buf[a];
                grad[a] += xa * r;
                let wa = w * xa;
                let row = &mut lower[a * k..a * k + a + 1];
                for (h, &xb) in row.iter_mut().zip(&self.buf[..=a]) {
                    *h += wa * xb;
                }
            }
        }
        for (g, &b) in grad.iter_mut().zip(beta) {
            *g -= ridge * b;
        }
        let hess = SymMatrix::from_lower_fn(k, |i, j| lower[i * k + j]).expect("k >= 1");
        (grad, hess)
    }
}

fn penalty<T: Scalar>(beta: &[T], ridge: T) -> T {
    if ridge == T::zero() {
        return T::zero();
    }
    ridge * beta.iter().fold(T::zero(), |a, &b| a + b * b) / T::lit(2.0)
}

fn max_abs<T: Scalar>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &a| m.max(a.abs()))
}

/// Maximum likelihood fit by iteratively re-weighted least squares (Newton).
///
/// `rows` indexes into `x`; `y` is aligned with `rows`. The fit stops once the
/// gradient max-norm is within `controls.tol`. When the Newton system cannot
/// be factored, a ridge penalty `λ/2 |β|²` is introduced, escalating through
/// [`RIDGE_LADDER`]; the objective is penalized from then on. Every accepted
/// step does not decrease the (penalized) log-likelihood.
pub fn fit_irls<T: Scalar>(
    x: &Matrix<T>,
    rows: &[usize],
    y: &[u8],
    active_vars: &[usize],
    init_beta: Option<&[T]>,
    controls: &IrlsControls<T>,
    alpha: T,
) -> Result<(LogisticModel<T>, FitReport<T>), ModelError> {
    if rows.is_empty() || active_vars.is_empty() {
        return Err(ModelError::EmptyProblem);
    }
    check_columns(x, active_vars)?;
    check_labels(rows.len(), y)?;
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(ModelError::InvalidThreshold(alpha.to_f64_lossy()));
    }
    let k = active_vars.len();
    let mut beta = match init_beta {
        Some(b) if b.len() != k => {
            return Err(ModelError::DimensionMismatch {
                expected: k,
                found: b.len(),
            })
        }
        Some(b) if b.iter().all(|v| v.is_finite()) => b.to_vec(),
        _ => vec![T::zero(); k],
    };

    let mut ws = Workspace {
        x,
        rows,
        y,
        active: active_vars,
        buf: Vec::with_capacity(k),
    };
    let mut ridge = controls.ridge.max(T::zero());
    let mut ladder = RIDGE_LADDER
        .iter()
        .map(|&v| T::lit(v))
        .filter(|&v| v > ridge)
        .collect::<Vec<T>>()
        .into_iter();
    let mut obj = ws.objective(&beta, ridge);
    let mut iterations = 0;
    let mut converged = false;
    let mut max_abs_step = T::zero();
    let slack = |o: T| T::epsilon() * T::lit(16.0) * (T::one() + o.abs());

    loop {
        let (grad, mut hess) = ws.newton_system(&beta, ridge);
        if max_abs(&grad) <= controls.tol {
            converged = true;
            break;
        }
        if iterations >= controls.max_iter {
            break;
        }
        hess.add_diagonal(ridge);
        let factor = match cholesky(&hess) {
            Ok(f) => f,
            Err(_) => match ladder.next().filter(|_| controls.ridge_fallback) {
                Some(next) => {
                    ridge = next;
                    obj = ws.objective(&beta, ridge);
                    continue;
                }
                None => {
                    return Err(ModelError::SingularSystem {
                        ridge: ridge.to_f64_lossy(),
                    })
                }
            },
        };
        let step = solve(&factor, &grad)?;
        iterations += 1;

        let mut t = T::one();
        let mut accepted = None;
        let mut candidate = vec![T::zero(); k];
        for _ in 0..=controls.max_halvings {
            for ((c, &b), &s) in candidate.iter_mut().zip(&beta).zip(&step) {
                *c = b + t * s;
            }
            let cand_obj = ws.objective(&candidate, ridge);
            if cand_obj.is_finite() && cand_obj >= obj - slack(obj) {
                accepted = Some(cand_obj);
                break;
            }
            t /= T::lit(2.0);
        }
        match accepted {
            Some(new_obj) => {
                max_abs_step = t * max_abs(&step);
                beta = candidate;
                obj = new_obj;
                if max_abs_step == T::zero() {
                    break;
                }
            }
            // No ascent possible along the Newton direction: stationary to
            // working precision even if the gradient test failed.
            None => break,
        }
    }

    let final_loglik = ws.objective(&beta, T::zero());
    let model = LogisticModel::new(active_vars.to_vec(), beta, alpha)?;
    Ok((
        model,
        FitReport {
            converged,
            iterations,
            final_loglik,
            ridge_used: ridge,
            max_abs_step,
        },
    ))
}
