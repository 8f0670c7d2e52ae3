//! Greedy forward variable selection by the grafting gradient, and the
//! relative D-deficiency stopping rule that decides whether a proposed
//! variable is kept.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignError, DesignState};
use crate::linalg::Matrix;
use crate::logistic::{
    check_columns, fit_irls, FitReport, IrlsControls, LogisticModel, ModelError,
};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraftError {
    #[error("no inactive variables left")]
    EmptyInactiveSet,
    #[error("variable {0} is already active")]
    AlreadyActive(usize),
    #[error("information matrix of the current design is singular")]
    SingularBaseDesign,
    #[error("information matrix with the proposed variable is singular")]
    SingularAugmentedDesign,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Design(#[from] DesignError),
}

/// Work (rows × variables) above which inactive variables are scored in parallel.
const PARALLEL_GRADIENT_MIN: usize = 1 << 16;
const VARS_PER_TASK: usize = 8;

/// `g_u = |Σ_i x_{i,u} (y_i − p_i)|` for one inactive variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariableScore<T> {
    pub var_index: usize,
    pub g: T,
}

/// Grafting gradient magnitudes of the inactive variables.
///
/// `fitted_probs` and `y` are aligned with `labeled`. Variables may be split
/// across workers; each score is a plain sequential inner product, so the
/// result does not depend on the split.
pub fn gradient_scores<T: Scalar>(
    x_pool: &Matrix<T>,
    labeled: &[usize],
    fitted_probs: &[T],
    y: &[u8],
    inactive: &[usize],
) -> Result<Vec<VariableScore<T>>, GraftError> {
    if inactive.is_empty() {
        return Err(GraftError::EmptyInactiveSet);
    }
    for len in [fitted_probs.len(), y.len()] {
        if len != labeled.len() {
            return Err(GraftError::DimensionMismatch {
                expected: labeled.len(),
                found: len,
            });
        }
    }
    check_columns(x_pool, inactive)?;
    let resid: Vec<T> = y
        .iter()
        .zip(fitted_probs)
        .map(|(&yi, &p)| T::from_u8(yi).expect("label") - p)
        .collect();

    let score_chunk = |vars: &[usize]| -> Vec<VariableScore<T>> {
        let mut acc = vec![T::zero(); vars.len()];
        for (&i, &r) in labeled.iter().zip(&resid) {
            let row = x_pool.row(i);
            for (a, &u) in acc.iter_mut().zip(vars) {
                *a += row[u] * r;
            }
        }
        vars.iter()
            .zip(acc)
            .map(|(&var_index, s)| VariableScore {
                var_index,
                g: s.abs(),
            })
            .collect()
    };

    if labeled.len() * inactive.len() >= PARALLEL_GRADIENT_MIN {
        Ok(inactive
            .par_chunks(VARS_PER_TASK)
            .flat_map_iter(score_chunk)
            .collect())
    } else {
        Ok(score_chunk(inactive))
    }
}

/// Scores inactive variables against the state's fitted model.
pub fn gradient_scores_for_state<T: Scalar>(
    x_pool: &Matrix<T>,
    state: &DesignState<T>,
    inactive: &[usize],
) -> Result<Vec<VariableScore<T>>, GraftError> {
    let probs: Vec<T> = state
        .labeled()
        .iter()
        .map(|&i| state.model().prob_row(x_pool, i))
        .collect();
    gradient_scores(x_pool, state.labeled(), &probs, state.labels(), inactive)
}

/// Variable with the largest gradient magnitude; ties go to the lowest index.
pub fn select_variable<T: Scalar>(scores: &[VariableScore<T>]) -> Result<usize, GraftError> {
    scores
        .iter()
        .filter(|s| !s.g.is_nan())
        .fold(None::<&VariableScore<T>>, |best, s| match best {
            Some(b) if b.g > s.g || (b.g == s.g && b.var_index < s.var_index) => Some(b),
            _ => Some(s),
        })
        .map(|s| s.var_index)
        .ok_or(GraftError::EmptyInactiveSet)
}

/// Relative D-deficiency comparison for one proposed variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopDecision<T> {
    /// `|m1 − m0| / m0`.
    pub crit: T,
    /// `|M(ξ₀, β_k)|^{1/k}`.
    pub m0: T,
    /// `|M(ξ₁, β_{k+1})|^{1/(k+1)}`.
    pub m1: T,
    /// `crit ≥ ε`: keep the variable and continue.
    pub accept: bool,
}

impl<T: Scalar> StopDecision<T> {
    pub fn from_dets(m0: T, m1: T, epsilon: T) -> Self {
        let crit = (m1 - m0).abs() / m0;
        Self {
            crit,
            m0,
            m1,
            accept: crit >= epsilon,
        }
    }
}

/// Result of [`evaluate_stop`]: the decision plus the refit with `k + 1`
/// variables, which the caller reuses when the variable is accepted.
#[derive(Debug, Clone)]
pub struct StopEvaluation<T> {
    pub decision: StopDecision<T>,
    pub model: LogisticModel<T>,
    pub state: DesignState<T>,
    pub report: FitReport<T>,
}

/// Refits with `candidate_var` appended to the active set on the same labeled
/// subjects and compares normalized determinants of the two information matrices.
pub fn evaluate_stop<T: Scalar>(
    m0_state: &DesignState<T>,
    candidate_var: usize,
    x_pool: &Matrix<T>,
    epsilon: T,
    controls: &IrlsControls<T>,
) -> Result<StopEvaluation<T>, GraftError> {
    let model = m0_state.model();
    if model.active_vars().contains(&candidate_var) {
        return Err(GraftError::AlreadyActive(candidate_var));
    }
    check_columns(x_pool, &[candidate_var])?;
    let m0 = m0_state
        .normalized_det()
        .ok_or(GraftError::SingularBaseDesign)?;

    let mut vars = model.active_vars().to_vec();
    vars.push(candidate_var);
    let mut init = model.beta().to_vec();
    init.push(T::zero());
    let (refit, report) = fit_irls(
        x_pool,
        m0_state.labeled(),
        m0_state.labels(),
        &vars,
        Some(&init),
        controls,
        model.alpha(),
    )?;
    let state = DesignState::new(
        x_pool,
        m0_state.labeled().to_vec(),
        m0_state.labels().to_vec(),
        refit.clone(),
    )?;
    let m1 = state
        .normalized_det()
        .ok_or(GraftError::SingularAugmentedDesign)?;
    Ok(StopEvaluation {
        decision: StopDecision::from_dets(m0, m1, epsilon),
        model: refit,
        state,
        report,
    })
}
