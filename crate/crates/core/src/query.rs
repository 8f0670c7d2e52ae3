//! Two-stage subject query: uncertainty filtering to a candidate set, then the
//! D-efficiency argmax inside it, with a refit after every revealed label.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::LabelOracle;
use crate::design::{score_candidates, DesignError, DesignState, ScoreRoute};
use crate::linalg::Matrix;
use crate::logistic::{fit_irls, FitReport, IrlsControls, LogisticModel};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QueryError {
    #[error("no unlabeled subjects left")]
    EmptyPool,
    #[error("pool exhausted: {available} unlabeled, {requested} requested")]
    PoolExhausted { available: usize, requested: usize },
    #[error("oracle refused subject {0}")]
    OracleFailure(usize),
    #[error("candidate order h must be at least 1")]
    InvalidScope,
    #[error(transparent)]
    Design(#[from] DesignError),
}

const PARALLEL_DISTANCE_MIN: usize = 4096;

/// `|F(x | β) − α|` for every unlabeled subject.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyScores<T> {
    pub distances: Vec<T>,
    /// Pool index of each distance.
    pub pool_indices: Vec<usize>,
}

pub fn uncertainty_distances<T: Scalar>(
    model: &LogisticModel<T>,
    x_pool: &Matrix<T>,
    unlabeled: &[usize],
) -> Result<UncertaintyScores<T>, QueryError> {
    if unlabeled.is_empty() {
        return Err(QueryError::EmptyPool);
    }
    model.check_columns(x_pool).map_err(DesignError::from)?;
    let alpha = model.alpha();
    let dist = |&i: &usize| (model.prob_row(x_pool, i) - alpha).abs();
    let distances = if unlabeled.len() >= PARALLEL_DISTANCE_MIN {
        unlabeled.par_iter().map(dist).collect()
    } else {
        unlabeled.iter().map(dist).collect()
    };
    Ok(UncertaintyScores {
        distances,
        pool_indices: unlabeled.to_vec(),
    })
}

/// The `h`-th smallest distinct distance, or the largest when fewer than `h`
/// distinct values exist.
pub fn distinct_order_statistic<T: Scalar>(distances: &[T], h: usize) -> Option<T> {
    if h == 0 || distances.is_empty() {
        return None;
    }
    let mut sorted: Vec<T> = distances.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.dedup();
    Some(sorted[(h - 1).min(sorted.len() - 1)])
}

/// Pool indices whose distance does not exceed the `h`-th smallest distinct
/// distance. Order follows `scores.pool_indices`.
pub fn candidate_set<T: Scalar>(
    scores: &UncertaintyScores<T>,
    h: usize,
) -> Result<Vec<usize>, QueryError> {
    if h == 0 {
        return Err(QueryError::InvalidScope);
    }
    let d0 = distinct_order_statistic(&scores.distances, h).ok_or(QueryError::EmptyPool)?;
    Ok(scores
        .pool_indices
        .iter()
        .zip(&scores.distances)
        .filter(|(_, &d)| d <= d0)
        .map(|(&i, _)| i)
        .collect())
}

/// Outcome of the refit after one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RefitOutcome<T> {
    Fitted(FitReport<T>),
    /// The refit raised an error; the previous estimate was kept.
    Failed {
        message: String,
    },
}

impl<T> RefitOutcome<T> {
    pub fn converged(&self) -> bool {
        matches!(self, RefitOutcome::Fitted(r) if r.converged)
    }
}

/// One query of the batch loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord<T> {
    pub index: usize,
    pub label: u8,
    pub candidate_size: usize,
    pub score: T,
    pub route: ScoreRoute,
    pub refit: RefitOutcome<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTrace<T> {
    pub queried: Vec<usize>,
    pub labels: Vec<u8>,
    pub candidate_sizes: Vec<usize>,
    pub scores: Vec<T>,
    pub routes: Vec<ScoreRoute>,
    pub refits: Vec<RefitOutcome<T>>,
}

impl<T> Default for BatchTrace<T> {
    fn default() -> Self {
        Self {
            queried: Vec::new(),
            labels: Vec::new(),
            candidate_sizes: Vec::new(),
            scores: Vec::new(),
            routes: Vec::new(),
            refits: Vec::new(),
        }
    }
}

impl<T> BatchTrace<T> {
    fn push(&mut self, step: StepRecord<T>) {
        self.queried.push(step.index);
        self.labels.push(step.label);
        self.candidate_sizes.push(step.candidate_size);
        self.scores.push(step.score);
        self.routes.push(step.route);
        self.refits.push(step.refit);
    }

    pub fn len(&self) -> usize {
        self.queried.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queried.is_empty()
    }
}

/// Refits on `rows`, warm-started from `model`. Errors keep `model` and are
/// reported in the outcome.
pub fn refit<T: Scalar>(
    x: &Matrix<T>,
    rows: &[usize],
    labels: &[u8],
    model: &LogisticModel<T>,
    controls: &IrlsControls<T>,
) -> (LogisticModel<T>, RefitOutcome<T>) {
    match fit_irls(
        x,
        rows,
        labels,
        model.active_vars(),
        Some(model.beta()),
        controls,
        model.alpha(),
    ) {
        Ok((m, report)) => (m, RefitOutcome::Fitted(report)),
        Err(e) => (
            model.clone(),
            RefitOutcome::Failed {
                message: e.to_string(),
            },
        ),
    }
}

/// One query: distances under the state's current model, candidate set,
/// D-efficiency argmax, label, refit. `unlabeled` loses the chosen index.
pub fn query_step<T: Scalar, O: LabelOracle + ?Sized>(
    state: DesignState<T>,
    x: &Matrix<T>,
    unlabeled: &mut Vec<usize>,
    oracle: &mut O,
    h: usize,
    controls: &IrlsControls<T>,
) -> Result<(DesignState<T>, StepRecord<T>), QueryError> {
    let scores = uncertainty_distances(state.model(), x, unlabeled)?;
    let candidates = candidate_set(&scores, h)?;
    let choice = score_candidates(&state, &candidates, x)?;
    let label = oracle
        .query(choice.index)
        .map_err(|_| QueryError::OracleFailure(choice.index))?;
    let pos = unlabeled
        .iter()
        .position(|&i| i == choice.index)
        .expect("candidate drawn from the unlabeled set");
    unlabeled.remove(pos);

    let (mut labeled, mut labels, model) = state.into_parts();
    labeled.push(choice.index);
    labels.push(label);
    let (model, outcome) = refit(x, &labeled, &labels, &model, controls);
    let state = DesignState::new(x, labeled, labels, model)?;
    Ok((
        state,
        StepRecord {
            index: choice.index,
            label,
            candidate_size: candidates.len(),
            score: choice.value,
            route: choice.route,
            refit: outcome,
        },
    ))
}

/// Queries `n_q` subjects one at a time, re-estimating after each label.
pub fn query_batch<T: Scalar, O: LabelOracle + ?Sized>(
    mut state: DesignState<T>,
    x: &Matrix<T>,
    unlabeled: &mut Vec<usize>,
    oracle: &mut O,
    n_q: usize,
    h: usize,
    controls: &IrlsControls<T>,
) -> Result<(DesignState<T>, BatchTrace<T>), QueryError> {
    if unlabeled.len() < n_q {
        return Err(QueryError::PoolExhausted {
            available: unlabeled.len(),
            requested: n_q,
        });
    }
    let mut trace = BatchTrace::default();
    for _ in 0..n_q {
        let (next, step) = query_step(state, x, unlabeled, oracle, h, controls)?;
        state = next;
        trace.push(step);
    }
    Ok((state, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{gen_synthetic, initial_split, SyntheticConfig, TrueModelSpec};

    fn scores(d: &[f64]) -> UncertaintyScores<f64> {
        UncertaintyScores {
            distances: d.to_vec(),
            pool_indices: (1..=d.len()).collect(),
        }
    }

    #[test]
    fn candidate_set_threshold_includes_ties() {
        let s = scores(&[0.1, 0.1, 0.2, 0.3]);
        assert_eq!(candidate_set(&s, 2).unwrap(), vec![1, 2, 3]);
        assert_eq!(candidate_set(&s, 1).unwrap(), vec![1, 2]);
        assert_eq!(candidate_set(&s, 3).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(candidate_set(&s, 50).unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(candidate_set(&s, 0), Err(QueryError::InvalidScope));
        assert_eq!(candidate_set(&scores(&[]), 1), Err(QueryError::EmptyPool));
    }

    #[test]
    fn unique_minimum_gives_singleton() {
        let s = scores(&[0.4, 0.05, 0.2, 0.2]);
        assert_eq!(candidate_set(&s, 1).unwrap(), vec![2]);
    }

    #[test]
    fn distances_cases() {
        let x = Matrix::from_rows(&[vec![1.0f64, 2.0], vec![1.0, -1.0]]).unwrap();
        let m = LogisticModel::null(vec![0, 1], 0.5).unwrap();
        let s = uncertainty_distances(&m, &x, &[0, 1]).unwrap();
        assert_eq!(s.distances, vec![0.0, 0.0]);
        let m = LogisticModel::new(vec![0], vec![3f64.ln()], 0.5).unwrap();
        let s = uncertainty_distances(&m, &x, &[1]).unwrap();
        assert!((s.distances[0] - 0.25).abs() < 1e-15);
        assert_eq!(
            uncertainty_distances(&m, &x, &[]),
            Err(QueryError::EmptyPool)
        );
    }

    #[test]
    fn batch_bookkeeping() {
        let spec = TrueModelSpec::<f64>::case(1, 5).unwrap();
        let pool = gen_synthetic(
            &spec,
            &SyntheticConfig {
                n: 600,
                test_size: 100,
                ..Default::default()
            },
            1,
            0,
        )
        .unwrap();
        let pool = initial_split(&pool, 30, 1, 0).unwrap();
        let mut oracle = pool.oracle();
        let labeled = pool.labeled().to_vec();
        let labels: Vec<u8> = labeled.iter().map(|&i| oracle.query(i).unwrap()).collect();
        let controls = IrlsControls::default();
        let (m, _) = fit_irls(
            pool.x(),
            &labeled,
            &labels,
            &[0, 1, 2],
            None,
            &controls,
            0.5,
        )
        .unwrap();
        let state = DesignState::new(pool.x(), labeled.clone(), labels, m).unwrap();
        let mut unlabeled = pool.unlabeled();
        let before = unlabeled.len();
        let (state, trace) = query_batch(
            state,
            pool.x(),
            &mut unlabeled,
            &mut oracle,
            7,
            20,
            &controls,
        )
        .unwrap();
        assert_eq!(state.n(), 37);
        assert_eq!(trace.len(), 7);
        assert_eq!(unlabeled.len(), before - 7);
        assert!(trace.queried.iter().all(|q| !labeled.contains(q)));
        let mut uniq = trace.queried.clone();
        uniq.sort_unstable();
        uniq.dedup();
        assert_eq!(uniq.len(), 7);
        assert_eq!(oracle.query_count(), 37);
        let mut short = vec![unlabeled[0]];
        assert!(matches!(
            query_batch(state, pool.x(), &mut short, &mut oracle, 2, 20, &controls),
            Err(QueryError::PoolExhausted {
                available: 1,
                requested: 2
            })
        ));
    }
}
